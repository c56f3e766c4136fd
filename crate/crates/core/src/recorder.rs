//! Drives the simulated world from a demonstration script and emits the
//! masked ground-truth [`Trace`].

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::sim::{self, EnvState, SimError, WorldSpec};
use crate::sts::{
    abstract_trace, mask_sensitive, signature_of, EventKind, Params, SignatureKey, TemplateKey, Trace,
    TraceEvent,
};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("demonstration script has no steps")]
    EmptyScript,
    #[error("step {step}: {source}")]
    Step {
        /// 1-based step number.
        step: usize,
        #[source]
        source: SimError,
    },
    #[error(transparent)]
    World(SimError),
    #[error("script: {0}")]
    Script(String),
}

/// A raw user action as written in a demonstration script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawStep {
    pub action_kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_element: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Params,
}

impl RawStep {
    pub fn new(kind: EventKind, target: Option<&str>, params: &[(&str, &str)]) -> Self {
        Self {
            action_kind: kind,
            target_element: target.map(str::to_string),
            params: params
                .iter()
                .map(|(n, v)| (n.to_string(), v.to_string()))
                .collect(),
        }
    }

    pub fn type_text(target: &str, text: &str) -> Self {
        Self::new(EventKind::Type, Some(target), &[("text", text)])
    }

    pub fn click(target: &str) -> Self {
        Self::new(EventKind::Click, Some(target), &[])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoScript {
    pub task_label: String,
    pub steps: Vec<RawStep>,
}

impl DemoScript {
    pub fn load(path: &Path) -> Result<Self, RecordError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RecordError::Script(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RecordError::Script(format!("{}: {e}", path.display())))
    }
}

/// Records `script` and also returns the environment state it ended in.
pub fn record_session(
    script: &DemoScript,
    world: &WorldSpec,
    sensitive_roles: &BTreeSet<String>,
) -> Result<(Trace, EnvState), RecordError> {
    world.validate().map_err(RecordError::World)?;
    if script.steps.is_empty() {
        return Err(RecordError::EmptyScript);
    }

    let mut state = EnvState::fresh(world);
    let mut events = Vec::with_capacity(script.steps.len());
    for (i, step) in script.steps.iter().enumerate() {
        let target = match (step.action_kind, &step.target_element) {
            (EventKind::Keypress, None) => state.focused.clone(),
            (_, t) => t.clone(),
        };
        let target_role = target
            .as_deref()
            .and_then(|id| world.element(&state.current_page, id))
            .map(|el| el.role.clone());
        let next = sim::apply_event(&state, step.action_kind, target.as_deref(), &step.params, world)
            .map_err(|source| RecordError::Step { step: i + 1, source })?;
        events.push(TraceEvent {
            timestamp: i as u64 + 1,
            action_kind: step.action_kind,
            target_element: target,
            target_role,
            params: step.params.clone(),
            state_snapshot: signature_of(&state),
            masked: false,
        });
        state = next;
    }

    let env_fingerprint = sim::fingerprint(world);
    let mut hasher = Sha256::new();
    hasher.update(script.task_label.as_bytes());
    hasher.update([0]);
    hasher.update(env_fingerprint.digest.as_bytes());
    hasher.update([0]);
    hasher.update(serde_json::to_vec(&script.steps).expect("steps serialize"));
    let trace_id = hex::encode(&hasher.finalize()[..8]);

    let mut sensitive = world.sensitive_roles();
    sensitive.extend(sensitive_roles.iter().cloned());
    let raw = Trace {
        trace_id,
        task_label: script.task_label.clone(),
        env_fingerprint,
        events,
        final_snapshot: signature_of(&state),
    };
    Ok((mask_sensitive(&raw, &sensitive), state))
}

/// Executes a demonstration and returns its masked trace. Nothing partial is
/// returned when a step fails.
pub fn record(
    script: &DemoScript,
    world: &WorldSpec,
    sensitive_roles: &BTreeSet<String>,
) -> Result<Trace, RecordError> {
    record_session(script, world, sensitive_roles).map(|(trace, _)| trace)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: usize,
    pub key: TemplateKey,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    /// 1-based activity number.
    pub step: usize,
    pub expected: SignatureKey,
    pub observed: SignatureKey,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReproReport {
    pub trace_id: String,
    pub reproducible: bool,
    pub steps: Vec<StepOutcome>,
    pub divergence: Option<Divergence>,
}

/// Re-applies the trace's activities from a fresh state and reports the
/// first step whose signature or execution differs from the recording.
pub fn verify_reproducible(trace: &Trace, world: &WorldSpec) -> ReproReport {
    let mut report = ReproReport {
        trace_id: trace.trace_id.clone(),
        reproducible: false,
        steps: Vec::new(),
        divergence: None,
    };
    let mut state = EnvState::fresh(world);
    let activities = match abstract_trace(trace) {
        Ok(a) => a,
        Err(e) => {
            report.divergence = Some(Divergence {
                step: 1,
                expected: trace.final_snapshot.key(),
                observed: signature_of(&state).key(),
                error: Some(e.to_string()),
            });
            return report;
        }
    };

    for (i, act) in activities.iter().enumerate() {
        let expected = trace.events[act.origin_span.start].state_snapshot.key();
        let observed = signature_of(&state).key();
        if expected != observed {
            report.steps.push(StepOutcome { step: i + 1, key: act.key(), ok: false });
            report.divergence = Some(Divergence { step: i + 1, expected, observed, error: None });
            return report;
        }
        match sim::apply(&state, act, world) {
            Ok(next) => {
                state = next;
                report.steps.push(StepOutcome { step: i + 1, key: act.key(), ok: true });
            }
            Err(e) => {
                report.steps.push(StepOutcome { step: i + 1, key: act.key(), ok: false });
                report.divergence = Some(Divergence {
                    step: i + 1,
                    expected,
                    observed,
                    error: Some(e.kind_name().to_string()),
                });
                return report;
            }
        }
    }

    let expected = trace.final_snapshot.key();
    let observed = signature_of(&state).key();
    if expected != observed {
        report.divergence = Some(Divergence {
            step: activities.len(),
            expected,
            observed,
            error: None,
        });
        return report;
    }
    report.reproducible = true;
    report
}
