//! Executes a task against the world under the monitor.
//!
//! The low phase walks the element-bound automaton when the world layout
//! matches the experience exactly. The high phase asks a [`Planner`] to
//! instantiate role-bound steps; it runs when only the role layout matches,
//! when the low phase hits a missing element, or when the low phase cannot
//! make progress with the task inputs. Every attempted action is checked,
//! then applied, then logged; the first deny or execution error ends the run.

pub mod audit;
pub mod planner;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::experience::{Experience, NodeId, StepId};
use crate::monitor::{self, Level, MonitorContext, Verdict};
use crate::sim::{self, EnvState, SimError, WorldSpec};
use crate::store::{self, StoreError};
use crate::sts::{is_sensitive_role, signature_of, ActivityInstance, TemplateKey, MASK};

pub use audit::{read_audit, write_audit, AuditError, AuditLevel, AuditRecord, AuditWriter, ExecResult};
pub use planner::{lookup_input, normalize_role, Observation, PlanError, Planner, StubPlanner, VisibleElement};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskRequest {
    pub task_label: String,
    /// Semantic role to input value.
    pub inputs: BTreeMap<String, String>,
}

impl TaskRequest {
    pub fn new<K: Into<String>, V: Into<String>>(task_label: &str, inputs: impl IntoIterator<Item = (K, V)>) -> Self {
        Self {
            task_label: task_label.to_string(),
            inputs: inputs.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Success,
    Denied,
    ExecError,
    PlannerError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayResult {
    pub experience_id: String,
    pub outcome: Outcome,
    pub final_state: EnvState,
    pub audit: Vec<AuditRecord>,
    /// Number of actions handed to the environment.
    pub applied_actions: usize,
    pub detail: String,
}

struct Session<'a> {
    exp: &'a Experience,
    world: &'a WorldSpec,
    sensitive: BTreeSet<String>,
    state: EnvState,
    audit: Vec<AuditRecord>,
    applied: usize,
    sink: Option<&'a mut AuditWriter>,
    sink_error: Option<AuditError>,
}

enum Step {
    Applied,
    Denied(Verdict),
    Failed(SimError),
}

impl Session<'_> {
    fn masked(&self, action: &ActivityInstance) -> ActivityInstance {
        let mut a = action.clone();
        if is_sensitive_role(&a.template.element_role, &self.sensitive) {
            for (_, v) in &mut a.args {
                *v = MASK.to_string();
            }
        }
        a
    }

    fn log(&mut self, record: AuditRecord) {
        if let (Some(sink), None) = (self.sink.as_deref_mut(), &self.sink_error) {
            if let Err(e) = sink.append(&record) {
                self.sink_error = Some(e);
            }
        }
        self.audit.push(record);
    }

    /// Check, apply, advance, log. On allow the context is advanced in place.
    fn attempt(&mut self, ctx: &mut MonitorContext, action: &ActivityInstance, level: Level) -> Step {
        let verdict = match monitor::check(ctx, action, self.exp, level) {
            Ok(v) => v,
            Err(e) => Verdict {
                allowed: false,
                failed_check: None,
                detail: e.to_string(),
                bypass: false,
            },
        };
        let audit_level = match (level, verdict.bypass) {
            (_, true) => AuditLevel::Bypass,
            (Level::Low, false) => AuditLevel::Low,
            (Level::High, false) => AuditLevel::High,
        };
        let mut record = AuditRecord {
            tick: self.state.tick,
            experience_id: self.exp.experience_id.clone(),
            level: audit_level,
            action: self.masked(action),
            verdict: verdict.clone(),
            exec_result: None,
            planner_used: level == Level::High,
        };
        if !verdict.allowed {
            self.log(record);
            return Step::Denied(verdict);
        }
        self.applied += 1;
        match sim::apply(&self.state, action, self.world) {
            Ok(next) => {
                let advanced = monitor::advance(ctx, action, self.exp, level, signature_of(&next))
                    .expect("advance after an allow verdict");
                *ctx = advanced;
                self.state = next;
                record.exec_result = Some(ExecResult::Ok);
                self.log(record);
                Step::Applied
            }
            Err(e) => {
                record.exec_result = Some(ExecResult::Error(e.kind_name().to_string()));
                self.log(record);
                Step::Failed(e)
            }
        }
    }

    fn finish(self, outcome: Outcome, detail: impl Into<String>) -> (ReplayResult, Option<AuditError>) {
        (
            ReplayResult {
                experience_id: self.exp.experience_id.clone(),
                outcome,
                final_state: self.state,
                audit: self.audit,
                applied_actions: self.applied,
                detail: detail.into(),
            },
            self.sink_error,
        )
    }
}

enum LowEnd {
    Done(Outcome, String),
    Fallback(Vec<TemplateKey>),
}

fn low_phase(session: &mut Session, task: &TaskRequest) -> LowEnd {
    let exp = session.exp;
    let mut ctx = MonitorContext::new(exp, Level::Low, signature_of(&session.state));
    let mut pending = task.inputs.clone();
    let mut visited: BTreeSet<NodeId> = [exp.low.start_node].into();
    loop {
        let node = ctx.current_node.expect("low-level context");
        let mut input_edges: Vec<_> = exp
            .low
            .out_edges(node)
            .filter(|e| e.template.kind.takes_input() && pending.contains_key(&e.template.element_role))
            .collect();
        input_edges.sort_by(|a, b| a.key().role.cmp(&b.key().role).then(a.key().cmp(&b.key())));
        let edge = match input_edges.first() {
            Some(e) => *e,
            None if exp.low.accept_nodes.contains(&node) => {
                return LowEnd::Done(Outcome::Success, "reached an accepting state".into())
            }
            None => {
                let mut moves: Vec<_> = exp
                    .low
                    .out_edges(node)
                    .filter(|e| !e.template.kind.takes_input() && e.to != node && !visited.contains(&e.to))
                    .collect();
                moves.sort_by(|a, b| a.key().role.cmp(&b.key().role).then(a.key().cmp(&b.key())));
                match moves.first() {
                    Some(e) => *e,
                    None => return LowEnd::Fallback(ctx.history),
                }
            }
        };
        let role = edge.template.element_role.clone();
        let args = match edge.template.kind.input_param() {
            Some(param) => vec![(param.to_string(), pending[&role].clone())],
            None => Vec::new(),
        };
        let action = ActivityInstance::new(edge.template.clone(), args);
        match session.attempt(&mut ctx, &action, Level::Low) {
            Step::Applied => {
                pending.remove(&role);
                visited.insert(ctx.current_node.expect("low-level context"));
            }
            Step::Denied(v) => return LowEnd::Done(Outcome::Denied, v.detail),
            Step::Failed(SimError::ElementNotFound { .. }) => return LowEnd::Fallback(ctx.history),
            Step::Failed(e) => return LowEnd::Done(Outcome::ExecError, e.to_string()),
        }
    }
}

fn high_phase(session: &mut Session, task: &TaskRequest, planner: &dyn Planner, history: &[TemplateKey]) -> (Outcome, String) {
    let exp = session.exp;
    let mut ctx = MonitorContext::high_after(exp, history, signature_of(&session.state));
    loop {
        let consumed = |id: StepId| ctx.consumed.get(&id).copied().unwrap_or(0) > 0;
        let open: Vec<_> = exp.high.steps.iter().filter(|s| !consumed(s.step_id)).collect();
        if open.is_empty() {
            return (Outcome::Success, "every step was performed".into());
        }
        let actionable: Vec<_> = open
            .iter()
            .filter(|s| {
                s.template_key.kind.input_param().is_none() || lookup_input(&task.inputs, &s.template_key.role).is_some()
            })
            .collect();
        let enabled = actionable
            .iter()
            .find(|s| exp.high.predecessors(s.step_id).all(consumed));
        let Some(step) = enabled.or(actionable.first()).copied() else {
            let roles: Vec<_> = open.iter().map(|s| s.template_key.to_string()).collect();
            return (Outcome::PlannerError, format!("no input for remaining steps {roles:?}"));
        };
        let observation = Observation::of(session.world, &session.state);
        let action = match planner.plan_step(step, &observation, &task.inputs) {
            Ok(a) => a,
            Err(e) => return (Outcome::PlannerError, e.to_string()),
        };
        if action.key() != step.template_key {
            return (
                Outcome::PlannerError,
                format!("planner returned {} for step {}", action.key(), step.template_key),
            );
        }
        match session.attempt(&mut ctx, &action, Level::High) {
            Step::Applied => {}
            Step::Denied(v) => return (Outcome::Denied, v.detail),
            Step::Failed(e) => return (Outcome::ExecError, e.to_string()),
        }
    }
}

fn run(
    task: &TaskRequest,
    exp: &Experience,
    world: &WorldSpec,
    planner: &dyn Planner,
    sink: Option<&mut AuditWriter>,
) -> (ReplayResult, Option<AuditError>) {
    let mut session = Session {
        exp,
        world,
        sensitive: world.sensitive_roles(),
        state: EnvState::fresh(world),
        audit: Vec::new(),
        applied: 0,
        sink,
        sink_error: None,
    };
    if task.task_label != exp.task_label {
        let detail = format!("task `{}` does not match experience task `{}`", task.task_label, exp.task_label);
        return session.finish(Outcome::ExecError, detail);
    }
    let fp = sim::fingerprint(world);
    let history = if fp.digest == exp.env_fingerprint.digest {
        match low_phase(&mut session, task) {
            LowEnd::Done(outcome, detail) => return session.finish(outcome, detail),
            LowEnd::Fallback(history) => history,
        }
    } else if fp.role_digest == exp.env_fingerprint.role_digest {
        Vec::new()
    } else {
        return session.finish(Outcome::ExecError, "world layout is incompatible with the experience");
    };
    let (outcome, detail) = high_phase(&mut session, task, planner, &history);
    session.finish(outcome, detail)
}

/// Replays `task` and returns the outcome with the full audit trail.
pub fn replay(task: &TaskRequest, exp: &Experience, world: &WorldSpec, planner: &dyn Planner) -> ReplayResult {
    run(task, exp, world, planner, None).0
}

/// [`replay`], also appending each audit record to `writer` as it happens.
pub fn replay_logged(
    task: &TaskRequest,
    exp: &Experience,
    world: &WorldSpec,
    planner: &dyn Planner,
    writer: &mut AuditWriter,
) -> Result<ReplayResult, AuditError> {
    match run(task, exp, world, planner, Some(writer)) {
        (_, Some(e)) => Err(e),
        (result, None) => Ok(result),
    }
}

/// Counts the run's outcome against the experience in the store at `root`.
pub fn report_outcome(result: &ReplayResult, root: &Path) -> Result<(), StoreError> {
    store::record_outcome(root, &result.experience_id, result.outcome == Outcome::Success)
}
