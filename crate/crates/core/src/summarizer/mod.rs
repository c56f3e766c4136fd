//! Conservative generalization of demonstrations into an [`Experience`].
//!
//! Traces are abstracted into activities, each labelled with the signature
//! key before and after it. The low-level automaton gets one node per
//! distinct signature key and one edge per witnessed `(node, template key)`
//! pair, so no edge exists without a demonstration behind it. Loops are
//! found by tandem-repeat folding and bounded by the longest instance seen.

pub mod language;
pub mod loops;
pub mod params;

use std::collections::{BTreeMap, BTreeSet};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::experience::{
    AbstractStep, Edge, Experience, ExperienceMetadata, GroundTruthTrace, HighLevelExperience, LoopBound, LoopId,
    LowLevelExperience, Node, NodeId, ParamConstraint, StepId, Witness,
};
use crate::monitor::CheckFunction;
use crate::recorder::verify_reproducible;
use crate::sim::{fingerprint, WorldSpec};
use crate::sts::{abstract_trace, ActionKind, ActivityInstance, Fingerprint, SignatureKey, TemplateKey, Trace, TraceError};

pub use language::{enumerate_language, enumerate_language_within, LanguageError, EXPLOSION_LIMIT};
pub use loops::{fold_loops, iteration_count, max_iterations, Folded, ObservedLoop};

#[derive(Debug, Error)]
pub enum SummarizeError {
    #[error("no traces to summarize")]
    NoTraces,
    #[error("traces belong to different tasks: `{0}` vs `{1}`")]
    MixedTask(String, String),
    #[error("trace `{0}` was recorded against an incompatible world")]
    IncompatibleWorlds(String),
    #[error("trace `{trace_id}` is not reproducible: {reason}")]
    UnreproducibleTrace { trace_id: String, reason: String },
    #[error("traces disagree on workflow structure: {0}")]
    StructureMismatch(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummarizeOptions {
    /// Largest number of distinct select values kept as an enumeration.
    pub enum_threshold: usize,
    /// Logical creation time stored in the metadata and hashed into the id.
    pub created_at: u64,
}

impl Default for SummarizeOptions {
    fn default() -> Self {
        Self {
            enum_threshold: 3,
            created_at: 0,
        }
    }
}

/// One abstracted activity with the signature keys around it.
#[derive(Debug, Clone)]
struct Observed {
    activity: ActivityInstance,
    pre: SignatureKey,
    post: SignatureKey,
}

impl Observed {
    fn key(&self) -> TemplateKey {
        self.activity.key()
    }
}

fn observe(trace: &Trace) -> Result<Vec<Observed>, SummarizeError> {
    let activities = abstract_trace(trace)?;
    let mut out = Vec::with_capacity(activities.len());
    for (i, act) in activities.iter().enumerate() {
        let pre = trace.events[act.origin_span.start].state_snapshot.key();
        let post = match activities.get(i + 1) {
            Some(next) => trace.events[next.origin_span.start].state_snapshot.key(),
            None => trace.final_snapshot.key(),
        };
        let mut expected = pre.completed.clone();
        expected.insert(act.key());
        if post.completed != expected {
            return Err(SummarizeError::UnreproducibleTrace {
                trace_id: trace.trace_id.clone(),
                reason: format!("activity {} ({}) does not explain the next snapshot", i + 1, act.key()),
            });
        }
        out.push(Observed {
            activity: act.clone(),
            pre,
            post,
        });
    }
    Ok(out)
}

fn describe(key: &TemplateKey) -> String {
    match key.kind {
        ActionKind::Type => format!("fill field {}", key.role),
        ActionKind::Click => format!("press {}", key.role),
        ActionKind::Select => format!("select {}", key.role),
        ActionKind::Navigate => format!("go to {}", key.role),
        ActionKind::Submit => format!("submit {}", key.role),
    }
}

fn constraints(
    observations: &BTreeMap<String, Vec<String>>,
    kind: ActionKind,
    opts: &SummarizeOptions,
) -> BTreeMap<String, ParamConstraint> {
    observations
        .iter()
        .map(|(name, values)| (name.clone(), params::generalize(values, kind, opts.enum_threshold)))
        .collect()
}

fn record_params(into: &mut BTreeMap<String, Vec<String>>, act: &ActivityInstance) {
    for (name, value) in &act.args {
        into.entry(name.clone()).or_default().push(value.clone());
    }
}

fn experience_id(task_label: &str, trace_ids: &[String], created_at: u64) -> String {
    let mut ids = trace_ids.to_vec();
    ids.sort();
    let mut h = Sha256::new();
    h.update(task_label.as_bytes());
    for id in &ids {
        h.update([0]);
        h.update(id.as_bytes());
    }
    h.update([0]);
    h.update(created_at.to_le_bytes());
    hex::encode(&h.finalize()[..16])
}

/// Summarizes traces of one task into a two-level experience.
///
/// Each trace must be internally consistent (every snapshot is explained by
/// the activity before it); use [`summarize_against_world`] to also replay
/// them against the world they were recorded in.
pub fn summarize(
    traces: &[Trace],
    world_fingerprint: &Fingerprint,
    opts: &SummarizeOptions,
) -> Result<Experience, SummarizeError> {
    let first = traces.first().ok_or(SummarizeError::NoTraces)?;
    for t in traces {
        if t.task_label != first.task_label {
            return Err(SummarizeError::MixedTask(first.task_label.clone(), t.task_label.clone()));
        }
        if t.env_fingerprint.role_digest != world_fingerprint.role_digest {
            return Err(SummarizeError::IncompatibleWorlds(t.trace_id.clone()));
        }
    }
    let observed: Vec<Vec<Observed>> = traces.iter().map(observe).collect::<Result<_, _>>()?;
    let trace_ids: Vec<String> = traces.iter().map(|t| t.trace_id.clone()).collect();

    // Structure checks: a single start state, and one page per completed set.
    let start_key = observed[0][0].pre.clone();
    let mut page_of: BTreeMap<BTreeSet<TemplateKey>, String> = BTreeMap::new();
    for (t, obs) in traces.iter().zip(&observed) {
        if obs[0].pre != start_key {
            return Err(SummarizeError::StructureMismatch(format!(
                "trace `{}` starts at {} instead of {}",
                t.trace_id, obs[0].pre, start_key
            )));
        }
        for sig in obs.iter().flat_map(|o| [&o.pre, &o.post]) {
            let page = page_of.entry(sig.completed.clone()).or_insert_with(|| sig.page.clone());
            if *page != sig.page {
                return Err(SummarizeError::StructureMismatch(format!(
                    "the same progress is reached on pages `{page}` and `{}`",
                    sig.page
                )));
            }
        }
    }

    // Nodes in first-appearance order.
    let mut node_ids: BTreeMap<SignatureKey, NodeId> = BTreeMap::new();
    let mut nodes = Vec::new();
    let mut intern = |sig: &SignatureKey| -> NodeId {
        *node_ids.entry(sig.clone()).or_insert_with(|| {
            let id = NodeId(nodes.len() as u32);
            nodes.push(Node {
                id,
                node_signature: sig.clone(),
            });
            id
        })
    };
    for obs in &observed {
        for o in obs {
            intern(&o.pre);
            intern(&o.post);
        }
    }
    let start_node = intern(&start_key);
    let accept_nodes: BTreeSet<NodeId> = observed.iter().map(|obs| intern(&obs.last().unwrap().post)).collect();

    // Keys whose execution was seen to change the page.
    let nav_keys: BTreeSet<TemplateKey> = observed
        .iter()
        .flatten()
        .filter(|o| o.pre.page != o.post.page)
        .map(Observed::key)
        .collect();

    // Loops: bodies found by folding, bounded by the longest instance.
    let key_seqs: Vec<Vec<TemplateKey>> = observed
        .iter()
        .map(|obs| obs.iter().map(Observed::key).collect())
        .collect();
    let mut bodies: Vec<Vec<TemplateKey>> = Vec::new();
    for seq in &key_seqs {
        for f in loops::fold_by(seq, |k| k.clone()) {
            if let Folded::Loop { body, .. } = f {
                if !bodies.contains(&body) {
                    bodies.push(body);
                }
            }
        }
    }
    let loop_bounds: BTreeMap<LoopId, LoopBound> = bodies
        .into_iter()
        .enumerate()
        .map(|(i, body)| {
            let limit = key_seqs.iter().map(|s| max_iterations(s, &body)).max().unwrap_or(0);
            (LoopId(i as u32), LoopBound { body, limit: limit as u32 })
        })
        .collect();
    let loop_checks = |key: &TemplateKey| -> Vec<CheckFunction> {
        loop_bounds
            .iter()
            .filter(|(_, l)| l.body.contains(key))
            .map(|(id, _)| CheckFunction::LoopBound { loop_id: *id })
            .collect()
    };

    // Edges.
    struct EdgeAcc {
        to: NodeId,
        first: ActivityInstance,
        witnesses: Vec<Witness>,
    }
    let mut edge_acc: BTreeMap<(NodeId, TemplateKey), EdgeAcc> = BTreeMap::new();
    let mut edge_order: Vec<(NodeId, TemplateKey)> = Vec::new();
    for (t, obs) in traces.iter().zip(&observed) {
        for (i, o) in obs.iter().enumerate() {
            let from = node_ids[&o.pre];
            let to = node_ids[&o.post];
            let slot = (from, o.key());
            let acc = edge_acc.entry(slot.clone()).or_insert_with(|| {
                edge_order.push(slot.clone());
                EdgeAcc {
                    to,
                    first: o.activity.clone(),
                    witnesses: Vec::new(),
                }
            });
            if acc.to != to {
                return Err(SummarizeError::StructureMismatch(format!(
                    "{} from {} leads to different states",
                    o.key(),
                    o.pre
                )));
            }
            if acc.first.template != o.activity.template {
                return Err(SummarizeError::StructureMismatch(format!(
                    "{} from {} targets different elements",
                    o.key(),
                    o.pre
                )));
            }
            acc.witnesses.push(Witness {
                trace_id: t.trace_id.clone(),
                activity: i,
            });
        }
    }
    // Parameter observations are pooled per template key across all traces.
    let mut key_params: BTreeMap<TemplateKey, BTreeMap<String, Vec<String>>> = BTreeMap::new();
    for o in observed.iter().flatten() {
        record_params(key_params.entry(o.key()).or_default(), &o.activity);
    }
    let key_constraints: BTreeMap<TemplateKey, BTreeMap<String, ParamConstraint>> = key_params
        .iter()
        .map(|(k, obs)| (k.clone(), constraints(obs, k.kind, opts)))
        .collect();
    let edges: Vec<Edge> = edge_order
        .iter()
        .map(|slot| {
            let acc = &edge_acc[slot];
            let from_sig = &nodes[slot.0 .0 as usize].node_signature;
            let mut checks = vec![
                CheckFunction::FlowConformance,
                CheckFunction::Precondition {
                    pages: [from_sig.page.clone()].into(),
                    required: from_sig.completed.intersection(&nav_keys).cloned().collect(),
                },
                CheckFunction::DependencyOrder,
                CheckFunction::ParamConstraintCheck,
            ];
            checks.extend(loop_checks(&slot.1));
            Edge {
                from: slot.0,
                to: acc.to,
                template: acc.first.template.clone(),
                param_constraints: key_constraints[&slot.1].clone(),
                checks,
                witnesses: acc.witnesses.clone(),
            }
        })
        .collect();

    // High level: one step per distinct key, in first-appearance order.
    let mut step_keys: Vec<TemplateKey> = Vec::new();
    for seq in &key_seqs {
        for k in seq {
            if !step_keys.contains(k) {
                step_keys.push(k.clone());
            }
        }
    }
    let first_index = |seq: &[TemplateKey], k: &TemplateKey| seq.iter().position(|x| x == k);
    let mut order_constraints = BTreeSet::new();
    for (ai, a) in step_keys.iter().enumerate() {
        for (bi, b) in step_keys.iter().enumerate() {
            if ai == bi {
                continue;
            }
            let holds = key_seqs
                .iter()
                .filter_map(|seq| first_index(seq, a).map(|pa| (seq, pa)))
                .all(|(seq, pa)| first_index(seq, b).is_some_and(|pb| pb < pa));
            if holds {
                order_constraints.insert((StepId(bi as u32), StepId(ai as u32)));
            }
        }
    }

    let mut steps = Vec::with_capacity(step_keys.len());
    let mut high_loop_bounds = BTreeMap::new();
    for (i, key) in step_keys.iter().enumerate() {
        let occurrences: Vec<&Observed> = observed.iter().flatten().filter(|o| &o.key() == key).collect();
        let pages: BTreeSet<String> = occurrences.iter().map(|o| o.pre.page.clone()).collect();
        let required = occurrences
            .iter()
            .map(|o| o.pre.completed.intersection(&nav_keys).cloned().collect::<BTreeSet<_>>())
            .reduce(|a, b| a.intersection(&b).cloned().collect())
            .unwrap_or_default();
        let mut checks = vec![
            CheckFunction::FlowConformance,
            CheckFunction::Precondition { pages, required },
            CheckFunction::DependencyOrder,
            CheckFunction::ParamConstraintCheck,
        ];
        checks.extend(loop_checks(key));
        if let Some(limit) = loop_bounds.values().filter(|l| l.body.contains(key)).map(|l| l.limit).max() {
            high_loop_bounds.insert(StepId(i as u32), limit);
        }
        steps.push(AbstractStep {
            step_id: StepId(i as u32),
            description: describe(key),
            template_key: key.clone(),
            param_constraints: key_constraints[key].clone(),
            checks,
        });
    }

    let ground_truth = traces
        .iter()
        .zip(&observed)
        .map(|(t, obs)| GroundTruthTrace {
            trace_id: t.trace_id.clone(),
            activities: obs.iter().map(|o| o.activity.clone()).collect(),
        })
        .collect();

    Ok(Experience {
        experience_id: experience_id(&first.task_label, &trace_ids, opts.created_at),
        task_label: first.task_label.clone(),
        env_fingerprint: world_fingerprint.clone(),
        low: LowLevelExperience {
            nodes,
            edges,
            start_node,
            accept_nodes,
            loop_bounds,
            source_trace_ids: trace_ids.clone(),
        },
        high: HighLevelExperience {
            steps,
            order_constraints,
            loop_bounds: high_loop_bounds,
        },
        metadata: ExperienceMetadata {
            created_at: opts.created_at,
            source_traces: trace_ids,
            success_count: 0,
            failure_count: 0,
            rating: None,
            audit_status: None,
        },
        ground_truth,
    })
}

/// [`summarize`], after replaying every trace against `world`.
pub fn summarize_against_world(
    traces: &[Trace],
    world: &WorldSpec,
    opts: &SummarizeOptions,
) -> Result<Experience, SummarizeError> {
    for t in traces {
        let report = verify_reproducible(t, world);
        if let Some(d) = report.divergence {
            return Err(SummarizeError::UnreproducibleTrace {
                trace_id: t.trace_id.clone(),
                reason: format!(
                    "step {}: expected {}, observed {}{}",
                    d.step,
                    d.expected,
                    d.observed,
                    d.error.map(|e| format!(" ({e})")).unwrap_or_default()
                ),
            });
        }
    }
    summarize(traces, &fingerprint(world), opts)
}
