//! The two-level Experience artifact produced by the summarizer.
//!
//! The low level is a deterministic automaton over [`TemplateKey`]s whose
//! nodes are signature keys; the high level is a partially ordered set of
//! role-bound steps. Both carry the check functions the monitor evaluates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::monitor::CheckFunction;
use crate::sts::{ActionTemplate, ActivityInstance, Fingerprint, SignatureKey, TemplateKey};
use crate::summarizer::loops::iteration_count;

macro_rules! id_newtype {
    ($name:ident, $prefix:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_newtype!(NodeId, "n");
id_newtype!(StepId, "s");
id_newtype!(LoopId, "L");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValuePattern {
    Integer,
    IsoDate,
    Email,
}

impl ValuePattern {
    pub const ALL: [ValuePattern; 3] = [ValuePattern::Integer, ValuePattern::IsoDate, ValuePattern::Email];

    pub fn matches(self, value: &str) -> bool {
        match self {
            ValuePattern::Integer => {
                let digits = value.strip_prefix('-').unwrap_or(value);
                !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
            }
            ValuePattern::IsoDate => {
                let b = value.as_bytes();
                if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
                    return false;
                }
                let num = |r: std::ops::Range<usize>| -> Option<u32> {
                    let s = &value[r];
                    s.bytes().all(|c| c.is_ascii_digit()).then(|| s.parse().ok()).flatten()
                };
                match (num(0..4), num(5..7), num(8..10)) {
                    (Some(_), Some(m), Some(d)) => (1..=12).contains(&m) && (1..=31).contains(&d),
                    _ => false,
                }
            }
            ValuePattern::Email => {
                let Some((local, domain)) = value.split_once('@') else {
                    return false;
                };
                !local.is_empty()
                    && !domain.contains('@')
                    && domain
                        .split_once('.')
                        .is_some_and(|(host, tld)| !host.is_empty() && !tld.is_empty() && !tld.ends_with('.'))
                    && !value.chars().any(char::is_whitespace)
            }
        }
    }
}

/// Generalized constraint on one parameter of an edge or step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", content = "value")]
pub enum ParamConstraint {
    Constant(String),
    EnumOf(BTreeSet<String>),
    Pattern(ValuePattern),
    AnyString,
}

impl ParamConstraint {
    pub fn admits(&self, value: &str) -> bool {
        match self {
            ParamConstraint::Constant(c) => c == value,
            ParamConstraint::EnumOf(set) => set.contains(value),
            ParamConstraint::Pattern(p) => p.matches(value),
            ParamConstraint::AnyString => true,
        }
    }
}

/// A source-trace activity that justifies an edge.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Witness {
    pub trace_id: String,
    /// Index into the trace's abstracted activity list.
    pub activity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub node_signature: SignatureKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub template: ActionTemplate,
    pub param_constraints: BTreeMap<String, ParamConstraint>,
    pub checks: Vec<CheckFunction>,
    pub witnesses: Vec<Witness>,
}

impl Edge {
    pub fn key(&self) -> TemplateKey {
        self.template.key()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopBound {
    pub body: Vec<TemplateKey>,
    pub limit: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowLevelExperience {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub start_node: NodeId,
    pub accept_nodes: BTreeSet<NodeId>,
    pub loop_bounds: BTreeMap<LoopId, LoopBound>,
    pub source_trace_ids: Vec<String>,
}

/// Why a key sequence is not accepted by the low-level automaton.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// Number of keys consumed before the rejection (== len for a final
    /// non-accepting node).
    pub at: usize,
    pub reason: String,
}

impl LowLevelExperience {
    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_by_signature(&self, key: &SignatureKey) -> Option<NodeId> {
        self.nodes.iter().find(|n| &n.node_signature == key).map(|n| n.id)
    }

    pub fn out_edges(&self, from: NodeId) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(move |e| e.from == from)
    }

    pub fn edge(&self, from: NodeId, key: &TemplateKey) -> Option<&Edge> {
        self.out_edges(from).find(|e| &e.key() == key)
    }

    pub fn edge_mut(&mut self, from: NodeId, key: &TemplateKey) -> Option<&mut Edge> {
        self.edges
            .iter_mut()
            .find(|e| e.from == from && &e.template.key() == key)
    }

    pub fn loops_containing<'a>(
        &'a self,
        key: &'a TemplateKey,
    ) -> impl Iterator<Item = (LoopId, &'a LoopBound)> + 'a {
        self.loop_bounds
            .iter()
            .filter(move |(_, l)| l.body.contains(key))
            .map(|(id, l)| (*id, l))
    }

    /// True when extending `history` with `key` keeps every loop containing
    /// `key` within its limit.
    pub fn within_loop_bounds(&self, history: &[TemplateKey], key: &TemplateKey) -> bool {
        let mut seq = history.to_vec();
        seq.push(key.clone());
        self.loops_containing(key)
            .all(|(_, l)| iteration_count(&seq, &l.body) <= l.limit as usize)
    }

    /// Runs `seq` through the automaton, honoring loop bounds.
    pub fn accepts(&self, seq: &[TemplateKey]) -> Result<NodeId, Rejection> {
        let mut node = self.start_node;
        for (i, key) in seq.iter().enumerate() {
            let edge = self.edge(node, key).ok_or_else(|| Rejection {
                at: i,
                reason: format!("no edge {key} at {node}"),
            })?;
            if !self.within_loop_bounds(&seq[..i], key) {
                return Err(Rejection {
                    at: i,
                    reason: format!("{key} exceeds a loop bound"),
                });
            }
            node = edge.to;
        }
        if self.accept_nodes.contains(&node) {
            Ok(node)
        } else {
            Err(Rejection {
                at: seq.len(),
                reason: format!("{node} is not accepting"),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractStep {
    pub step_id: StepId,
    pub description: String,
    pub template_key: TemplateKey,
    pub param_constraints: BTreeMap<String, ParamConstraint>,
    pub checks: Vec<CheckFunction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighLevelExperience {
    pub steps: Vec<AbstractStep>,
    /// `(before, after)` pairs.
    pub order_constraints: BTreeSet<(StepId, StepId)>,
    pub loop_bounds: BTreeMap<StepId, u32>,
}

impl HighLevelExperience {
    pub fn step(&self, id: StepId) -> Option<&AbstractStep> {
        self.steps.iter().find(|s| s.step_id == id)
    }

    pub fn step_by_key(&self, key: &TemplateKey) -> Option<&AbstractStep> {
        self.steps.iter().find(|s| &s.template_key == key)
    }

    pub fn predecessors(&self, id: StepId) -> impl Iterator<Item = StepId> + '_ {
        self.order_constraints
            .iter()
            .filter(move |(_, after)| *after == id)
            .map(|(before, _)| *before)
    }

    /// Template keys that must already be completed before `key` runs.
    pub fn required_before(&self, key: &TemplateKey) -> Vec<TemplateKey> {
        let Some(step) = self.step_by_key(key) else {
            return Vec::new();
        };
        self.predecessors(step.step_id)
            .filter_map(|p| self.step(p).map(|s| s.template_key.clone()))
            .collect()
    }

    pub fn is_acyclic(&self) -> bool {
        // Kahn's algorithm over the step ids
        let mut indegree: BTreeMap<StepId, usize> = self.steps.iter().map(|s| (s.step_id, 0)).collect();
        for (_, after) in &self.order_constraints {
            *indegree.entry(*after).or_default() += 1;
        }
        let mut ready: Vec<StepId> = indegree.iter().filter(|(_, d)| **d == 0).map(|(s, _)| *s).collect();
        let mut seen = 0;
        while let Some(s) = ready.pop() {
            seen += 1;
            for (before, after) in &self.order_constraints {
                if *before == s {
                    let d = indegree.get_mut(after).expect("after is a step");
                    *d -= 1;
                    if *d == 0 {
                        ready.push(*after);
                    }
                }
            }
        }
        seen == indegree.len()
    }
}

/// Ground-truth activity sequence kept for the human-action bypass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthTrace {
    pub trace_id: String,
    pub activities: Vec<ActivityInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceMetadata {
    pub created_at: u64,
    pub source_traces: Vec<String>,
    pub success_count: u64,
    pub failure_count: u64,
    /// Reserved; ratings are not implemented.
    #[serde(default)]
    pub rating: Option<f64>,
    /// Reserved; review workflows are not implemented.
    #[serde(default)]
    pub audit_status: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub experience_id: String,
    pub task_label: String,
    pub env_fingerprint: Fingerprint,
    pub low: LowLevelExperience,
    pub high: HighLevelExperience,
    pub metadata: ExperienceMetadata,
    pub ground_truth: Vec<GroundTruthTrace>,
}

#[derive(Debug, Error)]
pub enum ExperienceError {
    #[error("experience json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("experience io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid experience: {0}")]
    Invalid(String),
}

impl Experience {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("experience serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ExperienceError> {
        let exp: Experience = serde_json::from_str(text)?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ExperienceError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Structural invariants a loaded experience must satisfy.
    pub fn validate(&self) -> Result<(), ExperienceError> {
        let bad = |m: String| Err(ExperienceError::Invalid(m));
        let low = &self.low;
        let ids: BTreeSet<NodeId> = low.nodes.iter().map(|n| n.id).collect();
        if ids.len() != low.nodes.len() {
            return bad("duplicate node ids".into());
        }
        if !ids.contains(&low.start_node) || !low.accept_nodes.is_subset(&ids) {
            return bad("start or accept node missing".into());
        }
        let mut seen = BTreeSet::new();
        for e in &low.edges {
            if !ids.contains(&e.from) || !ids.contains(&e.to) {
                return bad(format!("edge {} references a missing node", e.key()));
            }
            if !seen.insert((e.from, e.key())) {
                return bad(format!("two out-edges of {} share key {}", e.from, e.key()));
            }
        }
        if low.loop_bounds.values().any(|l| l.limit < 1 || l.body.is_empty()) {
            return bad("loop bound limit must be >= 1 with a non-empty body".into());
        }
        if !self.high.is_acyclic() {
            return bad("order constraints are cyclic".into());
        }
        Ok(())
    }
}
