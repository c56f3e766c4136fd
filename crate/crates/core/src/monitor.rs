//! Runtime reference monitor for execution flow integrity.
//!
//! [`check`] is a pure function of the context, the proposed action and the
//! experience. It evaluates, in order: the exact-trace bypass, flow
//! conformance, preconditions, dependency order, parameter constraints and
//! loop bounds. The first failing check names the verdict. [`advance`]
//! re-checks the action before moving the context, so a context can never be
//! advanced past a denied action.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experience::{Experience, LoopId, NodeId, ParamConstraint, StepId};
use crate::summarizer::loops::iteration_count;
use crate::sts::{ActivityInstance, StateSignature, TemplateKey};

/// A check attached to an edge or step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum CheckFunction {
    FlowConformance,
    /// The page must be one of `pages` and every key in `required` must be
    /// completed.
    Precondition {
        pages: BTreeSet<String>,
        required: BTreeSet<TemplateKey>,
    },
    ParamConstraintCheck,
    LoopBound { loop_id: LoopId },
    DependencyOrder,
    ExactTraceBypass { trace_id: String, cursor: usize },
}

impl CheckFunction {
    pub fn kind(&self) -> CheckKind {
        match self {
            CheckFunction::FlowConformance => CheckKind::FlowConformance,
            CheckFunction::Precondition { .. } => CheckKind::Precondition,
            CheckFunction::ParamConstraintCheck => CheckKind::ParamConstraintCheck,
            CheckFunction::LoopBound { .. } => CheckKind::LoopBound,
            CheckFunction::DependencyOrder => CheckKind::DependencyOrder,
            CheckFunction::ExactTraceBypass { .. } => CheckKind::ExactTraceBypass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CheckKind {
    ExactTraceBypass,
    FlowConformance,
    Precondition,
    DependencyOrder,
    ParamConstraintCheck,
    LoopBound,
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    Low,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub allowed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_check: Option<CheckKind>,
    pub detail: String,
    /// True when the action was allowed because it replays a recorded one.
    #[serde(default)]
    pub bypass: bool,
}

impl Verdict {
    fn allow(detail: impl Into<String>, bypass: bool) -> Self {
        Self {
            allowed: true,
            failed_check: None,
            detail: detail.into(),
            bypass,
        }
    }

    fn deny(check: CheckKind, detail: impl Into<String>) -> Self {
        Self {
            allowed: false,
            failed_check: Some(check),
            detail: detail.into(),
            bypass: false,
        }
    }
}

/// Position in the recorded ground truth for the human-action bypass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BypassCursor {
    /// Nothing executed yet; any recorded trace may be followed.
    Pending,
    /// Following `trace_id`; `index` is the next activity to match.
    Following { trace_id: String, index: usize },
    /// A non-recorded action ran, or bypass is disabled.
    Off,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorContext {
    pub level: Level,
    /// Low level: the automaton node.
    pub current_node: Option<NodeId>,
    /// High level: how many times each step was consumed.
    pub consumed: BTreeMap<StepId, u32>,
    pub env_signature: StateSignature,
    /// Current iteration of each loop after the last allowed action.
    pub loop_counters: BTreeMap<LoopId, u32>,
    /// Template keys of every allowed action, in order.
    pub history: Vec<TemplateKey>,
    pub bypass_cursor: BypassCursor,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonitorError {
    #[error("context is inconsistent with the experience: {0}")]
    InconsistentContext(String),
    #[error("advance without an allow verdict ({0})")]
    NotAllowed(String),
}

impl MonitorContext {
    /// A context at the start of `exp` for `level`, with bypass enabled.
    pub fn new(exp: &Experience, level: Level, env_signature: StateSignature) -> Self {
        Self {
            level,
            current_node: (level == Level::Low).then_some(exp.low.start_node),
            consumed: BTreeMap::new(),
            env_signature,
            loop_counters: BTreeMap::new(),
            history: Vec::new(),
            bypass_cursor: BypassCursor::Pending,
        }
    }

    pub fn without_bypass(mut self) -> Self {
        self.bypass_cursor = BypassCursor::Off;
        self
    }

    /// A high-level context continuing after `history` ran at another level.
    pub fn high_after(exp: &Experience, history: &[TemplateKey], env_signature: StateSignature) -> Self {
        let mut consumed = BTreeMap::new();
        for key in history {
            if let Some(step) = exp.high.step_by_key(key) {
                *consumed.entry(step.step_id).or_insert(0) += 1;
            }
        }
        let mut ctx = Self {
            level: Level::High,
            current_node: None,
            consumed,
            env_signature,
            loop_counters: BTreeMap::new(),
            history: history.to_vec(),
            bypass_cursor: BypassCursor::Off,
        };
        ctx.loop_counters = loop_counters(exp, &ctx.history);
        ctx
    }

    /// Keys completed so far, from the environment and this session.
    pub fn completed(&self) -> BTreeSet<TemplateKey> {
        let mut done = self.env_signature.completed.clone();
        done.extend(self.history.iter().cloned());
        done
    }
}

fn loop_counters(exp: &Experience, history: &[TemplateKey]) -> BTreeMap<LoopId, u32> {
    exp.low
        .loop_bounds
        .iter()
        .map(|(id, l)| (*id, iteration_count(history, &l.body) as u32))
        .collect()
}

fn bypass_match(ctx: &MonitorContext, action: &ActivityInstance, exp: &Experience) -> Option<(String, usize)> {
    match &ctx.bypass_cursor {
        BypassCursor::Off => None,
        BypassCursor::Pending => {
            if !ctx.history.is_empty() {
                return None;
            }
            exp.ground_truth
                .iter()
                .find(|gt| gt.activities.first().is_some_and(|a| a.same_action(action)))
                .map(|gt| (gt.trace_id.clone(), 0))
        }
        BypassCursor::Following { trace_id, index } => exp
            .ground_truth
            .iter()
            .find(|gt| &gt.trace_id == trace_id)
            .and_then(|gt| gt.activities.get(*index))
            .filter(|a| a.same_action(action))
            .map(|_| (trace_id.clone(), *index)),
    }
}

fn param_check(
    constraints: &BTreeMap<String, ParamConstraint>,
    action: &ActivityInstance,
) -> Result<(), String> {
    for (name, value) in &action.args {
        match constraints.get(name) {
            None => return Err(format!("argument `{name}` was never observed")),
            Some(c) if !c.admits(value) => {
                return Err(format!("`{name}`=`{value}` violates {c:?}"));
            }
            Some(_) => {}
        }
    }
    if let Some(missing) = constraints.keys().find(|n| action.arg(n).is_none()) {
        return Err(format!("argument `{missing}` is missing"));
    }
    Ok(())
}

/// Decides whether `action` may run next.
pub fn check(
    ctx: &MonitorContext,
    action: &ActivityInstance,
    exp: &Experience,
    level: Level,
) -> Result<Verdict, MonitorError> {
    let key = action.key();

    let (checks, constraints) = match level {
        Level::Low => {
            let node = ctx
                .current_node
                .ok_or_else(|| MonitorError::InconsistentContext("low-level context has no node".into()))?;
            if exp.low.node(node).is_none() {
                return Err(MonitorError::InconsistentContext(format!("node {node} is not in the experience")));
            }
            if bypass_match(ctx, action, exp).is_some() {
                return Ok(Verdict::allow("matches the recorded trace", true));
            }
            let Some(edge) = exp.low.edge(node, &key) else {
                return Ok(Verdict::deny(CheckKind::FlowConformance, format!("no edge {key} at {node}")));
            };
            if edge.template.element_id.is_some() && edge.template.element_id != action.template.element_id {
                return Ok(Verdict::deny(
                    CheckKind::FlowConformance,
                    format!("{key} at {node} is bound to element {:?}", edge.template.element_id),
                ));
            }
            (&edge.checks, &edge.param_constraints)
        }
        Level::High => {
            if bypass_match(ctx, action, exp).is_some() {
                return Ok(Verdict::allow("matches the recorded trace", true));
            }
            let Some(step) = exp.high.step_by_key(&key) else {
                return Ok(Verdict::deny(CheckKind::FlowConformance, format!("no step for {key}")));
            };
            let in_loop = exp.high.loop_bounds.contains_key(&step.step_id);
            if !in_loop && ctx.consumed.get(&step.step_id).copied().unwrap_or(0) > 0 {
                return Ok(Verdict::deny(
                    CheckKind::FlowConformance,
                    format!("step {} ({key}) was already performed", step.step_id),
                ));
            }
            (&step.checks, &step.param_constraints)
        }
    };

    let completed = ctx.completed();
    for c in checks {
        if let CheckFunction::Precondition { pages, required } = c {
            if !pages.contains(&ctx.env_signature.page) {
                return Ok(Verdict::deny(
                    CheckKind::Precondition,
                    format!("{key} is not available on page `{}`", ctx.env_signature.page),
                ));
            }
            if let Some(missing) = required.iter().find(|r| !completed.contains(*r)) {
                return Ok(Verdict::deny(CheckKind::Precondition, format!("{key} requires {missing}")));
            }
        }
    }

    if checks.contains(&CheckFunction::DependencyOrder) {
        if let Some(missing) = exp.high.required_before(&key).into_iter().find(|b| !completed.contains(b)) {
            return Ok(Verdict::deny(
                CheckKind::DependencyOrder,
                format!("{key} was never demonstrated before {missing}"),
            ));
        }
    }

    if checks.contains(&CheckFunction::ParamConstraintCheck) {
        if let Err(detail) = param_check(constraints, action) {
            return Ok(Verdict::deny(CheckKind::ParamConstraintCheck, detail));
        }
    }

    let mut seq = ctx.history.clone();
    seq.push(key.clone());
    for c in checks {
        if let CheckFunction::LoopBound { loop_id } = c {
            let bound = exp
                .low
                .loop_bounds
                .get(loop_id)
                .ok_or_else(|| MonitorError::InconsistentContext(format!("unknown loop {loop_id}")))?;
            let count = iteration_count(&seq, &bound.body);
            if count > bound.limit as usize {
                return Ok(Verdict::deny(
                    CheckKind::LoopBound,
                    format!("iteration {count} of loop {loop_id} exceeds the bound {}", bound.limit),
                ));
            }
        }
    }

    Ok(Verdict::allow("all checks passed", false))
}

/// Moves the context past `action`, which must be allowed in `ctx`.
pub fn advance(
    ctx: &MonitorContext,
    action: &ActivityInstance,
    exp: &Experience,
    level: Level,
    post_signature: StateSignature,
) -> Result<MonitorContext, MonitorError> {
    let verdict = check(ctx, action, exp, level)?;
    if !verdict.allowed {
        return Err(MonitorError::NotAllowed(verdict.detail));
    }
    let key = action.key();
    let mut next = ctx.clone();
    match level {
        Level::Low => {
            let node = ctx.current_node.expect("checked above");
            let edge = exp.low.edge(node, &key).ok_or_else(|| {
                MonitorError::InconsistentContext(format!("bypassed action {key} has no edge at {node}"))
            })?;
            next.current_node = Some(edge.to);
        }
        Level::High => {
            let step = exp
                .high
                .step_by_key(&key)
                .ok_or_else(|| MonitorError::InconsistentContext(format!("bypassed action {key} has no step")))?;
            *next.consumed.entry(step.step_id).or_insert(0) += 1;
        }
    }
    next.bypass_cursor = match bypass_match(ctx, action, exp) {
        Some((trace_id, index)) => BypassCursor::Following { trace_id, index: index + 1 },
        None => BypassCursor::Off,
    };
    next.history.push(key);
    next.loop_counters = loop_counters(exp, &next.history);
    next.env_signature = post_signature;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use crate::experience::StepId;
    use crate::recorder::record;
    use crate::summarizer::{enumerate_language, summarize_against_world, SummarizeOptions};

    fn key(s: &str) -> TemplateKey {
        s.parse().unwrap()
    }

    fn experience(world: &crate::sim::WorldSpec, scripts: &[crate::recorder::DemoScript]) -> Experience {
        let traces: Vec<_> = scripts
            .iter()
            .map(|s| record(s, world, &BTreeSet::new()).unwrap())
            .collect();
        summarize_against_world(&traces, world, &SummarizeOptions::default()).unwrap()
    }

    fn case_study() -> Experience {
        experience(&demo::form_world(), &[demo::script_a(), demo::script_b()])
    }

    fn start_sig(exp: &Experience) -> StateSignature {
        let n = exp.low.node(exp.low.start_node).unwrap();
        StateSignature {
            page: n.node_signature.page.clone(),
            completed: n.node_signature.completed.clone(),
            focused: None,
        }
    }

    /// A recorded activity with this key, used as a well-formed action.
    fn sample(exp: &Experience, k: &str) -> ActivityInstance {
        exp.ground_truth
            .iter()
            .flat_map(|g| g.activities.iter())
            .find(|a| a.key() == key(k))
            .map(|a| ActivityInstance::new(a.template.clone(), a.args.clone()))
            .unwrap()
    }

    fn with_text(mut a: ActivityInstance, text: &str) -> ActivityInstance {
        a.args = vec![("text".into(), text.into())];
        a
    }

    fn sig_after(sig: &StateSignature, k: &str) -> StateSignature {
        let mut s = sig.clone();
        s.completed.insert(key(k));
        s
    }

    #[test]
    fn chain_advance_moves_along_the_edge() {
        let exp = experience(&demo::form_world(), &[demo::script_a()]);
        let ctx = MonitorContext::new(&exp, Level::Low, start_sig(&exp)).without_bypass();
        let act = sample(&exp, "Type/name");
        assert!(check(&ctx, &act, &exp, Level::Low).unwrap().allowed);
        let next = advance(&ctx, &act, &exp, Level::Low, sig_after(&ctx.env_signature, "Type/name")).unwrap();
        assert_eq!(next.current_node, Some(exp.low.edge(exp.low.start_node, &key("Type/name")).unwrap().to));
        assert_eq!(next.current_node, Some(crate::experience::NodeId(1)));
    }

    #[test]
    fn date_after_gate_is_a_dependency_violation() {
        let exp = case_study();
        let ctx = MonitorContext::new(&exp, Level::High, start_sig(&exp)).without_bypass();
        let gate = with_text(sample(&exp, "Type/gate"), "B7");
        let ctx = advance(&ctx, &gate, &exp, Level::High, sig_after(&ctx.env_signature, "Type/gate")).unwrap();
        let date = with_text(sample(&exp, "Type/date"), "2025-07-04");
        let v = check(&ctx, &date, &exp, Level::High).unwrap();
        assert!(!v.allowed);
        assert_eq!(v.failed_check, Some(CheckKind::DependencyOrder));
        assert!(v.detail.contains("Type/name"), "{}", v.detail);
    }

    #[test]
    fn exact_recorded_action_bypasses_param_checks() {
        let mut exp = experience(&demo::form_world(), &[demo::script_a()]);
        for e in &mut exp.low.edges {
            for c in e.param_constraints.values_mut() {
                *c = ParamConstraint::Constant("zzz".into());
            }
        }
        let ctx = MonitorContext::new(&exp, Level::Low, start_sig(&exp));
        let act = sample(&exp, "Type/name");
        let v = check(&ctx, &act, &exp, Level::Low).unwrap();
        assert!(v.allowed && v.bypass);
        let v = check(&ctx.clone().without_bypass(), &act, &exp, Level::Low).unwrap();
        assert_eq!(v.failed_check, Some(CheckKind::ParamConstraintCheck));

        let next = advance(&ctx, &act, &exp, Level::Low, sig_after(&ctx.env_signature, "Type/name")).unwrap();
        assert_eq!(
            next.bypass_cursor,
            BypassCursor::Following { trace_id: exp.ground_truth[0].trace_id.clone(), index: 1 }
        );
        // a different value at the cursor is not a byte-equal match
        let other = with_text(sample(&exp, "Type/gate"), "A13");
        let v = check(&next, &other, &exp, Level::Low).unwrap();
        assert_eq!(v.failed_check, Some(CheckKind::ParamConstraintCheck));
    }

    #[test]
    fn fourth_loop_iteration_is_denied() {
        let w = demo::cart_world();
        let exp = experience(&w, &[demo::cart_script(&["a", "b"]), demo::cart_script(&["c", "d", "e"])]);
        let loop_id = *exp.low.loop_bounds.keys().next().unwrap();
        let mut ctx = MonitorContext::new(&exp, Level::Low, start_sig(&exp)).without_bypass();
        let item = sample(&exp, "Type/item");
        let add = sample(&exp, "Click/add");
        let mut counters = Vec::new();
        for round in 0..3 {
            for act in [&item, &add] {
                let v = check(&ctx, act, &exp, Level::Low).unwrap();
                assert!(v.allowed, "round {round}: {}", v.detail);
                let post = sig_after(&ctx.env_signature, &act.key().to_string());
                ctx = advance(&ctx, act, &exp, Level::Low, post).unwrap();
            }
            counters.push(ctx.loop_counters[&loop_id]);
        }
        assert_eq!(counters, vec![1, 2, 3]);
        let v = check(&ctx, &item, &exp, Level::Low).unwrap();
        assert!(!v.allowed);
        assert_eq!(v.failed_check, Some(CheckKind::LoopBound));
        assert!(check(&ctx, &sample(&exp, "Click/checkout"), &exp, Level::Low).unwrap().allowed);
    }

    #[test]
    fn high_level_loop_steps_share_the_bound() {
        let w = demo::cart_world();
        let exp = experience(&w, &[demo::cart_script(&["a", "b", "c"])]);
        let mut ctx = MonitorContext::new(&exp, Level::High, start_sig(&exp)).without_bypass();
        let item = sample(&exp, "Type/item");
        let add = sample(&exp, "Click/add");
        for _ in 0..3 {
            for act in [&item, &add] {
                let post = sig_after(&ctx.env_signature, &act.key().to_string());
                ctx = advance(&ctx, act, &exp, Level::High, post).unwrap();
            }
        }
        assert_eq!(ctx.consumed[&StepId(0)], 3);
        assert_eq!(check(&ctx, &item, &exp, Level::High).unwrap().failed_check, Some(CheckKind::LoopBound));
    }

    #[test]
    fn advance_after_deny_is_an_error_and_deny_keeps_context() {
        let exp = case_study();
        let ctx = MonitorContext::new(&exp, Level::Low, start_sig(&exp)).without_bypass();
        let before = ctx.clone();
        let date = sample(&exp, "Type/date");
        assert!(!check(&ctx, &date, &exp, Level::Low).unwrap().allowed);
        assert!(matches!(
            advance(&ctx, &date, &exp, Level::Low, ctx.env_signature.clone()),
            Err(MonitorError::NotAllowed(_))
        ));
        assert_eq!(ctx, before);
        assert!(check(&ctx, &sample(&exp, "Type/name"), &exp, Level::Low).unwrap().allowed);
    }

    #[test]
    fn low_level_is_bound_to_element_ids() {
        let exp = case_study();
        let ctx = MonitorContext::new(&exp, Level::Low, start_sig(&exp)).without_bypass();
        let mut act = sample(&exp, "Type/name");
        act.template.element_id = Some("name_v2".into());
        assert_eq!(check(&ctx, &act, &exp, Level::Low).unwrap().failed_check, Some(CheckKind::FlowConformance));
    }

    #[test]
    fn precondition_checks_the_page() {
        let exp = case_study();
        let mut sig = start_sig(&exp);
        sig.page = "elsewhere".into();
        let ctx = MonitorContext::new(&exp, Level::Low, sig).without_bypass();
        let v = check(&ctx, &sample(&exp, "Type/name"), &exp, Level::Low).unwrap();
        assert_eq!(v.failed_check, Some(CheckKind::Precondition));
    }

    #[test]
    fn unknown_node_is_inconsistent() {
        let exp = case_study();
        let mut ctx = MonitorContext::new(&exp, Level::Low, start_sig(&exp));
        ctx.current_node = Some(crate::experience::NodeId(99));
        assert!(matches!(
            check(&ctx, &sample(&exp, "Type/name"), &exp, Level::Low),
            Err(MonitorError::InconsistentContext(_))
        ));
    }

    /// Exhaustive comparison against the enumerated language: a sequence
    /// runs to completion and ends accepting exactly when it is in it.
    fn assert_sound(exp: &Experience, max_len: usize) {
        let lang = enumerate_language(&exp.low, max_len).unwrap();
        let alphabet: Vec<TemplateKey> = exp.high.steps.iter().map(|s| s.template_key.clone()).collect();
        let mut frontier: Vec<Vec<TemplateKey>> = vec![vec![]];
        let mut checked = 0;
        while let Some(seq) = frontier.pop() {
            let mut ctx = MonitorContext::new(exp, Level::Low, start_sig(exp)).without_bypass();
            let mut all_allowed = true;
            for k in &seq {
                let act = sample(exp, &k.to_string());
                if !check(&ctx, &act, exp, Level::Low).unwrap().allowed {
                    all_allowed = false;
                    break;
                }
                let to = exp.low.edge(ctx.current_node.unwrap(), k).unwrap().to;
                let n = exp.low.node(to).unwrap();
                let post = StateSignature {
                    page: n.node_signature.page.clone(),
                    completed: n.node_signature.completed.clone(),
                    focused: None,
                };
                ctx = advance(&ctx, &act, exp, Level::Low, post).unwrap();
            }
            let accepted = all_allowed && exp.low.accept_nodes.contains(&ctx.current_node.unwrap());
            assert_eq!(accepted, lang.contains(&seq), "{seq:?}");
            checked += 1;
            if seq.len() < max_len {
                for k in &alphabet {
                    let mut s = seq.clone();
                    s.push(k.clone());
                    frontier.push(s);
                }
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn monitor_agrees_with_enumeration_on_the_form() {
        assert_sound(&case_study(), 5);
    }

    #[test]
    fn monitor_agrees_with_enumeration_on_the_cart() {
        let w = demo::cart_world();
        assert_sound(&experience(&w, &[demo::cart_script(&["a", "b"]), demo::cart_script(&["c", "d", "e"])]), 8);
    }
}
