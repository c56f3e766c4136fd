//! Offline conservativeness audits for a summarized experience.
//!
//! The verifier re-derives what the source traces witnessed and compares it
//! with the bounded language of the low-level automaton. It shares no
//! walking or loop-counting code with the monitor.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::experience::{Experience, LowLevelExperience};
use crate::summarizer::{enumerate_language, LanguageError};
use crate::sts::{abstract_trace, SignatureKey, TemplateKey, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Audit {
    Containment,
    Witness,
    Order,
    Loop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub detail: String,
    /// Shortest key sequence exhibiting the problem.
    pub counterexample: Vec<TemplateKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditResult {
    pub audit: Audit,
    pub violations: Vec<Violation>,
}

impl AuditResult {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub experience_id: String,
    pub max_len: usize,
    pub language_size: usize,
    pub audits: Vec<AuditResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.audits.iter().all(AuditResult::passed)
    }

    pub fn audit(&self, which: Audit) -> &AuditResult {
        self.audits.iter().find(|a| a.audit == which).expect("every audit is reported")
    }
}

fn show(seq: &[TemplateKey]) -> String {
    let parts: Vec<String> = seq.iter().map(ToString::to_string).collect();
    format!("[{}]", parts.join(", "))
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "experience {} ({} sequences up to length {})",
            self.experience_id, self.language_size, self.max_len
        )?;
        for a in &self.audits {
            let status = if a.passed() { "pass" } else { "FAIL" };
            writeln!(f, "  {:<12} {status}", format!("{:?}", a.audit))?;
            for v in &a.violations {
                writeln!(f, "    {}: {}", v.detail, show(&v.counterexample))?;
            }
        }
        write!(f, "{}", if self.passed() { "verified" } else { "verification failed" })
    }
}

/// Largest number of consecutive `body` iterations anywhere in `seq`,
/// counting a started iteration that runs into the end of `seq` or into a
/// different key as one.
fn loop_runs(seq: &[TemplateKey], body: &[TemplateKey]) -> usize {
    let m = body.len();
    let mut best = 0;
    for start in 0..seq.len() {
        let mut i = start;
        let mut count = 0;
        while i + m <= seq.len() && seq[i..i + m] == *body {
            count += 1;
            i += m;
        }
        if i < seq.len() && seq[i] == body[0] {
            count += 1;
        }
        best = best.max(count);
    }
    best
}

/// First prefix length at which a loop bound is exceeded.
fn loop_violation(low: &LowLevelExperience, seq: &[TemplateKey]) -> Option<(usize, String)> {
    (1..=seq.len()).find_map(|end| {
        low.loop_bounds.iter().find_map(|(id, l)| {
            let runs = loop_runs(&seq[..end], &l.body);
            (runs > l.limit as usize).then(|| (end, format!("loop {id} runs {runs} times, bound {}", l.limit)))
        })
    })
}

fn shortest(mut vs: Vec<Violation>) -> Vec<Violation> {
    vs.sort_by(|a, b| a.counterexample.len().cmp(&b.counterexample.len()).then(a.counterexample.cmp(&b.counterexample)));
    vs.dedup_by(|a, b| a.counterexample == b.counterexample);
    vs.truncate(1);
    vs
}

/// Runs the containment, witness, order and loop audits.
pub fn verify_experience(exp: &Experience, traces: &[Trace], max_len: usize) -> Result<VerifyReport, LanguageError> {
    let low = &exp.low;
    let signature = |id| low.node(id).map(|n| n.node_signature.clone());

    // What the traces witnessed: (signature before, key) pairs.
    let mut witnessed: BTreeSet<(SignatureKey, TemplateKey)> = BTreeSet::new();
    let mut trace_keys: BTreeMap<String, Vec<TemplateKey>> = BTreeMap::new();
    for t in traces {
        let Ok(acts) = abstract_trace(t) else { continue };
        for a in &acts {
            witnessed.insert((t.events[a.origin_span.start].state_snapshot.key(), a.key()));
        }
        trace_keys.insert(t.trace_id.clone(), acts.iter().map(|a| a.key()).collect());
    }

    let mut containment = Vec::new();
    for (id, keys) in &trace_keys {
        let mut node = low.start_node;
        let mut failure = None;
        for (i, k) in keys.iter().enumerate() {
            match low.edges.iter().find(|e| e.from == node && &e.template.key() == k) {
                Some(e) => node = e.to,
                None => {
                    failure = Some((i + 1, format!("trace {id}: no transition for {k}")));
                    break;
                }
            }
        }
        if failure.is_none() {
            failure = loop_violation(low, keys).map(|(end, d)| (end, format!("trace {id}: {d}")));
        }
        if failure.is_none() && !low.accept_nodes.contains(&node) {
            failure = Some((keys.len(), format!("trace {id} ends in a non-accepting state")));
        }
        if let Some((end, detail)) = failure {
            containment.push(Violation {
                detail,
                counterexample: keys[..end].to_vec(),
            });
        }
    }

    let language = enumerate_language(low, max_len)?;
    let mut witness = Vec::new();
    let mut order = Vec::new();
    let mut loops = Vec::new();
    for seq in &language {
        let mut node = low.start_node;
        for (i, k) in seq.iter().enumerate() {
            let sig = signature(node);
            let ok = sig.as_ref().is_some_and(|s| witnessed.contains(&(s.clone(), k.clone())));
            if !ok {
                witness.push(Violation {
                    detail: format!("{k} was never performed from {}", sig.map(|s| s.to_string()).unwrap_or_default()),
                    counterexample: seq[..=i].to_vec(),
                });
                break;
            }
            node = low.edge(node, k).map(|e| e.to).unwrap_or(node);
        }
        for (b, a) in &exp.high.order_constraints {
            let (Some(bs), Some(as_)) = (exp.high.step(*b), exp.high.step(*a)) else { continue };
            if let Some(pa) = seq.iter().position(|k| *k == as_.template_key) {
                if !seq[..pa].contains(&bs.template_key) {
                    order.push(Violation {
                        detail: format!("{} runs before {}", as_.template_key, bs.template_key),
                        counterexample: seq[..=pa].to_vec(),
                    });
                }
            }
        }
        if let Some((end, detail)) = loop_violation(low, seq) {
            loops.push(Violation {
                detail,
                counterexample: seq[..end].to_vec(),
            });
        }
    }

    Ok(VerifyReport {
        experience_id: exp.experience_id.clone(),
        max_len,
        language_size: language.len(),
        audits: vec![
            AuditResult { audit: Audit::Containment, violations: containment },
            AuditResult { audit: Audit::Witness, violations: shortest(witness) },
            AuditResult { audit: Audit::Order, violations: shortest(order) },
            AuditResult { audit: Audit::Loop, violations: shortest(loops) },
        ],
    })
}
