//! Bounded enumeration of the key sequences a low-level automaton accepts.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::experience::{LowLevelExperience, NodeId};
use crate::sts::TemplateKey;

/// Most partial sequences [`enumerate_language`] explores before giving up.
pub const EXPLOSION_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LanguageError {
    #[error("language enumeration exceeded {limit} sequences")]
    ExplosionGuard { limit: usize },
}

/// Every accepted key sequence of length at most `max_len`, honoring loop
/// bounds.
pub fn enumerate_language(
    low: &LowLevelExperience,
    max_len: usize,
) -> Result<BTreeSet<Vec<TemplateKey>>, LanguageError> {
    enumerate_language_within(low, max_len, EXPLOSION_LIMIT)
}

/// [`enumerate_language`] with a custom exploration limit.
pub fn enumerate_language_within(
    low: &LowLevelExperience,
    max_len: usize,
    limit: usize,
) -> Result<BTreeSet<Vec<TemplateKey>>, LanguageError> {
    let mut out = BTreeSet::new();
    let mut budget = Budget { explored: 0, limit };
    let mut path = Vec::new();
    walk(low, low.start_node, max_len, &mut path, &mut out, &mut budget)?;
    Ok(out)
}

struct Budget {
    explored: usize,
    limit: usize,
}

fn walk(
    low: &LowLevelExperience,
    node: NodeId,
    max_len: usize,
    path: &mut Vec<TemplateKey>,
    out: &mut BTreeSet<Vec<TemplateKey>>,
    budget: &mut Budget,
) -> Result<(), LanguageError> {
    budget.explored += 1;
    if budget.explored > budget.limit {
        return Err(LanguageError::ExplosionGuard { limit: budget.limit });
    }
    if low.accept_nodes.contains(&node) {
        out.insert(path.clone());
    }
    if path.len() == max_len {
        return Ok(());
    }
    for edge in low.out_edges(node) {
        let key = edge.key();
        if !low.within_loop_bounds(path, &key) {
            continue;
        }
        path.push(key);
        walk(low, edge.to, max_len, path, out, budget)?;
        path.pop();
    }
    Ok(())
}
