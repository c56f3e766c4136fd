use std::collections::BTreeSet;

use crate::experience::{ParamConstraint, ValuePattern};
use crate::sts::{ActionKind, MASK};

/// Generalizes the values observed for one parameter.
///
/// Order of preference: a single distinct value stays `Constant`; select
/// choices become `EnumOf` up to `enum_threshold` distinct values; values
/// that all fit one built-in pattern become `Pattern`; anything else is
/// `AnyString`. Masked observations carry no information and widen to
/// `AnyString`.
pub fn generalize(values: &[String], kind: ActionKind, enum_threshold: usize) -> ParamConstraint {
    if values.is_empty() || values.iter().any(|v| v == MASK) {
        return ParamConstraint::AnyString;
    }
    let distinct: BTreeSet<String> = values.iter().cloned().collect();
    if distinct.len() == 1 {
        return ParamConstraint::Constant(distinct.into_iter().next().unwrap());
    }
    if kind == ActionKind::Select && distinct.len() <= enum_threshold {
        return ParamConstraint::EnumOf(distinct);
    }
    for pattern in ValuePattern::ALL {
        if distinct.iter().all(|v| pattern.matches(v)) {
            return ParamConstraint::Pattern(pattern);
        }
    }
    ParamConstraint::AnyString
}
