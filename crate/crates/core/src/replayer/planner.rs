//! The planner interface and the deterministic role-matching planner.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experience::AbstractStep;
use crate::sim::{ElementKind, EnvState, WorldSpec};
use crate::sts::{ActionKind, ActionTemplate, ActivityInstance};

/// One element as the planner sees it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleElement {
    pub element_id: String,
    pub role: String,
    pub kind: ElementKind,
    pub enabled: bool,
}

/// What the planner is shown of the environment: the current page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub page: String,
    pub elements: Vec<VisibleElement>,
}

impl Observation {
    pub fn of(world: &WorldSpec, state: &EnvState) -> Self {
        let elements = world
            .page(&state.current_page)
            .map(|p| {
                p.elements
                    .iter()
                    .map(|e| VisibleElement {
                        element_id: e.element_id.clone(),
                        role: e.role.clone(),
                        kind: e.kind,
                        enabled: e
                            .enabled_when
                            .as_ref()
                            .is_none_or(|needed| needed.is_subset(&state.completed)),
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self {
            page: state.current_page.clone(),
            elements,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("no visible element plays role `{0}`")]
    NoElement(String),
    #[error("the task supplies no input for `{0}`")]
    MissingInput(String),
}

/// Maps an abstract step to a concrete action on the observed page.
///
/// The returned action's template key must equal the step's.
pub trait Planner {
    fn plan_step(
        &self,
        step: &AbstractStep,
        observation: &Observation,
        inputs: &BTreeMap<String, String>,
    ) -> Result<ActivityInstance, PlanError>;
}

/// Lowercases and drops `_`, `-` and spaces.
pub fn normalize_role(role: &str) -> String {
    role.chars()
        .filter(|c| !matches!(c, '_' | '-' | ' '))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Looks a role up exactly, then by [`normalize_role`].
pub fn lookup_input<'a>(inputs: &'a BTreeMap<String, String>, role: &str) -> Option<&'a String> {
    inputs.get(role).or_else(|| {
        let want = normalize_role(role);
        inputs.iter().find(|(k, _)| normalize_role(k) == want).map(|(_, v)| v)
    })
}

/// Deterministic planner: resolves roles by exact, then normalized match.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubPlanner;

impl Planner for StubPlanner {
    fn plan_step(
        &self,
        step: &AbstractStep,
        observation: &Observation,
        inputs: &BTreeMap<String, String>,
    ) -> Result<ActivityInstance, PlanError> {
        let key = &step.template_key;
        if key.kind == ActionKind::Navigate {
            return Ok(ActivityInstance::new(
                ActionTemplate::new(ActionKind::Navigate, key.role.clone(), None),
                Vec::new(),
            ));
        }
        let want = normalize_role(&key.role);
        let element = observation
            .elements
            .iter()
            .find(|e| e.role == key.role)
            .or_else(|| observation.elements.iter().find(|e| normalize_role(&e.role) == want))
            .ok_or_else(|| PlanError::NoElement(key.role.clone()))?;
        let args = match key.kind.input_param() {
            Some(param) => {
                let value = lookup_input(inputs, &key.role).ok_or_else(|| PlanError::MissingInput(key.role.clone()))?;
                vec![(param.to_string(), value.clone())]
            }
            None => Vec::new(),
        };
        Ok(ActivityInstance::new(
            ActionTemplate::new(key.kind, key.role.clone(), Some(element.element_id.clone())),
            args,
        ))
    }
}
