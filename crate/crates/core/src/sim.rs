//! Deterministic page/form world used as the target system for recording
//! and replay.
//!
//! Transitions are value-semantic: [`apply`] never mutates its input and an
//! error leaves the caller's state exactly as it was.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::sts::{ActionKind, ActivityInstance, EventKind, Fingerprint, Params, TemplateKey};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum SimError {
    #[error("element `{element}` not found on page `{page}`")]
    ElementNotFound { element: String, page: String },
    #[error("element `{element}` is disabled until {missing:?} are completed")]
    ElementDisabled {
        element: String,
        missing: Vec<TemplateKey>,
    },
    #[error("form already submitted")]
    AlreadySubmitted,
    #[error("unknown page `{0}`")]
    UnknownPage(String),
    #[error("{action} is not applicable to element `{element}`")]
    WrongElementKind { element: String, action: ActionKind },
    #[error("`{value}` is not an option of `{element}`")]
    InvalidOption { element: String, value: String },
    #[error("required fields are empty: {0:?}")]
    MissingRequired(Vec<String>),
    #[error("keypress with no focused element")]
    NoFocus,
    #[error("{action} needs argument `{arg}`")]
    MissingArg { action: ActionKind, arg: String },
    #[error("invalid world: {0}")]
    InvalidWorld(String),
}

impl SimError {
    /// Short stable name used in audit records and reports.
    pub fn kind_name(&self) -> &'static str {
        match self {
            SimError::ElementNotFound { .. } => "ElementNotFound",
            SimError::ElementDisabled { .. } => "ElementDisabled",
            SimError::AlreadySubmitted => "AlreadySubmitted",
            SimError::UnknownPage(_) => "UnknownPage",
            SimError::WrongElementKind { .. } => "WrongElementKind",
            SimError::InvalidOption { .. } => "InvalidOption",
            SimError::MissingRequired(_) => "MissingRequired",
            SimError::NoFocus => "NoFocus",
            SimError::MissingArg { .. } => "MissingArg",
            SimError::InvalidWorld(_) => "InvalidWorld",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Button,
    TextField,
    Select,
    Link,
}

impl ElementKind {
    fn as_str(self) -> &'static str {
        match self {
            ElementKind::Button => "button",
            ElementKind::TextField => "text_field",
            ElementKind::Select => "select",
            ElementKind::Link => "link",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSpec {
    pub element_id: String,
    pub role: String,
    pub kind: ElementKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub options: Vec<String>,
    #[serde(default)]
    pub sensitive: bool,
    /// Template keys that must be completed before the element accepts input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enabled_when: Option<BTreeSet<TemplateKey>>,
    /// Must hold a non-empty value when the page is submitted.
    #[serde(default)]
    pub required: bool,
    /// Clicking this button submits the page.
    #[serde(default)]
    pub submits: bool,
}

impl ElementSpec {
    pub fn new(id: impl Into<String>, role: impl Into<String>, kind: ElementKind) -> Self {
        Self {
            element_id: id.into(),
            role: role.into(),
            kind,
            options: Vec::new(),
            sensitive: false,
            enabled_when: None,
            required: false,
            submits: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSpec {
    pub page_id: String,
    pub elements: Vec<ElementSpec>,
    /// Element id -> target page id.
    #[serde(default)]
    pub nav_links: BTreeMap<String, String>,
}

impl PageSpec {
    pub fn element(&self, id: &str) -> Option<&ElementSpec> {
        self.elements.iter().find(|e| e.element_id == id)
    }

    pub fn element_by_role(&self, role: &str) -> Option<&ElementSpec> {
        self.elements.iter().find(|e| e.role == role)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub pages: Vec<PageSpec>,
    pub start_page: String,
}

impl WorldSpec {
    pub fn page(&self, id: &str) -> Option<&PageSpec> {
        self.pages.iter().find(|p| p.page_id == id)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: String| Err(SimError::InvalidWorld(msg));
        let mut page_ids = BTreeSet::new();
        for page in &self.pages {
            if !page_ids.insert(page.page_id.as_str()) {
                return invalid(format!("duplicate page id `{}`", page.page_id));
            }
        }
        if !page_ids.contains(self.start_page.as_str()) {
            return invalid(format!("start page `{}` does not exist", self.start_page));
        }
        for page in &self.pages {
            let mut ids = BTreeSet::new();
            let mut roles = BTreeSet::new();
            for el in &page.elements {
                if !ids.insert(el.element_id.as_str()) {
                    return invalid(format!("duplicate element id `{}` on `{}`", el.element_id, page.page_id));
                }
                if !roles.insert(el.role.as_str()) {
                    return invalid(format!("duplicate role `{}` on `{}`", el.role, page.page_id));
                }
                if (el.kind == ElementKind::Select) == el.options.is_empty() {
                    return invalid(format!("element `{}`: options must be non-empty iff select", el.element_id));
                }
            }
            for (link, target) in &page.nav_links {
                if !ids.contains(link.as_str()) {
                    return invalid(format!("nav link `{link}` is not an element of `{}`", page.page_id));
                }
                if !page_ids.contains(target.as_str()) {
                    return invalid(format!("nav link `{link}` targets unknown page `{target}`"));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let world: WorldSpec =
            serde_json::from_str(text).map_err(|e| SimError::InvalidWorld(e.to_string()))?;
        world.validate()?;
        Ok(world)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::InvalidWorld(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Looks up an element on `page` and returns it with its role.
    pub fn element(&self, page: &str, id: &str) -> Option<&ElementSpec> {
        self.page(page).and_then(|p| p.element(id))
    }

    /// Roles of every element marked sensitive, across all pages.
    pub fn sensitive_roles(&self) -> BTreeSet<String> {
        self.pages
            .iter()
            .flat_map(|p| p.elements.iter())
            .filter(|e| e.sensitive)
            .map(|e| e.role.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub current_page: String,
    pub field_values: BTreeMap<String, String>,
    pub focused: Option<String>,
    pub submitted: bool,
    pub tick: u64,
    /// Template keys performed so far in this session.
    pub completed: BTreeSet<TemplateKey>,
}

impl EnvState {
    pub fn fresh(world: &WorldSpec) -> Self {
        Self {
            current_page: world.start_page.clone(),
            field_values: BTreeMap::new(),
            focused: None,
            submitted: false,
            tick: 0,
            completed: BTreeSet::new(),
        }
    }
}

fn check_enabled(el: &ElementSpec, state: &EnvState) -> Result<(), SimError> {
    if let Some(needed) = &el.enabled_when {
        let missing: Vec<TemplateKey> = needed.difference(&state.completed).cloned().collect();
        if !missing.is_empty() {
            return Err(SimError::ElementDisabled {
                element: el.element_id.clone(),
                missing,
            });
        }
    }
    Ok(())
}

fn submit(page: &PageSpec, next: &mut EnvState) -> Result<(), SimError> {
    let empty: Vec<String> = page
        .elements
        .iter()
        .filter(|e| e.required)
        .filter(|e| next.field_values.get(&e.element_id).is_none_or(|v| v.is_empty()))
        .map(|e| e.element_id.clone())
        .collect();
    if !empty.is_empty() {
        return Err(SimError::MissingRequired(empty));
    }
    next.submitted = true;
    Ok(())
}

fn navigate(world: &WorldSpec, next: &mut EnvState, target: &str) -> Result<(), SimError> {
    if world.page(target).is_none() {
        return Err(SimError::UnknownPage(target.to_string()));
    }
    next.current_page = target.to_string();
    next.focused = None;
    Ok(())
}

/// Applies one semantic action and returns the successor state.
///
/// The element is looked up by id, or by role when the template carries no
/// id. The completed set records the element's real role.
pub fn apply(state: &EnvState, action: &ActivityInstance, world: &WorldSpec) -> Result<EnvState, SimError> {
    if state.submitted {
        return Err(SimError::AlreadySubmitted);
    }
    let page = world
        .page(&state.current_page)
        .ok_or_else(|| SimError::UnknownPage(state.current_page.clone()))?;
    let template = &action.template;
    let mut next = state.clone();

    let key = if template.kind == ActionKind::Navigate {
        navigate(world, &mut next, &template.element_role)?;
        template.key()
    } else {
        let el = match &template.element_id {
            Some(id) => page.element(id),
            None => page.element_by_role(&template.element_role),
        }
        .ok_or_else(|| SimError::ElementNotFound {
            element: template
                .element_id
                .clone()
                .unwrap_or_else(|| template.element_role.clone()),
            page: page.page_id.clone(),
        })?;
        check_enabled(el, state)?;
        let wrong_kind = || SimError::WrongElementKind {
            element: el.element_id.clone(),
            action: template.kind,
        };
        let arg = |name: &str| {
            action.arg(name).map(str::to_string).ok_or_else(|| SimError::MissingArg {
                action: template.kind,
                arg: name.to_string(),
            })
        };
        match template.kind {
            ActionKind::Type => {
                if el.kind != ElementKind::TextField {
                    return Err(wrong_kind());
                }
                next.field_values.insert(el.element_id.clone(), arg("text")?);
                next.focused = Some(el.element_id.clone());
            }
            ActionKind::Select => {
                if el.kind != ElementKind::Select {
                    return Err(wrong_kind());
                }
                let value = arg("value")?;
                if !el.options.contains(&value) {
                    return Err(SimError::InvalidOption {
                        element: el.element_id.clone(),
                        value,
                    });
                }
                next.field_values.insert(el.element_id.clone(), value);
                next.focused = Some(el.element_id.clone());
            }
            ActionKind::Click => {
                next.focused = Some(el.element_id.clone());
                if let Some(target) = page.nav_links.get(&el.element_id) {
                    navigate(world, &mut next, target)?;
                } else if el.submits {
                    submit(page, &mut next)?;
                }
            }
            ActionKind::Submit => submit(page, &mut next)?,
            ActionKind::Navigate => unreachable!(),
        }
        TemplateKey::new(template.kind, el.role.clone())
    };

    next.completed.insert(key);
    next.tick += 1;
    Ok(next)
}

/// Applies one raw recorder event. Focus and keypress act directly on the
/// state; every other kind is routed through [`apply`].
pub fn apply_event(
    state: &EnvState,
    kind: EventKind,
    target: Option<&str>,
    params: &Params,
    world: &WorldSpec,
) -> Result<EnvState, SimError> {
    use crate::sts::ActionTemplate;

    if state.submitted {
        return Err(SimError::AlreadySubmitted);
    }
    let page = world
        .page(&state.current_page)
        .ok_or_else(|| SimError::UnknownPage(state.current_page.clone()))?;
    let lookup = |id: &str| {
        page.element(id).ok_or_else(|| SimError::ElementNotFound {
            element: id.to_string(),
            page: page.page_id.clone(),
        })
    };
    let mut next = state.clone();
    match kind {
        EventKind::Focus => {
            let el = lookup(target.ok_or(SimError::NoFocus)?)?;
            check_enabled(el, state)?;
            next.focused = Some(el.element_id.clone());
        }
        EventKind::Keypress => {
            let focused = target.or(state.focused.as_deref()).ok_or(SimError::NoFocus)?;
            let el = lookup(focused)?;
            check_enabled(el, state)?;
            if el.kind != ElementKind::TextField {
                return Err(SimError::WrongElementKind {
                    element: el.element_id.clone(),
                    action: ActionKind::Type,
                });
            }
            let ch = params.first().map(|(_, v)| v.as_str()).ok_or(SimError::MissingArg {
                action: ActionKind::Type,
                arg: "key".into(),
            })?;
            next.field_values
                .entry(el.element_id.clone())
                .or_default()
                .push_str(ch);
            next.focused = Some(el.element_id.clone());
            next.completed
                .insert(TemplateKey::new(ActionKind::Type, el.role.clone()));
        }
        other => {
            let action_kind = match other {
                EventKind::Click => ActionKind::Click,
                EventKind::Type => ActionKind::Type,
                EventKind::Select => ActionKind::Select,
                EventKind::Submit => ActionKind::Submit,
                EventKind::Navigate => ActionKind::Navigate,
                EventKind::Focus | EventKind::Keypress => unreachable!(),
            };
            let template = if action_kind == ActionKind::Navigate {
                let dest = params
                    .iter()
                    .find(|(n, _)| n == "page")
                    .map(|(_, v)| v.clone())
                    .ok_or(SimError::MissingArg {
                        action: ActionKind::Navigate,
                        arg: "page".into(),
                    })?;
                ActionTemplate::new(ActionKind::Navigate, dest, None)
            } else {
                let id = target.ok_or_else(|| SimError::ElementNotFound {
                    element: String::new(),
                    page: page.page_id.clone(),
                })?;
                let el = lookup(id)?;
                ActionTemplate::new(action_kind, el.role.clone(), Some(id.to_string()))
            };
            let args = if action_kind == ActionKind::Navigate {
                Vec::new()
            } else {
                params.clone()
            };
            return apply(state, &ActivityInstance::new(template, args), world);
        }
    }
    next.tick += 1;
    Ok(next)
}

/// Layout perturbations used to exercise the fallback paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbMode {
    RenameIds,
    ReorderElements,
}

pub fn perturb(world: &WorldSpec, mode: PerturbMode) -> WorldSpec {
    let mut out = world.clone();
    for page in &mut out.pages {
        match mode {
            PerturbMode::RenameIds => {
                for el in &mut page.elements {
                    el.element_id.push_str("_v2");
                }
                page.nav_links = page
                    .nav_links
                    .iter()
                    .map(|(k, v)| (format!("{k}_v2"), v.clone()))
                    .collect();
            }
            PerturbMode::ReorderElements => page.elements.reverse(),
        }
    }
    out
}

/// Digests the ordered element layout. `role_digest` omits element ids, so
/// id-only renames keep it stable.
pub fn fingerprint(world: &WorldSpec) -> Fingerprint {
    let mut full = Sha256::new();
    let mut roles = Sha256::new();
    for page in &world.pages {
        for el in &page.elements {
            let kind = el.kind.as_str();
            full.update(format!("{}\0{}\0{}\0{}\n", page.page_id, el.element_id, el.role, kind));
            roles.update(format!("{}\0{}\0{}\n", page.page_id, el.role, kind));
        }
    }
    Fingerprint {
        digest: hex::encode(full.finalize()),
        role_digest: hex::encode(roles.finalize()),
    }
}
