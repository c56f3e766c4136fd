//! State-transition-system vocabulary shared by every other module.
//!
//! A [`Trace`] is the ground truth: a time-ordered list of raw UI events, each
//! carrying the abstract [`StateSignature`] observed immediately before it.
//! [`abstract_trace`] lifts raw events into [`ActivityInstance`]s whose
//! [`TemplateKey`]s form the alphabet of the experience automaton.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::EnvState;

/// Placeholder written over every parameter value of a masked event.
pub const MASK: &str = "***MASKED***";

/// Roles that are masked even when the caller does not list them.
pub const SENSITIVE_ROLE_HEURISTICS: [&str; 4] = ["password", "secret", "token", "ssn"];

/// Ordered `name -> value` parameter list.
pub type Params = Vec<(String, String)>;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error("trace io: {0}")]
    Io(#[from] std::io::Error),
    #[error("trace json (line {line}): {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Raw event kinds as captured by the recorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Click,
    Keypress,
    Type,
    Select,
    Navigate,
    Submit,
    Focus,
}

/// Semantic action kinds: the meta-operations an experience is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Click,
    Type,
    Select,
    Navigate,
    Submit,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Click => "Click",
            ActionKind::Type => "Type",
            ActionKind::Select => "Select",
            ActionKind::Navigate => "Navigate",
            ActionKind::Submit => "Submit",
        }
    }

    /// Kinds whose argument is supplied by the task (text or a choice).
    pub fn takes_input(self) -> bool {
        matches!(self, ActionKind::Type | ActionKind::Select)
    }

    /// Name of the single argument carried by input-taking kinds.
    pub fn input_param(self) -> Option<&'static str> {
        match self {
            ActionKind::Type => Some("text"),
            ActionKind::Select => Some("value"),
            _ => None,
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Click" => Ok(ActionKind::Click),
            "Type" => Ok(ActionKind::Type),
            "Select" => Ok(ActionKind::Select),
            "Navigate" => Ok(ActionKind::Navigate),
            "Submit" => Ok(ActionKind::Submit),
            other => Err(format!("unknown action kind `{other}`")),
        }
    }
}

/// `(kind, role)` identity of an action, stable under element-id changes.
///
/// Serialized as the string `Kind/role`, e.g. `Type/gate`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct TemplateKey {
    pub kind: ActionKind,
    pub role: String,
}

impl TemplateKey {
    pub fn new(kind: ActionKind, role: impl Into<String>) -> Self {
        Self {
            kind,
            role: role.into(),
        }
    }
}

impl fmt::Display for TemplateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.kind, self.role)
    }
}

impl FromStr for TemplateKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, role) = s
            .split_once('/')
            .ok_or_else(|| format!("template key `{s}` is not of the form Kind/role"))?;
        if role.is_empty() {
            return Err(format!("template key `{s}` has an empty role"));
        }
        Ok(Self::new(kind.parse()?, role))
    }
}

impl From<TemplateKey> for String {
    fn from(key: TemplateKey) -> Self {
        key.to_string()
    }
}

impl TryFrom<String> for TemplateKey {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// A semantic action template. `element_id` is absent at the abstract level
/// and for navigations.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionTemplate {
    pub kind: ActionKind,
    pub element_role: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub element_id: Option<String>,
}

impl ActionTemplate {
    pub fn new(kind: ActionKind, role: impl Into<String>, element_id: Option<String>) -> Self {
        Self {
            kind,
            element_role: role.into(),
            element_id,
        }
    }

    pub fn key(&self) -> TemplateKey {
        TemplateKey::new(self.kind, self.element_role.clone())
    }
}

/// Abstract environment state used to key experience nodes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateSignature {
    pub page: String,
    pub completed: BTreeSet<TemplateKey>,
    #[serde(default)]
    pub focused: Option<String>,
}

impl StateSignature {
    pub fn key(&self) -> SignatureKey {
        SignatureKey {
            page: self.page.clone(),
            completed: self.completed.clone(),
        }
    }
}

/// The focus-free part of a signature; one experience node per distinct key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SignatureKey {
    pub page: String,
    pub completed: BTreeSet<TemplateKey>,
}

impl fmt::Display for SignatureKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{{", self.page)?;
        for (i, key) in self.completed.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{key}")?;
        }
        f.write_str("}")
    }
}

/// Digest of a world layout. `role_digest` ignores element ids.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    pub digest: String,
    pub role_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub timestamp: u64,
    pub action_kind: EventKind,
    #[serde(default)]
    pub target_element: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_role: Option<String>,
    #[serde(default)]
    pub params: Params,
    pub state_snapshot: StateSignature,
    #[serde(default)]
    pub masked: bool,
}

impl TraceEvent {
    fn role(&self) -> Option<&str> {
        self.target_role
            .as_deref()
            .or(self.target_element.as_deref())
    }
}

/// One recorded demonstration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub trace_id: String,
    pub task_label: String,
    pub env_fingerprint: Fingerprint,
    pub events: Vec<TraceEvent>,
    /// Signature after the last event.
    pub final_snapshot: StateSignature,
}

impl Trace {
    pub fn validate(&self) -> Result<(), TraceError> {
        if self.events.is_empty() {
            return Err(TraceError::Malformed("trace has no events".into()));
        }
        for pair in self.events.windows(2) {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(TraceError::Malformed(format!(
                    "timestamps not strictly increasing ({} then {})",
                    pair[0].timestamp, pair[1].timestamp
                )));
            }
        }
        for ev in &self.events {
            if ev.masked && ev.params.iter().any(|(_, v)| v != MASK) {
                return Err(TraceError::Malformed(format!(
                    "event at tick {} is masked but carries a raw value",
                    ev.timestamp
                )));
            }
            if ev.action_kind == EventKind::Keypress {
                let single = ev.params.len() == 1
                    && (ev.masked || ev.params[0].1.chars().count() == 1);
                if !single {
                    return Err(TraceError::Malformed(format!(
                        "keypress at tick {} must carry exactly one single-character param",
                        ev.timestamp
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes the trace as JSONL: a header line, then one event per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), TraceError> {
        let header = TraceHeaderRef {
            trace_id: &self.trace_id,
            task_label: &self.task_label,
            env_fingerprint: &self.env_fingerprint,
            final_snapshot: &self.final_snapshot,
        };
        let line = serde_json::to_string(&header).map_err(|source| TraceError::Json { line: 1, source })?;
        writeln!(out, "{line}")?;
        for (i, ev) in self.events.iter().enumerate() {
            let line = serde_json::to_string(ev).map_err(|source| TraceError::Json { line: i + 2, source })?;
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut header: Option<TraceHeader> = None;
        let mut events = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = i + 1;
            if header.is_none() {
                header = Some(
                    serde_json::from_str(&line).map_err(|source| TraceError::Json { line: lineno, source })?,
                );
            } else {
                events.push(
                    serde_json::from_str(&line).map_err(|source| TraceError::Json { line: lineno, source })?,
                );
            }
        }
        let header = header.ok_or_else(|| TraceError::Malformed("empty trace file".into()))?;
        let trace = Trace {
            trace_id: header.trace_id,
            task_label: header.task_label,
            env_fingerprint: header.env_fingerprint,
            events,
            final_snapshot: header.final_snapshot,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        Self::read_jsonl(text.as_bytes())
    }
}

#[derive(Serialize)]
struct TraceHeaderRef<'a> {
    trace_id: &'a str,
    task_label: &'a str,
    env_fingerprint: &'a Fingerprint,
    final_snapshot: &'a StateSignature,
}

#[derive(Deserialize)]
struct TraceHeader {
    trace_id: String,
    task_label: String,
    env_fingerprint: Fingerprint,
    final_snapshot: StateSignature,
}

/// Contiguous, half-open range of event indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// A semantic action lifted from one or more raw events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityInstance {
    pub template: ActionTemplate,
    #[serde(default)]
    pub args: Params,
    pub origin_span: Span,
}

impl ActivityInstance {
    /// An activity not tied to any recorded events (planner output, replay).
    pub fn new(template: ActionTemplate, args: Params) -> Self {
        Self {
            template,
            args,
            origin_span: Span { start: 0, end: 0 },
        }
    }

    pub fn key(&self) -> TemplateKey {
        self.template.key()
    }

    pub fn arg(&self, name: &str) -> Option<&str> {
        self.args
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }

    /// Byte-level equality on template and arguments, ignoring provenance.
    pub fn same_action(&self, other: &ActivityInstance) -> bool {
        self.template == other.template && self.args == other.args
    }
}

/// Groups raw events into semantic activities.
///
/// Consecutive keypresses on one element collapse into a single `Type` whose
/// text is the concatenated characters. Focus events carry no action of
/// their own and are folded into the span of the next activity (or the
/// previous one when they trail the trace).
pub fn abstract_trace(trace: &Trace) -> Result<Vec<ActivityInstance>, TraceError> {
    trace.validate()?;
    let events = &trace.events;
    let mut out: Vec<ActivityInstance> = Vec::new();
    let mut pending_focus: Option<usize> = None;
    let mut i = 0;

    while i < events.len() {
        let ev = &events[i];
        match ev.action_kind {
            EventKind::Focus => {
                pending_focus.get_or_insert(i);
                i += 1;
            }
            EventKind::Keypress => {
                let target = ev.target_element.clone().ok_or_else(|| {
                    TraceError::Malformed(format!("keypress without focus at tick {}", ev.timestamp))
                })?;
                let role = ev.role().unwrap_or(&target).to_string();
                let mut text = String::new();
                let mut masked = false;
                let mut j = i;
                while j < events.len()
                    && events[j].action_kind == EventKind::Keypress
                    && events[j].target_element.as_deref() == Some(target.as_str())
                {
                    masked |= events[j].masked;
                    let (_, ch) = events[j].params.first().ok_or_else(|| {
                        TraceError::Malformed(format!("keypress without a key at tick {}", events[j].timestamp))
                    })?;
                    text.push_str(ch);
                    j += 1;
                }
                if masked {
                    text = MASK.to_string();
                }
                let start = pending_focus.take().unwrap_or(i);
                out.push(ActivityInstance {
                    template: ActionTemplate::new(ActionKind::Type, role, Some(target)),
                    args: vec![("text".to_string(), text)],
                    origin_span: Span { start, end: j },
                });
                i = j;
            }
            kind => {
                let template = one_to_one_template(ev, kind)?;
                let args = match kind {
                    EventKind::Navigate => Vec::new(),
                    _ => ev.params.clone(),
                };
                let start = pending_focus.take().unwrap_or(i);
                out.push(ActivityInstance {
                    template,
                    args,
                    origin_span: Span { start, end: i + 1 },
                });
                i += 1;
            }
        }
    }

    if pending_focus.is_some() {
        match out.last_mut() {
            Some(last) => last.origin_span.end = events.len(),
            None => return Err(TraceError::Malformed("trace contains only focus events".into())),
        }
    }
    Ok(out)
}

fn one_to_one_template(ev: &TraceEvent, kind: EventKind) -> Result<ActionTemplate, TraceError> {
    let action = match kind {
        EventKind::Click => ActionKind::Click,
        EventKind::Type => ActionKind::Type,
        EventKind::Select => ActionKind::Select,
        EventKind::Submit => ActionKind::Submit,
        EventKind::Navigate => {
            let page = ev
                .params
                .iter()
                .find(|(n, _)| n == "page")
                .map(|(_, v)| v.clone())
                .ok_or_else(|| {
                    TraceError::Malformed(format!("navigate at tick {} has no page param", ev.timestamp))
                })?;
            return Ok(ActionTemplate::new(ActionKind::Navigate, page, None));
        }
        EventKind::Focus | EventKind::Keypress => unreachable!("handled by caller"),
    };
    let element = ev.target_element.clone().ok_or_else(|| {
        TraceError::Malformed(format!("{kind:?} at tick {} has no target element", ev.timestamp))
    })?;
    let role = ev.role().unwrap_or(&element).to_string();
    Ok(ActionTemplate::new(action, role, Some(element)))
}

/// Abstract signature of an environment state.
pub fn signature_of(state: &EnvState) -> StateSignature {
    StateSignature {
        page: state.current_page.clone(),
        completed: state.completed.clone(),
        focused: state.focused.clone(),
    }
}

/// True when `role` is in `extra` or exactly matches a built-in heuristic.
pub fn is_sensitive_role(role: &str, extra: &BTreeSet<String>) -> bool {
    extra.contains(role)
        || SENSITIVE_ROLE_HEURISTICS
            .iter()
            .any(|h| role.eq_ignore_ascii_case(h))
}

/// Replaces the parameter values of every event on a sensitive role with
/// [`MASK`]. Everything else is left untouched.
pub fn mask_sensitive(trace: &Trace, sensitive_roles: &BTreeSet<String>) -> Trace {
    let mut out = trace.clone();
    for ev in &mut out.events {
        let sensitive = ev.role().is_some_and(|r| is_sensitive_role(r, sensitive_roles));
        if sensitive {
            ev.masked = true;
            for (_, value) in &mut ev.params {
                *value = MASK.to_string();
            }
        }
    }
    out
}
