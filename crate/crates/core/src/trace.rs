//! Canonical event and trajectory model shared by human and agent recordings.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::text::snake_case;

/// Action vocabulary: the union of recorded human input events and the
/// actions observed across agent frameworks. Anything else is `Custom`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Click,
    RightClick,
    DoubleClick,
    Keypress,
    Scroll,
    Zoom,
    Noop,
    BrowseInteractive,
    Run,
    RunIpython,
    Edit,
    Read,
    Create,
    Search,
    SearchImage,
    OpenImage,
    GenerateImage,
    Think,
    Message,
    TaskTracking,
    ResetEnvironment,
    Custom(String),
}

const KNOWN: [(EventKind, &str); 21] = [
    (EventKind::Click, "click"),
    (EventKind::RightClick, "right_click"),
    (EventKind::DoubleClick, "double_click"),
    (EventKind::Keypress, "keypress"),
    (EventKind::Scroll, "scroll"),
    (EventKind::Zoom, "zoom"),
    (EventKind::Noop, "noop"),
    (EventKind::BrowseInteractive, "browse_interactive"),
    (EventKind::Run, "run"),
    (EventKind::RunIpython, "run_ipython"),
    (EventKind::Edit, "edit"),
    (EventKind::Read, "read"),
    (EventKind::Create, "create"),
    (EventKind::Search, "search"),
    (EventKind::SearchImage, "search_image"),
    (EventKind::OpenImage, "open_image"),
    (EventKind::GenerateImage, "generate_image"),
    (EventKind::Think, "think"),
    (EventKind::Message, "message"),
    (EventKind::TaskTracking, "task_tracking"),
    (EventKind::ResetEnvironment, "reset_environment"),
];

impl EventKind {
    /// Every member of the closed vocabulary, in declaration order.
    pub fn known() -> impl Iterator<Item = EventKind> {
        KNOWN.iter().map(|(k, _)| k.clone())
    }

    /// Parses a kind name leniently: names are normalized to lowercase with
    /// underscores, `key_press` is accepted for `keypress`, and anything
    /// outside the vocabulary becomes `Custom`.
    pub fn from_name(name: &str) -> EventKind {
        let norm = snake_case(name);
        let lookup = if norm == "key_press" {
            "keypress"
        } else {
            norm.as_str()
        };
        KNOWN
            .iter()
            .find(|(_, n)| *n == lookup)
            .map(|(k, _)| k.clone())
            .unwrap_or(EventKind::Custom(norm))
    }

    pub fn as_str(&self) -> &str {
        match self {
            EventKind::Custom(name) => name,
            other => KNOWN
                .iter()
                .find(|(k, _)| k == other)
                .map(|(_, n)| *n)
                .unwrap_or("custom"),
        }
    }

    pub fn is_known(&self) -> bool {
        !matches!(self, EventKind::Custom(_))
    }

    pub fn is_click(&self) -> bool {
        matches!(self, EventKind::Click | EventKind::DoubleClick)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for EventKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for EventKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Ok(EventKind::from_name(&name))
    }
}

/// A screenshot reference: a file path (relative to the session file) and an
/// optional frame id within a recording.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameRef {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<u64>,
}

impl FrameRef {
    pub fn new(path: impl Into<String>) -> Self {
        FrameRef {
            path: path.into(),
            frame: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub index: usize,
    /// Seconds since session start.
    #[serde(rename = "t")]
    pub timestamp: f64,
    pub kind: EventKind,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screenshot: Option<FrameRef>,
}

impl RawEvent {
    pub fn new(index: usize, timestamp: f64, kind: EventKind) -> Self {
        RawEvent {
            index,
            timestamp,
            kind,
            args: BTreeMap::new(),
            app: None,
            screenshot: None,
        }
    }

    pub fn with_arg(mut self, key: &str, value: impl ToString) -> Self {
        self.args.insert(key.into(), value.to_string());
        self
    }

    pub fn with_app(mut self, app: &str) -> Self {
        self.app = Some(app.into());
        self
    }

    pub fn with_screenshot(mut self, path: &str) -> Self {
        self.screenshot = Some(FrameRef::new(path));
        self
    }

    pub fn keypress(index: usize, t: f64, text: &str) -> Self {
        RawEvent::new(index, t, EventKind::Keypress).with_arg("text", text)
    }

    pub fn click(index: usize, t: f64, x: i64, y: i64) -> Self {
        RawEvent::new(index, t, EventKind::Click)
            .with_arg("x", x)
            .with_arg("y", y)
    }

    pub fn scroll(index: usize, t: f64, dy: i64) -> Self {
        RawEvent::new(index, t, EventKind::Scroll).with_arg("dy", dy)
    }

    pub fn text(&self) -> Option<&str> {
        self.args.get("text").map(String::as_str)
    }

    /// Click coordinates from the `x`/`y` args, when both parse as integers.
    pub fn coords(&self) -> Option<(i64, i64)> {
        let x = self.args.get("x")?.trim().parse().ok()?;
        let y = self.args.get("y")?.trim().parse().ok()?;
        Some((x, y))
    }

    pub fn element(&self) -> Option<&str> {
        self.args.get("element").map(String::as_str)
    }

    /// Scroll delta `(dx, dy)`; a missing axis counts as zero, an unparsable
    /// one yields `None`.
    pub fn scroll_delta(&self) -> Option<(i64, i64)> {
        let axis = |k: &str| match self.args.get(k) {
            None => Some(0),
            Some(v) => v.trim().parse::<i64>().ok(),
        };
        Some((axis("dx")?, axis("dy")?))
    }

    /// One-line rendering of the action used in annotator payloads,
    /// e.g. `click(x=10, y=20) [Excel]`.
    pub fn action_text(&self) -> String {
        let args: Vec<String> = self.args.iter().map(|(k, v)| format!("{k}={v}")).collect();
        match &self.app {
            Some(app) => format!("{}({}) [{}]", self.kind, args.join(", "), app),
            None => format!("{}({})", self.kind, args.join(", ")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkerKind {
    Human,
    Agent,
}

impl WorkerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WorkerKind::Human => "human",
            WorkerKind::Agent => "agent",
        }
    }
}

/// How a human worker used AI tools, labeled externally by inspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AiUsage {
    Independent,
    Augmentation,
    Automation,
}

impl AiUsage {
    pub fn as_str(self) -> &'static str {
        match self {
            AiUsage::Independent => "independent",
            AiUsage::Augmentation => "augmentation",
            AiUsage::Automation => "automation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerMeta {
    pub worker_id: String,
    pub kind: WorkerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub framework: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backbone: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ai_usage: Option<AiUsage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_usd: Option<f64>,
}

impl WorkerMeta {
    pub fn human(id: &str) -> Self {
        WorkerMeta {
            worker_id: id.into(),
            kind: WorkerKind::Human,
            framework: None,
            backbone: None,
            ai_usage: None,
            cost_usd: None,
        }
    }

    pub fn agent(id: &str, framework: &str) -> Self {
        WorkerMeta {
            worker_id: id.into(),
            kind: WorkerKind::Agent,
            framework: Some(framework.into()),
            backbone: None,
            ai_usage: None,
            cost_usd: None,
        }
    }
}

/// Marks an event whose screenshot could not be read at ingestion time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFlag {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    /// Task instruction, used as the root goal when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
    pub worker: WorkerMeta,
    pub events: Vec<RawEvent>,
    pub elapsed_seconds: f64,
    #[serde(default)]
    pub provenance: String,
    /// Ingestion-time flags; recomputed on every ingest, never persisted.
    #[serde(skip)]
    pub flags: Vec<EventFlag>,
}

impl Trajectory {
    /// Builds a trajectory and assigns `index = position` to every event.
    pub fn new(task_id: &str, worker: WorkerMeta, mut events: Vec<RawEvent>) -> Self {
        for (i, e) in events.iter_mut().enumerate() {
            e.index = i;
        }
        let elapsed = match (events.first(), events.last()) {
            (Some(a), Some(b)) => b.timestamp - a.timestamp,
            _ => 0.0,
        };
        Trajectory {
            task_id: task_id.into(),
            instruction: None,
            worker,
            events,
            elapsed_seconds: elapsed,
            provenance: String::new(),
            flags: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn validate(&self) -> ValidationReport {
        validate_trajectory(self)
    }
}

pub mod invariant {
    pub const EVENTS_NONEMPTY: &str = "events-nonempty";
    pub const INDEX_ORDINAL: &str = "index-ordinal";
    pub const TIMESTAMP_NONNEGATIVE: &str = "timestamp-nonnegative";
    pub const TIMESTAMPS_MONOTONIC: &str = "timestamps-monotonic";
    pub const CLICK_TARGET: &str = "click-target";
    pub const KEYPRESS_NONEMPTY: &str = "keypress-nonempty";
    pub const SCROLL_DELTA_INTEGER: &str = "scroll-delta-integer";
    pub const CUSTOM_KIND_NORMALIZED: &str = "custom-kind-normalized";
    pub const ELAPSED_COVERS_EVENTS: &str = "elapsed-covers-events";
    pub const AI_USAGE_HUMAN_ONLY: &str = "ai-usage-human-only";
    pub const COST_NONNEGATIVE: &str = "cost-finite-nonnegative";
    pub const SCREENSHOT_RESOLVES: &str = "screenshot-resolves";
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Offending event, or `None` for trajectory-level invariants.
    pub index: Option<usize>,
    pub invariant: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "event {i}: {} ({})", self.invariant, self.detail),
            None => write!(f, "{} ({})", self.invariant, self.detail),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    pub fn names(&self) -> Vec<&str> {
        self.violations
            .iter()
            .map(|v| v.invariant.as_str())
            .collect()
    }

    fn push(&mut self, index: Option<usize>, invariant: &str, detail: String) {
        self.violations.push(Violation {
            index,
            invariant: invariant.into(),
            detail,
        });
    }
}

/// Indices `i` where `events[i]` is earlier than `events[i - 1]`.
pub fn non_monotonic_indices(events: &[RawEvent]) -> Vec<usize> {
    events
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].timestamp < w[0].timestamp)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Checks every trajectory invariant. Total: never fails, reports instead.
pub fn validate_trajectory(t: &Trajectory) -> ValidationReport {
    use invariant::*;
    let mut report = ValidationReport::default();

    if t.events.is_empty() {
        report.push(None, EVENTS_NONEMPTY, "trajectory has no events".into());
    }

    for (pos, e) in t.events.iter().enumerate() {
        let at = Some(pos);
        if e.index != pos {
            report.push(
                at,
                INDEX_ORDINAL,
                format!("index {} at position {pos}", e.index),
            );
        }
        if !(e.timestamp.is_finite() && e.timestamp >= 0.0) {
            report.push(at, TIMESTAMP_NONNEGATIVE, format!("t = {}", e.timestamp));
        }
        match &e.kind {
            EventKind::Click | EventKind::DoubleClick => {
                let has_element = e.element().is_some_and(|s| !s.trim().is_empty());
                if e.coords().is_none() && !has_element {
                    report.push(at, CLICK_TARGET, "no coordinates or element".into());
                }
            }
            EventKind::Keypress => {
                if e.text().is_none_or(str::is_empty) {
                    report.push(at, KEYPRESS_NONEMPTY, "empty keypress text".into());
                }
            }
            EventKind::Scroll => {
                if e.scroll_delta().is_none() {
                    report.push(at, SCROLL_DELTA_INTEGER, "dx/dy must be integers".into());
                }
            }
            EventKind::Custom(name) => {
                let canonical = snake_case(name);
                if name.is_empty() || *name != canonical || EventKind::from_name(name).is_known() {
                    report.push(at, CUSTOM_KIND_NORMALIZED, format!("custom kind {name:?}"));
                }
            }
            _ => {}
        }
    }

    for i in non_monotonic_indices(&t.events) {
        report.push(
            Some(i),
            TIMESTAMPS_MONOTONIC,
            format!(
                "t = {} after t = {}",
                t.events[i].timestamp,
                t.events[i - 1].timestamp
            ),
        );
    }

    if let (Some(first), Some(last)) = (t.events.first(), t.events.last()) {
        let span = last.timestamp - first.timestamp;
        if !(t.elapsed_seconds.is_finite() && t.elapsed_seconds >= 0.0 && t.elapsed_seconds >= span)
        {
            report.push(
                None,
                ELAPSED_COVERS_EVENTS,
                format!("elapsed {} < event span {span}", t.elapsed_seconds),
            );
        }
    }

    if t.worker.ai_usage.is_some() && t.worker.kind != WorkerKind::Human {
        report.push(None, AI_USAGE_HUMAN_ONLY, "ai_usage set on an agent".into());
    }
    if let Some(c) = t.worker.cost_usd {
        if !(c.is_finite() && c >= 0.0) {
            report.push(None, COST_NONNEGATIVE, format!("cost_usd = {c}"));
        }
    }

    for flag in &t.flags {
        report.push(Some(flag.index), SCREENSHOT_RESOLVES, flag.reason.clone());
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn fixture() -> Trajectory {
        Trajectory::new(
            "t1",
            WorkerMeta::human("h1"),
            vec![
                RawEvent::click(0, 0.0, 10, 20).with_app("Excel"),
                RawEvent::keypress(0, 1.0, "hi").with_app("Excel"),
                RawEvent::scroll(0, 2.0, 3).with_app("Excel"),
            ],
        )
    }

    #[test]
    fn valid_fixture_has_empty_report() {
        assert!(validate_trajectory(&fixture()).is_empty());
    }

    #[test]
    fn empty_keypress_is_one_violation() {
        let mut t = fixture();
        t.events[1].args.insert("text".into(), String::new());
        let r = validate_trajectory(&t);
        assert_eq!(r.names(), ["keypress-nonempty"]);
        assert_eq!(r.violations[0].index, Some(1));
    }

    #[test]
    fn non_monotonic_reports_offending_index() {
        let mut t = fixture();
        t.events[0].timestamp = 0.0;
        t.events[1].timestamp = 2.0;
        t.events[2].timestamp = 1.0;
        assert_eq!(non_monotonic_indices(&t.events), [2]);
        let r = validate_trajectory(&t);
        assert!(r.names().contains(&"timestamps-monotonic"));
    }

    #[test]
    fn click_needs_target() {
        let mut t = fixture();
        t.events[0].args.clear();
        assert_eq!(validate_trajectory(&t).names(), ["click-target"]);
        t.events[0]
            .args
            .insert("element".into(), "Save button".into());
        assert!(validate_trajectory(&t).is_empty());
    }

    #[test]
    fn ai_usage_only_for_humans() {
        let mut t = fixture();
        t.worker = WorkerMeta::agent("a1", "openhands");
        t.worker.ai_usage = Some(AiUsage::Automation);
        assert_eq!(validate_trajectory(&t).names(), ["ai-usage-human-only"]);
    }

    #[test]
    fn negative_cost_rejected() {
        let mut t = fixture();
        t.worker.cost_usd = Some(-1.0);
        assert_eq!(validate_trajectory(&t).names(), ["cost-finite-nonnegative"]);
        t.worker.cost_usd = Some(f64::NAN);
        assert_eq!(validate_trajectory(&t).names(), ["cost-finite-nonnegative"]);
    }

    #[test]
    fn elapsed_may_exceed_span_but_not_undercut_it() {
        let mut t = fixture();
        t.elapsed_seconds = 10.0;
        assert!(validate_trajectory(&t).is_empty());
        t.elapsed_seconds = 1.5;
        assert_eq!(validate_trajectory(&t).names(), ["elapsed-covers-events"]);
    }

    #[test]
    fn unknown_kind_becomes_custom() {
        assert_eq!(
            EventKind::from_name("Swipe"),
            EventKind::Custom("swipe".into())
        );
        assert_eq!(EventKind::from_name("key_press"), EventKind::Keypress);
        assert_eq!(EventKind::from_name("Double-Click"), EventKind::DoubleClick);
        let json = serde_json::to_string(&EventKind::Custom("swipe".into())).unwrap();
        assert_eq!(json, "\"swipe\"");
        let back: EventKind = serde_json::from_str(&json).unwrap();
        assert_eq!(back, EventKind::Custom("swipe".into()));
    }

    #[test]
    fn every_known_kind_round_trips_by_name() {
        for k in EventKind::known() {
            assert_eq!(EventKind::from_name(k.as_str()), k);
        }
        assert_eq!(EventKind::known().count(), 21);
    }

    #[test]
    fn malformed_custom_kind_flagged() {
        let mut t = fixture();
        t.events[2].kind = EventKind::Custom("Swipe Left".into());
        t.events[2].args.clear();
        assert_eq!(validate_trajectory(&t).names(), ["custom-kind-normalized"]);
    }

    #[test]
    fn flags_surface_as_violations() {
        let mut t = fixture();
        t.flags.push(EventFlag {
            index: 1,
            reason: "missing frame".into(),
        });
        assert_eq!(validate_trajectory(&t).names(), ["screenshot-resolves"]);
    }
}
