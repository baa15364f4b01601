//! Raw-activity cleanup: rapid click pairs become double-clicks, and runs of
//! consecutive keypresses or scrolls collapse into single actions.
//!
//! Passes run in a fixed order (double-click detection first, so click timing
//! is judged on raw events) and the composition is idempotent.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::trace::{EventKind, RawEvent, Trajectory};

/// Slack applied to time comparisons so that a gap written as exactly the
/// window (e.g. 1.0 → 1.1) is not lost to binary rounding.
const TIME_EPS: f64 = 1e-9;

/// A non-negative limit or the `"unbounded"` sentinel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Limit(f64),
    Unbounded,
}

impl Bound {
    pub fn admits(self, value: f64) -> bool {
        match self {
            Bound::Unbounded => true,
            Bound::Limit(l) => value <= l + TIME_EPS,
        }
    }
}

impl Serialize for Bound {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Bound::Limit(v) => s.serialize_f64(*v),
            Bound::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for Bound {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Bound::Limit(v)),
            Repr::Text(s) if s == "unbounded" => Ok(Bound::Unbounded),
            Repr::Text(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"unbounded\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Maximum gap, in seconds, between two clicks merged into a double-click (inclusive).
    pub double_click_window: f64,
    /// Maximum pointer travel, in pixels, between the two clicks.
    pub double_click_radius: Bound,
    /// Maximum pause, in seconds, inside a merged keypress run.
    pub keypress_gap_limit: Bound,
    /// Break scroll runs when the scroll direction flips.
    pub scroll_direction_sensitive: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            double_click_window: 0.1,
            double_click_radius: Bound::Limit(5.0),
            keypress_gap_limit: Bound::Unbounded,
            scroll_direction_sensitive: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("double_click_window must be > 0, got {0}")]
    Window(f64),
    #[error("{name} must be >= 0 or unbounded, got {value}")]
    Negative { name: &'static str, value: f64 },
}

impl PreprocessConfig {
    /// The literal rule: any two clicks within the window, regardless of position.
    pub fn literal() -> Self {
        PreprocessConfig {
            double_click_radius: Bound::Unbounded,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.double_click_window > 0.0 && self.double_click_window.is_finite()) {
            return Err(ConfigError::Window(self.double_click_window));
        }
        for (name, b) in [
            ("double_click_radius", self.double_click_radius),
            ("keypress_gap_limit", self.keypress_gap_limit),
        ] {
            if let Bound::Limit(v) = b {
                if v.is_nan() || v < 0.0 {
                    return Err(ConfigError::Negative { name, value: v });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReductionStats {
    pub events_before: usize,
    pub events_after: usize,
    pub reduction_fraction: f64,
}

impl ReductionStats {
    pub fn new(before: usize, after: usize) -> Self {
        let reduction_fraction = if before == 0 {
            0.0
        } else {
            1.0 - after as f64 / before as f64
        };
        ReductionStats {
            events_before: before,
            events_after: after,
            reduction_fraction,
        }
    }
}

fn same_target(a: &RawEvent, b: &RawEvent, radius: Bound) -> bool {
    if radius == Bound::Unbounded {
        return true;
    }
    match (a.coords(), b.coords()) {
        (Some((ax, ay)), Some((bx, by))) => {
            let dx = (ax - bx) as f64;
            let dy = (ay - by) as f64;
            radius.admits(libm::sqrt(dx * dx + dy * dy))
        }
        _ => matches!((a.element(), b.element()), (Some(x), Some(y)) if x == y),
    }
}

/// Greedy left-to-right pairing of consecutive clicks into double-clicks.
/// A produced double-click is never merged again.
pub fn detect_double_clicks(events: &[RawEvent], cfg: &PreprocessConfig) -> Vec<RawEvent> {
    let window = Bound::Limit(cfg.double_click_window);
    let mut out = Vec::with_capacity(events.len());
    let mut i = 0;
    while i < events.len() {
        let first = &events[i];
        if let Some(second) = events.get(i + 1) {
            if first.kind == EventKind::Click
                && second.kind == EventKind::Click
                && window.admits(second.timestamp - first.timestamp)
                && same_target(first, second, cfg.double_click_radius)
            {
                let mut merged = first.clone();
                merged.kind = EventKind::DoubleClick;
                merged.screenshot = second.screenshot.clone().or(merged.screenshot);
                out.push(merged);
                i += 2;
                continue;
            }
        }
        out.push(first.clone());
        i += 1;
    }
    out
}

/// Collapses every maximal keypress run into one keypress carrying the
/// concatenated text, the first timestamp and the last screenshot.
pub fn merge_keypress_runs(events: &[RawEvent], cfg: &PreprocessConfig) -> Vec<RawEvent> {
    let mut out: Vec<RawEvent> = Vec::with_capacity(events.len());
    let mut prev_t = f64::NEG_INFINITY;
    let mut open = false;
    for e in events {
        let joins = open
            && e.kind == EventKind::Keypress
            && cfg.keypress_gap_limit.admits(e.timestamp - prev_t);
        if joins {
            let run = out.last_mut().expect("open run has a head");
            let mut text = run.text().unwrap_or_default().to_string();
            text.push_str(e.text().unwrap_or_default());
            run.args.insert("text".into(), text);
            if e.screenshot.is_some() {
                run.screenshot = e.screenshot.clone();
            }
        } else {
            out.push(e.clone());
            open = e.kind == EventKind::Keypress;
        }
        prev_t = e.timestamp;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Vertical(bool),
    Horizontal(bool),
}

fn direction((dx, dy): (i64, i64)) -> Option<Direction> {
    if dy != 0 {
        Some(Direction::Vertical(dy > 0))
    } else if dx != 0 {
        Some(Direction::Horizontal(dx > 0))
    } else {
        None
    }
}

fn flips(a: Option<Direction>, b: Option<Direction>) -> bool {
    match (a, b) {
        (Some(Direction::Vertical(x)), Some(Direction::Vertical(y))) => x != y,
        (Some(Direction::Horizontal(x)), Some(Direction::Horizontal(y))) => x != y,
        _ => false,
    }
}

/// Collapses every maximal scroll run into one scroll whose `dx`/`dy` are the
/// signed sums of the run. Scrolls with unparsable deltas are left alone.
pub fn merge_scroll_runs(events: &[RawEvent], cfg: &PreprocessConfig) -> Vec<RawEvent> {
    struct Run {
        dx: i64,
        dy: i64,
        has_dx: bool,
        has_dy: bool,
        dir: Option<Direction>,
    }

    let mut out: Vec<RawEvent> = Vec::with_capacity(events.len());
    let mut run: Option<Run> = None;
    for e in events {
        let delta = if e.kind == EventKind::Scroll {
            e.scroll_delta()
        } else {
            None
        };
        let Some((dx, dy)) = delta else {
            run = None;
            out.push(e.clone());
            continue;
        };
        let d = direction((dx, dy));
        match run.as_mut() {
            Some(r) if !(cfg.scroll_direction_sensitive && flips(r.dir, d)) => {
                r.dx += dx;
                r.dy += dy;
                r.has_dx |= e.args.contains_key("dx");
                r.has_dy |= e.args.contains_key("dy");
                r.dir = r.dir.or(d);
                let head = out.last_mut().expect("open run has a head");
                if r.has_dx {
                    head.args.insert("dx".into(), r.dx.to_string());
                }
                if r.has_dy {
                    head.args.insert("dy".into(), r.dy.to_string());
                }
                if e.screenshot.is_some() {
                    head.screenshot = e.screenshot.clone();
                }
            }
            _ => {
                run = Some(Run {
                    dx,
                    dy,
                    has_dx: e.args.contains_key("dx"),
                    has_dy: e.args.contains_key("dy"),
                    dir: d,
                });
                out.push(e.clone());
            }
        }
    }
    out
}

const PROVENANCE_NOTE: &str = "preprocessed(double_click,keypress_runs,scroll_runs)";

/// Applies double-click detection, keypress merging and scroll merging, in
/// that order, and renumbers the surviving events.
pub fn preprocess(t: &Trajectory, cfg: &PreprocessConfig) -> (Trajectory, ReductionStats) {
    let events = detect_double_clicks(&t.events, cfg);
    let events = merge_keypress_runs(&events, cfg);
    let mut events = merge_scroll_runs(&events, cfg);
    for (i, e) in events.iter_mut().enumerate() {
        e.index = i;
    }

    let stats = ReductionStats::new(t.events.len(), events.len());
    let mut out = t.clone();
    out.events = events;
    out.flags.clear();
    if !out.provenance.contains(PROVENANCE_NOTE) {
        if !out.provenance.is_empty() {
            out.provenance.push_str("; ");
        }
        out.provenance.push_str(PROVENANCE_NOTE);
    }
    (out, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::WorkerMeta;
    use alloc::vec;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig::default()
    }

    fn texts(events: &[RawEvent]) -> Vec<&str> {
        events.iter().map(|e| e.text().unwrap_or("")).collect()
    }

    #[test]
    fn keypress_pair_concatenates() {
        let ev = vec![
            RawEvent::keypress(0, 0.0, "h"),
            RawEvent::keypress(1, 0.2, "i"),
        ];
        let out = merge_keypress_runs(&ev, &cfg());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].text(), Some("hi"));
        assert_eq!(out[0].timestamp, 0.0);
    }

    #[test]
    fn interleaved_click_breaks_run() {
        let ev = vec![
            RawEvent::keypress(0, 0.0, "a"),
            RawEvent::click(1, 0.5, 1, 1),
            RawEvent::keypress(2, 1.0, "b"),
        ];
        assert_eq!(merge_keypress_runs(&ev, &cfg()), ev);
    }

    #[test]
    fn typed_question_becomes_one_keypress() {
        let phrase = "how ai agents do human work?";
        let ev: Vec<RawEvent> = phrase
            .chars()
            .enumerate()
            .map(|(i, c)| RawEvent::keypress(i, i as f64 * 0.15, &c.to_string()))
            .collect();
        let out = merge_keypress_runs(&ev, &cfg());
        assert_eq!(texts(&out), [phrase]);
    }

    #[test]
    fn keypress_gap_limit_splits_runs() {
        let ev = vec![
            RawEvent::keypress(0, 0.0, "a"),
            RawEvent::keypress(1, 0.5, "b"),
            RawEvent::keypress(2, 5.0, "c"),
        ];
        let c = PreprocessConfig {
            keypress_gap_limit: Bound::Limit(1.0),
            ..cfg()
        };
        assert_eq!(texts(&merge_keypress_runs(&ev, &c)), ["ab", "c"]);
        assert_eq!(texts(&merge_keypress_runs(&ev, &cfg())), ["abc"]);
    }

    #[test]
    fn keypress_run_keeps_last_screenshot() {
        let ev = vec![
            RawEvent::keypress(0, 0.0, "a").with_screenshot("f0.png"),
            RawEvent::keypress(1, 0.1, "b").with_screenshot("f1.png"),
        ];
        let out = merge_keypress_runs(&ev, &cfg());
        assert_eq!(out[0].screenshot.as_ref().unwrap().path, "f1.png");
    }

    #[test]
    fn scrolls_sum() {
        let ev = vec![RawEvent::scroll(0, 0.0, 3), RawEvent::scroll(1, 0.1, 2)];
        let out = merge_scroll_runs(&ev, &cfg());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].scroll_delta(), Some((0, 5)));
    }

    #[test]
    fn direction_sensitive_sign_break() {
        let ev = vec![RawEvent::scroll(0, 0.0, 3), RawEvent::scroll(1, 0.1, -3)];
        let c = PreprocessConfig {
            scroll_direction_sensitive: true,
            ..cfg()
        };
        assert_eq!(merge_scroll_runs(&ev, &c).len(), 2);
        let agnostic = merge_scroll_runs(&ev, &cfg());
        assert_eq!(agnostic.len(), 1);
        assert_eq!(agnostic[0].scroll_delta(), Some((0, 0)));
    }

    #[test]
    fn horizontal_scroll_keeps_dx() {
        let ev = vec![
            RawEvent::new(0, 0.0, EventKind::Scroll).with_arg("dx", 4),
            RawEvent::new(1, 0.1, EventKind::Scroll).with_arg("dx", 1),
        ];
        let out = merge_scroll_runs(&ev, &cfg());
        assert_eq!(out[0].args.get("dx").map(String::as_str), Some("5"));
        assert!(!out[0].args.contains_key("dy"));
    }

    #[test]
    fn close_clicks_become_double_click() {
        let ev = vec![
            RawEvent::click(0, 1.00, 5, 5),
            RawEvent::click(1, 1.05, 5, 5),
        ];
        let out = detect_double_clicks(&ev, &cfg());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].kind, EventKind::DoubleClick);
        assert_eq!(out[0].timestamp, 1.00);
        assert_eq!(out[0].coords(), Some((5, 5)));
    }

    #[test]
    fn slow_clicks_stay_separate() {
        let ev = vec![
            RawEvent::click(0, 1.00, 5, 5),
            RawEvent::click(1, 1.15, 5, 5),
        ];
        assert_eq!(detect_double_clicks(&ev, &cfg()), ev);
    }

    #[test]
    fn triple_click_pairs_greedily() {
        let ev = vec![
            RawEvent::click(0, 1.00, 5, 5),
            RawEvent::click(1, 1.05, 5, 5),
            RawEvent::click(2, 1.09, 5, 5),
        ];
        let out = detect_double_clicks(&ev, &cfg());
        let kinds: Vec<_> = out.iter().map(|e| (e.kind.clone(), e.timestamp)).collect();
        assert_eq!(
            kinds,
            [(EventKind::DoubleClick, 1.00), (EventKind::Click, 1.09)]
        );
    }

    #[test]
    fn window_is_inclusive() {
        let at = |dt: f64| {
            vec![
                RawEvent::click(0, 2.0, 0, 0),
                RawEvent::click(1, 2.0 + dt, 0, 0),
            ]
        };
        assert_eq!(detect_double_clicks(&at(0.1), &cfg()).len(), 1);
        assert_eq!(detect_double_clicks(&at(0.101), &cfg()).len(), 2);
        let ev = vec![RawEvent::click(0, 1.0, 0, 0), RawEvent::click(1, 1.1, 0, 0)];
        assert_eq!(detect_double_clicks(&ev, &cfg()).len(), 1);
    }

    #[test]
    fn radius_blocks_distant_clicks_unless_unbounded() {
        let ev = vec![
            RawEvent::click(0, 1.0, 0, 0),
            RawEvent::click(1, 1.05, 100, 0),
        ];
        assert_eq!(detect_double_clicks(&ev, &cfg()).len(), 2);
        assert_eq!(
            detect_double_clicks(&ev, &PreprocessConfig::literal()).len(),
            1
        );
    }

    #[test]
    fn element_clicks_merge_on_same_element() {
        let el = |i, t, name: &str| RawEvent::new(i, t, EventKind::Click).with_arg("element", name);
        let same = vec![el(0, 1.0, "Save"), el(1, 1.05, "Save")];
        let diff = vec![el(0, 1.0, "Save"), el(1, 1.05, "Open")];
        assert_eq!(detect_double_clicks(&same, &cfg()).len(), 1);
        assert_eq!(detect_double_clicks(&diff, &cfg()).len(), 2);
    }

    #[test]
    fn preprocess_is_idempotent_and_counts() {
        let t = Trajectory::new(
            "t",
            WorkerMeta::human("h"),
            vec![
                RawEvent::click(0, 0.0, 1, 1),
                RawEvent::click(0, 0.05, 1, 1),
                RawEvent::keypress(0, 1.0, "a"),
                RawEvent::keypress(0, 1.1, "b"),
                RawEvent::scroll(0, 2.0, 1),
                RawEvent::scroll(0, 2.1, 1),
            ],
        );
        let (once, stats) = preprocess(&t, &cfg());
        assert_eq!(stats.events_before, 6);
        assert_eq!(stats.events_after, 3);
        assert_eq!(stats.reduction_fraction, 0.5);
        let idx: Vec<usize> = once.events.iter().map(|e| e.index).collect();
        assert_eq!(idx, [0, 1, 2]);
        let (twice, stats2) = preprocess(&once, &cfg());
        assert_eq!(twice, once);
        assert_eq!(stats2.reduction_fraction, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        let bad = PreprocessConfig {
            double_click_window: 0.0,
            ..cfg()
        };
        assert!(bad.validate().is_err());
        let bad = PreprocessConfig {
            double_click_radius: Bound::Limit(-1.0),
            ..cfg()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn bound_serde() {
        let c: PreprocessConfig =
            serde_json::from_str(r#"{"double_click_radius":"unbounded","keypress_gap_limit":2.5}"#)
                .unwrap();
        assert_eq!(c.double_click_radius, Bound::Unbounded);
        assert_eq!(c.keypress_gap_limit, Bound::Limit(2.5));
        assert_eq!(c.double_click_window, 0.1);
        assert!(serde_json::from_str::<Bound>("\"forever\"").is_err());
    }
}
