//! Splits a trajectory into contiguous segments at large visual changes, then
//! merges adjacent segments the annotator judges to be on the same software.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::annotator::{ActionItem, Annotator, AnnotatorError, Screen};
use crate::frame::{frame_mse_with, Frame, FrameError, FrameSource, MismatchPolicy};
use crate::trace::Trajectory;

/// Bins of the intensity histogram attached to screens sent to the annotator.
pub const HISTOGRAM_BINS: usize = 16;

/// At most this many actions from each side accompany a same-software query.
pub const MAX_CONTEXT_ACTIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Boundary where MSE exceeds a fixed threshold in `(0, 1]`.
    Absolute { threshold: f64 },
    /// Boundary where MSE exceeds `mean + k·std` of the session's MSE series.
    Adaptive { k: f64 },
}

impl Default for BoundaryPolicy {
    fn default() -> Self {
        BoundaryPolicy::Adaptive { k: 2.0 }
    }
}

impl BoundaryPolicy {
    pub fn validate(&self) -> Result<(), SegmentError> {
        match *self {
            BoundaryPolicy::Absolute { threshold } if !(threshold > 0.0 && threshold <= 1.0) => {
                Err(SegmentError::Policy(alloc::format!(
                    "absolute threshold must be in (0, 1], got {threshold}"
                )))
            }
            BoundaryPolicy::Adaptive { k } if !(k > 0.0 && k.is_finite()) => Err(
                SegmentError::Policy(alloc::format!("adaptive k must be > 0, got {k}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCause {
    SessionStart,
    Visual,
}

/// Half-open event interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub boundary_cause: BoundaryCause,
    pub merged_from: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SegmentError {
    #[error("invalid boundary policy: {0}")]
    Policy(String),
    #[error("frame error at event {index}: {source}")]
    Frame { index: usize, source: FrameError },
    #[error("annotator failed on segments [{left_start}, {left_end}) + [{left_end}, {right_end}): {source}")]
    Annotator {
        left_start: usize,
        left_end: usize,
        right_end: usize,
        source: AnnotatorError,
    },
    #[error("segments do not partition [0, {len}): {detail}")]
    Partition { len: usize, detail: String },
}

/// MSE between the frame at `index` and the previous screenshot-bearing event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseSample {
    pub index: usize,
    pub mse: f64,
}

/// Indices of events with a usable screenshot (flagged events are skipped).
pub fn screenshot_events(t: &Trajectory) -> Vec<usize> {
    t.events
        .iter()
        .enumerate()
        .filter(|(i, e)| e.screenshot.is_some() && !t.flags.iter().any(|f| f.index == *i))
        .map(|(i, _)| i)
        .collect()
}

fn load(t: &Trajectory, frames: &dyn FrameSource, index: usize) -> Result<Frame, SegmentError> {
    let r = t.events[index]
        .screenshot
        .as_ref()
        .expect("screenshot_events only yields events with screenshots");
    frames
        .load(r)
        .map_err(|source| SegmentError::Frame { index, source })
}

/// MSE between consecutive screenshot-bearing events.
pub fn mse_series(
    t: &Trajectory,
    frames: &dyn FrameSource,
    mismatch: MismatchPolicy,
) -> Result<Vec<MseSample>, SegmentError> {
    let shots = screenshot_events(t);
    let mut out = Vec::with_capacity(shots.len().saturating_sub(1));
    let mut iter = shots.into_iter();
    let Some(first) = iter.next() else {
        return Ok(out);
    };
    let mut prev = load(t, frames, first)?;
    for index in iter {
        let cur = load(t, frames, index)?;
        let mse = frame_mse_with(&prev, &cur, mismatch)
            .map_err(|source| SegmentError::Frame { index, source })?;
        out.push(MseSample { index, mse });
        prev = cur;
    }
    Ok(out)
}

/// `mean + k·std` (population) of the series.
pub fn adaptive_threshold(series: &[MseSample], k: f64) -> f64 {
    let n = series.len() as f64;
    let mean = series.iter().map(|s| s.mse).sum::<f64>() / n;
    let var = series
        .iter()
        .map(|s| (s.mse - mean) * (s.mse - mean))
        .sum::<f64>()
        / n;
    mean + k * libm::sqrt(var)
}

/// Boundary event indices (sorted, deduplicated; event 0 is implicit and
/// never listed).
pub fn boundaries_from_series(series: &[MseSample], policy: &BoundaryPolicy) -> Vec<usize> {
    if series.is_empty() {
        return Vec::new();
    }
    let threshold = match *policy {
        BoundaryPolicy::Absolute { threshold } => threshold,
        BoundaryPolicy::Adaptive { k } => adaptive_threshold(series, k),
    };
    let mut out: Vec<usize> = series
        .iter()
        .filter(|s| s.mse > threshold && s.index > 0)
        .map(|s| s.index)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub fn detect_boundaries(
    t: &Trajectory,
    policy: &BoundaryPolicy,
    frames: &dyn FrameSource,
) -> Result<Vec<usize>, SegmentError> {
    detect_boundaries_with(t, policy, frames, MismatchPolicy::Error)
}

pub fn detect_boundaries_with(
    t: &Trajectory,
    policy: &BoundaryPolicy,
    frames: &dyn FrameSource,
    mismatch: MismatchPolicy,
) -> Result<Vec<usize>, SegmentError> {
    policy.validate()?;
    let series = mse_series(t, frames, mismatch)?;
    Ok(boundaries_from_series(&series, policy))
}

/// Segments over `[0, len)` starting at 0 and at each boundary. Events without
/// a screenshot stay with the preceding screenshot-bearing event's segment.
pub fn segments_from_boundaries(len: usize, boundaries: &[usize]) -> Vec<Segment> {
    if len == 0 {
        return Vec::new();
    }
    let mut starts: Vec<usize> = boundaries
        .iter()
        .copied()
        .filter(|&b| b > 0 && b < len)
        .collect();
    starts.sort_unstable();
    starts.dedup();
    let mut out = Vec::with_capacity(starts.len() + 1);
    let mut start = 0;
    let mut cause = BoundaryCause::SessionStart;
    for b in starts {
        out.push(Segment {
            start,
            end: b,
            boundary_cause: cause,
            merged_from: 1,
        });
        start = b;
        cause = BoundaryCause::Visual;
    }
    out.push(Segment {
        start,
        end: len,
        boundary_cause: cause,
        merged_from: 1,
    });
    out
}

/// Segments are non-empty, contiguous, in order and cover `[0, len)`.
pub fn check_partition(segments: &[Segment], len: usize) -> Result<(), SegmentError> {
    let fail = |detail: String| Err(SegmentError::Partition { len, detail });
    if len == 0 {
        return if segments.is_empty() {
            Ok(())
        } else {
            fail("segments over no events".into())
        };
    }
    let mut expect = 0;
    for s in segments {
        if s.start != expect {
            return fail(alloc::format!(
                "segment starts at {} but previous ended at {expect}",
                s.start
            ));
        }
        if s.end <= s.start {
            return fail(alloc::format!("empty segment at {}", s.start));
        }
        expect = s.end;
    }
    if expect != len {
        return fail(alloc::format!("coverage ends at {expect}"));
    }
    Ok(())
}

fn screen_at(
    t: &Trajectory,
    frames: &dyn FrameSource,
    shots: &[usize],
    seg: &Segment,
    last: bool,
) -> Result<Screen, SegmentError> {
    let mut in_seg = shots
        .iter()
        .copied()
        .filter(|&i| i >= seg.start && i < seg.end);
    let pick = if last {
        in_seg.next_back()
    } else {
        in_seg.next()
    };
    match pick {
        Some(i) => {
            let frame = load(t, frames, i)?;
            Ok(Screen {
                frame: t.events[i].screenshot.clone(),
                app: t.events[i].app.clone(),
                histogram: Some(frame.intensity_histogram(HISTOGRAM_BINS)),
            })
        }
        None => {
            let edge = if last { seg.end - 1 } else { seg.start };
            Ok(Screen {
                frame: None,
                app: t.events[edge].app.clone(),
                histogram: None,
            })
        }
    }
}

fn context(t: &Trajectory, seg: &Segment, tail: bool) -> Vec<ActionItem> {
    let events = &t.events[seg.start..seg.end];
    let events = if tail {
        &events[events.len().saturating_sub(MAX_CONTEXT_ACTIONS)..]
    } else {
        &events[..events.len().min(MAX_CONTEXT_ACTIONS)]
    };
    events.iter().map(ActionItem::from).collect()
}

/// Merges adjacent segments on a YES same-software verdict, scanning left to
/// right and repeating until a full pass merges nothing. Boundaries are only
/// ever deleted, never moved.
pub fn semantic_merge(
    t: &Trajectory,
    segments: &[Segment],
    annotator: &dyn Annotator,
    frames: &dyn FrameSource,
) -> Result<Vec<Segment>, SegmentError> {
    check_partition(segments, t.len())?;
    let shots = screenshot_events(t);
    let mut segs = segments.to_vec();
    loop {
        let mut changed = false;
        let mut i = 0;
        while i + 1 < segs.len() {
            let (l, r) = (segs[i], segs[i + 1]);
            let same = annotator
                .judge_same_software(
                    screen_at(t, frames, &shots, &l, true)?,
                    screen_at(t, frames, &shots, &r, false)?,
                    context(t, &l, true),
                    context(t, &r, false),
                )
                .map_err(|source| SegmentError::Annotator {
                    left_start: l.start,
                    left_end: l.end,
                    right_end: r.end,
                    source,
                })?;
            if same {
                segs[i].end = r.end;
                segs[i].merged_from += r.merged_from;
                segs.remove(i + 1);
                changed = true;
            } else {
                i += 1;
            }
        }
        if !changed {
            break;
        }
    }
    check_partition(&segs, t.len())?;
    Ok(segs)
}

/// Visual boundary detection followed by semantic merging.
pub fn segment(
    t: &Trajectory,
    policy: &BoundaryPolicy,
    annotator: &dyn Annotator,
    frames: &dyn FrameSource,
) -> Result<Vec<Segment>, SegmentError> {
    segment_with(t, policy, MismatchPolicy::Error, annotator, frames)
}

pub fn segment_with(
    t: &Trajectory,
    policy: &BoundaryPolicy,
    mismatch: MismatchPolicy,
    annotator: &dyn Annotator,
    frames: &dyn FrameSource,
) -> Result<Vec<Segment>, SegmentError> {
    let boundaries = detect_boundaries_with(t, policy, frames, mismatch)?;
    let segs = segments_from_boundaries(t.len(), &boundaries);
    check_partition(&segs, t.len())?;
    semantic_merge(t, &segs, annotator, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::StubAnnotator;
    use crate::frame::MemoryFrames;
    use crate::trace::{RawEvent, WorkerMeta};
    use alloc::format;
    use alloc::vec;

    fn session(apps: &[&str], colors: &[[f32; 3]]) -> (Trajectory, MemoryFrames) {
        let mut frames = MemoryFrames::new();
        let events = apps
            .iter()
            .zip(colors)
            .enumerate()
            .map(|(i, (app, rgb))| {
                let path = format!("f{i}.png");
                frames.insert(path.clone(), Frame::filled(8, 8, *rgb));
                RawEvent::click(i, i as f64, 1, 1)
                    .with_app(app)
                    .with_screenshot(&path)
            })
            .collect();
        (Trajectory::new("t", WorkerMeta::human("h"), events), frames)
    }

    #[test]
    fn static_screencast_has_no_boundaries() {
        let (t, f) = session(&["A"; 10], &[[0.2; 3]; 10]);
        let b = detect_boundaries(&t, &BoundaryPolicy::default(), &f).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn fewer_than_two_frames_is_empty_not_error() {
        let (mut t, f) = session(&["A"], &[[0.2; 3]]);
        assert!(detect_boundaries(&t, &BoundaryPolicy::default(), &f)
            .unwrap()
            .is_empty());
        t.events[0].screenshot = None;
        assert!(detect_boundaries(&t, &BoundaryPolicy::default(), &f)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn absolute_policy_thresholds() {
        let mut colors = [[0.0f32; 3]; 6];
        colors[3] = [0.5; 3];
        let (t, f) = session(&["A"; 6], &colors);
        let b = detect_boundaries(&t, &BoundaryPolicy::Absolute { threshold: 0.2 }, &f).unwrap();
        assert_eq!(b, [3, 4]);
        let b = detect_boundaries(&t, &BoundaryPolicy::Absolute { threshold: 0.25 }, &f).unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn chrome_to_vscode_switch_is_a_boundary() {
        let apps = ["Google Chrome"; 5]
            .iter()
            .chain(["VSCode"; 5].iter())
            .copied()
            .collect::<Vec<_>>();
        let mut colors = vec![[0.95f32, 0.95, 0.95]; 5];
        colors.extend(vec![[0.12f32, 0.12, 0.15]; 5]);
        let (t, f) = session(&apps, &colors);
        let b = detect_boundaries(&t, &BoundaryPolicy::default(), &f).unwrap();
        assert_eq!(b, [5]);
        let segs = segment(
            &t,
            &BoundaryPolicy::default(),
            &StubAnnotator::default(),
            &f,
        )
        .unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(
            (segs[1].start, segs[1].boundary_cause),
            (5, BoundaryCause::Visual)
        );
    }

    #[test]
    fn zoom_split_is_merged_back() {
        let mut t_events = Vec::new();
        let mut frames = MemoryFrames::new();
        for i in 0..8 {
            let path = format!("z{i}.png");
            let mut f = Frame::filled(8, 8, [0.9; 3]);
            if i >= 4 {
                f.fill_rect(0, 0, 8, 8, [0.1; 3]);
            }
            frames.insert(path.clone(), f);
            let kind = if i == 4 {
                RawEvent::new(i, i as f64, crate::trace::EventKind::Zoom).with_arg("factor", "2")
            } else {
                RawEvent::scroll(i, i as f64, 1)
            };
            t_events.push(kind.with_app("Google Chrome").with_screenshot(&path));
        }
        let t = Trajectory::new("t", WorkerMeta::human("h"), t_events);
        let b = detect_boundaries(&t, &BoundaryPolicy::default(), &frames).unwrap();
        assert_eq!(b, [4]);
        let segs = segment(
            &t,
            &BoundaryPolicy::default(),
            &StubAnnotator::default(),
            &frames,
        )
        .unwrap();
        assert_eq!(
            segs,
            [Segment {
                start: 0,
                end: 8,
                boundary_cause: BoundaryCause::SessionStart,
                merged_from: 2
            }]
        );
    }

    #[test]
    fn events_without_screenshots_inherit_preceding_segment() {
        let (mut t, f) = session(
            &["A", "A", "B", "B"],
            &[[0.0; 3], [0.0; 3], [1.0; 3], [1.0; 3]],
        );
        t.events
            .insert(2, RawEvent::keypress(0, 1.5, "x").with_app("A"));
        for (i, e) in t.events.iter_mut().enumerate() {
            e.index = i;
        }
        let b = detect_boundaries(&t, &BoundaryPolicy::Absolute { threshold: 0.5 }, &f).unwrap();
        assert_eq!(b, [3]);
    }

    #[test]
    fn partition_checker_rejects_gaps() {
        let seg = |s, e| Segment {
            start: s,
            end: e,
            boundary_cause: BoundaryCause::Visual,
            merged_from: 1,
        };
        assert!(check_partition(&[seg(0, 2), seg(2, 5)], 5).is_ok());
        assert!(check_partition(&[seg(0, 2), seg(3, 5)], 5).is_err());
        assert!(check_partition(&[seg(0, 2)], 5).is_err());
        assert!(check_partition(&[seg(0, 0), seg(0, 5)], 5).is_err());
    }

    #[test]
    fn policy_validation() {
        assert!(BoundaryPolicy::Absolute { threshold: 0.0 }
            .validate()
            .is_err());
        assert!(BoundaryPolicy::Absolute { threshold: 1.0 }
            .validate()
            .is_ok());
        assert!(BoundaryPolicy::Adaptive { k: 0.0 }.validate().is_err());
        let p: BoundaryPolicy = serde_json::from_str(r#"{"mode":"adaptive","k":3.0}"#).unwrap();
        assert_eq!(p, BoundaryPolicy::Adaptive { k: 3.0 });
    }

    struct Failing;
    impl Annotator for Failing {
        fn id(&self) -> String {
            "failing".into()
        }
        fn call(
            &self,
            _: &crate::annotator::AnnotatorRequest,
        ) -> Result<crate::annotator::AnnotatorResponse, AnnotatorError> {
            Err(AnnotatorError::Backend("down".into()))
        }
    }

    #[test]
    fn annotator_failure_names_segment_pair() {
        let (t, f) = session(&["A", "B"], &[[0.0; 3], [1.0; 3]]);
        let segs = segments_from_boundaries(2, &[1]);
        let err = semantic_merge(&t, &segs, &Failing, &f).unwrap_err();
        assert!(matches!(
            err,
            SegmentError::Annotator {
                left_start: 0,
                left_end: 1,
                right_end: 2,
                ..
            }
        ));
    }
}
