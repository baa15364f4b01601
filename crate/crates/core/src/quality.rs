//! Workflow quality: per-step action-goal consistency and modularity verdicts
//! from a judge, and Cohen's kappa between judge and manual labels.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::annotator::{ActionItem, Annotator, AnnotatorError, Screen};
use crate::hierarchy::{HierarchyError, Span, Step, Workflow};
use crate::trace::Trajectory;

/// Screenshots are sampled every this many actions within a step.
pub const DEFAULT_STRIDE: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QualityError {
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("judge failed on step {step}: {source}")]
    Annotator { step: usize, source: AnnotatorError },
    #[error("label lists differ in length: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("no labels to compare")]
    Empty,
    #[error("workflow covers {workflow} events but trajectory has {trajectory}")]
    TrajectoryMismatch { workflow: usize, trajectory: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepVerdict {
    pub step: usize,
    pub span: Span,
    pub goal: String,
    pub verdict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub verdicts: Vec<StepVerdict>,
    pub score: f64,
}

/// Mean of the YES indicators (YES → 1, NO → 0); zero for no verdicts.
pub fn mean_score(verdicts: impl IntoIterator<Item = bool>) -> f64 {
    let (mut yes, mut n) = (0usize, 0usize);
    for v in verdicts {
        n += 1;
        yes += v as usize;
    }
    if n == 0 {
        0.0
    } else {
        yes as f64 / n as f64
    }
}

fn steps_of(w: &Workflow, t: &Trajectory, level: u32) -> Result<Vec<Step>, QualityError> {
    if w.event_count() != t.len() {
        return Err(QualityError::TrajectoryMismatch {
            workflow: w.event_count(),
            trajectory: t.len(),
        });
    }
    Ok(w.steps(level)?)
}

fn sampled_states(t: &Trajectory, span: Span, stride: usize) -> Vec<Screen> {
    let stride = stride.max(1);
    t.events[span.start..span.end]
        .iter()
        .step_by(stride)
        .filter_map(|e| {
            e.screenshot.as_ref().map(|f| Screen {
                frame: Some(f.clone()),
                app: e.app.clone(),
                histogram: None,
            })
        })
        .collect()
}

/// Asks the judge whether each step's actions serve its goal. Steps without
/// actions are YES without a query.
pub fn judge_consistency(
    w: &Workflow,
    t: &Trajectory,
    level: u32,
    annotator: &dyn Annotator,
    stride: usize,
) -> Result<JudgeReport, QualityError> {
    let steps = steps_of(w, t, level)?;
    let mut verdicts = Vec::with_capacity(steps.len());
    for (i, s) in steps.into_iter().enumerate() {
        let actions: Vec<ActionItem> = t.events[s.span.start..s.span.end]
            .iter()
            .map(ActionItem::from)
            .collect();
        let verdict = if actions.is_empty() {
            true
        } else {
            annotator
                .judge_consistency(s.goal.clone(), actions, sampled_states(t, s.span, stride))
                .map_err(|source| QualityError::Annotator { step: i, source })?
        };
        verdicts.push(StepVerdict {
            step: i,
            span: s.span,
            goal: s.goal,
            verdict,
        });
    }
    let score = mean_score(verdicts.iter().map(|v| v.verdict));
    Ok(JudgeReport { verdicts, score })
}

/// Asks the judge whether each step is distinguishable from its neighbours,
/// passing the full ordered goal list and the focal index.
pub fn judge_modularity(
    w: &Workflow,
    level: u32,
    annotator: &dyn Annotator,
) -> Result<JudgeReport, QualityError> {
    let steps = w.steps(level)?;
    let goals: Vec<String> = steps.iter().map(|s| s.goal.clone()).collect();
    let mut verdicts = Vec::with_capacity(steps.len());
    for (i, s) in steps.into_iter().enumerate() {
        let verdict = annotator
            .judge_modularity(goals.clone(), i)
            .map_err(|source| QualityError::Annotator { step: i, source })?;
        verdicts.push(StepVerdict {
            step: i,
            span: s.span,
            goal: s.goal,
            verdict,
        });
    }
    let score = mean_score(verdicts.iter().map(|v| v.verdict));
    Ok(JudgeReport { verdicts, score })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepQuality {
    pub step: usize,
    pub span: Span,
    pub goal: String,
    pub consistency: bool,
    pub modularity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub level: u32,
    pub per_step: Vec<StepQuality>,
    pub consistency_score: f64,
    pub modularity_score: f64,
    pub state_sample_stride: usize,
}

impl QualityReport {
    pub fn consistency_labels(&self) -> Vec<bool> {
        self.per_step.iter().map(|s| s.consistency).collect()
    }

    pub fn modularity_labels(&self) -> Vec<bool> {
        self.per_step.iter().map(|s| s.modularity).collect()
    }
}

/// Runs both judges at `level` and assembles the report.
pub fn assess(
    w: &Workflow,
    t: &Trajectory,
    level: u32,
    annotator: &dyn Annotator,
    stride: usize,
) -> Result<QualityReport, QualityError> {
    let c = judge_consistency(w, t, level, annotator, stride)?;
    let m = judge_modularity(w, level, annotator)?;
    let per_step = c
        .verdicts
        .into_iter()
        .zip(m.verdicts)
        .map(|(c, m)| StepQuality {
            step: c.step,
            span: c.span,
            goal: c.goal,
            consistency: c.verdict,
            modularity: m.verdict,
        })
        .collect();
    Ok(QualityReport {
        level,
        per_step,
        consistency_score: c.score,
        modularity_score: m.score,
        state_sample_stride: stride,
    })
}

/// Cohen's kappa; `Undefined` when chance agreement is 1 (neither rater varies
/// in a way that leaves room for disagreement).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kappa {
    Value(f64),
    Undefined,
}

impl Kappa {
    pub fn value(self) -> Option<f64> {
        match self {
            Kappa::Value(v) => Some(v),
            Kappa::Undefined => None,
        }
    }
}

impl fmt::Display for Kappa {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kappa::Value(v) => write!(f, "{v}"),
            Kappa::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Kappa {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Kappa::Value(v) => s.serialize_f64(*v),
            Kappa::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Kappa {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Kappa::Value(v)),
            Repr::Text(s) if s == "undefined" => Ok(Kappa::Undefined),
            Repr::Text(s) => Err(serde::de::Error::custom(alloc::format!("bad kappa {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa: Kappa,
    pub n: usize,
    /// `[[yes/yes, yes/no], [no/yes, no/no]]`, rows rater A, columns rater B.
    pub confusion: [[usize; 2]; 2],
}

/// Kappa from a 2×2 confusion matrix, evaluated in integers as
/// `(n·agree − Σ marginal products) / (n² − Σ marginal products)` so that
/// hand-computable cases come out exact.
pub fn kappa_from_confusion(confusion: [[usize; 2]; 2]) -> Kappa {
    let [[yy, yn], [ny, nn]] = confusion.map(|r| r.map(|v| v as u128));
    let n = yy + yn + ny + nn;
    let agree = yy + nn;
    let chance = (yy + yn) * (yy + ny) + (ny + nn) * (yn + nn);
    let denom = n * n - chance;
    if n == 0 || denom == 0 {
        return Kappa::Undefined;
    }
    let num = (n * agree) as f64 - chance as f64;
    Kappa::Value(num / denom as f64)
}

pub fn cohens_kappa(a: &[bool], b: &[bool]) -> Result<AgreementReport, QualityError> {
    if a.len() != b.len() {
        return Err(QualityError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.is_empty() {
        return Err(QualityError::Empty);
    }
    let mut confusion = [[0usize; 2]; 2];
    for (&x, &y) in a.iter().zip(b) {
        confusion[!x as usize][!y as usize] += 1;
    }
    Ok(AgreementReport {
        kappa: kappa_from_confusion(confusion),
        n: a.len(),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::StubAnnotator;
    use crate::hierarchy::{induce, HierarchyConfig};
    use crate::segment::segments_from_boundaries;
    use crate::trace::{RawEvent, WorkerMeta};

    fn labels(counts: (usize, usize, usize, usize)) -> (Vec<bool>, Vec<bool>) {
        let (yy, yn, ny, nn) = counts;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (n, x, y) in [
            (yy, true, true),
            (yn, true, false),
            (ny, false, true),
            (nn, false, false),
        ] {
            a.extend(core::iter::repeat_n(x, n));
            b.extend(core::iter::repeat_n(y, n));
        }
        (a, b)
    }

    #[test]
    fn kappa_identical_is_one() {
        let a = [true, false, true, true, false];
        assert_eq!(cohens_kappa(&a, &a).unwrap().kappa, Kappa::Value(1.0));
    }

    #[test]
    fn kappa_hand_computed() {
        // p_o = 35/50 = 0.7, p_e = 0.5·0.6 + 0.5·0.4 = 0.5
        let (a, b) = labels((20, 5, 10, 15));
        let r = cohens_kappa(&a, &b).unwrap();
        assert_eq!(r.confusion, [[20, 5], [10, 15]]);
        assert_eq!(r.kappa, Kappa::Value(0.4));
        assert_eq!(r.n, 50);
    }

    #[test]
    fn kappa_degenerate_is_undefined() {
        let a = [true; 6];
        assert_eq!(cohens_kappa(&a, &a).unwrap().kappa, Kappa::Undefined);
    }

    #[test]
    fn kappa_errors() {
        assert!(matches!(
            cohens_kappa(&[true], &[]),
            Err(QualityError::LengthMismatch { .. })
        ));
        assert!(matches!(cohens_kappa(&[], &[]), Err(QualityError::Empty)));
    }

    #[test]
    fn kappa_serde() {
        assert_eq!(
            serde_json::to_string(&Kappa::Undefined).unwrap(),
            "\"undefined\""
        );
        let k: Kappa = serde_json::from_str("0.25").unwrap();
        assert_eq!(k, Kappa::Value(0.25));
    }

    fn workflow(apps: &[&str], bounds: &[usize]) -> (Workflow, Trajectory) {
        let events = apps
            .iter()
            .enumerate()
            .map(|(i, a)| RawEvent::keypress(i, i as f64, "x").with_app(a))
            .collect();
        let t = Trajectory::new("task", WorkerMeta::human("h"), events);
        let segs = segments_from_boundaries(t.len(), bounds);
        let wf = induce(
            &t,
            &segs,
            &HierarchyConfig::default(),
            &StubAnnotator::default(),
        )
        .unwrap();
        (wf, t)
    }

    #[test]
    fn modularity_all_distinct_scores_one() {
        let (wf, _) = workflow(&["A", "B", "C"], &[1, 2]);
        let r = judge_modularity(&wf, 2, &StubAnnotator::default()).unwrap();
        assert_eq!(r.score, 1.0);
    }

    #[test]
    fn modularity_adjacent_identical_both_no() {
        let (wf, _) = workflow(&["A", "A", "C"], &[1, 2]);
        let r = judge_modularity(&wf, 2, &StubAnnotator::default()).unwrap();
        let v: Vec<bool> = r.verdicts.iter().map(|v| v.verdict).collect();
        assert_eq!(v, [false, false, true]);
        assert_eq!(r.score, 1.0 / 3.0);
    }

    #[test]
    fn consistency_of_stub_goals() {
        let (wf, t) = workflow(&["Excel", "Chrome"], &[1]);
        let r = judge_consistency(&wf, &t, 2, &StubAnnotator::default(), DEFAULT_STRIDE).unwrap();
        assert_eq!(r.score, 1.0);
        assert_eq!(r.verdicts.len(), 2);
    }

    #[test]
    fn assess_combines_judges() {
        let (wf, t) = workflow(&["A", "A", "C"], &[1, 2]);
        let q = assess(&wf, &t, 2, &StubAnnotator::default(), 10).unwrap();
        assert_eq!(q.modularity_labels(), [false, false, true]);
        assert_eq!(q.per_step.len(), 3);
        assert_eq!(q.state_sample_stride, 10);
    }

    #[test]
    fn mismatched_trajectory_rejected() {
        let (wf, _) = workflow(&["A", "B"], &[1]);
        let (_, other) = workflow(&["A", "B", "C"], &[1]);
        assert!(matches!(
            judge_consistency(&wf, &other, 2, &StubAnnotator::default(), 10),
            Err(QualityError::TrajectoryMismatch { .. })
        ));
    }

    #[test]
    fn mean_score_of_indicators() {
        assert_eq!(mean_score([true, false, true, true]), 0.75);
        assert_eq!(mean_score([]), 0.0);
    }
}
