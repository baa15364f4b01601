//! Step matching between two workflows and the comparison metrics built on
//! it: matching steps %, order preservation %, and progress.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::annotator::{Annotator, AnnotatorError, MatchPair};
use crate::hierarchy::{HierarchyError, Step, Workflow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchSource {
    Annotator,
    Manual,
}

/// Which workflow of a pair a step index refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::A => "A",
            Side::B => "B",
        })
    }
}

/// Inclusive step-index intervals matched between workflows A and B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StepMatch {
    pub a_range: (usize, usize),
    pub b_range: (usize, usize),
    pub source: MatchSource,
}

impl StepMatch {
    pub fn new(a_range: (usize, usize), b_range: (usize, usize), source: MatchSource) -> Self {
        StepMatch {
            a_range,
            b_range,
            source,
        }
    }

    pub fn one_to_one(a: usize, b: usize) -> Self {
        StepMatch::new((a, a), (b, b), MatchSource::Annotator)
    }

    pub fn range(&self, side: Side) -> (usize, usize) {
        match side {
            Side::A => self.a_range,
            Side::B => self.b_range,
        }
    }

    /// The match's ranges, ignoring provenance.
    pub fn pair(&self) -> RangePair {
        RangePair {
            a: self.a_range,
            b: self.b_range,
        }
    }
}

impl From<MatchPair> for StepMatch {
    fn from(p: MatchPair) -> Self {
        StepMatch::new(p.a, p.b, MatchSource::Annotator)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RangePair {
    pub a: (usize, usize),
    pub b: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignmentError {
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Annotator(#[from] AnnotatorError),
    #[error("{side}-range {start}..={end} is invalid for {len} steps")]
    Range {
        side: Side,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("{side}-step {step} is covered by more than one match")]
    DoubleCovered { side: Side, step: usize },
    #[error("no match {a:?} = {b:?} to {op}")]
    UnknownMatch {
        op: &'static str,
        a: (usize, usize),
        b: (usize, usize),
    },
}

/// A dropped proposal and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchWarning {
    pub a: (usize, usize),
    pub b: (usize, usize),
    pub reason: String,
}

fn check_range(side: Side, (start, end): (usize, usize), len: usize) -> Result<(), AlignmentError> {
    if start > end || end >= len {
        return Err(AlignmentError::Range {
            side,
            start,
            end,
            len,
        });
    }
    Ok(())
}

/// Checks ranges are in bounds and no step is covered twice on either side.
pub fn validate_matches(
    matches: &[StepMatch],
    len_a: usize,
    len_b: usize,
) -> Result<(), AlignmentError> {
    for (side, len) in [(Side::A, len_a), (Side::B, len_b)] {
        let mut covered = alloc::vec![false; len];
        for m in matches {
            let r = m.range(side);
            check_range(side, r, len)?;
            for (step, c) in covered.iter_mut().enumerate().take(r.1 + 1).skip(r.0) {
                if *c {
                    return Err(AlignmentError::DoubleCovered { side, step });
                }
                *c = true;
            }
        }
    }
    Ok(())
}

fn overlaps(x: (usize, usize), y: (usize, usize)) -> bool {
    x.0 <= y.1 && y.0 <= x.1
}

/// Drops out-of-range proposals and any proposal overlapping an earlier kept
/// one, returning the survivors sorted by A start.
pub fn normalize_pairs(
    pairs: &[MatchPair],
    len_a: usize,
    len_b: usize,
) -> (Vec<StepMatch>, Vec<MatchWarning>) {
    let mut kept: Vec<StepMatch> = Vec::new();
    let mut warnings = Vec::new();
    for p in pairs {
        let m = StepMatch::from(*p);
        let reason = if let Err(e) =
            check_range(Side::A, m.a_range, len_a).and(check_range(Side::B, m.b_range, len_b))
        {
            Some(format!("{e}"))
        } else {
            kept.iter()
                .find(|k| overlaps(k.a_range, m.a_range) || overlaps(k.b_range, m.b_range))
                .map(|k| format!("overlaps earlier match {:?} = {:?}", k.a_range, k.b_range))
        };
        match reason {
            Some(reason) => warnings.push(MatchWarning {
                a: p.a,
                b: p.b,
                reason,
            }),
            None => kept.push(m),
        }
    }
    kept.sort_by_key(|m| (m.a_range, m.b_range));
    (kept, warnings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub matches: Vec<StepMatch>,
    pub warnings: Vec<MatchWarning>,
}

/// Asks the annotator to match the goal lists of both workflows at `level`.
pub fn propose_matches(
    a: &Workflow,
    b: &Workflow,
    level: u32,
    annotator: &dyn Annotator,
) -> Result<Proposal, AlignmentError> {
    let sa = a.steps(level)?;
    let sb = b.steps(level)?;
    let goals = |s: &[Step]| s.iter().map(|s| s.goal.clone()).collect::<Vec<_>>();
    let pairs = annotator.propose_step_matches(goals(&sa), goals(&sb))?;
    let (matches, warnings) = normalize_pairs(&pairs, sa.len(), sb.len());
    Ok(Proposal { matches, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaceEdit {
    pub from: RangePair,
    pub to: RangePair,
}

/// Manual edits to a proposed match set. Deletions apply first, then
/// replacements in place, then additions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchEdits {
    #[serde(default)]
    pub delete: Vec<RangePair>,
    #[serde(default)]
    pub replace: Vec<ReplaceEdit>,
    #[serde(default)]
    pub add: Vec<RangePair>,
}

impl MatchEdits {
    pub fn is_empty(&self) -> bool {
        self.delete.is_empty() && self.replace.is_empty() && self.add.is_empty()
    }
}

pub fn apply_manual_refinement(
    matches: &[StepMatch],
    edits: &MatchEdits,
    len_a: usize,
    len_b: usize,
) -> Result<Vec<StepMatch>, AlignmentError> {
    let mut out: Vec<StepMatch> = matches.to_vec();
    let find = |out: &[StepMatch], p: &RangePair, op: &'static str| {
        out.iter()
            .position(|m| m.pair() == *p)
            .ok_or(AlignmentError::UnknownMatch { op, a: p.a, b: p.b })
    };
    for d in &edits.delete {
        let i = find(&out, d, "delete")?;
        out.remove(i);
    }
    for r in &edits.replace {
        let i = find(&out, &r.from, "replace")?;
        out[i] = StepMatch::new(r.to.a, r.to.b, MatchSource::Manual);
    }
    out.extend(
        edits
            .add
            .iter()
            .map(|p| StepMatch::new(p.a, p.b, MatchSource::Manual)),
    );
    validate_matches(&out, len_a, len_b)?;
    out.sort_by_key(|m| (m.a_range, m.b_range));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub matches: Vec<StepMatch>,
    pub matching_percent: f64,
    /// `None` when fewer than two matches exist.
    pub order_percent: Option<f64>,
    pub level: u32,
    pub len_a: usize,
    pub len_b: usize,
}

/// Size of the largest jointly monotone subset: matches sorted by A start,
/// then the longest strictly increasing run of B starts.
pub fn max_non_crossing(matches: &[StepMatch]) -> usize {
    let mut sorted: Vec<&StepMatch> = matches.iter().collect();
    sorted.sort_by_key(|m| (m.a_range.0, m.b_range.0));
    let mut tails: Vec<usize> = Vec::new();
    for m in sorted {
        let b = m.b_range.0;
        let i = tails.partition_point(|&t| t < b);
        if i == tails.len() {
            tails.push(b);
        } else {
            tails[i] = b;
        }
    }
    tails.len()
}

fn covered(matches: &[StepMatch], side: Side) -> usize {
    matches
        .iter()
        .map(|m| m.range(side))
        .map(|(s, e)| e + 1 - s)
        .sum()
}

pub fn compute_metrics(
    matches: &[StepMatch],
    len_a: usize,
    len_b: usize,
    level: u32,
) -> AlignmentResult {
    let total = len_a + len_b;
    let matching_percent = if total == 0 {
        0.0
    } else {
        100.0 * (covered(matches, Side::A) + covered(matches, Side::B)) as f64 / total as f64
    };
    let order_percent = (matches.len() >= 2)
        .then(|| 100.0 * max_non_crossing(matches) as f64 / matches.len() as f64);
    AlignmentResult {
        matches: matches.to_vec(),
        matching_percent,
        order_percent,
        level,
        len_a,
        len_b,
    }
}

/// Percent of agent events up to the end of the farthest matched agent step.
pub fn progress(agent_steps: &[Step], matches: &[StepMatch], agent: Side) -> f64 {
    let total = agent_steps.last().map_or(0, |s| s.span.end);
    let farthest = matches
        .iter()
        .map(|m| m.range(agent).1)
        .filter(|&s| s < agent_steps.len())
        .max();
    match farthest {
        Some(s) if total > 0 => 100.0 * agent_steps[s].span.end as f64 / total as f64,
        _ => 0.0,
    }
}

/// [`progress`] over a workflow's steps at `level`.
pub fn progress_of(
    agent: &Workflow,
    level: u32,
    matches: &[StepMatch],
    side: Side,
) -> Result<f64, AlignmentError> {
    Ok(progress(&agent.steps(level)?, matches, side))
}
