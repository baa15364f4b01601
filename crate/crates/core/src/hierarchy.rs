//! Compositional workflow hierarchy.
//!
//! Structure is fixed by deterministic rules and never by the annotator:
//!
//! ```text
//! level 0   one leaf per event
//! level 1   micro-steps: maximal same-app (or same-kind) runs inside a segment
//! level 2   segments
//! level 3+  contiguous groups of at most `fanout_limit` nodes, while depth allows
//! root      one level above the top tier
//! ```
//!
//! Goals are then filled in bottom-up: leaves and micro-steps are summarized
//! from their actions, every higher node from its children's goals, and the
//! root takes the task instruction when one is known.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::annotator::{ActionItem, Annotator, AnnotatorError, Screen, SummarySource};
use crate::segment::{check_partition, Segment, SegmentError};
use crate::trace::Trajectory;

/// Half-open event interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowNode {
    pub goal: String,
    pub level: u32,
    pub span: Span,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<WorkflowNode>,
}

impl WorkflowNode {
    fn leaf(index: usize) -> Self {
        WorkflowNode {
            goal: String::new(),
            level: 0,
            span: Span::new(index, index + 1),
            children: Vec::new(),
        }
    }

    fn over(level: u32, children: Vec<WorkflowNode>) -> Self {
        let span = Span::new(
            children.first().map_or(0, |c| c.span.start),
            children.last().map_or(0, |c| c.span.end),
        );
        WorkflowNode {
            goal: String::new(),
            level,
            span,
            children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Number of nodes in the subtree.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(WorkflowNode::size).sum::<usize>()
    }

    /// The same tree with every goal cleared.
    pub fn without_goals(&self) -> WorkflowNode {
        WorkflowNode {
            goal: String::new(),
            level: self.level,
            span: self.span,
            children: self
                .children
                .iter()
                .map(WorkflowNode::without_goals)
                .collect(),
        }
    }

    /// Pre-order walk yielding `(path, node)`.
    pub fn walk(&self) -> Vec<(Vec<usize>, &WorkflowNode)> {
        fn go<'a>(
            n: &'a WorkflowNode,
            path: &mut Vec<usize>,
            out: &mut Vec<(Vec<usize>, &'a WorkflowNode)>,
        ) {
            out.push((path.clone(), n));
            for (i, c) in n.children.iter().enumerate() {
                path.push(i);
                go(c, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        go(self, &mut Vec::new(), &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MicroStepRule {
    SameKindRun,
    #[default]
    SameAppRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyConfig {
    pub max_depth: u32,
    pub micro_step_rule: MicroStepRule,
    pub fanout_limit: usize,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        HierarchyConfig {
            max_depth: 4,
            micro_step_rule: MicroStepRule::SameAppRun,
            fanout_limit: 12,
        }
    }
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<(), HierarchyError> {
        if self.max_depth < 2 {
            return Err(HierarchyError::Config(format!(
                "max_depth must be >= 2, got {}",
                self.max_depth
            )));
        }
        if self.fanout_limit < 2 {
            return Err(HierarchyError::Config(format!(
                "fanout_limit must be >= 2, got {}",
                self.fanout_limit
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrajectoryRef {
    pub task_id: String,
    pub worker_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workflow {
    pub root: WorkflowNode,
    pub trajectory_ref: TrajectoryRef,
    pub config_fingerprint: String,
    pub annotator_id: String,
}

impl Workflow {
    pub fn depth(&self) -> u32 {
        self.root.level
    }

    pub fn event_count(&self) -> usize {
        self.root.span.end
    }

    pub fn steps(&self, level: u32) -> Result<Vec<Step>, HierarchyError> {
        flatten(&self.root, level)
    }
}

/// One node at a chosen level: its goal and action interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub goal: String,
    pub level: u32,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HierarchyError {
    #[error("invalid hierarchy config: {0}")]
    Config(String),
    #[error(transparent)]
    Segments(#[from] SegmentError),
    #[error("trajectory has no events")]
    Empty,
    #[error("level {level} out of range (depth {depth})")]
    LevelOutOfRange { level: u32, depth: u32 },
    #[error("structure violation at node {path:?}: {detail}")]
    Structure { path: Vec<usize>, detail: String },
    #[error("annotator failed at node {path:?}: {source}")]
    Annotator {
        path: Vec<usize>,
        source: AnnotatorError,
    },
    #[error("annotator returned an empty goal twice at node {path:?}")]
    EmptyGoal { path: Vec<usize> },
}

fn micro_steps(t: &Trajectory, seg: &Segment, rule: MicroStepRule) -> Vec<WorkflowNode> {
    let mut out = Vec::new();
    let mut run: Vec<WorkflowNode> = Vec::new();
    for i in seg.start..seg.end {
        let breaks = i > seg.start
            && match rule {
                MicroStepRule::SameAppRun => t.events[i].app != t.events[i - 1].app,
                MicroStepRule::SameKindRun => t.events[i].kind != t.events[i - 1].kind,
            };
        if breaks {
            out.push(WorkflowNode::over(1, core::mem::take(&mut run)));
        }
        run.push(WorkflowNode::leaf(i));
    }
    if !run.is_empty() {
        out.push(WorkflowNode::over(1, run));
    }
    out
}

fn chunk(nodes: Vec<WorkflowNode>, size: usize, level: u32) -> Vec<WorkflowNode> {
    let mut out = Vec::with_capacity(nodes.len().div_ceil(size));
    let mut cur = Vec::with_capacity(size);
    for n in nodes {
        cur.push(n);
        if cur.len() == size {
            out.push(WorkflowNode::over(level, core::mem::take(&mut cur)));
        }
    }
    if !cur.is_empty() {
        out.push(WorkflowNode::over(level, cur));
    }
    out
}

/// Builds the goal-less tree over `segments`.
pub fn build_skeleton(
    t: &Trajectory,
    segments: &[Segment],
    cfg: &HierarchyConfig,
) -> Result<WorkflowNode, HierarchyError> {
    cfg.validate()?;
    if t.is_empty() {
        return Err(HierarchyError::Empty);
    }
    check_partition(segments, t.len())?;

    let micro: Vec<Vec<WorkflowNode>> = segments
        .iter()
        .map(|s| micro_steps(t, s, cfg.micro_step_rule))
        .collect();

    if cfg.max_depth == 2 {
        return Ok(WorkflowNode::over(2, micro.into_iter().flatten().collect()));
    }

    let mut nodes: Vec<WorkflowNode> = micro
        .into_iter()
        .map(|m| WorkflowNode::over(2, m))
        .collect();
    let mut level = 2;
    while nodes.len() > cfg.fanout_limit && level + 2 <= cfg.max_depth {
        level += 1;
        nodes = chunk(nodes, cfg.fanout_limit, level);
    }
    let root = WorkflowNode::over(level + 1, nodes);
    check_structure(&root, t.len())?;
    Ok(root)
}

/// Span algebra: root covers `[0, len)`; every inner node's span is the
/// gap-free union of its children's, in order; levels strictly decrease.
pub fn check_structure(root: &WorkflowNode, len: usize) -> Result<(), HierarchyError> {
    if root.span != Span::new(0, len) {
        return Err(HierarchyError::Structure {
            path: Vec::new(),
            detail: format!("root spans {:?}, expected [0, {len})", root.span),
        });
    }
    for (path, n) in root.walk() {
        let fail = |detail: String| {
            Err(HierarchyError::Structure {
                path: path.clone(),
                detail,
            })
        };
        if n.span.is_empty() {
            return fail(format!("empty span {:?}", n.span));
        }
        if n.is_leaf() {
            continue;
        }
        if n.children[0].span.start != n.span.start
            || n.children[n.children.len() - 1].span.end != n.span.end
        {
            return fail(format!("children do not cover {:?}", n.span));
        }
        for w in n.children.windows(2) {
            if w[0].span.end != w[1].span.start {
                return fail(format!(
                    "gap or overlap between {:?} and {:?}",
                    w[0].span, w[1].span
                ));
            }
        }
        if let Some(c) = n.children.iter().find(|c| c.level >= n.level) {
            return fail(format!("child level {} not below {}", c.level, n.level));
        }
    }
    Ok(())
}

fn sampled_state(t: &Trajectory, span: Span) -> Option<Screen> {
    t.events[span.start..span.end]
        .iter()
        .rev()
        .find(|e| e.screenshot.is_some())
        .map(|e| Screen {
            frame: e.screenshot.clone(),
            app: e.app.clone(),
            histogram: None,
        })
}

fn ask(
    annotator: &dyn Annotator,
    source: SummarySource,
    path: &[usize],
) -> Result<String, HierarchyError> {
    for _ in 0..2 {
        let goal =
            annotator
                .summarize_goal(source.clone())
                .map_err(|e| HierarchyError::Annotator {
                    path: path.to_vec(),
                    source: e,
                })?;
        let goal = goal.trim();
        if !goal.is_empty() {
            return Ok(goal.into());
        }
    }
    Err(HierarchyError::EmptyGoal {
        path: path.to_vec(),
    })
}

fn annotate_node(
    node: &mut WorkflowNode,
    t: &Trajectory,
    annotator: &dyn Annotator,
    path: &mut Vec<usize>,
) -> Result<(), HierarchyError> {
    for (i, c) in node.children.iter_mut().enumerate() {
        path.push(i);
        annotate_node(c, t, annotator, path)?;
        path.pop();
    }
    let source = if node.level <= 1 || node.is_leaf() {
        SummarySource::Actions {
            actions: t.events[node.span.start..node.span.end]
                .iter()
                .map(ActionItem::from)
                .collect(),
            state: sampled_state(t, node.span),
        }
    } else {
        SummarySource::Children {
            goals: node.children.iter().map(|c| c.goal.clone()).collect(),
        }
    };
    node.goal = ask(annotator, source, path)?;
    Ok(())
}

/// Fills in every goal bottom-up. Structure is left untouched; the root takes
/// `t.instruction` when present.
pub fn annotate_goals(
    skeleton: &WorkflowNode,
    t: &Trajectory,
    annotator: &dyn Annotator,
    config_fingerprint: &str,
) -> Result<Workflow, HierarchyError> {
    check_structure(skeleton, t.len())?;
    let mut root = skeleton.clone();
    let mut path = Vec::new();
    match t
        .instruction
        .as_deref()
        .map(str::trim)
        .filter(|s| !s.is_empty())
    {
        Some(instruction) => {
            for (i, c) in root.children.iter_mut().enumerate() {
                path.push(i);
                annotate_node(c, t, annotator, &mut path)?;
                path.pop();
            }
            root.goal = instruction.into();
        }
        None => annotate_node(&mut root, t, annotator, &mut path)?,
    }
    Ok(Workflow {
        root,
        trajectory_ref: TrajectoryRef {
            task_id: t.task_id.clone(),
            worker_id: t.worker.worker_id.clone(),
        },
        config_fingerprint: config_fingerprint.into(),
        annotator_id: annotator.id(),
    })
}

/// Skeleton construction followed by goal annotation.
pub fn induce(
    t: &Trajectory,
    segments: &[Segment],
    cfg: &HierarchyConfig,
    annotator: &dyn Annotator,
) -> Result<Workflow, HierarchyError> {
    let skeleton = build_skeleton(t, segments, cfg)?;
    annotate_goals(&skeleton, t, annotator, &crate::fingerprint::of(cfg))
}

/// In-order nodes at `level`; a node above `level` whose children skip past
/// it is emitted as itself, so the result always partitions the root span.
pub fn flatten(root: &WorkflowNode, level: u32) -> Result<Vec<Step>, HierarchyError> {
    if level > root.level {
        return Err(HierarchyError::LevelOutOfRange {
            level,
            depth: root.level,
        });
    }
    fn go(n: &WorkflowNode, level: u32, out: &mut Vec<Step>) {
        if n.level <= level || n.is_leaf() || n.children.iter().all(|c| c.level < level) {
            out.push(Step {
                goal: n.goal.clone(),
                level: n.level,
                span: n.span,
            });
        } else {
            for c in &n.children {
                go(c, level, out);
            }
        }
    }
    let mut out = Vec::new();
    go(root, level, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::StubAnnotator;
    use crate::segment::{segments_from_boundaries, BoundaryCause};
    use crate::trace::{RawEvent, WorkerMeta};
    use alloc::vec;

    fn traj(apps: &[&str]) -> Trajectory {
        let events = apps
            .iter()
            .enumerate()
            .map(|(i, a)| RawEvent::keypress(i, i as f64, "x").with_app(a))
            .collect();
        Trajectory::new("task", WorkerMeta::human("h1"), events)
    }

    #[test]
    fn single_segment_three_events() {
        let t = traj(&["Excel"; 3]);
        let segs = segments_from_boundaries(3, &[]);
        let root = build_skeleton(&t, &segs, &HierarchyConfig::default()).unwrap();
        assert_eq!(root.level, 3);
        assert_eq!(root.children.len(), 1);
        let seg = &root.children[0];
        assert_eq!((seg.level, seg.children.len()), (2, 1));
        let micro = &seg.children[0];
        assert_eq!((micro.level, micro.children.len()), (1, 3));
        assert!(micro.children.iter().all(|l| l.level == 0 && l.is_leaf()));
    }

    #[test]
    fn thirty_segments_gain_a_grouping_level() {
        let t = traj(&["A"; 30]);
        let bounds: Vec<usize> = (1..30).collect();
        let segs = segments_from_boundaries(30, &bounds);
        let root = build_skeleton(&t, &segs, &HierarchyConfig::default()).unwrap();
        assert_eq!(root.level, 4);
        assert_eq!(root.children.len(), 3);
        let sizes: Vec<usize> = root.children.iter().map(|g| g.children.len()).collect();
        assert_eq!(sizes, [12, 12, 6]);
        assert!(root.children.iter().all(|g| g.level == 3));
    }

    #[test]
    fn depth_cap_stops_grouping() {
        let t = traj(&["A"; 200]);
        let bounds: Vec<usize> = (1..200).collect();
        let segs = segments_from_boundaries(200, &bounds);
        let root = build_skeleton(&t, &segs, &HierarchyConfig::default()).unwrap();
        assert_eq!(root.level, 4);
        assert_eq!(root.children.len(), 17);
        let deep = HierarchyConfig {
            max_depth: 6,
            ..Default::default()
        };
        let root = build_skeleton(&t, &segs, &deep).unwrap();
        assert_eq!(root.level, 5);
        assert_eq!(root.children.len(), 2);
    }

    #[test]
    fn max_depth_two_drops_segment_tier() {
        let t = traj(&["A", "A", "B"]);
        let segs = segments_from_boundaries(3, &[2]);
        let cfg = HierarchyConfig {
            max_depth: 2,
            ..Default::default()
        };
        let root = build_skeleton(&t, &segs, &cfg).unwrap();
        assert_eq!(root.level, 2);
        assert_eq!(root.children.len(), 2);
        check_structure(&root, 3).unwrap();
    }

    #[test]
    fn micro_step_rules() {
        let mut t = traj(&["A", "A", "B", "B"]);
        t.events[1] = RawEvent::click(1, 1.0, 0, 0).with_app("A");
        let segs = segments_from_boundaries(4, &[]);
        let by_app = build_skeleton(&t, &segs, &HierarchyConfig::default()).unwrap();
        assert_eq!(by_app.children[0].children.len(), 2);
        let cfg = HierarchyConfig {
            micro_step_rule: MicroStepRule::SameKindRun,
            ..Default::default()
        };
        let by_kind = build_skeleton(&t, &segs, &cfg).unwrap();
        assert_eq!(by_kind.children[0].children.len(), 3);
    }

    #[test]
    fn config_validation() {
        let bad = HierarchyConfig {
            max_depth: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = HierarchyConfig {
            fanout_limit: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn rejects_non_partition_segments() {
        let t = traj(&["A"; 3]);
        let segs = [Segment {
            start: 0,
            end: 2,
            boundary_cause: BoundaryCause::SessionStart,
            merged_from: 1,
        }];
        assert!(matches!(
            build_skeleton(&t, &segs, &HierarchyConfig::default()),
            Err(HierarchyError::Segments(_))
        ));
    }

    #[test]
    fn goals_bottom_up_with_instruction_root() {
        let mut t = traj(&["Excel", "Excel", "Chrome"]);
        t.instruction = Some("build the report".into());
        let segs = segments_from_boundaries(3, &[2]);
        let wf = induce(
            &t,
            &segs,
            &HierarchyConfig::default(),
            &StubAnnotator::default(),
        )
        .unwrap();
        assert_eq!(wf.root.goal, "build the report");
        assert_eq!(wf.root.children[0].goal, "type text in Excel");
        assert_eq!(wf.root.children[1].goal, "type text in Chrome");
        assert!(wf.root.walk().iter().all(|(_, n)| !n.goal.is_empty()));
        assert_eq!(wf.annotator_id, StubAnnotator::default().id());
        assert_eq!(wf.trajectory_ref.worker_id, "h1");
    }

    #[test]
    fn root_without_instruction_summarizes_children() {
        let t = traj(&["Excel", "Chrome"]);
        let segs = segments_from_boundaries(2, &[1]);
        let wf = induce(
            &t,
            &segs,
            &HierarchyConfig::default(),
            &StubAnnotator::default(),
        )
        .unwrap();
        assert_eq!(wf.root.goal, "type text in Excel; type text in Chrome");
    }

    #[test]
    fn annotation_preserves_structure() {
        let t = traj(&["A", "B", "B", "C"]);
        let segs = segments_from_boundaries(4, &[1, 3]);
        let sk = build_skeleton(&t, &segs, &HierarchyConfig::default()).unwrap();
        let wf = annotate_goals(&sk, &t, &StubAnnotator::default(), "fp").unwrap();
        assert_eq!(wf.root.without_goals(), sk);
    }

    struct Blank {
        calls: core::cell::Cell<usize>,
    }
    impl Annotator for Blank {
        fn id(&self) -> String {
            "blank".into()
        }
        fn call(
            &self,
            _: &crate::annotator::AnnotatorRequest,
        ) -> Result<crate::annotator::AnnotatorResponse, AnnotatorError> {
            self.calls.set(self.calls.get() + 1);
            Ok(crate::annotator::AnnotatorResponse::text("  ", ""))
        }
    }

    #[test]
    fn empty_goal_retried_once_then_error() {
        let t = traj(&["A"]);
        let segs = segments_from_boundaries(1, &[]);
        let blank = Blank {
            calls: core::cell::Cell::new(0),
        };
        let err = induce(&t, &segs, &HierarchyConfig::default(), &blank).unwrap_err();
        assert_eq!(blank.calls.get(), 2);
        assert_eq!(
            err,
            HierarchyError::EmptyGoal {
                path: vec![0, 0, 0]
            }
        );
    }

    #[test]
    fn flatten_levels() {
        let t = traj(&["A", "A", "B", "C"]);
        let segs = segments_from_boundaries(4, &[2, 3]);
        let root = build_skeleton(&t, &segs, &HierarchyConfig::default()).unwrap();
        assert_eq!(flatten(&root, root.level).unwrap().len(), 1);
        assert_eq!(flatten(&root, 0).unwrap().len(), 4);
        let segs_level = flatten(&root, 2).unwrap();
        let spans: Vec<Span> = segs_level.iter().map(|s| s.span).collect();
        assert_eq!(spans, [Span::new(0, 2), Span::new(2, 3), Span::new(3, 4)]);
        assert!(matches!(
            flatten(&root, 9),
            Err(HierarchyError::LevelOutOfRange { .. })
        ));
    }

    #[test]
    fn flatten_mixed_depth() {
        let leaf = |i| WorkflowNode::leaf(i);
        let root = WorkflowNode::over(
            3,
            vec![
                WorkflowNode::over(1, vec![leaf(0), leaf(1)]),
                WorkflowNode::over(
                    2,
                    vec![
                        WorkflowNode::over(1, vec![leaf(2)]),
                        WorkflowNode::over(1, vec![leaf(3)]),
                    ],
                ),
            ],
        );
        check_structure(&root, 4).unwrap();
        let l2: Vec<Span> = flatten(&root, 2).unwrap().iter().map(|s| s.span).collect();
        assert_eq!(l2, [Span::new(0, 2), Span::new(2, 4)]);
        let l1: Vec<Span> = flatten(&root, 1).unwrap().iter().map(|s| s.span).collect();
        assert_eq!(l1, [Span::new(0, 2), Span::new(2, 3), Span::new(3, 4)]);
    }
}
