//! Cohort analytics: tool labels per step, program-use rate, efficiency
//! deltas against a reference group, and grouped alignment means.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::hierarchy::{HierarchyError, Span, Workflow};
use crate::trace::{RawEvent, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error("cohort is empty")]
    EmptyCohort,
    #[error("reference group {0:?} has no members")]
    MissingReference(String),
    #[error("workflow covers {workflow} events but trajectory has {trajectory}")]
    TrajectoryMismatch { workflow: usize, trajectory: usize },
}

/// One ordered tool-classification rule. Every non-empty criterion must hold;
/// list criteria hold when any entry matches (case-insensitive substring for
/// text, exact name for kinds).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRule {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kinds: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub app_contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub arg_contains: Vec<String>,
    pub tool_name: String,
    #[serde(default)]
    pub programmatic: bool,
}

fn contains_ci(haystack: &str, needle: &str) -> bool {
    haystack.to_lowercase().contains(&needle.to_lowercase())
}

impl ToolRule {
    pub fn unknown() -> Self {
        ToolRule {
            kinds: Vec::new(),
            app_contains: Vec::new(),
            arg_contains: Vec::new(),
            tool_name: "unknown".into(),
            programmatic: false,
        }
    }

    pub fn matches(&self, e: &RawEvent) -> bool {
        let kind_ok = self.kinds.is_empty() || self.kinds.iter().any(|k| k == e.kind.as_str());
        let app_ok = self.app_contains.is_empty()
            || e.app
                .as_deref()
                .is_some_and(|app| self.app_contains.iter().any(|p| contains_ci(app, p)));
        let arg_ok = self.arg_contains.is_empty()
            || e.args
                .values()
                .any(|v| self.arg_contains.iter().any(|p| contains_ci(v, p)));
        kind_ok && app_ok && arg_ok
    }
}

fn rule(kinds: &[&str], apps: &[&str], tool: &str, programmatic: bool) -> ToolRule {
    ToolRule {
        kinds: kinds.iter().map(|s| s.to_string()).collect(),
        app_contains: apps.iter().map(|s| s.to_string()).collect(),
        arg_contains: Vec::new(),
        tool_name: tool.into(),
        programmatic,
    }
}

/// Ordered rules; the implicit `unknown` rule terminates matching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRules {
    pub rules: Vec<ToolRule>,
}

impl Default for ToolRules {
    fn default() -> Self {
        ToolRules {
            rules: alloc::vec![
                rule(&["run_ipython"], &[], "Python", true),
                rule(&["run"], &[], "bash", true),
                rule(&["edit", "create", "read"], &[], "file editor", true),
                rule(
                    &[],
                    &["terminal", "iterm", "powershell", "cmd.exe"],
                    "Terminal",
                    true
                ),
                rule(&[], &["jupyter", "notebook", "colab"], "Jupyter", true),
                rule(
                    &[],
                    &["vscode", "visual studio code", "pycharm"],
                    "VSCode",
                    true
                ),
                rule(&[], &["excel", "sheets", "numbers"], "Excel", false),
                rule(
                    &[],
                    &["powerpoint", "slides", "keynote"],
                    "PowerPoint",
                    false
                ),
                rule(&[], &["word", "docs", "pages"], "Word", false),
                rule(
                    &[],
                    &["figma", "photoshop", "canva", "illustrator"],
                    "design canvas",
                    false
                ),
                rule(
                    &["browse_interactive", "search", "search_image"],
                    &[],
                    "browser",
                    false
                ),
                rule(
                    &[],
                    &["chrome", "firefox", "safari", "edge", "browser"],
                    "Chrome",
                    false
                ),
                rule(&["generate_image", "open_image"], &[], "image tools", false),
                rule(&[], &["finder", "explorer", "files"], "file manager", false),
            ],
        }
    }
}

impl ToolRules {
    pub fn new(rules: Vec<ToolRule>) -> Self {
        ToolRules { rules }
    }

    /// Index of the first matching rule; `rules.len()` denotes `unknown`.
    pub fn classify(&self, e: &RawEvent) -> usize {
        self.rules
            .iter()
            .position(|r| r.matches(e))
            .unwrap_or(self.rules.len())
    }

    pub fn rule(&self, index: usize) -> ToolRule {
        self.rules
            .get(index)
            .cloned()
            .unwrap_or_else(ToolRule::unknown)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTool {
    pub step: usize,
    pub span: Span,
    pub tool_name: String,
    pub programmatic: bool,
}

/// Labels events by the rule with the most matches; ties go to the earlier rule.
pub fn label_events(events: &[RawEvent], rules: &ToolRules) -> ToolRule {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for e in events {
        *counts.entry(rules.classify(e)).or_default() += 1;
    }
    let best = counts
        .into_iter()
        .max_by(|(ia, ca), (ib, cb)| ca.cmp(cb).then(ib.cmp(ia)))
        .map_or(rules.rules.len(), |(i, _)| i);
    rules.rule(best)
}

/// Tool label for each step of `w` at `level`.
pub fn label_tools(
    w: &Workflow,
    t: &Trajectory,
    level: u32,
    rules: &ToolRules,
) -> Result<Vec<StepTool>, AnalyticsError> {
    if w.event_count() != t.len() {
        return Err(AnalyticsError::TrajectoryMismatch {
            workflow: w.event_count(),
            trajectory: t.len(),
        });
    }
    Ok(w.steps(level)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let r = label_events(&t.events[s.span.start..s.span.end], rules);
            StepTool {
                step: i,
                span: s.span,
                tool_name: r.tool_name,
                programmatic: r.programmatic,
            }
        })
        .collect())
}

/// What the program-use rate counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramUseBasis {
    /// Trajectories with at least one programmatic step.
    #[default]
    Trajectory,
    /// Programmatic steps among all steps.
    Step,
}

pub fn program_use_rate(
    cohort: &[Vec<StepTool>],
    basis: ProgramUseBasis,
) -> Result<f64, AnalyticsError> {
    if cohort.is_empty() {
        return Err(AnalyticsError::EmptyCohort);
    }
    let (hits, total) = match basis {
        ProgramUseBasis::Trajectory => (
            cohort
                .iter()
                .filter(|steps| steps.iter().any(|s| s.programmatic))
                .count(),
            cohort.len(),
        ),
        ProgramUseBasis::Step => (
            cohort.iter().flatten().filter(|s| s.programmatic).count(),
            cohort.iter().map(Vec::len).sum(),
        ),
    };
    if total == 0 {
        return Err(AnalyticsError::EmptyCohort);
    }
    Ok(100.0 * hits as f64 / total as f64)
}

/// Mean that does not depend on input order: values are summed in sorted order.
pub fn stable_mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

/// `100·(1 − x/reference)`: positive when `x` is smaller than the reference.
pub fn percent_delta(x: f64, reference: f64) -> Option<f64> {
    (reference != 0.0).then(|| 100.0 * (1.0 - x / reference))
}

/// One trajectory's measurements with its grouping labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub task_id: String,
    /// Grouping labels such as `worker_kind`, `framework`, `ai_usage`, `skill`.
    #[serde(default)]
    pub keys: BTreeMap<String, String>,
    pub actions: usize,
    pub elapsed_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_usd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    /// Whether any step was labeled programmatic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub programmatic: Option<bool>,
}

/// Label used for members lacking the grouping key.
pub const UNLABELED: &str = "unlabeled";

impl MemberRecord {
    pub fn group(&self, key: &str) -> String {
        if key == "task" {
            return self.task_id.clone();
        }
        self.keys
            .get(key)
            .cloned()
            .unwrap_or_else(|| UNLABELED.into())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    #[default]
    RatioOfMeans,
    MeanOfRatios,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EfficiencyOptions {
    #[serde(default)]
    pub mode: DeltaMode,
    /// Keep only successful members of tasks that every group completed.
    #[serde(default)]
    pub both_succeeded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub n: usize,
    pub mean_actions: f64,
    pub mean_elapsed_seconds: f64,
    pub mean_cost_usd: Option<f64>,
    pub success_rate: Option<f64>,
    pub program_use_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDelta {
    pub group: String,
    pub reference: String,
    pub less_time_percent: Option<f64>,
    pub fewer_actions_percent: Option<f64>,
    pub lower_cost_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub group_by: String,
    pub reference: String,
    pub options: EfficiencyOptions,
    pub tasks: Vec<String>,
    pub groups: Vec<GroupStats>,
    pub deltas: Vec<GroupDelta>,
}

fn percent_true(values: impl Iterator<Item = Option<bool>>) -> Option<f64> {
    let known: Vec<bool> = values.flatten().collect();
    (!known.is_empty())
        .then(|| 100.0 * known.iter().filter(|&&b| b).count() as f64 / known.len() as f64)
}

fn group_stats(group: &str, members: &[&MemberRecord]) -> GroupStats {
    let costs: Vec<f64> = members.iter().filter_map(|m| m.cost_usd).collect();
    GroupStats {
        group: group.into(),
        n: members.len(),
        mean_actions: stable_mean(members.iter().map(|m| m.actions as f64)).unwrap_or(0.0),
        mean_elapsed_seconds: stable_mean(members.iter().map(|m| m.elapsed_seconds)).unwrap_or(0.0),
        mean_cost_usd: stable_mean(costs),
        success_rate: percent_true(members.iter().map(|m| m.success)),
        program_use_rate: percent_true(members.iter().map(|m| m.programmatic)),
    }
}

type Metric = fn(&MemberRecord) -> Option<f64>;

const METRICS: [Metric; 3] = [
    |m| Some(m.elapsed_seconds),
    |m| Some(m.actions as f64),
    |m| m.cost_usd,
];

fn mean_metric(members: &[&MemberRecord], f: Metric) -> Option<f64> {
    stable_mean(members.iter().filter_map(|m| f(m)))
}

fn by_task<'a>(ms: &[&'a MemberRecord]) -> BTreeMap<String, Vec<&'a MemberRecord>> {
    let mut out: BTreeMap<String, Vec<&MemberRecord>> = BTreeMap::new();
    for m in ms {
        out.entry(m.task_id.clone()).or_default().push(*m);
    }
    out
}

/// Mean over shared tasks of per-task ratios, as a percent delta.
fn mean_of_ratios(x: &[&MemberRecord], reference: &[&MemberRecord], f: Metric) -> Option<f64> {
    let (bx, br) = (by_task(x), by_task(reference));
    let ratios = bx.iter().filter_map(|(task, xs)| {
        let r = mean_metric(br.get(task)?, f)?;
        let v = mean_metric(xs, f)?;
        (r != 0.0).then(|| v / r)
    });
    stable_mean(ratios).map(|q| 100.0 * (1.0 - q))
}

/// Group means and percent deltas of every group against `reference`.
pub fn efficiency_report(
    members: &[MemberRecord],
    group_by: &str,
    reference: &str,
    options: &EfficiencyOptions,
) -> Result<CohortReport, AnalyticsError> {
    if members.is_empty() {
        return Err(AnalyticsError::EmptyCohort);
    }
    let mut groups: BTreeMap<String, Vec<&MemberRecord>> = BTreeMap::new();
    for m in members {
        groups.entry(m.group(group_by)).or_default().push(m);
    }
    if options.both_succeeded {
        let succeeded = |ms: &Vec<&MemberRecord>| -> BTreeSet<String> {
            ms.iter()
                .filter(|m| m.success == Some(true))
                .map(|m| m.task_id.clone())
                .collect()
        };
        let mut sets = groups.values().map(succeeded);
        let first = sets.next().unwrap_or_default();
        let common: BTreeSet<String> =
            sets.fold(first, |acc, s| acc.intersection(&s).cloned().collect());
        for ms in groups.values_mut() {
            ms.retain(|m| m.success == Some(true) && common.contains(&m.task_id));
        }
    }
    let refs = groups
        .get(reference)
        .filter(|ms| !ms.is_empty())
        .ok_or_else(|| AnalyticsError::MissingReference(reference.into()))?;
    let tasks: BTreeSet<String> = groups
        .values()
        .flatten()
        .map(|m| m.task_id.clone())
        .collect();
    let stats = groups.iter().map(|(g, ms)| group_stats(g, ms)).collect();
    let deltas = groups
        .iter()
        .filter(|(g, _)| g.as_str() != reference)
        .map(|(g, ms)| {
            let [time, actions, cost] = METRICS.map(|f| match options.mode {
                DeltaMode::RatioOfMeans => {
                    percent_delta(mean_metric(ms, f)?, mean_metric(refs, f)?)
                }
                DeltaMode::MeanOfRatios => mean_of_ratios(ms, refs, f),
            });
            GroupDelta {
                group: g.clone(),
                reference: reference.into(),
                less_time_percent: time,
                fewer_actions_percent: actions,
                lower_cost_percent: cost,
            }
        })
        .collect();
    Ok(CohortReport {
        group_by: group_by.into(),
        reference: reference.into(),
        options: options.clone(),
        tasks: tasks.into_iter().collect(),
        groups: stats,
        deltas,
    })
}

/// One pairwise alignment labeled with the groups of its two workflows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub group_a: String,
    pub group_b: String,
    pub matching_percent: f64,
    pub order_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRow {
    pub group_a: String,
    pub group_b: String,
    pub n: usize,
    pub mean_matching_percent: f64,
    /// Mean over pairs whose order percent is defined.
    pub mean_order_percent: Option<f64>,
    pub mean_progress_percent: Option<f64>,
}

/// Mean alignment metrics per (group A, group B) pair, sorted by group names.
pub fn alignment_breakdown(pairs: &[PairRecord]) -> Vec<BreakdownRow> {
    let mut groups: BTreeMap<(String, String), Vec<&PairRecord>> = BTreeMap::new();
    for p in pairs {
        groups
            .entry((p.group_a.clone(), p.group_b.clone()))
            .or_default()
            .push(p);
    }
    groups
        .into_iter()
        .map(|((group_a, group_b), ps)| BreakdownRow {
            group_a,
            group_b,
            n: ps.len(),
            mean_matching_percent: stable_mean(ps.iter().map(|p| p.matching_percent))
                .unwrap_or(0.0),
            mean_order_percent: stable_mean(ps.iter().filter_map(|p| p.order_percent)),
            mean_progress_percent: stable_mean(ps.iter().filter_map(|p| p.progress_percent)),
        })
        .collect()
}
