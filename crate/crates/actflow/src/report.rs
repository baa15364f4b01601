//! Flat CSV tables and plot-ready JSON series from a run's analytics.

use std::collections::BTreeMap;
use std::path::Path;

use actflow_core::analytics::BreakdownRow;
use serde::{Deserialize, Serialize};

use crate::artifacts::{csv_bytes, read_input, write_atomic, write_csv, write_json};
use crate::error::Result;
use crate::pipeline::{ComparisonOutcome, MemberRow, PairAlignment, ProgramUse};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Tables,
    Plotdata,
    #[default]
    Both,
}

pub const EFFICIENCY_HEADER: [&str; 11] = [
    "group",
    "reference",
    "n",
    "mean_actions",
    "mean_elapsed_seconds",
    "mean_cost_usd",
    "success_rate",
    "program_use_rate",
    "less_time_percent",
    "fewer_actions_percent",
    "lower_cost_percent",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub group: String,
    pub reference: String,
    pub n: usize,
    pub mean_actions: f64,
    pub mean_elapsed_seconds: f64,
    pub mean_cost_usd: Option<f64>,
    pub success_rate: Option<f64>,
    pub program_use_rate: Option<f64>,
    pub less_time_percent: Option<f64>,
    pub fewer_actions_percent: Option<f64>,
    pub lower_cost_percent: Option<f64>,
}

/// One row per group; delta columns are empty for the reference group.
pub fn efficiency_rows(c: &ComparisonOutcome) -> Vec<EfficiencyRow> {
    let Some(r) = &c.report else {
        return Vec::new();
    };
    r.groups
        .iter()
        .map(|g| {
            let d = r.deltas.iter().find(|d| d.group == g.group);
            EfficiencyRow {
                group: g.group.clone(),
                reference: r.reference.clone(),
                n: g.n,
                mean_actions: g.mean_actions,
                mean_elapsed_seconds: g.mean_elapsed_seconds,
                mean_cost_usd: g.mean_cost_usd,
                success_rate: g.success_rate,
                program_use_rate: g.program_use_rate,
                less_time_percent: d.and_then(|d| d.less_time_percent),
                fewer_actions_percent: d.and_then(|d| d.fewer_actions_percent),
                lower_cost_percent: d.and_then(|d| d.lower_cost_percent),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct MatrixRow<'a> {
    task_id: &'a str,
    a: &'a str,
    b: &'a str,
    a_worker: &'a str,
    b_worker: &'a str,
    level: u32,
    len_a: usize,
    len_b: usize,
    matches: usize,
    matching_percent: f64,
    order_percent: Option<f64>,
    progress_percent: Option<f64>,
}

#[derive(Serialize)]
struct QualityRow<'a> {
    trajectory: &'a str,
    task_id: &'a str,
    worker_id: &'a str,
    level: u32,
    steps: usize,
    consistency_score: f64,
    modularity_score: f64,
}

#[derive(Serialize)]
struct ReductionRow<'a> {
    trajectory: &'a str,
    task_id: &'a str,
    worker_id: &'a str,
    events_before: usize,
    events_after: usize,
    reduction_fraction: f64,
}

#[derive(Serialize)]
struct ToolRow<'a> {
    trajectory: &'a str,
    task_id: &'a str,
    worker_id: &'a str,
    steps: usize,
    programmatic_steps: usize,
    programmatic: bool,
}

/// Per-task series in manifest order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskSeries {
    pub task_id: String,
    pub trajectories: Vec<String>,
    pub workers: Vec<String>,
    pub worker_kinds: Vec<String>,
    pub elapsed_seconds: Vec<f64>,
    pub actions: Vec<usize>,
    pub cost_usd: Vec<Option<f64>>,
}

/// Square matrices over one task's trajectories; `[i][j]` aligns i (A) with j (B).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentMatrix {
    pub task_id: String,
    pub trajectories: Vec<String>,
    pub matching_percent: Vec<Vec<f64>>,
    pub order_percent: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub tasks: Vec<TaskSeries>,
    pub alignment: Vec<AlignmentMatrix>,
}

fn file_part(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .collect()
}

pub fn plot_data(members: &[MemberRow], alignment: &[PairAlignment]) -> PlotData {
    let mut tasks: Vec<TaskSeries> = Vec::new();
    for m in members {
        let idx = match tasks.iter().position(|t| t.task_id == m.record.task_id) {
            Some(i) => i,
            None => {
                tasks.push(TaskSeries {
                    task_id: m.record.task_id.clone(),
                    ..Default::default()
                });
                tasks.len() - 1
            }
        };
        let t = &mut tasks[idx];
        t.trajectories.push(m.dir.clone());
        t.workers.push(m.worker_id.clone());
        t.worker_kinds.push(m.record.group("worker_kind"));
        t.elapsed_seconds.push(m.record.elapsed_seconds);
        t.actions.push(m.record.actions);
        t.cost_usd.push(m.record.cost_usd);
    }
    let mut matrices: Vec<AlignmentMatrix> = Vec::new();
    for p in alignment {
        let idx = match matrices.iter().position(|m| m.task_id == p.task_id) {
            Some(i) => i,
            None => {
                matrices.push(AlignmentMatrix {
                    task_id: p.task_id.clone(),
                    ..Default::default()
                });
                matrices.len() - 1
            }
        };
        let m = &mut matrices[idx];
        let row = match m.trajectories.iter().position(|t| *t == p.a) {
            Some(r) => r,
            None => {
                m.trajectories.push(p.a.clone());
                m.matching_percent.push(Vec::new());
                m.order_percent.push(Vec::new());
                m.trajectories.len() - 1
            }
        };
        m.matching_percent[row].push(p.result.matching_percent);
        m.order_percent[row].push(p.result.order_percent);
    }
    PlotData {
        tasks,
        alignment: matrices,
    }
}

/// Writes `tables/*.csv` and/or `plotdata.json` under `run_dir`.
const MATRIX_HEADER: [&str; 12] = [
    "task_id",
    "a",
    "b",
    "a_worker",
    "b_worker",
    "level",
    "len_a",
    "len_b",
    "matches",
    "matching_percent",
    "order_percent",
    "progress_percent",
];

/// The pairwise alignment table as CSV.
pub fn alignment_matrix_csv(alignment: &[PairAlignment]) -> Result<Vec<u8>> {
    let matrix: Vec<MatrixRow> = alignment
        .iter()
        .map(|p| MatrixRow {
            task_id: &p.task_id,
            a: &p.a,
            b: &p.b,
            a_worker: &p.a_worker,
            b_worker: &p.b_worker,
            level: p.result.level,
            len_a: p.result.len_a,
            len_b: p.result.len_b,
            matches: p.result.matches.len(),
            matching_percent: p.result.matching_percent,
            order_percent: p.result.order_percent,
            progress_percent: p.progress_percent,
        })
        .collect();
    csv_bytes(&MATRIX_HEADER, &matrix)
}

pub fn emit_report(run_dir: &Path, format: ReportFormat) -> Result<()> {
    let analytics = run_dir.join("analytics");
    let members: Vec<MemberRow> = read_input("report", &analytics.join("members.json"))?;
    let alignment: Vec<PairAlignment> = read_input("report", &run_dir.join("alignment.json"))?;

    if format != ReportFormat::Plotdata {
        let efficiency: Vec<ComparisonOutcome> =
            read_input("report", &analytics.join("efficiency.json"))?;
        let program_use: ProgramUse = read_input("report", &analytics.join("program_use.json"))?;
        let breakdown: BTreeMap<String, Vec<BreakdownRow>> =
            read_input("report", &analytics.join("breakdown.json"))?;
        let tables = run_dir.join("tables");

        for c in &efficiency {
            let name = format!(
                "efficiency_{}_vs_{}.csv",
                file_part(&c.group_by),
                file_part(&c.reference)
            );
            write_csv(&tables.join(name), &EFFICIENCY_HEADER, &efficiency_rows(c))?;
        }
        for (key, rows) in &breakdown {
            write_csv(
                &tables.join(format!("alignment_breakdown_{}.csv", file_part(key))),
                &[
                    "group_a",
                    "group_b",
                    "n",
                    "mean_matching_percent",
                    "mean_order_percent",
                    "mean_progress_percent",
                ],
                rows,
            )?;
        }
        write_atomic(
            &tables.join("alignment_matrix.csv"),
            &alignment_matrix_csv(&alignment)?,
        )?;
        let quality: Vec<QualityRow> = members
            .iter()
            .map(|m| QualityRow {
                trajectory: &m.dir,
                task_id: &m.record.task_id,
                worker_id: &m.worker_id,
                level: m.quality.level,
                steps: m.quality.steps,
                consistency_score: m.quality.consistency_score,
                modularity_score: m.quality.modularity_score,
            })
            .collect();
        write_csv(
            &tables.join("quality.csv"),
            &[
                "trajectory",
                "task_id",
                "worker_id",
                "level",
                "steps",
                "consistency_score",
                "modularity_score",
            ],
            &quality,
        )?;
        let reduction: Vec<ReductionRow> = members
            .iter()
            .map(|m| ReductionRow {
                trajectory: &m.dir,
                task_id: &m.record.task_id,
                worker_id: &m.worker_id,
                events_before: m.reduction.events_before,
                events_after: m.reduction.events_after,
                reduction_fraction: m.reduction.reduction_fraction,
            })
            .collect();
        write_csv(
            &tables.join("reduction.csv"),
            &[
                "trajectory",
                "task_id",
                "worker_id",
                "events_before",
                "events_after",
                "reduction_fraction",
            ],
            &reduction,
        )?;
        let tools: Vec<ToolRow> = members
            .iter()
            .map(|m| ToolRow {
                trajectory: &m.dir,
                task_id: &m.record.task_id,
                worker_id: &m.worker_id,
                steps: m.steps,
                programmatic_steps: m.programmatic_steps,
                programmatic: m.programmatic_steps > 0,
            })
            .collect();
        write_csv(
            &tables.join("tools.csv"),
            &[
                "trajectory",
                "task_id",
                "worker_id",
                "steps",
                "programmatic_steps",
                "programmatic",
            ],
            &tools,
        )?;
        let mut rates: Vec<(String, f64)> = program_use
            .overall
            .map(|r| ("all".to_string(), r))
            .into_iter()
            .collect();
        rates.extend(
            program_use
                .by_worker_kind
                .iter()
                .map(|(k, v)| (k.clone(), *v)),
        );
        write_csv(
            &tables.join("program_use.csv"),
            &["group", "program_use_rate"],
            &rates,
        )?;
    }
    if format != ReportFormat::Tables {
        write_json(
            &run_dir.join("plotdata.json"),
            &plot_data(&members, &alignment),
        )?;
    }
    Ok(())
}
