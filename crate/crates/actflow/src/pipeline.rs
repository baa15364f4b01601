//! The staged corpus pipeline. Per-trajectory stages run in parallel and read
//! their inputs from the run directory; cohort stages run after a barrier.
//!
//! ```text
//! <out>/<fingerprint[..16]>/
//!   trajectories/<NNN>_<name>/session.jsonl flags.json preprocessed.jsonl
//!     reduction.json segments.json workflow.json quality.json [agreement.json] tools.json
//!   alignment.json
//!   analytics/members.json efficiency.json program_use.json breakdown.json
//!   tables/*.csv plotdata.json
//!   summary.json timings.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use actflow_core::alignment::{
    apply_manual_refinement, compute_metrics, progress_of, propose_matches, AlignmentResult,
    MatchEdits, MatchWarning, Side, StepMatch,
};
use actflow_core::analytics::{
    alignment_breakdown, efficiency_report, label_tools, program_use_rate, BreakdownRow,
    CohortReport, MemberRecord, PairRecord, ProgramUseBasis, StepTool,
};
use actflow_core::annotator::PROMPT_VERSION;
use actflow_core::hierarchy::{annotate_goals, build_skeleton};
use actflow_core::preprocess::preprocess;
use actflow_core::quality::{assess, cohens_kappa, AgreementReport, QualityReport};
use actflow_core::segment::{
    detect_boundaries_with, segments_from_boundaries, semantic_merge, Segment,
};
use actflow_core::{Annotator, ReductionStats, StubAnnotator, Trajectory, WorkerKind, Workflow};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, read_input, write_json};
use crate::cache::{Cached, ResponseCache};
use crate::config::{Backend, PipelineConfig, Resolved};
use crate::error::{Error, Result};
use crate::frames::PngFrames;
use crate::llm::{LlmAnnotator, LlmBackend};
use crate::manifest::{read_results, Corpus, ManifestEntry, Results, StepLabels};
use crate::report::{emit_report, ReportFormat};
use crate::session::{self, Strictness};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Preprocess,
    Segment,
    Induce,
    Validate,
    Align,
    Analyze,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Preprocess,
        Stage::Segment,
        Stage::Induce,
        Stage::Validate,
        Stage::Align,
        Stage::Analyze,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Preprocess => "preprocess",
            Stage::Segment => "segment",
            Stage::Induce => "induce",
            Stage::Validate => "validate",
            Stage::Align => "align",
            Stage::Analyze => "analyze",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A stage subset, parsed from `all` or a comma list such as `align,analyze`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stages(pub BTreeSet<Stage>);

impl Stages {
    pub fn all() -> Self {
        Stages(Stage::ALL.into_iter().collect())
    }

    /// Every stage up to and including `last`.
    pub fn through(last: Stage) -> Self {
        Stages(Stage::ALL.into_iter().filter(|s| *s <= last).collect())
    }

    pub fn contains(&self, s: Stage) -> bool {
        self.0.contains(&s)
    }
}

impl Default for Stages {
    fn default() -> Self {
        Self::all()
    }
}

impl FromStr for Stages {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.trim() == "all" {
            return Ok(Self::all());
        }
        let mut out = BTreeSet::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let stage = Stage::ALL
                .into_iter()
                .find(|st| st.name() == part)
                .ok_or_else(|| format!("unknown stage {part:?}"))?;
            out.insert(stage);
        }
        if out.is_empty() {
            return Err("no stages given".into());
        }
        Ok(Stages(out))
    }
}

/// Which judgment backend to use, plus an optional shared response cache.
#[derive(Clone)]
pub enum AnnotatorSource {
    Stub(StubAnnotator),
    Llm(Arc<LlmBackend>),
}

#[derive(Clone)]
pub struct Annotators {
    source: AnnotatorSource,
    cache: Option<Arc<ResponseCache>>,
}

impl Annotators {
    pub fn new(source: AnnotatorSource, cache: Option<Arc<ResponseCache>>) -> Self {
        Annotators { source, cache }
    }

    /// Builds the configured backend. LM runs always cache, under
    /// `<out_dir>/cache` unless a cache directory is configured.
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        match cfg.annotator.backend {
            Backend::Stub => {
                let cache = cfg
                    .cache_dir
                    .as_ref()
                    .map(|d| Arc::new(ResponseCache::new(d)));
                Annotators::new(AnnotatorSource::Stub(cfg.annotator.stub), cache)
            }
            Backend::Llm => {
                let dir = cfg
                    .cache_dir
                    .clone()
                    .unwrap_or_else(|| cfg.out_dir.join("cache"));
                let backend = Arc::new(LlmBackend::from_env(cfg.annotator.llm.clone()));
                Annotators::new(
                    AnnotatorSource::Llm(backend),
                    Some(Arc::new(ResponseCache::new(dir))),
                )
            }
        }
    }

    pub fn id(&self) -> String {
        match &self.source {
            AnnotatorSource::Stub(s) => s.id(),
            AnnotatorSource::Llm(b) => b.id(),
        }
    }

    pub fn cache(&self) -> Option<&ResponseCache> {
        self.cache.as_deref()
    }

    /// An annotator resolving screenshot references against `frames_root`.
    pub fn for_frames(&self, frames_root: &Path) -> Box<dyn Annotator> {
        match (&self.source, &self.cache) {
            (AnnotatorSource::Stub(s), None) => Box::new(*s),
            (AnnotatorSource::Stub(s), Some(c)) => Box::new(Cached::new(*s, c.clone())),
            (AnnotatorSource::Llm(b), None) => Box::new(LlmAnnotator::new(b.clone(), frames_root)),
            (AnnotatorSource::Llm(b), Some(c)) => Box::new(Cached::new(
                LlmAnnotator::new(b.clone(), frames_root),
                c.clone(),
            )),
        }
    }

    fn backend_requests(&self) -> Option<usize> {
        match &self.source {
            AnnotatorSource::Stub(_) => None,
            AnnotatorSource::Llm(b) => Some(b.requests()),
        }
    }
}

/// Segmentation output: visual boundaries and the merged segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentsArtifact {
    pub visual_boundaries: Vec<usize>,
    pub segments: Vec<Segment>,
}

pub fn segment_trajectory(
    t: &Trajectory,
    cfg: &PipelineConfig,
    annotator: &dyn Annotator,
    frames: &PngFrames,
) -> Result<SegmentsArtifact> {
    let visual_boundaries = detect_boundaries_with(t, &cfg.boundary, frames, cfg.frame_mismatch)?;
    let visual = segments_from_boundaries(t.len(), &visual_boundaries);
    let segments = semantic_merge(t, &visual, annotator, frames)?;
    Ok(SegmentsArtifact {
        visual_boundaries,
        segments,
    })
}

pub fn induce_workflow(
    t: &Trajectory,
    segments: &[Segment],
    cfg: &PipelineConfig,
    annotator: &dyn Annotator,
    fingerprint: &str,
) -> Result<Workflow> {
    let skeleton = build_skeleton(t, segments, &cfg.hierarchy)?;
    Ok(annotate_goals(&skeleton, t, annotator, fingerprint)?)
}

/// Agreement between judged and manual labels; absent label lists are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<AgreementReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modularity: Option<AgreementReport>,
}

pub fn agreement(report: &QualityReport, labels: &StepLabels) -> Result<Agreement> {
    let k = |judged: Vec<bool>, manual: &[bool]| -> Result<Option<AgreementReport>> {
        if manual.is_empty() {
            return Ok(None);
        }
        Ok(Some(cohens_kappa(&judged, manual)?))
    };
    Ok(Agreement {
        consistency: k(report.consistency_labels(), &labels.consistency)?,
        modularity: k(report.modularity_labels(), &labels.modularity)?,
    })
}

/// Annotator proposal, then manual edits, then metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub result: AlignmentResult,
    pub warnings: Vec<MatchWarning>,
}

pub fn align_pair(
    a: &Workflow,
    b: &Workflow,
    level: u32,
    annotator: &dyn Annotator,
    edits: Option<&MatchEdits>,
) -> Result<PairOutcome> {
    let (len_a, len_b) = (a.steps(level)?.len(), b.steps(level)?.len());
    let proposal = propose_matches(a, b, level, annotator)?;
    let matches = match edits {
        Some(e) => apply_manual_refinement(&proposal.matches, e, len_a, len_b)?,
        None => proposal.matches,
    };
    Ok(PairOutcome {
        result: compute_metrics(&matches, len_a, len_b, level),
        warnings: proposal.warnings,
    })
}

/// One cell of the per-task alignment matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAlignment {
    pub task_id: String,
    /// Trajectory directory names.
    pub a: String,
    pub b: String,
    pub a_worker: String,
    pub b_worker: String,
    pub result: AlignmentResult,
    /// Agent progress against a human reference (A agent, B human only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress_percent: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<MatchWarning>,
}

fn swapped(r: &AlignmentResult) -> AlignmentResult {
    let matches: Vec<StepMatch> = r
        .matches
        .iter()
        .map(|m| StepMatch::new(m.b_range, m.a_range, m.source))
        .collect();
    let mut sorted = matches;
    sorted.sort_by_key(|m| (m.a_range, m.b_range));
    compute_metrics(&sorted, r.len_b, r.len_a, r.level)
}

fn identity(w: &Workflow, level: u32) -> Result<AlignmentResult> {
    let n = w.steps(level)?.len();
    let matches: Vec<StepMatch> = (0..n).map(|i| StepMatch::one_to_one(i, i)).collect();
    Ok(compute_metrics(&matches, n, n, level))
}

/// Efficiency comparison result, or why it was skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOutcome {
    pub group_by: String,
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<CohortReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub level: u32,
    pub steps: usize,
    pub consistency_score: f64,
    pub modularity_score: f64,
}

/// Per-trajectory analytics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRow {
    pub dir: String,
    pub worker_id: String,
    pub record: MemberRecord,
    pub reduction: ReductionStats,
    pub quality: QualitySummary,
    pub programmatic_steps: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramUse {
    pub basis: ProgramUseBasis,
    pub overall: Option<f64>,
    pub by_worker_kind: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    tool: &'static str,
    version: &'static str,
    prompt_version: &'static str,
    fingerprint: &'a str,
    annotator_id: String,
    config: &'a PipelineConfig,
    trajectories: Vec<String>,
    artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<StageTiming>,
    pub cache_hits: Option<usize>,
    pub cache_misses: Option<usize>,
    pub backend_requests: Option<usize>,
}

/// One manifest entry bound to its run subdirectory.
#[derive(Debug, Clone)]
struct Job {
    name: String,
    dir: PathBuf,
    entry: ManifestEntry,
    frames_root: PathBuf,
}

impl Job {
    fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

fn dir_name(i: usize, path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let clean: String = stem
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{i:03}_{clean}")
}

pub const SUMMARY: &str = "summary.json";
pub const TIMINGS: &str = "timings.json";

pub struct Pipeline {
    pub resolved: Resolved,
    pub corpus: Corpus,
    pub annotators: Annotators,
    run_dir: PathBuf,
    jobs: Vec<Job>,
}

/// Reads a stored session, reporting absence as a missing stage input.
fn read_trajectory(stage: Stage, path: &Path) -> Result<Trajectory> {
    if !path.exists() {
        return Err(Error::MissingArtifact {
            stage: stage.name().into(),
            path: path.to_path_buf(),
        });
    }
    session::read_session(path)
}

/// First error in input order, so failures are reported deterministically.
fn first_error<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results.into_iter().collect()
}

impl Pipeline {
    pub fn new(resolved: Resolved, corpus: Corpus, annotators: Annotators) -> Self {
        let run_dir = resolved.config.out_dir.join(&resolved.fingerprint[..16]);
        let jobs = corpus
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let name = dir_name(i, &e.path);
                Job {
                    dir: run_dir.join("trajectories").join(&name),
                    name,
                    frames_root: e.path.parent().unwrap_or(Path::new(".")).to_path_buf(),
                    entry: e.clone(),
                }
            })
            .collect();
        Pipeline {
            resolved,
            corpus,
            annotators,
            run_dir,
            jobs,
        }
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    fn cfg(&self) -> &PipelineConfig {
        &self.resolved.config
    }

    /// Runs the requested stages in order and writes the run summary.
    pub fn run(&self, stages: &Stages) -> Result<PathBuf> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg().jobs.unwrap_or(0))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        fs::create_dir_all(&self.run_dir).map_err(|e| Error::io(&self.run_dir, e))?;
        let mut timings = Vec::new();
        for stage in Stage::ALL.into_iter().filter(|s| stages.contains(*s)) {
            let start = Instant::now();
            pool.install(|| self.run_stage(stage))?;
            timings.push(StageTiming {
                stage,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
        self.write_summary()?;
        let cache = self.annotators.cache();
        write_json(
            &self.run_dir.join(TIMINGS),
            &Timings {
                stages: timings,
                cache_hits: cache.map(|c| c.hits()),
                cache_misses: cache.map(|c| c.misses()),
                backend_requests: self.annotators.backend_requests(),
            },
        )?;
        Ok(self.run_dir.clone())
    }

    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        match stage {
            Stage::Ingest => self.per_trajectory(stage, &[], |j| self.ingest(j)),
            Stage::Preprocess => {
                self.per_trajectory(stage, &["session.jsonl"], |j| self.preprocess(j))
            }
            Stage::Segment => {
                self.per_trajectory(stage, &["preprocessed.jsonl"], |j| self.segment(j))
            }
            Stage::Induce => {
                self.per_trajectory(stage, &["preprocessed.jsonl", "segments.json"], |j| {
                    self.induce(j)
                })
            }
            Stage::Validate => {
                self.per_trajectory(stage, &["preprocessed.jsonl", "workflow.json"], |j| {
                    self.validate(j)
                })
            }
            Stage::Align => {
                self.require(stage, &["workflow.json"])?;
                self.align()
            }
            Stage::Analyze => {
                self.require(
                    stage,
                    &[
                        "preprocessed.jsonl",
                        "reduction.json",
                        "workflow.json",
                        "quality.json",
                    ],
                )?;
                self.analyze()
            }
            Stage::Report => emit_report(&self.run_dir, ReportFormat::Both),
        }
    }

    /// Fails on the first missing input, in manifest order.
    fn require(&self, stage: Stage, files: &[&str]) -> Result<()> {
        for j in &self.jobs {
            for f in files {
                let p = j.file(f);
                if !p.exists() {
                    return Err(Error::MissingArtifact {
                        stage: stage.name().into(),
                        path: p,
                    });
                }
            }
        }
        Ok(())
    }

    fn per_trajectory(
        &self,
        stage: Stage,
        inputs: &[&str],
        f: impl Fn(&Job) -> Result<()> + Sync,
    ) -> Result<()> {
        self.require(stage, inputs)?;
        let results: Vec<Result<()>> = self
            .jobs
            .par_iter()
            .map(|j| f(j).map_err(|e| e.in_stage(stage.name(), &j.name)))
            .collect();
        first_error(results).map(|_| ())
    }

    fn ingest(&self, j: &Job) -> Result<()> {
        let strictness = if self.cfg().strict_ingest {
            Strictness::Strict
        } else {
            Strictness::Lenient
        };
        let frames = PngFrames::new(&j.frames_root);
        let mut t = session::ingest_with_frames(&j.entry.path, strictness, &frames)?;
        if let Some(task) = &j.entry.task_id {
            if *task != t.task_id {
                return Err(Error::Config(format!(
                    "{}: manifest task_id {task:?} does not match session task_id {:?}",
                    j.entry.path.display(),
                    t.task_id
                )));
            }
        }
        if let Some(w) = &j.entry.worker {
            t.worker = w.clone();
        }
        // Unreadable screenshots stay on record in flags.json only.
        for f in &t.flags {
            t.events[f.index].screenshot = None;
        }
        write_json(&j.file("flags.json"), &t.flags)?;
        session::write_session(&t, &j.file("session.jsonl"))
    }

    fn preprocess(&self, j: &Job) -> Result<()> {
        let t = read_trajectory(Stage::Preprocess, &j.file("session.jsonl"))?;
        let (out, stats) = preprocess(&t, &self.cfg().preprocess);
        session::write_session(&out, &j.file("preprocessed.jsonl"))?;
        write_json(&j.file("reduction.json"), &stats)
    }

    fn segment(&self, j: &Job) -> Result<()> {
        let t = read_trajectory(Stage::Segment, &j.file("preprocessed.jsonl"))?;
        let frames = PngFrames::new(&j.frames_root).with_downscale(self.cfg().downscale);
        let ann = self.annotators.for_frames(&j.frames_root);
        let seg = segment_trajectory(&t, self.cfg(), &*ann, &frames)?;
        write_json(&j.file("segments.json"), &seg)
    }

    fn induce(&self, j: &Job) -> Result<()> {
        let t = read_trajectory(Stage::Induce, &j.file("preprocessed.jsonl"))?;
        let seg: SegmentsArtifact = read_input("induce", &j.file("segments.json"))?;
        let ann = self.annotators.for_frames(&j.frames_root);
        let w = induce_workflow(
            &t,
            &seg.segments,
            self.cfg(),
            &*ann,
            &self.resolved.fingerprint,
        )?;
        write_json(&j.file("workflow.json"), &w)
    }

    fn validate(&self, j: &Job) -> Result<()> {
        let t = read_trajectory(Stage::Validate, &j.file("preprocessed.jsonl"))?;
        let w: Workflow = read_input("validate", &j.file("workflow.json"))?;
        let ann = self.annotators.for_frames(&j.frames_root);
        let level = self.cfg().judge_level.resolve(&w);
        let report = assess(&w, &t, level, &*ann, self.cfg().stride)?;
        if let Some(path) = &j.entry.labels {
            let labels: StepLabels = artifacts::read_json(path)?;
            write_json(&j.file("agreement.json"), &agreement(&report, &labels)?)?;
        }
        write_json(&j.file("quality.json"), &report)
    }

    fn align(&self) -> Result<()> {
        let workflows: Vec<Workflow> = first_error(
            self.jobs
                .iter()
                .map(|j| {
                    read_input::<Workflow>("align", &j.file("workflow.json"))
                        .map_err(|e| e.in_stage("align", &j.name))
                })
                .collect(),
        )?;
        let kinds: Vec<WorkerKind> = first_error(
            self.jobs
                .iter()
                .map(|j| {
                    read_trajectory(Stage::Align, &j.file("session.jsonl")).map(|t| t.worker.kind)
                })
                .collect(),
        )?;
        let mut tasks: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, w) in workflows.iter().enumerate() {
            let task = &w.trajectory_ref.task_id;
            match tasks.iter_mut().find(|(t, _)| t == task) {
                Some((_, members)) => members.push(i),
                None => tasks.push((task.clone(), vec![i])),
            }
        }
        let pairs: Vec<(usize, usize)> = tasks
            .iter()
            .flat_map(|(_, m)| {
                m.iter()
                    .enumerate()
                    .flat_map(move |(x, &i)| m[x + 1..].iter().map(move |&j| (i, j)))
            })
            .collect();
        let level_spec = self.cfg().align_level;
        let computed: Vec<Result<PairOutcome>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                let (wa, wb) = (&workflows[i], &workflows[j]);
                let edits = self.resolved.overrides.for_pair(
                    &wa.trajectory_ref.task_id,
                    &wa.trajectory_ref.worker_id,
                    &wb.trajectory_ref.worker_id,
                );
                let ann = self.annotators.for_frames(&self.corpus.base);
                align_pair(
                    wa,
                    wb,
                    level_spec.resolve_pair(wa, wb),
                    &*ann,
                    edits.as_ref(),
                )
                .map_err(|e| {
                    e.in_stage(
                        "align",
                        &format!("{} x {}", self.jobs[i].name, self.jobs[j].name),
                    )
                })
            })
            .collect();
        let computed: BTreeMap<(usize, usize), PairOutcome> =
            pairs.into_iter().zip(first_error(computed)?).collect();

        let mut rows = Vec::new();
        for (task, members) in &tasks {
            for &i in members {
                for &j in members {
                    let (wa, wb) = (&workflows[i], &workflows[j]);
                    let (result, warnings) = if i == j {
                        (identity(wa, level_spec.resolve(wa))?, Vec::new())
                    } else if i < j {
                        let o = &computed[&(i, j)];
                        (o.result.clone(), o.warnings.clone())
                    } else {
                        (swapped(&computed[&(j, i)].result), Vec::new())
                    };
                    let progress_percent = (kinds[i] == WorkerKind::Agent
                        && kinds[j] == WorkerKind::Human)
                        .then(|| progress_of(wa, result.level, &result.matches, Side::A))
                        .transpose()?;
                    rows.push(PairAlignment {
                        task_id: task.clone(),
                        a: self.jobs[i].name.clone(),
                        b: self.jobs[j].name.clone(),
                        a_worker: wa.trajectory_ref.worker_id.clone(),
                        b_worker: wb.trajectory_ref.worker_id.clone(),
                        result,
                        progress_percent,
                        warnings,
                    });
                }
            }
        }
        write_json(&self.run_dir.join("alignment.json"), &rows)
    }

    fn results(&self) -> Result<Results> {
        let mut all = Results::new();
        let files = self.corpus.manifest.results.iter().chain(
            self.corpus
                .entries()
                .iter()
                .filter_map(|e| e.results.as_ref()),
        );
        for f in files.collect::<BTreeSet<_>>() {
            all.extend(read_results(f)?);
        }
        Ok(all)
    }

    fn analyze(&self) -> Result<()> {
        let alignment_path = self.run_dir.join("alignment.json");
        let alignment: Vec<PairAlignment> = read_input("analyze", &alignment_path)?;
        let results = self.results()?;
        let cfg = self.cfg();
        let rows: Vec<Result<(MemberRow, Vec<StepTool>)>> = self
            .jobs
            .par_iter()
            .map(|j| {
                self.member(j, &results)
                    .map_err(|e| e.in_stage("analyze", &j.name))
            })
            .collect();
        let (members, tools): (Vec<MemberRow>, Vec<Vec<StepTool>>) =
            first_error(rows)?.into_iter().unzip();
        for (j, t) in self.jobs.iter().zip(&tools) {
            write_json(&j.file("tools.json"), t)?;
        }

        let records: Vec<MemberRecord> = members.iter().map(|m| m.record.clone()).collect();
        let efficiency: Vec<ComparisonOutcome> = cfg
            .analytics
            .comparisons
            .iter()
            .map(|c| {
                let r = efficiency_report(
                    &records,
                    &c.group_by,
                    &c.reference,
                    &cfg.analytics.efficiency,
                );
                ComparisonOutcome {
                    group_by: c.group_by.clone(),
                    reference: c.reference.clone(),
                    skipped: r.as_ref().err().map(ToString::to_string),
                    report: r.ok(),
                }
            })
            .collect();

        let basis = cfg.analytics.program_use_basis;
        let mut by_kind: BTreeMap<String, Vec<Vec<StepTool>>> = BTreeMap::new();
        for (m, t) in members.iter().zip(&tools) {
            by_kind
                .entry(m.record.group("worker_kind"))
                .or_default()
                .push(t.clone());
        }
        let program_use = ProgramUse {
            basis,
            overall: program_use_rate(&tools, basis).ok(),
            by_worker_kind: by_kind
                .iter()
                .filter_map(|(k, ts)| Some((k.clone(), program_use_rate(ts, basis).ok()?)))
                .collect(),
        };

        let by_dir: BTreeMap<&str, &MemberRecord> = members
            .iter()
            .map(|m| (m.dir.as_str(), &m.record))
            .collect();
        let breakdown: BTreeMap<String, Vec<BreakdownRow>> = cfg
            .analytics
            .breakdown_keys
            .iter()
            .map(|key| {
                let pairs: Vec<PairRecord> = alignment
                    .iter()
                    .filter(|p| p.a != p.b)
                    .filter_map(|p| {
                        Some(PairRecord {
                            group_a: by_dir.get(p.a.as_str())?.group(key),
                            group_b: by_dir.get(p.b.as_str())?.group(key),
                            matching_percent: p.result.matching_percent,
                            order_percent: p.result.order_percent,
                            progress_percent: p.progress_percent,
                        })
                    })
                    .collect();
                (key.clone(), alignment_breakdown(&pairs))
            })
            .collect();

        let dir = self.run_dir.join("analytics");
        write_json(&dir.join("members.json"), &members)?;
        write_json(&dir.join("efficiency.json"), &efficiency)?;
        write_json(&dir.join("program_use.json"), &program_use)?;
        write_json(&dir.join("breakdown.json"), &breakdown)
    }

    fn member(&self, j: &Job, results: &Results) -> Result<(MemberRow, Vec<StepTool>)> {
        let t = read_trajectory(Stage::Analyze, &j.file("preprocessed.jsonl"))?;
        let w: Workflow = read_input("analyze", &j.file("workflow.json"))?;
        let reduction: ReductionStats = read_input("analyze", &j.file("reduction.json"))?;
        let quality: QualityReport = read_input("analyze", &j.file("quality.json"))?;
        let tools = label_tools(
            &w,
            &t,
            self.cfg().analytics.tool_level.resolve(&w),
            &self.resolved.rules,
        )?;

        let wm = &t.worker;
        let mut keys = BTreeMap::new();
        keys.insert("worker_kind".to_string(), wm.kind.as_str().to_string());
        keys.insert("worker_id".to_string(), wm.worker_id.clone());
        let optional = [
            ("framework", wm.framework.clone()),
            ("backbone", wm.backbone.clone()),
            ("ai_usage", wm.ai_usage.map(|a| a.as_str().to_string())),
            ("skill", j.entry.skill.clone()),
        ];
        for (k, v) in optional {
            if let Some(v) = v {
                keys.insert(k.to_string(), v);
            }
        }
        let row = results.get(&(t.task_id.clone(), wm.worker_id.clone()));
        let programmatic_steps = tools.iter().filter(|s| s.programmatic).count();
        let record = MemberRecord {
            task_id: t.task_id.clone(),
            keys,
            actions: t.len(),
            elapsed_seconds: t.elapsed_seconds,
            cost_usd: row.and_then(|r| r.cost_usd).or(wm.cost_usd),
            success: row.and_then(|r| r.success),
            programmatic: Some(programmatic_steps > 0),
        };
        let member = MemberRow {
            dir: j.name.clone(),
            worker_id: wm.worker_id.clone(),
            record,
            reduction,
            quality: QualitySummary {
                level: quality.level,
                steps: quality.per_step.len(),
                consistency_score: quality.consistency_score,
                modularity_score: quality.modularity_score,
            },
            programmatic_steps,
            steps: tools.len(),
        };
        Ok((member, tools))
    }

    fn write_summary(&self) -> Result<()> {
        let mut config = self.cfg().clone();
        config.cache_dir = None;
        config.jobs = None;
        config.out_dir = PathBuf::new();
        let summary = Summary {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            prompt_version: PROMPT_VERSION,
            fingerprint: &self.resolved.fingerprint,
            annotator_id: self.annotators.id(),
            config: &config,
            trajectories: self.jobs.iter().map(|j| j.name.clone()).collect(),
            artifacts: artifact_hashes(&self.run_dir)?,
        };
        write_json(&self.run_dir.join(SUMMARY), &summary)
    }
}

/// SHA-256 of every run artifact except the summary and timings, keyed by
/// path relative to the run directory.
pub fn artifact_hashes(run_dir: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .map(|e| e.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
            .collect::<Result<_>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                let rel = p
                    .strip_prefix(root)
                    .unwrap_or(&p)
                    .to_string_lossy()
                    .replace('\\', "/");
                if rel != SUMMARY && rel != TIMINGS {
                    out.insert(rel, artifacts::sha256_file(&p)?);
                }
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(run_dir, run_dir, &mut out)?;
    Ok(out)
}
