//! Command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use actflow_core::alignment::MatchEdits;
use actflow_core::preprocess::preprocess;
use actflow_core::quality::assess;
use actflow_core::{BoundaryPolicy, Workflow};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::artifacts::{self, to_json};
use crate::config::{Backend, LevelSpec, PipelineConfig, Resolved};
use crate::error::{Error, Result};
use crate::frames::PngFrames;
use crate::manifest::{Corpus, StepLabels};
use crate::pipeline::{self, Agreement, Annotators, Pipeline, SegmentsArtifact, Stage, Stages};
use crate::report::{self, ReportFormat};
use crate::session::{self, Strictness};
use crate::synth;

/// Workflow induction and analysis for computer-use activity logs. The LM
/// credential is read from the environment variable named in the config
/// (ACTFLOW_API_KEY by default).
#[derive(Debug, Parser)]
#[command(name = "actflow", version)]
pub struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Judgment backend; overrides the config.
    #[arg(long, global = true, value_enum)]
    pub annotator: Option<Backend>,
    /// Annotator response cache directory.
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    /// Worker threads for per-trajectory stages (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Stages to run, `all` or a comma list (ingest,preprocess,segment,induce,validate,align,analyze,report).
    #[arg(long, global = true)]
    pub stages: Option<Stages>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and check a session file; prints the normalized session.
    Ingest {
        session: PathBuf,
        /// Reject unknown kinds and unreadable screenshots.
        #[arg(long)]
        strict: bool,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Merge raw events; prints reduction stats.
    Preprocess {
        session: PathBuf,
        /// Preprocessed session output; stdout when omitted (stats then go to stderr).
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Split a session into segments.
    Segment {
        session: PathBuf,
        /// Fixed MSE threshold in (0, 1].
        #[arg(long, conflicts_with = "adaptive_k")]
        threshold: Option<f64>,
        /// Adaptive threshold: mean + k * std of the session's MSE series.
        #[arg(long)]
        adaptive_k: Option<f64>,
        /// Screenshot root; the session's directory by default.
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Build a goal-annotated workflow from a session and its segments.
    Induce {
        session: PathBuf,
        /// Segments file from `segment`; segmentation runs inline when omitted.
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Judge a workflow's consistency and modularity.
    Validate {
        workflow: PathBuf,
        /// The session the workflow was induced from.
        #[arg(long)]
        session: PathBuf,
        /// Hierarchy level, or `top`.
        #[arg(long)]
        level: Option<LevelSpec>,
        /// Manual per-step labels for agreement (kappa).
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        frames: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Align two workflows, or every same-task pair of a corpus.
    Align {
        /// Two workflow files (pair mode).
        #[arg(num_args = 0..=2)]
        workflows: Vec<PathBuf>,
        /// Match edits applied after the annotator's proposal (pair mode).
        #[arg(long)]
        overrides: Option<PathBuf>,
        #[arg(long)]
        level: Option<LevelSpec>,
        /// Corpus manifest (cohort mode); runs the stages up to `align` unless
        /// --stages is given, then prints the alignment matrix table.
        #[arg(long, conflicts_with_all = ["workflows", "overrides"])]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Cohort analytics over a corpus; runs the stages up to `analyze` unless --stages is given.
    Analyze {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Emit tables and plot data for a run.
    Report {
        #[arg(long, required_unless_present = "run_dir")]
        manifest: Option<PathBuf>,
        /// An existing run directory.
        #[arg(long, conflicts_with = "manifest")]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Both)]
        format: ReportFormat,
    },
    /// Run the pipeline over a corpus; prints the run directory.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write the bundled synthetic corpus.
    Synth {
        dir: PathBuf,
        #[arg(long, default_value_t = synth::DEFAULT_SEED)]
        seed: u64,
    },
}

impl Cli {
    fn config(&self, out_dir: Option<&Path>) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(b) = self.annotator {
            cfg.annotator.backend = b;
        }
        if let Some(d) = &self.cache_dir {
            cfg.cache_dir = Some(d.clone());
        }
        if let Some(j) = self.jobs {
            cfg.jobs = Some(j);
        }
        if let Some(d) = out_dir {
            cfg.out_dir = d.to_path_buf();
        }
        Ok(cfg)
    }

    fn stages_or(&self, last: Stage) -> Stages {
        self.stages.clone().unwrap_or_else(|| Stages::through(last))
    }

    fn pipeline(&self, manifest: &Path, out_dir: Option<&Path>) -> Result<Pipeline> {
        let cfg = self.config(out_dir)?;
        let annotators = Annotators::from_config(&cfg);
        let corpus = Corpus::load(manifest)?;
        for w in &corpus.warnings {
            eprintln!("warning: {w}");
        }
        Ok(Pipeline::new(cfg.resolve()?, corpus, annotators))
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => artifacts::write_atomic(p, bytes),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    emit(out, &to_json(value))
}

fn frames_root(session: &Path, frames: Option<&PathBuf>) -> PathBuf {
    frames
        .cloned()
        .unwrap_or_else(|| session.parent().unwrap_or(Path::new(".")).to_path_buf())
}

#[derive(Serialize)]
struct ValidateOutput {
    #[serde(flatten)]
    report: actflow_core::QualityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    agreement: Option<Agreement>,
}

pub fn run(cli: &Cli) -> Result<()> {
    let resolved = |cli: &Cli| -> Result<(Resolved, Annotators)> {
        let cfg = cli.config(None)?;
        let a = Annotators::from_config(&cfg);
        Ok((cfg.resolve()?, a))
    };
    match &cli.command {
        Command::Ingest {
            session: path,
            strict,
            out,
        } => {
            let strictness = if *strict {
                Strictness::Strict
            } else {
                Strictness::Lenient
            };
            let t = session::ingest_trajectory(path, strictness)?;
            session::write_flags(&t.flags, &mut std::io::stderr())
                .map_err(|e| Error::io("<stderr>", e))?;
            emit(out.as_deref(), session::session_string(&t).as_bytes())
        }
        Command::Preprocess { session: path, out } => {
            let (r, _) = resolved(cli)?;
            let t = session::read_session(path)?;
            let (p, stats) = preprocess(&t, &r.config.preprocess);
            match out {
                Some(o) => {
                    session::write_session(&p, o)?;
                    emit_json(None, &stats)
                }
                None => {
                    emit(None, session::session_string(&p).as_bytes())?;
                    eprint!("{}", String::from_utf8_lossy(&to_json(&stats)));
                    Ok(())
                }
            }
        }
        Command::Segment {
            session: path,
            threshold,
            adaptive_k,
            frames,
            out,
        } => {
            let mut cfg = cli.config(None)?;
            if let Some(threshold) = threshold {
                cfg.boundary = BoundaryPolicy::Absolute {
                    threshold: *threshold,
                };
            }
            if let Some(k) = adaptive_k {
                cfg.boundary = BoundaryPolicy::Adaptive { k: *k };
            }
            let annotators = Annotators::from_config(&cfg);
            let r = cfg.resolve()?;
            let t = session::read_session(path)?;
            let root = frames_root(path, frames.as_ref());
            let src = PngFrames::new(&root).with_downscale(r.config.downscale);
            let seg =
                pipeline::segment_trajectory(&t, &r.config, &*annotators.for_frames(&root), &src)?;
            emit_json(out.as_deref(), &seg)
        }
        Command::Induce {
            session: path,
            segments,
            frames,
            out,
        } => {
            let (r, annotators) = resolved(cli)?;
            let t = session::read_session(path)?;
            let root = frames_root(path, frames.as_ref());
            let ann = annotators.for_frames(&root);
            let segs = match segments {
                Some(p) => artifacts::read_json::<SegmentsArtifact>(p)?.segments,
                None => {
                    let src = PngFrames::new(&root).with_downscale(r.config.downscale);
                    pipeline::segment_trajectory(&t, &r.config, &*ann, &src)?.segments
                }
            };
            let w = pipeline::induce_workflow(&t, &segs, &r.config, &*ann, &r.fingerprint)?;
            emit_json(out.as_deref(), &w)
        }
        Command::Validate {
            workflow,
            session: path,
            level,
            labels,
            frames,
            out,
        } => {
            let (r, annotators) = resolved(cli)?;
            let w: Workflow = artifacts::read_json(workflow)?;
            let t = session::read_session(path)?;
            let ann = annotators.for_frames(&frames_root(path, frames.as_ref()));
            let level = level.unwrap_or(r.config.judge_level).resolve(&w);
            let report = assess(&w, &t, level, &*ann, r.config.stride)?;
            let agreement = match labels {
                Some(p) => Some(pipeline::agreement(
                    &report,
                    &artifacts::read_json::<StepLabels>(p)?,
                )?),
                None => None,
            };
            emit_json(out.as_deref(), &ValidateOutput { report, agreement })
        }
        Command::Align {
            workflows,
            overrides,
            level,
            manifest,
            out_dir,
            out,
        } => match manifest {
            Some(m) => {
                let mut p = cli.pipeline(m, out_dir.as_deref())?;
                if let Some(l) = level {
                    p.resolved.config.align_level = *l;
                }
                p.run(&cli.stages_or(Stage::Align))?;
                let rows: Vec<pipeline::PairAlignment> =
                    artifacts::read_json(&p.run_dir().join("alignment.json"))?;
                emit(out.as_deref(), &report::alignment_matrix_csv(&rows)?)
            }
            None => {
                let [a, b] = workflows.as_slice() else {
                    return Err(Error::Config(
                        "align needs two workflow files or --manifest".into(),
                    ));
                };
                let (r, annotators) = resolved(cli)?;
                let wa: Workflow = artifacts::read_json(a)?;
                let wb: Workflow = artifacts::read_json(b)?;
                let edits: Option<MatchEdits> =
                    overrides.as_deref().map(artifacts::read_json).transpose()?;
                let level = level.unwrap_or(r.config.align_level).resolve_pair(&wa, &wb);
                let ann = annotators.for_frames(Path::new("."));
                let outcome = pipeline::align_pair(&wa, &wb, level, &*ann, edits.as_ref())?;
                emit_json(out.as_deref(), &outcome)
            }
        },
        Command::Analyze { manifest, out_dir } => {
            let p = cli.pipeline(manifest, out_dir.as_deref())?;
            p.run(&cli.stages_or(Stage::Analyze))?;
            println!("{}", p.run_dir().join("analytics").display());
            Ok(())
        }
        Command::Report {
            manifest,
            run_dir,
            out_dir,
            format,
        } => {
            let dir = match (run_dir, manifest) {
                (Some(d), _) => d.clone(),
                (None, Some(m)) => cli.pipeline(m, out_dir.as_deref())?.run_dir().to_path_buf(),
                (None, None) => {
                    return Err(Error::Config("report needs --manifest or --run-dir".into()))
                }
            };
            report::emit_report(&dir, *format)?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Run { manifest, out_dir } => {
            let p = cli.pipeline(manifest, out_dir.as_deref())?;
            let dir = p.run(cli.stages.as_ref().unwrap_or(&Stages::all()))?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Synth { dir, seed } => {
            let manifest = synth::write_corpus(dir, *seed)?;
            println!("{}", manifest.display());
            Ok(())
        }
    }
}
