//! Corpus manifests and external results files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use actflow_core::WorkerMeta;
use serde::{Deserialize, Serialize};

use crate::artifacts;
use crate::error::{Error, Result};

pub const DEFAULT_SKILLS: [&str; 6] = [
    "data analysis",
    "engineering",
    "computation",
    "writing",
    "design",
    "administrative",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Session file, relative to the manifest.
    pub path: PathBuf,
    /// Checked against the session header when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<String>,
    /// Replaces the session header's worker metadata.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker: Option<WorkerMeta>,
    /// Results file for this trajectory; the manifest-level file otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<PathBuf>,
    /// Manual per-step quality labels for agreement checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    #[serde(default = "default_skills")]
    pub skills: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub results: Option<PathBuf>,
    pub trajectories: Vec<ManifestEntry>,
}

fn default_skills() -> Vec<String> {
    DEFAULT_SKILLS.iter().map(|s| s.to_string()).collect()
}

/// A loaded manifest with paths made absolute and warnings collected.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub base: PathBuf,
    pub warnings: Vec<String>,
}

impl CorpusManifest {
    /// Checks path uniqueness; unknown skills are returned as warnings.
    pub fn check(&self, label: &Path) -> Result<Vec<String>> {
        let mut seen = BTreeSet::new();
        for e in &self.trajectories {
            if !seen.insert(&e.path) {
                return Err(Error::Config(format!(
                    "{}: trajectory path {} listed more than once",
                    label.display(),
                    e.path.display()
                )));
            }
        }
        Ok(self
            .trajectories
            .iter()
            .filter_map(|e| {
                let s = e.skill.as_ref()?;
                (!self.skills.contains(s)).then(|| {
                    format!(
                        "{}: skill {s:?} is not in the declared vocabulary",
                        e.path.display()
                    )
                })
            })
            .collect())
    }
}

impl Corpus {
    pub fn load(path: &Path) -> Result<Self> {
        let mut manifest: CorpusManifest = artifacts::read_json(path)?;
        let warnings = manifest.check(path)?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let abs = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        manifest.results.as_mut().map(abs);
        for e in &mut manifest.trajectories {
            abs(&mut e.path);
            e.results.as_mut().map(abs);
            e.labels.as_mut().map(abs);
        }
        Ok(Corpus {
            manifest,
            base,
            warnings,
        })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.manifest.trajectories
    }
}

/// One row of a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task_id: String,
    pub worker_id: String,
    #[serde(default)]
    pub success: Option<bool>,
    #[serde(default)]
    pub cost_usd: Option<f64>,
}

/// Results keyed by (task id, worker id).
pub type Results = BTreeMap<(String, String), ResultRow>;

/// Reads a CSV with columns `task_id,worker_id,success,cost_usd`; empty
/// cells mean unknown.
pub fn read_results(path: &Path) -> Result<Results> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Results::new();
    for row in r.deserialize() {
        let row: ResultRow = row.map_err(|e| csv_error(path, e))?;
        out.insert((row.task_id.clone(), row.worker_id.clone()), row);
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            detail: format!("{kind:?}"),
        },
    }
}

/// Manual per-step labels for one trajectory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLabels {
    #[serde(default)]
    pub consistency: Vec<bool>,
    #[serde(default)]
    pub modularity: Vec<bool>,
}
