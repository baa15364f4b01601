//! Pipeline configuration (TOML) and its content fingerprint.

use std::fmt;
use std::path::{Path, PathBuf};

use actflow_core::analytics::{EfficiencyOptions, ProgramUseBasis, ToolRules};
use actflow_core::fingerprint;
use actflow_core::frame::MismatchPolicy;
use actflow_core::{BoundaryPolicy, HierarchyConfig, PreprocessConfig, StubAnnotator, Workflow};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::artifacts;
use crate::error::{Error, Result};
use crate::llm::LlmConfig;
use crate::overrides::Overrides;

/// A hierarchy level: a fixed number, or `"top"` for the root's children.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum LevelSpec {
    #[default]
    Top,
    Level(u32),
}

impl LevelSpec {
    pub fn resolve(self, w: &Workflow) -> u32 {
        match self {
            LevelSpec::Top => w.depth().saturating_sub(1),
            LevelSpec::Level(l) => l,
        }
    }

    /// The level used when comparing two workflows: `"top"` takes the lower
    /// of the two top levels so both sides are defined.
    pub fn resolve_pair(self, a: &Workflow, b: &Workflow) -> u32 {
        self.resolve(a).min(self.resolve(b))
    }
}

impl fmt::Display for LevelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LevelSpec::Top => f.write_str("top"),
            LevelSpec::Level(l) => write!(f, "{l}"),
        }
    }
}

impl std::str::FromStr for LevelSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "top" {
            return Ok(LevelSpec::Top);
        }
        s.parse()
            .map(LevelSpec::Level)
            .map_err(|_| format!("expected a level number or \"top\", got {s:?}"))
    }
}

impl Serialize for LevelSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LevelSpec::Top => s.serialize_str("top"),
            LevelSpec::Level(l) => s.serialize_u32(*l),
        }
    }
}

impl<'de> Deserialize<'de> for LevelSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u32),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(l) => Ok(LevelSpec::Level(l)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Stub,
    Llm,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backend::Stub => "stub",
            Backend::Llm => "llm",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotatorConfig {
    pub backend: Backend,
    pub stub: StubAnnotator,
    pub llm: LlmConfig,
}

/// One efficiency table: group members by `group_by`, compare to `reference`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub group_by: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalyticsConfig {
    /// Ordered tool rules file (TOML or JSON); the built-in table when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool_rules: Option<PathBuf>,
    pub tool_level: LevelSpec,
    pub program_use_basis: ProgramUseBasis,
    pub comparisons: Vec<Comparison>,
    pub efficiency: EfficiencyOptions,
    /// Keys for the alignment breakdown table.
    pub breakdown_keys: Vec<String>,
}

impl Default for AnalyticsConfig {
    fn default() -> Self {
        AnalyticsConfig {
            tool_rules: None,
            tool_level: LevelSpec::Top,
            program_use_basis: ProgramUseBasis::Trajectory,
            comparisons: vec![
                Comparison {
                    group_by: "worker_kind".into(),
                    reference: "human".into(),
                },
                Comparison {
                    group_by: "skill".into(),
                    reference: "data analysis".into(),
                },
            ],
            efficiency: EfficiencyOptions::default(),
            breakdown_keys: vec!["worker_kind".into(), "ai_usage".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub boundary: BoundaryPolicy,
    /// Integer box-downscale factor applied to frames before MSE.
    pub downscale: u32,
    /// How to compare consecutive screenshots of different sizes.
    pub frame_mismatch: MismatchPolicy,
    /// Reject unknown kinds and unreadable screenshots at ingestion.
    pub strict_ingest: bool,
    pub hierarchy: HierarchyConfig,
    pub judge_level: LevelSpec,
    /// Consistency judging samples every `stride`-th screenshot.
    pub stride: usize,
    pub align_level: LevelSpec,
    /// Manual match edits applied after the annotator proposes matches.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overrides: Option<PathBuf>,
    pub analytics: AnalyticsConfig,
    pub annotator: AnnotatorConfig,
    pub out_dir: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preprocess: PreprocessConfig::default(),
            boundary: BoundaryPolicy::default(),
            downscale: 1,
            frame_mismatch: MismatchPolicy::Error,
            strict_ingest: false,
            hierarchy: HierarchyConfig::default(),
            judge_level: LevelSpec::Top,
            stride: actflow_core::quality::DEFAULT_STRIDE,
            align_level: LevelSpec::Top,
            overrides: None,
            analytics: AnalyticsConfig::default(),
            annotator: AnnotatorConfig::default(),
            out_dir: PathBuf::from("out"),
            cache_dir: None,
            jobs: None,
        }
    }
}

/// The content that determines artifacts: everything except locations,
/// parallelism and transport tuning, with referenced files inlined.
#[derive(Serialize)]
struct Normalized<'a> {
    preprocess: &'a PreprocessConfig,
    boundary: &'a BoundaryPolicy,
    downscale: u32,
    frame_mismatch: MismatchPolicy,
    strict_ingest: bool,
    hierarchy: &'a HierarchyConfig,
    judge_level: LevelSpec,
    stride: usize,
    align_level: LevelSpec,
    overrides: &'a Overrides,
    tool_rules: &'a ToolRules,
    tool_level: LevelSpec,
    program_use_basis: ProgramUseBasis,
    comparisons: &'a [Comparison],
    efficiency: &'a EfficiencyOptions,
    breakdown_keys: &'a [String],
    backend: Backend,
    stub: Option<&'a StubAnnotator>,
    model: Option<(&'a str, &'a str, u32)>,
}

/// A loaded configuration with its referenced files resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: PipelineConfig,
    pub rules: ToolRules,
    pub overrides: Overrides,
    pub fingerprint: String,
}

impl PipelineConfig {
    /// Reads a TOML config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = artifacts::read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.analytics.tool_rules,
            &mut cfg.overrides,
            &mut cfg.cache_dir,
        ] {
            if let Some(p) = p.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.boundary
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        self.hierarchy
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.downscale == 0 {
            return Err(Error::Config("downscale must be >= 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be >= 1".into()));
        }
        if self
            .analytics
            .comparisons
            .iter()
            .any(|c| c.group_by.is_empty())
        {
            return Err(Error::Config(
                "comparison group_by must be non-empty".into(),
            ));
        }
        Ok(())
    }

    /// Validates, loads referenced files and computes the fingerprint.
    pub fn resolve(self) -> Result<Resolved> {
        self.validate()?;
        let rules = match &self.analytics.tool_rules {
            Some(p) => load_rules(p)?,
            None => ToolRules::default(),
        };
        let overrides = match &self.overrides {
            Some(p) => Overrides::load(p)?,
            None => Overrides::default(),
        };
        let fingerprint = self.fingerprint_with(&rules, &overrides);
        Ok(Resolved {
            config: self,
            rules,
            overrides,
            fingerprint,
        })
    }

    fn fingerprint_with(&self, rules: &ToolRules, overrides: &Overrides) -> String {
        let a = &self.analytics;
        let llm = &self.annotator.llm;
        let n = Normalized {
            preprocess: &self.preprocess,
            boundary: &self.boundary,
            downscale: self.downscale,
            frame_mismatch: self.frame_mismatch,
            strict_ingest: self.strict_ingest,
            hierarchy: &self.hierarchy,
            judge_level: self.judge_level,
            stride: self.stride,
            align_level: self.align_level,
            overrides,
            tool_rules: rules,
            tool_level: a.tool_level,
            program_use_basis: a.program_use_basis,
            comparisons: &a.comparisons,
            efficiency: &a.efficiency,
            breakdown_keys: &a.breakdown_keys,
            backend: self.annotator.backend,
            stub: (self.annotator.backend == Backend::Stub).then_some(&self.annotator.stub),
            model: (self.annotator.backend == Backend::Llm).then_some((
                llm.endpoint.as_str(),
                llm.model.as_str(),
                llm.max_image_edge,
            )),
        };
        fingerprint::of(&n)
    }
}

/// Reads an ordered rules file: `[[rules]]` tables in TOML, or `{"rules": [...]}` in JSON.
pub fn load_rules(path: &Path) -> Result<ToolRules> {
    if path.extension().is_some_and(|e| e == "json") {
        artifacts::read_json(path)
    } else {
        artifacts::read_toml(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let empty: PipelineConfig = toml::from_str("").unwrap();
        assert_eq!(empty, cfg);
    }

    #[test]
    fn fingerprint_ignores_location_and_jobs() {
        let a = PipelineConfig::default().resolve().unwrap();
        let b = PipelineConfig {
            jobs: Some(8),
            cache_dir: Some("c".into()),
            out_dir: "elsewhere".into(),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(a.fingerprint, b.fingerprint);
        let c = PipelineConfig {
            boundary: BoundaryPolicy::Adaptive { k: 3.0 },
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_ne!(a.fingerprint, c.fingerprint);
        let mut d = PipelineConfig::default();
        d.annotator.backend = Backend::Llm;
        assert_ne!(a.fingerprint, d.resolve().unwrap().fingerprint);
    }

    #[test]
    fn level_spec_parsing() {
        #[derive(Deserialize)]
        struct L {
            level: LevelSpec,
        }
        assert_eq!(
            toml::from_str::<L>("level = 2").unwrap().level,
            LevelSpec::Level(2)
        );
        assert_eq!(
            toml::from_str::<L>("level = \"top\"").unwrap().level,
            LevelSpec::Top
        );
        assert!(toml::from_str::<L>("level = \"middle\"").is_err());
    }

    #[test]
    fn rules_file_changes_fingerprint_and_resolves_relative() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("rules.toml"),
            "[[rules]]\nkinds = [\"click\"]\ntool_name = \"mouse\"\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("cfg.toml"),
            "stride = 5\n[analytics]\ntool_rules = \"rules.toml\"\n",
        )
        .unwrap();
        let r = PipelineConfig::load(&dir.path().join("cfg.toml"))
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(r.rules.rules.len(), 1);
        assert_eq!(r.rules.rules[0].tool_name, "mouse");
        assert_ne!(
            r.fingerprint,
            PipelineConfig {
                stride: 5,
                ..Default::default()
            }
            .resolve()
            .unwrap()
            .fingerprint
        );
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(PipelineConfig {
            stride: 0,
            ..Default::default()
        }
        .resolve()
        .is_err());
        let bad: std::result::Result<PipelineConfig, _> =
            toml::from_str("[boundary]\nmode = \"adaptive\"\nk = -1.0\n");
        assert!(bad.unwrap().resolve().is_err());
    }
}
