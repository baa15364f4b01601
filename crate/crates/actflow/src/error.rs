//! Error type for IO, pipeline and CLI, with process exit-code mapping.

use std::io;
use std::path::PathBuf;

use actflow_core::alignment::AlignmentError;
use actflow_core::analytics::AnalyticsError;
use actflow_core::annotator::AnnotatorError;
use actflow_core::hierarchy::HierarchyError;
use actflow_core::quality::QualityError;
use actflow_core::segment::SegmentError;
use actflow_core::trace::ValidationReport;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INPUT: i32 = 1;
    pub const BACKEND: i32 = 2;
    pub const INVARIANT: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("{path}: timestamps decrease at event indices {indices:?}")]
    NonMonotonic { path: PathBuf, indices: Vec<usize> },
    #[error("{path}:{line}: unknown event kind {kind:?}")]
    UnknownKind {
        path: PathBuf,
        line: usize,
        kind: String,
    },
    #[error("{path}: {} invariant violation(s): {}", report.len(), summarize(report))]
    Invalid {
        path: PathBuf,
        report: ValidationReport,
    },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage {stage} is missing its input {path}")]
    MissingArtifact { stage: String, path: PathBuf },
    #[error(transparent)]
    Annotator(#[from] AnnotatorError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Alignment(#[from] AlignmentError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("stage {stage} failed for {trajectory}: {source}")]
    Stage {
        stage: String,
        trajectory: String,
        source: Box<Error>,
    },
}

fn summarize(report: &ValidationReport) -> String {
    report
        .violations
        .iter()
        .take(5)
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &str, trajectory: &str) -> Self {
        Error::Stage {
            stage: stage.into(),
            trajectory: trajectory.into(),
            source: Box::new(self),
        }
    }

    /// 1 for bad input, 2 for annotator backend failures, 3 for broken internal
    /// invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::NonMonotonic { .. }
            | Error::UnknownKind { .. }
            | Error::Invalid { .. }
            | Error::Config(_)
            | Error::MissingArtifact { .. } => exit::INPUT,
            Error::Annotator(e) => annotator_code(e),
            Error::Segment(e) => segment_code(e),
            Error::Hierarchy(e) => hierarchy_code(e),
            Error::Quality(e) => match e {
                QualityError::Hierarchy(h) => hierarchy_code(h),
                QualityError::Annotator { source, .. } => annotator_code(source),
                QualityError::LengthMismatch { .. }
                | QualityError::Empty
                | QualityError::TrajectoryMismatch { .. } => exit::INPUT,
            },
            Error::Alignment(e) => match e {
                AlignmentError::Hierarchy(h) => hierarchy_code(h),
                AlignmentError::Annotator(a) => annotator_code(a),
                _ => exit::INPUT,
            },
            Error::Analytics(e) => match e {
                AnalyticsError::Hierarchy(h) => hierarchy_code(h),
                _ => exit::INPUT,
            },
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

fn annotator_code(e: &AnnotatorError) -> i32 {
    match e {
        AnnotatorError::Malformed { .. } => exit::INVARIANT,
        _ => exit::BACKEND,
    }
}

fn segment_code(e: &SegmentError) -> i32 {
    match e {
        SegmentError::Policy(_) | SegmentError::Frame { .. } => exit::INPUT,
        SegmentError::Annotator { source, .. } => annotator_code(source),
        SegmentError::Partition { .. } => exit::INVARIANT,
    }
}

fn hierarchy_code(e: &HierarchyError) -> i32 {
    match e {
        HierarchyError::Config(_)
        | HierarchyError::Empty
        | HierarchyError::LevelOutOfRange { .. } => exit::INPUT,
        HierarchyError::Segments(s) => segment_code(s),
        HierarchyError::Structure { .. } => exit::INVARIANT,
        HierarchyError::Annotator { source, .. } => annotator_code(source),
        HierarchyError::EmptyGoal { .. } => exit::BACKEND,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_by_category() {
        let io = Error::io("x", io::Error::new(io::ErrorKind::NotFound, "gone"));
        assert_eq!(io.exit_code(), exit::INPUT);
        let backend = Error::Annotator(AnnotatorError::Exhausted {
            attempts: 3,
            last: "503".into(),
        });
        assert_eq!(backend.exit_code(), exit::BACKEND);
        let broken = Error::Segment(SegmentError::Partition {
            len: 3,
            detail: "gap".into(),
        });
        assert_eq!(broken.exit_code(), exit::INVARIANT);
        let nested = broken.in_stage("segment", "t1/h1");
        assert_eq!(nested.exit_code(), exit::INVARIANT);
        assert!(nested.to_string().contains("t1/h1"));
    }
}
