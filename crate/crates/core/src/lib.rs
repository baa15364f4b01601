//! Core algorithms for turning computer-use activity traces into goal-labeled
//! hierarchical workflows, and for comparing workflows across workers.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is a pure
//! function of its inputs: file formats, image decoding, HTTP backends and the
//! response cache live in the `actflow` companion crate, which plugs into the
//! [`frame::FrameSource`] and [`annotator::Annotator`] traits defined here.
//!
//! Pipeline order:
//!
//! 1. [`trace`]: the event/trajectory model and its validation.
//! 2. [`preprocess`]: double-click detection, keypress and scroll run merging.
//! 3. [`segment`]: screenshot MSE boundaries, then annotator-driven merging.
//! 4. [`hierarchy`]: the event → micro-step → segment → group → root tree and
//!    bottom-up goal annotation.
//! 5. [`quality`]: consistency/modularity judging and Cohen's kappa.
//! 6. [`alignment`]: step matching, matching/order percentages, progress.
//! 7. [`analytics`]: tool labels, program-use rate, efficiency deltas.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod alignment;
pub mod analytics;
pub mod annotator;
pub mod fingerprint;
pub mod frame;
pub mod hierarchy;
pub mod preprocess;
pub mod quality;
pub mod segment;
pub mod text;
pub mod trace;

pub use alignment::{AlignmentResult, StepMatch};
pub use annotator::{
    Annotator, AnnotatorError, AnnotatorRequest, AnnotatorResponse, StubAnnotator,
};
pub use frame::{Frame, FrameError, FrameSource};
pub use hierarchy::{HierarchyConfig, Span, Step, Workflow, WorkflowNode};
pub use preprocess::{PreprocessConfig, ReductionStats};
pub use quality::{AgreementReport, Kappa, QualityReport};
pub use segment::{BoundaryPolicy, Segment};
pub use trace::{EventKind, FrameRef, RawEvent, Trajectory, WorkerKind, WorkerMeta};
