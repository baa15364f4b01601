//! The judgment boundary used by segmentation, goal annotation, quality
//! judging and step matching.
//!
//! Every query is an [`AnnotatorRequest`]; an [`Annotator`] answers it. The
//! [`StubAnnotator`] answers with fixed rules and no shared state; LM-backed
//! implementations (with caching and retries) live in the `actflow` crate and
//! use [`prompts`] and [`parse`] from here so that rendering and parsing stay
//! pure and testable.

pub mod parse;
pub mod prompts;
mod stub;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::trace::{EventKind, FrameRef, RawEvent};

pub use stub::StubAnnotator;

/// Bumped whenever prompt wording or payload rendering changes; part of every
/// cache key.
pub const PROMPT_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    SameSoftware,
    SummarizeGoal,
    Consistency,
    Modularity,
    MatchSteps,
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RequestKind::SameSoftware => "same_software",
            RequestKind::SummarizeGoal => "summarize_goal",
            RequestKind::Consistency => "consistency",
            RequestKind::Modularity => "modularity",
            RequestKind::MatchSteps => "match_steps",
        })
    }
}

/// One action as shown to a judge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionItem {
    pub kind: EventKind,
    #[serde(default)]
    pub args: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app: Option<String>,
}

impl ActionItem {
    pub fn text(&self) -> String {
        let mut args: Vec<String> = Vec::with_capacity(self.args.len());
        for (k, v) in &self.args {
            args.push(alloc::format!("{k}={v}"));
        }
        match &self.app {
            Some(app) => alloc::format!("{}({}) [{}]", self.kind, args.join(", "), app),
            None => alloc::format!("{}({})", self.kind, args.join(", ")),
        }
    }
}

impl From<&RawEvent> for ActionItem {
    fn from(e: &RawEvent) -> Self {
        ActionItem {
            kind: e.kind.clone(),
            args: e.args.clone(),
            app: e.app.clone(),
        }
    }
}

/// A screen state: the screenshot reference plus cheap descriptors computed
/// when the frame was loaded. The histogram doubles as a content digest in
/// cache keys.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Screen {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub app: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarySource {
    /// Leaf and micro-step nodes: summarize from actions and a sampled state.
    Actions {
        actions: Vec<ActionItem>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        state: Option<Screen>,
    },
    /// Higher nodes: summarize from the ordered child goals.
    Children { goals: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Payload {
    SameSoftware {
        left: Screen,
        right: Screen,
        left_actions: Vec<ActionItem>,
        right_actions: Vec<ActionItem>,
    },
    SummarizeGoal(SummarySource),
    Consistency {
        goal: String,
        actions: Vec<ActionItem>,
        states: Vec<Screen>,
    },
    Modularity {
        goals: Vec<String>,
        focal: usize,
    },
    MatchSteps {
        a: Vec<String>,
        b: Vec<String>,
    },
}

impl Payload {
    pub fn kind(&self) -> RequestKind {
        match self {
            Payload::SameSoftware { .. } => RequestKind::SameSoftware,
            Payload::SummarizeGoal(_) => RequestKind::SummarizeGoal,
            Payload::Consistency { .. } => RequestKind::Consistency,
            Payload::Modularity { .. } => RequestKind::Modularity,
            Payload::MatchSteps { .. } => RequestKind::MatchSteps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorRequest {
    pub prompt_version: String,
    #[serde(flatten)]
    pub payload: Payload,
}

impl AnnotatorRequest {
    pub fn new(payload: Payload) -> Self {
        AnnotatorRequest {
            prompt_version: PROMPT_VERSION.into(),
            payload,
        }
    }

    pub fn kind(&self) -> RequestKind {
        self.payload.kind()
    }

    /// Checks the payload is complete for its kind.
    pub fn check(&self) -> Result<(), AnnotatorError> {
        let incomplete = |what: &str| {
            Err(AnnotatorError::Malformed {
                kind: self.kind(),
                detail: what.into(),
            })
        };
        match &self.payload {
            Payload::Modularity { goals, focal } if *focal >= goals.len() => {
                incomplete("focal index outside goal list")
            }
            Payload::SummarizeGoal(SummarySource::Children { goals }) if goals.is_empty() => {
                incomplete("no child goals")
            }
            Payload::SummarizeGoal(SummarySource::Actions { actions, .. })
                if actions.is_empty() =>
            {
                incomplete("no actions")
            }
            _ => Ok(()),
        }
    }
}

/// A 1:1 or interval match between step ranges (0-based, inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatchPair {
    pub a: (usize, usize),
    pub b: (usize, usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<MatchPair>>,
    /// Backend transcript (the model's raw reply, or the stub's rule trace).
    pub raw: String,
    /// Set when served from a response cache; never persisted.
    #[serde(skip)]
    pub cached: bool,
}

impl AnnotatorResponse {
    pub fn verdict(v: bool, raw: impl Into<String>) -> Self {
        AnnotatorResponse {
            verdict: Some(v),
            raw: raw.into(),
            ..Default::default()
        }
    }

    pub fn text(t: impl Into<String>, raw: impl Into<String>) -> Self {
        AnnotatorResponse {
            text: Some(t.into()),
            raw: raw.into(),
            ..Default::default()
        }
    }

    pub fn pairs(p: Vec<MatchPair>, raw: impl Into<String>) -> Self {
        AnnotatorResponse {
            pairs: Some(p),
            raw: raw.into(),
            ..Default::default()
        }
    }

    /// Exactly the fields appropriate to `kind` are set.
    pub fn fits(&self, kind: RequestKind) -> bool {
        let (v, t, p) = (
            self.verdict.is_some(),
            self.text.is_some(),
            self.pairs.is_some(),
        );
        match kind {
            RequestKind::SameSoftware | RequestKind::Consistency | RequestKind::Modularity => {
                v && !t && !p
            }
            RequestKind::SummarizeGoal => !v && t && !p,
            RequestKind::MatchSteps => !v && !t && p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnnotatorError {
    #[error("backend error: {0}")]
    Backend(String),
    #[error("backend failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("could not parse {kind} reply: {raw:?}")]
    Parse { kind: RequestKind, raw: String },
    #[error("credential missing: set {var}")]
    MissingCredential { var: String },
    #[error("malformed {kind} request/response: {detail}")]
    Malformed { kind: RequestKind, detail: String },
    #[error("cache error: {0}")]
    Cache(String),
}

/// Answers annotator requests. Implementations must be deterministic for a
/// given request when replayed from cache.
pub trait Annotator {
    /// Backend identifier recorded in every workflow it annotates.
    fn id(&self) -> String;

    fn call(&self, req: &AnnotatorRequest) -> Result<AnnotatorResponse, AnnotatorError>;

    fn judge_same_software(
        &self,
        left: Screen,
        right: Screen,
        left_actions: Vec<ActionItem>,
        right_actions: Vec<ActionItem>,
    ) -> Result<bool, AnnotatorError> {
        let req = AnnotatorRequest::new(Payload::SameSoftware {
            left,
            right,
            left_actions,
            right_actions,
        });
        verdict_of(&req, self.call(&req)?)
    }

    fn summarize_goal(&self, source: SummarySource) -> Result<String, AnnotatorError> {
        let req = AnnotatorRequest::new(Payload::SummarizeGoal(source));
        let resp = self.call(&req)?;
        resp.text.ok_or(AnnotatorError::Malformed {
            kind: RequestKind::SummarizeGoal,
            detail: "response carries no text".into(),
        })
    }

    fn judge_consistency(
        &self,
        goal: String,
        actions: Vec<ActionItem>,
        states: Vec<Screen>,
    ) -> Result<bool, AnnotatorError> {
        let req = AnnotatorRequest::new(Payload::Consistency {
            goal,
            actions,
            states,
        });
        verdict_of(&req, self.call(&req)?)
    }

    fn judge_modularity(&self, goals: Vec<String>, focal: usize) -> Result<bool, AnnotatorError> {
        let req = AnnotatorRequest::new(Payload::Modularity { goals, focal });
        verdict_of(&req, self.call(&req)?)
    }

    fn propose_step_matches(
        &self,
        a: Vec<String>,
        b: Vec<String>,
    ) -> Result<Vec<MatchPair>, AnnotatorError> {
        let req = AnnotatorRequest::new(Payload::MatchSteps { a, b });
        let resp = self.call(&req)?;
        resp.pairs.ok_or(AnnotatorError::Malformed {
            kind: RequestKind::MatchSteps,
            detail: "response carries no pairs".into(),
        })
    }
}

fn verdict_of(req: &AnnotatorRequest, resp: AnnotatorResponse) -> Result<bool, AnnotatorError> {
    resp.verdict.ok_or_else(|| AnnotatorError::Malformed {
        kind: req.kind(),
        detail: "response carries no verdict".into(),
    })
}

impl<A: Annotator + ?Sized> Annotator for &A {
    fn id(&self) -> String {
        (**self).id()
    }

    fn call(&self, req: &AnnotatorRequest) -> Result<AnnotatorResponse, AnnotatorError> {
        (**self).call(req)
    }
}

impl<A: Annotator + ?Sized> Annotator for alloc::boxed::Box<A> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn call(&self, req: &AnnotatorRequest) -> Result<AnnotatorResponse, AnnotatorError> {
        (**self).call(req)
    }
}

impl<A: Annotator + ?Sized> Annotator for alloc::sync::Arc<A> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn call(&self, req: &AnnotatorRequest) -> Result<AnnotatorResponse, AnnotatorError> {
        (**self).call(req)
    }
}
