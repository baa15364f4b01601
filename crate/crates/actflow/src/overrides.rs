//! Manual alignment edits keyed by task and worker pair.

use std::path::Path;

use actflow_core::alignment::{MatchEdits, RangePair, ReplaceEdit};
use serde::{Deserialize, Serialize};

use crate::artifacts;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairOverride {
    pub task_id: String,
    /// Worker id on side A.
    pub a: String,
    /// Worker id on side B.
    pub b: String,
    #[serde(flatten)]
    pub edits: MatchEdits,
}

/// A JSON list of [`PairOverride`] records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Overrides(pub Vec<PairOverride>);

fn swap(p: RangePair) -> RangePair {
    RangePair { a: p.b, b: p.a }
}

/// The same edits with sides A and B exchanged.
pub fn mirror(e: &MatchEdits) -> MatchEdits {
    MatchEdits {
        delete: e.delete.iter().copied().map(swap).collect(),
        replace: e
            .replace
            .iter()
            .map(|r| ReplaceEdit {
                from: swap(r.from),
                to: swap(r.to),
            })
            .collect(),
        add: e.add.iter().copied().map(swap).collect(),
    }
}

impl Overrides {
    pub fn load(path: &Path) -> Result<Self> {
        artifacts::read_json(path)
    }

    /// Edits for aligning worker `a` against worker `b` on `task`. Records
    /// written for the reverse direction are mirrored; both directions
    /// present is resolved in favor of the exact one.
    pub fn for_pair(&self, task: &str, a: &str, b: &str) -> Option<MatchEdits> {
        let exact = self
            .0
            .iter()
            .find(|o| o.task_id == task && o.a == a && o.b == b);
        if let Some(o) = exact {
            return Some(o.edits.clone());
        }
        self.0
            .iter()
            .find(|o| o.task_id == task && o.a == b && o.b == a)
            .map(|o| mirror(&o.edits))
    }
}
