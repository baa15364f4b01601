//! Token normalization shared by the stub annotator and tool rules.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

/// Lowercased alphanumeric tokens, in order of appearance.
pub fn tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

pub fn token_set(s: &str) -> BTreeSet<String> {
    tokens(s).into_iter().collect()
}

/// Canonical form used for goal equality: tokens joined by single spaces.
pub fn normalize(s: &str) -> String {
    tokens(s).join(" ")
}

/// |a ∩ b| / |a ∪ b|; zero when both are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Fraction of `goal` tokens that also occur in `other`; zero for an empty goal.
pub fn overlap(goal: &BTreeSet<String>, other: &BTreeSet<String>) -> f64 {
    if goal.is_empty() {
        return 0.0;
    }
    goal.intersection(other).count() as f64 / goal.len() as f64
}

/// Normalizes a free-form identifier to lowercase with underscores.
pub fn snake_case(s: &str) -> String {
    s.trim()
        .chars()
        .map(|c| {
            if c.is_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                '_'
            }
        })
        .flat_map(|c| c.to_lowercase())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation() {
        assert_eq!(
            tokens("Open report.PDF now"),
            ["open", "report", "pdf", "now"]
        );
    }

    #[test]
    fn overlap_of_report_goal() {
        let goal = token_set("open report file");
        let args = token_set("report.pdf");
        let o = overlap(&goal, &args);
        assert!((o - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn jaccard_empty_is_zero() {
        assert_eq!(jaccard(&BTreeSet::new(), &BTreeSet::new()), 0.0);
    }

    #[test]
    fn snake_case_kinds() {
        assert_eq!(snake_case(" Double-Click "), "double_click");
        assert_eq!(snake_case("Swipe"), "swipe");
    }
}
