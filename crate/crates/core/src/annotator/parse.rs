//! Parsing of free-form LM replies into typed responses.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{AnnotatorError, AnnotatorResponse, MatchPair, RequestKind};

/// The first standalone `yes`/`no` token, case-insensitive.
pub fn parse_verdict(raw: &str) -> Option<bool> {
    raw.split(|c: char| !c.is_alphanumeric()).find_map(|tok| {
        match tok.to_ascii_lowercase().as_str() {
            "yes" => Some(true),
            "no" => Some(false),
            _ => None,
        }
    })
}

/// First non-empty line, with a leading `Goal:` label and wrapping quotes removed.
pub fn parse_summary(raw: &str) -> Option<String> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = line
        .strip_prefix("Goal:")
        .or_else(|| line.strip_prefix("goal:"))
        .unwrap_or(line)
        .trim();
    let line = line.trim_end_matches('.').trim();
    let line = line
        .trim_matches(|c| matches!(c, '"' | '\'' | '`' | '*'))
        .trim();
    let line = line.trim_end_matches('.').trim();
    (!line.is_empty()).then(|| line.to_string())
}

fn parse_range(s: &str) -> Option<(usize, usize)> {
    let nums: Vec<usize> = s
        .split(|c: char| !c.is_ascii_digit())
        .filter(|t| !t.is_empty())
        .filter_map(|t| t.parse().ok())
        .collect();
    match nums.as_slice() {
        [a] if *a >= 1 => Some((a - 1, a - 1)),
        [a, b] if *a >= 1 && *b >= *a => Some((a - 1, b - 1)),
        _ => None,
    }
}

/// Lines of the form `A i-j = B k-l` (1-based) become 0-based pairs; lines
/// that do not parse are skipped. `NONE` yields an empty list.
pub fn parse_matches(raw: &str) -> Vec<MatchPair> {
    let mut out = Vec::new();
    for line in raw.lines() {
        let line = line.trim();
        let Some((lhs, rhs)) = line
            .split_once("<->")
            .or_else(|| line.split_once("->"))
            .or_else(|| line.split_once('='))
        else {
            continue;
        };
        let lhs = lhs.trim().trim_start_matches(['A', 'a']).trim();
        let rhs = rhs.trim().trim_start_matches(['B', 'b']).trim();
        if let (Some(a), Some(b)) = (parse_range(lhs), parse_range(rhs)) {
            out.push(MatchPair { a, b });
        }
    }
    out
}

/// Converts a raw reply into the response shape for `kind`.
pub fn parse_reply(kind: RequestKind, raw: &str) -> Result<AnnotatorResponse, AnnotatorError> {
    let fail = || AnnotatorError::Parse {
        kind,
        raw: raw.to_string(),
    };
    match kind {
        RequestKind::SameSoftware | RequestKind::Consistency | RequestKind::Modularity => {
            parse_verdict(raw)
                .map(|v| AnnotatorResponse::verdict(v, raw))
                .ok_or_else(fail)
        }
        RequestKind::SummarizeGoal => parse_summary(raw)
            .map(|t| AnnotatorResponse::text(t, raw))
            .ok_or_else(fail),
        RequestKind::MatchSteps => Ok(AnnotatorResponse::pairs(parse_matches(raw), raw)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chatty_yes() {
        assert_eq!(parse_verdict("yes, both screens show VSCode"), Some(true));
        assert_eq!(parse_verdict("Answer: NO. Different apps."), Some(false));
        assert_eq!(parse_verdict("'YES'"), Some(true));
        assert_eq!(parse_verdict("`NO'"), Some(false));
    }

    #[test]
    fn yes_must_be_standalone() {
        assert_eq!(parse_verdict("eyes nothing note"), None);
        assert_eq!(parse_verdict("Nothing here, but yes"), Some(true));
    }

    #[test]
    fn unparseable_verdict_errors() {
        let e = parse_reply(RequestKind::Consistency, "maybe").unwrap_err();
        assert!(matches!(e, AnnotatorError::Parse { .. }));
    }

    #[test]
    fn summary_strips_labels() {
        assert_eq!(
            parse_summary("\n  Goal: \"apply formatting to data sheet\".\nextra").as_deref(),
            Some("apply formatting to data sheet")
        );
        assert_eq!(parse_summary("   \n"), None);
    }

    #[test]
    fn matches_interval_and_single() {
        let m = parse_matches("A 1-2 = B 2\nA 3 = B 3-4\nnoise\nA 0 = B 1");
        assert_eq!(
            m,
            [
                MatchPair {
                    a: (0, 1),
                    b: (1, 1)
                },
                MatchPair {
                    a: (2, 2),
                    b: (2, 3)
                }
            ]
        );
        assert!(parse_matches("NONE").is_empty());
    }
}
