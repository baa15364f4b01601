use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    ActionItem, Annotator, AnnotatorError, AnnotatorRequest, AnnotatorResponse, MatchPair, Payload,
    Screen, SummarySource,
};
use crate::frame::histogram_distance;
use crate::text::{jaccard, normalize, overlap, token_set, tokens};
use crate::trace::EventKind;

/// Rule-based annotator for offline, reproducible runs. A pure function of
/// the request; holds no state beyond its thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubAnnotator {
    /// Screens without app labels count as the same software when their
    /// intensity histograms are closer than this.
    pub tau_h: f64,
    /// Minimum fraction of goal tokens found in the actions for a consistent step.
    pub tau_c: f64,
    /// Minimum goal-token Jaccard similarity for two steps to match.
    pub tau_m: f64,
}

impl Default for StubAnnotator {
    fn default() -> Self {
        StubAnnotator {
            tau_h: 0.1,
            tau_c: 0.2,
            tau_m: 0.5,
        }
    }
}

/// Arg keys holding free content or numbers rather than an object name.
const CONTENT_KEYS: [&str; 8] = [
    "text", "content", "thought", "message", "x", "y", "dx", "dy",
];

fn verb(kind: &EventKind) -> String {
    let v = match kind {
        EventKind::Click => "click",
        EventKind::RightClick => "right-click",
        EventKind::DoubleClick => "open",
        EventKind::Keypress => "type",
        EventKind::Scroll => "scroll",
        EventKind::Zoom => "zoom",
        EventKind::Noop => "wait",
        EventKind::BrowseInteractive => "browse",
        EventKind::Run => "run",
        EventKind::RunIpython => "run python",
        EventKind::Edit => "edit",
        EventKind::Read => "read",
        EventKind::Create => "create",
        EventKind::Search => "search",
        EventKind::SearchImage => "search images",
        EventKind::OpenImage => "view",
        EventKind::GenerateImage => "generate",
        EventKind::Think => "plan",
        EventKind::Message => "report",
        EventKind::TaskTracking => "track",
        EventKind::ResetEnvironment => "reset",
        EventKind::Custom(name) => return name.replace('_', " "),
    };
    v.into()
}

fn default_object(kind: &EventKind) -> &'static str {
    match kind {
        EventKind::Click | EventKind::RightClick | EventKind::DoubleClick => "element",
        EventKind::Keypress => "text",
        EventKind::Scroll | EventKind::BrowseInteractive => "page",
        EventKind::Zoom => "view",
        EventKind::Run => "command",
        EventKind::RunIpython => "code",
        EventKind::Edit | EventKind::Read | EventKind::Create => "file",
        EventKind::Search | EventKind::SearchImage => "web",
        EventKind::OpenImage | EventKind::GenerateImage => "image",
        EventKind::Think => "approach",
        EventKind::Message => "progress",
        EventKind::TaskTracking => "tasks",
        _ => "item",
    }
}

/// Most frequent item; ties go to the first one seen.
fn most_frequent<T: Ord + Clone>(items: impl Iterator<Item = T>) -> Option<T> {
    let mut counts: BTreeMap<T, (usize, usize)> = BTreeMap::new();
    for (pos, item) in items.enumerate() {
        counts.entry(item).or_insert((0, pos)).0 += 1;
    }
    counts
        .into_iter()
        .max_by(|(_, (ca, pa)), (_, (cb, pb))| ca.cmp(cb).then(pb.cmp(pa)))
        .map(|(item, _)| item)
}

fn summarize_actions(actions: &[ActionItem]) -> String {
    let Some(kind) = most_frequent(actions.iter().map(|a| a.kind.clone())) else {
        return "do nothing".into();
    };
    let object = most_frequent(
        actions
            .iter()
            .flat_map(|a| a.args.iter())
            .filter(|(k, _)| !CONTENT_KEYS.contains(&k.as_str()))
            .flat_map(|(_, v)| tokens(v))
            .filter(|t| t.len() >= 3 && t.chars().any(char::is_alphabetic)),
    )
    .unwrap_or_else(|| default_object(&kind).into());
    let app = most_frequent(actions.iter().filter_map(|a| a.app.clone()));
    match app {
        Some(app) => format!("{} {} in {}", verb(&kind), object, app),
        None => format!("{} {}", verb(&kind), object),
    }
}

fn summarize_children(goals: &[String]) -> String {
    let mut parts: Vec<&str> = Vec::new();
    for g in goals {
        if parts
            .last()
            .is_none_or(|last| normalize(last) != normalize(g))
        {
            parts.push(g);
        }
    }
    parts.join("; ")
}

fn action_tokens(actions: &[ActionItem]) -> alloc::collections::BTreeSet<String> {
    actions.iter().flat_map(|a| token_set(&a.text())).collect()
}

impl StubAnnotator {
    fn same_software(&self, left: &Screen, right: &Screen) -> (bool, String) {
        match (&left.app, &right.app) {
            (Some(a), Some(b)) => (a == b, format!("apps {a:?} vs {b:?}")),
            _ => match (&left.histogram, &right.histogram) {
                (Some(h1), Some(h2)) => {
                    let d = histogram_distance(h1, h2);
                    (
                        d < self.tau_h,
                        format!("histogram distance {d:.6} vs tau_h {}", self.tau_h),
                    )
                }
                _ => (false, "no app labels or histograms".into()),
            },
        }
    }

    /// Greedy 1:1 pairing by descending goal-token Jaccard, ties broken by
    /// ascending `(i, j)`.
    pub fn match_goals(&self, a: &[String], b: &[String]) -> Vec<MatchPair> {
        let sa: Vec<_> = a.iter().map(|g| token_set(g)).collect();
        let sb: Vec<_> = b.iter().map(|g| token_set(g)).collect();
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (i, x) in sa.iter().enumerate() {
            for (j, y) in sb.iter().enumerate() {
                let s = jaccard(x, y);
                if s >= self.tau_m && s > 0.0 {
                    candidates.push((s, i, j));
                }
            }
        }
        candidates.sort_by(|p, q| q.0.total_cmp(&p.0).then((p.1, p.2).cmp(&(q.1, q.2))));
        let mut used_a = alloc::vec![false; a.len()];
        let mut used_b = alloc::vec![false; b.len()];
        let mut out = Vec::new();
        for (_, i, j) in candidates {
            if !used_a[i] && !used_b[j] {
                used_a[i] = true;
                used_b[j] = true;
                out.push(MatchPair {
                    a: (i, i),
                    b: (j, j),
                });
            }
        }
        out.sort();
        out
    }
}

fn yes_no(v: bool) -> &'static str {
    if v {
        "YES"
    } else {
        "NO"
    }
}

impl Annotator for StubAnnotator {
    fn id(&self) -> String {
        format!(
            "stub(tau_h={},tau_c={},tau_m={})",
            self.tau_h, self.tau_c, self.tau_m
        )
    }

    fn call(&self, req: &AnnotatorRequest) -> Result<AnnotatorResponse, AnnotatorError> {
        req.check()?;
        let resp = match &req.payload {
            Payload::SameSoftware { left, right, .. } => {
                let (v, why) = self.same_software(left, right);
                AnnotatorResponse::verdict(v, format!("{} ({why})", yes_no(v)))
            }
            Payload::SummarizeGoal(SummarySource::Actions { actions, .. }) => {
                let s = summarize_actions(actions);
                AnnotatorResponse::text(s.clone(), s)
            }
            Payload::SummarizeGoal(SummarySource::Children { goals }) => {
                let s = summarize_children(goals);
                AnnotatorResponse::text(s.clone(), s)
            }
            Payload::Consistency { goal, actions, .. } => {
                if actions.is_empty() {
                    AnnotatorResponse::verdict(true, "YES (no actions)")
                } else {
                    let o = overlap(&token_set(goal), &action_tokens(actions));
                    let v = o >= self.tau_c;
                    AnnotatorResponse::verdict(
                        v,
                        format!("{} (overlap {o:.6} vs tau_c {})", yes_no(v), self.tau_c),
                    )
                }
            }
            Payload::Modularity { goals, focal } => {
                let me = normalize(&goals[*focal]);
                let prev = focal.checked_sub(1).map(|i| normalize(&goals[i]));
                let next = goals.get(focal + 1).map(|g| normalize(g));
                let repeated = prev.as_ref() == Some(&me) || next.as_ref() == Some(&me);
                AnnotatorResponse::verdict(
                    !repeated,
                    format!("{} (adjacent duplicate: {repeated})", yes_no(!repeated)),
                )
            }
            Payload::MatchSteps { a, b } => {
                let pairs = self.match_goals(a, b);
                let raw = pairs
                    .iter()
                    .map(|p| format!("A {} = B {}", p.a.0 + 1, p.b.0 + 1))
                    .collect::<Vec<_>>()
                    .join("\n");
                AnnotatorResponse::pairs(
                    pairs,
                    if raw.is_empty() {
                        "NONE".to_string()
                    } else {
                        raw
                    },
                )
            }
        };
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn action(kind: EventKind, args: &[(&str, &str)], app: Option<&str>) -> ActionItem {
        ActionItem {
            kind,
            args: args
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            app: app.map(Into::into),
        }
    }

    fn screen(app: Option<&str>, hist: Option<Vec<f64>>) -> Screen {
        Screen {
            frame: None,
            app: app.map(Into::into),
            histogram: hist,
        }
    }

    #[test]
    fn same_app_is_same_software() {
        let s = StubAnnotator::default();
        assert!(s
            .judge_same_software(
                screen(Some("Excel"), None),
                screen(Some("Excel"), None),
                vec![],
                vec![]
            )
            .unwrap());
        assert!(!s
            .judge_same_software(
                screen(Some("Excel"), None),
                screen(Some("Chrome"), None),
                vec![],
                vec![]
            )
            .unwrap());
    }

    #[test]
    fn histogram_fallback_without_apps() {
        let s = StubAnnotator::default();
        let h1 = vec![0.5, 0.5];
        let h2 = vec![0.55, 0.45];
        let h3 = vec![1.0, 0.0];
        assert!(s
            .judge_same_software(
                screen(None, Some(h1.clone())),
                screen(None, Some(h2)),
                vec![],
                vec![]
            )
            .unwrap());
        assert!(!s
            .judge_same_software(
                screen(None, Some(h1)),
                screen(None, Some(h3)),
                vec![],
                vec![]
            )
            .unwrap());
        assert!(!s
            .judge_same_software(screen(None, None), screen(None, None), vec![], vec![])
            .unwrap());
    }

    #[test]
    fn typing_summary() {
        let s = StubAnnotator::default();
        let acts = vec![action(
            EventKind::Keypress,
            &[("text", "quarterly numbers")],
            Some("Excel"),
        )];
        let goal = s
            .summarize_goal(SummarySource::Actions {
                actions: acts,
                state: None,
            })
            .unwrap();
        assert_eq!(goal, "type text in Excel");
    }

    #[test]
    fn command_summary_uses_arg_object() {
        let s = StubAnnotator::default();
        let acts = vec![
            action(
                EventKind::Run,
                &[("command", "python analyze.py")],
                Some("Terminal"),
            ),
            action(
                EventKind::Run,
                &[("command", "python plot.py")],
                Some("Terminal"),
            ),
        ];
        let goal = s
            .summarize_goal(SummarySource::Actions {
                actions: acts,
                state: None,
            })
            .unwrap();
        assert_eq!(goal, "run python in Terminal");
    }

    #[test]
    fn parent_summary_concatenates_children() {
        let s = StubAnnotator::default();
        let goal = s
            .summarize_goal(SummarySource::Children {
                goals: vec![
                    "setup the environment".into(),
                    "create the slide deck".into(),
                ],
            })
            .unwrap();
        assert_eq!(goal, "setup the environment; create the slide deck");
        let goal = s
            .summarize_goal(SummarySource::Children {
                goals: vec!["a b".into(), "A b".into(), "c".into()],
            })
            .unwrap();
        assert_eq!(goal, "a b; c");
    }

    #[test]
    fn consistency_overlap_rule() {
        let s = StubAnnotator::default();
        let acts = vec![action(EventKind::Click, &[("element", "report.pdf")], None)];
        assert!(s
            .judge_consistency("open report file".into(), acts.clone(), vec![])
            .unwrap());
        assert!(!s
            .judge_consistency("send the invoice email".into(), acts, vec![])
            .unwrap());
        assert!(s
            .judge_consistency("anything".into(), vec![], vec![])
            .unwrap());
    }

    #[test]
    fn modularity_adjacent_duplicates() {
        let s = StubAnnotator::default();
        let goals = vec![
            "clean data".into(),
            "Clean  data".into(),
            "plot chart".into(),
        ];
        assert!(!s.judge_modularity(goals.clone(), 0).unwrap());
        assert!(!s.judge_modularity(goals.clone(), 1).unwrap());
        assert!(s.judge_modularity(goals, 2).unwrap());
    }

    #[test]
    fn identical_goal_lists_match_identically() {
        let s = StubAnnotator::default();
        let g: Vec<String> = ["open sheet", "clean data", "open sheet", "plot chart"]
            .iter()
            .map(|x| x.to_string())
            .collect();
        let pairs = s.propose_step_matches(g.clone(), g.clone()).unwrap();
        let expect: Vec<MatchPair> = (0..4)
            .map(|i| MatchPair {
                a: (i, i),
                b: (i, i),
            })
            .collect();
        assert_eq!(pairs, expect);
    }

    #[test]
    fn disjoint_vocabularies_do_not_match() {
        let s = StubAnnotator::default();
        let pairs = s
            .propose_step_matches(vec!["alpha beta".into()], vec!["gamma delta".into()])
            .unwrap();
        assert!(pairs.is_empty());
    }

    #[test]
    fn stub_is_pure() {
        let s = StubAnnotator::default();
        let req = AnnotatorRequest::new(Payload::MatchSteps {
            a: vec!["x y".into()],
            b: vec!["x y".into()],
        });
        assert_eq!(s.call(&req).unwrap(), s.call(&req).unwrap());
    }
}
