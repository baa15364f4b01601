//! Prompt texts and payload rendering for chat-style LM backends.
//!
//! The segment-merge, consistency and modularity instructions are shipped
//! verbatim; the goal-summary and step-matching instructions, and the
//! output-format lines appended to each, are this crate's own.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{ActionItem, AnnotatorRequest, Payload, Screen, SummarySource};
use crate::trace::FrameRef;

pub const SAME_SOFTWARE: &str = "Your task is to determine if the two computer screens focus on the same software.\nFor each screen, first identify the software it is focused on in the front, e.g., Google Chrome, VSCode, Finder, etc.\nThen, compare the software on the two screens. If they are the same, output `YES'. Otherwise, output `NO'.";

pub const CONSISTENCY: &str = "Your task is to determine if the action sequence aligns with the task goal. The actions may not have achieved the goal yet, return 'YES' as long as it attempts to progress towards the goal. If no action sequence is provided, return 'YES'.";

pub const MODULARITY: &str = "Evaluate whether the current task-solving step is clearly focused on causally consistent procedures or achieving the same final goal, instead of a concatenation of multiple distinct topics or interfaces.";

pub const SUMMARIZE_ACTIONS: &str = "Your task is to write the goal of a computer-use step. You are given the actions taken in the step and a screenshot of the final state. Write one short imperative phrase (at most 12 words) describing what the step accomplishes, e.g., 'apply formatting to data sheet'.";

pub const SUMMARIZE_CHILDREN: &str = "Your task is to write the goal of a computer-use step that is composed of finer-grained sub-steps. You are given the ordered goals of the sub-steps. Write one short imperative phrase (at most 12 words) that summarizes what the sub-steps accomplish together.";

pub const MATCH_STEPS: &str = "Your task is to align the steps of two workflows that solve the same task. Match each step interval of workflow A to the step interval of workflow B that serves the same purpose. A step may be left unmatched. Matches must not overlap on either side.";

const VERDICT_FORMAT: &str = "Answer with YES or NO first.";
const SUMMARY_FORMAT: &str = "Output only the goal phrase.";
const MATCH_FORMAT: &str = "Output one match per line in the form `A i-j = B k-l` using the 1-based step numbers shown (write `A i = B k` for single steps). Output NONE if no steps match.";

/// A rendered chat request: instruction, user content, attached images.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub system: String,
    pub user: String,
    pub images: Vec<FrameRef>,
}

fn actions_block(actions: &[ActionItem]) -> String {
    if actions.is_empty() {
        return String::from("(no actions)");
    }
    actions
        .iter()
        .enumerate()
        .map(|(i, a)| format!("{}. {}", i + 1, a.text()))
        .collect::<Vec<_>>()
        .join("\n")
}

fn numbered(goals: &[String]) -> String {
    goals
        .iter()
        .enumerate()
        .map(|(i, g)| format!("{}. {}", i + 1, g))
        .collect::<Vec<_>>()
        .join("\n")
}

fn push_screen(images: &mut Vec<FrameRef>, s: &Screen) -> String {
    match &s.frame {
        Some(f) => {
            images.push(f.clone());
            format!("[image {}]", images.len())
        }
        None => String::from("[no screenshot]"),
    }
}

pub fn render(req: &AnnotatorRequest) -> Rendered {
    let mut images = Vec::new();
    let (system, user) = match &req.payload {
        Payload::SameSoftware {
            left,
            right,
            left_actions,
            right_actions,
        } => {
            let l = push_screen(&mut images, left);
            let r = push_screen(&mut images, right);
            (
                format!("{SAME_SOFTWARE}\n{VERDICT_FORMAT}"),
                format!(
                    "Screen 1: {l}\nActions before screen 1:\n{}\n\nScreen 2: {r}\nActions after screen 2:\n{}",
                    actions_block(left_actions),
                    actions_block(right_actions)
                ),
            )
        }
        Payload::SummarizeGoal(SummarySource::Actions { actions, state }) => {
            let s = match state {
                Some(s) => push_screen(&mut images, s),
                None => String::from("[no screenshot]"),
            };
            (
                format!("{SUMMARIZE_ACTIONS}\n{SUMMARY_FORMAT}"),
                format!("Actions:\n{}\n\nFinal state: {s}", actions_block(actions)),
            )
        }
        Payload::SummarizeGoal(SummarySource::Children { goals }) => (
            format!("{SUMMARIZE_CHILDREN}\n{SUMMARY_FORMAT}"),
            format!("Sub-step goals:\n{}", numbered(goals)),
        ),
        Payload::Consistency {
            goal,
            actions,
            states,
        } => {
            let shots: Vec<String> = states.iter().map(|s| push_screen(&mut images, s)).collect();
            let body = if actions.is_empty() {
                String::new()
            } else {
                actions_block(actions)
            };
            (
                format!("{CONSISTENCY}\n{VERDICT_FORMAT}"),
                format!(
                    "Task goal: {goal}\nAction sequence:\n{body}\nSampled states: {}",
                    if shots.is_empty() {
                        String::from("(none)")
                    } else {
                        shots.join(" ")
                    }
                ),
            )
        }
        Payload::Modularity { goals, focal } => (
            format!("{MODULARITY}\n{VERDICT_FORMAT}"),
            format!(
                "Workflow steps:\n{}\n\nCurrent task-solving step: {}. {}",
                numbered(goals),
                focal + 1,
                goals.get(*focal).map(String::as_str).unwrap_or("")
            ),
        ),
        Payload::MatchSteps { a, b } => (
            format!("{MATCH_STEPS}\n{MATCH_FORMAT}"),
            format!(
                "Workflow A:\n{}\n\nWorkflow B:\n{}",
                numbered(a),
                numbered(b)
            ),
        ),
    };
    Rendered {
        system,
        user,
        images,
    }
}
