use std::path::Path;

use actflow::session::{parse_session, session_string, Strictness};
use actflow_core::trace::{EventKind, RawEvent, Trajectory, WorkerMeta};
use proptest::prelude::*;

fn event(faulty: u32) -> impl Strategy<Value = (u8, f64, bool, bool)> {
    let gap = prop_oneof![100 - faulty => 0.0f64..3.0, faulty => -1.0f64..0.0];
    let p = faulty as f64 / 100.0;
    (
        0u8..5,
        gap,
        prop::bool::weighted(1.0 - p),
        prop::bool::weighted(p / 4.0),
    )
}

/// Trajectories over known kinds; each event breaks an invariant with
/// probability about `faulty` percent.
fn trajectory(faulty: u32) -> impl Strategy<Value = Trajectory> {
    let events = prop::collection::vec(event(faulty), (faulty == 0) as usize..25);
    (
        events,
        prop::bool::weighted(faulty as f64 / 100.0),
        any::<bool>(),
    )
        .prop_map(|(specs, short_elapsed, human)| {
            let mut t = 0.0;
            let events: Vec<RawEvent> = specs
                .into_iter()
                .enumerate()
                .map(|(i, (kind, gap, ok, misnumber))| {
                    t = (t + gap).max(if gap < 0.0 { -0.5 } else { 0.0 });
                    let index = if misnumber { i + 1 } else { i };
                    match kind {
                        0 if ok => RawEvent::click(index, t, 4, 5),
                        0 => RawEvent::new(index, t, EventKind::Click),
                        1 => RawEvent::keypress(index, t, if ok { "hi" } else { "" }),
                        2 => RawEvent::scroll(index, t, if ok { 3 } else { 0 }),
                        3 => RawEvent::new(index, t, EventKind::Run).with_arg("command", "ls"),
                        _ => RawEvent::new(index, t, EventKind::Think),
                    }
                })
                .collect();
            let worker = if human {
                WorkerMeta::human("h")
            } else {
                WorkerMeta::agent("a", "oh")
            };
            let mut tr = Trajectory::new("task", worker, events);
            for (i, e) in tr.events.iter_mut().enumerate() {
                e.index = e.index.max(i);
            }
            if short_elapsed {
                tr.elapsed_seconds = 0.0;
            }
            tr
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn strict_ingest_accepts_exactly_valid_sessions(t in trajectory(10)) {
        let text = session_string(&t);
        let parsed = parse_session(&text, Path::new("s.jsonl"), Strictness::Strict, None);
        prop_assert_eq!(parsed.is_ok(), t.validate().is_empty(), "{:?}", parsed.err());
        if let Ok(p) = parsed {
            prop_assert_eq!(p, t);
        }
    }

    #[test]
    fn valid_sessions_round_trip(t in trajectory(0)) {
        prop_assert!(t.validate().is_empty());
        let text = session_string(&t);
        let back = parse_session(&text, Path::new("s.jsonl"), Strictness::Lenient, None).unwrap();
        prop_assert_eq!(session_string(&back), text);
        prop_assert_eq!(back, t);
    }
}

#[test]
fn unknown_kind_is_rejected_strictly_and_kept_leniently() {
    let text = concat!(
        r#"{"task_id":"t","worker":{"worker_id":"h","kind":"human"},"elapsed_seconds":2.0}"#,
        "\n",
        r#"{"index":0,"t":0.5,"kind":"teleport","args":{}}"#,
        "\n",
    );
    let strict = parse_session(text, Path::new("s.jsonl"), Strictness::Strict, None);
    assert!(
        matches!(strict, Err(actflow::Error::UnknownKind { line: 2, .. })),
        "{strict:?}"
    );
    let lenient = parse_session(text, Path::new("s.jsonl"), Strictness::Lenient, None).unwrap();
    assert_eq!(lenient.events[0].kind, EventKind::from_name("teleport"));
    assert!(!lenient.events[0].kind.is_known());
}
