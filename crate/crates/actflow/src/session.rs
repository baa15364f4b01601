//! Line-delimited session files: a header line with task and worker metadata
//! followed by one JSON object per event.
//!
//! ```text
//! {"task_id":"t1","worker":{"worker_id":"h1","kind":"human"},"elapsed_seconds":12.5}
//! {"index":0,"t":0.0,"kind":"click","args":{"x":"10","y":"20"},"app":"Excel","screenshot":{"path":"f0.png"}}
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use actflow_core::trace::{non_monotonic_indices, EventFlag, RawEvent, Trajectory, WorkerMeta};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::PngFrames;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    task_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instruction: Option<String>,
    worker: WorkerMeta,
    elapsed_seconds: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    provenance: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Strictness {
    /// Any invariant violation or unknown kind aborts.
    Strict,
    /// Unknown kinds become custom kinds, unreadable screenshots are flagged,
    /// and events are renumbered.
    #[default]
    Lenient,
}

/// Parses session text; `label` names the source in errors. Screenshots are
/// checked against `frames` when given.
pub fn parse_session(
    text: &str,
    label: &Path,
    strictness: Strictness,
    frames: Option<&PngFrames>,
) -> Result<Trajectory> {
    let parse_err = |line: usize, detail: String| Error::Parse {
        path: label.to_path_buf(),
        line,
        detail,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let (hline, htext) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty session file".into()))?;
    let header: Header =
        serde_json::from_str(htext).map_err(|e| parse_err(hline, format!("bad header: {e}")))?;

    let mut events = Vec::new();
    for (line, text) in lines {
        let e: RawEvent =
            serde_json::from_str(text).map_err(|e| parse_err(line, format!("bad event: {e}")))?;
        if strictness == Strictness::Strict && !e.kind.is_known() {
            return Err(Error::UnknownKind {
                path: label.to_path_buf(),
                line,
                kind: e.kind.to_string(),
            });
        }
        events.push(e);
    }

    let bad = non_monotonic_indices(&events);
    if !bad.is_empty() {
        return Err(Error::NonMonotonic {
            path: label.to_path_buf(),
            indices: bad,
        });
    }

    let mut t = Trajectory {
        task_id: header.task_id,
        instruction: header.instruction,
        worker: header.worker,
        events,
        elapsed_seconds: header.elapsed_seconds,
        provenance: header.provenance,
        flags: Vec::new(),
    };
    if strictness == Strictness::Lenient {
        for (i, e) in t.events.iter_mut().enumerate() {
            e.index = i;
        }
    }
    if let Some(frames) = frames {
        t.flags = t
            .events
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                let r = e.screenshot.as_ref()?;
                frames.check(r).err().map(|reason| EventFlag {
                    index: i,
                    reason: format!("{}: {reason}", r.path),
                })
            })
            .collect();
    }

    let mut report = t.validate();
    if strictness == Strictness::Lenient {
        report
            .violations
            .retain(|v| v.invariant != actflow_core::trace::invariant::SCREENSHOT_RESOLVES);
    }
    if !report.is_empty() {
        return Err(Error::Invalid {
            path: label.to_path_buf(),
            report,
        });
    }
    Ok(t)
}

/// Reads a session file, resolving screenshots relative to its directory.
pub fn ingest_trajectory(path: &Path, strictness: Strictness) -> Result<Trajectory> {
    let frames = PngFrames::new(path.parent().unwrap_or(Path::new(".")));
    ingest_with_frames(path, strictness, &frames)
}

pub fn ingest_with_frames(
    path: &Path,
    strictness: Strictness,
    frames: &PngFrames,
) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_session(&text, path, strictness, Some(frames))
}

/// Reads a session previously written by [`write_session`]; screenshots are
/// not rechecked.
pub fn read_session(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_session(&text, path, Strictness::Lenient, None)
}

pub fn session_string(t: &Trajectory) -> String {
    let header = Header {
        task_id: t.task_id.clone(),
        instruction: t.instruction.clone(),
        worker: t.worker.clone(),
        elapsed_seconds: t.elapsed_seconds,
        provenance: t.provenance.clone(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for e in &t.events {
        out.push_str(&serde_json::to_string(e).expect("event serializes"));
        out.push('\n');
    }
    out
}

pub fn write_session(t: &Trajectory, path: &Path) -> Result<()> {
    crate::artifacts::write_atomic(path, session_string(t).as_bytes())
}

/// Writes flags (unreadable screenshots) as JSON lines, for `ingest` output.
pub fn write_flags(flags: &[EventFlag], out: &mut impl Write) -> std::io::Result<()> {
    for f in flags {
        writeln!(
            out,
            "{}",
            serde_json::to_string(f).expect("flag serializes")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use actflow_core::trace::EventKind;

    const HEADER: &str =
        r#"{"task_id":"t1","worker":{"worker_id":"h1","kind":"human"},"elapsed_seconds":5.0}"#;

    fn session(events: &[&str]) -> String {
        let mut s = String::from(HEADER);
        for e in events {
            s.push('\n');
            s.push_str(e);
        }
        s
    }

    fn parse(text: &str, strictness: Strictness) -> Result<Trajectory> {
        parse_session(text, Path::new("s.jsonl"), strictness, None)
    }

    #[test]
    fn three_event_file() {
        let text = session(&[
            r#"{"index":0,"t":0.0,"kind":"click","args":{"x":"1","y":"2"}}"#,
            r#"{"index":1,"t":1.0,"kind":"keypress","args":{"text":"hi"}}"#,
            r#"{"index":2,"t":2.0,"kind":"scroll","args":{"dy":"-3"}}"#,
        ]);
        let t = parse(&text, Strictness::Strict).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.flags.is_empty());
        let again = parse(&session_string(&t), Strictness::Strict).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn non_monotonic_lists_index() {
        let text = session(&[
            r#"{"index":0,"t":0.0,"kind":"noop"}"#,
            r#"{"index":1,"t":2.0,"kind":"noop"}"#,
            r#"{"index":2,"t":1.0,"kind":"noop"}"#,
        ]);
        for s in [Strictness::Strict, Strictness::Lenient] {
            match parse(&text, s) {
                Err(Error::NonMonotonic { indices, .. }) => assert_eq!(indices, [2]),
                other => panic!("expected non-monotonic error, got {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_kind_custom_or_error() {
        let text = session(&[r#"{"index":0,"t":0.0,"kind":"swipe","args":{"dir":"left"}}"#]);
        let t = parse(&text, Strictness::Lenient).unwrap();
        assert_eq!(t.events[0].kind, EventKind::Custom("swipe".into()));
        let back = parse(&session_string(&t), Strictness::Lenient).unwrap();
        assert_eq!(back.events[0].kind, EventKind::Custom("swipe".into()));
        match parse(&text, Strictness::Strict) {
            Err(Error::UnknownKind { line, kind, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(kind, "swipe");
            }
            other => panic!("expected unknown kind, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = session(&[r#"{"index":0,"t":0.0,"kind":"noop"}"#, "{not json"]);
        match parse(&text, Strictness::Lenient) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse("", Strictness::Lenient),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn unreadable_screenshots_flagged_or_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let text =
            session(&[r#"{"index":0,"t":0.0,"kind":"noop","screenshot":{"path":"missing.png"}}"#]);
        let frames = PngFrames::new(dir.path());
        let t = parse_session(&text, Path::new("s"), Strictness::Lenient, Some(&frames)).unwrap();
        assert_eq!(t.flags.len(), 1);
        assert_eq!(t.flags[0].index, 0);
        let strict = parse_session(&text, Path::new("s"), Strictness::Strict, Some(&frames));
        match strict {
            Err(Error::Invalid { report, .. }) => {
                assert_eq!(report.names(), ["screenshot-resolves"])
            }
            other => panic!("expected invalid, got {other:?}"),
        }
    }

    #[test]
    fn lenient_still_rejects_other_violations() {
        let text = session(&[r#"{"index":0,"t":0.0,"kind":"keypress","args":{"text":""}}"#]);
        match parse(&text, Strictness::Lenient) {
            Err(Error::Invalid { report, .. }) => assert_eq!(report.names(), ["keypress-nonempty"]),
            other => panic!("expected invalid, got {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        fs::write(
            &path,
            session(&[r#"{"index":0,"t":0.25,"kind":"run","args":{"command":"ls -la"}}"#]),
        )
        .unwrap();
        let t = ingest_trajectory(&path, Strictness::Strict).unwrap();
        let out = dir.path().join("out.jsonl");
        write_session(&t, &out).unwrap();
        assert_eq!(read_session(&out).unwrap(), t);
    }
}
