use actflow_core::annotator::StubAnnotator;
use actflow_core::fingerprint;
use actflow_core::hierarchy::{
    annotate_goals, build_skeleton, check_structure, flatten, induce, HierarchyConfig,
    MicroStepRule, WorkflowNode,
};
use actflow_core::segment::segments_from_boundaries;
use actflow_core::trace::{EventKind, RawEvent, Trajectory, WorkerMeta};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Case {
    apps: Vec<u8>,
    kinds: Vec<u8>,
    boundaries: Vec<usize>,
    cfg: HierarchyConfig,
    instruction: Option<String>,
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..250).prop_flat_map(|len| {
        (
            prop::collection::vec(0u8..4, len),
            prop::collection::vec(0u8..3, len),
            prop::collection::vec(0..len, 0..40),
            2u32..7,
            2usize..16,
            any::<bool>(),
            prop::option::of(Just("Prepare the quarterly report".to_string())),
        )
            .prop_map(
                |(apps, kinds, boundaries, max_depth, fanout_limit, kind_rule, instruction)| Case {
                    apps,
                    kinds,
                    boundaries,
                    cfg: HierarchyConfig {
                        max_depth,
                        fanout_limit,
                        micro_step_rule: if kind_rule {
                            MicroStepRule::SameKindRun
                        } else {
                            MicroStepRule::SameAppRun
                        },
                    },
                    instruction,
                },
            )
    })
}

fn trajectory(c: &Case) -> Trajectory {
    let events = c
        .apps
        .iter()
        .zip(&c.kinds)
        .enumerate()
        .map(|(i, (&app, &kind))| {
            let e = match kind {
                0 => RawEvent::keypress(i, i as f64, "abc"),
                1 => RawEvent::click(i, i as f64, 3, 4),
                _ => RawEvent::new(i, i as f64, EventKind::Run).with_arg("command", "make build"),
            };
            e.with_app(&format!("App{app}"))
        })
        .collect();
    let mut t = Trajectory::new("task", WorkerMeta::human("h"), events);
    t.instruction = c.instruction.clone();
    t
}

fn partitions(steps: &[actflow_core::Step], len: usize) -> bool {
    steps.first().is_some_and(|s| s.span.start == 0)
        && steps.last().is_some_and(|s| s.span.end == len)
        && steps.windows(2).all(|w| w[0].span.end == w[1].span.start)
        && steps.iter().all(|s| s.span.start < s.span.end)
}

fn levels_ok(n: &WorkflowNode) -> bool {
    n.children.iter().all(|c| c.level < n.level && levels_ok(c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn skeleton_span_algebra(c in case()) {
        let t = trajectory(&c);
        let segs = segments_from_boundaries(t.len(), &c.boundaries);
        let skel = build_skeleton(&t, &segs, &c.cfg).unwrap();
        check_structure(&skel, t.len()).unwrap();
        prop_assert!(skel.level <= c.cfg.max_depth);
        prop_assert!(levels_ok(&skel));
        for (_, n) in skel.walk() {
            if !n.is_leaf() {
                prop_assert_eq!(n.span.start, n.children[0].span.start);
                prop_assert_eq!(n.span.end, n.children.last().unwrap().span.end);
            }
        }
        for level in 0..=skel.level {
            let steps = flatten(&skel, level).unwrap();
            prop_assert!(partitions(&steps, t.len()), "level {} does not partition", level);
        }
        prop_assert_eq!(flatten(&skel, 0).unwrap().len(), t.len());
        prop_assert!(flatten(&skel, skel.level + 1).is_err());

        let stub = StubAnnotator::default();
        let fp = fingerprint::of(&c.cfg);
        let wf = annotate_goals(&skel, &t, &stub, &fp).unwrap();
        prop_assert_eq!(wf.root.without_goals(), skel.without_goals());
        prop_assert!(wf.root.walk().iter().all(|(_, n)| !n.goal.trim().is_empty()));
        if let Some(i) = &c.instruction {
            prop_assert_eq!(&wf.root.goal, i);
        }

        let a = induce(&t, &segs, &c.cfg, &stub).unwrap();
        let b = induce(&t, &segs, &c.cfg.clone(), &stub).unwrap();
        prop_assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        prop_assert_eq!(&a, &wf);
    }
}
