use actflow_core::alignment::{
    compute_metrics, max_non_crossing, validate_matches, MatchSource, StepMatch,
};
use proptest::prelude::*;

/// Random disjoint intervals over `len` steps, as a partition of which a
/// random subset is kept.
fn intervals(len: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec(any::<bool>(), len.saturating_sub(1)).prop_map(move |cuts| {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, cut) in cuts.into_iter().enumerate() {
            if cut {
                out.push((start, i));
                start = i + 1;
            }
        }
        out.push((start, len - 1));
        out
    })
}

#[derive(Debug, Clone)]
struct Case {
    len_a: usize,
    len_b: usize,
    matches: Vec<StepMatch>,
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..13, 1usize..13)
        .prop_flat_map(|(len_a, len_b)| {
            (Just(len_a), Just(len_b), intervals(len_a), intervals(len_b))
        })
        .prop_flat_map(|(len_a, len_b, ia, ib)| {
            let m = ia.len().min(ib.len()).min(6);
            (
                Just(len_a),
                Just(len_b),
                Just(ia.clone()).prop_shuffle(),
                Just(ib.clone()).prop_shuffle(),
                0..=m,
            )
        })
        .prop_map(|(len_a, len_b, ia, ib, m)| Case {
            len_a,
            len_b,
            matches: ia
                .into_iter()
                .zip(ib)
                .take(m)
                .map(|(a, b)| StepMatch::new(a, b, MatchSource::Annotator))
                .collect(),
        })
}

/// Coverage by marking every step touched on each side.
fn brute_matching(c: &Case) -> f64 {
    let mut a = vec![false; c.len_a];
    let mut b = vec![false; c.len_b];
    for m in &c.matches {
        (m.a_range.0..=m.a_range.1).for_each(|i| a[i] = true);
        (m.b_range.0..=m.b_range.1).for_each(|i| b[i] = true);
    }
    let covered = a.iter().chain(&b).filter(|&&x| x).count();
    100.0 * covered as f64 / (c.len_a + c.len_b) as f64
}

fn crosses(x: &StepMatch, y: &StepMatch) -> bool {
    let da = x.a_range.0 as i64 - y.a_range.0 as i64;
    let db = x.b_range.0 as i64 - y.b_range.0 as i64;
    da * db <= 0
}

/// Largest subset with no two crossing matches, by exhaustive enumeration.
fn brute_non_crossing(ms: &[StepMatch]) -> usize {
    (0u32..1 << ms.len())
        .filter(|mask| {
            let picked: Vec<&StepMatch> = (0..ms.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| &ms[i])
                .collect();
            picked
                .iter()
                .enumerate()
                .all(|(i, x)| picked[i + 1..].iter().all(|y| !crosses(x, y)))
        })
        .map(|mask| mask.count_ones() as usize)
        .max()
        .unwrap_or(0)
}

fn swap(ms: &[StepMatch]) -> Vec<StepMatch> {
    ms.iter()
        .map(|m| StepMatch::new(m.b_range, m.a_range, m.source))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn metrics_match_brute_force(c in case()) {
        validate_matches(&c.matches, c.len_a, c.len_b).unwrap();
        let r = compute_metrics(&c.matches, c.len_a, c.len_b, 1);
        prop_assert_eq!(r.matching_percent, brute_matching(&c));
        let best = brute_non_crossing(&c.matches);
        prop_assert_eq!(max_non_crossing(&c.matches), best);
        if c.matches.len() >= 2 {
            prop_assert_eq!(r.order_percent, Some(100.0 * best as f64 / c.matches.len() as f64));
        } else {
            prop_assert_eq!(r.order_percent, None);
        }

        let s = compute_metrics(&swap(&c.matches), c.len_b, c.len_a, 1);
        prop_assert_eq!(s.matching_percent, r.matching_percent);
        prop_assert_eq!(s.order_percent, r.order_percent);
    }

    #[test]
    fn self_alignment_is_full(n in 1usize..40) {
        let ids: Vec<StepMatch> = (0..n).map(|i| StepMatch::one_to_one(i, i)).collect();
        let r = compute_metrics(&ids, n, n, 1);
        prop_assert_eq!(r.matching_percent, 100.0);
        if n >= 2 {
            prop_assert_eq!(r.order_percent, Some(100.0));
        }
    }

    #[test]
    fn non_crossing_addition_keeps_numerator(c in case(), extra_a in 0usize..20, extra_b in 0usize..20) {
        let base = max_non_crossing(&c.matches);
        let far = StepMatch::one_to_one(c.len_a + extra_a, c.len_b + extra_b);
        let mut more = c.matches.clone();
        more.push(far);
        prop_assert!(max_non_crossing(&more) >= base);
    }
}
