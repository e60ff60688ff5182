use proptest::prelude::*;
use trimstab::breakdown::law::{binom_cdf, binom_pmf, hyper_cdf, hyper_pmf};
use trimstab::breakdown::{
    prob_breakdown_rank_case, prob_breakdown_threshold_case, trimmed_breakdown_threshold, BreakdownQuery,
    RankContext, Scenario, ThresholdContext,
};
use trimstab::metrics::{score, summarize};
use trimstab::resample::{ResamplePlan, Resampling};
use trimstab::stability::{aggregate_frequencies, stable_set, trimmed_frequencies, StableRule};
use trimstab::synthdata::{contaminate, count_contaminated_cells, generate_dataset, ContaminationSpec};

fn sets_strategy(p: usize) -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::btree_set(0..p, 0..=p).prop_map(|s| s.into_iter().collect()), 1..40)
}

fn kind() -> impl Strategy<Value = Resampling> {
    prop_oneof![Just(Resampling::Subsample), Just(Resampling::Bootstrap)]
}

proptest! {
    #[test]
    fn frequencies_are_exact_fractions(
        sets in sets_strategy(8),
        gamma in 0.0f64..0.9,
        seed in any::<u64>(),
        loss_seed in any::<u64>(),
    ) {
        let b = sets.len();
        let losses: Vec<f64> = (0..b).map(|i| ((loss_seed >> (i % 60)) & 7) as f64).collect();
        let f = trimmed_frequencies(&sets, &losses, gamma, seed, 8).unwrap();
        prop_assert_eq!(f.effective_b, b - (gamma * b as f64 + 1e-9).floor() as usize);
        for j in 0..8 {
            prop_assert_eq!(f.pi_hat[j], f.counts[j] as f64 / f.effective_b as f64);
        }
    }

    #[test]
    fn gamma_zero_is_plain_aggregation(sets in sets_strategy(6), seed in any::<u64>()) {
        let losses: Vec<f64> = (0..sets.len()).map(|i| i as f64).collect();
        prop_assert_eq!(trimmed_frequencies(&sets, &losses, 0.0, seed, 6).unwrap(), aggregate_frequencies(&sets, 6).unwrap());
    }

    #[test]
    fn one_resample_moves_frequencies_by_at_most_one_over_b(
        sets in sets_strategy(6),
        replacement in prop::collection::btree_set(0..6usize, 0..=6),
        pos in any::<prop::sample::Index>(),
    ) {
        let b = sets.len();
        let before = aggregate_frequencies(&sets, 6).unwrap();
        let mut changed = sets.clone();
        changed[pos.index(b)] = replacement.into_iter().collect();
        let after = aggregate_frequencies(&changed, 6).unwrap();
        for j in 0..6 {
            prop_assert!((before.pi_hat[j] - after.pi_hat[j]).abs() <= 1.0 / b as f64 + 1e-15);
        }
    }

    #[test]
    fn stable_set_sizes(sets in sets_strategy(10), q in 1usize..=10, t in 0.05f64..1.0, seed in any::<u64>()) {
        let f = aggregate_frequencies(&sets, 10).unwrap();
        let rank = stable_set(&f, StableRule::Rank(q), seed).unwrap();
        prop_assert_eq!(rank.len(), q);
        prop_assert!(rank.windows(2).all(|w| w[0] < w[1]));
        let thr = stable_set(&f, StableRule::Threshold(t), seed).unwrap();
        for j in 0..10 {
            prop_assert_eq!(thr.contains(&j), f.pi_hat[j] >= t - 1e-9);
        }
    }

    #[test]
    fn pmfs_normalize(n in 1u64..300, p in 0.0f64..=1.0, pop in 1u64..200, succ_frac in 0.0f64..=1.0, draw_frac in 0.0f64..=1.0) {
        let total: f64 = (0..=n).map(|k| binom_pmf(n, p, k)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let succ = (succ_frac * pop as f64) as u64;
        let draws = (draw_frac * pop as f64) as u64;
        let total: f64 = (0..=draws).map(|k| hyper_pmf(pop, succ, draws, k)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let mut last = 0.0;
        for x in -1..=n as i64 {
            let c = binom_cdf(n, p, x);
            prop_assert!((0.0..=1.0).contains(&c) && c >= last - 1e-15);
            last = c;
        }
        let mut last = 0.0;
        for x in -1..=draws as i64 {
            let c = hyper_cdf(pop, succ, draws, x);
            prop_assert!((0.0..=1.0).contains(&c) && c >= last - 1e-15);
            last = c;
        }
    }

    #[test]
    fn trimming_identity_and_monotonicity(k in 0i64..200, b in 1u64..300, gamma in 0.0f64..0.95, half in any::<bool>()) {
        prop_assert_eq!(trimmed_breakdown_threshold(k, b, 0.0, 0, false).unwrap(), k);
        let trimmed = (gamma * b as f64 + 1e-9).floor() as u64;
        let mut last = i64::MIN;
        for kg in 0..=trimmed {
            let v = trimmed_breakdown_threshold(k, b, gamma, kg, half).unwrap();
            prop_assert!(v >= last);
            last = v;
        }
        prop_assert!(trimmed_breakdown_threshold(k, b, gamma, trimmed + 1, half).is_err());
    }

    #[test]
    fn score_and_summary_bounds(stables in prop::collection::vec(prop::collection::btree_set(0..12usize, 0..12), 1..30)) {
        let support: Vec<usize> = (0..5).collect();
        let scores: Vec<_> = stables.iter().map(|s| score(&s.iter().copied().collect::<Vec<_>>(), &support).unwrap()).collect();
        let s = summarize(&scores).unwrap();
        prop_assert!((0.0..=5.0).contains(&s.mean_tpr_count));
        prop_assert!(s.cases_tpr1 + s.cases_tpr0 <= s.replications);
        prop_assert_eq!(s.replications, scores.len());
    }

    #[test]
    fn draws_are_valid_and_reproducible(k in kind(), n in 2usize..60, frac in 0.05f64..0.95, b in 1usize..20, seed in any::<u64>()) {
        let n_sub = ((frac * n as f64) as usize).clamp(1, n - 1);
        let plan = ResamplePlan::new(k, n, n_sub, b, seed).unwrap();
        for idx in plan.draw_all().unwrap() {
            prop_assert_eq!(idx.rows.len(), n_sub);
            prop_assert!(idx.rows.iter().all(|&r| r < n));
            if k == Resampling::Subsample {
                let mut r = idx.rows.clone();
                r.sort_unstable();
                r.dedup();
                prop_assert_eq!(r.len(), n_sub);
            }
            prop_assert_eq!(plan.draw(idx.b).unwrap(), idx);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn breakdown_probability_nondecreasing_in_m(
        k in kind(),
        n in 6u64..40,
        frac in 0.2f64..0.8,
        b in 1u64..60,
        c in 0.05f64..0.6,
        gap in 0.0f64..0.5,
    ) {
        let n_sub = ((frac * n as f64) as u64).clamp(1, n - 1);
        let base = BreakdownQuery {
            n: Some(n), n_sub: Some(n_sub), b: Some(b), resampling: Some(k), bdp: Some(c),
            threshold: Some(ThresholdContext { max_pi_plus: 0.5 + gap, pi_thr: 0.5 }),
            ..Default::default()
        };
        let rank = BreakdownQuery {
            threshold: None,
            rank: Some(RankContext::Summary { q: 3, s: 2, max_pi_plus: 0.5 + gap, min_pi_minus: 0.5, dominating: None }),
            ..base.clone()
        };
        let mut last = [0.0f64; 3];
        for m in 0..=n {
            let t = prob_breakdown_threshold_case(&BreakdownQuery { contaminated_rows: Some(m), ..base.clone() }).unwrap();
            let pess = prob_breakdown_rank_case(&BreakdownQuery { contaminated_rows: Some(m), ..rank.clone() }).unwrap();
            let opt = prob_breakdown_rank_case(&BreakdownQuery { contaminated_rows: Some(m), scenario: Scenario::Optimistic, ..rank.clone() }).unwrap();
            let now = [t.value.hi(), pess.value.hi(), opt.value.lo()];
            for v in 0..3 {
                prop_assert!((0.0..=1.0).contains(&now[v]));
                prop_assert!(now[v] >= last[v] - 1e-12, "m={} {:?} -> {:?}", m, last, now);
            }
            // the optimistic interval ends at the pessimistic value
            prop_assert!(opt.value.lo() <= opt.value.hi() + 1e-15);
            prop_assert_eq!(opt.value.hi(), pess.value.hi());
            last = now;
        }
    }

    #[test]
    fn column_zero_cell_count(rows in 0usize..=30, cols in prop::collection::btree_set(0..10usize, 1..5), seed in any::<u64>()) {
        let d = generate_dataset(30, 10, 3, 5.0, seed).unwrap();
        let spec = ContaminationSpec {
            target_columns: Some(cols.iter().copied().collect()),
            replacement_value: 1e6,
            ..ContaminationSpec::column_zero(rows)
        };
        let c = contaminate(&d, &spec, seed ^ 1).unwrap();
        prop_assert_eq!(count_contaminated_cells(&d, &c).unwrap(), rows * cols.len());
        prop_assert_eq!(c.attacked_rows.len(), rows);
    }
}
