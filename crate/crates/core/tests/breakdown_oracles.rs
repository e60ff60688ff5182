//! Exact breakdown formulas against brute-force enumeration and simulation
//! written independently of the library.

use rand::Rng;
use trimstab::breakdown::law::{binom_cdf, hyper_pmf};
use trimstab::breakdown::{
    monte_carlo_breakdown, prob_breakdown_rank_case, prob_breakdown_rank_cell, prob_breakdown_threshold_case,
    prob_breakdown_threshold_cell, prob_resample_overrun, resampling_bdp, robustness_surplus, stab_bdp,
    trimmed_breakdown_threshold, vsbdp_upper_bound, BreakdownQuery, CellProfile, Flag, RankContext, RowGroup,
    Scenario, SurplusMode, ThresholdContext, TrimContext, Value,
};
use trimstab::resample::Resampling;
use trimstab::rng;

fn choose(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `P(Bin(b, p) > k)` by direct summation.
fn tail_gt(b: u64, p: f64, k: i64) -> f64 {
    ((k + 1).max(0) as u64..=b).map(|j| choose(b, j) * p.powi(j as i32) * (1.0 - p).powi((b - j) as i32)).sum()
}

/// Every `k`-subset of `0..n`.
fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n).filter(|m| m.count_ones() as usize == k).map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect()).collect()
}

/// Every ordered draw of `k` rows with replacement.
fn draws(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        out = out.into_iter().flat_map(|d| (0..n).map(move |i| [d.clone(), vec![i]].concat())).collect();
    }
    out
}

/// Fraction of resamples whose weights sum to at least `need`.
fn enumerate(weights: &[u64], n_sub: usize, need: u64, kind: Resampling) -> f64 {
    let all = match kind {
        Resampling::Subsample => subsets(weights.len(), n_sub),
        Resampling::Bootstrap => draws(weights.len(), n_sub),
    };
    let hits = all.iter().filter(|s| s.iter().map(|&i| weights[i]).sum::<u64>() >= need).count();
    hits as f64 / all.len() as f64
}

fn case_query(n: u64, n_sub: u64, b: u64, kind: Resampling, c: f64, m: u64, gap: (f64, f64)) -> BreakdownQuery {
    BreakdownQuery {
        n: Some(n),
        n_sub: Some(n_sub),
        b: Some(b),
        resampling: Some(kind),
        bdp: Some(c),
        contaminated_rows: Some(m),
        threshold: Some(ThresholdContext { max_pi_plus: gap.0, pi_thr: gap.1 }),
        ..Default::default()
    }
}

#[test]
fn hypergeometric_pmf_matches_subset_enumeration() {
    // rows 0 and 1 contaminated, subsamples of size 2 out of 4
    let subs = subsets(4, 2);
    assert_eq!(subs.len(), 6);
    for k in 0..=2 {
        let hits = subs.iter().filter(|s| s.iter().filter(|&&i| i < 2).count() == k).count();
        assert!((hyper_pmf(4, 2, 2, k as u64) - hits as f64 / 6.0).abs() < 1e-12);
    }
    assert!((hyper_pmf(4, 2, 2, 1) - 4.0 / 6.0).abs() < 1e-12);
}

#[test]
fn threshold_case_enumerated_fixture() {
    let q = case_query(4, 2, 2, Resampling::Subsample, 0.5, 2, (1.0, 0.5));
    let p_star = enumerate(&[1, 1, 0, 0], 2, 1, Resampling::Subsample);
    assert!((p_star - 5.0 / 6.0).abs() < 1e-12);
    // both resamples must break: all 36 ordered pairs of subsamples
    let subs = subsets(4, 2);
    let broken = |s: &Vec<usize>| s.iter().any(|&i| i < 2);
    let pairs = subs.iter().flat_map(|a| subs.iter().map(move |b| (a, b))).filter(|(a, b)| broken(a) && broken(b)).count();
    assert_eq!(pairs, 25);
    let r = prob_breakdown_threshold_case(&q).unwrap();
    assert_eq!(r.broken_model_threshold, Some(1));
    assert!((r.value.hi() - 25.0 / 36.0).abs() < 1e-12);
}

#[test]
fn threshold_case_matches_direct_formula_on_grid() {
    for kind in [Resampling::Subsample, Resampling::Bootstrap] {
        for m in 0..=8u64 {
            for &c in &[0.2, 0.5] {
                let q = case_query(8, 4, 5, kind, c, m, (0.9, 0.6));
                let weights: Vec<u64> = (0..8).map(|i| (i < m) as u64).collect();
                let need = (c * 4.0_f64).ceil() as u64;
                let p = enumerate(&weights, 4, need, kind);
                let k = (5.0_f64 * 0.3).ceil() as i64;
                let r = prob_breakdown_threshold_case(&q).unwrap();
                assert!((r.value.hi() - tail_gt(5, p, k)).abs() < 1e-12, "{kind:?} m={m} c={c}");
            }
        }
    }
}

#[test]
fn reference_remark_constants() {
    assert!((binom_cdf(100, 0.45, 49) - 0.817).abs() < 1e-3);
    assert!(prob_resample_overrun(0.5, 100, 100, 0.45, Resampling::Bootstrap, 200).unwrap() >= 1.0 - 1e-6);
    let r = resampling_bdp(0.5, 100, 100, 0.99, Resampling::Bootstrap, 200).unwrap();
    assert!(r.bdp <= 0.45);
}

#[test]
fn overrun_examples() {
    assert_eq!(prob_resample_overrun(0.5, 5, 3, 0.0, Resampling::Subsample, 10).unwrap(), 0.0);
    let single = prob_resample_overrun(0.7, 1, 1, 0.3, Resampling::Bootstrap, 10).unwrap();
    assert!((single - 0.3).abs() < 1e-12);
}

#[test]
fn resampling_bdp_alpha_zero_is_first_positive_step() {
    // with c = 1/n_sub one contaminated row in one resample breaks it
    let r = resampling_bdp(0.2, 5, 4, 0.0, Resampling::Subsample, 20).unwrap();
    assert_eq!(r.rows, Some(1));
    assert!((r.bdp - 1.0 / 20.0).abs() < 1e-15);
}

#[test]
fn resampling_bdp_agrees_with_simulation() {
    let (n, n_sub, b, c, alpha) = (10usize, 5usize, 3u64, 0.4, 0.5);
    let need = (c * n_sub as f64).ceil() as usize;
    let trials = 1_000_000u64;
    for kind in [Resampling::Subsample, Resampling::Bootstrap] {
        let exact = resampling_bdp(c, n_sub as u64, b, alpha, kind, n as u64).unwrap();
        let m_star = exact.rows.unwrap() as usize;
        assert!(m_star >= 1);
        for m in [m_star - 1, m_star] {
            let mut r = rng::stream(rng::mix(17, m as u64));
            let mut hits = 0u64;
            let mut pool: Vec<usize> = (0..n).collect();
            for _ in 0..trials {
                let any = (0..b).any(|_| {
                    let mut bad = 0;
                    for i in 0..n_sub {
                        let row = match kind {
                            Resampling::Bootstrap => r.random_range(0..n),
                            Resampling::Subsample => {
                                let j = r.random_range(i..n);
                                pool.swap(i, j);
                                pool[i]
                            }
                        };
                        bad += (row < m) as usize;
                    }
                    bad >= need
                });
                hits += any as u64;
            }
            let est = hits as f64 / trials as f64;
            let se = (est * (1.0 - est) / trials as f64).sqrt();
            let p = prob_resample_overrun(c, n_sub as u64, b, m as f64 / n as f64, kind, n as u64).unwrap();
            assert!((est - p).abs() <= 3.0 * se + 1e-12, "{kind:?} m={m}: exact {p}, simulated {est} ± {se}");
            // the scan stops exactly where the simulated probability crosses alpha
            if m == m_star {
                assert!(est > alpha - 3.0 * se);
            } else {
                assert!(est <= alpha + 3.0 * se);
            }
        }
    }
}

fn one_row_group_cells(n: u64, p: u64, s0: u64, groups: Vec<RowGroup>) -> CellProfile {
    let prof = CellProfile { p, s0, rows: groups };
    prof.validate(n).unwrap();
    prof
}

/// Per-row `(cells, relevant, response)` weights of a profile, clean rows last.
fn row_weights(prof: &CellProfile, n: u64) -> Vec<(u64, u64, u64)> {
    let mut rows = Vec::new();
    for g in &prof.rows {
        for _ in 0..g.count {
            rows.push((g.cells, g.relevant, g.response as u64));
        }
    }
    rows.resize(n as usize, (0, 0, 0));
    rows
}

fn cell_query(n: u64, n_sub: u64, b: u64, kind: Resampling, c: f64, prof: CellProfile) -> BreakdownQuery {
    BreakdownQuery {
        n: Some(n),
        n_sub: Some(n_sub),
        b: Some(b),
        resampling: Some(kind),
        bdp: Some(c),
        cells: Some(prof),
        threshold: Some(ThresholdContext { max_pi_plus: 0.8, pi_thr: 0.6 }),
        ..Default::default()
    }
}

/// Per-route single-resample probabilities by enumeration.
fn enumerated_routes(q: &BreakdownQuery) -> [f64; 3] {
    let (n, n_sub, c) = (q.n.unwrap(), q.n_sub.unwrap() as usize, q.bdp.unwrap());
    let prof = q.cells.as_ref().unwrap();
    let rows = row_weights(prof, n);
    let ns = n_sub as f64;
    let needs = [
        (c * ns * (prof.p + 1) as f64 - 1e-9).ceil() as u64,
        (c * ns * prof.s0 as f64 - 1e-9).ceil() as u64,
        (c * ns - 1e-9).ceil() as u64,
    ];
    let kind = q.resampling.unwrap();
    [
        enumerate(&rows.iter().map(|r| r.0).collect::<Vec<_>>(), n_sub, needs[0], kind),
        enumerate(&rows.iter().map(|r| r.1).collect::<Vec<_>>(), n_sub, needs[1], kind),
        enumerate(&rows.iter().map(|r| r.2).collect::<Vec<_>>(), n_sub, needs[2], kind),
    ]
}

#[test]
fn cell_all_cells_route_matches_ten_subsamples() {
    // n = 5, p = 2, s0 = 1: two rows with both regressors outlying, one with x2 only
    let prof = one_row_group_cells(
        5,
        2,
        1,
        vec![
            RowGroup { count: 2, cells: 2, relevant: 1, response: false },
            RowGroup { count: 1, cells: 1, relevant: 0, response: false },
        ],
    );
    let q = cell_query(5, 2, 4, Resampling::Subsample, 0.45, prof);
    assert_eq!(subsets(5, 2).len(), 10);
    let r = prob_breakdown_threshold_cell(&q).unwrap();
    let e = enumerated_routes(&q);
    assert!((e[0] - 3.0 / 10.0).abs() < 1e-12);
    assert!((e[1] - 7.0 / 10.0).abs() < 1e-12);
    for v in 0..3 {
        assert!((r.routes[v].per_resample - e[v]).abs() < 1e-12, "route {v}: {r:?}");
    }
    // no outlying responses, so the response route and with it the minimum vanish
    assert_eq!(r.value.hi(), 0.0);
}

#[test]
fn cell_routes_compose_to_minimum() {
    for kind in [Resampling::Subsample, Resampling::Bootstrap] {
        let prof = one_row_group_cells(
            6,
            2,
            1,
            vec![
                RowGroup { count: 2, cells: 2, relevant: 1, response: false },
                RowGroup { count: 2, cells: 2, relevant: 0, response: true },
            ],
        );
        let q = cell_query(6, 3, 5, kind, 0.45, prof);
        let e = enumerated_routes(&q);
        assert!(e.iter().all(|&p| p > 0.0 && p < 1.0), "{e:?}");
        let k = (5.0_f64 * 0.2 - 1e-9).ceil() as i64;
        let expect = e.iter().map(|&p| tail_gt(5, p, k)).fold(f64::INFINITY, f64::min);
        let r = prob_breakdown_threshold_cell(&q).unwrap();
        assert!((r.value.hi() - expect).abs() < 1e-12, "{kind:?}: {r:?} vs {expect}");

        // rank rule on the same instance: K = ceil(0.5 * B * gap) pessimistic
        let rq = BreakdownQuery {
            threshold: None,
            rank: Some(RankContext::Summary { q: 5, s: 5, max_pi_plus: 0.9, min_pi_minus: 0.5, dominating: None }),
            ..q.clone()
        };
        let k_half = (0.5_f64 * 5.0 * 0.4 - 1e-9).ceil() as i64;
        let k_full = (5.0_f64 * 0.4 - 1e-9).ceil() as i64;
        let pess = prob_breakdown_rank_cell(&rq).unwrap();
        let expect_half = e.iter().map(|&p| tail_gt(5, p, k_half)).fold(f64::INFINITY, f64::min);
        assert!((pess.value.hi() - expect_half).abs() < 1e-12);
        let opt = prob_breakdown_rank_cell(&BreakdownQuery { scenario: Scenario::Optimistic, ..rq }).unwrap();
        let expect_full = e.iter().map(|&p| tail_gt(5, p, k_full)).fold(f64::INFINITY, f64::min);
        assert!((opt.value.lo() - expect_full).abs() < 1e-12);
        assert!((opt.value.hi() - expect_half).abs() < 1e-12);
        assert!(opt.has(Flag::IntervalFamilyMinimum));
    }
}

#[test]
fn cell_shortcuts() {
    let clean = cell_query(10, 5, 4, Resampling::Subsample, 0.2, one_row_group_cells(10, 4, 2, vec![]));
    assert_eq!(prob_breakdown_threshold_cell(&clean).unwrap().value, Value::Point(0.0));
    // 5 of the 20 relevant cells outlying: 0.25 > 0.2
    let prof = one_row_group_cells(10, 4, 2, vec![RowGroup { count: 5, cells: 1, relevant: 1, response: false }]);
    let q = cell_query(10, 5, 4, Resampling::Subsample, 0.2, prof);
    assert_eq!(prob_breakdown_threshold_cell(&q).unwrap().value, Value::Point(1.0));
    let rq = BreakdownQuery {
        threshold: None,
        rank: Some(RankContext::Summary { q: 2, s: 2, max_pi_plus: 0.9, min_pi_minus: 0.5, dominating: None }),
        ..q
    };
    assert_eq!(prob_breakdown_rank_cell(&rq).unwrap().value.hi(), 1.0);
}

#[test]
fn rank_case_composes_with_enumerated_fixture() {
    let q = BreakdownQuery {
        n: Some(4),
        n_sub: Some(2),
        b: Some(4),
        resampling: Some(Resampling::Subsample),
        bdp: Some(0.5),
        contaminated_rows: Some(2),
        rank: Some(RankContext::Summary { q: 3, s: 2, max_pi_plus: 0.9, min_pi_minus: 0.4, dominating: None }),
        ..Default::default()
    };
    let p = 5.0 / 6.0;
    let pess = prob_breakdown_rank_case(&q).unwrap();
    assert!((pess.value.hi() - tail_gt(4, p, 1)).abs() < 1e-12);
    let opt = prob_breakdown_rank_case(&BreakdownQuery { scenario: Scenario::Optimistic, ..q.clone() }).unwrap();
    assert!((opt.value.lo() - tail_gt(4, p, 2)).abs() < 1e-12);
    assert!((opt.value.hi() - pess.value.hi()).abs() < 1e-15);
    let zero = prob_breakdown_rank_case(&BreakdownQuery { contaminated_rows: Some(0), scenario: Scenario::Optimistic, ..q }).unwrap();
    assert_eq!(zero.value, Value::Interval { lo: 0.0, hi: 0.0 });
}

#[test]
fn example_tolerance_and_trimming() {
    let q = case_query(200, 100, 100, Resampling::Subsample, 0.5, 0, (0.8, 0.6));
    let r = prob_breakdown_threshold_case(&q).unwrap();
    assert_eq!(r.broken_model_threshold, Some(20));
    assert_eq!(r.value.hi(), 0.0);
    assert_eq!(trimmed_breakdown_threshold(20, 100, 0.2, 20, false).unwrap(), 36);
    assert_eq!(trimmed_breakdown_threshold(20, 100, 0.2, 0, false).unwrap(), 16);
    for k in 0..=100 {
        assert_eq!(trimmed_breakdown_threshold(k, 100, 0.0, 0, false).unwrap(), k);
    }
    let trimmed = BreakdownQuery { trim: Some(TrimContext { gamma: 0.2, k_gamma: 20 }), ..q };
    assert_eq!(prob_breakdown_threshold_case(&trimmed).unwrap().broken_model_threshold, Some(36));
}

#[test]
fn vsbdp_bound_examples() {
    assert!((vsbdp_upper_bound(5, 1, 25).unwrap() - 1.0 / 26.0).abs() < 1e-15);
    assert_eq!(vsbdp_upper_bound(0, 1, 25).unwrap(), 0.0);
    assert!((vsbdp_upper_bound(5, 10, 45).unwrap() - 1.0 / 11.0).abs() < 1e-15);
    assert!(vsbdp_upper_bound(26, 1, 25).is_err());
}

#[test]
fn surplus_is_ratio_of_two_evaluations() {
    for m in 1..=6u64 {
        let q = case_query(20, 10, 10, Resampling::Bootstrap, 0.3, m, (0.85, 0.6));
        let num = prob_breakdown_threshold_case(&q).unwrap().value.hi();
        let den = prob_breakdown_threshold_case(&case_query(20, 10, 10, Resampling::Bootstrap, 0.3, m, (0.6, 0.6)))
            .unwrap()
            .value
            .hi();
        let s = robustness_surplus(&q, SurplusMode::ProbabilityRatio, 0.0).unwrap();
        let v = s.value.unwrap().hi();
        assert!((v - num / den).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&v));
    }
    let k0 = case_query(20, 10, 10, Resampling::Bootstrap, 0.3, 3, (0.6, 0.6));
    assert_eq!(robustness_surplus(&k0, SurplusMode::ProbabilityRatio, 0.0).unwrap().value, Some(Value::Point(1.0)));
}

#[test]
fn surplus_trimming_enters_numerator_only() {
    let q = case_query(40, 20, 50, Resampling::Subsample, 0.25, 8, (0.8, 0.6));
    let plain = robustness_surplus(&q, SurplusMode::ProbabilityRatio, 0.0).unwrap();
    let trimmed_q = BreakdownQuery { trim: Some(TrimContext { gamma: 0.2, k_gamma: 10 }), ..q.clone() };
    let trimmed = robustness_surplus(&trimmed_q, SurplusMode::ProbabilityRatio, 0.0).unwrap();
    assert_eq!(plain.denominator, trimmed.denominator);
    let k = trimmed_breakdown_threshold(10, 50, 0.2, 10, false).unwrap();
    let p = prob_breakdown_threshold_case(&q).unwrap().routes[0].per_resample;
    assert!((trimmed.numerator.hi() - tail_gt(50, p, k)).abs() < 1e-12);
}

/// Smallest `m` with `P >= alpha` and `P > 0`, scanning the bootstrap
/// formula evaluated with independent code.
fn invert_bootstrap(n: u64, n_sub: u64, b: u64, c: f64, gap: f64, alpha: f64) -> Option<u64> {
    let need = (c * n_sub as f64 - 1e-9).ceil() as i64;
    let k = (b as f64 * gap - 1e-9).ceil() as i64;
    (0..=n).find(|&m| {
        let p = tail_gt(n_sub, m as f64 / n as f64, need - 1);
        let v = tail_gt(b, p, k);
        v >= alpha && v > 0.0
    })
}

#[test]
fn stab_bdp_inverts_bootstrap_formula_and_is_monotone_in_alpha() {
    for &(n, n_sub, b, c) in &[(20u64, 10u64, 10u64, 0.3), (30, 15, 20, 0.5), (12, 6, 5, 0.2)] {
        let q = case_query(n, n_sub, b, Resampling::Bootstrap, c, 0, (0.8, 0.6));
        let mut last = 0.0;
        for i in 0..20 {
            let alpha = i as f64 / 20.0;
            let r = stab_bdp(&q, alpha).unwrap();
            let direct = invert_bootstrap(n, n_sub, b, c, 0.2, alpha);
            assert_eq!(r.rows, direct, "n={n} alpha={alpha}");
            assert!(r.bdp >= last);
            last = r.bdp;
        }
    }
}

#[test]
fn simulation_examples() {
    let zero = case_query(30, 10, 10, Resampling::Subsample, 0.3, 0, (0.9, 0.6));
    assert_eq!(monte_carlo_breakdown(&zero, 1000, 3).unwrap().value.hi(), 0.0);
    let remark = BreakdownQuery {
        formula: Some("resampling".into()),
        ..case_query(200, 100, 100, Resampling::Bootstrap, 0.5, 90, (0.0, 0.0))
    };
    let remark = BreakdownQuery { threshold: None, ..remark };
    assert!(monte_carlo_breakdown(&remark, 10_000, 4).unwrap().value.hi() >= 0.999);
}
