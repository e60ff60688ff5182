//! Tail probabilities of the total weight drawn from a categorized urn.
//!
//! Rows are grouped into categories `(weight, count)`; a resample of `draws`
//! rows is taken with or without replacement and the question is
//! `P(sum of drawn weights >= need)`. Without replacement the category counts
//! are multivariate hypergeometric, with replacement multinomial.
//!
//! The exact route is a dynamic program over categories whose state is
//! `(rows drawn so far, weight so far capped at need)`. Category `k` is
//! entered with a conditional law for its count: hypergeometric on the rows
//! not yet assigned (without replacement) or binomial on the remaining
//! probability mass (with replacement). This keeps every intermediate value
//! a probability and avoids enumerating the lattice of count vectors.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::law::{binom_pmf, hyper_pmf};
use crate::rng;

/// Work budget (state updates) above which the exact tail is replaced by
/// Monte-Carlo.
pub const EXACT_BUDGET: f64 = 2e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Urn {
    WithoutReplacement,
    WithReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub probability: f64,
    /// `None` for exact values.
    pub std_err: Option<f64>,
    pub samples: Option<u64>,
}

/// Merge equal weights and drop empty categories.
pub fn normalize(categories: &[(u64, u64)]) -> Vec<(u64, u64)> {
    let mut map = std::collections::BTreeMap::<u64, u64>::new();
    for &(w, c) in categories {
        if c > 0 {
            *map.entry(w).or_default() += c;
        }
    }
    map.into_iter().collect()
}

/// Estimated number of state updates for the exact program.
pub fn exact_cost(categories: &[(u64, u64)], draws: u64, need: u64) -> f64 {
    let cats = normalize(categories);
    let width = (need + 1) as f64 * (draws + 1) as f64;
    cats.iter().map(|&(_, c)| width * (c.min(draws) + 1) as f64).sum()
}

/// Exact `P(sum of drawn weights >= need)`.
pub fn weighted_tail_exact(categories: &[(u64, u64)], draws: u64, need: u64, urn: Urn) -> f64 {
    if need == 0 {
        return 1.0;
    }
    let cats = normalize(categories);
    let population: u64 = cats.iter().map(|c| c.1).sum();
    if urn == Urn::WithoutReplacement && draws > population {
        return f64::NAN;
    }
    if population == 0 {
        return if draws == 0 { 0.0 } else { f64::NAN };
    }
    let max_weight: u64 = match urn {
        Urn::WithoutReplacement => {
            // heaviest `draws` rows
            let mut left = draws;
            let mut total = 0u64;
            for &(w, c) in cats.iter().rev() {
                let take = c.min(left);
                total += w * take;
                left -= take;
            }
            total
        }
        Urn::WithReplacement => cats.last().map_or(0, |c| c.0) * draws,
    };
    if max_weight < need {
        return 0.0;
    }

    let d_dim = draws as usize + 1;
    let t_dim = need as usize + 1;
    let idx = |d: usize, t: usize| d * t_dim + t;
    let mut state = vec![0.0f64; d_dim * t_dim];
    state[idx(0, 0)] = 1.0;
    let mut remaining = population;

    for (k, &(w, count)) in cats.iter().enumerate() {
        let last = k + 1 == cats.len();
        let mut next = vec![0.0f64; d_dim * t_dim];
        for d in 0..d_dim {
            let r = draws - d as u64;
            // conditional law of the number of rows from this category
            let pmf: Vec<f64> = if last {
                let mut v = vec![0.0; r as usize + 1];
                v[r as usize] = 1.0;
                v
            } else {
                match urn {
                    Urn::WithoutReplacement => {
                        (0..=r.min(count)).map(|z| hyper_pmf(remaining, count, r, z)).collect()
                    }
                    Urn::WithReplacement => {
                        let prob = count as f64 / remaining as f64;
                        (0..=r).map(|z| binom_pmf(r, prob, z)).collect()
                    }
                }
            };
            for t in 0..t_dim {
                let mass = state[idx(d, t)];
                if mass == 0.0 {
                    continue;
                }
                for (z, &pz) in pmf.iter().enumerate() {
                    if pz == 0.0 {
                        continue;
                    }
                    let nt = (t as u64 + w * z as u64).min(need) as usize;
                    next[idx(d + z, nt)] += mass * pz;
                }
            }
        }
        state = next;
        remaining -= count;
    }
    state[idx(draws as usize, need as usize)].clamp(0.0, 1.0)
}

/// Monte-Carlo estimate of the same tail, `samples` draws split into
/// chunks with independent seeded streams and summed in chunk order.
pub fn weighted_tail_monte_carlo(
    categories: &[(u64, u64)],
    draws: u64,
    need: u64,
    urn: Urn,
    samples: u64,
    seed: u64,
) -> TailEstimate {
    const CHUNK: u64 = 4096;
    let cats = normalize(categories);
    let chunks = samples.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(rng::mix(seed, c));
            let len = CHUNK.min(samples - c * CHUNK);
            let mut hits = 0u64;
            let mut left = vec![0u64; cats.len()];
            for _ in 0..len {
                for (l, c) in left.iter_mut().zip(&cats) {
                    *l = c.1;
                }
                let mut pool: u64 = cats.iter().map(|c| c.1).sum();
                let mut total = 0u64;
                for _ in 0..draws {
                    let mut u = r.random_range(0..pool);
                    let mut k = 0;
                    while u >= left[k] {
                        u -= left[k];
                        k += 1;
                    }
                    total += cats[k].0;
                    if urn == Urn::WithoutReplacement {
                        left[k] -= 1;
                        pool -= 1;
                    }
                }
                if total >= need {
                    hits += 1;
                }
            }
            hits
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let p = hits as f64 / samples as f64;
    TailEstimate {
        probability: p,
        std_err: Some((p * (1.0 - p) / samples as f64).sqrt()),
        samples: Some(samples),
    }
}

/// Exact when the program fits [`EXACT_BUDGET`], Monte-Carlo otherwise.
pub fn weighted_tail(
    categories: &[(u64, u64)],
    draws: u64,
    need: u64,
    urn: Urn,
    mc_samples: u64,
    seed: u64,
) -> TailEstimate {
    if exact_cost(categories, draws, need) <= EXACT_BUDGET {
        TailEstimate { probability: weighted_tail_exact(categories, draws, need, urn), std_err: None, samples: None }
    } else {
        weighted_tail_monte_carlo(categories, draws, need, urn, mc_samples, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::breakdown::law::{binom_sf, hyper_sf};

    #[test]
    fn two_category_case_reduces_to_univariate() {
        // weights 0/1: total weight is the number of contaminated rows drawn
        for need in 0..=6u64 {
            let exact = weighted_tail_exact(&[(0, 7), (1, 5)], 6, need, Urn::WithoutReplacement);
            let direct = hyper_sf(12, 5, 6, need as i64 - 1);
            assert!((exact - direct).abs() < 1e-13, "need {need}: {exact} vs {direct}");
            let exact = weighted_tail_exact(&[(0, 7), (1, 5)], 6, need, Urn::WithReplacement);
            let direct = binom_sf(6, 5.0 / 12.0, need as i64 - 1);
            assert!((exact - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn impossible_and_trivial() {
        assert_eq!(weighted_tail_exact(&[(0, 3), (2, 1)], 2, 3, Urn::WithoutReplacement), 0.0);
        assert_eq!(weighted_tail_exact(&[(0, 3), (2, 1)], 2, 0, Urn::WithoutReplacement), 1.0);
        assert!(weighted_tail_exact(&[(0, 3), (2, 1)], 2, 3, Urn::WithReplacement) > 0.0);
    }

    #[test]
    fn monte_carlo_agrees() {
        let cats = [(0, 20), (1, 6), (3, 3), (5, 1)];
        for urn in [Urn::WithoutReplacement, Urn::WithReplacement] {
            let exact = weighted_tail_exact(&cats, 8, 6, urn);
            let mc = weighted_tail_monte_carlo(&cats, 8, 6, urn, 200_000, 3);
            assert!((exact - mc.probability).abs() < 4.0 * mc.std_err.unwrap(), "{exact} vs {mc:?}");
        }
    }

    #[test]
    fn auto_switches_to_monte_carlo() {
        let cats = [(0, 100_000), (400, 100_000)];
        assert!(exact_cost(&cats, 5_000, 1_000_000) > EXACT_BUDGET);
        let small = weighted_tail(&[(0, 4), (1, 4)], 3, 2, Urn::WithoutReplacement, 10, 0);
        assert!(small.std_err.is_none());
    }
}
