//! Simulation of the resampling process behind every formula.
//!
//! A trial draws `B` resamples of `n_sub` rows from the row population of the
//! plan, counts per route how many resamples reach the route's weight, and
//! records whether that count exceeds each tolerance. Trials run in chunks on
//! independent seeded streams; chunk totals are added in chunk order.

use rand::Rng;
use rayon::prelude::*;

use super::formulas::{evaluate_plan, FormulaRegistry, Plan, RoutePlan};
use super::query::{BreakdownQuery, BreakdownResult, Method, RouteReport, Value};
use super::tails::Urn;
use crate::error::{Error, Result};
use crate::rng;

const CHUNK: u64 = 1024;

/// Hits per route: `(lo, hi)` tolerance exceedances and broken resamples.
#[derive(Clone, Default)]
struct Tally {
    lo: Vec<u64>,
    hi: Vec<u64>,
    broken: Vec<u64>,
}

impl Tally {
    fn new(routes: usize) -> Self {
        Tally { lo: vec![0; routes], hi: vec![0; routes], broken: vec![0; routes] }
    }

    fn add(mut self, other: Tally) -> Tally {
        for (a, b) in [(&mut self.lo, &other.lo), (&mut self.hi, &other.hi), (&mut self.broken, &other.broken)] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self
    }
}

fn simulate_chunk(plan: &RoutePlan, population: &[u32], k_lo: i64, k_hi: i64, trials: u64, seed: u64) -> Tally {
    let routes = plan.names.len();
    let mut r = rng::stream(seed);
    let mut pool = population.to_vec();
    let n = pool.len();
    let mut tally = Tally::new(routes);
    let mut sums = vec![0u64; routes];
    let mut broken = vec![0i64; routes];
    for _ in 0..trials {
        broken.iter_mut().for_each(|b| *b = 0);
        for _ in 0..plan.b {
            sums.iter_mut().for_each(|s| *s = 0);
            for i in 0..plan.n_sub as usize {
                let class = match plan.urn {
                    Urn::WithReplacement => population[r.random_range(0..n)],
                    Urn::WithoutReplacement => {
                        // partial Fisher-Yates; any permutation is a valid start
                        let j = r.random_range(i..n);
                        pool.swap(i, j);
                        pool[i]
                    }
                };
                for (s, w) in sums.iter_mut().zip(&plan.rows[class as usize].weights) {
                    *s += w;
                }
            }
            for v in 0..routes {
                if sums[v] >= plan.needs[v] {
                    broken[v] += 1;
                }
            }
        }
        for v in 0..routes {
            tally.broken[v] += broken[v] as u64;
            tally.lo[v] += (broken[v] > k_lo) as u64;
            tally.hi[v] += (broken[v] > k_hi) as u64;
        }
    }
    tally
}

fn std_err(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// Estimate the query's breakdown probability by simulating `trials`
/// complete Stability Selection ensembles. Values fixed by the
/// contamination pattern are returned as in the exact evaluation.
pub fn monte_carlo_breakdown(query: &BreakdownQuery, trials: u64, seed: u64) -> Result<BreakdownResult> {
    monte_carlo_with(&FormulaRegistry::default(), query, trials, seed)
}

pub fn monte_carlo_with(registry: &FormulaRegistry, query: &BreakdownQuery, trials: u64, seed: u64) -> Result<BreakdownResult> {
    if trials == 0 {
        return Err(Error::param("trials must be at least 1"));
    }
    let (name, plan) = registry.plan(query)?;
    let rp = match &plan {
        Plan::Determined { .. } => return evaluate_plan(name, &plan, query, None),
        Plan::Routes(rp) => rp,
    };
    // tolerances and flags as in the exact evaluation
    let exact_shape = evaluate_plan(name, &plan, query, None)?;
    let k_hi = exact_shape.broken_model_threshold.unwrap_or(0);
    let k_lo = exact_shape.lower_bound_threshold.unwrap_or(k_hi);
    let interval = matches!(exact_shape.value, Value::Interval { .. });

    let population: Vec<u32> =
        rp.rows.iter().enumerate().flat_map(|(c, row)| std::iter::repeat_n(c as u32, row.count as usize)).collect();
    let chunks = trials.div_ceil(CHUNK);
    let tally = (0..chunks)
        .into_par_iter()
        .map(|c| simulate_chunk(rp, &population, k_lo, k_hi, CHUNK.min(trials - c * CHUNK), rng::mix(seed, c)))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Tally::new(rp.names.len()), Tally::add);

    let t = trials as f64;
    let mut routes = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    for v in 0..rp.names.len() {
        let lo = tally.lo[v] as f64 / t;
        let hi = tally.hi[v] as f64 / t;
        let se = std_err(hi, trials);
        routes.push(RouteReport {
            route: rp.names[v].to_string(),
            need: rp.needs[v],
            per_resample: tally.broken[v] as f64 / (t * rp.b as f64),
            probability: if interval { Value::Interval { lo, hi } } else { Value::Point(hi) },
            std_err: Some(se),
        });
        best = Some(match best {
            None => (lo, hi, se),
            Some((blo, bhi, bse)) => (blo.min(lo), bhi.min(hi), if hi < bhi { se } else { bse }),
        });
    }
    let (lo, hi, se) = best.ok_or_else(|| Error::param("plan has no routes"))?;
    Ok(BreakdownResult {
        formula: name.to_string(),
        value: if interval { Value::Interval { lo, hi } } else { Value::Point(hi) },
        method: Method::MonteCarlo { samples: trials, std_err: se },
        broken_model_threshold: exact_shape.broken_model_threshold,
        lower_bound_threshold: exact_shape.lower_bound_threshold,
        routes,
        flags: exact_shape.flags,
    })
}

/// Standard error of the lower interval bound of a simulated result.
pub fn lower_std_err(result: &BreakdownResult) -> Option<f64> {
    match result.method {
        Method::MonteCarlo { samples, .. } => Some(std_err(result.value.lo(), samples)),
        Method::Exact => None,
    }
}
