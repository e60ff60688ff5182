//! Stability Selection and its trimmed variant.
//!
//! A run draws `B` resamples, fits the base selector on each, records the
//! selected set and the mean squared in-sample loss on the resample rows,
//! flags the `floor(gamma * B)` resamples with the largest losses, aggregates
//! selection indicators over the remaining ones and extracts the stable set.
//! `gamma = 0` is plain Stability Selection.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bracket;
use crate::error::{Error, Result};
use crate::resample::{ResampleIndex, ResamplePlan};
use crate::rng;
use crate::selector::{in_sample_loss, LassoPath, SelectionResult, Selector, SelectorConfig};
use crate::synthdata::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum StableRule {
    /// Every variable with frequency at least the threshold.
    Threshold(f64),
    /// The `q` variables with the highest frequencies.
    Rank(usize),
}

impl StableRule {
    pub fn validate(&self, p: usize) -> Result<()> {
        match *self {
            StableRule::Threshold(t) if !(t > 0.0 && t <= 1.0) => {
                Err(Error::param(format!("threshold must lie in (0, 1], got {t}")))
            }
            StableRule::Rank(q) if q == 0 || q > p => {
                Err(Error::param(format!("rank rule needs 1 <= q <= p, got q = {q}, p = {p}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    pub pi_hat: Vec<f64>,
    /// Selection counts over the aggregated resamples; `pi_hat = counts / effective_b`.
    pub counts: Vec<usize>,
    pub effective_b: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleRecord {
    pub index: ResampleIndex,
    pub selection: SelectionResult,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub per_resample: Vec<ResampleRecord>,
    /// One-based numbers of the trimmed resamples, ascending.
    pub trimmed: Vec<usize>,
    pub frequencies: FrequencyVector,
    pub stable: Vec<usize>,
}

impl EnsembleRun {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Plain aggregation: `pi_hat[j] = #{b : j in sets[b]} / B`.
pub fn aggregate_frequencies(selected_sets: &[Vec<usize>], p: usize) -> Result<FrequencyVector> {
    if selected_sets.is_empty() {
        return Err(Error::param("cannot aggregate zero selected sets"));
    }
    let mut counts = vec![0usize; p];
    for set in selected_sets {
        for &j in set {
            if j >= p {
                return Err(Error::param(format!("selected index {j} out of range (p = {p})")));
            }
            counts[j] += 1;
        }
    }
    let b = selected_sets.len();
    Ok(FrequencyVector {
        pi_hat: counts.iter().map(|&c| c as f64 / b as f64).collect(),
        counts,
        effective_b: b,
        gamma: 0.0,
    })
}

/// Order `0..keys.len()` by descending key, breaking exact ties uniformly at
/// random from the stream seeded with `tie_seed`.
fn descending_with_random_ties(keys: &[f64], tie_seed: u64) -> Vec<usize> {
    let mut r = rng::stream(tie_seed);
    let jitter: Vec<u64> = (0..keys.len()).map(|_| r.random()).collect();
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(jitter[a].cmp(&jitter[b])));
    order
}

/// Zero-based positions of the `floor(gamma * B)` largest losses, ascending.
pub fn trim_set(losses: &[f64], gamma: f64, tie_seed: u64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::param(format!("trimming rate must lie in [0, 1), got {gamma}")));
    }
    let k = bracket::trimmed_count(gamma, losses.len());
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut out: Vec<usize> = descending_with_random_ties(losses, tie_seed).into_iter().take(k).collect();
    out.sort_unstable();
    Ok(out)
}

/// Aggregation over the resamples that survive trimming.
pub fn trimmed_frequencies(
    selected_sets: &[Vec<usize>],
    losses: &[f64],
    gamma: f64,
    tie_seed: u64,
    p: usize,
) -> Result<FrequencyVector> {
    if selected_sets.len() != losses.len() {
        return Err(Error::dim(format!(
            "{} selected sets but {} losses",
            selected_sets.len(),
            losses.len()
        )));
    }
    let trimmed = trim_set(losses, gamma, tie_seed)?;
    trimmed_frequencies_given(selected_sets, &trimmed, gamma, p)
}

fn trimmed_frequencies_given(
    selected_sets: &[Vec<usize>],
    trimmed: &[usize],
    gamma: f64,
    p: usize,
) -> Result<FrequencyVector> {
    if trimmed.len() >= selected_sets.len() {
        return Err(Error::param("trimming would discard every resample"));
    }
    let kept: Vec<Vec<usize>> = selected_sets
        .iter()
        .enumerate()
        .filter(|(b, _)| trimmed.binary_search(b).is_err())
        .map(|(_, s)| s.clone())
        .collect();
    let mut f = aggregate_frequencies(&kept, p)?;
    f.gamma = gamma;
    Ok(f)
}

/// Stable set under `rule`, ascending. Rank ties at the cut are broken
/// uniformly at random from `tie_seed`.
pub fn stable_set(freq: &FrequencyVector, rule: StableRule, tie_seed: u64) -> Result<Vec<usize>> {
    let p = freq.pi_hat.len();
    rule.validate(p)?;
    let mut out: Vec<usize> = match rule {
        StableRule::Threshold(t) => {
            // compare counts exactly: count / B >= t
            let need = t * freq.effective_b as f64;
            (0..p).filter(|&j| freq.counts[j] as f64 >= need - 1e-9 * need.max(1.0)).collect()
        }
        StableRule::Rank(q) => descending_with_random_ties(&freq.pi_hat, tie_seed).into_iter().take(q).collect(),
    };
    out.sort_unstable();
    Ok(out)
}

/// Seeds used for the two tie-breaking steps of a run.
fn tie_seeds(seed: u64) -> (u64, u64) {
    (rng::mix(seed, 1), rng::mix(seed, 2))
}

/// Run (trimmed) Stability Selection with the given base selector.
///
/// The `B` fits are spread over the current rayon pool and collected in
/// resample order, so the result depends only on the inputs.
pub fn run_with_selector(
    d: &Dataset,
    plan: &ResamplePlan,
    selector: &dyn Selector,
    rule: StableRule,
    gamma: f64,
    seed: u64,
) -> Result<EnsembleRun> {
    plan.validate()?;
    if plan.n != d.n() {
        return Err(Error::param(format!("plan expects n = {} rows, dataset has {}", plan.n, d.n())));
    }
    rule.validate(d.p())?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::param(format!("trimming rate must lie in [0, 1), got {gamma}")));
    }

    let per_resample = (1..=plan.b)
        .into_par_iter()
        .map(|b| {
            let index = plan.draw(b)?;
            let (x, y) = d.rows(&index.rows);
            let selection = selector.select(x.view(), y.view())?;
            let loss = in_sample_loss(&selection, x.view(), y.view())?;
            Ok(ResampleRecord { index, selection, loss })
        })
        .collect::<Result<Vec<_>>>()?;

    let (trim_seed, rank_seed) = tie_seeds(seed);
    let losses: Vec<f64> = per_resample.iter().map(|r| r.loss).collect();
    let sets: Vec<Vec<usize>> = per_resample.iter().map(|r| r.selection.selected.clone()).collect();
    let trimmed_pos = trim_set(&losses, gamma, trim_seed)?;
    let frequencies = trimmed_frequencies_given(&sets, &trimmed_pos, gamma, d.p())?;
    let stable = stable_set(&frequencies, rule, rank_seed)?;
    Ok(EnsembleRun {
        per_resample,
        trimmed: trimmed_pos.iter().map(|b| b + 1).collect(),
        frequencies,
        stable,
    })
}

/// Run with the built-in L1 path selector configured by `sel_cfg`.
pub fn run_stability_selection(
    d: &Dataset,
    plan: &ResamplePlan,
    sel_cfg: &SelectorConfig,
    rule: StableRule,
    gamma: f64,
    seed: u64,
) -> Result<EnsembleRun> {
    let selector = LassoPath::new(sel_cfg.clone())?;
    run_with_selector(d, plan, &selector, rule, gamma, seed)
}
