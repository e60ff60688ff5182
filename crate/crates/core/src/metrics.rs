//! Scoring stable sets against the true support.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    /// Fraction of the support recovered.
    pub tpr: f64,
    /// Number of support variables recovered.
    pub recovered: usize,
    pub support_size: usize,
    pub full_recovery: bool,
    pub total_miss: bool,
    pub false_positives: usize,
}

pub fn score(stable: &[usize], support: &[usize]) -> Result<RunScore> {
    if support.is_empty() {
        return Err(Error::param("cannot score against an empty support"));
    }
    let recovered = stable.iter().filter(|j| support.contains(j)).count();
    let tpr = recovered as f64 / support.len() as f64;
    Ok(RunScore {
        tpr,
        recovered,
        support_size: support.len(),
        full_recovery: recovered == support.len(),
        total_miss: recovered == 0,
        false_positives: stable.len() - recovered,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Mean number of recovered support variables (the "Mean TPR" figure of
    /// the reference table, which is on a 0..=s0 scale).
    pub mean_tpr_count: f64,
    pub mean_tpr_rate: f64,
    pub cases_tpr1: usize,
    pub cases_tpr0: usize,
    pub replications: usize,
}

/// Aggregate scores. Sums run over integer counts, so the result does not
/// depend on the input order.
pub fn summarize(scores: &[RunScore]) -> Result<Summary> {
    if scores.is_empty() {
        return Err(Error::param("cannot summarize zero runs"));
    }
    let r = scores.len() as f64;
    let recovered: usize = scores.iter().map(|s| s.recovered).sum();
    let rate_sum: f64 = {
        // exact rational sum grouped by support size
        let mut by_size = std::collections::BTreeMap::<usize, usize>::new();
        for s in scores {
            *by_size.entry(s.support_size).or_default() += s.recovered;
        }
        by_size.iter().map(|(size, rec)| *rec as f64 / *size as f64).sum()
    };
    Ok(Summary {
        mean_tpr_count: recovered as f64 / r,
        mean_tpr_rate: rate_sum / r,
        cases_tpr1: scores.iter().filter(|s| s.full_recovery).count(),
        cases_tpr0: scores.iter().filter(|s| s.total_miss).count(),
        replications: scores.len(),
    })
}
