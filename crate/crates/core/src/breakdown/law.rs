//! Exact discrete laws evaluated through log-factorials.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::{ln_binomial, ln_factorial};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiscreteLaw {
    Binomial { trials: u64, prob: f64 },
    /// Number of successes when drawing `draws` items without replacement
    /// from `population` items of which `successes` are successes.
    Hypergeometric { population: u64, successes: u64, draws: u64 },
    /// Category counts when drawing without replacement from an urn with
    /// `counts[l]` items of category `l`.
    MultivariateHypergeometric { counts: Vec<u64>, draws: u64 },
    Multinomial { trials: u64, probs: Vec<f64> },
}

impl DiscreteLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            DiscreteLaw::Binomial { prob, .. } if !(0.0..=1.0).contains(prob) => {
                Err(Error::param(format!("binomial probability {prob} outside [0, 1]")))
            }
            DiscreteLaw::Hypergeometric { population, successes, draws }
                if successes > population || draws > population =>
            {
                Err(Error::param(format!(
                    "hypergeometric needs successes, draws <= population; got {successes}, {draws}, {population}"
                )))
            }
            DiscreteLaw::MultivariateHypergeometric { counts, draws } if *draws > counts.iter().sum::<u64>() => {
                Err(Error::param("multivariate hypergeometric draws exceed the population"))
            }
            DiscreteLaw::Multinomial { probs, .. } => {
                if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::param("multinomial probabilities must lie in [0, 1]"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::param(format!("multinomial probabilities sum to {total}, not 1")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn is_univariate(&self) -> bool {
        matches!(self, DiscreteLaw::Binomial { .. } | DiscreteLaw::Hypergeometric { .. })
    }

    /// Probability of `outcome`; univariate laws take a single-element slice.
    /// Outcomes outside the support have probability zero.
    pub fn pmf(&self, outcome: &[u64]) -> Result<f64> {
        self.validate()?;
        match self {
            DiscreteLaw::Binomial { trials, prob } => Ok(binom_pmf(*trials, *prob, scalar(outcome)?)),
            DiscreteLaw::Hypergeometric { population, successes, draws } => {
                Ok(hyper_pmf(*population, *successes, *draws, scalar(outcome)?))
            }
            DiscreteLaw::MultivariateHypergeometric { counts, draws } => {
                check_len(outcome, counts.len())?;
                Ok(mvhyper_pmf(counts, *draws, outcome))
            }
            DiscreteLaw::Multinomial { trials, probs } => {
                check_len(outcome, probs.len())?;
                Ok(multinomial_pmf(*trials, probs, outcome))
            }
        }
    }

    /// `P(X <= x)` for univariate laws.
    pub fn cdf(&self, x: i64) -> Result<f64> {
        self.validate()?;
        match self {
            DiscreteLaw::Binomial { trials, prob } => Ok(binom_cdf(*trials, *prob, x)),
            DiscreteLaw::Hypergeometric { population, successes, draws } => {
                Ok(hyper_cdf(*population, *successes, *draws, x))
            }
            _ => Err(Error::param("cdf is only defined for univariate laws")),
        }
    }

    /// `P(X > x)` for univariate laws, summed over the upper tail directly.
    pub fn sf(&self, x: i64) -> Result<f64> {
        self.validate()?;
        if !self.is_univariate() {
            return Err(Error::param("sf is only defined for univariate laws"));
        }
        match self {
            DiscreteLaw::Binomial { trials, prob } => Ok(binom_sf(*trials, *prob, x)),
            DiscreteLaw::Hypergeometric { population, successes, draws } => {
                Ok(hyper_sf(*population, *successes, *draws, x))
            }
            _ => unreachable!(),
        }
    }
}

fn scalar(outcome: &[u64]) -> Result<u64> {
    match outcome {
        [k] => Ok(*k),
        _ => Err(Error::dim(format!("univariate law expects one outcome, got {}", outcome.len()))),
    }
}

fn check_len(outcome: &[u64], want: usize) -> Result<()> {
    if outcome.len() != want {
        return Err(Error::dim(format!("outcome has {} categories, law has {want}", outcome.len())));
    }
    Ok(())
}

pub fn binom_pmf(n: u64, p: f64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// `P(Bin(n, p) <= x)`.
pub fn binom_cdf(n: u64, p: f64, x: i64) -> f64 {
    if x < 0 {
        return 0.0;
    }
    if x as u64 >= n {
        return 1.0;
    }
    (0..=x as u64).map(|k| binom_pmf(n, p, k)).sum::<f64>().min(1.0)
}

/// `P(Bin(n, p) > x)`.
pub fn binom_sf(n: u64, p: f64, x: i64) -> f64 {
    if x < 0 {
        return 1.0;
    }
    if x as u64 >= n {
        return 0.0;
    }
    ((x as u64 + 1)..=n).map(|k| binom_pmf(n, p, k)).sum::<f64>().min(1.0)
}

fn hyper_support(population: u64, successes: u64, draws: u64) -> (u64, u64) {
    let lo = draws.saturating_sub(population - successes);
    let hi = draws.min(successes);
    (lo, hi)
}

pub fn hyper_pmf(population: u64, successes: u64, draws: u64, k: u64) -> f64 {
    let (lo, hi) = hyper_support(population, successes, draws);
    if k < lo || k > hi {
        return 0.0;
    }
    (ln_binomial(successes, k) + ln_binomial(population - successes, draws - k) - ln_binomial(population, draws)).exp()
}

/// `P(Hyp(population, successes, draws) <= x)`.
pub fn hyper_cdf(population: u64, successes: u64, draws: u64, x: i64) -> f64 {
    let (lo, hi) = hyper_support(population, successes, draws);
    if x < lo as i64 {
        return 0.0;
    }
    if x >= hi as i64 {
        return 1.0;
    }
    (lo..=x as u64).map(|k| hyper_pmf(population, successes, draws, k)).sum::<f64>().min(1.0)
}

/// `P(Hyp(population, successes, draws) > x)`.
pub fn hyper_sf(population: u64, successes: u64, draws: u64, x: i64) -> f64 {
    let (lo, hi) = hyper_support(population, successes, draws);
    if x < lo as i64 {
        return 1.0;
    }
    if x >= hi as i64 {
        return 0.0;
    }
    ((x as u64 + 1)..=hi).map(|k| hyper_pmf(population, successes, draws, k)).sum::<f64>().min(1.0)
}

pub fn mvhyper_pmf(counts: &[u64], draws: u64, outcome: &[u64]) -> f64 {
    if outcome.iter().sum::<u64>() != draws || outcome.iter().zip(counts).any(|(z, c)| z > c) {
        return 0.0;
    }
    let population: u64 = counts.iter().sum();
    let ln: f64 = counts.iter().zip(outcome).map(|(&c, &z)| ln_binomial(c, z)).sum();
    (ln - ln_binomial(population, draws)).exp()
}

pub fn multinomial_pmf(trials: u64, probs: &[f64], outcome: &[u64]) -> f64 {
    if outcome.iter().sum::<u64>() != trials {
        return 0.0;
    }
    let mut ln = ln_factorial(trials);
    for (&z, &p) in outcome.iter().zip(probs) {
        if z == 0 {
            continue;
        }
        if p == 0.0 {
            return 0.0;
        }
        ln += z as f64 * p.ln() - ln_factorial(z);
    }
    ln.exp()
}
