//! Bootstrap samples and subsamples of row indices.
//!
//! Resample `b` is drawn from its own stream seeded with
//! `rng::mix(master_seed, b)`, so any subset of the `B` resamples can be
//! produced in any order, on any thread, with identical results.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    /// Uniform draws with replacement.
    Bootstrap,
    /// Uniform draws without replacement.
    Subsample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResamplePlan {
    pub kind: Resampling,
    pub n: usize,
    pub n_sub: usize,
    pub b: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleIndex {
    /// One-based resample number.
    pub b: usize,
    pub rows: Vec<usize>,
}

impl ResamplePlan {
    pub fn new(kind: Resampling, n: usize, n_sub: usize, b: usize, master_seed: u64) -> Result<Self> {
        let plan = ResamplePlan { kind, n, n_sub, b, master_seed };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sub == 0 || self.n_sub >= self.n {
            return Err(Error::param(format!(
                "resample size must satisfy 0 < n_sub < n, got n_sub = {}, n = {}",
                self.n_sub, self.n
            )));
        }
        if self.b == 0 {
            return Err(Error::param("number of resamples B must be at least 1"));
        }
        Ok(())
    }

    /// Draw resample `b` (one-based).
    pub fn draw(&self, b: usize) -> Result<ResampleIndex> {
        self.validate()?;
        if b == 0 || b > self.b {
            return Err(Error::param(format!("resample index {b} outside 1..={}", self.b)));
        }
        let mut rng = rng::stream(rng::mix(self.master_seed, b as u64));
        let rows = match self.kind {
            Resampling::Bootstrap => (0..self.n_sub).map(|_| rng.random_range(0..self.n)).collect(),
            Resampling::Subsample => index::sample(&mut rng, self.n, self.n_sub).into_vec(),
        };
        Ok(ResampleIndex { b, rows })
    }

    pub fn draw_all(&self) -> Result<Vec<ResampleIndex>> {
        (1..=self.b).map(|b| self.draw(b)).collect()
    }
}

/// Entries of `idx.rows` (with multiplicity) lying in `contaminated`.
/// `contaminated` must be sorted ascending.
pub fn contaminated_count(idx: &ResampleIndex, contaminated: &[usize]) -> usize {
    idx.rows.iter().filter(|r| contaminated.binary_search(r).is_ok()).count()
}
