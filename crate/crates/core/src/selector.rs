//! Base model-selection algorithms run on each resample.
//!
//! The built-in selector is the L1-penalized least-squares path computed by
//! cyclic coordinate descent on standardized columns. Other selectors plug in
//! through [`Selector`] and a [`SelectorRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Columns whose standard deviation falls below this are treated as constant.
const CONSTANT_SD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Zero-based indices with nonzero coefficient, ascending.
    pub selected: Vec<usize>,
    /// Coefficients on the original column scale.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl SelectionResult {
    pub fn empty(p: usize, intercept: f64) -> Self {
        SelectionResult { selected: Vec::new(), coefficients: vec![0.0; p], intercept }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectorConfig {
    /// Stop descending the path at the first penalty with at least this many
    /// active variables.
    pub target_nonzeros: usize,
    pub lambda_grid_size: usize,
    pub lambda_min_ratio: f64,
    /// Maximum coordinate-descent sweeps per grid point.
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            target_nonzeros: 7,
            lambda_grid_size: 50,
            lambda_min_ratio: 0.01,
            max_iterations: 10_000,
            tolerance: 1e-7,
        }
    }
}

impl SelectorConfig {
    /// Defaults with `target_nonzeros = s0 + 2`.
    pub fn for_sparsity(s0: usize) -> Self {
        SelectorConfig { target_nonzeros: s0 + 2, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::param("selector tolerance must be positive"));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::param("lambda_min_ratio must lie in (0, 1)"));
        }
        if self.lambda_grid_size < 2 {
            return Err(Error::param("lambda_grid_size must be at least 2"));
        }
        if self.target_nonzeros == 0 {
            return Err(Error::param("target_nonzeros must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

/// A variable-selection algorithm applied to one resample.
pub trait Selector: Send + Sync {
    fn name(&self) -> &'static str;
    fn select(&self, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<SelectionResult>;
}

/// L1-penalized regression path with the "first penalty reaching the target
/// size" stopping rule.
#[derive(Debug, Clone)]
pub struct LassoPath {
    pub config: SelectorConfig,
}

impl LassoPath {
    pub fn new(config: SelectorConfig) -> Result<Self> {
        config.validate()?;
        Ok(LassoPath { config })
    }
}

impl Selector for LassoPath {
    fn name(&self) -> &'static str {
        "lasso"
    }

    fn select(&self, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<SelectionResult> {
        fit_l1_path(x, y, &self.config)
    }
}

/// Column-major standardized copy of the design.
struct Standardized {
    cols: Vec<Vec<f64>>,
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl Standardized {
    fn new(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows() as f64;
        let mut cols = Vec::with_capacity(x.ncols());
        let mut means = Vec::with_capacity(x.ncols());
        let mut sds = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            let sd = if sd > CONSTANT_SD * mean.abs().max(1.0) { sd } else { 0.0 };
            cols.push(if sd > 0.0 { col.iter().map(|v| (v - mean) / sd).collect() } else { vec![0.0; col.len()] });
            means.push(mean);
            sds.push(sd);
        }
        Standardized { cols, means, sds }
    }
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Fit the L1 path and return the model at the first (largest) penalty whose
/// active set has at least `target_nonzeros` members, or at the last grid
/// point if no penalty reaches it.
///
/// Columns are centered and scaled to unit (population) variance first;
/// constant columns become zero and can never enter. The penalty grid is
/// geometric from `lambda_max = max_j |<x_j, y - ybar>| / n` down to
/// `lambda_max * lambda_min_ratio`, with warm starts along the path.
pub fn fit_l1_path(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    cfg: &SelectorConfig,
) -> Result<SelectionResult> {
    cfg.validate()?;
    let (n, p) = x.dim();
    if n != y.len() {
        return Err(Error::dim(format!("X has {n} rows but y has length {}", y.len())));
    }
    if n < 2 {
        return Err(Error::param("need at least two rows to fit"));
    }
    let nf = n as f64;
    let ybar = y.sum() / nf;
    let mut resid: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    let yscale = (resid.iter().map(|r| r * r).sum::<f64>() / nf).sqrt();
    if yscale <= CONSTANT_SD * ybar.abs().max(1.0) {
        return Ok(SelectionResult::empty(p, ybar));
    }

    let z = Standardized::new(x);
    let dot = |col: &[f64], r: &[f64]| col.iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
    let lambda_max = z.cols.iter().map(|c| dot(c, &resid).abs()).fold(0.0, f64::max) / nf;
    if lambda_max == 0.0 {
        return Ok(SelectionResult::empty(p, ybar));
    }

    let usable: Vec<usize> = (0..p).filter(|&j| z.sds[j] > 0.0).collect();
    let mut beta = vec![0.0; p];
    let steps = cfg.lambda_grid_size - 1;
    for k in 0..cfg.lambda_grid_size {
        let lambda = lambda_max * cfg.lambda_min_ratio.powf(k as f64 / steps as f64);
        for _ in 0..cfg.max_iterations {
            let mut max_change = 0.0f64;
            for &j in &usable {
                let col = &z.cols[j];
                let old = beta[j];
                let new = soft_threshold(old + dot(col, &resid) / nf, lambda);
                if new != old {
                    let delta = new - old;
                    for (r, c) in resid.iter_mut().zip(col) {
                        *r -= delta * c;
                    }
                    beta[j] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < cfg.tolerance {
                break;
            }
        }
        let active = beta.iter().filter(|b| **b != 0.0).count();
        if active >= cfg.target_nonzeros {
            break;
        }
    }

    let mut coefficients = vec![0.0; p];
    let mut intercept = ybar;
    for j in 0..p {
        if beta[j] != 0.0 {
            coefficients[j] = beta[j] / z.sds[j];
            intercept -= coefficients[j] * z.means[j];
        }
    }
    let selected = (0..p).filter(|&j| coefficients[j] != 0.0).collect();
    Ok(SelectionResult { selected, coefficients, intercept })
}

/// Mean squared residual of `result` over the rows supplied.
pub fn in_sample_loss(result: &SelectionResult, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Result<f64> {
    let (n, p) = x.dim();
    if n != y.len() || p != result.coefficients.len() {
        return Err(Error::dim(format!(
            "X is {n}x{p}, y has length {}, model has {} coefficients",
            y.len(),
            result.coefficients.len()
        )));
    }
    if n == 0 {
        return Err(Error::param("cannot evaluate a loss on zero rows"));
    }
    let coef = Array1::from(result.coefficients.clone());
    let fitted = x.dot(&coef);
    let sse: f64 = y.iter().zip(fitted.iter()).map(|(yi, fi)| (yi - result.intercept - fi).powi(2)).sum();
    Ok(sse / n as f64)
}

pub type SelectorFactory = fn(&SelectorConfig) -> Result<Arc<dyn Selector>>;

/// Name-keyed registry of selector constructors.
pub struct SelectorRegistry {
    factories: BTreeMap<&'static str, SelectorFactory>,
}

impl Default for SelectorRegistry {
    fn default() -> Self {
        let mut r = SelectorRegistry { factories: BTreeMap::new() };
        r.register("lasso", |cfg| Ok(Arc::new(LassoPath::new(cfg.clone())?)));
        r
    }
}

impl SelectorRegistry {
    pub fn register(&mut self, name: &'static str, factory: SelectorFactory) {
        self.factories.insert(name, factory);
    }

    pub fn build(&self, name: &str, cfg: &SelectorConfig) -> Result<Arc<dyn Selector>> {
        let f = self
            .factories
            .get(name)
            .ok_or_else(|| Error::Unknown { kind: "selector", name: name.to_string() })?;
        f(cfg)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }
}
