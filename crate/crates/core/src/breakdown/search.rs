//! Closed-form resampling probabilities and breakdown-point searches.

use serde::{Deserialize, Serialize};

use super::formulas::{evaluate_plan, FormulaRegistry, Plan};
use super::law::{binom_sf, hyper_cdf};
use super::query::{BreakdownQuery, BreakdownResult, Flag, RowGroup, Value};
use crate::bracket;
use crate::error::{Error, Result};
use crate::resample::Resampling;

fn check_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::param(format!("tolerance alpha must lie in [0, 1), got {alpha}")));
    }
    Ok(())
}

/// Contaminated row count `eps * n`, which must be an integer.
fn rows_of(eps: f64, n: u64) -> Result<u64> {
    let m = eps * n as f64;
    let r = m.round();
    if (m - r).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::param(format!("eps * n = {m} is not a whole number of rows")));
    }
    Ok(r as u64)
}

/// Probability that one resample holds at least `ceil(c * n_sub)`
/// contaminated rows when a fraction `eps` of the `n` rows is contaminated.
pub fn overrun_probability(c: f64, n_sub: u64, eps: f64, resampling: Resampling, n: u64) -> Result<f64> {
    check_unit("eps", eps)?;
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::param(format!("breakdown point must lie in (0, 1], got {c}")));
    }
    let ns = n_sub as f64;
    match resampling {
        Resampling::Bootstrap => Ok(binom_sf(n_sub, eps, bracket::ceil(c * ns) - 1)),
        Resampling::Subsample => {
            if n_sub > n {
                return Err(Error::param("subsample larger than the data set"));
            }
            let m = rows_of(eps, n)?;
            Ok(hyper_cdf(n, n - m, n_sub, bracket::floor((1.0 - c) * ns)))
        }
    }
}

/// Probability that at least one of `B` resamples breaks:
/// `1 - (1 - p*)^B`.
pub fn prob_resample_overrun(c: f64, n_sub: u64, b: u64, eps: f64, resampling: Resampling, n: u64) -> Result<f64> {
    let p = overrun_probability(c, n_sub, eps, resampling, n)?;
    if p >= 1.0 {
        return Ok(1.0);
    }
    Ok(-(b as f64 * (-p).ln_1p()).exp_m1())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdpResult {
    /// Breakdown point as a fraction; 1 when never reached.
    pub bdp: f64,
    /// Contaminated rows (or pattern rows for cell-wise scans) at the
    /// breakdown point.
    pub rows: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<Flag>,
}

impl BdpResult {
    fn not_reached() -> Self {
        BdpResult { bdp: 1.0, rows: None, flags: vec![Flag::NotReached] }
    }
}

/// Smallest `eps = m / n` whose overrun probability exceeds `alpha`.
pub fn resampling_bdp(c: f64, n_sub: u64, b: u64, alpha: f64, resampling: Resampling, n: u64) -> Result<BdpResult> {
    check_alpha(alpha)?;
    for m in 0..=n {
        let eps = m as f64 / n as f64;
        if prob_resample_overrun(c, n_sub, b, eps, resampling, n)? > alpha {
            return Ok(BdpResult { bdp: eps, rows: Some(m), flags: Vec::new() });
        }
    }
    Ok(BdpResult::not_reached())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    Mean,
    /// Bragging.
    Median,
}

/// Breakdown probability of a bagged estimator with bounded range: every
/// resample must break for the mean, at least `floor((B + 1) / 2)` for the
/// median.
pub fn prob_bagging_bounded_breakdown(
    c: f64,
    n_sub: u64,
    b: u64,
    eps: f64,
    resampling: Resampling,
    n: u64,
    aggregation: Aggregation,
) -> Result<f64> {
    if b == 0 {
        return Err(Error::param("B must be at least 1"));
    }
    let p = overrun_probability(c, n_sub, eps, resampling, n)?;
    Ok(match aggregation {
        Aggregation::Mean => p.powi(b as i32),
        Aggregation::Median => binom_sf(b, p, b.div_ceil(2) as i64 - 1),
    })
}

/// Upper bound `min(q, k) / (p + k)` on the cell-wise variable-selection
/// breakdown point for `q` relevant variables and `k` responses.
pub fn vsbdp_upper_bound(q_true: u64, k: u64, p: u64) -> Result<f64> {
    if q_true > p || k == 0 {
        return Err(Error::param(format!("need q <= p and k >= 1, got q = {q_true}, k = {k}, p = {p}")));
    }
    Ok(q_true.min(k) as f64 / (p + k) as f64)
}

fn with_formula(query: &BreakdownQuery, name: &str) -> BreakdownQuery {
    BreakdownQuery { formula: Some(name.to_string()), ..query.clone() }
}

pub fn prob_breakdown_threshold_case(query: &BreakdownQuery) -> Result<BreakdownResult> {
    FormulaRegistry::default().evaluate(&with_formula(query, "threshold-case"))
}

pub fn prob_breakdown_threshold_cell(query: &BreakdownQuery) -> Result<BreakdownResult> {
    FormulaRegistry::default().evaluate(&with_formula(query, "threshold-cell"))
}

pub fn prob_breakdown_rank_case(query: &BreakdownQuery) -> Result<BreakdownResult> {
    FormulaRegistry::default().evaluate(&with_formula(query, "rank-case"))
}

pub fn prob_breakdown_rank_cell(query: &BreakdownQuery) -> Result<BreakdownResult> {
    FormulaRegistry::default().evaluate(&with_formula(query, "rank-cell"))
}

/// Whether `value` counts as a breakdown at tolerance `alpha`: it reaches
/// `alpha` and is positive. Intervals are judged by their upper bound.
fn reaches(value: &Value, alpha: f64) -> bool {
    let v = value.hi();
    v >= alpha && v > 0.0
}

/// Stability Selection breakdown point: the smallest contamination whose
/// breakdown probability reaches `alpha`.
///
/// Case-wise formulas scan the number of contaminated rows `m` and report
/// `m / n`. Cell-wise formulas need a cell profile with exactly one row
/// group, the pattern; they scan how many rows carry it and report
/// contaminated cells over `n (p + 1)`.
pub fn stab_bdp(query: &BreakdownQuery, alpha: f64) -> Result<BdpResult> {
    check_alpha(alpha)?;
    let registry = FormulaRegistry::default();
    let n = query.n()?;
    let f = registry.get(&query.formula_name()?)?;
    if query.cells.is_none() {
        for m in 0..=n {
            let q = BreakdownQuery { contaminated_rows: Some(m), ..query.clone() };
            if reaches(&registry.evaluate(&with_formula(&q, f.name()))?.value, alpha) {
                return Ok(BdpResult { bdp: m as f64 / n as f64, rows: Some(m), flags: Vec::new() });
            }
        }
        return Ok(BdpResult::not_reached());
    }
    let prof = query.cells()?;
    let pattern: RowGroup = match prof.rows.as_slice() {
        [g] => *g,
        _ => return Err(Error::param("cell-wise scan needs a profile with exactly one row group")),
    };
    for r in 0..=n {
        let mut q = with_formula(query, f.name());
        if let Some(c) = q.cells.as_mut() {
            c.rows = vec![RowGroup { count: r, ..pattern }];
        }
        if reaches(&registry.evaluate(&q)?.value, alpha) {
            let cells = r * pattern.cells;
            return Ok(BdpResult { bdp: cells as f64 / (n * (prof.p + 1)) as f64, rows: Some(r), flags: Vec::new() });
        }
    }
    Ok(BdpResult::not_reached())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurplusMode {
    /// Breakdown probability over the probability that a single resample
    /// breaks somewhere.
    ProbabilityRatio,
    /// Minimal breaking row count over the minimal row count that breaks a
    /// single resample, both at tolerance `alpha`.
    BdpRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusResult {
    /// `None` when the denominator vanishes.
    pub value: Option<Value>,
    pub numerator: Value,
    pub denominator: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<Flag>,
}

/// Smallest `m` with `P > alpha` under `override_k` (or the query's own
/// tolerance when `None`).
fn min_rows(registry: &FormulaRegistry, query: &BreakdownQuery, alpha: f64, override_k: Option<i64>) -> Result<Option<u64>> {
    let n = query.n()?;
    for m in 0..=n {
        let q = BreakdownQuery { contaminated_rows: Some(m), ..query.clone() };
        let (name, plan) = registry.plan(&q)?;
        if evaluate_plan(name, &plan, &q, override_k)?.value.hi() > alpha {
            return Ok(Some(m));
        }
    }
    Ok(None)
}

/// Robustness surplus of the query's Stability Selection over the bagged
/// estimator that breaks as soon as one resample does. A `trim` context in
/// the query adjusts the numerator only.
pub fn robustness_surplus(query: &BreakdownQuery, mode: SurplusMode, alpha: f64) -> Result<SurplusResult> {
    let registry = FormulaRegistry::default();
    let (name, plan) = registry.plan(query)?;
    if matches!(name, "resampling" | "bagging-mean" | "bagging-median") {
        return Err(Error::param("the surplus compares a Stability Selection formula against its baseline"));
    }
    let numerator = evaluate_plan(name, &plan, query, None)?;
    let untrimmed = BreakdownQuery { trim: None, ..query.clone() };
    let denominator = evaluate_plan(name, &plan, &untrimmed, Some(0))?;
    let mut flags = numerator.flags.clone();
    match mode {
        SurplusMode::ProbabilityRatio => {
            if matches!(plan, Plan::Determined { .. }) {
                flags.push(Flag::DegenerateCase);
            }
            let den = denominator.value.hi();
            if den == 0.0 {
                flags.push(Flag::Undefined);
                return Ok(SurplusResult { value: None, numerator: numerator.value, denominator: den, flags });
            }
            let value = match numerator.value {
                Value::Point(v) => Value::Point(v / den),
                Value::Interval { lo, hi } => Value::Interval { lo: lo / den, hi: hi / den },
            };
            Ok(SurplusResult { value: Some(value), numerator: numerator.value, denominator: den, flags })
        }
        SurplusMode::BdpRatio => {
            check_alpha(alpha)?;
            if query.cells.is_some() {
                return Err(Error::param("the breakdown-point ratio is defined for case-wise formulas"));
            }
            if query.scenario == super::query::Scenario::Optimistic && name.starts_with("rank") {
                return Err(Error::param("the breakdown-point ratio needs a point probability (pessimistic scenario)"));
            }
            let num_m = min_rows(&registry, query, alpha, None)?;
            let den_m = min_rows(&registry, &untrimmed, alpha, Some(0))?;
            let n = query.n()?;
            match (num_m, den_m) {
                (_, None) | (_, Some(0)) => {
                    flags.push(Flag::Undefined);
                    Ok(SurplusResult { value: None, numerator: Value::Point(num_m.unwrap_or(n) as f64), denominator: 0.0, flags })
                }
                (num, Some(den)) => {
                    if num.is_none() {
                        flags.push(Flag::NotReached);
                    }
                    let num = num.unwrap_or(n) as f64;
                    Ok(SurplusResult {
                        value: Some(Value::Point(num / den as f64)),
                        numerator: Value::Point(num),
                        denominator: den as f64,
                        flags,
                    })
                }
            }
        }
    }
}
