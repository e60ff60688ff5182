//! Breakdown formulas as named strategies.
//!
//! Each formula turns a [`BreakdownQuery`] into a [`Plan`]: either a value
//! fixed by the contamination pattern, or a set of routes through which a
//! single resample can break, plus the number of broken resamples that is
//! still tolerated. A route classifies every row by a nonnegative weight; a
//! resample breaks through it when the drawn weights sum to at least `need`.
//! With `p_v` the probability that one resample breaks through route `v`,
//! the breakdown probability for tolerance `K` is `min_v P(Bin(B, p_v) > K)`.

use std::collections::BTreeMap;

use super::law::{binom_pmf, binom_sf};
use super::query::{BreakdownQuery, BreakdownResult, Flag, Method, RankGap, RouteReport, Scenario, Value};
use super::tails::{weighted_tail, Urn};
use crate::bracket;
use crate::error::{Error, Result};
use crate::resample::Resampling;

/// Broken-resample tolerance before trimming is taken into account.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gap {
    /// Used as is; trimming does not apply.
    Fixed(i64),
    /// `ceil(B * gap)`.
    Full(i64),
    /// Half of a full gap, `ceil(0.5 * B * gap)`, stored as the full value.
    Half(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tolerance {
    Point(Gap),
    /// Lower bound uses `lo` (the larger tolerance), upper bound `hi`.
    Interval { lo: Gap, hi: Gap },
}

/// Rows sharing the same weight on every route.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowClass {
    pub count: u64,
    pub weights: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutePlan {
    pub names: Vec<&'static str>,
    pub needs: Vec<u64>,
    pub rows: Vec<RowClass>,
    pub n_sub: u64,
    pub b: u64,
    pub urn: Urn,
    pub tolerance: Tolerance,
    pub flags: Vec<Flag>,
}

impl RoutePlan {
    /// `(weight, count)` categories of route `v`.
    pub fn categories(&self, v: usize) -> Vec<(u64, u64)> {
        self.rows.iter().map(|r| (r.weights[v], r.count)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Determined { value: f64, flag: Flag },
    Routes(RoutePlan),
}

pub trait BreakdownFormula: Send + Sync {
    fn name(&self) -> &'static str;
    fn plan(&self, query: &BreakdownQuery) -> Result<Plan>;
}

pub fn urn_of(kind: Resampling) -> Urn {
    match kind {
        Resampling::Bootstrap => Urn::WithReplacement,
        Resampling::Subsample => Urn::WithoutReplacement,
    }
}

/// Single case-wise route: contaminated rows weigh one, a resample breaks
/// with at least `ceil(c * n_sub)` of them.
fn case_plan(q: &BreakdownQuery, tolerance: Tolerance) -> Result<RoutePlan> {
    let (n, n_sub, b, kind) = q.geometry()?;
    let c = q.bdp()?;
    let m = q.contaminated_rows()?;
    Ok(RoutePlan {
        names: vec!["case"],
        needs: vec![bracket::ceil(c * n_sub as f64).max(0) as u64],
        rows: vec![RowClass { count: n - m, weights: vec![0] }, RowClass { count: m, weights: vec![1] }],
        n_sub,
        b,
        urn: urn_of(kind),
        tolerance,
        flags: Vec::new(),
    })
}

/// Outcome of the cell-wise shortcuts shared by both rules.
fn cell_shortcut(q: &BreakdownQuery) -> Result<Option<Plan>> {
    let n = q.n()?;
    let c = q.bdp()?;
    let prof = q.cells()?;
    let rel_fraction = prof.relevant_cells() as f64 / (n * prof.s0) as f64;
    let resp_fraction = prof.response_outliers() as f64 / n as f64;
    if rel_fraction > c || resp_fraction > c {
        return Ok(Some(Plan::Determined { value: 1.0, flag: Flag::DegenerateCase }));
    }
    let limit = bracket::floor(c * (prof.p + 1) as f64).max(0) as u64;
    let groups = prof.groups(n);
    if groups.iter().all(|g| g.cells <= limit) {
        return Ok(Some(Plan::Determined { value: 0.0, flag: Flag::DegenerateCase }));
    }
    if groups.iter().all(|g| g.cells > limit) {
        return Ok(Some(Plan::Determined { value: 1.0, flag: Flag::DegenerateCase }));
    }
    Ok(None)
}

/// Three cell-wise routes: all cells of the row, the relevant cells, and the
/// response cell.
fn cell_plan(q: &BreakdownQuery, tolerance: Tolerance) -> Result<RoutePlan> {
    let (n, n_sub, b, kind) = q.geometry()?;
    let c = q.bdp()?;
    let prof = q.cells()?;
    let ns = n_sub as f64;
    let rows = prof
        .groups(n)
        .into_iter()
        .map(|g| RowClass { count: g.count, weights: vec![g.cells, g.relevant, g.response as u64] })
        .collect();
    let needs = [c * ns * (prof.p + 1) as f64, c * ns * prof.s0 as f64, c * ns]
        .iter()
        .map(|&x| bracket::ceil(x).max(0) as u64)
        .collect();
    Ok(RoutePlan {
        names: vec!["all-cells", "relevant-cells", "response"],
        needs,
        rows,
        n_sub,
        b,
        urn: urn_of(kind),
        tolerance,
        flags: Vec::new(),
    })
}

fn threshold_gap(q: &BreakdownQuery) -> Result<Option<i64>> {
    let t = q.threshold()?;
    if t.max_pi_plus < t.pi_thr {
        return Ok(None);
    }
    let b = q.b()? as f64;
    Ok(Some(bracket::ceil(b * (t.max_pi_plus - t.pi_thr))))
}

enum RankOutcome {
    Tolerance(Tolerance),
    Determined(Plan),
}

fn rank_tolerance(q: &BreakdownQuery) -> Result<RankOutcome> {
    let b = q.b()? as f64;
    let gap = match q.rank()?.gap()? {
        RankGap::AlreadyBroken => {
            return Ok(RankOutcome::Determined(Plan::Determined { value: 1.0, flag: Flag::ImmediateBreakdown }))
        }
        RankGap::Unbreakable => {
            return Ok(RankOutcome::Determined(Plan::Determined { value: 0.0, flag: Flag::DegenerateCase }))
        }
        RankGap::Gap(d) => d,
    };
    let full = bracket::ceil(b * gap);
    Ok(RankOutcome::Tolerance(match q.scenario {
        Scenario::Pessimistic => Tolerance::Point(Gap::Half(full)),
        Scenario::Optimistic => Tolerance::Interval { lo: Gap::Full(full), hi: Gap::Half(full) },
    }))
}

pub struct ThresholdCase;
pub struct ThresholdCell;
pub struct RankCase;
pub struct RankCell;
pub struct ResamplingOverrun;
pub struct BaggingMean;
pub struct BaggingMedian;

impl BreakdownFormula for ThresholdCase {
    fn name(&self) -> &'static str {
        "threshold-case"
    }

    fn plan(&self, q: &BreakdownQuery) -> Result<Plan> {
        match threshold_gap(q)? {
            None => Ok(Plan::Determined { value: 1.0, flag: Flag::ImmediateBreakdown }),
            Some(k) => Ok(Plan::Routes(case_plan(q, Tolerance::Point(Gap::Full(k)))?)),
        }
    }
}

impl BreakdownFormula for ThresholdCell {
    fn name(&self) -> &'static str {
        "threshold-cell"
    }

    fn plan(&self, q: &BreakdownQuery) -> Result<Plan> {
        let Some(k) = threshold_gap(q)? else {
            return Ok(Plan::Determined { value: 1.0, flag: Flag::ImmediateBreakdown });
        };
        if let Some(p) = cell_shortcut(q)? {
            return Ok(p);
        }
        Ok(Plan::Routes(cell_plan(q, Tolerance::Point(Gap::Full(k)))?))
    }
}

impl BreakdownFormula for RankCase {
    fn name(&self) -> &'static str {
        "rank-case"
    }

    fn plan(&self, q: &BreakdownQuery) -> Result<Plan> {
        match rank_tolerance(q)? {
            RankOutcome::Determined(p) => Ok(p),
            RankOutcome::Tolerance(t) => Ok(Plan::Routes(case_plan(q, t)?)),
        }
    }
}

impl BreakdownFormula for RankCell {
    fn name(&self) -> &'static str {
        "rank-cell"
    }

    fn plan(&self, q: &BreakdownQuery) -> Result<Plan> {
        let t = match rank_tolerance(q)? {
            RankOutcome::Determined(p) => return Ok(p),
            RankOutcome::Tolerance(t) => t,
        };
        if let Some(p) = cell_shortcut(q)? {
            return Ok(p);
        }
        let mut plan = cell_plan(q, t)?;
        if matches!(t, Tolerance::Interval { .. }) {
            plan.flags.push(Flag::IntervalFamilyMinimum);
        }
        Ok(Plan::Routes(plan))
    }
}

impl BreakdownFormula for ResamplingOverrun {
    fn name(&self) -> &'static str {
        "resampling"
    }

    /// At least one resample breaks.
    fn plan(&self, q: &BreakdownQuery) -> Result<Plan> {
        Ok(Plan::Routes(case_plan(q, Tolerance::Point(Gap::Fixed(0)))?))
    }
}

impl BreakdownFormula for BaggingMean {
    fn name(&self) -> &'static str {
        "bagging-mean"
    }

    /// Every resample breaks.
    fn plan(&self, q: &BreakdownQuery) -> Result<Plan> {
        let b = q.b()? as i64;
        Ok(Plan::Routes(case_plan(q, Tolerance::Point(Gap::Fixed(b - 1)))?))
    }
}

impl BreakdownFormula for BaggingMedian {
    fn name(&self) -> &'static str {
        "bagging-median"
    }

    /// At least `floor((B + 1) / 2)` resamples break.
    fn plan(&self, q: &BreakdownQuery) -> Result<Plan> {
        let b = q.b()? as i64;
        Ok(Plan::Routes(case_plan(q, Tolerance::Point(Gap::Fixed((b + 1) / 2 - 1)))?))
    }
}

pub struct FormulaRegistry {
    formulas: BTreeMap<&'static str, Box<dyn BreakdownFormula>>,
}

impl Default for FormulaRegistry {
    fn default() -> Self {
        let mut r = FormulaRegistry { formulas: BTreeMap::new() };
        r.register(Box::new(ThresholdCase));
        r.register(Box::new(ThresholdCell));
        r.register(Box::new(RankCase));
        r.register(Box::new(RankCell));
        r.register(Box::new(ResamplingOverrun));
        r.register(Box::new(BaggingMean));
        r.register(Box::new(BaggingMedian));
        r
    }
}

impl FormulaRegistry {
    pub fn register(&mut self, formula: Box<dyn BreakdownFormula>) {
        self.formulas.insert(formula.name(), formula);
    }

    pub fn get(&self, name: &str) -> Result<&dyn BreakdownFormula> {
        self.formulas
            .get(name)
            .map(|f| f.as_ref())
            .ok_or_else(|| Error::Unknown { kind: "breakdown formula", name: name.to_string() })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.formulas.keys().copied()
    }

    /// Plan for the query's formula.
    pub fn plan(&self, query: &BreakdownQuery) -> Result<(&'static str, Plan)> {
        let f = self.get(&query.formula_name()?)?;
        Ok((f.name(), f.plan(query)?))
    }

    pub fn evaluate(&self, query: &BreakdownQuery) -> Result<BreakdownResult> {
        let (name, plan) = self.plan(query)?;
        evaluate_plan(name, &plan, query, None)
    }
}

/// Integer `ceil(a / b)` for `b > 0`.
fn ceil_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b) + (a.rem_euclid(b) != 0) as i64
}

/// Broken-model tolerance after trimming `floor(gamma * B)` resamples of
/// which `k_gamma` were broken: `k_gamma + ceil((B - floor(gamma B)) K / B)`,
/// or with `special_half`, for `K = ceil(B * gap)`,
/// `ceil(0.5 * (2 k_gamma + (B - floor(gamma B)) K / B))`.
pub fn trimmed_breakdown_threshold(k: i64, b: u64, gamma: f64, k_gamma: u64, special_half: bool) -> Result<i64> {
    if b == 0 {
        return Err(Error::param("B must be at least 1"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::param(format!("trimming rate must lie in [0, 1), got {gamma}")));
    }
    let trimmed = bracket::trimmed_count(gamma, b as usize) as u64;
    if k_gamma > trimmed {
        return Err(Error::param(format!("k_gamma = {k_gamma} exceeds the {trimmed} trimmed resamples")));
    }
    let (b, kept, kg) = (b as i64, (b - trimmed) as i64, k_gamma as i64);
    Ok(if special_half { ceil_div(2 * kg * b + kept * k, 2 * b) } else { kg + ceil_div(kept * k, b) })
}

fn resolve(gap: Gap, query: &BreakdownQuery, b: u64, flags: &mut Vec<Flag>) -> Result<i64> {
    let (gamma, k_gamma) = query.trim.map_or((0.0, 0), |t| (t.gamma, t.k_gamma));
    match gap {
        Gap::Fixed(k) => {
            if query.trim.is_some() {
                return Err(Error::param("trimming applies to Stability Selection formulas only"));
            }
            Ok(k)
        }
        Gap::Full(k) => trimmed_breakdown_threshold(k, b, gamma, k_gamma, false),
        Gap::Half(k) => {
            if query.trim.is_some() && !flags.contains(&Flag::TrimAdjustmentAmbiguous) {
                flags.push(Flag::TrimAdjustmentAmbiguous);
            }
            trimmed_breakdown_threshold(k, b, gamma, k_gamma, true)
        }
    }
}

/// Per-route single-resample probabilities, with standard errors for
/// simulated tails.
pub(crate) fn route_probabilities(plan: &RoutePlan, query: &BreakdownQuery) -> Vec<(f64, Option<f64>)> {
    (0..plan.names.len())
        .map(|v| {
            let seed = crate::rng::mix(query.seed(), v as u64);
            let t = weighted_tail(&plan.categories(v), plan.n_sub, plan.needs[v], plan.urn, query.mc_samples(), seed);
            (t.probability, t.std_err)
        })
        .collect()
}

/// Evaluate a plan. `override_k` replaces every tolerance (used for the
/// single-resample baseline of the robustness surplus).
pub fn evaluate_plan(name: &str, plan: &Plan, query: &BreakdownQuery, override_k: Option<i64>) -> Result<BreakdownResult> {
    let rp = match plan {
        Plan::Determined { value, flag } => {
            return Ok(BreakdownResult {
                formula: name.to_string(),
                value: Value::Point(*value),
                method: Method::Exact,
                broken_model_threshold: None,
                lower_bound_threshold: None,
                routes: Vec::new(),
                flags: vec![*flag],
            })
        }
        Plan::Routes(rp) => rp,
    };
    let mut flags = rp.flags.clone();
    let (k_lo, k_hi) = match (override_k, rp.tolerance) {
        (Some(k), _) => (k, k),
        (None, Tolerance::Point(g)) => {
            let k = resolve(g, query, rp.b, &mut flags)?;
            (k, k)
        }
        (None, Tolerance::Interval { lo, hi }) => (resolve(lo, query, rp.b, &mut flags)?, resolve(hi, query, rp.b, &mut flags)?),
    };
    let interval = matches!(rp.tolerance, Tolerance::Interval { .. });
    let probs = route_probabilities(rp, query);

    let mut routes = Vec::new();
    let mut best: Option<(f64, f64, Option<f64>)> = None;
    for (v, &(p, se)) in probs.iter().enumerate() {
        let lo = binom_sf(rp.b, p, k_lo);
        let hi = binom_sf(rp.b, p, k_hi);
        // delta method through the binomial tail: d/dp P(Bin(B,p) > K) = B * pmf(B-1, p, K)
        let se_hi = se.map(|s| s * rp.b as f64 * if k_hi >= 0 { binom_pmf(rp.b - 1, p, k_hi as u64) } else { 0.0 });
        routes.push(RouteReport {
            route: rp.names[v].to_string(),
            need: rp.needs[v],
            per_resample: p,
            probability: if interval { Value::Interval { lo, hi } } else { Value::Point(hi) },
            std_err: se_hi,
        });
        best = Some(match best {
            None => (lo, hi, se_hi),
            Some((blo, bhi, bse)) => (blo.min(lo), if hi < bhi { hi } else { bhi }, if hi < bhi { se_hi } else { bse }),
        });
    }
    let (lo, hi, se) = best.ok_or_else(|| Error::param("plan has no routes"))?;
    let method = if probs.iter().any(|p| p.1.is_some()) {
        flags.push(Flag::MonteCarloTail);
        let samples = query.mc_samples();
        Method::MonteCarlo { samples, std_err: se.unwrap_or(0.0) }
    } else {
        Method::Exact
    };
    Ok(BreakdownResult {
        formula: name.to_string(),
        value: if interval { Value::Interval { lo, hi } } else { Value::Point(hi) },
        method,
        broken_model_threshold: Some(k_hi),
        lower_bound_threshold: interval.then_some(k_lo),
        routes,
        flags,
    })
}
