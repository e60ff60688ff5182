//! Breakdown queries and results.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resample::Resampling;
use crate::synthdata::Dataset;

/// Attacker power in the rank-based formulas.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// One non-relevant variable can be promoted per broken resample.
    Optimistic,
    /// Arbitrarily many non-relevant variables can be promoted.
    #[default]
    Pessimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdContext {
    /// Largest clean-data frequency among the relevant variables.
    pub max_pi_plus: f64,
    pub pi_thr: f64,
}

/// Clean-data frequencies for the rank rule, either in full or summarized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RankContext {
    Frequencies {
        q: usize,
        relevant: Vec<f64>,
        irrelevant: Vec<f64>,
    },
    Summary {
        q: usize,
        /// Relevant variables among the top q.
        s: usize,
        max_pi_plus: f64,
        /// Smallest frequency among the next `s` non-relevant variables after
        /// the top q.
        min_pi_minus: f64,
        /// Non-relevant variables whose frequency reaches `max_pi_plus`;
        /// checked against the standing assumption when given.
        #[serde(default)]
        dominating: Option<usize>,
    },
}

/// The quantities the rank formulas need, derived from a [`RankContext`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankGap {
    /// `max_pi_plus - min_pi_minus`.
    Gap(f64),
    /// No relevant variable is stable on clean data, or too many
    /// non-relevant variables dominate the best relevant one.
    AlreadyBroken,
    /// Fewer than q non-relevant variables exist; the stable set always keeps
    /// a relevant variable.
    Unbreakable,
}

impl RankContext {
    pub fn q(&self) -> usize {
        match self {
            RankContext::Frequencies { q, .. } | RankContext::Summary { q, .. } => *q,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |v: f64| {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(format!("frequency {v} outside [0, 1]")));
            }
            Ok(())
        };
        match self {
            RankContext::Frequencies { q, relevant, irrelevant } => {
                if *q == 0 {
                    return Err(Error::param("q must be at least 1"));
                }
                if relevant.is_empty() {
                    return Err(Error::param("rank context needs at least one relevant frequency"));
                }
                relevant.iter().chain(irrelevant).try_for_each(|&v| check(v))
            }
            RankContext::Summary { q, s, max_pi_plus, min_pi_minus, .. } => {
                if *q == 0 || s > q {
                    return Err(Error::param(format!("need 1 <= q and s <= q, got q = {q}, s = {s}")));
                }
                check(*max_pi_plus)?;
                check(*min_pi_minus)
            }
        }
    }

    /// Resolve the gap. Ties between a relevant and a non-relevant frequency
    /// count in favour of the relevant variable when forming the top q.
    pub fn gap(&self) -> Result<RankGap> {
        self.validate()?;
        match self {
            RankContext::Summary { q, s, max_pi_plus, min_pi_minus, dominating } => {
                if *s == 0 || dominating.is_some_and(|d| d + 1 >= *q) || min_pi_minus > max_pi_plus {
                    return Ok(RankGap::AlreadyBroken);
                }
                Ok(RankGap::Gap(max_pi_plus - min_pi_minus))
            }
            RankContext::Frequencies { q, relevant, irrelevant } => {
                let q = *q;
                if irrelevant.len() < q {
                    return Ok(RankGap::Unbreakable);
                }
                let desc = |v: &Vec<f64>| {
                    let mut v = v.clone();
                    v.sort_by(|a, b| b.total_cmp(a));
                    v
                };
                let rel = desc(relevant);
                let irr = desc(irrelevant);
                let max_plus = rel[0];
                let dominating = irr.iter().filter(|&&v| v >= max_plus).count();
                if dominating + 1 >= q {
                    return Ok(RankGap::AlreadyBroken);
                }
                // merge, relevant first on ties
                let (mut i, mut j, mut s) = (0, 0, 0);
                for _ in 0..q {
                    if i < rel.len() && (j >= irr.len() || rel[i] >= irr[j]) {
                        i += 1;
                        s += 1;
                    } else {
                        j += 1;
                    }
                }
                debug_assert!(s >= 1);
                // next best s non-relevant variables after the q - s inside
                let min_minus = irr[q - 1];
                Ok(RankGap::Gap(max_plus - min_minus))
            }
        }
    }
}

/// Trimming applied to the broken-model threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrimContext {
    pub gamma: f64,
    /// Broken models among the trimmed ones.
    pub k_gamma: u64,
}

/// Rows sharing one contamination pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowGroup {
    pub count: u64,
    /// Outlying cells in the row, response included.
    pub cells: u64,
    /// Outlying cells among the relevant columns.
    pub relevant: u64,
    /// Whether the response cell is outlying.
    #[serde(default)]
    pub response: bool,
}

/// Cell-wise contamination pattern of a data set with `p` regressors, `s0`
/// of them relevant, and one response column. Rows not covered by a group
/// are clean.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellProfile {
    pub p: u64,
    pub s0: u64,
    pub rows: Vec<RowGroup>,
}

impl CellProfile {
    pub fn validate(&self, n: u64) -> Result<()> {
        if self.s0 == 0 || self.s0 > self.p {
            return Err(Error::param(format!("need 1 <= s0 <= p, got s0 = {}, p = {}", self.s0, self.p)));
        }
        let covered: u64 = self.rows.iter().map(|g| g.count).sum();
        if covered > n {
            return Err(Error::param(format!("cell profile covers {covered} rows but n = {n}")));
        }
        for g in &self.rows {
            let resp = g.response as u64;
            if g.relevant > self.s0 || g.cells > self.p + 1 || g.relevant + resp > g.cells || g.cells - g.relevant - resp > self.p - self.s0 {
                return Err(Error::param(format!("inconsistent row group {g:?} for p = {}, s0 = {}", self.p, self.s0)));
            }
        }
        Ok(())
    }

    /// Groups including the implicit clean rows, merged by pattern.
    pub fn groups(&self, n: u64) -> Vec<RowGroup> {
        let covered: u64 = self.rows.iter().map(|g| g.count).sum();
        let mut all = self.rows.clone();
        all.push(RowGroup { count: n.saturating_sub(covered), cells: 0, relevant: 0, response: false });
        let mut merged: Vec<RowGroup> = Vec::new();
        for g in all.into_iter().filter(|g| g.count > 0) {
            match merged.iter_mut().find(|m| (m.cells, m.relevant, m.response) == (g.cells, g.relevant, g.response)) {
                Some(m) => m.count += g.count,
                None => merged.push(g),
            }
        }
        merged.sort_by_key(|g| (g.cells, g.relevant, g.response));
        merged
    }

    /// `Z_l`: rows with exactly `l` outlying cells, `l = 0..=p+1`.
    pub fn z(&self, n: u64) -> Vec<u64> {
        let mut z = vec![0; self.p as usize + 2];
        for g in self.groups(n) {
            z[g.cells as usize] += g.count;
        }
        z
    }

    /// `Z^rel_l`: rows with exactly `l` outlying relevant cells, `l = 0..=s0`.
    pub fn z_rel(&self, n: u64) -> Vec<u64> {
        let mut z = vec![0; self.s0 as usize + 1];
        for g in self.groups(n) {
            z[g.relevant as usize] += g.count;
        }
        z
    }

    /// Outlying responses.
    pub fn response_outliers(&self) -> u64 {
        self.rows.iter().filter(|g| g.response).map(|g| g.count).sum()
    }

    pub fn total_cells(&self) -> u64 {
        self.rows.iter().map(|g| g.count * g.cells).sum()
    }

    pub fn relevant_cells(&self) -> u64 {
        self.rows.iter().map(|g| g.count * g.relevant).sum()
    }

    /// Profile of the cells where `contaminated` differs from `original`.
    pub fn from_datasets(original: &Dataset, contaminated: &Dataset) -> Result<Self> {
        if original.x.dim() != contaminated.x.dim() || original.y.len() != contaminated.y.len() {
            return Err(Error::dim("data sets differ in shape"));
        }
        let p = original.p();
        let mut rows: Vec<RowGroup> = Vec::new();
        for i in 0..original.n() {
            let mut cells = 0;
            let mut relevant = 0;
            for j in 0..p {
                if original.x[[i, j]].to_bits() != contaminated.x[[i, j]].to_bits() {
                    cells += 1;
                    if original.support.contains(&j) {
                        relevant += 1;
                    }
                }
            }
            let response = original.y[i].to_bits() != contaminated.y[i].to_bits();
            cells += response as u64;
            if cells == 0 {
                continue;
            }
            let g = RowGroup { count: 1, cells, relevant, response };
            match rows.iter_mut().find(|m| (m.cells, m.relevant, m.response) == (cells, relevant, response)) {
                Some(m) => m.count += 1,
                None => rows.push(g),
            }
        }
        Ok(CellProfile { p: p as u64, s0: original.support.len() as u64, rows })
    }
}

/// Everything a breakdown formula may read. Each formula uses a subset and
/// reports the first missing field by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreakdownQuery {
    /// Registry name; inferred from the supplied contexts when absent.
    #[serde(default)]
    pub formula: Option<String>,
    #[serde(default)]
    pub n: Option<u64>,
    #[serde(default)]
    pub n_sub: Option<u64>,
    #[serde(default)]
    pub b: Option<u64>,
    #[serde(default)]
    pub resampling: Option<Resampling>,
    /// Breakdown point of the base selector: case-wise `c` or cell-wise `c~`.
    #[serde(default)]
    pub bdp: Option<f64>,
    #[serde(default)]
    pub contaminated_rows: Option<u64>,
    #[serde(default)]
    pub threshold: Option<ThresholdContext>,
    #[serde(default)]
    pub rank: Option<RankContext>,
    #[serde(default)]
    pub cells: Option<CellProfile>,
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default)]
    pub trim: Option<TrimContext>,
    /// Samples for tails too large to evaluate exactly.
    #[serde(default)]
    pub mc_samples: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub const DEFAULT_MC_SAMPLES: u64 = 100_000;

fn need<T: Copy>(v: Option<T>, name: &'static str) -> Result<T> {
    v.ok_or(Error::MissingField(name))
}

impl BreakdownQuery {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn n(&self) -> Result<u64> {
        need(self.n, "n")
    }

    pub fn n_sub(&self) -> Result<u64> {
        need(self.n_sub, "n_sub")
    }

    pub fn b(&self) -> Result<u64> {
        let b = need(self.b, "b")?;
        if b == 0 {
            return Err(Error::param("B must be at least 1"));
        }
        Ok(b)
    }

    pub fn resampling(&self) -> Result<Resampling> {
        need(self.resampling, "resampling")
    }

    pub fn bdp(&self) -> Result<f64> {
        let c = need(self.bdp, "bdp")?;
        if !(c > 0.0 && c <= 1.0) {
            return Err(Error::param(format!("breakdown point must lie in (0, 1], got {c}")));
        }
        Ok(c)
    }

    pub fn contaminated_rows(&self) -> Result<u64> {
        let m = need(self.contaminated_rows, "contaminated_rows")?;
        if m > self.n()? {
            return Err(Error::param(format!("contaminated_rows {m} exceeds n = {}", self.n()?)));
        }
        Ok(m)
    }

    pub fn threshold(&self) -> Result<ThresholdContext> {
        let t = need(self.threshold, "threshold")?;
        for v in [t.max_pi_plus, t.pi_thr] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(format!("frequency {v} outside [0, 1]")));
            }
        }
        Ok(t)
    }

    pub fn rank(&self) -> Result<&RankContext> {
        self.rank.as_ref().ok_or(Error::MissingField("rank"))
    }

    pub fn cells(&self) -> Result<&CellProfile> {
        let c = self.cells.as_ref().ok_or(Error::MissingField("cells"))?;
        c.validate(self.n()?)?;
        Ok(c)
    }

    /// Sampling geometry shared by every formula.
    pub fn geometry(&self) -> Result<(u64, u64, u64, Resampling)> {
        let (n, n_sub, b, kind) = (self.n()?, self.n_sub()?, self.b()?, self.resampling()?);
        if n_sub == 0 || n_sub >= n {
            return Err(Error::param(format!("need 0 < n_sub < n, got n_sub = {n_sub}, n = {n}")));
        }
        Ok((n, n_sub, b, kind))
    }

    pub fn mc_samples(&self) -> u64 {
        self.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Registry name to use: the explicit `formula`, else inferred from the
    /// supplied rule context and cell profile.
    pub fn formula_name(&self) -> Result<String> {
        if let Some(f) = &self.formula {
            return Ok(f.clone());
        }
        let cell = self.cells.is_some();
        match (self.threshold.is_some(), self.rank.is_some()) {
            (true, false) => Ok(if cell { "threshold-cell" } else { "threshold-case" }.into()),
            (false, true) => Ok(if cell { "rank-cell" } else { "rank-case" }.into()),
            (true, true) => Err(Error::param("both `threshold` and `rank` given; set `formula`")),
            (false, false) => Err(Error::MissingField("formula")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Point(f64),
    Interval { lo: f64, hi: f64 },
}

impl Value {
    pub fn lo(&self) -> f64 {
        match *self {
            Value::Point(v) => v,
            Value::Interval { lo, .. } => lo,
        }
    }

    pub fn hi(&self) -> f64 {
        match *self {
            Value::Point(v) => v,
            Value::Interval { hi, .. } => hi,
        }
    }

    pub fn point(&self) -> Option<f64> {
        match *self {
            Value::Point(v) => Some(v),
            Value::Interval { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo { samples: u64, std_err: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// The clean-data assumption fails; the selection is broken already.
    ImmediateBreakdown,
    /// A breakdown-point search never reached the tolerance.
    NotReached,
    /// A ratio with zero denominator.
    Undefined,
    /// The value is fixed by the contamination pattern alone.
    DegenerateCase,
    /// The half-gap trimming adjustment uses one reading of an ambiguous
    /// expression.
    TrimAdjustmentAmbiguous,
    /// The reported interval is the element-wise minimum of several candidate
    /// intervals, one of which holds.
    IntervalFamilyMinimum,
    /// A per-resample tail was estimated by simulation.
    MonteCarloTail,
}

/// Per-route detail: the probability that one resample breaks through this
/// route and the resulting breakdown probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteReport {
    pub route: String,
    /// Weight a resample must reach to break through this route.
    pub need: u64,
    pub per_resample: f64,
    pub probability: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownResult {
    pub formula: String,
    pub value: Value,
    pub method: Method,
    /// Broken resamples that are still tolerated: breakdown needs more than
    /// this many. For intervals, the threshold of the upper bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub broken_model_threshold: Option<i64>,
    /// Threshold of the lower interval bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower_bound_threshold: Option<i64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub routes: Vec<RouteReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<Flag>,
}

impl BreakdownResult {
    pub fn has(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn std_err(&self) -> Option<f64> {
        match self.method {
            Method::Exact => None,
            Method::MonteCarlo { std_err, .. } => Some(std_err),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_fields_are_named() {
        let q = BreakdownQuery::default();
        assert!(matches!(q.n(), Err(Error::MissingField("n"))));
        assert!(matches!(q.formula_name(), Err(Error::MissingField("formula"))));
        let q = BreakdownQuery::from_json(r#"{"n": 4, "threshold": {"max_pi_plus": 1.0, "pi_thr": 0.5}}"#).unwrap();
        assert_eq!(q.formula_name().unwrap(), "threshold-case");
        assert!(matches!(q.geometry(), Err(Error::MissingField("n_sub"))));
        assert!(BreakdownQuery::from_json(r#"{"m": 3}"#).is_err());
    }

    #[test]
    fn rank_context_forms() {
        let full: RankContext = serde_json::from_str(r#"{"q": 2, "relevant": [0.9, 0.1], "irrelevant": [0.6, 0.4, 0.3]}"#).unwrap();
        // top-2: 0.9 (rel), 0.6 (irr); s = 1; next irrelevant after 0.6 is 0.4
        assert_eq!(full.gap().unwrap(), RankGap::Gap(0.9 - 0.4));
        let summary: RankContext = serde_json::from_str(r#"{"q": 5, "s": 3, "max_pi_plus": 0.8, "min_pi_minus": 0.3}"#).unwrap();
        assert_eq!(summary.gap().unwrap(), RankGap::Gap(0.8 - 0.3));
        let few = RankContext::Frequencies { q: 3, relevant: vec![0.5], irrelevant: vec![0.9, 0.8] };
        assert_eq!(few.gap().unwrap(), RankGap::Unbreakable);
        let dominated = RankContext::Frequencies { q: 3, relevant: vec![0.5], irrelevant: vec![0.9, 0.8, 0.1] };
        assert_eq!(dominated.gap().unwrap(), RankGap::AlreadyBroken);
    }

    #[test]
    fn ties_favour_relevant() {
        let ctx = RankContext::Frequencies { q: 2, relevant: vec![0.5], irrelevant: vec![0.5, 0.5, 0.2] };
        // two non-relevant variables reach 0.5, the assumption needs fewer than q - 1
        assert_eq!(ctx.gap().unwrap(), RankGap::AlreadyBroken);
        let ctx = RankContext::Frequencies { q: 3, relevant: vec![0.5], irrelevant: vec![0.5, 0.4, 0.2] };
        assert_eq!(ctx.gap().unwrap(), RankGap::Gap(0.5 - 0.2));
    }

    #[test]
    fn profile_bookkeeping() {
        let prof = CellProfile {
            p: 4,
            s0: 2,
            rows: vec![
                RowGroup { count: 2, cells: 2, relevant: 2, response: false },
                RowGroup { count: 1, cells: 3, relevant: 1, response: true },
            ],
        };
        prof.validate(10).unwrap();
        assert_eq!(prof.z(10), vec![7, 0, 2, 1, 0, 0]);
        assert_eq!(prof.z_rel(10), vec![7, 1, 2]);
        assert_eq!(prof.response_outliers(), 1);
        assert_eq!(prof.total_cells(), 7);
        assert!(prof.validate(2).is_err());
        let bad = CellProfile { p: 4, s0: 2, rows: vec![RowGroup { count: 1, cells: 1, relevant: 2, response: false }] };
        assert!(bad.validate(5).is_err());
    }
}
