//! Synthetic regression data and contamination schemes.
//!
//! Clean data follow the simulation design used throughout the crate: every
//! regressor entry is drawn from `N(5, 1)`, the first `s0` coefficients from
//! `N(4, 1)` (the rest are zero) and `y = X beta + eps` with
//! `eps ~ N(0, sigma^2)`, `sigma^2 = Var(X beta) / snr` on the realized design.
//!
//! Contamination is applied after the response has been generated. Schemes
//! are strategies behind [`ContaminationScheme`] and are looked up by name in
//! a [`SchemeRegistry`].

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Mean of every clean regressor entry.
pub const DESIGN_MEAN: f64 = 5.0;
/// Mean of every nonzero coefficient.
pub const BETA_MEAN: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub beta_true: Array1<f64>,
    /// Zero-based indices of the nonzero coefficients, ascending.
    pub support: Vec<usize>,
    pub noise_sd: f64,
    pub seed: u64,
    /// Rows touched by contamination, ascending. Empty for clean data.
    pub attacked_rows: Vec<usize>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn s0(&self) -> usize {
        self.support.len()
    }

    /// Checks the structural invariants: `rows(X) = len(y)`, `len(beta) = p`
    /// and `support` = nonzero pattern of `beta_true`.
    pub fn validate(&self) -> Result<()> {
        if self.x.nrows() != self.y.len() {
            return Err(Error::dim(format!(
                "X has {} rows but y has length {}",
                self.x.nrows(),
                self.y.len()
            )));
        }
        if self.beta_true.len() != self.p() {
            return Err(Error::dim(format!(
                "beta_true has length {} but X has {} columns",
                self.beta_true.len(),
                self.p()
            )));
        }
        let nonzero: Vec<usize> = self
            .beta_true
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect();
        if nonzero != self.support {
            return Err(Error::param("support does not match the nonzero pattern of beta_true"));
        }
        Ok(())
    }

    /// Rows `rows` of the dataset (with repetition) as a fresh design and response.
    pub fn rows(&self, rows: &[usize]) -> (Array2<f64>, Array1<f64>) {
        let p = self.p();
        let mut x = Array2::zeros((rows.len(), p));
        let mut y = Array1::zeros(rows.len());
        for (k, &i) in rows.iter().enumerate() {
            x.row_mut(k).assign(&self.x.row(i));
            y[k] = self.y[i];
        }
        (x, y)
    }
}

/// Generate a clean dataset.
///
/// Draw order on the `ChaCha8Rng` stream seeded with `seed`: `X` row-major,
/// then the `s0` nonzero coefficients, then the `n` noise terms. An infinite
/// `snr` yields `sigma = 0`.
pub fn generate_dataset(n: usize, p: usize, s0: usize, snr: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::param(format!("n must be at least 2, got {n}")));
    }
    if s0 == 0 || s0 > p {
        return Err(Error::param(format!("need 1 <= s0 <= p, got s0 = {s0}, p = {p}")));
    }
    if !(snr > 0.0) {
        return Err(Error::param(format!("snr must be positive, got {snr}")));
    }

    let mut rng = rng::stream(seed);
    let design = Normal::new(DESIGN_MEAN, 1.0).expect("unit normal");
    let coef = Normal::new(BETA_MEAN, 1.0).expect("unit normal");

    let x = Array2::from_shape_fn((n, p), |_| design.sample(&mut rng));
    let mut beta = Array1::zeros(p);
    for j in 0..s0 {
        beta[j] = coef.sample(&mut rng);
    }
    let signal = x.dot(&beta);
    let noise_sd = if snr.is_infinite() {
        0.0
    } else {
        (sample_variance(signal.as_slice().expect("contiguous")) / snr).sqrt()
    };
    let mut y = signal;
    if noise_sd > 0.0 {
        let eps = Normal::new(0.0, noise_sd).expect("positive sd");
        y.mapv_inplace(|v| v + eps.sample(&mut rng));
    }

    Ok(Dataset {
        x,
        y,
        beta_true: beta,
        support: (0..s0).collect(),
        noise_sd,
        seed,
        attacked_rows: Vec::new(),
    })
}

/// Unbiased (n - 1) sample variance.
pub fn sample_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    /// Zero (or set to a constant) the target columns in `row_count` random rows.
    ColumnZero,
    /// Replace whole rows of `X` and `y` by draws from the outlier law.
    CaseWise,
    /// Replace every cell of `X` independently with probability `cell_rate`.
    CellWise,
    /// Replace `y` in `row_count` random rows.
    ResponseOnly,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::ColumnZero => "column-zero",
            SchemeKind::CaseWise => "case-wise",
            SchemeKind::CellWise => "cell-wise",
            SchemeKind::ResponseOnly => "response-only",
        }
    }
}

/// Normal outlier law used by schemes that draw replacement values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierLaw {
    pub mean: f64,
    pub sd: f64,
}

impl Default for OutlierLaw {
    /// `N(0, 100)`: gross outliers far from the clean `N(5, 1)` marginal.
    fn default() -> Self {
        OutlierLaw { mean: 0.0, sd: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationSpec {
    pub scheme: SchemeKind,
    #[serde(default)]
    pub row_count: usize,
    #[serde(default)]
    pub cell_rate: f64,
    #[serde(default)]
    pub replacement_value: f64,
    /// Columns hit by `column-zero`; `None` means the true support.
    #[serde(default)]
    pub target_columns: Option<Vec<usize>>,
    /// Replacement law; `case-wise` falls back to [`OutlierLaw::default`],
    /// the other schemes to the constant `replacement_value`.
    #[serde(default)]
    pub outlier_law: Option<OutlierLaw>,
}

impl ContaminationSpec {
    pub fn column_zero(row_count: usize) -> Self {
        ContaminationSpec {
            scheme: SchemeKind::ColumnZero,
            row_count,
            cell_rate: 0.0,
            replacement_value: 0.0,
            target_columns: None,
            outlier_law: None,
        }
    }

    pub fn case_wise(row_count: usize) -> Self {
        ContaminationSpec { scheme: SchemeKind::CaseWise, ..Self::column_zero(row_count) }
    }

    pub fn cell_wise(cell_rate: f64) -> Self {
        ContaminationSpec { scheme: SchemeKind::CellWise, cell_rate, ..Self::column_zero(0) }
    }

    pub fn response_only(row_count: usize) -> Self {
        ContaminationSpec { scheme: SchemeKind::ResponseOnly, ..Self::column_zero(row_count) }
    }

    pub fn validate(&self, d: &Dataset) -> Result<()> {
        if self.row_count > d.n() {
            return Err(Error::param(format!(
                "row_count {} exceeds the number of rows {}",
                self.row_count,
                d.n()
            )));
        }
        if !(0.0..=1.0).contains(&self.cell_rate) {
            return Err(Error::param(format!("cell_rate must lie in [0, 1], got {}", self.cell_rate)));
        }
        if let Some(cols) = &self.target_columns {
            if let Some(&j) = cols.iter().find(|&&j| j >= d.p()) {
                return Err(Error::param(format!("target column {j} out of range (p = {})", d.p())));
            }
        }
        if let Some(law) = &self.outlier_law {
            if !(law.sd >= 0.0) {
                return Err(Error::param("outlier law needs a nonnegative sd"));
            }
        }
        Ok(())
    }

    fn value(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self.outlier_law {
            Some(law) => law.mean + law.sd * rng.sample::<f64, _>(rand_distr::StandardNormal),
            None => self.replacement_value,
        }
    }
}

/// A contamination strategy. Implementations mutate `d` in place and return
/// the rows they touched.
pub trait ContaminationScheme: Send + Sync {
    fn kind(&self) -> SchemeKind;
    fn apply(&self, d: &mut Dataset, spec: &ContaminationSpec, rng: &mut ChaCha8Rng) -> Vec<usize>;
}

fn pick_rows(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut rows = index::sample(rng, n, m).into_vec();
    rows.sort_unstable();
    rows
}

struct ColumnZero;

impl ContaminationScheme for ColumnZero {
    fn kind(&self) -> SchemeKind {
        SchemeKind::ColumnZero
    }

    fn apply(&self, d: &mut Dataset, spec: &ContaminationSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let rows = pick_rows(d.n(), spec.row_count, rng);
        let cols = spec.target_columns.clone().unwrap_or_else(|| d.support.clone());
        for &i in &rows {
            for &j in &cols {
                d.x[[i, j]] = spec.replacement_value;
            }
        }
        rows
    }
}

struct CaseWise;

impl ContaminationScheme for CaseWise {
    fn kind(&self) -> SchemeKind {
        SchemeKind::CaseWise
    }

    fn apply(&self, d: &mut Dataset, spec: &ContaminationSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let spec = ContaminationSpec {
            outlier_law: Some(spec.outlier_law.unwrap_or_default()),
            ..spec.clone()
        };
        let rows = pick_rows(d.n(), spec.row_count, rng);
        for &i in &rows {
            for j in 0..d.p() {
                d.x[[i, j]] = spec.value(rng);
            }
            d.y[i] = spec.value(rng);
        }
        rows
    }
}

struct CellWise;

impl ContaminationScheme for CellWise {
    fn kind(&self) -> SchemeKind {
        SchemeKind::CellWise
    }

    fn apply(&self, d: &mut Dataset, spec: &ContaminationSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut rows = Vec::new();
        for i in 0..d.n() {
            let mut hit = false;
            for j in 0..d.p() {
                if rng.random_bool(spec.cell_rate) {
                    d.x[[i, j]] = spec.value(rng);
                    hit = true;
                }
            }
            if hit {
                rows.push(i);
            }
        }
        rows
    }
}

struct ResponseOnly;

impl ContaminationScheme for ResponseOnly {
    fn kind(&self) -> SchemeKind {
        SchemeKind::ResponseOnly
    }

    fn apply(&self, d: &mut Dataset, spec: &ContaminationSpec, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let rows = pick_rows(d.n(), spec.row_count, rng);
        for &i in &rows {
            d.y[i] = spec.value(rng);
        }
        rows
    }
}

/// Name-keyed registry of contamination schemes.
pub struct SchemeRegistry {
    schemes: BTreeMap<&'static str, Box<dyn ContaminationScheme>>,
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        let mut r = SchemeRegistry { schemes: BTreeMap::new() };
        r.register(Box::new(ColumnZero));
        r.register(Box::new(CaseWise));
        r.register(Box::new(CellWise));
        r.register(Box::new(ResponseOnly));
        r
    }
}

impl SchemeRegistry {
    pub fn register(&mut self, scheme: Box<dyn ContaminationScheme>) {
        self.schemes.insert(scheme.kind().name(), scheme);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ContaminationScheme> {
        self.schemes
            .get(name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::Unknown { kind: "contamination scheme", name: name.to_string() })
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.schemes.keys().copied()
    }
}

/// Apply `spec` to a copy of `d`. The input is left untouched.
pub fn contaminate(d: &Dataset, spec: &ContaminationSpec, seed: u64) -> Result<Dataset> {
    contaminate_with(&SchemeRegistry::default(), d, spec, seed)
}

pub fn contaminate_with(
    registry: &SchemeRegistry,
    d: &Dataset,
    spec: &ContaminationSpec,
    seed: u64,
) -> Result<Dataset> {
    spec.validate(d)?;
    let scheme = registry.get(spec.scheme.name())?;
    let mut out = d.clone();
    let mut rng = rng::stream(seed);
    let rows = scheme.apply(&mut out, spec, &mut rng);
    let merged: BTreeSet<usize> = d.attacked_rows.iter().copied().chain(rows).collect();
    out.attacked_rows = merged.into_iter().collect();
    Ok(out)
}

fn differs(a: f64, b: f64) -> bool {
    !(a == b || (a.is_nan() && b.is_nan()))
}

/// Number of `(row, column)` positions, response column included, at which
/// the two datasets differ.
pub fn count_contaminated_cells(original: &Dataset, contaminated: &Dataset) -> Result<usize> {
    if original.x.dim() != contaminated.x.dim() || original.y.len() != contaminated.y.len() {
        return Err(Error::dim(format!(
            "datasets have shapes {:?} and {:?}",
            original.x.dim(),
            contaminated.x.dim()
        )));
    }
    let xs = original.x.iter().zip(contaminated.x.iter()).filter(|(a, b)| differs(**a, **b)).count();
    let ys = original.y.iter().zip(contaminated.y.iter()).filter(|(a, b)| differs(**a, **b)).count();
    Ok(xs + ys)
}

/// JSON sidecar written next to the dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub noise_sd: f64,
    pub beta_true: Vec<f64>,
    pub support: Vec<usize>,
    pub attacked_rows: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contamination: Option<ContaminationSpec>,
}

impl Dataset {
    pub fn sidecar(&self, contamination: Option<ContaminationSpec>) -> Sidecar {
        Sidecar {
            n: self.n(),
            p: self.p(),
            seed: self.seed,
            noise_sd: self.noise_sd,
            beta_true: self.beta_true.to_vec(),
            support: self.support.clone(),
            attacked_rows: self.attacked_rows.clone(),
            contamination,
        }
    }

    /// CSV with header `x1,...,xp,y`. Values use the shortest round-trip
    /// decimal representation.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let mut header: Vec<String> = (1..=self.p()).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        wtr.write_record(&header)?;
        let mut rec = Vec::with_capacity(self.p() + 1);
        for i in 0..self.n() {
            rec.clear();
            rec.extend(self.x.row(i).iter().map(|v| v.to_string()));
            rec.push(self.y[i].to_string());
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Write `<prefix>.csv` and `<prefix>.json`.
    pub fn save(&self, prefix: &Path, contamination: Option<ContaminationSpec>) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(prefix.with_extension("csv"))?))?;
        let mut f = BufWriter::new(File::create(prefix.with_extension("json"))?);
        serde_json::to_writer_pretty(&mut f, &self.sidecar(contamination))?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    pub fn load(prefix: &Path) -> Result<Dataset> {
        let sidecar: Sidecar =
            serde_json::from_reader(BufReader::new(File::open(prefix.with_extension("json"))?))?;
        let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(prefix.with_extension("csv"))?));
        let width = rdr.headers()?.len();
        if width != sidecar.p + 1 {
            return Err(Error::dim(format!("CSV has {width} columns, sidecar says p = {}", sidecar.p)));
        }
        let mut x = Array2::zeros((sidecar.n, sidecar.p));
        let mut y = Array1::zeros(sidecar.n);
        let mut rows = 0;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if i >= sidecar.n {
                return Err(Error::dim(format!("CSV has more than n = {} rows", sidecar.n)));
            }
            for (j, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::param(format!("row {}, column {}: `{field}` is not a number", i + 1, j + 1)))?;
                if j < sidecar.p {
                    x[[i, j]] = v;
                } else {
                    y[i] = v;
                }
            }
            rows += 1;
        }
        if rows != sidecar.n {
            return Err(Error::dim(format!("CSV has {rows} rows, sidecar says n = {}", sidecar.n)));
        }
        let d = Dataset {
            x,
            y,
            beta_true: Array1::from(sidecar.beta_true),
            support: sidecar.support,
            noise_sd: sidecar.noise_sd,
            seed: sidecar.seed,
            attacked_rows: sidecar.attacked_rows,
        };
        d.validate()?;
        Ok(d)
    }
}
