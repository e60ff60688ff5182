//! Experiment configuration: scenarios, methods, seeds.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resample::Resampling;
use crate::selector::SelectorConfig;
use crate::stability::StableRule;

pub const SCHEMA_VERSION: u32 = 1;

/// One ensemble variant run on every replication of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub label: String,
    pub b: usize,
    #[serde(default)]
    pub gamma: f64,
}

impl MethodSpec {
    pub fn new(label: &str, b: usize, gamma: f64) -> Self {
        MethodSpec { label: label.to_string(), b, gamma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub s0: usize,
    /// Rows whose support cells are zeroed.
    pub contaminated_rows: usize,
    /// Signal-to-noise ratio; `null` for noiseless responses.
    pub snr: Option<f64>,
    pub n_sub: usize,
    pub resampling: Resampling,
    pub rule: StableRule,
    pub replications: usize,
    /// Defaults to the L1 path selector with `target_nonzeros = s0 + 2`.
    #[serde(default)]
    pub selector: Option<SelectorConfig>,
    pub methods: Vec<MethodSpec>,
}

impl ScenarioConfig {
    pub fn snr_value(&self) -> f64 {
        self.snr.unwrap_or(f64::INFINITY)
    }

    pub fn selector_config(&self) -> SelectorConfig {
        self.selector.clone().unwrap_or_else(|| SelectorConfig::for_sparsity(self.s0))
    }

    pub fn validate(&self) -> Result<()> {
        let ctx = |msg: String| Error::param(format!("scenario `{}`: {msg}", self.name));
        if self.n < 2 || self.p == 0 || self.s0 == 0 || self.s0 > self.p {
            return Err(ctx(format!("need n >= 2 and 1 <= s0 <= p, got n={}, p={}, s0={}", self.n, self.p, self.s0)));
        }
        if self.contaminated_rows > self.n {
            return Err(ctx(format!("contaminated_rows {} exceeds n = {}", self.contaminated_rows, self.n)));
        }
        if let Some(snr) = self.snr {
            if !(snr > 0.0) {
                return Err(ctx(format!("snr must be positive, got {snr}")));
            }
        }
        if self.n_sub == 0 || self.n_sub >= self.n {
            return Err(ctx(format!("need 0 < n_sub < n, got n_sub = {}", self.n_sub)));
        }
        self.rule.validate(self.p).map_err(|e| ctx(e.to_string()))?;
        self.selector_config().validate().map_err(|e| ctx(e.to_string()))?;
        if self.replications == 0 {
            return Err(ctx("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(ctx("at least one method is required".into()));
        }
        let mut labels = BTreeSet::new();
        for m in &self.methods {
            if !labels.insert(m.label.as_str()) {
                return Err(ctx(format!("duplicate method label `{}`", m.label)));
            }
            if m.b == 0 {
                return Err(ctx(format!("method `{}`: B must be at least 1", m.label)));
            }
            if !(0.0..1.0).contains(&m.gamma) {
                return Err(ctx(format!("method `{}`: gamma must lie in [0, 1)", m.label)));
            }
            if crate::bracket::trimmed_count(m.gamma, m.b) >= m.b {
                return Err(ctx(format!("method `{}` trims every resample", m.label)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub master_seed: u64,
    /// Worker threads; `None` uses every available core.
    #[serde(default)]
    pub workers: Option<usize>,
    /// Directory for the replication and summary tables.
    #[serde(default)]
    pub output_dir: Option<String>,
    pub scenarios: Vec<ScenarioConfig>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::param(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.workers == Some(0) {
            return Err(Error::param("workers must be at least 1"));
        }
        if self.scenarios.is_empty() {
            return Err(Error::param("no scenarios configured"));
        }
        let mut names = BTreeSet::new();
        for s in &self.scenarios {
            if !names.insert(s.name.as_str()) {
                return Err(Error::param(format!("duplicate scenario name `{}`", s.name)));
            }
            s.validate()?;
        }
        Ok(())
    }

    /// Keep only the named scenarios, in configuration order.
    pub fn select(&mut self, names: &[String]) -> Result<()> {
        for name in names {
            if !self.scenarios.iter().any(|s| &s.name == name) {
                return Err(Error::Unknown { kind: "scenario", name: name.clone() });
            }
        }
        self.scenarios.retain(|s| names.contains(&s.name));
        Ok(())
    }
}

/// The fifteen contamination scenarios of the reference study: five
/// geometries, each at SNR 5, 2 and 1 (suffixes a, b, c). Every scenario runs
/// plain Stability Selection (`SS`, B = 100) and three trimmed variants
/// (`T1`..`T3`), all rank-based with q = 5 on subsamples.
pub fn table1(replications: usize, master_seed: u64) -> ExperimentConfig {
    // (id, p, n, rows, n_sub, [(B, gamma); 3])
    type Geometry = (u32, usize, usize, usize, usize, [(usize, f64); 3]);
    const GEOMETRIES: [Geometry; 5] = [
        (1, 25, 50, 2, 25, [(100, 0.5), (100, 0.75), (100, 0.9)]),
        (2, 50, 100, 2, 50, [(100, 0.5), (100, 0.75), (100, 0.9)]),
        (3, 50, 100, 5, 50, [(100, 0.75), (100, 0.9), (1000, 0.95)]),
        (4, 200, 200, 20, 100, [(100, 0.5), (100, 0.75), (1000, 0.9)]),
        (5, 500, 200, 10, 100, [(100, 0.75), (1000, 0.95), (1000, 0.99)]),
    ];
    let mut scenarios = Vec::new();
    for (id, p, n, rows, n_sub, trims) in GEOMETRIES {
        for (suffix, snr) in [("a", 5.0), ("b", 2.0), ("c", 1.0)] {
            let mut methods = vec![MethodSpec::new("SS", 100, 0.0)];
            for (k, (b, gamma)) in trims.iter().enumerate() {
                methods.push(MethodSpec::new(&format!("T{}", k + 1), *b, *gamma));
            }
            scenarios.push(ScenarioConfig {
                name: format!("{id}{suffix}"),
                n,
                p,
                s0: 5,
                contaminated_rows: rows,
                snr: Some(snr),
                n_sub,
                resampling: Resampling::Subsample,
                rule: StableRule::Rank(5),
                replications,
                selector: None,
                methods,
            });
        }
    }
    ExperimentConfig { schema_version: SCHEMA_VERSION, master_seed, workers: None, output_dir: None, scenarios }
}
