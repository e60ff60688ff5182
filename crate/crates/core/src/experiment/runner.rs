//! Replication runner.
//!
//! Seeds: replication `r` of scenario `name` uses
//! `rep = mix_path(master_seed, [fnv1a(name), r])`; the clean data come from
//! `mix(rep, 0)`, the contamination from `mix(rep, 1)` and method `k` resamples
//! from `mix(rep, 100 + k)`. All methods of a replication see the same
//! contaminated data set.
//!
//! Replications run on a bounded rayon pool in batches; each batch is
//! collected in replication order before it is written, so the output is the
//! same for every worker count and an interrupted run can be resumed from
//! the last complete replication.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ScenarioConfig};
use crate::error::{Error, Result};
use crate::metrics::{score, summarize, RunScore};
use crate::resample::ResamplePlan;
use crate::rng;
use crate::stability::run_stability_selection;
use crate::synthdata::{contaminate, generate_dataset, ContaminationSpec};

pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

const ROW_HEADER: [&str; 12] = [
    "scenario", "replication", "method", "b", "gamma", "recovered", "tpr", "full_recovery", "total_miss",
    "false_positives", "stable", "seed",
];

/// One method on one replication; the long-format output table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub scenario: String,
    pub replication: usize,
    pub method: String,
    pub b: usize,
    pub gamma: f64,
    pub recovered: usize,
    pub tpr: f64,
    pub full_recovery: bool,
    pub total_miss: bool,
    pub false_positives: usize,
    /// Stable variables as space-separated column names (`x1 x4 ...`).
    pub stable: String,
    pub seed: u64,
}

impl ReplicationRow {
    fn score(&self, support_size: usize) -> RunScore {
        RunScore {
            tpr: self.tpr,
            recovered: self.recovered,
            support_size,
            full_recovery: self.full_recovery,
            total_miss: self.total_miss,
            false_positives: self.false_positives,
        }
    }
}

/// One `(scenario, method)` line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: String,
    pub mean_tpr_count: f64,
    pub mean_tpr_rate: f64,
    pub cases_tpr1: usize,
    pub cases_tpr0: usize,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the configured worker count.
    pub workers: Option<usize>,
    /// Overrides every scenario's replication count.
    pub replications_override: Option<usize>,
    /// Reuse complete replications already present in the output directory.
    pub resume: bool,
}

/// FNV-1a, so scenario seeds depend on the name and not on the position in
/// the configuration.
fn name_tag(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn replication_seed(master_seed: u64, scenario: &str, replication: usize) -> u64 {
    rng::mix_path(master_seed, &[name_tag(scenario), replication as u64])
}

/// Run every method of `scenario` on replication `replication`.
pub fn run_replication(scenario: &ScenarioConfig, replication: usize, master_seed: u64) -> Result<Vec<ReplicationRow>> {
    let rep = replication_seed(master_seed, &scenario.name, replication);
    let clean = generate_dataset(scenario.n, scenario.p, scenario.s0, scenario.snr_value(), rng::mix(rep, 0))?;
    let data = contaminate(&clean, &ContaminationSpec::column_zero(scenario.contaminated_rows), rng::mix(rep, 1))?;
    let selector = scenario.selector_config();
    scenario
        .methods
        .iter()
        .enumerate()
        .map(|(k, method)| {
            let seed = rng::mix(rep, 100 + k as u64);
            let plan = ResamplePlan::new(scenario.resampling, scenario.n, scenario.n_sub, method.b, seed)?;
            // resample streams use tags 1..=B, ties derive from tag 0
            let run = run_stability_selection(&data, &plan, &selector, scenario.rule, method.gamma, rng::mix(seed, 0))?;
            let s = score(&run.stable, &data.support)?;
            Ok(ReplicationRow {
                scenario: scenario.name.clone(),
                replication,
                method: method.label.clone(),
                b: method.b,
                gamma: method.gamma,
                recovered: s.recovered,
                tpr: s.tpr,
                full_recovery: s.full_recovery,
                total_miss: s.total_miss,
                false_positives: s.false_positives,
                stable: run.stable.iter().map(|j| format!("x{}", j + 1)).collect::<Vec<_>>().join(" "),
                seed,
            })
        })
        .collect()
}

fn apply_override(cfg: &ExperimentConfig, opts: &RunOptions) -> ExperimentConfig {
    let mut cfg = cfg.clone();
    if let Some(r) = opts.replications_override {
        for s in &mut cfg.scenarios {
            s.replications = r;
        }
    }
    cfg
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::param("workers must be at least 1"));
        }
        b = b.num_threads(w);
    }
    b.build().map_err(|e| Error::param(format!("cannot start worker pool: {e}")))
}

/// Drive all replications not yet in `done`, handing each ordered batch to
/// `sink`.
fn drive(
    cfg: &ExperimentConfig,
    workers: Option<usize>,
    done: &[ReplicationRow],
    mut sink: impl FnMut(&[ReplicationRow]) -> Result<()>,
) -> Result<()> {
    let pool = pool(workers.or(cfg.workers))?;
    let batch = pool.current_num_threads().max(1) * 2;
    for scenario in &cfg.scenarios {
        let start = done.iter().filter(|r| r.scenario == scenario.name).count() / scenario.methods.len();
        let mut next = start;
        while next < scenario.replications {
            let end = (next + batch).min(scenario.replications);
            let rows: Vec<Vec<ReplicationRow>> = pool.install(|| {
                (next..end).into_par_iter().map(|r| run_replication(scenario, r, cfg.master_seed)).collect::<Result<_>>()
            })?;
            sink(&rows.concat())?;
            next = end;
        }
    }
    Ok(())
}

pub fn summarize_rows(cfg: &ExperimentConfig, rows: &[ReplicationRow]) -> Result<Vec<SummaryRow>> {
    let mut out = Vec::new();
    for scenario in &cfg.scenarios {
        for method in &scenario.methods {
            let scores: Vec<RunScore> = rows
                .iter()
                .filter(|r| r.scenario == scenario.name && r.method == method.label)
                .map(|r| r.score(scenario.s0))
                .collect();
            let s = summarize(&scores)?;
            out.push(SummaryRow {
                scenario: scenario.name.clone(),
                method: method.label.clone(),
                mean_tpr_count: s.mean_tpr_count,
                mean_tpr_rate: s.mean_tpr_rate,
                cases_tpr1: s.cases_tpr1,
                cases_tpr0: s.cases_tpr0,
                replications: s.replications,
                seed: cfg.master_seed,
            });
        }
    }
    Ok(out)
}

/// Run in memory without touching the file system.
pub fn simulate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(Vec<ReplicationRow>, Vec<SummaryRow>)> {
    let cfg = apply_override(cfg, opts);
    cfg.validate()?;
    let mut rows = Vec::new();
    drive(&cfg, opts.workers, &[], |batch| {
        rows.extend_from_slice(batch);
        Ok(())
    })?;
    let summary = summarize_rows(&cfg, &rows)?;
    Ok((rows, summary))
}

/// Keep the longest prefix of `existing` made of complete replications in
/// the order this configuration produces them.
fn complete_prefix(cfg: &ExperimentConfig, existing: Vec<ReplicationRow>) -> Vec<ReplicationRow> {
    let mut keep = 0;
    let mut it = existing.iter();
    'outer: for scenario in &cfg.scenarios {
        for r in 0..scenario.replications {
            for method in &scenario.methods {
                match it.next() {
                    Some(row) if row.scenario == scenario.name && row.replication == r && row.method == method.label => {}
                    _ => break 'outer,
                }
            }
            keep += scenario.methods.len();
        }
    }
    let mut existing = existing;
    existing.truncate(keep);
    existing
}

fn read_rows(path: &Path) -> Result<Vec<ReplicationRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        match row {
            Ok(r) => rows.push(r),
            // a torn final line from an interrupted run
            Err(_) => break,
        }
    }
    Ok(rows)
}

fn write_rows<W: Write>(w: &mut csv::Writer<W>, rows: &[ReplicationRow]) -> Result<()> {
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Run the experiment, streaming `replications.csv` and writing
/// `summary.csv` into `out_dir`. Returns the summary rows.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, opts: &RunOptions) -> Result<Vec<SummaryRow>> {
    let cfg = apply_override(cfg, opts);
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let rep_path: PathBuf = out_dir.join(REPLICATIONS_FILE);

    let done = if opts.resume && rep_path.exists() { complete_prefix(&cfg, read_rows(&rep_path)?) } else { Vec::new() };
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(BufWriter::new(File::create(&rep_path)?));
    writer.write_record(ROW_HEADER)?;
    write_rows(&mut writer, &done)?;
    let mut all = done.clone();
    drive(&cfg, opts.workers, &done, |batch| {
        write_rows(&mut writer, batch)?;
        all.extend_from_slice(batch);
        Ok(())
    })?;
    writer.flush()?;

    let summary = summarize_rows(&cfg, &all)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(File::create(out_dir.join(SUMMARY_FILE))?));
    for s in &summary {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(summary)
}
