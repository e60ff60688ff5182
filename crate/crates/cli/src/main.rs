use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value as Json;

use trimstab::breakdown::{
    monte_carlo_breakdown, robustness_surplus, stab_bdp, BreakdownQuery, RankContext, SurplusMode, ThresholdContext,
    TrimContext,
};
use trimstab::experiment::{run_experiment, table1, ExperimentConfig, RunOptions};
use trimstab::synthdata::{contaminate, generate_dataset, ContaminationSpec, SchemeKind};
use trimstab::{rng, Error};

#[derive(Parser)]
#[command(name = "trimstab", version, about = "Stability Selection under contamination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario study and write replications.csv and summary.csv.
    Simulate(SimulateArgs),
    /// Evaluate a breakdown probability or breakdown point.
    Bdp(BdpArgs),
    /// Robustness surplus of Stability Selection over its bagging baseline.
    Surplus(SurplusArgs),
    /// Generate a synthetic dataset, optionally contaminated.
    Datagen(DatagenArgs),
    /// Print a built-in experiment configuration.
    Preset(PresetArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; defaults to the configured one, then `results`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    replications_override: Option<usize>,
    /// Keep complete replications already written to the output directory.
    #[arg(long)]
    resume: bool,
    /// Run only these scenarios (repeatable).
    #[arg(long = "scenario")]
    scenarios: Vec<String>,
}

#[derive(Args, Default)]
struct QueryArgs {
    /// Query JSON file, `-` for stdin. Flags below override its fields.
    #[arg(long)]
    query: Option<PathBuf>,
    #[arg(long)]
    formula: Option<String>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    n_sub: Option<u64>,
    /// Number of resamples B.
    #[arg(long)]
    b: Option<u64>,
    /// `bootstrap` or `subsample`.
    #[arg(long)]
    resampling: Option<String>,
    /// Breakdown point of the base selector.
    #[arg(long)]
    bdp: Option<f64>,
    /// Contaminated rows.
    #[arg(long)]
    rows: Option<u64>,
    #[arg(long)]
    max_pi_plus: Option<f64>,
    #[arg(long)]
    pi_thr: Option<f64>,
    /// Rank rule size; selects the rank formulas together with --s and --min-pi-minus.
    #[arg(long)]
    q: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    min_pi_minus: Option<f64>,
    /// `pessimistic` or `optimistic`.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    k_gamma: Option<u64>,
    #[arg(long)]
    mc_samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BdpArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// Estimate by simulating this many ensembles instead of the exact formula.
    #[arg(long)]
    monte_carlo: Option<u64>,
    /// Report the breakdown point at this tolerance instead of a probability.
    #[arg(long)]
    alpha: Option<f64>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SurplusArgs {
    #[command(flatten)]
    query: QueryArgs,
    /// `probability-ratio` or `bdp-ratio`.
    #[arg(long, default_value = "probability-ratio")]
    mode: String,
    /// Tolerance for `bdp-ratio`.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DatagenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long)]
    s0: usize,
    /// Signal-to-noise ratio; noiseless when omitted.
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `column-zero`, `case-wise`, `cell-wise` or `response-only`.
    #[arg(long)]
    attack: Option<String>,
    #[arg(long, default_value_t = 0)]
    rows: usize,
    #[arg(long, default_value_t = 0.0)]
    cell_rate: f64,
    /// Replacement value for constant-valued attacks.
    #[arg(long, default_value_t = 0.0)]
    value: f64,
    /// Output prefix; writes `<out>.csv` and `<out>.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PresetArgs {
    /// Only `table1` is built in.
    name: String,
    #[arg(long, default_value_t = 1000)]
    replications: usize,
    #[arg(long, default_value_t = 20210607)]
    seed: u64,
}

/// Parse a kebab-case enum through its serde representation.
fn enum_arg<T: serde::de::DeserializeOwned>(kind: &str, s: &str) -> Result<T> {
    serde_json::from_value(Json::String(s.to_string())).with_context(|| format!("unknown {kind} `{s}`"))
}

fn read_text(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        Ok(s)
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

fn emit(value: &impl serde::Serialize, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

impl QueryArgs {
    fn build(&self) -> Result<BreakdownQuery> {
        let mut q = match &self.query {
            Some(p) => BreakdownQuery::from_json(&read_text(p)?).with_context(|| format!("query {}", p.display()))?,
            None => BreakdownQuery::default(),
        };
        macro_rules! set {
            ($($f:ident => $g:ident),*) => { $(if let Some(v) = self.$f.clone() { q.$g = Some(v); })* };
        }
        set!(formula => formula, n => n, n_sub => n_sub, b => b, bdp => bdp, rows => contaminated_rows,
             mc_samples => mc_samples, seed => seed);
        if let Some(r) = &self.resampling {
            q.resampling = Some(enum_arg("resampling", r)?);
        }
        if let Some(s) = &self.scenario {
            q.scenario = enum_arg("scenario", s)?;
        }
        if let Some(rank_q) = self.q {
            q.rank = Some(RankContext::Summary {
                q: rank_q,
                s: self.s.ok_or(Error::MissingField("s"))?,
                max_pi_plus: self.max_pi_plus.ok_or(Error::MissingField("max_pi_plus"))?,
                min_pi_minus: self.min_pi_minus.ok_or(Error::MissingField("min_pi_minus"))?,
                dominating: None,
            });
        } else if self.pi_thr.is_some() || self.max_pi_plus.is_some() {
            let old = q.threshold;
            q.threshold = Some(ThresholdContext {
                max_pi_plus: self.max_pi_plus.or(old.map(|t| t.max_pi_plus)).ok_or(Error::MissingField("max_pi_plus"))?,
                pi_thr: self.pi_thr.or(old.map(|t| t.pi_thr)).ok_or(Error::MissingField("pi_thr"))?,
            });
        }
        if self.gamma.is_some() || self.k_gamma.is_some() {
            let old = q.trim;
            q.trim = Some(TrimContext {
                gamma: self.gamma.or(old.map(|t| t.gamma)).ok_or(Error::MissingField("gamma"))?,
                k_gamma: self.k_gamma.or(old.map(|t| t.k_gamma)).ok_or(Error::MissingField("k_gamma"))?,
            });
        }
        Ok(q)
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let text = read_text(&a.config)?;
    let mut cfg = ExperimentConfig::from_json(&text).with_context(|| format!("config {}", a.config.display()))?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    if !a.scenarios.is_empty() {
        cfg.select(&a.scenarios)?;
    }
    let out = a.out.or_else(|| cfg.output_dir.clone().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("results"));
    let opts = RunOptions { workers: a.workers, replications_override: a.replications_override, resume: a.resume };
    let summary = run_experiment(&cfg, &out, &opts)?;
    for s in &summary {
        eprintln!(
            "{:>4} {:<6} mean TPR {:.3}  TPR=1 {:>5}  TPR=0 {:>5}  ({} reps)",
            s.scenario, s.method, s.mean_tpr_count, s.cases_tpr1, s.cases_tpr0, s.replications
        );
    }
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn bdp(a: BdpArgs) -> Result<()> {
    let q = a.query.build()?;
    if a.monte_carlo.is_some() && a.alpha.is_some() {
        bail!("--monte-carlo and --alpha are exclusive");
    }
    let out = a.out.as_deref();
    if let Some(alpha) = a.alpha {
        return emit(&stab_bdp(&q, alpha)?, out);
    }
    if let Some(trials) = a.monte_carlo {
        return emit(&monte_carlo_breakdown(&q, trials, q.seed())?, out);
    }
    emit(&trimstab::breakdown::FormulaRegistry::default().evaluate(&q)?, out)
}

fn surplus(a: SurplusArgs) -> Result<()> {
    let q = a.query.build()?;
    let mode: SurplusMode = enum_arg("surplus mode", &a.mode)?;
    let alpha = match (mode, a.alpha) {
        (SurplusMode::BdpRatio, None) => bail!(Error::MissingField("alpha")),
        (_, alpha) => alpha.unwrap_or(0.0),
    };
    emit(&robustness_surplus(&q, mode, alpha)?, a.out.as_deref())
}

fn datagen(a: DatagenArgs) -> Result<()> {
    let clean = generate_dataset(a.n, a.p, a.s0, a.snr.unwrap_or(f64::INFINITY), a.seed)?;
    let (data, spec) = match &a.attack {
        None => (clean, None),
        Some(name) => {
            let scheme: SchemeKind = enum_arg("attack", name)?;
            let spec = ContaminationSpec {
                scheme,
                row_count: a.rows,
                cell_rate: a.cell_rate,
                replacement_value: a.value,
                ..ContaminationSpec::column_zero(0)
            };
            (contaminate(&clean, &spec, rng::mix(a.seed, 1))?, Some(spec))
        }
    };
    data.save(&a.out, spec)?;
    eprintln!("wrote {} and {}", a.out.with_extension("csv").display(), a.out.with_extension("json").display());
    Ok(())
}

fn preset(a: PresetArgs) -> Result<()> {
    match a.name.as_str() {
        "table1" => {
            println!("{}", table1(a.replications, a.seed).to_json()?);
            Ok(())
        }
        other => bail!("unknown preset `{other}`"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Bdp(a) => bdp(a),
        Command::Surplus(a) => surplus(a),
        Command::Datagen(a) => datagen(a),
        Command::Preset(a) => preset(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
