use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use srmr_core::inference::{region_significance, DEFAULT_ROUNDS};
use srmr_core::io::{read_dataset, read_truth, write_dataset, write_truth, Truth};
use srmr_core::metrics::{
    adjusted_rand_index_flagged, outlier_acc, pce, pce_bijective, rand_index,
};
use srmr_core::rng::{derive_seed, domain};
use srmr_core::simgen::{generate, preset_with, BetaReading, ScenarioConfig, PRESET_NAMES};
use srmr_core::srmr::{self, select_k, srmr_fit};
use srmr_core::{FitResult, SpatialDataset, SrmrConfig};

use crate::error::{CliError, CliResult};
use crate::plot;
use crate::report::{
    to_json, EvalReport, FitReport, RegionSignificance, SignificanceDocument, EVAL_SCHEMA,
    SIGNIFICANCE_SCHEMA,
};

pub const DEFAULT_PRESET_REPLICATES: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "srmr", version, about = "Spatially-constrained robust mixture regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic datasets with ground truth
    Simulate(SimulateArgs),
    /// Fit a model to a dataset CSV
    Fit(FitArgs),
    /// Score a fit report against a truth sidecar
    Eval(EvalArgs),
    /// Generate, fit and score replicates of one or more presets
    Bench(BenchArgs),
    /// Bootstrap significance of each region's Type-1 outliers
    TestSignificance(SignificanceArgs),
    /// Write scatter and fitted-line data for plotting
    Plotdata(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum ReadingArg {
    #[default]
    InterceptSlope,
    Slopes,
}

impl From<ReadingArg> for BetaReading {
    fn from(r: ReadingArg) -> Self {
        match r {
            ReadingArg::InterceptSlope => BetaReading::InterceptSlope,
            ReadingArg::Slopes => BetaReading::Slopes,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Preset scenario name
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Scenario config file (TOML)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Replicates per setting [default: 100 for presets, 1 for a config file]
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ReadingArg::InterceptSlope)]
    pub beta_reading: ReadingArg,
    #[arg(long)]
    pub out: PathBuf,
}

/// Hyperparameters shared by `fit` and `bench`.
#[derive(Debug, Clone, Args, PartialEq)]
pub struct FitOptions {
    #[arg(long, default_value_t = srmr_core::hmr::DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Trim fraction of the per-region robust fits
    #[arg(long, default_value_t = srmr::DEFAULT_TRIM)]
    pub alpha: f64,
    /// Type-1 residual cutoff in robust standard deviations
    #[arg(long, default_value_t = srmr::DEFAULT_CUTOFF)]
    pub cutoff: f64,
    /// Residual cutoff, in standard deviations, below which a Type-2 vote is dropped
    #[arg(long, default_value_t = srmr::DEFAULT_TYPE2_CUTOFF)]
    pub type2_cutoff: f64,
    /// Random starts
    #[arg(long, default_value_t = srmr::DEFAULT_STARTS)]
    pub starts: usize,
    /// Outer iteration cap
    #[arg(long, default_value_t = srmr::DEFAULT_OUTER_ITER)]
    pub max_outer: usize,
    #[arg(long, default_value_t = srmr_core::regression::DEFAULT_LTS_STARTS)]
    pub lts_starts: usize,
    #[arg(long, default_value_t = srmr_core::hmr::DEFAULT_MAX_ITER)]
    pub hmr_max_iter: usize,
    /// Initial subset size
    #[arg(long)]
    pub n0: Option<usize>,
    /// Spatial bandwidth
    #[arg(long)]
    pub tau2: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        let c = SrmrConfig::new(1, 0);
        Self {
            lambda: c.lambda,
            alpha: c.alpha,
            cutoff: c.cutoff,
            type2_cutoff: c.type2_cutoff,
            starts: c.starts,
            max_outer: c.max_outer,
            lts_starts: c.lts_starts,
            hmr_max_iter: c.hmr_max_iter,
            n0: c.n0,
            tau2: c.tau2,
        }
    }
}

impl FitOptions {
    pub fn config(&self, k: usize, seed: u64) -> SrmrConfig {
        SrmrConfig {
            k,
            n0: self.n0,
            max_outer: self.max_outer,
            starts: self.starts,
            lambda: self.lambda,
            alpha: self.alpha,
            cutoff: self.cutoff,
            type2_cutoff: self.type2_cutoff,
            lts_starts: self.lts_starts,
            hmr_max_iter: self.hmr_max_iter,
            tau2: self.tau2,
            seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Number of regions
    #[arg(long, conflicts_with = "k_range")]
    pub k: Option<usize>,
    /// Candidate range for BIC selection, e.g. `1..4` (inclusive)
    #[arg(long)]
    pub k_range: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub options: FitOptions,
    /// Output file [default: stdout]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Scenario file holding the true coefficients, for PCE
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Preset names, or `all`
    #[arg(long = "preset", required = true, num_args = 1..)]
    pub presets: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_PRESET_REPLICATES)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ReadingArg::InterceptSlope)]
    pub beta_reading: ReadingArg,
    #[command(flatten)]
    pub options: FitOptions,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SignificanceArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Bootstrap rounds
    #[arg(long, default_value_t = DEFAULT_ROUNDS)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Also write a self-contained SVG scatter
    #[arg(long)]
    pub svg: bool,
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes to `path`, or to stdout without one.
pub fn emit(path: Option<&Path>, contents: &str) -> CliResult<()> {
    match path {
        Some(p) => write_file(p, contents.as_bytes()),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

pub fn load_dataset(path: &Path) -> CliResult<SpatialDataset> {
    let bytes = read_file(path)?;
    read_dataset(bytes.as_slice()).map_err(|e| {
        CliError::from(e).with_context(&path.display().to_string())
    })
}

pub fn load_report(path: &Path) -> CliResult<FitReport> {
    let bytes = read_file(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::mismatch(format!("{}: {e}", path.display())))
}

pub fn load_scenario(path: &Path) -> CliResult<ScenarioConfig> {
    let text = String::from_utf8(read_file(path)?)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let cfg: ScenarioConfig = toml::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn scenario_toml(cfg: &ScenarioConfig) -> String {
    toml::to_string(cfg).expect("scenario configs serialize")
}

/// Seed of replicate `rep` of setting `setting`, kept within 63 bits so it
/// survives a TOML round trip.
pub fn replicate_seed(seed: u64, setting: usize, rep: usize) -> u64 {
    derive_seed(seed, domain::REPLICATE, ((setting as u64) << 32) | rep as u64) >> 1
}

fn slug(name: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| match c {
            'a'..='z' | 'A'..='Z' | '0'..='9' | '.' | '-' => c,
            '=' => '-',
            _ => '_',
        })
        .collect();
    if s.is_empty() {
        "scenario".into()
    } else {
        s
    }
}

fn resolve_presets(names: &[String], reading: BetaReading) -> CliResult<Vec<ScenarioConfig>> {
    let mut out = Vec::new();
    for name in names {
        if name == "all" {
            for p in PRESET_NAMES {
                out.extend(preset_with(p, reading)?);
            }
        } else {
            out.extend(preset_with(name, reading)?);
        }
    }
    Ok(out)
}

/// Writes `<stem>.csv`, `<stem>.truth.csv` and `<stem>.scenario.toml` per
/// replicate; returns the dataset paths.
pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<Vec<PathBuf>> {
    let (settings, default_reps) = match (&args.preset, &args.config) {
        (Some(name), None) => (
            resolve_presets(std::slice::from_ref(name), args.beta_reading.into())?,
            DEFAULT_PRESET_REPLICATES,
        ),
        (None, Some(path)) => (vec![load_scenario(path)?], 1),
        _ => return Err(CliError::config("give exactly one of --preset or --config")),
    };
    let replicates = args.replicates.unwrap_or(default_reps);
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let jobs: Vec<(usize, usize)> = (0..settings.len())
        .flat_map(|s| (0..replicates).map(move |r| (s, r)))
        .collect();
    let files: Vec<CliResult<PathBuf>> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let cfg = ScenarioConfig {
                seed: replicate_seed(args.seed, s, r),
                ..settings[s].clone()
            };
            let lds = generate(&cfg)?;
            let stem = format!("{}_r{:03}", slug(&cfg.name), r);
            let data_path = args.out.join(format!("{stem}.csv"));
            let mut buf = Vec::new();
            write_dataset(&lds.data, &mut buf)?;
            write_file(&data_path, &buf)?;
            let mut truth = Vec::new();
            write_truth(&Truth::from(&lds), &mut truth)?;
            write_file(&args.out.join(format!("{stem}.truth.csv")), &truth)?;
            write_file(
                &args.out.join(format!("{stem}.scenario.toml")),
                scenario_toml(&cfg).as_bytes(),
            )?;
            Ok(data_path)
        })
        .collect();
    files.into_iter().collect()
}

/// Parses `a..b` or `a..=b` (both inclusive) or a comma list.
pub fn parse_k_range(spec: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::config(format!("cannot parse K range '{spec}'"));
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|_| bad());
    let ks: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        (parse(a)?..=parse(b)?).collect()
    } else {
        spec.split(',').map(parse).collect::<CliResult<_>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(bad());
    }
    Ok(ks)
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<FitReport> {
    let ds = load_dataset(&args.data)?;
    match (args.k, &args.k_range) {
        (Some(k), None) => {
            let cfg = args.options.config(k, args.seed);
            let fit = srmr_fit(&ds, &cfg)?;
            Ok(FitReport::new(&fit, ds.n(), ds.p(), &cfg))
        }
        (None, Some(range)) => {
            let ks = parse_k_range(range)?;
            let cfg = args.options.config(ks[0], args.seed);
            let sel = select_k(&ds, &ks, &cfg)?;
            let mut report = FitReport::new(&sel.best, ds.n(), ds.p(), &cfg.with_k(sel.best.k()));
            report.selected_k = Some(sel.best.k());
            report.candidates = Some(sel.candidates.iter().map(Into::into).collect());
            Ok(report)
        }
        _ => Err(CliError::config("give exactly one of --k or --k-range")),
    }
}

/// Scores a fit against ground truth.
pub fn evaluate(fit: &FitResult, truth: &Truth, true_betas: Option<&[Vec<f64>]>) -> CliResult<EvalReport> {
    let labels = &fit.assignment.labels;
    if labels.len() != truth.n() {
        return Err(CliError::mismatch(format!(
            "fit has {} rows, truth has {}",
            labels.len(),
            truth.n()
        )));
    }
    let ri = rand_index(&truth.labels, labels)?;
    let (ari, ari_degenerate) = adjusted_rand_index_flagged(&truth.labels, labels)?;
    let acc = if truth.type1.is_empty() && truth.type2.is_empty() {
        None
    } else {
        Some(outlier_acc(
            &fit.assignment.type1,
            &fit.assignment.type2,
            &truth.type1,
            &truth.type2,
        )?)
    };
    let fitted: Vec<Vec<f64>> = fit.model.components.iter().map(|c| c.beta.clone()).collect();
    let (pce_v, pce_b) = match true_betas {
        Some(t) => (Some(pce(t, &fitted)?), pce_bijective(t, &fitted).ok()),
        None => (None, None),
    };
    Ok(EvalReport {
        schema: EVAL_SCHEMA.into(),
        n: truth.n(),
        ri,
        ari,
        ari_degenerate,
        acc: acc.map(|a| a.overall),
        acc_type1: acc.and_then(|a| a.type1),
        acc_type2: acc.and_then(|a| a.type2),
        pce: pce_v,
        pce_bijective: pce_b,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> CliResult<EvalReport> {
    let fit = load_report(&args.report)?.to_fit()?;
    let truth = read_truth(read_file(&args.truth)?.as_slice())?;
    let betas = match &args.scenario {
        Some(p) => Some(
            load_scenario(p)?
                .betas
                .iter()
                .map(|b| b.to_vec())
                .collect::<Vec<_>>(),
        ),
        None => None,
    };
    evaluate(&fit, &truth, betas.as_deref())
}

pub const BENCH_HEADER: &str = "setting,replicates,failures,ri,ari,acc,pce";

fn mean_cell(values: impl Iterator<Item = f64>) -> String {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in values {
        n += 1;
        sum += v;
    }
    if n == 0 {
        "NA".into()
    } else {
        (sum / n as f64).to_string()
    }
}

/// Runs generate, fit and eval per replicate and returns the CSV table of
/// mean metrics per setting. Failed replicates are counted, not fatal.
pub fn cmd_bench(args: &BenchArgs) -> CliResult<String> {
    if args.replicates == 0 {
        return Err(CliError::config("at least one replicate is required"));
    }
    let settings = resolve_presets(&args.presets, args.beta_reading.into())?;
    let jobs: Vec<(usize, usize)> = (0..settings.len())
        .flat_map(|s| (0..args.replicates).map(move |r| (s, r)))
        .collect();
    let results: Vec<Result<EvalReport, String>> = jobs
        .par_iter()
        .map(|&(s, r)| {
            let seed = replicate_seed(args.seed, s, r);
            let cfg = ScenarioConfig {
                seed,
                ..settings[s].clone()
            };
            let run = || -> CliResult<EvalReport> {
                let lds = generate(&cfg)?;
                let fit = srmr_fit(&lds.data, &args.options.config(cfg.k, seed))?;
                evaluate(&fit, &Truth::from(&lds), Some(&lds.true_betas))
            };
            run().map_err(|e| e.message)
        })
        .collect();

    let mut table = String::from(BENCH_HEADER);
    table.push('\n');
    for (s, setting) in settings.iter().enumerate() {
        let block = &results[s * args.replicates..(s + 1) * args.replicates];
        let ok: Vec<&EvalReport> = block.iter().filter_map(|r| r.as_ref().ok()).collect();
        let failures = block.len() - ok.len();
        table.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            setting.name,
            args.replicates,
            failures,
            mean_cell(ok.iter().map(|e| e.ri)),
            mean_cell(ok.iter().map(|e| e.ari)),
            mean_cell(ok.iter().filter_map(|e| e.acc)),
            mean_cell(ok.iter().filter_map(|e| e.pce)),
        ));
    }
    Ok(table)
}

pub fn cmd_test_significance(args: &SignificanceArgs) -> CliResult<SignificanceDocument> {
    let ds = load_dataset(&args.data)?;
    let fit = load_report(&args.report)?.to_fit()?;
    if fit.assignment.labels.len() != ds.n() {
        return Err(CliError::mismatch(format!(
            "report covers {} rows, data has {}",
            fit.assignment.labels.len(),
            ds.n()
        )));
    }
    let regions = (1..=fit.k())
        .map(|k| {
            let seed = derive_seed(args.seed, domain::BOOTSTRAP, k as u64);
            let r = region_significance(&fit, &ds, k, args.rounds, seed)?;
            Ok(RegionSignificance {
                k,
                p_raw: r.p_raw,
                region_weight: r.region_weight,
                p_corrected: r.p_corrected,
                rounds: r.rounds,
                epsilon0: (!r.vacuous).then_some(r.epsilon0),
                sigma_hat: r.sigma_hat,
                vacuous: r.vacuous,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(SignificanceDocument {
        schema: SIGNIFICANCE_SCHEMA.into(),
        seed: args.seed,
        regions,
    })
}

pub fn cmd_plotdata(args: &PlotArgs) -> CliResult<Vec<PathBuf>> {
    let ds = load_dataset(&args.data)?;
    let fit = load_report(&args.report)?.to_fit()?;
    if fit.assignment.labels.len() != ds.n() {
        return Err(CliError::mismatch(format!(
            "report covers {} rows, data has {}",
            fit.assignment.labels.len(),
            ds.n()
        )));
    }
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let mut written = Vec::new();
    for (name, contents) in plot::plot_files(&ds, &fit, args.svg) {
        let path = args.out.join(name);
        write_file(&path, contents.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Runs a parsed command, writing its output.
pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(a) => {
            let files = cmd_simulate(a)?;
            eprintln!("wrote {} datasets to {}", files.len(), a.out.display());
            Ok(())
        }
        Command::Fit(a) => emit(a.out.as_deref(), &to_json(&cmd_fit(a)?)),
        Command::Eval(a) => emit(a.out.as_deref(), &to_json(&cmd_eval(a)?)),
        Command::Bench(a) => emit(a.out.as_deref(), &cmd_bench(a)?),
        Command::TestSignificance(a) => emit(a.out.as_deref(), &to_json(&cmd_test_significance(a)?)),
        Command::Plotdata(a) => {
            for p in cmd_plotdata(a)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}
