use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info};

use sdtkit::config::{Overrides, RunConfig};
use sdtkit::fit::UvsdParams;
use sdtkit::ingest::{self, InputFormat};
use sdtkit::pipeline::{self, AfcReport, AnalysisReport};
use sdtkit::roc::{BinKind, Correction};
use sdtkit::simulate::{self, SimSpec};
use sdtkit::{report, Result, SdtError};

#[derive(Parser)]
#[command(
    name = "sdtkit",
    version,
    about = "Signal detection analysis of trial-level discrimination data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score free-text generations against alias sets at each robustness threshold.
    Score(Common),
    /// Fit every condition and write report.json plus per-condition CSVs.
    Analyze(Common),
    /// Forced-choice d' per domain, optionally against a d_a table.
    Afc {
        #[command(flatten)]
        common: Common,
        /// Number of alternatives.
        #[arg(long)]
        m: Option<u32>,
        /// CSV with `domain,d_a` columns.
        #[arg(long)]
        da_table: Option<PathBuf>,
    },
    /// Generate synthetic rating trials.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mu: Option<f64>,
        #[arg(long)]
        sigma_s: Option<f64>,
        /// Trials per class.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Monte Carlo equivalence bounds for pure criterion shifts.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        n_per_class: Option<usize>,
    },
    /// Parameter-recovery and interval-coverage study.
    Recover {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Render markdown and SVG figures from a report.json.
    Report {
        #[command(flatten)]
        common: Common,
        /// afc.json to include.
        #[arg(long)]
        afc: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BinKindArg {
    EqualWidth,
    Quantile,
}

#[derive(Clone, Copy, ValueEnum)]
enum CorrectionArg {
    Hautus,
    None,
}

#[derive(Args)]
struct Common {
    /// Input file(s); repeat the flag for several.
    #[arg(long)]
    input: Vec<PathBuf>,
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, value_enum)]
    bin_kind: Option<BinKindArg>,
    #[arg(long, value_enum)]
    correction: Option<CorrectionArg>,
    /// Bootstrap resamples per condition (0 disables).
    #[arg(long)]
    boot: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    equiv_bound: Option<f64>,
    #[arg(long)]
    ece_bins: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let o = Overrides {
            inputs: self.input.clone(),
            bins: self.bins,
            bin_kind: self.bin_kind.map(|k| match k {
                BinKindArg::EqualWidth => BinKind::EqualWidth,
                BinKindArg::Quantile => BinKind::Quantile,
            }),
            correction: self.correction.map(|c| match c {
                CorrectionArg::Hautus => Correction::HautusLoglinear,
                CorrectionArg::None => Correction::None,
            }),
            boot: self.boot,
            seed: self.seed,
            equiv_bound: self.equiv_bound,
            ece_bins: self.ece_bins,
            out: self.out.clone(),
            workers: self.workers,
        };
        let cfg = RunConfig::load(self.config.as_deref(), &o)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn single_input(cfg: &RunConfig) -> Result<&Path> {
    match cfg.inputs.as_slice() {
        [p] => Ok(p),
        [] => Err(SdtError::Config("--input is required".into())),
        _ => Err(SdtError::Config("this command takes exactly one --input".into())),
    }
}

fn cmd_score(cfg: &RunConfig) -> Result<bool> {
    cfg.validate_inputs()?;
    let path = single_input(cfg)?;
    let rows = ingest::read_generations(path, InputFormat::from_path(path)?)?;
    let table = ingest::score_robustness(&rows, &cfg.scoring)?;
    fs::create_dir_all(&cfg.out)?;
    let mut w = csv::Writer::from_path(cfg.out.join("scores.csv"))?;
    let mut header = vec!["trial_id".to_string(), "similarity".to_string()];
    header.extend(table.thresholds.iter().map(|t| format!("correct_at_{t}")));
    w.write_record(&header)?;
    for i in 0..table.trial_ids.len() {
        let mut rec = vec![table.trial_ids[i].clone(), table.similarity[i].to_string()];
        rec.extend(table.columns.iter().map(|c| c[i].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    let unstable = table.unstable_trials();
    info!(
        "scored {} generations; {} change verdict across thresholds",
        rows.len(),
        unstable.len()
    );
    write_json(&cfg.out.join("robustness.json"), &table)?;
    Ok(true)
}

fn cmd_analyze(cfg: &RunConfig) -> Result<bool> {
    let report = pipeline::run_analyze(cfg)?;
    let failed = report.n_failed();
    info!(
        "analysed {} conditions ({} failed); wrote {}",
        report.conditions.len(),
        failed,
        cfg.out.join("report.json").display()
    );
    if failed == report.conditions.len() {
        error!("every condition failed");
    }
    Ok(failed == 0)
}

fn cmd_afc(cfg: &RunConfig, m: Option<u32>, da_table: Option<PathBuf>) -> Result<bool> {
    let mut cfg = cfg.clone();
    if let Some(m) = m {
        cfg.afc.m = m;
    }
    if da_table.is_some() {
        cfg.afc.da_table = da_table;
    }
    cfg.validate_inputs()?;
    let counts = pipeline::read_afc_counts(single_input(&cfg)?)?;
    let da = match &cfg.afc.da_table {
        Some(p) => pipeline::read_da_table(p)?,
        None => Default::default(),
    };
    let r = pipeline::analyze_afc(
        &counts,
        &da,
        cfg.afc.m,
        cfg.afc.correct_boundaries,
        cfg.afc.convergence_bound,
    )?;
    write_json(&cfg.out.join("afc.json"), &r)?;
    if let Some(b) = &r.bland_altman {
        b.write_csv(fs::File::create(cfg.out.join("bland_altman.csv"))?)?;
    }
    info!(
        "pooled {}AFC: pc {:.4}, d' {:.3}",
        r.m, r.pooled.proportion_correct, r.pooled.d_prime
    );
    Ok(true)
}

fn cmd_simulate(cfg: &RunConfig, mu: Option<f64>, sigma_s: Option<f64>, n: Option<usize>) -> Result<bool> {
    let seed = cfg.require_seed()?;
    let mut spec = match &cfg.simulate {
        Some(s) => s.clone(),
        None => SimSpec::new(UvsdParams::new(1.0, 1.25, Vec::new())?, 1000, 1000, seed),
    };
    if cfg.simulate.is_none() || cfg.seed.is_some() {
        spec.seed = seed;
    }
    if mu.is_some() || sigma_s.is_some() {
        spec.truth = UvsdParams::new(
            mu.unwrap_or(spec.truth.mu),
            sigma_s.unwrap_or(spec.truth.sigma_s),
            Vec::new(),
        )?;
    }
    if let Some(n) = n {
        spec.n_signal = n;
        spec.n_noise = n;
    }
    let trials = simulate::generate_trials(&spec)?;
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("trials.jsonl");
    ingest::write_trials_jsonl(&trials, std::io::BufWriter::new(fs::File::create(&path)?))?;
    write_json(&cfg.out.join("simspec.json"), &spec)?;
    info!("wrote {} trials to {}", trials.len(), path.display());
    Ok(true)
}

fn cmd_bounds(cfg: &RunConfig, iterations: Option<usize>, n_per_class: Option<usize>) -> Result<bool> {
    let seed = cfg.require_seed()?;
    let b = &cfg.bounds;
    let report = pipeline::with_workers(cfg.workers, || {
        simulate::derive_equivalence_bound(
            &b.combinations()?,
            &b.deltas,
            iterations.unwrap_or(b.iterations),
            n_per_class.unwrap_or(b.n_per_class),
            seed,
            b.n_bins,
        )
    })??;
    write_json(&cfg.out.join("bounds.json"), &report)?;
    info!("global max |ΔAUC| = {:.5}", report.global_max);
    Ok(true)
}

fn cmd_recover(cfg: &RunConfig, replications: Option<usize>) -> Result<bool> {
    let seed = cfg.require_seed()?;
    let r = &cfg.recover;
    let report = pipeline::with_workers(cfg.workers, || {
        simulate::recovery_study(
            &r.truth_grid()?,
            &r.n_grid,
            replications.unwrap_or(r.replications),
            seed,
            r.n_bins,
        )
    })??;
    fs::create_dir_all(&cfg.out)?;
    report.write_csv(fs::File::create(cfg.out.join("recovery.csv"))?)?;
    write_json(&cfg.out.join("recovery.json"), &report)?;
    Ok(true)
}

fn cmd_report(cfg: &RunConfig, afc: Option<PathBuf>) -> Result<bool> {
    let path = single_input(cfg)?;
    let read =
        |p: &Path| fs::read_to_string(p).map_err(|e| SdtError::Config(format!("cannot read {}: {e}", p.display())));
    let report = AnalysisReport::from_json(&read(path)?)?;
    let afc: Option<AfcReport> = match afc {
        Some(p) => Some(serde_json::from_str(&read(&p)?)?),
        None => None,
    };
    if report.reports().next().is_none() {
        return Err(SdtError::InsufficientData(
            "the report holds no successful conditions".into(),
        ));
    }
    let files = report::write_bundle(&report, afc.as_ref(), &cfg.out)?;
    info!("wrote {} files to {}", files.len(), cfg.out.display());
    Ok(true)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Score(c) => cmd_score(&c.load()?),
        Command::Analyze(c) => cmd_analyze(&c.load()?),
        Command::Afc { common, m, da_table } => cmd_afc(&common.load()?, m, da_table),
        Command::Simulate { common, mu, sigma_s, n } => cmd_simulate(&common.load()?, mu, sigma_s, n),
        Command::Bounds {
            common,
            iterations,
            n_per_class,
        } => cmd_bounds(&common.load()?, iterations, n_per_class),
        Command::Recover { common, replications } => cmd_recover(&common.load()?, replications),
        Command::Report { common, afc } => cmd_report(&common.load()?, afc),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
