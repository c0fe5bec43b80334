//! The `pat` command line: fit digital models, train networks, run
//! diagnostics and cost reports. Exit codes: 0 success, 1 invalid input,
//! 2 numeric failure, 3 I/O.

mod config;

pub use config::{default_kernel, ResolvedConfig, RunConfig, Task, PLATE_DIM};

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::arch::{Checkpoint, PnnModel};
use crate::data::{minmax_normalize, mnist_pooled, stratified_split, synth_vowels, vowel_classes, vowel_features};
use crate::diagnostics::{compare_algorithms_at_point, compounding_gap, layer_gap_profile, AlgorithmComparison};
use crate::digital::{fit_mean_model_unchecked, DigitalModel, FitReport};
use crate::error::{PatError, Result};
use crate::physics::{PhysicalSystem, PowerLawPair};
use crate::ssa::{preset, preset_names, HardwareProfile, SsaConfig};
use crate::train::{fingerprint, train, Algorithm, Dataset, RunSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub fn exit_code(e: &PatError) -> i32 {
    match e {
        PatError::Io { .. } => EXIT_IO,
        e if e.is_numeric() => EXIT_NUMERIC,
        _ => EXIT_INVALID,
    }
}

#[derive(Debug, Parser)]
#[command(name = "pat", version, about = "Physics-aware training experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a digital model of the task's physical system.
    Fit(RunArgs),
    /// Train the task network with one or more algorithms.
    Train(RunArgs),
    /// Gradient angles and layer gaps at a checkpoint.
    Diagnose(DiagnoseArgs),
    /// Simulation cost report for a physical system.
    Ssa(SsaArgs),
    /// Run `train` (or `fit`) for several seeds in parallel processes.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// JSON run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Task to run with default settings when no config is given.
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    /// Comma-separated algorithms: pat, insilico, ideal.
    #[arg(long = "alg", value_delimiter = ',')]
    pub algorithms: Vec<Algorithm>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true)]
pub struct DiagnoseArgs {
    #[command(subcommand)]
    pub demo: Option<Demo>,
    #[command(flatten)]
    pub run: RunArgs,
    /// Parameters to diagnose; the seeded initialization otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Use the physical system itself as the digital model.
    #[arg(long)]
    pub exact_model: bool,
    /// Training examples in the gradient batch.
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
}

#[derive(Debug, Subcommand)]
pub enum Demo {
    /// Gap between a power law and its slightly wrong model after n compositions.
    Compounding {
        #[arg(long, default_value_t = 20)]
        n_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct SsaArgs {
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Custom system description in the preset format.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for the JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub seeds: Vec<u64>,
    /// `train` or `fit`.
    #[arg(long, default_value = "train")]
    pub command: String,
    /// Parallel processes; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown task {s:?}"))
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Fit(a) => cmd_fit(&resolve(&a)?).map(|_| EXIT_OK),
        Command::Train(a) => cmd_train(&resolve(&a)?).map(|_| EXIT_OK),
        Command::Diagnose(a) => match a.demo {
            Some(Demo::Compounding { n_max, out }) => cmd_compounding(n_max, out.as_deref()).map(|_| EXIT_OK),
            None => cmd_diagnose(&resolve(&a.run)?, a.checkpoint.as_deref(), a.exact_model, a.batch).map(|_| EXIT_OK),
        },
        Command::Ssa(a) => cmd_ssa(&a).map(|_| EXIT_OK),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

pub fn resolve(a: &RunArgs) -> Result<ResolvedConfig> {
    let mut cfg = match (&a.config, a.task) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(t)) => RunConfig::new(t),
        (None, None) => return Err(PatError::Usage("give --config or --task".into())),
    };
    if let (Some(t), Some(_)) = (a.task, &a.config) {
        if t != cfg.task {
            return Err(PatError::Config("--task disagrees with the config file".into()));
        }
    }
    if !a.algorithms.is_empty() {
        cfg.algorithms = Some(a.algorithms.clone());
    }
    let mut r = cfg.resolve(a.seed, a.out.as_deref())?;
    if let Some(e) = a.epochs {
        r.train.epochs = e;
    }
    Ok(r)
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| PatError::io(p, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| PatError::io(path, e))
}

/// Train/test split for the configured task, plus a fingerprint of the data.
pub fn load_task_data(cfg: &ResolvedConfig) -> Result<(Dataset, Dataset, String)> {
    let (x, y) = match cfg.task {
        Task::VowelNumerical | Task::ShgVowel => {
            let (x, y, real) = vowel_features(&cfg.data_dir, cfg.seed)?;
            if !real {
                log::warn!("no vowel CSV in {}; using synthetic vowels", cfg.data_dir.display());
            }
            (x, y)
        }
        Task::Synthetic => {
            let recs = synth_vowels(cfg.seed, 37);
            (minmax_normalize(&recs)?.0, vowel_classes(&recs)?)
        }
        Task::PlateMnist => mnist_pooled(&cfg.data_dir, cfg.limit)?,
    };
    let fp = fingerprint(x.iter().copied().chain(y.iter().map(|&c| c as f64)));
    let (tr, te) = stratified_split(&x, &y, cfg.test_fraction, cfg.seed)?;
    Ok((tr, te, fp))
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOutput {
    pub config: serde_json::Value,
    pub config_hash: String,
    pub system: String,
    pub report: FitReport,
}

fn fit_system(cfg: &ResolvedConfig, system: &dyn PhysicalSystem) -> Result<DigitalModel> {
    create_dir(&cfg.out)?;
    let fm = fit_mean_model_unchecked(system, &cfg.fit)?;
    let report = fm.report.clone().expect("fitted models carry a report");
    fm.save_json(&cfg.out.join("model.json"))?;
    write_json(
        &cfg.out.join("fit_report.json"),
        &FitOutput {
            config: cfg.to_json(),
            config_hash: cfg.hash(),
            system: system.name().to_string(),
            report: report.clone(),
        },
    )?;
    report.check_gate(cfg.fit.gate)?;
    Ok(fm)
}

/// Fits the first physical layer's system and writes `model.json` and
/// `fit_report.json` to the output directory.
pub fn cmd_fit(cfg: &ResolvedConfig) -> Result<DigitalModel> {
    let model = PnnModel::build(&cfg.arch)?;
    let f_p = model
        .physical_layers()
        .first()
        .map(|p| p.f_p.clone())
        .ok_or_else(|| PatError::Config("architecture has no physical layer".into()))?;
    let fm = fit_system(cfg, f_p.as_ref())?;
    if let Some(r) = &fm.report {
        println!("fit {}: val MSE {:.4e}, relative RMSE {:.3}", f_p.name(), r.val_mse, r.val_relative_rmse);
    }
    Ok(fm)
}

fn digital_model(cfg: &ResolvedConfig) -> Result<Arc<dyn PhysicalSystem>> {
    match &cfg.model {
        Some(p) => Ok(Arc::new(DigitalModel::load_json(p)?)),
        None => Ok(Arc::new(cmd_fit(cfg)?)),
    }
}

#[derive(Debug, Clone, Serialize)]
struct TrainError {
    config_hash: String,
    algorithm: Algorithm,
    error: String,
}

/// Trains every configured algorithm from the same initialization and
/// writes `<alg>_trace.csv`, `<alg>_summary.json` and `<alg>_checkpoint.json`.
pub fn cmd_train(cfg: &ResolvedConfig) -> Result<Vec<RunSummary>> {
    let (tr, te, fp) = load_task_data(cfg)?;
    create_dir(&cfg.out)?;
    let needs_model = cfg.algorithms.iter().any(|a| a.needs_model());
    let f_m = if needs_model { Some(digital_model(cfg)?) } else { None };
    let mut summaries = Vec::new();
    for &alg in &cfg.algorithms {
        let mut model = PnnModel::build(&cfg.arch)?;
        if let Some(f_m) = &f_m {
            model.attach_digital_model(f_m.clone())?;
        }
        let trace = match train(&mut model, &tr, &te, alg, &cfg.train) {
            Ok(t) => t,
            Err(e) => {
                write_json(
                    &cfg.out.join(format!("{}_error.json", alg.tag())),
                    &TrainError {
                        config_hash: cfg.hash(),
                        algorithm: alg,
                        error: e.to_string(),
                    },
                )?;
                return Err(e);
            }
        };
        trace.write_csv(&cfg.out.join(format!("{}_trace.csv", alg.tag())))?;
        model.checkpoint().save_json(&cfg.out.join(format!("{}_checkpoint.json", alg.tag())))?;
        let summary = RunSummary::new(&trace, cfg.to_json(), &fp);
        summary.write_json(&cfg.out.join(format!("{}_summary.json", alg.tag())))?;
        println!(
            "{:<8} final accuracy {:.3}, final loss {:.4}",
            alg.tag(),
            summary.final_test_accuracy,
            summary.final_test_loss
        );
        summaries.push(summary);
    }
    Ok(summaries)
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnoseOutput {
    pub config: serde_json::Value,
    pub config_hash: String,
    pub checkpoint: Option<PathBuf>,
    pub batch: usize,
    pub gradients: AlgorithmComparison,
    pub median_layer_gap: Vec<f64>,
    pub median_output_gap: f64,
}

/// Writes `gradients.json` and `gap_profile.csv`.
pub fn cmd_diagnose(cfg: &ResolvedConfig, checkpoint: Option<&Path>, exact_model: bool, batch: usize) -> Result<DiagnoseOutput> {
    if batch == 0 {
        return Err(PatError::Config("batch must be positive".into()));
    }
    let (tr, te, _) = load_task_data(cfg)?;
    let mut model = PnnModel::build(&cfg.arch)?;
    if let Some(p) = checkpoint {
        model.load_checkpoint(&Checkpoint::load_json(p)?)?;
    }
    if exact_model {
        let ids: Vec<(usize, Arc<dyn PhysicalSystem>)> = model.physical_layers().iter().map(|p| (p.id, p.f_p.clone())).collect();
        for (id, f) in ids {
            model.attach_digital_model_to(id, f)?;
        }
    } else {
        model.attach_digital_model(digital_model(cfg)?)?;
    }
    create_dir(&cfg.out)?;
    let idx: Vec<usize> = (0..batch.min(tr.len())).collect();
    let b = tr.select(&idx);
    let gradients = compare_algorithms_at_point(&model, b.x.view(), &b.y)?;
    let gaps = layer_gap_profile(&model, te.x.view())?;
    let path = cfg.out.join("gap_profile.csv");
    std::fs::write(&path, gaps.to_csv_string()).map_err(|e| PatError::io(&path, e))?;
    let out = DiagnoseOutput {
        config: cfg.to_json(),
        config_hash: cfg.hash(),
        checkpoint: checkpoint.map(Path::to_path_buf),
        batch: idx.len(),
        gradients,
        median_layer_gap: gaps.median(),
        median_output_gap: gaps.median_output_gap(),
    };
    write_json(&cfg.out.join("gradients.json"), &out)?;
    let fmt = |a: Option<f64>| a.map_or("undefined".to_string(), |v| format!("{v:.2}°"));
    println!("angle PAT vs ideal       {}", fmt(out.gradients.pat_vs_ideal.angle_deg));
    println!("angle in silico vs ideal {}", fmt(out.gradients.insilico_vs_ideal.angle_deg));
    println!("median output gap        {:.4}", out.median_output_gap);
    Ok(out)
}

fn cmd_compounding(n_max: usize, out: Option<&Path>) -> Result<()> {
    let rows = compounding_gap(&PowerLawPair::default(), n_max)?;
    println!("{:>4} {:>12}", "n", "gap");
    for r in &rows {
        println!("{:>4} {:>11.3}%", r.n, 100.0 * r.relative_gap);
    }
    if let Some(dir) = out {
        create_dir(dir)?;
        crate::diagnostics::write_compounding_csv(&rows, &dir.join("compounding.csv"))?;
    }
    Ok(())
}

fn cmd_ssa(a: &SsaArgs) -> Result<()> {
    if a.list {
        for n in preset_names() {
            println!("{n}");
        }
        return Ok(());
    }
    let cfg: SsaConfig = match (&a.preset, &a.config) {
        (Some(p), _) => preset(p)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| PatError::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| PatError::Config(format!("{}: {e}", path.display())))?
        }
        (None, None) => return Err(PatError::Usage("give --preset, --config or --list".into())),
    };
    let report = cfg.report(&HardwareProfile::reference())?;
    print!("{}", report.table());
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        write_json(&dir.join(format!("ssa_{}.json", cfg.name)), &report)?;
    }
    Ok(())
}

/// Returns the worst exit code of the child runs.
fn cmd_sweep(a: &SweepArgs) -> Result<i32> {
    if !matches!(a.command.as_str(), "train" | "fit") {
        return Err(PatError::Usage(format!("sweep runs train or fit, not {:?}", a.command)));
    }
    // validate once before spawning anything
    let base = resolve(&a.run)?;
    let exe = std::env::current_exe().map_err(|e| PatError::io("current executable", e))?;
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let mut worst = EXIT_OK;
    for chunk in a.seeds.chunks(jobs) {
        let mut children = Vec::new();
        for &seed in chunk {
            let mut cmd = Process::new(&exe);
            cmd.arg(&a.command);
            if let Some(c) = &a.run.config {
                cmd.arg("--config").arg(c);
            }
            if let Some(t) = a.run.task {
                cmd.arg("--task").arg(serde_json::to_value(t)?.as_str().unwrap_or_default());
            }
            if !a.run.algorithms.is_empty() {
                let tags: Vec<&str> = a.run.algorithms.iter().map(|a| a.tag()).collect();
                cmd.arg("--alg").arg(tags.join(","));
            }
            if let Some(e) = a.run.epochs {
                cmd.arg("--epochs").arg(e.to_string());
            }
            cmd.arg("--seed").arg(seed.to_string());
            cmd.arg("--out").arg(base.out.join(format!("seed-{seed}")));
            children.push((seed, cmd.spawn().map_err(|e| PatError::io(&exe, e))?));
        }
        for (seed, mut child) in children {
            let status = child.wait().map_err(|e| PatError::io(&exe, e))?;
            let code = status.code().unwrap_or(EXIT_NUMERIC);
            if code != EXIT_OK {
                eprintln!("seed {seed} exited with {code}");
            }
            worst = worst.max(code);
        }
    }
    Ok(worst)
}
