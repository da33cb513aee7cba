//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::ensemble::generate_dataset;
use crate::error::{Error, Result};
use crate::fit::fit_sat_exp;
use crate::io::{
    format_fit, format_stats_table, format_sweep_table, format_z_report, parse_stats_table, parse_sweep_table,
    read_dataset, write_dataset, ExperimentConfig,
};
use crate::params::PairNormMode;
use crate::stats::{compute_stats, sweep, z_compare, Knob};

pub const THREADS_ENV: &str = "HBNPUF_THREADS";

#[derive(Debug, Parser)]
#[command(name = "hbnpuf", version, about = "Hybrid Boolean network PUF simulator")]
pub struct Cli {
    /// Worker threads; overrides the config file and the HBNPUF_THREADS variable.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a challenge-response dataset.
    Sim(SimArgs),
    /// Compute uniqueness, reliability and t_opt from a dataset.
    Stats(StatsArgs),
    /// Sweep sigma or epsilon and record the statistic at a fixed time.
    Sweep(SweepArgs),
    /// Fit y = B - A exp(-C x) to a sweep table.
    Fit(FitArgs),
    /// Z-score comparison of two stats tables.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Dataset file written by `sim`.
    #[arg(long)]
    pub input: PathBuf,
    /// Pair normalization; defaults to the mode stored in the dataset.
    #[arg(long)]
    pub mode: Option<PairNormMode>,
    /// Output table; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub knob: Option<Knob>,
    /// Comma-separated, strictly increasing knob values.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    #[arg(long)]
    pub eval_time_ns: Option<f64>,
    #[arg(long)]
    pub mode: Option<PairNormMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Sweep table written by `sweep`.
    #[arg(long)]
    pub input: PathBuf,
    /// Weight points by 1/std_err^2 (points with zero std_err are dropped).
    #[arg(long)]
    pub weighted: bool,
    #[arg(long, default_value_t = 200)]
    pub curve_points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First stats table (e.g. simulation).
    #[arg(long)]
    pub a: PathBuf,
    /// Second stats table (e.g. measurement in the same column format).
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn resolve_threads(flag: Option<usize>, config: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = flag {
        if n == 0 {
            return Err(Error::config("--threads", "must be >= 1"));
        }
        return Ok(Some(n));
    }
    if config.is_some() {
        return Ok(config);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::config(THREADS_ENV, format!("expected a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config("threads", e.to_string()))?;
    pool.install(f)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        cfg.sim.master_seed = seed;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn run_sim(args: &SimArgs, threads: Option<usize>) -> Result<()> {
    let cfg = load_config(&args.config, args.seed)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.dataset.clone())
        .ok_or_else(|| Error::config("--out", "no output path (flag or output.dataset)"))?;
    let threads = resolve_threads(threads, cfg.threads)?;
    let start = Instant::now();
    let x = with_threads(threads, || generate_dataset(&cfg.sim))?;
    write_dataset(&out, &x)?;
    let d = x.dims();
    eprintln!(
        "sim: dims [s={}, i={}, c={}, r={}, n={}, t={}] ({} bytes) -> {} in {:.2?}",
        d.n_classes,
        d.n_instances,
        d.n_challenges,
        d.n_repeats,
        d.n_nodes,
        d.n_times,
        x.payload().len(),
        out.display(),
        start.elapsed()
    );
    Ok(())
}

fn run_stats(args: &StatsArgs, threads: Option<usize>) -> Result<()> {
    let threads = resolve_threads(threads, None)?;
    let x = read_dataset(&args.input)?;
    let mode = args
        .mode
        .or_else(|| x.metadata().map(|m| m.config.pair_norm_mode))
        .unwrap_or_default();
    let st = with_threads(threads, || compute_stats(&x, mode))?;
    emit(args.out.as_deref(), &format_stats_table(&st, mode))?;
    eprintln!(
        "stats: ensemble t_opt = {} ns, mu_inter = {}, mu_intra = {}",
        st.t_opt_ns(),
        st.ensemble.mu_inter_mean[st.ensemble.t_opt_index],
        st.ensemble.mu_intra_mean[st.ensemble.t_opt_index]
    );
    Ok(())
}

fn run_sweep(args: &SweepArgs, threads: Option<usize>) -> Result<()> {
    let mut cfg = load_config(&args.config, args.seed)?;
    if let Some(mode) = args.mode {
        cfg.sim.pair_norm_mode = mode;
    }
    let spec = cfg.sweep.clone();
    let knob = args
        .knob
        .or(spec.as_ref().map(|s| s.knob))
        .ok_or_else(|| Error::config("--knob", "no knob given (flag or sweep.knob)"))?;
    let values = args
        .values
        .clone()
        .or_else(|| spec.as_ref().map(|s| s.values.clone()))
        .ok_or_else(|| Error::config("--values", "no values given (flag or sweep.values)"))?;
    let eval_time = args
        .eval_time_ns
        .or(spec.as_ref().map(|s| s.eval_time_ns))
        .unwrap_or(6.0);
    let out = args.out.clone().or_else(|| cfg.output.sweep.clone());
    let threads = resolve_threads(threads, cfg.threads)?;
    let start = Instant::now();
    let curve = with_threads(threads, || sweep(knob, &values, &cfg.sim, eval_time))?;
    emit(out.as_deref(), &format_sweep_table(&curve))?;
    eprintln!("sweep: {} points of {} in {:.2?}", values.len(), knob.name(), start.elapsed());
    Ok(())
}

fn run_fit(args: &FitArgs) -> Result<()> {
    let table = parse_sweep_table(&fs::read_to_string(&args.input)?)?;
    let (xs, ys, weights) = if args.weighted {
        let keep: Vec<usize> = (0..table.xs.len()).filter(|&k| table.std_errs[k] > 0.0).collect();
        (
            keep.iter().map(|&k| table.xs[k]).collect::<Vec<_>>(),
            keep.iter().map(|&k| table.ys[k]).collect::<Vec<_>>(),
            Some(keep.iter().map(|&k| table.std_errs[k].powi(-2)).collect::<Vec<_>>()),
        )
    } else {
        (table.xs.clone(), table.ys.clone(), None)
    };
    let fit = fit_sat_exp(&xs, &ys, weights.as_deref())?;
    let range = (xs[0], xs[xs.len() - 1]);
    emit(args.out.as_deref(), &format_fit(&fit, range, args.curve_points))?;
    eprintln!(
        "fit: A = {} ± {}, B = {} ± {}, C = {} ± {} (converged: {}, {} iterations)",
        fit.params.a, fit.std_errs[0], fit.params.b, fit.std_errs[1], fit.params.c, fit.std_errs[2], fit.converged,
        fit.iterations
    );
    Ok(())
}

fn run_compare(args: &CompareArgs) -> Result<()> {
    let a = parse_stats_table(&fs::read_to_string(&args.a)?)?;
    let b = parse_stats_table(&fs::read_to_string(&args.b)?)?;
    let mut reports = Vec::new();
    for column in ["mu_inter", "mu_intra", "delta_mu"] {
        let rep = z_compare(&a.series(column)?, &b.series(column)?)?;
        if !rep.undefined_times_ns.is_empty() {
            eprintln!(
                "warning: {column}: zero combined std at {:?} ns; excluded from Z_RMS",
                rep.undefined_times_ns
            );
        }
        reports.push((column, rep));
    }
    emit(args.out.as_deref(), &format_z_report(&a.sample_times_ns, &reports))?;
    for (column, rep) in &reports {
        eprintln!("compare: {column} Z_RMS = {}", rep.z_rms);
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Sim(a) => run_sim(a, cli.threads),
        Command::Stats(a) => run_stats(a, cli.threads),
        Command::Sweep(a) => run_sweep(a, cli.threads),
        Command::Fit(a) => run_fit(a),
        Command::Compare(a) => run_compare(a),
    }
}
