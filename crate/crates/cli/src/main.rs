//! `corrdict` — synthetic data, dictionary training, partial-observation
//! sweeps, segmentation and evaluation.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{put, resolve, usage, ConfigMap, UsageError};

#[derive(Debug, Parser)]
#[command(
    name = "corrdict",
    version,
    about = "Dictionary learning with correlated sparsity"
)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (falls back to CORRDICT_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replay the last run recorded in a manifest.jsonl.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    /// Log progress to stderr (-vv for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic fMRI-like dataset with ground truth.
    Synth(SynthArgs),
    /// Learn a dictionary.
    Train(TrainArgs),
    /// Train on growing random fractions of the signals.
    Partial(PartialArgs),
    /// Cluster per-voxel coefficients into a label volume.
    Segment(SegmentArgs),
    /// Compare a learned dictionary with the true one.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// paper-desk or tiny.
    #[arg(long)]
    preset: Option<String>,
    /// Voxels per axis as NXxNYxNZ.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    networks: Option<usize>,
    #[arg(long)]
    blobs: Option<usize>,
    #[arg(long)]
    radius_min: Option<f64>,
    #[arg(long)]
    radius_max: Option<f64>,
    #[arg(long)]
    timepoints: Option<usize>,
    /// sinusoid_random_phase or smoothed_gaussian_walk.
    #[arg(long)]
    series_model: Option<String>,
    #[arg(long)]
    noise: Option<f64>,
    /// Networks kept active per voxel.
    #[arg(long)]
    sparsity_per_voxel: Option<usize>,
    /// gaussian or flat.
    #[arg(long)]
    blob_profile: Option<String>,
    /// Make the first two time series correlate at this level.
    #[arg(long)]
    correlated_pair: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    preset: Option<String>,
    /// Signal matrix (CDMX or .csv), one signal per column.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Ground-truth dictionary, enables dict_distance tracking.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// ksvd, en_dl or grouped_ksvd.
    #[arg(long)]
    alg: Option<String>,
    #[arg(long)]
    atoms: Option<usize>,
    /// OMP sparsity T.
    #[arg(long)]
    sparsity: Option<usize>,
    /// OMP residual tolerance.
    #[arg(long)]
    residual_tol: Option<f64>,
    /// Maximum outer iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Stop when the reconstruction error changes by less than this (relative).
    #[arg(long)]
    outer_tol: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    en_tol: Option<f64>,
    #[arg(long)]
    en_iters: Option<usize>,
    #[arg(long)]
    group_threshold: Option<f64>,
    /// Center and scale each signal to unit variance before learning.
    #[arg(long)]
    standardize: bool,
}

#[derive(Debug, Args)]
struct PartialArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Comma-separated fractions in (0, 1].
    #[arg(long)]
    fractions: Option<String>,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long)]
    preset: Option<String>,
    /// Coefficient matrix, one column per voxel.
    #[arg(long)]
    coefs: Option<PathBuf>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    kmeans_iters: Option<usize>,
    /// Comma-separated z indices (0-based) or `all`.
    #[arg(long)]
    slices: Option<String>,
    /// Reference labels (CDMX, 4-byte elements) for purity/agreement.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Voxel mask; coefficient columns then cover only voxels inside it.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Cluster signed coefficients instead of magnitudes.
    #[arg(long)]
    signed: bool,
    #[arg(long)]
    l1_normalize: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    learned: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    recovery_threshold: Option<f64>,
}

fn defaults(command: &str) -> ConfigMap {
    let pairs: &[(&str, &str)] = match command {
        "synth" => &[
            ("grid", "24x24x12"),
            ("networks", "10"),
            ("blobs", "3"),
            ("radius-min", "2"),
            ("radius-max", "6"),
            ("timepoints", "50"),
            ("series-model", "sinusoid_random_phase"),
            ("noise", "0.05"),
            ("sparsity-per-voxel", "3"),
            ("blob-profile", "gaussian"),
        ],
        "train" | "partial" => &[
            ("alg", "ksvd"),
            ("atoms", "10"),
            ("sparsity", "3"),
            ("residual-tol", "1e-9"),
            ("iters", "100"),
            ("outer-tol", "1e-4"),
            ("lambda", "0.1"),
            ("gamma", "1"),
            ("en-tol", "1e-6"),
            ("en-iters", "500"),
            ("group-threshold", "0.7"),
            ("standardize", "false"),
        ],
        "segment" => &[
            ("clusters", "10"),
            ("restarts", "4"),
            ("kmeans-iters", "100"),
            ("slices", "all"),
            ("absolute", "true"),
            ("l1-normalize", "false"),
        ],
        "eval" => &[("recovery-threshold", "0.01")],
        _ => &[],
    };
    let mut m: ConfigMap = pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    m.insert("seed".into(), "0".into());
    m
}

/// Keys a command reads beyond its defaults.
fn optional_keys(command: &str) -> &'static [&'static str] {
    match command {
        "synth" => &["preset", "correlated-pair"],
        "train" => &["preset", "data", "truth"],
        "partial" => &["preset", "data", "truth", "fractions"],
        "segment" => &["preset", "coefs", "grid", "truth", "mask"],
        "eval" => &["learned", "truth"],
        _ => &[],
    }
}

fn path_flag(m: &mut ConfigMap, key: &str, p: &Option<PathBuf>) -> Result<()> {
    if let Some(p) = p {
        m.insert(key.into(), config::absolute(p)?);
    }
    Ok(())
}

fn train_flags(m: &mut ConfigMap, a: &TrainArgs) -> Result<()> {
    put(m, "preset", a.preset.as_ref());
    path_flag(m, "data", &a.data)?;
    path_flag(m, "truth", &a.truth)?;
    put(m, "alg", a.alg.as_ref());
    put(m, "atoms", a.atoms);
    put(m, "sparsity", a.sparsity);
    put(m, "residual-tol", a.residual_tol);
    put(m, "iters", a.iters);
    put(m, "outer-tol", a.outer_tol);
    put(m, "lambda", a.lambda);
    put(m, "gamma", a.gamma);
    put(m, "en-tol", a.en_tol);
    put(m, "en-iters", a.en_iters);
    put(m, "group-threshold", a.group_threshold);
    if a.standardize {
        m.insert("standardize".into(), "true".into());
    }
    Ok(())
}

fn flags(command: &Command) -> Result<(&'static str, ConfigMap)> {
    let mut m = ConfigMap::new();
    let name = match command {
        Command::Synth(a) => {
            put(&mut m, "preset", a.preset.as_ref());
            put(&mut m, "grid", a.grid.as_ref());
            put(&mut m, "networks", a.networks);
            put(&mut m, "blobs", a.blobs);
            put(&mut m, "radius-min", a.radius_min);
            put(&mut m, "radius-max", a.radius_max);
            put(&mut m, "timepoints", a.timepoints);
            put(&mut m, "series-model", a.series_model.as_ref());
            put(&mut m, "noise", a.noise);
            put(&mut m, "sparsity-per-voxel", a.sparsity_per_voxel);
            put(&mut m, "blob-profile", a.blob_profile.as_ref());
            put(&mut m, "correlated-pair", a.correlated_pair);
            "synth"
        }
        Command::Train(a) => {
            train_flags(&mut m, a)?;
            "train"
        }
        Command::Partial(a) => {
            train_flags(&mut m, &a.train)?;
            put(&mut m, "fractions", a.fractions.as_ref());
            "partial"
        }
        Command::Segment(a) => {
            put(&mut m, "preset", a.preset.as_ref());
            path_flag(&mut m, "coefs", &a.coefs)?;
            put(&mut m, "grid", a.grid.as_ref());
            put(&mut m, "clusters", a.clusters);
            put(&mut m, "restarts", a.restarts);
            put(&mut m, "kmeans-iters", a.kmeans_iters);
            put(&mut m, "slices", a.slices.as_ref());
            path_flag(&mut m, "truth", &a.truth)?;
            path_flag(&mut m, "mask", &a.mask)?;
            if a.signed {
                m.insert("absolute".into(), "false".into());
            }
            if a.l1_normalize {
                m.insert("l1-normalize".into(), "true".into());
            }
            "segment"
        }
        Command::Eval(a) => {
            path_flag(&mut m, "learned", &a.learned)?;
            path_flag(&mut m, "truth", &a.truth)?;
            put(&mut m, "recovery-threshold", a.recovery_threshold);
            "eval"
        }
    };
    Ok((name, m))
}

/// Drops keys the command does not read (e.g. grid settings from a preset
/// when training) so the manifest holds only what mattered.
fn restrict(command: &str, mut m: ConfigMap) -> ConfigMap {
    let keep = defaults(command);
    let extra = optional_keys(command);
    m.retain(|k, _| {
        let ok = keep.contains_key(k) || extra.contains(&k.as_str());
        if !ok {
            log::debug!("ignoring setting `{k}` for {command}");
        }
        ok
    });
    m
}

fn configure_threads(threads: Option<usize>) -> Result<()> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("CORRDICT_THREADS") {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| usage(format!("CORRDICT_THREADS={v:?}: {e}")))?,
            ),
            _ => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads(cli.threads)?;
    let file = cli
        .config
        .as_deref()
        .map(config::read_config_file)
        .transpose()?;

    let (command, resolved, out) = if let Some(mpath) = &cli.from_manifest {
        if cli.command.is_some() {
            return Err(usage(
                "--from-manifest replays a recorded command; do not name a subcommand",
            ));
        }
        let m = manifest::read_last(mpath)?;
        let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&m.out_dir));
        (m.command, m.config, out)
    } else {
        let Some(cmd) = &cli.command else {
            return Err(usage("no subcommand given (try --help)"));
        };
        let (name, mut flag_map) = flags(cmd)?;
        put(&mut flag_map, "seed", cli.seed);
        let resolved = restrict(name, resolve(defaults(name), file, flag_map)?);
        let out = cli
            .out
            .clone()
            .ok_or_else(|| usage(format!("{name}: missing required --out <DIR>")))?;
        (name.to_string(), resolved, out)
    };
    commands::run(&command, &resolved, &out)?;
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<corrdict::Error>() {
            return match e {
                corrdict::Error::NonFinite(_) | corrdict::Error::NonConvergence { .. } => 3,
                _ => 2,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
