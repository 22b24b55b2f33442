use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use corrdict::io::{
    read_any_matrix, read_labels, read_matrix, write_labels, write_matrix, write_pgm,
};
use corrdict::learners::{learn, Algorithm, LearnResult, LearnerConfig};
use corrdict::metrics::dictionary_distance;
use corrdict::rng::{stream, STREAM_SUBSET};
use corrdict::segmentation::{
    dominant_network_labels, score_segmentation, segment, KMeansL1Config, LabelVolume,
    SegmentOptions,
};
use corrdict::sparse_coding::{EnConfig, OmpConfig};
use corrdict::synthetic::{correlated_pair_spec, generate, SyntheticSpec};
use corrdict::{normalize_columns, Dictionary, SignalMatrix};
use ndarray::Array2;
use rand::seq::index::sample;

use crate::config::{absolute, usage, ConfigMap, Settings};
use crate::manifest::Manifest;

/// Runs `command` from a resolved configuration, writing into `out`.
pub fn run(command: &str, cfg: &ConfigMap, out: &Path) -> Result<Manifest> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let s = Settings(cfg);
    let seed: u64 = s.get("seed")?;
    let mut m = Manifest::new(command, seed, cfg.clone(), out);
    match command {
        "synth" => synth(&s, seed, out, &mut m)?,
        "train" => train(&s, seed, out, &mut m)?,
        "partial" => partial(&s, seed, out, &mut m)?,
        "segment" => segment_cmd(&s, seed, out, &mut m)?,
        "eval" => eval(&s, out, &mut m)?,
        other => return Err(usage(format!("unknown command {other:?}"))),
    }
    m.append_to(out)?;
    Ok(m)
}

fn timed<T>(
    m: &mut Manifest,
    stage: &str,
    f: impl FnOnce(&mut Manifest) -> Result<T>,
) -> Result<T> {
    let t = Instant::now();
    let r = f(m)?;
    m.runtime_seconds
        .insert(stage.to_string(), t.elapsed().as_secs_f64());
    Ok(r)
}

fn output(m: &mut Manifest, name: &str) -> String {
    m.outputs.push(name.to_string());
    name.to_string()
}

fn synth_spec(s: &Settings, seed: u64) -> Result<SyntheticSpec> {
    let spec = SyntheticSpec {
        grid: s.grid("grid")?,
        n_networks: s.get("networks")?,
        blobs_per_network: s.get("blobs")?,
        blob_radius_range: (s.get("radius-min")?, s.get("radius-max")?),
        n_timepoints: s.get("timepoints")?,
        time_series_model: s.get("series-model")?,
        noise_sigma: s.get("noise")?,
        sparsity_per_voxel: s.get("sparsity-per-voxel")?,
        rng_seed: seed,
        blob_profile: s.get("blob-profile")?,
        correlated_pair: None,
    };
    match s.opt::<f64>("correlated-pair")? {
        Some(c) => Ok(correlated_pair_spec(&spec, c)?),
        None => {
            spec.validate()?;
            Ok(spec)
        }
    }
}

fn synth(s: &Settings, seed: u64, out: &Path, m: &mut Manifest) -> Result<()> {
    let spec = synth_spec(s, seed)?;
    let ds = timed(m, "generate", |_| Ok(generate(&spec)?))?;
    let [nx, ny, nz] = spec.grid;
    timed(m, "write", |m| {
        write_matrix(out.join(output(m, "signals.cdmx")), ds.signals.view())?;
        write_matrix(
            out.join(output(m, "true_dictionary.cdmx")),
            ds.true_dictionary.view(),
        )?;
        write_matrix(
            out.join(output(m, "true_coefficients.cdmx")),
            ds.true_coefficients.view(),
        )?;
        write_matrix(
            out.join(output(m, "noise.cdmx")),
            ds.noise_realization.view(),
        )?;
        fs::create_dir_all(out.join("maps"))?;
        for (k, map) in ds.network_maps.iter().enumerate() {
            let flat = map.to_shape((nz * ny, nx))?;
            write_matrix(
                out.join(output(m, &format!("maps/network_{k:02}.cdmx"))),
                flat.view(),
            )?;
        }
        let truth = dominant_network_labels(ds.true_coefficients.view(), spec.grid)?;
        let labels: Vec<i32> = truth.labels.iter().map(|&l| l as i32).collect();
        write_labels(
            out.join(output(m, "truth_labels.cdmx")),
            nz * ny,
            nx,
            &labels,
        )?;
        fs::write(
            out.join(output(m, "spec.json")),
            serde_json::to_string_pretty(&spec)? + "\n",
        )?;
        Ok(())
    })?;
    log::info!(
        "synthesized {} signals of length {} from {} networks",
        ds.signals.n_signals(),
        spec.n_timepoints,
        spec.n_networks
    );
    Ok(())
}

fn learner_config(s: &Settings, seed: u64) -> Result<LearnerConfig> {
    let algorithm = match s.get::<String>("alg")?.as_str() {
        "ksvd" => Algorithm::Ksvd,
        "en_dl" | "en-dl" => Algorithm::EnDl(EnConfig {
            lambda: s.get("lambda")?,
            gamma: s.get("gamma")?,
            rel_change_tol: s.get("en-tol")?,
            max_iters: s.get("en-iters")?,
        }),
        "grouped_ksvd" | "grouped-ksvd" => Algorithm::GroupedKsvd {
            group_threshold: s.get("group-threshold")?,
        },
        other => {
            return Err(usage(format!(
                "unknown algorithm {other:?} (expected ksvd, en_dl or grouped_ksvd)"
            )))
        }
    };
    let mut cfg = LearnerConfig::new(
        s.get("atoms")?,
        algorithm,
        OmpConfig::new(s.get("sparsity")?, s.get("residual-tol")?),
    );
    cfg.max_outer_iters = s.get("iters")?;
    cfg.outer_rel_tol = s.get("outer-tol")?;
    cfg.rng_seed = seed;
    Ok(cfg)
}

fn load_signals(s: &Settings, m: &mut Manifest) -> Result<SignalMatrix> {
    let p = s.path("data")?;
    m.inputs.push(absolute(&p)?);
    let y = SignalMatrix::new(read_any_matrix(&p)?)?;
    Ok(if s.bool("standardize")? {
        y.standardized()
    } else {
        y
    })
}

fn load_dictionary(path: &Path, m: &mut Manifest) -> Result<Dictionary> {
    m.inputs.push(absolute(path)?);
    Ok(normalize_columns(read_any_matrix(path)?.view())?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_history(path: &Path, r: &LearnResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "recon_error", "objective", "dict_distance"])?;
    for h in &r.history {
        w.write_record([
            h.iter.to_string(),
            h.recon_error.to_string(),
            fmt_opt(h.objective),
            fmt_opt(h.dict_distance),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn train(s: &Settings, seed: u64, out: &Path, m: &mut Manifest) -> Result<()> {
    let y = load_signals(s, m)?;
    let truth = s
        .opt_path("truth")?
        .map(|p| load_dictionary(&p, m))
        .transpose()?;
    let cfg = learner_config(s, seed)?;
    let r = timed(m, "learn", |_| Ok(learn(&y, &cfg, truth.as_ref())?))?;
    timed(m, "write", |m| {
        write_matrix(out.join(output(m, "dictionary.cdmx")), r.dictionary.view())?;
        write_matrix(
            out.join(output(m, "coefficients.cdmx")),
            r.coefficients.view(),
        )?;
        write_history(&out.join(output(m, "history.csv")), &r)
    })?;
    if let Some(last) = r.history.last() {
        log::info!(
            "{} finished after {} iterations, error {}",
            cfg.algorithm.name(),
            last.iter,
            last.recon_error
        );
    }
    Ok(())
}

/// Sorted column subset of size ⌈fL⌉; the full set when `f = 1`.
pub fn subset_columns(n_signals: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let size = ((fraction * n_signals as f64).ceil() as usize).clamp(1, n_signals);
    if size == n_signals {
        return (0..n_signals).collect();
    }
    let mut rng = stream(seed, STREAM_SUBSET);
    let mut idx = sample(&mut rng, n_signals, size).into_vec();
    idx.sort_unstable();
    idx
}

fn partial(s: &Settings, seed: u64, out: &Path, m: &mut Manifest) -> Result<()> {
    let fractions: Vec<f64> = s.list("fractions")?;
    if fractions.is_empty() {
        return Err(usage("`fractions` must list at least one value in (0, 1]"));
    }
    if let Some(bad) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(usage(format!("fraction {bad} outside (0, 1]")));
    }
    let y = load_signals(s, m)?;
    let truth = s
        .opt_path("truth")?
        .map(|p| load_dictionary(&p, m))
        .transpose()?;
    let cfg = learner_config(s, seed)?;

    let path = out.join(output(m, "partial.csv"));
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["fraction", "dict_distance", "recon_error"])?;
    for &f in &fractions {
        let cols = subset_columns(y.n_signals(), f, seed);
        let sub = y.select_columns(&cols)?;
        let r = timed(m, &format!("learn_{f}"), |_| {
            Ok(learn(&sub, &cfg, truth.as_ref())?)
        })?;
        let dist = r.history.last().and_then(|h| h.dict_distance);
        let err = r.history.last().map(|h| h.recon_error);
        w.write_record([f.to_string(), fmt_opt(dist), fmt_opt(err)])?;
    }
    w.flush()?;
    Ok(())
}

/// Voxel mask from a CDMX file (labels or reals); nonzero means inside.
fn read_mask(path: &Path) -> Result<Vec<bool>> {
    if let Ok((_, _, labels)) = read_labels(path) {
        return Ok(labels.iter().map(|&v| v != 0).collect());
    }
    Ok(read_matrix(path)?.iter().map(|&v| v != 0.0).collect())
}

fn segment_cmd(s: &Settings, seed: u64, out: &Path, m: &mut Manifest) -> Result<()> {
    let grid = s.grid("grid")?;
    let [nx, ny, nz] = grid;
    let coef_path = s.path("coefs")?;
    m.inputs.push(absolute(&coef_path)?);
    let coefs: Array2<f64> = read_any_matrix(&coef_path)?;
    let mask = match s.opt_path("mask")? {
        Some(p) => {
            m.inputs.push(absolute(&p)?);
            Some(read_mask(&p)?)
        }
        None => None,
    };
    let volume = nx * ny * nz;
    let expected = mask
        .as_ref()
        .map_or(volume, |mk| mk.iter().filter(|b| **b).count());
    if mask.as_ref().is_some_and(|mk| mk.len() != volume) {
        return Err(usage(format!(
            "mask has {} voxels, grid has {volume}",
            mask.as_ref().map_or(0, Vec::len)
        )));
    }
    if coefs.ncols() != expected {
        return Err(usage(format!(
            "coefficient file has {} columns but the grid {nx}x{ny}x{nz} needs {expected}",
            coefs.ncols()
        )));
    }
    let mut kcfg = KMeansL1Config::new(s.get("clusters")?);
    kcfg.max_iters = s.get("kmeans-iters")?;
    kcfg.n_restarts = s.get("restarts")?;
    kcfg.rng_seed = seed;
    let opts = SegmentOptions {
        absolute: s.bool("absolute")?,
        l1_normalize: s.bool("l1-normalize")?,
    };
    let labels = timed(m, "cluster", |_| {
        Ok(segment(coefs.view(), grid, mask.as_deref(), &kcfg, opts)?)
    })?;

    let slices: Vec<usize> = match s.get::<String>("slices")?.as_str() {
        "all" => (0..nz).collect(),
        _ => s.list("slices")?,
    };
    if let Some(bad) = slices.iter().find(|&&z| z >= nz) {
        return Err(usage(format!("slice {bad} outside depth {nz}")));
    }
    let truth = match s.opt_path("truth")? {
        Some(p) => {
            m.inputs.push(absolute(&p)?);
            let (_, _, t) = read_labels(&p)?;
            if t.len() != volume {
                return Err(usage(format!(
                    "truth labels have {} voxels, grid has {volume}",
                    t.len()
                )));
            }
            let n = t.iter().copied().max().unwrap_or(0).max(0) as usize + 1;
            Some(LabelVolume::new(
                grid,
                t.iter().map(|&v| v.max(0) as u32).collect(),
                n,
            )?)
        }
        None => None,
    };

    timed(m, "write", |m| {
        let ints: Vec<i32> = labels.labels.iter().map(|&l| l as i32).collect();
        write_labels(out.join(output(m, "labels.cdmx")), nz * ny, nx, &ints)?;
        let mut w = csv::Writer::from_path(out.join(output(m, "cluster_sizes.csv")))?;
        w.write_record(["label", "voxels"])?;
        for (l, n) in labels.cluster_sizes().iter().enumerate() {
            w.write_record([l.to_string(), n.to_string()])?;
        }
        w.flush()?;
        for &z in &slices {
            let px = labels.slice_pixels(z)?;
            write_pgm(
                out.join(output(m, &format!("slice_z{z:02}.pgm"))),
                nx,
                ny,
                &px,
            )?;
        }
        if let Some(t) = &truth {
            let score = score_segmentation(&labels, t)?;
            let mut w = csv::Writer::from_path(out.join(output(m, "scores.csv")))?;
            w.write_record(["purity", "agreement"])?;
            w.write_record([score.purity.to_string(), score.agreement.to_string()])?;
            w.flush()?;
        }
        Ok(())
    })
}

fn eval(s: &Settings, out: &Path, m: &mut Manifest) -> Result<()> {
    let learned = load_dictionary(&s.path("learned")?, m)?;
    let truth = load_dictionary(&s.path("truth")?, m)?;
    if learned.n_dim() != truth.n_dim() {
        return Err(usage(format!(
            "atom length mismatch: learned {} vs true {}",
            learned.n_dim(),
            truth.n_dim()
        )));
    }
    let rep = dictionary_distance(&truth, &learned, s.get("recovery-threshold")?)?;
    let mut w = csv::Writer::from_path(out.join(output(m, "metrics.csv")))?;
    w.write_record(["true_atom", "learned_atom", "distance"])?;
    for a in &rep.per_atom_best_match {
        w.write_record([
            a.true_atom.to_string(),
            a.learned_atom.to_string(),
            a.distance.to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join(output(m, "summary.csv")))?;
    w.write_record([
        "total_distance",
        "recovery_rate",
        "true_atoms",
        "learned_atoms",
    ])?;
    w.write_record([
        rep.total_distance.to_string(),
        rep.recovery_rate.to_string(),
        truth.n_atoms().to_string(),
        learned.n_atoms().to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
