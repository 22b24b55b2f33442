//! Synthetic fMRI-like data: spatial network maps built from Gaussian blobs,
//! each modulated by its own unit-norm time series, plus i.i.d. Gaussian
//! noise. Signals are `Y = D X + noise` with `D` the time series (N_t × K)
//! and `X` the flattened maps (K × voxels).
//!
//! Voxel `(x, y, z)` of an `nx × ny × nz` grid is column
//! `x + nx·(y + ny·z)`; maps are stored with shape `(nz, ny, nx)` so their
//! standard iteration order matches the column order.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::l2_norm;
use crate::matrix::{CoefficientMatrix, Dictionary, SignalMatrix};
use crate::rng::{stream, STREAM_MAPS, STREAM_NOISE, STREAM_SERIES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeSeriesModel {
    /// Sum of three sinusoids with random frequency, phase and amplitude.
    SinusoidRandomPhase,
    /// Mean-removed Gaussian random walk smoothed by a 5-point moving average.
    SmoothedGaussianWalk,
}

impl std::str::FromStr for TimeSeriesModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sinusoid_random_phase" => Ok(TimeSeriesModel::SinusoidRandomPhase),
            "smoothed_gaussian_walk" => Ok(TimeSeriesModel::SmoothedGaussianWalk),
            other => Err(Error::InvalidConfig(format!(
                "unknown time-series model {other:?}"
            ))),
        }
    }
}

impl TimeSeriesModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            TimeSeriesModel::SinusoidRandomPhase => "sinusoid_random_phase",
            TimeSeriesModel::SmoothedGaussianWalk => "smoothed_gaussian_walk",
        }
    }
}

/// Spatial profile of a blob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlobProfile {
    /// `a·exp(−d²/2σ²)` with `σ = radius/3`, cut off at `d > radius` (3σ).
    Gaussian,
    /// Constant per-network amplitude inside the union of its blobs; gives
    /// piecewise-constant codes with an unambiguous segmentation.
    Flat,
}

impl std::str::FromStr for BlobProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(BlobProfile::Gaussian),
            "flat" => Ok(BlobProfile::Flat),
            other => Err(Error::InvalidConfig(format!(
                "unknown blob profile {other:?}"
            ))),
        }
    }
}

impl BlobProfile {
    pub fn as_str(&self) -> &'static str {
        match self {
            BlobProfile::Gaussian => "gaussian",
            BlobProfile::Flat => "flat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Voxels along (x, y, z).
    pub grid: [usize; 3],
    pub n_networks: usize,
    pub blobs_per_network: usize,
    /// Blob radius range in voxels; a radius spans three standard deviations.
    pub blob_radius_range: (f64, f64),
    pub n_timepoints: usize,
    pub time_series_model: TimeSeriesModel,
    pub noise_sigma: f64,
    /// Networks kept active per voxel (the strongest ones).
    pub sparsity_per_voxel: usize,
    pub rng_seed: u64,
    pub blob_profile: BlobProfile,
    /// Target inner product between the first two time series, with their
    /// maps forced to overlap.
    pub correlated_pair: Option<f64>,
}

impl SyntheticSpec {
    /// K=10 networks, 50 time points, 24×24×12 grid, 3 active per voxel.
    pub fn paper_desk() -> Self {
        SyntheticSpec {
            grid: [24, 24, 12],
            n_networks: 10,
            blobs_per_network: 3,
            blob_radius_range: (2.0, 6.0),
            n_timepoints: 50,
            time_series_model: TimeSeriesModel::SinusoidRandomPhase,
            noise_sigma: 0.05,
            sparsity_per_voxel: 3,
            rng_seed: 0,
            blob_profile: BlobProfile::Gaussian,
            correlated_pair: None,
        }
    }

    pub fn tiny() -> Self {
        SyntheticSpec {
            grid: [8, 8, 4],
            n_networks: 4,
            blobs_per_network: 2,
            blob_radius_range: (1.5, 3.0),
            n_timepoints: 16,
            time_series_model: TimeSeriesModel::SinusoidRandomPhase,
            noise_sigma: 0.05,
            sparsity_per_voxel: 2,
            rng_seed: 0,
            blob_profile: BlobProfile::Gaussian,
            correlated_pair: None,
        }
    }

    pub fn n_voxels(&self) -> usize {
        self.grid.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.grid.contains(&0) {
            bad.push(format!("grid dimensions must be >= 1, got {:?}", self.grid));
        }
        if self.n_networks == 0 {
            bad.push("n_networks must be >= 1".to_string());
        }
        if self.sparsity_per_voxel == 0 || self.sparsity_per_voxel > self.n_networks {
            bad.push(format!(
                "sparsity_per_voxel must lie in [1, n_networks={}], got {}",
                self.n_networks, self.sparsity_per_voxel
            ));
        }
        if self.n_timepoints == 0 {
            bad.push("n_timepoints must be >= 1".to_string());
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            bad.push(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            ));
        }
        if self.blobs_per_network == 0 {
            bad.push("blobs_per_network must be >= 1".to_string());
        }
        let (rmin, rmax) = self.blob_radius_range;
        if !(rmin > 0.0) || !(rmax >= rmin) || !rmax.is_finite() {
            bad.push(format!(
                "blob radius range must satisfy 0 < min <= max, got ({rmin}, {rmax})"
            ));
        }
        if let Some(c) = self.correlated_pair {
            if self.n_networks < 2 {
                bad.push("a correlated pair needs n_networks >= 2".to_string());
            }
            if !(0.0..1.0).contains(&c) {
                bad.push(format!(
                    "correlated pair target must lie in [0, 1), got {c}"
                ));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(bad))
        }
    }
}

/// Copy of `base` whose first two networks have time series with inner
/// product `target_corr` and overlapping maps.
pub fn correlated_pair_spec(base: &SyntheticSpec, target_corr: f64) -> Result<SyntheticSpec> {
    let spec = SyntheticSpec {
        correlated_pair: Some(target_corr),
        ..base.clone()
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub spec: SyntheticSpec,
    pub signals: SignalMatrix,
    pub true_dictionary: Dictionary,
    pub true_coefficients: CoefficientMatrix,
    /// One `(nz, ny, nx)` volume per network, before per-voxel sparsification.
    pub network_maps: Vec<Array3<f64>>,
    pub noise_realization: Array2<f64>,
}

#[derive(Debug, Clone)]
struct Blob {
    center: [f64; 3],
    radius: f64,
    amplitude: f64,
}

fn draw_blobs<R: Rng>(rng: &mut R, spec: &SyntheticSpec) -> Vec<Vec<Blob>> {
    let (rmin, rmax) = spec.blob_radius_range;
    (0..spec.n_networks)
        .map(|_| {
            let amplitude = rng.random_range(0.5..=1.0);
            (0..spec.blobs_per_network)
                .map(|_| {
                    let center = [
                        rng.random_range(0.0..spec.grid[0] as f64),
                        rng.random_range(0.0..spec.grid[1] as f64),
                        rng.random_range(0.0..spec.grid[2] as f64),
                    ];
                    let radius = if rmax > rmin {
                        rng.random_range(rmin..=rmax)
                    } else {
                        rmin
                    };
                    let amplitude = match spec.blob_profile {
                        BlobProfile::Gaussian => rng.random_range(0.5..=1.0),
                        BlobProfile::Flat => amplitude,
                    };
                    Blob {
                        center,
                        radius,
                        amplitude,
                    }
                })
                .collect()
        })
        .collect()
}

fn render_map(spec: &SyntheticSpec, blobs: &[Blob]) -> Array3<f64> {
    let [nx, ny, nz] = spec.grid;
    Array3::from_shape_fn((nz, ny, nx), |(z, y, x)| {
        let p = [x as f64, y as f64, z as f64];
        let mut value = 0.0f64;
        for b in blobs {
            let d2: f64 = (0..3).map(|a| (p[a] - b.center[a]).powi(2)).sum();
            if d2 > b.radius * b.radius {
                continue;
            }
            match spec.blob_profile {
                BlobProfile::Gaussian => {
                    let sigma = b.radius / 3.0;
                    value += b.amplitude * (-d2 / (2.0 * sigma * sigma)).exp();
                }
                BlobProfile::Flat => value = value.max(b.amplitude),
            }
        }
        value
    })
}

fn draw_series<R: Rng>(rng: &mut R, model: TimeSeriesModel, n: usize) -> Array1<f64> {
    match model {
        TimeSeriesModel::SinusoidRandomPhase => {
            let max_freq = (n as f64 / 4.0).max(1.0);
            let components: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| {
                    (
                        rng.random_range(0.5..=max_freq),
                        rng.random_range(0.0..2.0 * PI),
                        rng.random_range(0.5..=1.0),
                    )
                })
                .collect();
            Array1::from_shape_fn(n, |t| {
                components
                    .iter()
                    .map(|(f, phase, amp)| amp * (2.0 * PI * f * t as f64 / n as f64 + phase).sin())
                    .sum()
            })
        }
        TimeSeriesModel::SmoothedGaussianWalk => {
            let mut walk = Vec::with_capacity(n);
            let mut acc = 0.0;
            for _ in 0..n {
                let step: f64 = rng.sample(StandardNormal);
                acc += step;
                walk.push(acc);
            }
            let smoothed: Vec<f64> = (0..n)
                .map(|t| {
                    let lo = t.saturating_sub(2);
                    let hi = (t + 2).min(n - 1);
                    walk[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
                })
                .collect();
            let mean = smoothed.iter().sum::<f64>() / n as f64;
            Array1::from_iter(smoothed.into_iter().map(|v| v - mean))
        }
    }
}

fn unit(v: Array1<f64>) -> Result<Array1<f64>> {
    let n = l2_norm(v.view());
    if n < 1e-12 {
        return Err(Error::InvalidSpec(vec![
            "generated a degenerate time series".into(),
        ]));
    }
    Ok(v / n)
}

/// Builds a dataset. Output is bit-deterministic given the spec (seed
/// included).
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let k = spec.n_networks;
    let n_t = spec.n_timepoints;
    let l = spec.n_voxels();

    let mut map_rng = stream(spec.rng_seed, STREAM_MAPS);
    let mut blobs = draw_blobs(&mut map_rng, spec);
    if spec.correlated_pair.is_some() {
        // network 1 starts next to network 0
        let c0 = blobs[0][0].center;
        let shifted = [(c0[0] + 1.0).min(spec.grid[0] as f64 - 1.0), c0[1], c0[2]];
        blobs[1][0].center = shifted;
        blobs[1][0].radius = blobs[1][0].radius.max(blobs[0][0].radius);
    }
    let network_maps: Vec<Array3<f64>> = blobs.iter().map(|b| render_map(spec, b)).collect();

    let mut series_rng = stream(spec.rng_seed, STREAM_SERIES);
    let mut series: Vec<Array1<f64>> = (0..k)
        .map(|_| unit(draw_series(&mut series_rng, spec.time_series_model, n_t)))
        .collect::<Result<_>>()?;
    if let Some(c) = spec.correlated_pair {
        let s0 = series[0].clone();
        let s1 = &series[1] - &(&s0 * s0.dot(&series[1]));
        let s1 = unit(s1)?;
        series[1] = &s0 * c + &s1 * (1.0 - c * c).sqrt();
    }
    let mut dict = Array2::<f64>::zeros((n_t, k));
    for (j, s) in series.iter().enumerate() {
        dict.column_mut(j).assign(s);
    }

    let mut coefs = Array2::<f64>::zeros((k, l));
    let flat_maps: Vec<Vec<f64>> = network_maps
        .iter()
        .map(|m| m.iter().copied().collect())
        .collect();
    let mut order: Vec<usize> = Vec::with_capacity(k);
    for v in 0..l {
        order.clear();
        order.extend((0..k).filter(|&j| flat_maps[j][v] > 0.0));
        // strongest first, lowest index on ties
        order.sort_by(|&a, &b| flat_maps[b][v].total_cmp(&flat_maps[a][v]).then(a.cmp(&b)));
        for &j in order.iter().take(spec.sparsity_per_voxel) {
            coefs[[j, v]] = flat_maps[j][v];
        }
    }

    let mut noise_rng = stream(spec.rng_seed, STREAM_NOISE);
    let noise = Array2::from_shape_simple_fn((n_t, l), || {
        let z: f64 = noise_rng.sample(StandardNormal);
        spec.noise_sigma * z
    });
    let signals = dict.dot(&coefs) + &noise;

    Ok(SyntheticDataset {
        spec: spec.clone(),
        signals: SignalMatrix::new(signals)?,
        true_dictionary: Dictionary::new(dict)?,
        true_coefficients: CoefficientMatrix::new(coefs)?,
        network_maps,
        noise_realization: noise,
    })
}
