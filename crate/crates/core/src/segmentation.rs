//! Volume segmentation by clustering per-voxel coefficient vectors under the
//! ℓ1 distance (K-medians), and scoring against a reference labeling.

use std::collections::HashMap;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Error, Result};
use crate::rng::{stream, STREAM_KMEANS};

/// Label reserved for voxels whose coefficient column is entirely zero.
pub const BACKGROUND: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVolume {
    /// Voxels along (x, y, z); labels are stored x fastest.
    pub grid: [usize; 3],
    pub labels: Vec<u32>,
    pub n_clusters: usize,
}

impl LabelVolume {
    pub fn new(grid: [usize; 3], labels: Vec<u32>, n_clusters: usize) -> Result<Self> {
        let volume: usize = grid.iter().product();
        if labels.len() != volume {
            return Err(mismatch("label volume size", volume, labels.len()));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= n_clusters) {
            return Err(Error::InvalidConfig(format!(
                "label {bad} out of range for {n_clusters} clusters"
            )));
        }
        Ok(LabelVolume {
            grid,
            labels,
            n_clusters,
        })
    }

    /// 8-bit rendering of slice `z`, labels spread evenly over 0..=255.
    pub fn slice_pixels(&self, z: usize) -> Result<Vec<u8>> {
        let [nx, ny, nz] = self.grid;
        if z >= nz {
            return Err(Error::InvalidConfig(format!(
                "slice {z} outside depth {nz}"
            )));
        }
        let top = self.n_clusters.saturating_sub(1).max(1) as f64;
        let start = z * nx * ny;
        Ok(self.labels[start..start + nx * ny]
            .iter()
            .map(|&l| (l as f64 * 255.0 / top).round() as u8)
            .collect())
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansL1Config {
    pub n_clusters: usize,
    pub max_iters: usize,
    pub n_restarts: usize,
    pub rng_seed: u64,
    /// Stop once the total ℓ1 centroid movement is at most this.
    pub tol: f64,
}

impl KMeansL1Config {
    pub fn new(n_clusters: usize) -> Self {
        KMeansL1Config {
            n_clusters,
            max_iters: 100,
            n_restarts: 4,
            rng_seed: 0,
            tol: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clusters < 2 {
            return Err(Error::InvalidConfig("need at least 2 clusters".into()));
        }
        if self.n_restarts == 0 {
            return Err(Error::InvalidConfig("need at least 1 restart".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// Cluster index per point (column).
    pub labels: Vec<usize>,
    /// One centroid per column.
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

fn l1(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(p, q)| (p - q).abs()).sum()
}

fn nearest(p: ArrayView1<f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centre) in centroids.columns().into_iter().enumerate() {
        let d = l1(p, centre);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

// Farthest-point seeding from a random first point.
fn seed_centroids(points: ArrayView2<f64>, c: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.ncols();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut min_dist: Vec<f64> = (0..n)
        .map(|i| l1(points.column(i), points.column(chosen[0])))
        .collect();
    while chosen.len() < c {
        let mut best: Option<(usize, f64)> = None;
        for (i, &d) in min_dist.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            if best.is_none_or(|(_, b)| d > b) {
                best = Some((i, d));
            }
        }
        let (next, _) = best.expect("n >= c");
        chosen.push(next);
        for (i, md) in min_dist.iter_mut().enumerate() {
            *md = md.min(l1(points.column(i), points.column(next)));
        }
    }
    points.select(Axis(1), &chosen)
}

fn assign(points: ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    (0..points.ncols())
        .into_par_iter()
        .map(|i| nearest(points.column(i), centroids))
        .unzip()
}

fn lloyd(points: ArrayView2<f64>, cfg: &KMeansL1Config, seed: u64) -> KMeansResult {
    let c = cfg.n_clusters;
    let dim = points.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(points, c, &mut rng);
    let mut history = Vec::new();

    let (mut labels, mut dists) = assign(points, &centroids);
    history.push(dists.iter().sum());
    for _ in 0..cfg.max_iters {
        // empty clusters take the point farthest from its own centroid
        let mut counts = vec![0usize; c];
        for &l in &labels {
            counts[l] += 1;
        }
        let mut reseeded = false;
        for cluster in 0..c {
            if counts[cluster] > 0 {
                continue;
            }
            let mut far = (0usize, -1.0f64);
            for (i, &d) in dists.iter().enumerate() {
                if d > far.1 && counts[labels[i]] > 1 {
                    far = (i, d);
                }
            }
            if far.1 < 0.0 {
                continue;
            }
            let (i, _) = far;
            counts[labels[i]] -= 1;
            counts[cluster] += 1;
            labels[i] = cluster;
            dists[i] = 0.0;
            centroids.column_mut(cluster).assign(&points.column(i));
            reseeded = true;
        }

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let updated: Vec<Vec<f64>> = members
            .par_iter()
            .enumerate()
            .map(|(cluster, idx)| {
                if idx.is_empty() {
                    return centroids.column(cluster).to_vec();
                }
                let mut buf = vec![0.0; idx.len()];
                (0..dim)
                    .map(|r| {
                        for (slot, &i) in buf.iter_mut().zip(idx) {
                            *slot = points[[r, i]];
                        }
                        median(&mut buf)
                    })
                    .collect()
            })
            .collect();
        let mut movement = 0.0;
        for (cluster, centre) in updated.into_iter().enumerate() {
            let centre = ndarray::Array1::from(centre);
            movement += l1(centre.view(), centroids.column(cluster));
            centroids.column_mut(cluster).assign(&centre);
        }

        let (new_labels, new_dists) = assign(points, &centroids);
        let unchanged = new_labels == labels;
        labels = new_labels;
        dists = new_dists;
        let inertia: f64 = dists.iter().sum();
        history.push(inertia);
        if inertia == 0.0 || (!reseeded && (movement <= cfg.tol || unchanged)) {
            break;
        }
    }

    KMeansResult {
        labels,
        centroids,
        inertia: *history.last().expect("at least one assignment"),
        inertia_history: history,
    }
}

/// ℓ1 K-means (K-medians) over the columns of `points`.
///
/// Points are first put in a canonical (lexicographic) order so the result
/// does not depend on how the columns were ordered. Each restart seeds by
/// farthest-point selection and alternates nearest-centroid assignment with
/// coordinatewise medians; the restart with the lowest inertia wins.
pub fn kmeans_l1(points: ArrayView2<f64>, cfg: &KMeansL1Config) -> Result<KMeansResult> {
    cfg.validate()?;
    let n = points.ncols();
    if n < cfg.n_clusters {
        return Err(Error::InvalidConfig(format!(
            "{n} points cannot form {} clusters",
            cfg.n_clusters
        )));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("clustering input".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        points
            .column(a)
            .iter()
            .zip(points.column(b).iter())
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let canonical = points.select(Axis(1), &order);

    let mut seeder = stream(cfg.rng_seed, STREAM_KMEANS);
    let seeds: Vec<u64> = (0..cfg.n_restarts).map(|_| seeder.random()).collect();
    let runs: Vec<KMeansResult> = seeds
        .par_iter()
        .map(|&s| lloyd(canonical.view(), cfg, s))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .expect("n_restarts >= 1");

    let mut labels = vec![0usize; n];
    for (pos, &orig) in order.iter().enumerate() {
        labels[orig] = best.labels[pos];
    }
    Ok(KMeansResult { labels, ..best })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentOptions {
    /// Cluster `|X|` instead of `X` (atom signs are arbitrary).
    pub absolute: bool,
    /// Scale each voxel's vector to unit ℓ1 norm before clustering.
    pub l1_normalize: bool,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        SegmentOptions {
            absolute: true,
            l1_normalize: false,
        }
    }
}

/// Segments a volume from per-voxel coefficient columns.
///
/// Label 0 is reserved for background (all-zero columns and voxels outside
/// `mask`); clusters are labeled `1..=C`. With a mask, `coefficients` has
/// one column per voxel inside the mask, in voxel order.
pub fn segment(
    coefficients: ArrayView2<f64>,
    grid: [usize; 3],
    mask: Option<&[bool]>,
    cfg: &KMeansL1Config,
    opts: SegmentOptions,
) -> Result<LabelVolume> {
    let volume: usize = grid.iter().product();
    let voxel_of: Vec<usize> = match mask {
        Some(m) => {
            if m.len() != volume {
                return Err(mismatch("mask size", volume, m.len()));
            }
            (0..volume).filter(|&v| m[v]).collect()
        }
        None => (0..volume).collect(),
    };
    if coefficients.ncols() != voxel_of.len() {
        return Err(mismatch(
            "coefficient columns vs voxels",
            voxel_of.len(),
            coefficients.ncols(),
        ));
    }

    let mut feats = coefficients.to_owned();
    if opts.absolute {
        feats.mapv_inplace(f64::abs);
    }
    if opts.l1_normalize {
        for mut col in feats.columns_mut() {
            let s: f64 = col.iter().map(|v| v.abs()).sum();
            if s > 0.0 {
                col.mapv_inplace(|v| v / s);
            }
        }
    }
    let active: Vec<usize> = (0..feats.ncols())
        .filter(|&i| feats.column(i).iter().any(|v| *v != 0.0))
        .collect();
    let result = kmeans_l1(feats.select(Axis(1), &active).view(), cfg)?;

    let mut labels = vec![BACKGROUND; volume];
    for (pos, &col) in active.iter().enumerate() {
        labels[voxel_of[col]] = result.labels[pos] as u32 + 1;
    }
    LabelVolume::new(grid, labels, cfg.n_clusters + 1)
}

/// Reference labeling: 1 + index of the largest coefficient per voxel,
/// background for all-zero columns.
pub fn dominant_network_labels(
    coefficients: ArrayView2<f64>,
    grid: [usize; 3],
) -> Result<LabelVolume> {
    let labels = coefficients
        .columns()
        .into_iter()
        .map(|col| {
            let mut best: Option<(usize, f64)> = None;
            for (k, v) in col.iter().enumerate() {
                let a = v.abs();
                if a > 0.0 && best.is_none_or(|(_, b)| a > b) {
                    best = Some((k, a));
                }
            }
            best.map_or(BACKGROUND, |(k, _)| k as u32 + 1)
        })
        .collect();
    LabelVolume::new(grid, labels, coefficients.nrows() + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScore {
    pub purity: f64,
    /// Adjusted Rand index.
    pub agreement: f64,
}

fn pairs(n: f64) -> f64 {
    n * (n - 1.0) / 2.0
}

/// Purity and adjusted Rand index of `pred` against `truth`; both are
/// invariant to renaming labels.
pub fn score_segmentation(pred: &LabelVolume, truth: &LabelVolume) -> Result<SegmentationScore> {
    if pred.grid != truth.grid {
        return Err(mismatch(
            "segmentation grids",
            format!("{:?}", truth.grid),
            format!("{:?}", pred.grid),
        ));
    }
    let n = pred.labels.len();
    let mut table: HashMap<(u32, u32), usize> = HashMap::new();
    let mut pred_sizes: HashMap<u32, usize> = HashMap::new();
    let mut truth_sizes: HashMap<u32, usize> = HashMap::new();
    for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
        *table.entry((p, t)).or_default() += 1;
        *pred_sizes.entry(p).or_default() += 1;
        *truth_sizes.entry(t).or_default() += 1;
    }

    let mut majority: HashMap<u32, usize> = HashMap::new();
    for (&(p, _), &count) in &table {
        let m = majority.entry(p).or_default();
        *m = (*m).max(count);
    }
    let purity = majority.values().sum::<usize>() as f64 / n as f64;

    let index: f64 = table.values().map(|&c| pairs(c as f64)).sum();
    let a: f64 = pred_sizes.values().map(|&c| pairs(c as f64)).sum();
    let b: f64 = truth_sizes.values().map(|&c| pairs(c as f64)).sum();
    let total = pairs(n as f64);
    let expected = if total > 0.0 { a * b / total } else { 0.0 };
    let max = 0.5 * (a + b);
    let agreement = if (max - expected).abs() <= f64::EPSILON * max.max(1.0) {
        1.0
    } else {
        (index - expected) / (max - expected)
    };
    Ok(SegmentationScore { purity, agreement })
}
