//! End-to-end dictionary learners: baseline K-SVD, elastic-net regularized
//! DL, and grouped-wise K-SVD.

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::dictionary_update::{ksvd_update, ksvd_update_with, CoefficientUpdate};
use crate::error::{Error, Result};
use crate::linalg::l2_norm;
use crate::matrix::{
    gram, normalize_columns, reconstruction_error, CoefficientMatrix, Dictionary, SignalMatrix,
    ZERO_COLUMN_TOL,
};
use crate::metrics::{coherence, dictionary_distance, DEFAULT_RECOVERY_THRESHOLD};
use crate::rng::{stream, STREAM_INIT};
use crate::sparse_coding::{
    en_objective, en_sparse_code, hard_threshold, omp_batch, EnConfig, OmpConfig,
};

pub const DEFAULT_GROUP_THRESHOLD: f64 = 0.7;
pub const DEFAULT_OUTER_REL_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_OUTER_ITERS: usize = 100;

/// Which learner to run, with the parameters only that learner needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Algorithm {
    Ksvd,
    EnDl(EnConfig),
    GroupedKsvd { group_threshold: f64 },
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Ksvd => "ksvd",
            Algorithm::EnDl(_) => "en_dl",
            Algorithm::GroupedKsvd { .. } => "grouped_ksvd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub n_atoms: usize,
    pub algorithm: Algorithm,
    pub omp: OmpConfig,
    pub max_outer_iters: usize,
    pub outer_rel_tol: f64,
    pub rng_seed: u64,
}

impl LearnerConfig {
    pub fn new(n_atoms: usize, algorithm: Algorithm, omp: OmpConfig) -> Self {
        LearnerConfig {
            n_atoms,
            algorithm,
            omp,
            max_outer_iters: DEFAULT_MAX_OUTER_ITERS,
            outer_rel_tol: DEFAULT_OUTER_REL_TOL,
            rng_seed: 0,
        }
    }

    pub fn validate(&self, n_dim: usize) -> Result<()> {
        if self.n_atoms == 0 {
            return Err(Error::InvalidConfig("n_atoms must be >= 1".into()));
        }
        self.omp.validate(n_dim, self.n_atoms)?;
        if !(self.outer_rel_tol >= 0.0) {
            return Err(Error::InvalidConfig("outer_rel_tol must be >= 0".into()));
        }
        match self.algorithm {
            Algorithm::Ksvd => Ok(()),
            Algorithm::EnDl(en) => en.validate(),
            Algorithm::GroupedKsvd { group_threshold } => {
                if group_threshold > 0.0 && group_threshold < 1.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!(
                        "group threshold {group_threshold} must lie in (0, 1)"
                    )))
                }
            }
        }
    }
}

/// Diagnostics recorded after each outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub recon_error: f64,
    /// Elastic-net objective (en_dl only).
    pub objective: Option<f64>,
    /// Distance to a reference dictionary, when one was supplied.
    pub dict_distance: Option<f64>,
    /// Maximum absolute off-diagonal Gram entry of the dictionary the
    /// iteration started from.
    pub coherence: f64,
    /// Inner proximal-gradient iterations (en_dl only).
    pub inner_iterations: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct LearnResult {
    pub dictionary: Dictionary,
    pub coefficients: CoefficientMatrix,
    pub history: Vec<IterationRecord>,
}

/// `K` distinct signals picked by the seeded `init` stream, normalized.
/// Signals with zero norm are never picked.
pub fn init_dictionary(y: &SignalMatrix, k: usize, seed: u64) -> Result<Dictionary> {
    let candidates: Vec<usize> = (0..y.n_signals())
        .filter(|&i| l2_norm(y.column(i)) >= ZERO_COLUMN_TOL)
        .collect();
    if k > candidates.len() {
        return Err(Error::NotEnoughSignals {
            requested: k,
            available: candidates.len(),
        });
    }
    let mut rng = stream(seed, STREAM_INIT);
    let picks = sample(&mut rng, candidates.len(), k).into_vec();
    let mut m = Array2::<f64>::zeros((y.n_dim(), k));
    for (dst, &src) in picks.iter().enumerate() {
        m.column_mut(dst).assign(&y.column(candidates[src]));
    }
    normalize_columns(m.view())
}

/// Hard-thresholded Gram matrix `HT(DᵀD, λ_G)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMatrix(Array2<f64>);

impl GroupMatrix {
    pub fn view(&self) -> ndarray::ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn is_identity(&self) -> bool {
        self.0
            .indexed_iter()
            .all(|((i, j), &v)| if i == j { v == 1.0 } else { v == 0.0 })
    }
}

pub fn build_group_matrix(d: &Dictionary, lambda_g: f64) -> GroupMatrix {
    let mut g = hard_threshold(&gram(d).into_inner(), lambda_g);
    // unit-norm atoms give a unit diagonal; pin it against rounding
    for i in 0..g.nrows() {
        g[[i, i]] = 1.0;
    }
    GroupMatrix(g)
}

/// Diagonal of the per-column least-squares rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleMatrix(Vec<f64>);

impl ScaleMatrix {
    pub fn diagonal(&self) -> &[f64] {
        &self.0
    }
}

/// Optimal scale for one column: `yᵀDx / ‖Dx‖²`, or 1 when `Dx = 0`.
pub fn column_scale(
    y: ndarray::ArrayView1<f64>,
    d: &Dictionary,
    x: ndarray::ArrayView1<f64>,
) -> f64 {
    let dx = d.view().dot(&x);
    let denom = dx.dot(&dx);
    if denom > 0.0 {
        y.dot(&dx) / denom
    } else {
        1.0
    }
}

/// Rescales each column of `x_star` by the scalar minimizing
/// `‖y_i − σ D x*_i‖²`.
pub fn rescale_coefficients(
    y: &SignalMatrix,
    d: &Dictionary,
    x_star: &CoefficientMatrix,
) -> Result<(CoefficientMatrix, ScaleMatrix)> {
    crate::matrix::residual(y, d, x_star)?;
    let mut out = x_star.view().to_owned();
    let mut scales = Vec::with_capacity(y.n_signals());
    for i in 0..y.n_signals() {
        let s = column_scale(y.column(i), d, x_star.column(i));
        out.column_mut(i).mapv_inplace(|v| v * s);
        scales.push(s);
    }
    Ok((CoefficientMatrix::from_unchecked(out), ScaleMatrix(scales)))
}

/// Grouped coding stage: `X ← GX` followed by per-column rescaling.
///
/// Columns that `G` leaves unchanged are OMP least-squares fits, for which
/// the optimal scale is exactly 1, so they are passed through untouched.
pub fn group_and_rescale(
    y: &SignalMatrix,
    d: &Dictionary,
    g: &GroupMatrix,
    x: &CoefficientMatrix,
) -> (CoefficientMatrix, ScaleMatrix) {
    let gm = g.view();
    let xm = x.view();
    let mut out = xm.to_owned();
    let mut scales = vec![1.0; xm.ncols()];
    if g.is_identity() {
        return (CoefficientMatrix::from_unchecked(out), ScaleMatrix(scales));
    }
    for i in 0..xm.ncols() {
        let col = xm.column(i);
        let spread: Array1<f64> = gm.dot(&col);
        if spread == col {
            continue;
        }
        let s = column_scale(y.column(i), d, spread.view());
        out.column_mut(i).assign(&(spread * s));
        scales[i] = s;
    }
    (CoefficientMatrix::from_unchecked(out), ScaleMatrix(scales))
}

/// Atoms closer than this (in absolute inner product) to an earlier atom
/// are treated as duplicates.
pub const DUPLICATE_ATOM_THRESHOLD: f64 = 0.99;
/// Atoms used by fewer signals than this are treated as idle.
pub const MIN_ATOM_USAGE: usize = 4;

/// Replaces duplicate and idle atoms by the normalized signals that are
/// currently worst represented, and clears their coefficient rows. Returns
/// the indices of the replaced atoms.
pub fn replace_degenerate_atoms(
    y: &SignalMatrix,
    d: &mut Dictionary,
    x: &mut CoefficientMatrix,
) -> Result<Vec<usize>> {
    let res = crate::matrix::residual(y, d, x)?;
    let mut atoms = d.view().to_owned();
    let mut coefs = x.view().to_owned();
    let mut errors: Vec<(usize, f64)> = (0..y.n_signals())
        .map(|i| (i, l2_norm(res.column(i))))
        .filter(|&(i, e)| e > 0.0 && l2_norm(y.column(i)) >= ZERO_COLUMN_TOL)
        .collect();
    // worst first, lowest index on ties
    errors.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut candidates = errors.into_iter().map(|(i, _)| i);
    let mut replaced = Vec::new();
    for k in 0..atoms.ncols() {
        let usage = coefs.row(k).iter().filter(|v| **v != 0.0).count();
        let duplicate =
            (0..k).any(|j| atoms.column(j).dot(&atoms.column(k)).abs() > DUPLICATE_ATOM_THRESHOLD);
        if usage >= MIN_ATOM_USAGE && !duplicate {
            continue;
        }
        let Some(i) = candidates.next() else { break };
        let yi = y.column(i);
        atoms.column_mut(k).assign(&(&yi / l2_norm(yi)));
        coefs.row_mut(k).fill(0.0);
        replaced.push(k);
    }
    if !replaced.is_empty() {
        *d = Dictionary::from_normalized_unchecked(atoms);
        *x = CoefficientMatrix::from_unchecked(coefs);
    }
    Ok(replaced)
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    if prev > 0.0 {
        (prev - cur).abs() / prev
    } else if cur == prev {
        0.0
    } else {
        f64::INFINITY
    }
}

fn max_coherence(d: &Dictionary) -> f64 {
    if d.n_atoms() < 2 {
        0.0
    } else {
        coherence(d).0
    }
}

/// Runs the learner selected by `cfg.algorithm`. When `reference` is given
/// the history also tracks the dictionary distance to it.
pub fn learn(
    y: &SignalMatrix,
    cfg: &LearnerConfig,
    reference: Option<&Dictionary>,
) -> Result<LearnResult> {
    cfg.validate(y.n_dim())?;
    if let Some(r) = reference {
        if r.n_dim() != y.n_dim() {
            return Err(crate::error::mismatch(
                "reference dictionary rows",
                y.n_dim(),
                r.n_dim(),
            ));
        }
    }
    let mut d = init_dictionary(y, cfg.n_atoms, cfg.rng_seed)?;
    let mut x = CoefficientMatrix::zeros(cfg.n_atoms, y.n_signals());
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut prev_err: Option<f64> = None;

    for it in 0..cfg.max_outer_iters {
        let start_coherence = max_coherence(&d);
        let mut objective = None;
        let mut inner_iterations = None;

        let (d_new, x_new) = match cfg.algorithm {
            Algorithm::Ksvd => {
                let coded = omp_batch(y, &d, &cfg.omp)?;
                ksvd_update(y, &d, &coded, true)?
            }
            Algorithm::GroupedKsvd { group_threshold } => {
                let g = build_group_matrix(&d, group_threshold);
                let coded = omp_batch(y, &d, &cfg.omp)?;
                let (grouped, _) = group_and_rescale(y, &d, &g, &coded);
                ksvd_update(y, &d, &grouped, true)?
            }
            Algorithm::EnDl(en) => {
                let seed = if it == 0 {
                    omp_batch(y, &d, &cfg.omp)?
                } else {
                    x.clone()
                };
                let (coded, trace) = en_sparse_code(y, &d, &en, &seed)?;
                inner_iterations = Some(trace.iterations);
                let mode = CoefficientUpdate::ElasticNet {
                    lambda: en.lambda,
                    gamma: en.gamma,
                };
                let (d2, x2) = ksvd_update_with(y, &d, &coded, mode)?;
                objective = Some(en_objective(y, &d2, &x2, en.lambda, en.gamma)?);
                (d2, x2)
            }
        };
        d = d_new;
        x = x_new;

        let err = reconstruction_error(y, &d, &x)?;
        match (objective, history.last()) {
            (Some(obj), Some(prev)) => {
                if let Some(p) = prev.objective.filter(|p| obj > p + 1e-9 * p.abs().max(1.0)) {
                    log::warn!("iteration {}: objective rose from {p} to {obj}", it + 1);
                }
            }
            (None, Some(prev)) if err > prev.recon_error + 1e-6 => {
                log::debug!(
                    "iteration {}: reconstruction error rose from {} to {err}",
                    it + 1,
                    prev.recon_error
                );
            }
            _ => {}
        }
        // the elastic-net learner keeps its objective monotone, which
        // replacing atoms would break
        if !matches!(cfg.algorithm, Algorithm::EnDl(_)) {
            let replaced = replace_degenerate_atoms(y, &mut d, &mut x)?;
            if !replaced.is_empty() {
                log::debug!("iteration {}: replaced atoms {replaced:?}", it + 1);
            }
        }
        history.push(IterationRecord {
            iter: it + 1,
            recon_error: err,
            objective,
            dict_distance: reference
                .map(|r| {
                    dictionary_distance(r, &d, DEFAULT_RECOVERY_THRESHOLD)
                        .map(|rep| rep.total_distance)
                })
                .transpose()?,
            coherence: start_coherence,
            inner_iterations,
        });
        let done = match prev_err {
            Some(p) => relative_change(p, err) < cfg.outer_rel_tol,
            None => err == 0.0,
        };
        prev_err = Some(err);
        if done {
            break;
        }
    }

    Ok(LearnResult {
        dictionary: d,
        coefficients: x,
        history,
    })
}

pub fn learn_ksvd(
    y: &SignalMatrix,
    cfg: &LearnerConfig,
    reference: Option<&Dictionary>,
) -> Result<LearnResult> {
    expect_algorithm(cfg, "ksvd")?;
    learn(y, cfg, reference)
}

pub fn learn_en_dl(
    y: &SignalMatrix,
    cfg: &LearnerConfig,
    reference: Option<&Dictionary>,
) -> Result<LearnResult> {
    expect_algorithm(cfg, "en_dl")?;
    learn(y, cfg, reference)
}

pub fn learn_grouped_ksvd(
    y: &SignalMatrix,
    cfg: &LearnerConfig,
    reference: Option<&Dictionary>,
) -> Result<LearnResult> {
    expect_algorithm(cfg, "grouped_ksvd")?;
    learn(y, cfg, reference)
}

fn expect_algorithm(cfg: &LearnerConfig, name: &str) -> Result<()> {
    if cfg.algorithm.name() == name {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "expected a {name} configuration, got {}",
            cfg.algorithm.name()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_with_exactly_k_signals_is_a_permutation() {
        let y = SignalMatrix::new(array![[3.0, 0.0, 1.0], [4.0, 2.0, 1.0]]).unwrap();
        let d = init_dictionary(&y, 3, 11).unwrap();
        let yn = normalize_columns(y.view()).unwrap();
        let mut matched = [false; 3];
        for k in 0..3 {
            let j = (0..3)
                .find(|&j| yn.atom(j) == d.atom(k))
                .expect("column of Y");
            assert!(!matched[j]);
            matched[j] = true;
        }
    }

    #[test]
    fn init_rejects_too_many_atoms() {
        let y = SignalMatrix::new(array![[1.0, 2.0]]).unwrap();
        assert!(matches!(
            init_dictionary(&y, 3, 0),
            Err(Error::NotEnoughSignals {
                requested: 3,
                available: 2
            })
        ));
    }

    #[test]
    fn group_matrix_examples() {
        let eye = Dictionary::new(Array2::eye(3)).unwrap();
        assert!(build_group_matrix(&eye, 0.5).is_identity());

        let pair = |c: f64| Dictionary::new(array![[1.0, c], [0.0, (1.0 - c * c).sqrt()]]).unwrap();
        let g = build_group_matrix(&pair(0.9), 0.5);
        assert!((g.view()[[0, 1]] - 0.9).abs() < 1e-15);
        assert!(build_group_matrix(&pair(0.4), 0.5).is_identity());
    }

    #[test]
    fn rescale_examples() {
        let d = Dictionary::new(Array2::eye(2)).unwrap();
        let y = SignalMatrix::new(array![[1.0, 2.0], [0.0, 1.0]]).unwrap();
        let x = CoefficientMatrix::new(array![[1.0, 4.0], [0.0, 0.0]]).unwrap();
        let (out, s) = rescale_coefficients(&y, &d, &x).unwrap();
        assert_eq!(s.diagonal()[0], 1.0);
        assert_eq!(s.diagonal()[1], 0.5);
        assert_eq!(out.view()[[0, 1]], 2.0);

        let zero = CoefficientMatrix::zeros(2, 2);
        let (out, s) = rescale_coefficients(&y, &d, &zero).unwrap();
        assert_eq!(s.diagonal(), &[1.0, 1.0]);
        assert_eq!(out, zero);
    }

    #[test]
    fn zero_outer_iterations_returns_initialization() {
        let y = SignalMatrix::new(array![[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]]).unwrap();
        let mut cfg = LearnerConfig::new(2, Algorithm::Ksvd, OmpConfig::new(1, 1e-9));
        cfg.max_outer_iters = 0;
        let r = learn_ksvd(&y, &cfg, None).unwrap();
        assert!(r.history.is_empty());
        assert_eq!(r.dictionary, init_dictionary(&y, 2, 0).unwrap());
    }

    #[test]
    fn wrong_entry_point_is_rejected() {
        let y = SignalMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let cfg = LearnerConfig::new(2, Algorithm::Ksvd, OmpConfig::new(1, 0.0));
        assert!(learn_en_dl(&y, &cfg, None).is_err());
    }

    #[test]
    fn group_threshold_must_be_inside_unit_interval() {
        let mut cfg = LearnerConfig::new(
            2,
            Algorithm::GroupedKsvd {
                group_threshold: 1.0,
            },
            OmpConfig::new(1, 0.0),
        );
        assert!(cfg.validate(4).is_err());
        cfg.algorithm = Algorithm::GroupedKsvd {
            group_threshold: 0.7,
        };
        assert!(cfg.validate(4).is_ok());
    }
}
