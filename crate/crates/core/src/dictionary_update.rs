//! K-SVD atom-by-atom dictionary update.
//!
//! Atoms are visited in ascending order and each update sees the atoms
//! already replaced earlier in the same sweep. For atom `k` only the signals
//! that currently use it take part: their residual with atom `k` removed,
//! `E_k^R`, is approximated by a rank-1 term whose left factor becomes the
//! new atom.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{mismatch, Result};
use crate::linalg::{l2_norm, power_iteration, symmetric_eigen};
use crate::matrix::{residual, CoefficientMatrix, Dictionary, SignalMatrix};
use crate::sparse_coding::en_prox_scalar;

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;
/// Usage sets up to this size are handled by a dense eigensolver.
const DENSE_SVD_MAX_USAGE: usize = 3;

/// How the coefficient row of an atom changes when the atom is replaced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoefficientUpdate {
    /// Only the atom changes. Its sign is chosen to agree with the existing
    /// coefficients.
    Keep,
    /// Row restricted to the usage set becomes `σ₁ v₁` (classic K-SVD).
    RankOne,
    /// Row becomes the elastic-net proximal refit `Prox(E_k^Rᵀ d_k)`, and the
    /// atom is only replaced when that lowers the regularized objective.
    ElasticNet { lambda: f64, gamma: f64 },
}

/// Per-atom working set of the K-SVD update.
#[derive(Debug, Clone)]
pub struct AtomUpdateWorkspace {
    /// Signals whose code uses the atom.
    pub usage_set: Vec<usize>,
    /// `Y − DX` with the atom zeroed.
    pub error_matrix: Array2<f64>,
    /// `error_matrix` restricted to `usage_set` columns.
    pub reduced_error: Array2<f64>,
}

fn usage_set(x: ArrayView2<f64>, k: usize) -> Vec<usize> {
    x.row(k)
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

fn check_dims(y: &SignalMatrix, d: &Dictionary, x: &CoefficientMatrix) -> Result<()> {
    if d.n_dim() != y.n_dim() {
        return Err(mismatch(
            "ksvd_update dictionary rows",
            y.n_dim(),
            d.n_dim(),
        ));
    }
    if x.n_atoms() != d.n_atoms() || x.n_signals() != y.n_signals() {
        return Err(mismatch(
            "ksvd_update coefficients",
            format!("({}, {})", d.n_atoms(), y.n_signals()),
            format!("({}, {})", x.n_atoms(), x.n_signals()),
        ));
    }
    Ok(())
}

/// Builds the workspace for atom `k` from scratch.
pub fn atom_workspace(
    y: &SignalMatrix,
    d: &Dictionary,
    x: &CoefficientMatrix,
    k: usize,
) -> Result<AtomUpdateWorkspace> {
    check_dims(y, d, x)?;
    if k >= d.n_atoms() {
        return Err(mismatch("atom index", format!("< {}", d.n_atoms()), k));
    }
    let mut error_matrix = residual(y, d, x)?;
    let atom = d.atom(k);
    for (i, &c) in x.view().row(k).iter().enumerate() {
        if c != 0.0 {
            error_matrix.column_mut(i).scaled_add(c, &atom);
        }
    }
    let usage_set = usage_set(x.view(), k);
    let reduced_error = error_matrix.select(Axis(1), &usage_set);
    Ok(AtomUpdateWorkspace {
        usage_set,
        error_matrix,
        reduced_error,
    })
}

/// Flips `u` (and `row`) so the largest-magnitude entry of `u` is nonnegative.
fn canonical_sign(u: &mut Array1<f64>, row: &mut Array1<f64>) {
    let mut best = 0usize;
    for (i, v) in u.iter().enumerate() {
        if v.abs() > u[best].abs() {
            best = i;
        }
    }
    if u[best] < 0.0 {
        u.mapv_inplace(|v| -v);
        row.mapv_inplace(|v| -v);
    }
}

/// Leading left singular vector of `e` and the projections `eᵀu`.
///
/// Small usage sets go through a dense eigensolve of `eᵀe`; larger ones run
/// power iteration on `eeᵀ` started from `start`, which makes the captured
/// energy `‖eᵀu‖²` at least that of `start`.
pub fn dominant_left_singular(
    e: ArrayView2<f64>,
    start: ArrayView1<f64>,
) -> Option<(Array1<f64>, Array1<f64>)> {
    let u = if e.ncols() <= DENSE_SVD_MAX_USAGE {
        let (values, vectors) = symmetric_eigen(e.t().dot(&e).view());
        if !(values[0] > 0.0) {
            return None;
        }
        e.dot(&vectors.column(0))
    } else {
        let m = e.dot(&e.t());
        let start_energy = start.dot(&m.dot(&start));
        let init = if start_energy > 0.0 {
            start.to_owned()
        } else {
            let (best, _) = e
                .columns()
                .into_iter()
                .enumerate()
                .map(|(i, c)| (i, l2_norm(c)))
                .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            e.column(best).to_owned()
        };
        let r = power_iteration(|v| m.dot(&v), init, POWER_TOL, POWER_MAX_ITERS);
        if !(r.value > 0.0) {
            return None;
        }
        r.vector
    };
    let norm = l2_norm(u.view());
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    let u = u / norm;
    let proj = e.t().dot(&u);
    Some((u, proj))
}

fn penalty(row: ArrayView1<f64>, lambda: f64, gamma: f64) -> f64 {
    let l1: f64 = row.iter().map(|v| v.abs()).sum();
    let l2: f64 = row.iter().map(|v| v * v).sum();
    lambda * (l1 + 0.5 * gamma * l2)
}

// ½‖E − a rᵀ‖² − ½‖E‖² + pen(r) for a unit-norm atom a with z = Eᵀa.
fn local_en_cost(z: ArrayView1<f64>, row: ArrayView1<f64>, lambda: f64, gamma: f64) -> f64 {
    -row.dot(&z) + 0.5 * row.dot(&row) + penalty(row, lambda, gamma)
}

/// Classic K-SVD sweep; `update_coefficients` selects between
/// [`CoefficientUpdate::RankOne`] and [`CoefficientUpdate::Keep`].
pub fn ksvd_update(
    y: &SignalMatrix,
    d: &Dictionary,
    x: &CoefficientMatrix,
    update_coefficients: bool,
) -> Result<(Dictionary, CoefficientMatrix)> {
    let mode = if update_coefficients {
        CoefficientUpdate::RankOne
    } else {
        CoefficientUpdate::Keep
    };
    ksvd_update_with(y, d, x, mode)
}

/// One full sweep over all atoms.
///
/// An atom nobody uses is replaced by the normalized signal that is currently
/// worst represented (each signal is used at most once per sweep); its
/// coefficients stay zero. The nonzero pattern of `X` never grows.
pub fn ksvd_update_with(
    y: &SignalMatrix,
    d: &Dictionary,
    x: &CoefficientMatrix,
    mode: CoefficientUpdate,
) -> Result<(Dictionary, CoefficientMatrix)> {
    check_dims(y, d, x)?;
    let mut atoms = d.view().to_owned();
    let mut coefs = x.view().to_owned();
    let mut res = residual(y, d, x)?;
    let mut used_for_replacement = vec![false; y.n_signals()];

    for k in 0..atoms.ncols() {
        let support = usage_set(coefs.view(), k);
        if support.is_empty() {
            let worst = (0..res.ncols())
                .filter(|&i| !used_for_replacement[i])
                .map(|i| (i, l2_norm(res.column(i))))
                .fold(None::<(usize, f64)>, |acc, cur| match acc {
                    Some(a) if a.1 >= cur.1 => Some(a),
                    _ => Some(cur),
                });
            if let Some((i, err)) = worst {
                let yi = y.column(i);
                let norm = l2_norm(yi);
                if err > 0.0 && norm > 0.0 {
                    atoms.column_mut(k).assign(&(&yi / norm));
                    used_for_replacement[i] = true;
                }
            }
            continue;
        }

        let old_atom = atoms.column(k).to_owned();
        let old_row: Array1<f64> = support.iter().map(|&i| coefs[[k, i]]).collect();
        let mut reduced = res.select(Axis(1), &support);
        for (c, &v) in old_row.iter().enumerate() {
            reduced.column_mut(c).scaled_add(v, &old_atom);
        }

        let Some((mut u, proj)) = dominant_left_singular(reduced.view(), old_atom.view()) else {
            // reduced error vanishes: the atom contributes nothing useful
            if matches!(mode, CoefficientUpdate::Keep) {
                continue;
            }
            for &i in &support {
                coefs[[k, i]] = 0.0;
            }
            for (c, &i) in support.iter().enumerate() {
                res.column_mut(i).assign(&reduced.column(c));
            }
            continue;
        };

        let (new_atom, new_row) = match mode {
            CoefficientUpdate::RankOne => {
                let mut row = proj;
                canonical_sign(&mut u, &mut row);
                (u, row)
            }
            CoefficientUpdate::Keep => {
                if reduced.dot(&old_row).dot(&u) < 0.0 {
                    u.mapv_inplace(|v| -v);
                }
                (u, old_row.clone())
            }
            CoefficientUpdate::ElasticNet { lambda, gamma } => {
                let mut z_new = proj;
                canonical_sign(&mut u, &mut z_new);
                let row_new = z_new.mapv(|v| en_prox_scalar(v, lambda, gamma));
                let z_old = reduced.t().dot(&old_atom);
                let row_old = z_old.mapv(|v| en_prox_scalar(v, lambda, gamma));
                let cost_new = local_en_cost(z_new.view(), row_new.view(), lambda, gamma);
                let cost_old = local_en_cost(z_old.view(), row_old.view(), lambda, gamma);
                if cost_new <= cost_old {
                    (u, row_new)
                } else {
                    (old_atom.clone(), row_old)
                }
            }
        };

        atoms.column_mut(k).assign(&new_atom);
        for (c, &i) in support.iter().enumerate() {
            coefs[[k, i]] = new_row[c];
            let mut col = reduced.column(c).to_owned();
            col.scaled_add(-new_row[c], &new_atom);
            res.column_mut(i).assign(&col);
        }
    }

    Ok((
        Dictionary::from_normalized_unchecked(atoms),
        CoefficientMatrix::from_unchecked(coefs),
    ))
}
