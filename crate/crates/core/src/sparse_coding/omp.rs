//! Orthogonal matching pursuit.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use super::{OmpConfig, SolveTrace, SupportSet};
use crate::error::{mismatch, Result};
use crate::linalg::{cholesky_solve, l2_norm};
use crate::matrix::{CoefficientMatrix, Dictionary, SignalMatrix};

/// Result of coding one signal.
#[derive(Debug, Clone)]
pub struct OmpOutput {
    pub x: Array1<f64>,
    pub support: SupportSet,
    pub trace: SolveTrace,
}

/// Greedy sparse approximation of `y` over the atoms of `d`.
///
/// Each step adds the atom with the largest absolute correlation to the
/// residual (lowest index on ties), refits all selected coefficients by least
/// squares and recomputes the residual. Stops once `‖r‖ ≤ ε`, the support
/// holds `T` atoms, or no remaining atom can reduce the residual.
pub fn omp(y: ArrayView1<f64>, d: &Dictionary, cfg: &OmpConfig) -> Result<OmpOutput> {
    let n = d.n_dim();
    let k = d.n_atoms();
    if y.len() != n {
        return Err(mismatch("omp signal length", n, y.len()));
    }
    cfg.validate(n, k)?;

    let atoms = d.view();
    let mut x = Array1::<f64>::zeros(k);
    let mut support: Vec<usize> = Vec::with_capacity(cfg.max_sparsity);
    let mut trace = SolveTrace::default();
    let mut residual = y.to_owned();
    let mut r_norm = l2_norm(residual.view());
    let y_norm = r_norm;
    trace.initial_objective = Some(0.5 * r_norm * r_norm);

    while r_norm > cfg.residual_tol && support.len() < cfg.max_sparsity {
        let corr = atoms.t().dot(&residual);
        let mut best: Option<(usize, f64)> = None;
        for (j, c) in corr.iter().enumerate() {
            if support.contains(&j) {
                continue;
            }
            let c = c.abs();
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((j, c));
            }
        }
        let Some((j, c)) = best else { break };
        // residual already orthogonal to every candidate
        if c <= 1e-14 * y_norm {
            break;
        }
        support.push(j);

        let sub = atoms.select(Axis(1), &support);
        let normal = sub.t().dot(&sub);
        let rhs = sub.t().dot(&y);
        let Some(coef) = cholesky_solve(normal.view(), rhs.view()) else {
            // linearly dependent on the current support
            support.pop();
            break;
        };
        let approx = sub.dot(&coef);
        let new_residual = &y - &approx;
        let new_norm = l2_norm(new_residual.view());
        if new_norm >= r_norm {
            support.pop();
            break;
        }

        let prev = x.clone();
        x.fill(0.0);
        for (&idx, &v) in support.iter().zip(coef.iter()) {
            x[idx] = v;
        }
        let prev_norm = l2_norm(prev.view());
        let diff = l2_norm((&x - &prev).view());
        trace.push(
            0.5 * new_norm * new_norm,
            if prev_norm > 0.0 {
                diff / prev_norm
            } else {
                f64::INFINITY
            },
            new_norm,
        );
        residual = new_residual;
        r_norm = new_norm;
    }

    Ok(OmpOutput {
        x,
        support: SupportSet::new(support),
        trace,
    })
}

/// Codes every column of `y` independently. Columns run in parallel; each
/// column's result does not depend on scheduling.
pub fn omp_batch(y: &SignalMatrix, d: &Dictionary, cfg: &OmpConfig) -> Result<CoefficientMatrix> {
    if y.n_dim() != d.n_dim() {
        return Err(mismatch("omp_batch signal dimension", d.n_dim(), y.n_dim()));
    }
    cfg.validate(d.n_dim(), d.n_atoms())?;
    let columns: Vec<Array1<f64>> = (0..y.n_signals())
        .into_par_iter()
        .map(|i| omp(y.column(i), d, cfg).map(|o| o.x))
        .collect::<Result<_>>()?;
    let mut x = Array2::<f64>::zeros((d.n_atoms(), y.n_signals()));
    for (i, col) in columns.into_iter().enumerate() {
        x.column_mut(i).assign(&col);
    }
    Ok(CoefficientMatrix::from_unchecked(x))
}
