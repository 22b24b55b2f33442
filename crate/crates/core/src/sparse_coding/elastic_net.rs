//! Proximal-gradient solver for
//! `½‖Y − DX‖²_F + λ(‖X‖₁ + (γ/2)‖X‖²_F)`, with `‖X‖₁` taken entrywise.

use ndarray::{Array2, Zip};

use super::threshold::en_prox_scalar;
use super::{EnConfig, SolveTrace};
use crate::error::{mismatch, Error, Result};
use crate::matrix::{
    gram, residual, spectral_norm, CoefficientMatrix, Dictionary, SignalMatrix, SPECTRAL_TOL,
};

/// Iterates are aborted once any entry grows past this magnitude.
const DIVERGENCE_LIMIT: f64 = 1e12;

// Neumaier-compensated sum; objective differences near convergence sit close
// to the rounding floor of a plain sum.
fn compensated_sum<I: Iterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn objective_from_residual(r: &Array2<f64>, x: &Array2<f64>, lambda: f64, gamma: f64) -> f64 {
    let fit = 0.5 * compensated_sum(r.iter().map(|v| v * v));
    let l1 = compensated_sum(x.iter().map(|v| v.abs()));
    let l2 = compensated_sum(x.iter().map(|v| v * v));
    fit + lambda * (l1 + 0.5 * gamma * l2)
}

/// Elastic-net regularized reconstruction objective.
pub fn en_objective(
    y: &SignalMatrix,
    d: &Dictionary,
    x: &CoefficientMatrix,
    lambda: f64,
    gamma: f64,
) -> Result<f64> {
    let r = residual(y, d, x)?;
    Ok(objective_from_residual(
        &r,
        &x.view().to_owned(),
        lambda,
        gamma,
    ))
}

/// Step size `1/‖DᵀD‖`.
pub fn lipschitz_step(d: &Dictionary) -> Result<f64> {
    Ok(1.0 / spectral_norm(&gram(d), SPECTRAL_TOL)?)
}

/// Elastic-net sparse coding by proximal gradient with step `1/‖DᵀD‖`,
/// started from `x_init` (pass zeros for a cold start).
pub fn en_sparse_code(
    y: &SignalMatrix,
    d: &Dictionary,
    cfg: &EnConfig,
    x_init: &CoefficientMatrix,
) -> Result<(CoefficientMatrix, SolveTrace)> {
    let step = lipschitz_step(d)?;
    en_sparse_code_with_step(y, d, cfg, x_init, step)
}

/// As [`en_sparse_code`] with an explicit gradient step.
///
/// One iteration is `X ← Prox(X − step·Dᵀ(DX − Y))`, where the proximal map
/// of `step·λ·EN` is `Soft(·, step·λ) / (1 + step·λ·γ)`. Iteration stops when
/// `‖X − X_prev‖_F / ‖X_prev‖_F ≤ rel_change_tol` or after `max_iters`.
pub fn en_sparse_code_with_step(
    y: &SignalMatrix,
    d: &Dictionary,
    cfg: &EnConfig,
    x_init: &CoefficientMatrix,
    step: f64,
) -> Result<(CoefficientMatrix, SolveTrace)> {
    cfg.validate()?;
    if d.n_dim() != y.n_dim() {
        return Err(mismatch(
            "en_sparse_code dictionary rows",
            y.n_dim(),
            d.n_dim(),
        ));
    }
    if x_init.n_atoms() != d.n_atoms() || x_init.n_signals() != y.n_signals() {
        return Err(mismatch(
            "en_sparse_code warm start",
            format!("({}, {})", d.n_atoms(), y.n_signals()),
            format!("({}, {})", x_init.n_atoms(), x_init.n_signals()),
        ));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "step size {step} must be positive"
        )));
    }

    let dm = d.view();
    let ym = y.view();
    let threshold = step * cfg.lambda;
    let shrink_gamma = cfg.gamma;

    let mut x = x_init.view().to_owned();
    let mut r = &ym - &dm.dot(&x);
    let mut trace = SolveTrace {
        initial_objective: Some(objective_from_residual(&r, &x, cfg.lambda, cfg.gamma)),
        ..SolveTrace::default()
    };

    for _ in 0..cfg.max_iters {
        let prev = x.clone();
        // gradient of ½‖Y − DX‖² is −Dᵀr
        let grad_neg = dm.t().dot(&r);
        Zip::from(&mut x)
            .and(&grad_neg)
            .for_each(|xv, &g| *xv = en_prox_scalar(*xv + step * g, threshold, shrink_gamma));

        if x.iter()
            .any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT)
        {
            return Err(Error::NonFinite(format!(
                "elastic-net iterate diverged at iteration {}",
                trace.iterations + 1
            )));
        }

        r = &ym - &dm.dot(&x);
        let diff =
            compensated_sum(x.iter().zip(prev.iter()).map(|(a, b)| (a - b) * (a - b))).sqrt();
        let prev_norm = compensated_sum(prev.iter().map(|v| v * v)).sqrt();
        let xi = if prev_norm > 0.0 {
            diff / prev_norm
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        let objective = objective_from_residual(&r, &x, cfg.lambda, cfg.gamma);
        let r_norm = compensated_sum(r.iter().map(|v| v * v)).sqrt();
        trace.push(objective, xi, r_norm);
        if xi <= cfg.rel_change_tol {
            break;
        }
    }
    Ok((CoefficientMatrix::from_unchecked(x), trace))
}
