//! Elementwise shrinkage operators.

use ndarray::{Array, ArrayBase, Data, Dimension};

/// `sign(x) · max(|x| − λ, 0)`
#[inline]
pub fn soft(x: f64, lambda: f64) -> f64 {
    if x.abs() <= lambda {
        0.0
    } else {
        x.signum() * (x.abs() - lambda)
    }
}

/// Keeps `x` when `|x| > λ`, otherwise zero.
#[inline]
pub fn hard(x: f64, lambda: f64) -> f64 {
    if x.abs() > lambda {
        x
    } else {
        0.0
    }
}

/// Proximal operator of `λ(|u| + (γ/2)u²)`: `Soft(x, λ) / (1 + λγ)`.
#[inline]
pub fn en_prox_scalar(x: f64, lambda: f64, gamma: f64) -> f64 {
    soft(x, lambda) / (1.0 + lambda * gamma)
}

pub fn soft_threshold<S, D>(x: &ArrayBase<S, D>, lambda: f64) -> Array<f64, D>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    x.mapv(|v| soft(v, lambda))
}

pub fn hard_threshold<S, D>(x: &ArrayBase<S, D>, lambda: f64) -> Array<f64, D>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    x.mapv(|v| hard(v, lambda))
}

/// Elastic-net proximal map applied entrywise. With `gamma = 0` this is
/// exactly [`soft_threshold`].
pub fn en_prox<S, D>(x: &ArrayBase<S, D>, lambda: f64, gamma: f64) -> Array<f64, D>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    x.mapv(|v| en_prox_scalar(v, lambda, gamma))
}
