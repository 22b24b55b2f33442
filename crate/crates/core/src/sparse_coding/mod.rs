//! Sparse approximation: OMP, thresholding operators and the proximal-gradient
//! elastic-net coder.

mod elastic_net;
mod omp;
mod threshold;

pub use elastic_net::{en_objective, en_sparse_code, en_sparse_code_with_step, lipschitz_step};
pub use omp::{omp, omp_batch, OmpOutput};
pub use threshold::{en_prox, en_prox_scalar, hard, hard_threshold, soft, soft_threshold};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Stopping rules for OMP: at most `max_sparsity` atoms, or stop once the
/// residual norm is at most `residual_tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmpConfig {
    pub max_sparsity: usize,
    pub residual_tol: f64,
}

impl OmpConfig {
    pub fn new(max_sparsity: usize, residual_tol: f64) -> Self {
        OmpConfig {
            max_sparsity,
            residual_tol,
        }
    }

    pub fn validate(&self, n_dim: usize, n_atoms: usize) -> Result<()> {
        if self.max_sparsity == 0 {
            return Err(Error::InvalidConfig("sparsity must be at least 1".into()));
        }
        if self.max_sparsity > n_dim.min(n_atoms) {
            return Err(Error::InvalidConfig(format!(
                "sparsity {} exceeds min(N, K) = {}",
                self.max_sparsity,
                n_dim.min(n_atoms)
            )));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(Error::InvalidConfig(
                "residual tolerance must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Elastic-net coding parameters: penalty `λ(‖X‖₁ + (γ/2)‖X‖²_F)`, stop when
/// the relative change between iterates is at most `rel_change_tol`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub rel_change_tol: f64,
    pub max_iters: usize,
}

impl EnConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            bad.push("lambda must be > 0");
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            bad.push("gamma must be >= 0");
        }
        if !(self.rel_change_tol > 0.0) {
            bad.push("relative-change tolerance must be > 0");
        }
        if self.max_iters == 0 {
            bad.push("max_iters must be >= 1");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad.join(", ")))
        }
    }
}

impl Default for EnConfig {
    fn default() -> Self {
        EnConfig {
            lambda: 0.1,
            gamma: 1.0,
            rel_change_tol: 1e-6,
            max_iters: 500,
        }
    }
}

/// Ordered set of selected atom indices, in selection order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SupportSet(Vec<usize>);

impl SupportSet {
    pub fn new(indices: Vec<usize>) -> Self {
        SupportSet(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Per-iteration diagnostics of an iterative solver.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// Objective before the first iteration.
    pub initial_objective: Option<f64>,
    pub objective_per_iter: Vec<f64>,
    pub rel_change_per_iter: Vec<f64>,
    pub residual_norm_per_iter: Vec<f64>,
    pub iterations: usize,
}

impl SolveTrace {
    pub(crate) fn push(&mut self, objective: f64, rel_change: f64, residual_norm: f64) {
        self.objective_per_iter.push(objective);
        self.rel_change_per_iter.push(rel_change);
        self.residual_norm_per_iter.push(residual_norm);
        self.iterations += 1;
    }
}
