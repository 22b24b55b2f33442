//! Core data model: signals, dictionaries, coefficient matrices and the
//! Gram matrix, plus the handful of operations every learner relies on.
//!
//! Signals and atoms are stored as columns of dense `f64` matrices.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{mismatch, Error, Result};
use crate::linalg::{frobenius_norm, l2_norm, power_iteration};

/// Columns with a norm below this are treated as zero.
pub const ZERO_COLUMN_TOL: f64 = 1e-14;
/// Allowed deviation from unit norm for a dictionary atom.
pub const UNIT_NORM_TOL: f64 = 1e-9;
/// Default relative tolerance for [`spectral_norm`].
pub const SPECTRAL_TOL: f64 = 1e-8;
/// Iteration cap for [`spectral_norm`].
pub const SPECTRAL_MAX_ITERS: usize = 1000;

fn check_finite(a: ArrayView2<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} contains NaN or infinity")))
    }
}

/// Observed signals `Y` (N×L), one signal per column.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix(Array2<f64>);

impl SignalMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(mismatch(
                "SignalMatrix",
                "N >= 1 and L >= 1",
                format!("{:?}", data.dim()),
            ));
        }
        check_finite(data.view(), "signal matrix")?;
        Ok(SignalMatrix(data))
    }

    pub fn n_dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_signals(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn column(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.column(i)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<SignalMatrix> {
        let picked = self.0.select(Axis(1), indices);
        SignalMatrix::new(picked.as_standard_layout().into_owned())
    }

    /// Per-column standardization: zero mean, unit variance. Constant columns
    /// are only centered.
    pub fn standardized(&self) -> SignalMatrix {
        let mut out = self.0.clone();
        let n = out.nrows() as f64;
        for mut col in out.columns_mut() {
            let mean = col.sum() / n;
            col.mapv_inplace(|v| v - mean);
            let sd = (col.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
            if sd > ZERO_COLUMN_TOL {
                col.mapv_inplace(|v| v / sd);
            }
        }
        SignalMatrix(out)
    }
}

/// Dictionary `D` (N×K) with unit-norm columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary(Array2<f64>);

impl Dictionary {
    /// Wraps an already-normalized matrix, checking the unit-norm invariant.
    pub fn new(atoms: Array2<f64>) -> Result<Self> {
        if atoms.nrows() == 0 || atoms.ncols() == 0 {
            return Err(mismatch(
                "Dictionary",
                "N >= 1 and K >= 1",
                format!("{:?}", atoms.dim()),
            ));
        }
        check_finite(atoms.view(), "dictionary")?;
        for (k, col) in atoms.columns().into_iter().enumerate() {
            let norm = l2_norm(col);
            if (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::InvalidConfig(format!(
                    "atom {k} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Dictionary(atoms))
    }

    pub(crate) fn from_normalized_unchecked(atoms: Array2<f64>) -> Self {
        Dictionary(atoms)
    }

    pub fn n_dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn atom(&self, k: usize) -> ArrayView1<'_, f64> {
        self.0.column(k)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Sparse codes `X` (K×L); column `i` represents signal `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix(Array2<f64>);

impl CoefficientMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        check_finite(data.view(), "coefficient matrix")?;
        Ok(CoefficientMatrix(data))
    }

    pub fn zeros(n_atoms: usize, n_signals: usize) -> Self {
        CoefficientMatrix(Array2::zeros((n_atoms, n_signals)))
    }

    pub(crate) fn from_unchecked(data: Array2<f64>) -> Self {
        CoefficientMatrix(data)
    }

    pub fn n_atoms(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_signals(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn column(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.column(i)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Largest number of nonzeros in any column.
    pub fn max_column_nnz(&self) -> usize {
        self.0
            .columns()
            .into_iter()
            .map(|c| c.iter().filter(|v| **v != 0.0).count())
            .max()
            .unwrap_or(0)
    }
}

/// Symmetric K×K matrix `DᵀD`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix(Array2<f64>);

impl GramMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(mismatch(
                "GramMatrix",
                "square",
                format!("{:?}", data.dim()),
            ));
        }
        check_finite(data.view(), "gram matrix")?;
        let n = data.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (data[[i, j]] - data[[j, i]]).abs() > 1e-12 {
                    return Err(Error::InvalidConfig(format!(
                        "gram matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(GramMatrix(data))
    }

    pub fn size(&self) -> usize {
        self.0.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// Scales each column to unit ℓ2 norm.
pub fn normalize_columns(matrix: ArrayView2<f64>) -> Result<Dictionary> {
    check_finite(matrix, "matrix")?;
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Err(mismatch(
            "normalize_columns",
            "non-empty matrix",
            format!("{:?}", matrix.dim()),
        ));
    }
    let mut out = matrix.to_owned();
    for (index, mut col) in out.columns_mut().into_iter().enumerate() {
        let norm = l2_norm(col.view());
        if norm < ZERO_COLUMN_TOL {
            return Err(Error::ZeroColumn { index });
        }
        col.mapv_inplace(|v| v / norm);
    }
    Ok(Dictionary(out))
}

/// `DᵀD`, symmetrized exactly.
pub fn gram(d: &Dictionary) -> GramMatrix {
    let k = d.n_atoms();
    let mut g = d.0.t().dot(&d.0);
    for i in 0..k {
        for j in (i + 1)..k {
            let v = 0.5 * (g[[i, j]] + g[[j, i]]);
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    GramMatrix(g)
}

fn check_factor_dims(y: &SignalMatrix, d: &Dictionary, x: &CoefficientMatrix) -> Result<()> {
    if d.n_dim() != y.n_dim() {
        return Err(mismatch("dictionary rows", y.n_dim(), d.n_dim()));
    }
    if x.n_atoms() != d.n_atoms() {
        return Err(mismatch("coefficient rows", d.n_atoms(), x.n_atoms()));
    }
    if x.n_signals() != y.n_signals() {
        return Err(mismatch(
            "coefficient columns",
            y.n_signals(),
            x.n_signals(),
        ));
    }
    Ok(())
}

pub(crate) fn residual(
    y: &SignalMatrix,
    d: &Dictionary,
    x: &CoefficientMatrix,
) -> Result<Array2<f64>> {
    check_factor_dims(y, d, x)?;
    Ok(&y.0 - &d.0.dot(&x.0))
}

/// `‖Y − DX‖_F`.
pub fn reconstruction_error(
    y: &SignalMatrix,
    d: &Dictionary,
    x: &CoefficientMatrix,
) -> Result<f64> {
    Ok(frobenius_norm(residual(y, d, x)?.view()))
}

/// Largest eigenvalue of a PSD Gram matrix by power iteration; this is the
/// Lipschitz constant of the gradient of `½‖Y − DX‖²_F`.
pub fn spectral_norm(g: &GramMatrix, tol: f64) -> Result<f64> {
    spectral_norm_with_cap(g, tol, SPECTRAL_MAX_ITERS)
}

pub fn spectral_norm_with_cap(g: &GramMatrix, tol: f64, max_iters: usize) -> Result<f64> {
    let k = g.size();
    // fixed-seed start vector: deterministic and almost surely not orthogonal
    // to the leading eigenvector
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_9a4d);
    let start = Array1::from_shape_fn(k, |_| rng.random_range(0.5..1.5));
    let m = g.view();
    let r = power_iteration(|v| m.dot(&v), start, tol, max_iters);
    if !r.converged {
        return Err(Error::NonConvergence {
            iterations: r.iterations,
        });
    }
    Ok(r.value)
}
