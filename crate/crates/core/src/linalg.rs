//! Small dense kernels: Cholesky solves, a cyclic Jacobi eigensolver for
//! tiny symmetric matrices, and power iteration for leading eigenpairs.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

pub fn frobenius_norm(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn l2_norm(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `a x = b` for symmetric positive definite `a`.
///
/// Returns `None` when a pivot is not strictly positive relative to the
/// diagonal scale, i.e. when the columns behind `a` are (numerically)
/// linearly dependent.
pub fn cholesky_solve(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for p in 0..j {
            diag -= l[[j, p]] * l[[j, p]];
        }
        if !(diag > 1e-13 * a[[j, j]].abs().max(1.0)) {
            return None;
        }
        let ljj = diag.sqrt();
        l[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for p in 0..j {
                s -= l[[i, p]] * l[[j, p]];
            }
            l[[i, j]] = s / ljj;
        }
    }
    // forward: L z = b
    let mut z = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s -= l[[i, p]] * z[p];
        }
        z[i] = s / l[[i, i]];
    }
    // backward: L^T x = z
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = z[i];
        for p in (i + 1)..n {
            s -= l[[p, i]] * x[p];
        }
        x[i] = s / l[[i, i]];
    }
    Some(x)
}

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.
///
/// Eigenvalues are returned in descending order with eigenvectors as the
/// matching columns.
pub fn symmetric_eigen(a: ArrayView2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        let scale: f64 = m.iter().map(|x| x * x).sum();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values = order.iter().map(|&i| m[[i, i]]).collect();
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    (values, vectors)
}

/// Outcome of [`power_iteration`].
#[derive(Debug, Clone)]
pub struct PowerResult {
    pub value: f64,
    pub vector: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration for the leading eigenpair of a symmetric positive
/// semidefinite operator `apply`.
///
/// Stops when the eigen-residual `‖Av − ρv‖` drops below `tol · ρ`, or when
/// the Rayleigh quotient stagnates to `1e-3 · tol` relative change. Since the
/// operator is PSD the Rayleigh quotient is nondecreasing across iterations.
pub fn power_iteration<F>(apply: F, start: Array1<f64>, tol: f64, max_iters: usize) -> PowerResult
where
    F: Fn(ArrayView1<f64>) -> Array1<f64>,
{
    let mut v = start;
    let norm = l2_norm(v.view());
    if norm == 0.0 {
        return PowerResult {
            value: 0.0,
            vector: v,
            iterations: 0,
            converged: true,
        };
    }
    v /= norm;
    let mut rho_prev = f64::NAN;
    for it in 1..=max_iters {
        let w = apply(v.view());
        let rho = v.dot(&w);
        let w_norm = l2_norm(w.view());
        if w_norm == 0.0 {
            return PowerResult {
                value: 0.0,
                vector: v,
                iterations: it,
                converged: true,
            };
        }
        let residual = (&w - &(&v * rho)).iter().map(|x| x * x).sum::<f64>().sqrt();
        let stagnated = rho_prev.is_finite() && (rho - rho_prev).abs() <= 1e-3 * tol * rho.abs();
        if residual <= tol * rho.abs() || stagnated {
            return PowerResult {
                value: rho,
                vector: v,
                iterations: it,
                converged: true,
            };
        }
        rho_prev = rho;
        v = w / w_norm;
    }
    let w = apply(v.view());
    PowerResult {
        value: v.dot(&w),
        vector: v,
        iterations: max_iters,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let b = array![2.0, 1.0];
        let x = cholesky_solve(a.view(), b.view()).unwrap();
        let back = a.dot(&x);
        assert!((back[0] - 2.0).abs() < 1e-14 && (back[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cholesky_rejects_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(cholesky_solve(a.view(), array![1.0, 1.0].view()).is_none());
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = array![[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 0.5]];
        let (vals, vecs) = symmetric_eigen(a.view());
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        assert!((vals[2] - 0.5).abs() < 1e-12);
        let v0 = vecs.column(0);
        let av = a.dot(&v0);
        for i in 0..3 {
            assert!((av[i] - 3.0 * v0[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let r = power_iteration(|v| a.dot(&v), array![1.0, 0.3], 1e-12, 1000);
        assert!(r.converged);
        assert!((r.value - 3.0).abs() < 1e-10);
    }
}
