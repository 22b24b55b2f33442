//! Dictionary recovery and representation diagnostics.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{mismatch, Result};
use crate::matrix::{gram, CoefficientMatrix, Dictionary, SignalMatrix};

/// `|⟨d̂, d⁰⟩| > 0.99` counts as recovered.
pub const DEFAULT_RECOVERY_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomMatch {
    pub true_atom: usize,
    pub learned_atom: usize,
    /// `1 − |⟨d̂_j, d⁰_k⟩|`
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryDistanceReport {
    pub total_distance: f64,
    pub per_atom_best_match: Vec<AtomMatch>,
    pub recovery_rate: f64,
}

// an atom's inner product with itself is only 1 up to rounding
fn same_up_to_sign(a: ArrayView1<f64>, b: ArrayView1<f64>) -> bool {
    a.iter().zip(b.iter()).all(|(p, q)| p == q) || a.iter().zip(b.iter()).all(|(p, q)| *p == -q)
}

/// Sum over true atoms of the best `1 − |inner product|` against any learned
/// atom. Each true atom is matched independently, so two true atoms may share
/// a learned atom. Invariant to sign flips and permutations of the learned
/// atoms.
pub fn dictionary_distance(
    d_true: &Dictionary,
    d_learned: &Dictionary,
    recovery_threshold: f64,
) -> Result<DictionaryDistanceReport> {
    if d_true.n_dim() != d_learned.n_dim() {
        return Err(mismatch(
            "dictionary_distance atom length",
            d_true.n_dim(),
            d_learned.n_dim(),
        ));
    }
    let cross = d_learned.view().t().dot(&d_true.view());
    let mut matches = Vec::with_capacity(d_true.n_atoms());
    for k in 0..d_true.n_atoms() {
        let mut best = AtomMatch {
            true_atom: k,
            learned_atom: 0,
            distance: f64::INFINITY,
        };
        for j in 0..d_learned.n_atoms() {
            let dist = if same_up_to_sign(d_learned.atom(j), d_true.atom(k)) {
                0.0
            } else {
                (1.0 - cross[[j, k]].abs()).max(0.0)
            };
            if dist < best.distance {
                best.learned_atom = j;
                best.distance = dist;
            }
        }
        matches.push(best);
    }
    let total_distance = matches.iter().map(|m| m.distance).sum();
    let recovered = matches
        .iter()
        .filter(|m| m.distance < recovery_threshold)
        .count();
    Ok(DictionaryDistanceReport {
        total_distance,
        recovery_rate: recovered as f64 / matches.len() as f64,
        per_atom_best_match: matches,
    })
}

/// (max, mean) of the absolute off-diagonal Gram entries.
pub fn coherence(d: &Dictionary) -> (f64, f64) {
    let g = gram(d).into_inner();
    let k = g.nrows();
    if k < 2 {
        return (0.0, 0.0);
    }
    let mut max = 0.0f64;
    let mut sum = 0.0;
    for i in 0..k {
        for j in (i + 1)..k {
            let v = g[[i, j]].abs();
            max = max.max(v);
            sum += v;
        }
    }
    (max, sum / (k * (k - 1) / 2) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    pub value: f64,
    /// Set when a distance set has zero variance and the correlation is
    /// undefined; `value` is then 0.
    pub degenerate: bool,
}

fn pairwise_distances(m: ArrayView2<f64>) -> Vec<f64> {
    let n = m.ncols();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in (a + 1)..n {
            let d: f64 = m
                .column(a)
                .iter()
                .zip(m.column(b).iter())
                .map(|(p, q)| (p - q) * (p - q))
                .sum();
            out.push(d.sqrt());
        }
    }
    out
}

/// Pearson correlation between pairwise ℓ2 distances of the signals and of
/// their codes, over all column pairs.
pub fn representation_consistency(y: &SignalMatrix, x: &CoefficientMatrix) -> Result<Consistency> {
    if y.n_signals() != x.n_signals() {
        return Err(mismatch(
            "representation_consistency columns",
            y.n_signals(),
            x.n_signals(),
        ));
    }
    let a = Array1::from(pairwise_distances(y.view()));
    let b = Array1::from(pairwise_distances(x.view()));
    if a.len() < 2 {
        return Ok(Consistency {
            value: 0.0,
            degenerate: true,
        });
    }
    let ma = a.mean().unwrap_or(0.0);
    let mb = b.mean().unwrap_or(0.0);
    let da = &a - ma;
    let db = &b - mb;
    let va = da.dot(&da);
    let vb = db.dot(&db);
    let scale_a = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale_b = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let flat = |v: f64, s: f64| v <= (1e-12 * s).powi(2) * a.len() as f64;
    if flat(va, scale_a) || flat(vb, scale_b) {
        return Ok(Consistency {
            value: 0.0,
            degenerate: true,
        });
    }
    let r = da.dot(&db) / (va.sqrt() * vb.sqrt());
    Ok(Consistency {
        value: r.clamp(-1.0, 1.0),
        degenerate: false,
    })
}
