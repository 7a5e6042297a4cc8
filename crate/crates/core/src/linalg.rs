//! Small dense linear-algebra helpers: random orthonormal bases, symmetric
//! eigendecomposition (cyclic Jacobi) and PSD projection.
//!
//! Matrices here are at most a few hundred rows, so plain O(n^3) routines
//! are sufficient and keep the crate free of external BLAS/LAPACK linkage.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

/// Draw a `rows x cols` matrix with orthonormal columns (`cols <= rows`) from
/// the Haar-like distribution induced by orthonormalizing a Gaussian matrix.
///
/// Gram-Schmidt is applied twice; for Gaussian input this brings
/// `||Q^T Q - I||_max` below 1e-12.
pub fn random_orthonormal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    assert!(cols <= rows, "cannot orthonormalize {cols} columns in {rows} dimensions");
    let mut q = Array2::from_shape_fn((rows, cols), |_| rng.sample::<f64, _>(StandardNormal));
    orthonormalize_columns(&mut q);
    orthonormalize_columns(&mut q);
    q
}

fn orthonormalize_columns(q: &mut Array2<f64>) {
    let cols = q.ncols();
    for j in 0..cols {
        for k in 0..j {
            let proj = {
                let cj = q.column(j);
                let ck = q.column(k);
                cj.dot(&ck)
            };
            let ck = q.column(k).to_owned();
            q.column_mut(j).scaled_add(-proj, &ck);
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        // A numerically dependent column only occurs with probability zero
        // for Gaussian input; re-draw is not worth the complexity.
        assert!(norm > 1e-12, "rank-deficient matrix during orthonormalization");
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvectors in columns,
/// ordered by descending eigenvalue. Input must be square; symmetry is
/// enforced by averaging with the transpose.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen requires a square matrix");
    let mut m = (a + &a.t()) * 0.5;
    let mut v = Array2::eye(n);

    let frob = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob.max(1e-300);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= tol / (n as f64) {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
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
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let eigvals = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut eigvecs = Array2::zeros((n, n));
    for (new_col, &old_col) in order.iter().enumerate() {
        eigvecs.column_mut(new_col).assign(&v.column(old_col));
    }
    (eigvals, eigvecs)
}

/// Project a symmetric matrix onto the PSD cone (symmetrize, clip negative
/// eigenvalues to zero). Returns the repaired matrix together with a factor
/// `A` such that `A A^T` equals it, usable for Gaussian sampling.
pub fn psd_project(a: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (vals, vecs) = symmetric_eigen(a);
    let clipped = vals.mapv(|l| l.max(0.0));
    let sqrt = clipped.mapv(f64::sqrt);
    let mut factor = vecs.clone();
    for (j, s) in sqrt.iter().enumerate() {
        factor.column_mut(j).mapv_inplace(|v| v * s);
    }
    let mut scaled = vecs.clone();
    for (j, l) in clipped.iter().enumerate() {
        scaled.column_mut(j).mapv_inplace(|v| v * l);
    }
    let repaired = scaled.dot(&vecs.t());
    // Force exact symmetry; eigen reconstruction leaves ~1e-16 asymmetry.
    let repaired = (&repaired + &repaired.t()) * 0.5;
    (repaired, factor)
}

/// Max-norm of `Q^T Q - I`, used to check orthonormality.
pub fn orthonormality_defect(q: &Array2<f64>) -> f64 {
    let gram = q.t().dot(q);
    let mut worst: f64 = 0.0;
    for i in 0..gram.nrows() {
        for j in 0..gram.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[[i, j]] - target).abs());
        }
    }
    worst
}
