//! Small dense linear algebra: Cholesky, symmetric eigendecomposition, and
//! pseudo-inverse least squares. Everything here targets the modest matrix
//! sizes of this crate (covariate counts in the tens), so plain loops beat
//! pulling in a LAPACK backend.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` when a pivot is non-positive (matrix not PD to tolerance).
pub fn cholesky(a: &ArrayView2<'_, f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / dj;
        }
    }
    Some(l)
}

/// Solve `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &ArrayView2<'_, f64>, b: &ArrayView1<'_, f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in 0..n {
        for k in 0..i {
            let v = x[k];
            x[i] -= l[[i, k]] * v;
        }
        x[i] /= l[[i, i]];
    }
    x
}

/// Solve `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &ArrayView2<'_, f64>, b: &ArrayView1<'_, f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = x[k];
            x[i] -= l[[k, i]] * v;
        }
        x[i] /= l[[i, i]];
    }
    x
}

/// Solve `A x = b` with `A` symmetric positive definite.
pub fn solve_spd(a: &ArrayView2<'_, f64>, b: &ArrayView1<'_, f64>) -> Option<Array1<f64>> {
    let l = cholesky(a)?;
    let y = solve_lower(&l.view(), b);
    Some(solve_lower_transpose(&l.view(), &y.view()))
}

/// Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` with `a ≈ V diag(λ) Vᵀ`; columns of
/// `V` are orthonormal. Eigenvalues are unsorted.
pub fn symmetric_eigen(a: &ArrayView2<'_, f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut m = a.to_owned();
    // Symmetrize against float asymmetry in the input.
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[[i, j]] + m[[j, i]]);
            m[[i, j]] = s;
            m[[j, i]] = s;
        }
    }
    let mut v = Array2::<f64>::eye(n);
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1.0);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off = off.max(m[[i, j]].abs());
            }
        }
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let mip = m[[i, p]];
                    let miq = m[[i, q]];
                    m[[i, p]] = c * mip - s * miq;
                    m[[i, q]] = s * mip + c * miq;
                }
                for i in 0..n {
                    let mpi = m[[p, i]];
                    let mqi = m[[q, i]];
                    m[[p, i]] = c * mpi - s * mqi;
                    m[[q, i]] = s * mpi + c * mqi;
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = c * vip - s * viq;
                    v[[i, q]] = s * vip + c * viq;
                }
            }
        }
    }
    let eig = Array1::from_iter((0..n).map(|i| m[[i, i]]));
    (eig, v)
}

/// Factor `B` with `B Bᵀ = A` for symmetric positive semidefinite `A`,
/// clipping negative eigenvalues at zero. The boolean reports whether any
/// clipping happened (i.e. Cholesky failed and the eigenvalue route ran).
pub fn psd_factor(a: &ArrayView2<'_, f64>) -> (Array2<f64>, bool) {
    if let Some(l) = cholesky(a) {
        return (l, false);
    }
    let n = a.nrows();
    let (eig, v) = symmetric_eigen(a);
    let mut b = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let s = eig[j].max(0.0).sqrt();
        for i in 0..n {
            b[[i, j]] = v[[i, j]] * s;
        }
    }
    (b, true)
}

/// Weighted least squares with pseudo-inverse semantics.
///
/// Minimizes `Σ_i w_i (y_it − x_iᵀ β_t)²` independently per target column,
/// returning the minimum-norm solution when `XᵀWX` is rank deficient.
pub fn weighted_least_squares(
    x: &ArrayView2<'_, f64>,
    y: &ArrayView2<'_, f64>,
    w: Option<&ArrayView1<'_, f64>>,
) -> Array2<f64> {
    let n = x.nrows();
    let k = x.ncols();
    let t = y.ncols();
    debug_assert_eq!(n, y.nrows());

    let mut gram = Array2::<f64>::zeros((k, k));
    let mut cross = Array2::<f64>::zeros((k, t));
    for i in 0..n {
        let wi = w.map_or(1.0, |w| w[i]);
        if wi == 0.0 {
            continue;
        }
        for a in 0..k {
            let xa = x[[i, a]] * wi;
            for b in a..k {
                gram[[a, b]] += xa * x[[i, b]];
            }
            for c in 0..t {
                cross[[a, c]] += xa * y[[i, c]];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[[a, b]] = gram[[b, a]];
        }
    }

    let (eig, v) = symmetric_eigen(&gram.view());
    let emax = eig.iter().fold(0.0f64, |acc, &e| acc.max(e));
    let cutoff = emax * 1e-12;
    // β = V f(Λ)⁻¹ Vᵀ cross, zeroing small eigenvalues.
    let mut vt_cross = Array2::<f64>::zeros((k, t));
    for a in 0..k {
        for c in 0..t {
            let mut s = 0.0;
            for i in 0..k {
                s += v[[i, a]] * cross[[i, c]];
            }
            vt_cross[[a, c]] = s;
        }
    }
    for a in 0..k {
        let inv = if eig[a] > cutoff { 1.0 / eig[a] } else { 0.0 };
        for c in 0..t {
            vt_cross[[a, c]] *= inv;
        }
    }
    let mut beta = Array2::<f64>::zeros((k, t));
    for i in 0..k {
        for c in 0..t {
            let mut s = 0.0;
            for a in 0..k {
                s += v[[i, a]] * vt_cross[[a, c]];
            }
            beta[[i, c]] = s;
        }
    }
    beta
}
