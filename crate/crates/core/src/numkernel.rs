//! Dense linear-algebra kernels: symmetric eigendecomposition, thin QR and
//! thin SVD with deterministic sign conventions.
//!
//! Eigendecomposition and QR come from `nalgebra`; the SVD is a one-sided
//! Jacobi iteration, which stays accurate on the rank-deficient and
//! clustered-spectrum matrices the geometry code produces (nalgebra's
//! bidiagonal SVD can silently misconverge on those). This module adds
//! input validation, ordering and sign normalization so downstream code
//! gets reproducible outputs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Result of a symmetric eigendecomposition `S = Q diag(λ) Qᵀ`.
///
/// Eigenvalues are sorted ascending; columns of `eigenvectors` are the
/// matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SymEigResult {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SymEigResult {
    /// Smallest eigenvalue.
    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Largest eigenvalue.
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }
}

/// Max-abs norm of a matrix; 0 for empty.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} contains non-finite entries")))
    }
}

/// Eigendecomposition of a symmetric matrix.
///
/// The input must be square and symmetric up to `1e-10 * (1 + max|S|)`;
/// it is symmetrized as `(S + Sᵀ)/2` before factorization.
pub fn sym_eig(s: &DMatrix<f64>) -> Result<SymEigResult> {
    if s.nrows() != s.ncols() {
        return Err(Error::Dimension(format!(
            "sym_eig needs a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    check_finite(s, "sym_eig input")?;
    let scale = max_abs(s);
    let asym = max_abs(&(s - s.transpose()));
    if asym > 1e-10 * (1.0 + scale) {
        return Err(Error::Domain(format!(
            "sym_eig input is not symmetric: max|S - St| = {asym:.3e}"
        )));
    }
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();

    // Sort ascending, permuting eigenvectors along.
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut eigenvalues = DVector::zeros(n);
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvalues[dst] = eig.eigenvalues[src];
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigResult {
        eigenvalues,
        eigenvectors,
    })
}

/// One-sided Jacobi: rotate column pairs of `w` until all columns are
/// mutually orthogonal, accumulating the rotations in `v`. On exit the
/// column norms of `w` are the singular values.
fn jacobi_orthogonalize(w: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    let t = w.ncols();
    let r = w.nrows();
    for _sweep in 0..64 {
        let mut rotated = false;
        for p in 0..t {
            for q in (p + 1)..t {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..r {
                    app += w[(i, p)] * w[(i, p)];
                    aqq += w[(i, q)] * w[(i, q)];
                    apq += w[(i, p)] * w[(i, q)];
                }
                if apq.abs() <= 1e-15 * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let tan = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cos = 1.0 / (1.0 + tan * tan).sqrt();
                let sin = cos * tan;
                for i in 0..r {
                    let wp = w[(i, p)];
                    let wq = w[(i, q)];
                    w[(i, p)] = cos * wp - sin * wq;
                    w[(i, q)] = sin * wp + cos * wq;
                }
                for i in 0..t {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = cos * vp - sin * vq;
                    v[(i, q)] = sin * vp + cos * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Thin SVD of a tall matrix (rows >= cols) by one-sided Jacobi. Left
/// vectors for vanishing singular values are completed from canonical
/// directions so `U` always has a full set of orthonormal columns.
fn svd_jacobi_tall(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (r, t) = (m.nrows(), m.ncols());
    let mut w = m.clone();
    let mut v = DMatrix::identity(t, t);
    jacobi_orthogonalize(&mut w, &mut v);

    let scale = max_abs(m);
    let mut u = DMatrix::zeros(r, t);
    let mut s = DVector::zeros(t);
    let mut filled: Vec<usize> = Vec::new();
    for j in 0..t {
        let norm = w.column(j).norm();
        // Columns at rounding level are noise; normalizing them would break
        // the orthonormality of U, so they count as exact zeros.
        if norm > 1e-300 && norm > 1e-13 * scale {
            s[j] = norm;
            for i in 0..r {
                u[(i, j)] = w[(i, j)] / norm;
            }
            filled.push(j);
        } else {
            s[j] = 0.0;
        }
    }
    // complete null columns of U against the filled ones
    for j in 0..t {
        if s[j] > 0.0 {
            continue;
        }
        'candidates: for c in 0..r {
            let mut col = DVector::zeros(r);
            col[c] = 1.0;
            for _ in 0..2 {
                for &k in &filled {
                    let d = u.column(k).dot(&col);
                    for i in 0..r {
                        col[i] -= d * u[(i, k)];
                    }
                }
            }
            let norm = col.norm();
            if norm > 1e-2 {
                for i in 0..r {
                    u[(i, j)] = col[i] / norm;
                }
                filled.push(j);
                break 'candidates;
            }
        }
    }
    (u, s, v)
}

/// Singular values only, by one-sided Jacobi.
fn singular_values_jacobi(m: &DMatrix<f64>) -> DVector<f64> {
    let tall = if m.nrows() >= m.ncols() {
        m.clone()
    } else {
        m.transpose()
    };
    let t = tall.ncols();
    let mut w = tall;
    let mut v = DMatrix::identity(t, t);
    jacobi_orthogonalize(&mut w, &mut v);
    DVector::from_fn(t, |j, _| w.column(j).norm())
}

/// Thin QR factorization `M = QR` for `M` of size r x t with r >= t.
///
/// `Q` is r x t with orthonormal columns, `R` is t x t upper triangular with
/// positive diagonal. Rank-deficient inputs (smallest singular value below
/// `1e-12` times the largest) are rejected, naming the dependent column.
pub fn qr_thin(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (r, t) = (m.nrows(), m.ncols());
    if r < t {
        return Err(Error::Dimension(format!(
            "qr_thin needs rows >= cols, got {r}x{t}"
        )));
    }
    check_finite(m, "qr_thin input")?;

    let svals = singular_values_jacobi(m);
    let smax = svals.max();
    let smin = svals.min();
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut rr = qr.r();
    if smin <= 1e-12 * smax {
        // Name the column whose pivot collapsed.
        let mut col = 0;
        let mut best = f64::INFINITY;
        for i in 0..t {
            let d = rr[(i, i)].abs();
            if d < best {
                best = d;
                col = i;
            }
        }
        return Err(Error::RankDeficient { col });
    }
    // Positive-diagonal convention.
    for i in 0..t {
        if rr[(i, i)] < 0.0 {
            for j in 0..t {
                rr[(i, j)] = -rr[(i, j)];
            }
            for j in 0..r {
                q[(j, i)] = -q[(j, i)];
            }
        }
    }
    Ok((q, rr))
}

/// Thin SVD `M = U diag(S) Vᵀ` with singular values sorted descending.
///
/// Sign convention: the first component of each `U` column larger than
/// `1e-12` in magnitude is made nonnegative (flipping the matching `V`
/// column), so outputs are deterministic.
pub fn svd_thin(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    check_finite(m, "svd_thin input")?;
    let (mut u, mut s, mut v) = if m.nrows() >= m.ncols() {
        svd_jacobi_tall(m)
    } else {
        let (u_t, s_t, v_t) = svd_jacobi_tall(&m.transpose());
        (v_t, s_t, u_t)
    };

    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    if order.iter().enumerate().any(|(i, &o)| i != o) {
        let (u0, v0, s0) = (u.clone(), v.clone(), s.clone());
        for (dst, &src) in order.iter().enumerate() {
            u.set_column(dst, &u0.column(src));
            v.set_column(dst, &v0.column(src));
            s[dst] = s0[src];
        }
    }
    for j in 0..k {
        let lead = u.column(j).iter().find(|x| x.abs() > 1e-12).copied();
        if let Some(x) = lead {
            if x < 0.0 {
                for i in 0..u.nrows() {
                    u[(i, j)] = -u[(i, j)];
                }
                for i in 0..v.nrows() {
                    v[(i, j)] = -v[(i, j)];
                }
            }
        }
    }
    Ok((u, s, v))
}
