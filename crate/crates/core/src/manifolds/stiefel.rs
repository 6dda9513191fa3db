//! Stiefel manifold St(r, t): r x t matrices with orthonormal columns.
//! Tangent vectors satisfy XᵀV + VᵀX = 0. The retraction is the polar
//! decomposition of X + V, which has vanishing tangential acceleration.

use nalgebra::DMatrix;

use crate::numkernel;

pub fn feasibility(x: &DMatrix<f64>) -> f64 {
    let t = x.ncols();
    numkernel::max_abs(&(x.transpose() * x - DMatrix::identity(t, t)))
}

pub fn tangency(x: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let m = x.transpose() * v;
    numkernel::max_abs(&(&m + m.transpose()))
}

pub fn project(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.transpose() * w;
    let sym = (&m + m.transpose()) * 0.5;
    w - x * sym
}

/// Polar retraction: R_X(V) = (X + V)(I + VᵀV)^{-1/2}.
///
/// Computed through the actual Gram matrix (X+V)ᵀ(X+V), which equals
/// I + VᵀV for feasible inputs but also absorbs accumulated rounding drift
/// instead of compounding it across iterations.
pub fn retract_polar(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    if v.iter().all(|&e| e == 0.0) {
        return x.clone();
    }
    let y = x + v;
    let m = y.transpose() * &y;
    let eig = numkernel::sym_eig(&m).expect("Gram matrix is symmetric positive definite");
    let inv_sqrt = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let m_inv_sqrt = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose();
    y * m_inv_sqrt
}
