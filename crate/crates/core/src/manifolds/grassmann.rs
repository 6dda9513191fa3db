//! Grassmann manifold Gr(r, t) of t-dimensional subspaces of R^r, represented
//! by orthonormal r x t matrices. Tangent vectors live in the horizontal
//! space XᵀV = 0; exp and parallel transport have closed forms through the
//! thin SVD of the direction.

use nalgebra::DMatrix;

use crate::numkernel;

pub fn feasibility(x: &DMatrix<f64>) -> f64 {
    let t = x.ncols();
    numkernel::max_abs(&(x.transpose() * x - DMatrix::identity(t, t)))
}

pub fn tangency(x: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    numkernel::max_abs(&(x.transpose() * v))
}

pub fn project(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    w - x * (x.transpose() * w)
}

/// Geodesic endpoint: with V = U Σ Wᵀ,
/// exp_X(V) = X W cos(Σ) Wᵀ + U sin(Σ) Wᵀ.
pub fn exp(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    if v.iter().all(|&e| e == 0.0) {
        return x.clone();
    }
    let (u, s, w) = numkernel::svd_thin(v).expect("finite tangent");
    let cos = DMatrix::from_diagonal(&s.map(f64::cos));
    let sin = DMatrix::from_diagonal(&s.map(f64::sin));
    x * &w * cos * w.transpose() + u * sin * w.transpose()
}

/// Parallel transport of `z` along the geodesic with velocity V = U Σ Wᵀ:
/// τz = [(X W (-sin Σ) + U cos Σ) Uᵀ + (I - U Uᵀ)] z.
pub fn transport(x: &DMatrix<f64>, v: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    if v.iter().all(|&e| e == 0.0) {
        return z.clone();
    }
    let (u, s, w) = numkernel::svd_thin(v).expect("finite tangent");
    let neg_sin = DMatrix::from_diagonal(&s.map(|e| -e.sin()));
    let cos = DMatrix::from_diagonal(&s.map(f64::cos));
    let rotated = x * &w * neg_sin + &u * cos;
    let a = u.transpose() * z;
    rotated * &a + z - u * a
}

/// Transport of the velocity along itself to t = 1.
pub fn geodesic_endpoint_velocity(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    if v.iter().all(|&e| e == 0.0) {
        return v.clone();
    }
    let (u, s, w) = numkernel::svd_thin(v).expect("finite tangent");
    let neg_sin = DMatrix::from_diagonal(&s.map(|e| -e.sin()));
    let cos = DMatrix::from_diagonal(&s.map(f64::cos));
    let sigma = DMatrix::from_diagonal(&s);
    (x * &w * neg_sin + u * cos) * sigma * w.transpose()
}
