//! Unit sphere in R^r: points are r x 1 matrices with unit norm, tangents
//! satisfy xᵀv = 0. Retraction is the exponential map (great circles) and
//! parallel transport has the closed rotation form.

use nalgebra::DMatrix;

pub fn feasibility(x: &DMatrix<f64>) -> f64 {
    (x.norm() - 1.0).abs()
}

pub fn tangency(x: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    x.dot(v).abs()
}

pub fn project(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    w - x * x.dot(w)
}

pub fn exp(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.norm();
    if n == 0.0 {
        return x.clone();
    }
    x * n.cos() + v * (n.sin() / n)
}

/// Transport `u` along the geodesic leaving `x` with velocity `v`.
///
/// The component of `u` along the motion direction rotates in the (x, v)
/// plane; the orthogonal complement is untouched.
pub fn transport(x: &DMatrix<f64>, v: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.norm();
    if n == 0.0 {
        return u.clone();
    }
    let d = v / n;
    let ud = d.dot(u);
    u + (x * (-n.sin()) + &d * (n.cos() - 1.0)) * ud
}

/// Velocity of the geodesic t -> exp_x(t v) at t = 1, i.e. the transport of
/// `v` along itself. Used to run transports backwards.
pub fn geodesic_endpoint_velocity(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v.norm();
    if n == 0.0 {
        return v.clone();
    }
    (x * (-n.sin()) + (v / n) * n.cos()) * n
}
