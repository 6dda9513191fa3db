//! Oblique manifold Ob(r, t): r x t matrices whose rows are unit vectors in
//! R^t, i.e. a product of r spheres. Every operation acts row by row through
//! the sphere kernels.

use nalgebra::DMatrix;

use super::sphere;

fn row(m: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m.ncols(), 1, |j, _| m[(i, j)])
}

fn rowwise(
    x: &DMatrix<f64>,
    others: &[&DMatrix<f64>],
    op: impl Fn(&DMatrix<f64>, &[DMatrix<f64>]) -> DMatrix<f64>,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        let xi = row(x, i);
        let args: Vec<DMatrix<f64>> = others.iter().map(|m| row(m, i)).collect();
        let res = op(&xi, &args);
        out.row_mut(i).copy_from(&res.transpose());
    }
    out
}

pub fn feasibility(x: &DMatrix<f64>) -> f64 {
    (0..x.nrows())
        .map(|i| (x.row(i).norm() - 1.0).abs())
        .fold(0.0, f64::max)
}

pub fn tangency(x: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    (0..x.nrows())
        .map(|i| x.row(i).dot(&v.row(i)).abs())
        .fold(0.0, f64::max)
}

pub fn project(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    rowwise(x, &[w], |xi, args| sphere::project(xi, &args[0]))
}

pub fn exp(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    rowwise(x, &[v], |xi, args| sphere::exp(xi, &args[0]))
}

pub fn transport(x: &DMatrix<f64>, v: &DMatrix<f64>, u: &DMatrix<f64>) -> DMatrix<f64> {
    rowwise(x, &[v, u], |xi, args| {
        sphere::transport(xi, &args[0], &args[1])
    })
}

pub fn geodesic_endpoint_velocity(x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    rowwise(x, &[v], |xi, args| {
        sphere::geodesic_endpoint_velocity(xi, &args[0])
    })
}

/// Normalize every row to unit length.
pub fn normalize_rows(w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = w.clone();
    for i in 0..out.nrows() {
        let n = out.row(i).norm();
        if n > 0.0 {
            out.row_mut(i).scale_mut(1.0 / n);
        }
    }
    out
}
