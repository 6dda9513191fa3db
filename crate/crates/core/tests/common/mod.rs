//! Shared helpers for integration tests.
#![allow(dead_code)] // each test target uses a subset

use nalgebra::DMatrix;
use rarc_core::manifolds::{Manifold, TangentVector};
use rarc_core::numkernel;

/// Least-squares slope of log(err) against log(h).
pub fn loglog_slope(hs: &[f64], errs: &[f64]) -> f64 {
    assert_eq!(hs.len(), errs.len());
    let n = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Operator norm of a symmetric matrix (largest absolute eigenvalue).
pub fn sym_op_norm(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    let eig = numkernel::sym_eig(&sym).expect("finite symmetric");
    eig.lambda_min().abs().max(eig.lambda_max().abs())
}

/// Scale a tangent vector.
pub fn scaled(v: &TangentVector, c: f64) -> TangentVector {
    TangentVector {
        base: v.base.clone(),
        coords: &v.coords * c,
    }
}

/// The four curved manifolds the solver targets, at small test sizes.
pub fn curved_manifolds() -> Vec<Manifold> {
    vec![
        Manifold::sphere(6).unwrap(),
        Manifold::oblique(4, 3).unwrap(),
        Manifold::stiefel(5, 2).unwrap(),
        Manifold::grassmann(6, 2).unwrap(),
    ]
}
