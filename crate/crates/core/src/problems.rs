//! Seeded benchmark problems: top eigenvalue on the sphere, dominant
//! invariant subspace on Grassmann, an elliptope-style quadratic on the
//! oblique manifold, truncated SVD on a Stiefel product, and a composite
//! swish-network objective on the sphere.
//!
//! Each generator fixes its data from a seed, supplies analytic Riemannian
//! derivatives where they have closed forms, and computes the known optimal
//! value through the dense kernels, independently of the solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fdapprox::Objective;
use crate::manifolds::{Manifold, Point, TangentVector};
use crate::numkernel;
use crate::sampling;

/// A benchmark instance: manifold, objective, and (when known) the global
/// optimal value computed by an independent route.
pub struct ProblemInstance {
    pub name: String,
    pub manifold: Manifold,
    pub objective: Objective,
    pub optimum_oracle: Option<f64>,
    pub seed: u64,
}

/// Minimize f(x) = -xᵀAx/2 over the unit sphere for a symmetric A; the
/// optimum is minus half the top eigenvalue.
pub fn top_eigenvalue_from_matrix(a: DMatrix<f64>, seed: u64) -> Result<ProblemInstance> {
    let r = a.nrows();
    if a.ncols() != r {
        return Err(Error::Dimension("matrix must be square".into()));
    }
    let manifold = Manifold::sphere(r)?;
    let eig = numkernel::sym_eig(&a)?;
    let oracle = -0.5 * eig.lambda_max();

    let a_f = a.clone();
    let a_g = a.clone();
    let a_h = a.clone();
    let m_g = manifold.clone();
    let m_h = manifold.clone();
    let objective =
        Objective::new(move |p: &Point| -0.5 * (p.coords.transpose() * &a_f * &p.coords)[(0, 0)])
            .with_gradient(move |p: &Point| {
                let w = &a_g * &p.coords * (-1.0);
                m_g.project_tangent(p, &w).expect("ambient shape fixed")
            })
            .with_hessian(move |p: &Point, v: &TangentVector| {
                let quad = (p.coords.transpose() * &a_h * &p.coords)[(0, 0)];
                let w = &a_h * &v.coords * (-1.0);
                let mut t = m_h.project_tangent(p, &w).expect("ambient shape fixed");
                t.coords += &v.coords * quad;
                t
            });
    Ok(ProblemInstance {
        name: "top-eig".into(),
        manifold,
        objective,
        optimum_oracle: Some(oracle),
        seed,
    })
}

pub fn make_top_eigenvalue(r: usize, seed: u64) -> Result<ProblemInstance> {
    if r < 2 {
        return Err(Error::Domain("top eigenvalue problem needs r >= 2".into()));
    }
    let a = sampling::gaussian_symmetric(r, &mut sampling::rng(seed));
    top_eigenvalue_from_matrix(a, seed)
}

/// Minimize f(X) = -Tr(XᵀAX)/2 over Grassmann(r, t); the optimum is minus
/// half the sum of the t largest eigenvalues of A.
pub fn dominant_subspace_from_matrix(
    a: DMatrix<f64>,
    t: usize,
    seed: u64,
) -> Result<ProblemInstance> {
    let r = a.nrows();
    if a.ncols() != r {
        return Err(Error::Dimension("matrix must be square".into()));
    }
    let manifold = Manifold::grassmann(r, t)?;
    let eig = numkernel::sym_eig(&a)?;
    let top_sum: f64 = (r - t..r).map(|i| eig.eigenvalues[i]).sum();
    let oracle = -0.5 * top_sum;

    let a_f = a.clone();
    let a_g = a.clone();
    let a_h = a.clone();
    let m_g = manifold.clone();
    let m_h = manifold.clone();
    let objective =
        Objective::new(move |p: &Point| -0.5 * (p.coords.transpose() * &a_f * &p.coords).trace())
            .with_gradient(move |p: &Point| {
                let w = &a_g * &p.coords * (-1.0);
                m_g.project_tangent(p, &w).expect("ambient shape fixed")
            })
            .with_hessian(move |p: &Point, v: &TangentVector| {
                // Hess[V] = -P_X(AV) + V (XᵀAX) on the Grassmann horizontal space
                let av = &a_h * &v.coords;
                let mut t = m_h
                    .project_tangent(p, &(-&av))
                    .expect("ambient shape fixed");
                t.coords += &v.coords * (p.coords.transpose() * &a_h * &p.coords);
                t
            });
    Ok(ProblemInstance {
        name: "subspace".into(),
        manifold,
        objective,
        optimum_oracle: Some(oracle),
        seed,
    })
}

pub fn make_dominant_subspace(r: usize, t: usize, seed: u64) -> Result<ProblemInstance> {
    if t >= r || t < 1 {
        return Err(Error::Domain(format!(
            "dominant subspace needs r > t >= 1, got r = {r}, t = {t}"
        )));
    }
    let a = sampling::gaussian_symmetric(r, &mut sampling::rng(seed));
    dominant_subspace_from_matrix(a, t, seed)
}

/// Minimize f(X) = Tr(XᵀAX)/2 over the oblique manifold Ob(r, t). The
/// problem is nonconvex with several local minima, so no optimum oracle.
pub fn elliptope_from_matrix(a: DMatrix<f64>, t: usize, seed: u64) -> Result<ProblemInstance> {
    let r = a.nrows();
    if a.ncols() != r {
        return Err(Error::Dimension("matrix must be square".into()));
    }
    let manifold = Manifold::oblique(r, t)?;

    let a_f = a.clone();
    let a_g = a.clone();
    let a_h = a.clone();
    let m_g = manifold.clone();
    let objective =
        Objective::new(move |p: &Point| 0.5 * (p.coords.transpose() * &a_f * &p.coords).trace())
            .with_gradient(move |p: &Point| {
                let w = &a_g * &p.coords;
                m_g.project_tangent(p, &w).expect("ambient shape fixed")
            })
            .with_hessian(move |p: &Point, v: &TangentVector| {
                // rowwise sphere Hessian: P_xi((AV)_i) - ((AX)_i . x_i) v_i
                let av = &a_h * &v.coords;
                let ax = &a_h * &p.coords;
                let mut out = DMatrix::zeros(av.nrows(), av.ncols());
                for i in 0..av.nrows() {
                    let xi = p.coords.row(i);
                    let vi = v.coords.row(i);
                    let avi = av.row(i);
                    let axi = ax.row(i);
                    let proj = avi - xi * xi.dot(&avi);
                    out.row_mut(i).copy_from(&(proj - vi * axi.dot(&xi)));
                }
                TangentVector {
                    base: p.clone(),
                    coords: out,
                }
            });
    Ok(ProblemInstance {
        name: "elliptope".into(),
        manifold,
        objective,
        optimum_oracle: None,
        seed,
    })
}

pub fn make_elliptope(r: usize, t: usize, seed: u64) -> Result<ProblemInstance> {
    if r < 2 || t < 2 {
        return Err(Error::Domain(format!(
            "elliptope needs r >= 2 and t >= 2, got r = {r}, t = {t}"
        )));
    }
    let a = sampling::gaussian_symmetric(r, &mut sampling::rng(seed));
    elliptope_from_matrix(a, t, seed)
}

/// Minimize f(U, V) = -Tr(UᵀAVN) over St(r, t) x St(s, t) with the weight
/// N = diag(t, t-1, ..., 1); the optimum is minus the weighted sum of the t
/// largest singular values of A.
pub fn truncated_svd_from_matrix(a: DMatrix<f64>, t: usize, seed: u64) -> Result<ProblemInstance> {
    let (r, s) = (a.nrows(), a.ncols());
    if t < 1 || r < t || s < t {
        return Err(Error::Domain(format!(
            "truncated SVD needs r, s >= t >= 1, got r = {r}, s = {s}, t = {t}"
        )));
    }
    let manifold = Manifold::product(vec![Manifold::stiefel(r, t)?, Manifold::stiefel(s, t)?])?;
    let n_weights = DMatrix::from_diagonal(&DVector::from_fn(t, |i, _| (t - i) as f64));
    let (_, svals, _) = numkernel::svd_thin(&a)?;
    let oracle = -(0..t).map(|i| (t - i) as f64 * svals[i]).sum::<f64>();

    // diagonal blocks of the product embedding
    let split = move |coords: &DMatrix<f64>| -> (DMatrix<f64>, DMatrix<f64>) {
        (
            coords.view((0, 0), (r, t)).into_owned(),
            coords.view((r, t), (s, t)).into_owned(),
        )
    };
    let join = move |u: &DMatrix<f64>, v: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(r + s, 2 * t);
        out.view_mut((0, 0), (r, t)).copy_from(u);
        out.view_mut((r, t), (s, t)).copy_from(v);
        out
    };

    let a_f = a.clone();
    let n_f = n_weights.clone();
    let a_g = a.clone();
    let n_g = n_weights.clone();
    let a_h = a.clone();
    let n_h = n_weights.clone();
    let m_g = manifold.clone();
    let m_h = manifold.clone();
    let objective = Objective::new(move |p: &Point| {
        let (u, v) = split(&p.coords);
        -(u.transpose() * &a_f * v * &n_f).trace()
    })
    .with_gradient(move |p: &Point| {
        let (u, v) = split(&p.coords);
        let gu = -(&a_g * &v * &n_g);
        let gv = -(a_g.transpose() * &u * &n_g);
        let w = join(&gu, &gv);
        m_g.project_tangent(p, &w).expect("ambient shape fixed")
    })
    .with_hessian(move |p: &Point, w: &TangentVector| {
        // per Stiefel block: P_X(eucl_hess - W sym(Xᵀ eucl_grad))
        let (u, v) = split(&p.coords);
        let (wu, wv) = split(&w.coords);
        let gu = -(&a_h * &v * &n_h);
        let gv = -(a_h.transpose() * &u * &n_h);
        let hu = -(&a_h * &wv * &n_h);
        let hv = -(a_h.transpose() * &wu * &n_h);
        let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
        let cu = hu - &wu * sym(u.transpose() * gu);
        let cv = hv - &wv * sym(v.transpose() * gv);
        let amb = join(&cu, &cv);
        m_h.project_tangent(p, &amb).expect("ambient shape fixed")
    });
    Ok(ProblemInstance {
        name: "tsvd".into(),
        manifold,
        objective,
        optimum_oracle: Some(oracle),
        seed,
    })
}

pub fn make_truncated_svd(r: usize, s: usize, t: usize, seed: u64) -> Result<ProblemInstance> {
    let a = sampling::gaussian_matrix(r, s, &mut sampling::rng(seed));
    truncated_svd_from_matrix(a, t, seed)
}

fn swish(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// One affine-plus-swish layer.
#[derive(Clone)]
pub struct SwishLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl SwishLayer {
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        (&self.weights * x + &self.bias).map(swish)
    }
}

/// Minimize the composite f(x) = ‖L3(L2(L1(x)))‖ / r4 over the sphere,
/// where each layer applies swish componentwise after an affine map. No
/// analytic derivatives are supplied.
pub fn swish_composite_from_layers(
    layers: Vec<SwishLayer>,
    r1: usize,
    seed: u64,
) -> Result<ProblemInstance> {
    if layers.is_empty() {
        return Err(Error::Domain("composite needs at least one layer".into()));
    }
    let mut dim = r1;
    for (i, l) in layers.iter().enumerate() {
        if l.weights.ncols() != dim || l.bias.len() != l.weights.nrows() {
            return Err(Error::Dimension(format!(
                "layer {i} expects input dimension {dim}, got weights {}x{} with bias {}",
                l.weights.nrows(),
                l.weights.ncols(),
                l.bias.len()
            )));
        }
        dim = l.weights.nrows();
    }
    let out_dim = dim as f64;
    let manifold = Manifold::sphere(r1)?;
    let objective = Objective::new(move |p: &Point| {
        let mut x = p.coords.column(0).into_owned();
        for l in &layers {
            x = l.apply(&x);
        }
        x.norm() / out_dim
    });
    Ok(ProblemInstance {
        name: "swish".into(),
        manifold,
        objective,
        optimum_oracle: None,
        seed,
    })
}

pub fn make_swish_composite(
    dims: (usize, usize, usize, usize),
    seed: u64,
) -> Result<ProblemInstance> {
    let (r1, r2, r3, r4) = dims;
    if r1 < 2 || r2 < 1 || r3 < 1 || r4 < 1 {
        return Err(Error::Domain(format!(
            "composite needs r1 >= 2, got {dims:?}"
        )));
    }
    let mut rng = sampling::rng(seed);
    let mut layers = Vec::new();
    for (rows, cols) in [(r2, r1), (r3, r2), (r4, r3)] {
        let weights = sampling::gaussian_matrix(rows, cols, &mut rng);
        let bias = sampling::gaussian_matrix(rows, 1, &mut rng)
            .column(0)
            .into_owned();
        layers.push(SwishLayer { weights, bias });
    }
    swish_composite_from_layers(layers, r1, seed)
}
