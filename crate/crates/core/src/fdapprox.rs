//! Derivative surrogates in tangent-basis coordinates: the trial step size,
//! a central-difference gradient of the pullback, and three Hessian
//! approximations (pure pullback differences, exp/transport differences, and
//! forward differences of transported gradients).
//!
//! All routines return coordinates relative to the supplied orthonormal
//! basis, so the subproblem downstream is a flat-space problem. Evaluation
//! counts are exact and auditable through the objective's counters.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifolds::{Manifold, Point, TangentBasis, TangentVector};

/// Smallest allowed difference step; roughly the cube root of machine
/// epsilon, below which differencing is pure rounding noise.
pub const H_FLOOR: f64 = 6.0e-6;
/// Largest allowed difference step.
pub const H_CEIL: f64 = 1e3;

type ValueFn = Box<dyn Fn(&Point) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&Point) -> TangentVector + Send + Sync>;
type HessFn = Box<dyn Fn(&Point, &TangentVector) -> TangentVector + Send + Sync>;

/// A black-box objective, optionally with analytic derivatives.
///
/// `f` must be pure and deterministic; every call bumps the evaluation
/// counter, which the derivative routines use for accounting.
pub struct Objective {
    f: ValueFn,
    exact_grad: Option<GradFn>,
    exact_hess: Option<HessFn>,
    f_count: AtomicU64,
    grad_count: AtomicU64,
}

impl Objective {
    pub fn new(f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Objective {
            f: Box::new(f),
            exact_grad: None,
            exact_hess: None,
            f_count: AtomicU64::new(0),
            grad_count: AtomicU64::new(0),
        }
    }

    pub fn with_gradient(
        mut self,
        g: impl Fn(&Point) -> TangentVector + Send + Sync + 'static,
    ) -> Self {
        self.exact_grad = Some(Box::new(g));
        self
    }

    pub fn with_hessian(
        mut self,
        h: impl Fn(&Point, &TangentVector) -> TangentVector + Send + Sync + 'static,
    ) -> Self {
        self.exact_hess = Some(Box::new(h));
        self
    }

    pub fn has_exact_grad(&self) -> bool {
        self.exact_grad.is_some()
    }

    pub fn has_exact_hess(&self) -> bool {
        self.exact_hess.is_some()
    }

    /// Evaluate the objective, counting the call.
    pub fn eval(&self, p: &Point) -> f64 {
        self.f_count.fetch_add(1, Ordering::Relaxed);
        (self.f)(p)
    }

    /// Evaluate and reject non-finite values.
    pub fn eval_checked(&self, p: &Point) -> Result<f64> {
        let v = self.eval(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation {
                value: v,
                manifold: p.manifold.to_string(),
                head: p.coords.iter().take(4).copied().collect(),
            })
        }
    }

    /// Analytic Riemannian gradient; errors when not supplied.
    pub fn grad(&self, p: &Point) -> Result<TangentVector> {
        let g = self
            .exact_grad
            .as_ref()
            .ok_or_else(|| Error::Unsupported("objective has no analytic gradient".into()))?;
        self.grad_count.fetch_add(1, Ordering::Relaxed);
        Ok(g(p))
    }

    /// Analytic Riemannian Hessian applied to a tangent vector.
    pub fn hess(&self, p: &Point, v: &TangentVector) -> Result<TangentVector> {
        let h = self
            .exact_hess
            .as_ref()
            .ok_or_else(|| Error::Unsupported("objective has no analytic Hessian".into()))?;
        Ok(h(p, v))
    }

    pub fn f_evals(&self) -> u64 {
        self.f_count.load(Ordering::Relaxed)
    }

    pub fn grad_evals(&self) -> u64 {
        self.grad_count.load(Ordering::Relaxed)
    }
}

/// One inner-loop trial's derivative surrogates.
#[derive(Debug, Clone)]
pub struct TrialApproximation {
    pub alpha: u32,
    pub h: f64,
    pub g: DVector<f64>,
    pub b: DMatrix<f64>,
    pub f_evals_used: u64,
    pub grad_evals_used: u64,
    pub h_was_clamped: bool,
}

/// Difference step for trial (k, α): previous step length divided by the
/// trial's regularization weight, clamped to [`H_FLOOR`, `H_CEIL`].
pub fn fd_step(v_prev_norm: f64, sigma_k: f64, alpha: u32) -> Result<(f64, bool)> {
    if !sigma_k.is_finite() || sigma_k <= 0.0 {
        return Err(Error::Domain(format!(
            "regularization weight must be positive, got {sigma_k}"
        )));
    }
    if !v_prev_norm.is_finite() || v_prev_norm < 0.0 {
        return Err(Error::Domain(format!(
            "previous step norm must be nonnegative, got {v_prev_norm}"
        )));
    }
    let raw = v_prev_norm / (2f64.powi(alpha as i32 - 1) * sigma_k);
    let h = raw.clamp(H_FLOOR, H_CEIL);
    Ok((h, h != raw))
}

/// Pullback value f(R_p(v)) for an ambient tangent matrix.
fn eval_pullback(
    obj: &Objective,
    manifold: &Manifold,
    p: &Point,
    v_amb: &DMatrix<f64>,
) -> Result<f64> {
    let v = TangentVector {
        base: p.clone(),
        coords: v_amb.clone(),
    };
    let q = manifold.retract(p, &v)?;
    obj.eval_checked(&q)
}

fn check_h(h: f64) -> Result<()> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::Domain(format!(
            "difference step must be positive, got {h}"
        )));
    }
    Ok(())
}

/// Central-difference gradient of the pullback: coordinate i is
/// [f(R_p(h e_i)) - f(R_p(-h e_i))] / (2h). Costs exactly 2n evaluations.
pub fn fd_gradient(
    obj: &Objective,
    p: &Point,
    basis: &TangentBasis,
    h: f64,
) -> Result<DVector<f64>> {
    check_h(h)?;
    let manifold = &p.manifold;
    let n = basis.dim();
    let mut g = DVector::zeros(n);
    for i in 0..n {
        let e = &basis.vectors[i].coords;
        let plus = eval_pullback(obj, manifold, p, &(e * h))?;
        let minus = eval_pullback(obj, manifold, p, &(e * (-h)))?;
        g[i] = (plus - minus) / (2.0 * h);
    }
    Ok(g)
}

/// Hessian approximation from pullback values only (needs a second-order
/// retraction): A_ij = [f̂(h e_i + h e_j) - f̂(h e_i) - f̂(h e_j) + f̂(0)]/h²
/// with the diagonal using f̂(2h e_i). The caller supplies f̂(0) = f(p).
/// Costs exactly n(n-1)/2 + 2n new evaluations.
pub fn fd_hessian_pullback(
    obj: &Objective,
    p: &Point,
    basis: &TangentBasis,
    h: f64,
    f_p: f64,
) -> Result<DMatrix<f64>> {
    check_h(h)?;
    let manifold = &p.manifold;
    if !manifold.capabilities().retraction_is_second_order {
        return Err(Error::Unsupported(format!(
            "{manifold} has no second-order retraction"
        )));
    }
    let n = basis.dim();
    let h2 = h * h;
    let singles = basis
        .vectors
        .iter()
        .map(|e| eval_pullback(obj, manifold, p, &(&e.coords * h)))
        .collect::<Result<Vec<f64>>>()?;
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let double = eval_pullback(obj, manifold, p, &(&basis.vectors[i].coords * (2.0 * h)))?;
        a[(i, i)] = (double - 2.0 * singles[i] + f_p) / h2;
        for j in (i + 1)..n {
            let sum = &basis.vectors[i].coords * h + &basis.vectors[j].coords * h;
            let cross = eval_pullback(obj, manifold, p, &sum)?;
            let v = (cross - singles[i] - singles[j] + f_p) / h2;
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    Ok(a)
}

/// Hessian approximation through geodesics and parallel transport:
/// A_ij = [f(exp_{q_i}(P_{v_i} v_j)) - f(q_i) - f(q_j) + f(p)]/h² with
/// q_i = exp_p(h e_i), then symmetrized. The caller supplies f(p).
/// Costs exactly n² + n evaluations.
pub fn fd_hessian_transport(
    obj: &Objective,
    p: &Point,
    basis: &TangentBasis,
    h: f64,
    f_p: f64,
) -> Result<DMatrix<f64>> {
    check_h(h)?;
    let manifold = &p.manifold;
    let caps = manifold.capabilities();
    if !caps.has_exp || !caps.has_transport {
        return Err(Error::Unsupported(format!(
            "{manifold} lacks the exponential map or parallel transport"
        )));
    }
    let n = basis.dim();
    let h2 = h * h;
    let mut q = Vec::with_capacity(n);
    let mut fq = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for e in &basis.vectors {
        let vi = TangentVector {
            base: p.clone(),
            coords: &e.coords * h,
        };
        let qi = manifold.exp(p, &vi)?;
        fq.push(obj.eval_checked(&qi)?);
        q.push(qi);
        v.push(vi);
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let carried = manifold.transport(p, &v[i], &v[j])?;
            let far = manifold.exp(&q[i], &carried)?;
            let f_far = obj.eval_checked(&far)?;
            a[(i, j)] = (f_far - fq[i] - fq[j] + f_p) / h2;
        }
    }
    Ok((&a + a.transpose()) * 0.5)
}

/// Hessian approximation from forward differences of transported gradients:
/// A[e_i] = [P_{v_i}⁻¹ grad f(exp_p(v_i)) - grad f(p)] / h, symmetrized.
/// Needs an analytic gradient plus exp and transport. Costs n + 1 gradient
/// evaluations and no objective evaluations.
pub fn fd_hessian_gradcalls(
    obj: &Objective,
    p: &Point,
    basis: &TangentBasis,
    h: f64,
) -> Result<DMatrix<f64>> {
    check_h(h)?;
    if !obj.has_exact_grad() {
        return Err(Error::Unsupported(
            "gradient-difference Hessian needs an analytic gradient".into(),
        ));
    }
    let manifold = &p.manifold;
    let caps = manifold.capabilities();
    if !caps.has_exp || !caps.has_transport {
        return Err(Error::Unsupported(format!(
            "{manifold} lacks the exponential map or parallel transport"
        )));
    }
    let n = basis.dim();
    let grad_p = obj.grad(p)?;
    let gp = basis.to_coordinates(&grad_p);
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let vi = TangentVector {
            base: p.clone(),
            coords: &basis.vectors[i].coords * h,
        };
        let qi = manifold.exp(p, &vi)?;
        let gq = obj.grad(&qi)?;
        let back = manifold.inverse_transport(p, &vi, &gq)?;
        let gi = basis.to_coordinates(&back);
        for j in 0..n {
            a[(j, i)] = (gi[j] - gp[j]) / h;
        }
    }
    Ok((&a + a.transpose()) * 0.5)
}

/// Analytic gradient in basis coordinates.
pub fn exact_gradient_coords(
    obj: &Objective,
    p: &Point,
    basis: &TangentBasis,
) -> Result<DVector<f64>> {
    let g = obj.grad(p)?;
    Ok(basis.to_coordinates(&g))
}

/// Analytic Hessian in basis coordinates, symmetrized against rounding.
pub fn exact_hessian_coords(
    obj: &Objective,
    p: &Point,
    basis: &TangentBasis,
) -> Result<DMatrix<f64>> {
    let n = basis.dim();
    let mut b = DMatrix::zeros(n, n);
    for j in 0..n {
        let hv = obj.hess(p, &basis.vectors[j])?;
        let col = basis.to_coordinates(&hv);
        for i in 0..n {
            b[(i, j)] = col[i];
        }
    }
    Ok((&b + b.transpose()) * 0.5)
}
