//! Outer loop of the adaptive cubic-regularization solver: per-iteration
//! trial construction over the doubling exponent α, the nonmonotone
//! acceptance test, the regularization update σ_{k+1} = 2^{α_k - 1} σ_k,
//! stopping rules and full history capture.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::fdapprox::{self, Objective, TrialApproximation};
use crate::manifolds::{Manifold, Point};
use crate::model::CubicModel;
use crate::numkernel;
use crate::subsolver;

/// How the model gradient is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientVariant {
    /// Central differences of the pullback.
    Fd,
    /// Analytic Riemannian gradient.
    Exact,
}

/// How the model Hessian is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianVariant {
    /// Second differences of the pullback (needs a second-order retraction).
    Pullback,
    /// Differences through geodesics and parallel transport.
    Transport,
    /// Forward differences of transported analytic gradients.
    GradCalls,
    /// Analytic Riemannian Hessian.
    Exact,
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    FirstOrderConverged,
    SecondOrderConverged,
    MaxIters,
    StalledStep,
    SubsolverFailure,
    AlphaOverflow,
}

impl RunStatus {
    pub fn converged(self) -> bool {
        matches!(
            self,
            RunStatus::FirstOrderConverged | RunStatus::SecondOrderConverged
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::FirstOrderConverged => "FirstOrderConverged",
            RunStatus::SecondOrderConverged => "SecondOrderConverged",
            RunStatus::MaxIters => "MaxIters",
            RunStatus::StalledStep => "StalledStep",
            RunStatus::SubsolverFailure => "SubsolverFailure",
            RunStatus::AlphaOverflow => "AlphaOverflow",
        }
    }
}

/// Solver parameters. Defaults: σ₁ = 1, θ = 1, first-order tolerance 1e-8,
/// pullback Hessian with difference gradients, seed 2024.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub sigma1: f64,
    pub theta: f64,
    pub eps_g: f64,
    pub eps_h: Option<f64>,
    pub max_outer_iters: usize,
    pub max_alpha: u32,
    pub second_order_mode: bool,
    pub hessian_variant: HessianVariant,
    pub gradient_variant: GradientVariant,
    pub v0_norm: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            sigma1: 1.0,
            theta: 1.0,
            eps_g: 1e-8,
            eps_h: None,
            max_outer_iters: 1000,
            max_alpha: 60,
            second_order_mode: false,
            hessian_variant: HessianVariant::Pullback,
            gradient_variant: GradientVariant::Fd,
            v0_norm: 1.0,
            seed: 2024,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.sigma1) {
            return Err(Error::Config(format!(
                "sigma1 must be positive, got {}",
                self.sigma1
            )));
        }
        if !self.theta.is_finite() || self.theta < 0.0 {
            return Err(Error::Config(format!(
                "theta must be nonnegative, got {}",
                self.theta
            )));
        }
        if !positive(self.eps_g) {
            return Err(Error::Config(format!(
                "eps_g must be positive, got {}",
                self.eps_g
            )));
        }
        if let Some(eh) = self.eps_h {
            if !positive(eh) {
                return Err(Error::Config(format!("eps_h must be positive, got {eh}")));
            }
        }
        if self.second_order_mode && self.eps_h.is_none() {
            return Err(Error::Config("second-order mode needs eps_h".into()));
        }
        if self.max_alpha < 1 {
            return Err(Error::Config("max_alpha must be at least 1".into()));
        }
        if !positive(self.v0_norm) {
            return Err(Error::Config(format!(
                "v0_norm must be positive, got {}",
                self.v0_norm
            )));
        }
        Ok(())
    }
}

/// One row of the run history, describing iterate k: the objective there,
/// the accepted trial's surrogates and step, and cumulative evaluation cost.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRecord {
    pub k: usize,
    pub f_val: f64,
    pub g_norm: f64,
    pub v_norm: f64,
    pub v_prev_norm: f64,
    pub sigma_k: f64,
    pub alpha_k: u32,
    pub h: f64,
    pub h_clamped: bool,
    pub f_evals_cum: u64,
    pub accepted_trial_count: u32,
    pub lambda_min_b: Option<f64>,
}

/// Outcome of a full run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub status: RunStatus,
    pub final_point: Point,
    /// Objective value at the final point (tracked, never recomputed).
    pub final_f: f64,
    pub history: Vec<IterateRecord>,
    pub wall_time: Duration,
}

impl RunResult {
    /// Index of the last iterate reached.
    pub fn iters(&self) -> usize {
        self.history.last().map_or(0, |r| r.k)
    }

    pub fn final_g_norm(&self) -> f64 {
        self.history.last().map_or(f64::NAN, |r| r.g_norm)
    }
}

/// Smallest α >= 0 with 2^{α-1} σ_k >= σ₁.
pub fn initial_alpha(sigma_k: f64, sigma1: f64) -> u32 {
    let mut alpha = 0u32;
    while 2f64.powi(alpha as i32 - 1) * sigma_k < sigma1 {
        alpha += 1;
        if alpha >= 4096 {
            break;
        }
    }
    alpha
}

/// Relative rounding slack of the acceptance test. Near a minimizer the
/// true per-step decrease drops below the resolution of f itself; without
/// this allowance the comparison decays into noise-driven rejections that
/// blow up the regularization weight. Kept an order of magnitude inside
/// the 1e-12 budget the recorded-history invariant grants.
pub const ACCEPT_SLACK: f64 = 1e-13;

/// Nonmonotone acceptance test:
/// f_trial <= f_k + (σ_k/24)‖v_{k-1}‖³ - (2^α σ_k/24)‖v‖³,
/// compared with machine-rounding slack `ACCEPT_SLACK * (1 + |f_k|)`.
pub fn accept_test(
    f_trial: f64,
    f_k: f64,
    sigma_k: f64,
    alpha: u32,
    v_prev_norm: f64,
    v_norm: f64,
) -> bool {
    let allow = sigma_k / 24.0 * v_prev_norm.powi(3);
    let demand = 2f64.powi(alpha as i32) * sigma_k / 24.0 * v_norm.powi(3);
    f_trial <= f_k + allow - demand + ACCEPT_SLACK * (1.0 + f_k.abs())
}

/// Regularization update σ_{k+1} = 2^{α_k - 1} σ_k.
pub fn update_sigma(sigma_k: f64, alpha_k: u32) -> f64 {
    2f64.powi(alpha_k as i32 - 1) * sigma_k
}

/// Mutable data carried across outer iterations.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub k: usize,
    pub p: Point,
    pub f_p: f64,
    pub v_prev_norm: f64,
    pub sigma: f64,
}

/// What one outer iteration produced.
#[derive(Debug)]
pub enum StepOutcome {
    /// A step was accepted; the state has advanced to iterate k+1.
    Accepted(IterateRecord),
    /// The run ends at this iterate (converged or stalled).
    Terminal {
        record: IterateRecord,
        status: RunStatus,
    },
    /// The iteration could not complete; no record is produced.
    Failed(RunStatus),
}

/// Assemble one trial's surrogates under the configured variants, recording
/// the difference step and the evaluations it cost.
pub fn build_trial(
    state: &SolverState,
    obj: &Objective,
    config: &SolverConfig,
    basis: &crate::manifolds::TangentBasis,
    alpha: u32,
) -> Result<TrialApproximation> {
    let f_before = obj.f_evals();
    let grad_before = obj.grad_evals();
    let (h, h_was_clamped) = fdapprox::fd_step(state.v_prev_norm, state.sigma, alpha)?;
    let g = match config.gradient_variant {
        GradientVariant::Fd => fdapprox::fd_gradient(obj, &state.p, basis, h)?,
        GradientVariant::Exact => fdapprox::exact_gradient_coords(obj, &state.p, basis)?,
    };
    let b = match config.hessian_variant {
        HessianVariant::Pullback => {
            fdapprox::fd_hessian_pullback(obj, &state.p, basis, h, state.f_p)?
        }
        HessianVariant::Transport => {
            fdapprox::fd_hessian_transport(obj, &state.p, basis, h, state.f_p)?
        }
        HessianVariant::GradCalls => fdapprox::fd_hessian_gradcalls(obj, &state.p, basis, h)?,
        HessianVariant::Exact => fdapprox::exact_hessian_coords(obj, &state.p, basis)?,
    };
    Ok(TrialApproximation {
        alpha,
        h,
        g,
        b,
        f_evals_used: obj.f_evals() - f_before,
        grad_evals_used: obj.grad_evals() - grad_before,
        h_was_clamped,
    })
}

/// Run one outer iteration: loop over α trials until a step is accepted,
/// the iterate is declared stationary, or α overflows.
///
/// Stationarity is checked on the first trial's surrogate gradient, before
/// any subproblem is solved; second-order mode additionally requires
/// λ_min(B) >= -eps_h to stop, and re-raises α whenever the subproblem
/// solution violates the second-order progress bound.
pub fn outer_step(
    state: &mut SolverState,
    obj: &Objective,
    manifold: &Manifold,
    config: &SolverConfig,
) -> Result<StepOutcome> {
    let basis = manifold.tangent_basis(&state.p)?;
    let alpha0 = initial_alpha(state.sigma, config.sigma1);
    let mut alpha = alpha0;
    let mut trials = 0u32;

    loop {
        if alpha > config.max_alpha {
            return Ok(StepOutcome::Failed(RunStatus::AlphaOverflow));
        }
        trials += 1;
        let trial = build_trial(state, obj, config, &basis, alpha)?;
        let (h, h_clamped) = (trial.h, trial.h_was_clamped);
        let g_norm = trial.g.norm();
        let lambda_min_b = if config.second_order_mode {
            Some(numkernel::sym_eig(&trial.b)?.lambda_min())
        } else {
            None
        };

        if alpha == alpha0 && g_norm <= config.eps_g {
            let curvature_ok = match (config.second_order_mode, lambda_min_b) {
                (true, Some(lmin)) => lmin >= -config.eps_h.expect("validated"),
                _ => true,
            };
            if curvature_ok {
                let record = IterateRecord {
                    k: state.k,
                    f_val: state.f_p,
                    g_norm,
                    v_norm: 0.0,
                    v_prev_norm: state.v_prev_norm,
                    sigma_k: state.sigma,
                    alpha_k: alpha,
                    h,
                    h_clamped,
                    f_evals_cum: obj.f_evals(),
                    accepted_trial_count: trials,
                    lambda_min_b,
                };
                let status = if config.second_order_mode {
                    RunStatus::SecondOrderConverged
                } else {
                    RunStatus::FirstOrderConverged
                };
                return Ok(StepOutcome::Terminal { record, status });
            }
        }

        let sigma_cub = 2f64.powi(alpha as i32) * state.sigma;
        let model = CubicModel::new(state.f_p, trial.g, trial.b, sigma_cub)?;
        let sol = match subsolver::solve_cubic(&model, config.theta) {
            Ok(s) => s,
            Err(Error::SubsolverFailure { .. }) => {
                return Ok(StepOutcome::Failed(RunStatus::SubsolverFailure))
            }
            Err(e) => return Err(e),
        };
        let v_norm = sol.v.norm();

        if config.second_order_mode {
            let lmin = lambda_min_b.expect("computed in second-order mode");
            let bound = 2f64.powi(alpha as i32 - 1) * state.sigma * v_norm
                + config.theta * state.v_prev_norm;
            if lmin < -bound {
                alpha += 1;
                continue;
            }
        }

        let v_amb = basis.from_coordinates(&sol.v);
        let q = manifold.retract(&state.p, &v_amb)?;
        let f_trial = obj.eval_checked(&q)?;

        if accept_test(
            f_trial,
            state.f_p,
            state.sigma,
            alpha,
            state.v_prev_norm,
            v_norm,
        ) {
            let record = IterateRecord {
                k: state.k,
                f_val: state.f_p,
                g_norm,
                v_norm,
                v_prev_norm: state.v_prev_norm,
                sigma_k: state.sigma,
                alpha_k: alpha,
                h,
                h_clamped,
                f_evals_cum: obj.f_evals(),
                accepted_trial_count: trials,
                lambda_min_b,
            };
            state.p = q;
            state.f_p = f_trial;
            state.sigma = update_sigma(state.sigma, alpha);
            state.v_prev_norm = v_norm;
            state.k += 1;
            if v_norm < 1e-14 {
                // Step length below differencing resolution: the next h
                // would be fully clamped, so stop with the history intact.
                return Ok(StepOutcome::Terminal {
                    record,
                    status: RunStatus::StalledStep,
                });
            }
            return Ok(StepOutcome::Accepted(record));
        }
        alpha += 1;
    }
}

fn preflight(obj: &Objective, manifold: &Manifold, config: &SolverConfig) -> Result<()> {
    config.validate()?;
    let caps = manifold.capabilities();
    match config.hessian_variant {
        HessianVariant::Pullback => {
            if !caps.retraction_is_second_order {
                return Err(Error::Unsupported(format!(
                    "pullback Hessian needs a second-order retraction on {manifold}"
                )));
            }
        }
        HessianVariant::Transport => {
            if !caps.has_exp || !caps.has_transport {
                return Err(Error::Unsupported(format!(
                    "transport Hessian needs exp and transport on {manifold}"
                )));
            }
        }
        HessianVariant::GradCalls => {
            if !caps.has_exp || !caps.has_transport {
                return Err(Error::Unsupported(format!(
                    "gradient-difference Hessian needs exp and transport on {manifold}"
                )));
            }
            if !obj.has_exact_grad() {
                return Err(Error::Unsupported(
                    "gradient-difference Hessian needs an analytic gradient".into(),
                ));
            }
        }
        HessianVariant::Exact => {
            if !obj.has_exact_grad() || !obj.has_exact_hess() {
                return Err(Error::Unsupported(
                    "exact mode needs analytic gradient and Hessian".into(),
                ));
            }
        }
    }
    if config.gradient_variant == GradientVariant::Exact && !obj.has_exact_grad() {
        return Err(Error::Unsupported(
            "exact gradient variant needs an analytic gradient".into(),
        ));
    }
    Ok(())
}

/// Minimize the objective from `p0` (or a seeded random point), recording
/// every accepted iterate. The initial virtual step has norm `v0_norm`.
pub fn run(
    obj: &Objective,
    manifold: &Manifold,
    config: &SolverConfig,
    p0: Option<Point>,
) -> Result<RunResult> {
    preflight(obj, manifold, config)?;
    let start = Instant::now();
    let p0 = match p0 {
        Some(p) => manifold.point(p.coords)?,
        None => manifold.random_point(config.seed),
    };
    let f_p = obj.eval_checked(&p0)?;
    let mut state = SolverState {
        k: 1,
        p: p0,
        f_p,
        v_prev_norm: config.v0_norm,
        sigma: config.sigma1,
    };
    let mut history = Vec::new();
    let status = loop {
        match outer_step(&mut state, obj, manifold, config)? {
            StepOutcome::Accepted(record) => {
                history.push(record);
                if state.k > config.max_outer_iters {
                    break RunStatus::MaxIters;
                }
            }
            StepOutcome::Terminal { record, status } => {
                history.push(record);
                break status;
            }
            StepOutcome::Failed(status) => break status,
        }
    };
    Ok(RunResult {
        status,
        final_point: state.p,
        final_f: state.f_p,
        history,
        wall_time: start.elapsed(),
    })
}

/// Check the recorded history against the invariants every run must
/// satisfy: σ_k never below σ₁, the acceptance inequality at each accepted
/// step, the telescoped step-length bound, and (in second-order mode) the
/// recorded progress bound. Returns a description of the first violation.
pub fn audit_history(result: &RunResult, config: &SolverConfig) -> std::result::Result<(), String> {
    let hist = &result.history;
    if hist.is_empty() {
        return Err("empty history".into());
    }
    for (i, r) in hist.iter().enumerate() {
        if r.k != hist[0].k + i {
            return Err(format!("iterate indices not consecutive at position {i}"));
        }
        if r.sigma_k < config.sigma1 {
            return Err(format!(
                "sigma_{} = {} fell below sigma1 = {}",
                r.k, r.sigma_k, config.sigma1
            ));
        }
    }
    // acceptance inequality between consecutive iterates
    for pair in hist.windows(2) {
        let (r, rn) = (&pair[0], &pair[1]);
        let bound = r.f_val + r.sigma_k / 24.0 * r.v_prev_norm.powi(3)
            - 2f64.powi(r.alpha_k as i32) * r.sigma_k / 24.0 * r.v_norm.powi(3)
            + 1e-12 * (1.0 + r.f_val.abs());
        if rn.f_val > bound {
            return Err(format!(
                "acceptance inequality violated at k = {}: f_next = {} > {}",
                r.k, rn.f_val, bound
            ));
        }
    }
    // telescoped bound over accepted steps; per-step acceptance slack can
    // accumulate across the run, so it enters the allowance once per record
    let f_first = hist[0].f_val;
    let f_last = result.final_f;
    let f_scale = hist.iter().map(|r| r.f_val.abs()).fold(1.0, f64::max);
    let sum_cubes: f64 = hist.iter().map(|r| r.v_norm.powi(3)).sum();
    let bound = 24.0 * (f_first - f_last) / config.sigma1
        + config.v0_norm.powi(3)
        + 24.0 * hist.len() as f64 * ACCEPT_SLACK * (1.0 + f_scale) / config.sigma1
        + 1e-10 * (1.0 + f_first.abs());
    if sum_cubes > bound {
        return Err(format!(
            "telescoped step bound violated: sum of cubes {sum_cubes} > {bound}"
        ));
    }
    if config.second_order_mode {
        for r in hist {
            let lmin = r
                .lambda_min_b
                .ok_or_else(|| format!("missing lambda_min at k = {}", r.k))?;
            if r.v_norm > 0.0 {
                let bound = 2f64.powi(r.alpha_k as i32 - 1) * r.sigma_k * r.v_norm
                    + config.theta * r.v_prev_norm;
                if lmin < -bound - 1e-12 {
                    return Err(format!(
                        "second-order progress bound violated at k = {}: {lmin} < -{bound}",
                        r.k
                    ));
                }
            }
        }
    }
    if result.status == RunStatus::FirstOrderConverged {
        let last = hist.last().expect("nonempty");
        if last.g_norm > config.eps_g {
            return Err(format!(
                "converged status but final gradient {} exceeds {}",
                last.g_norm, config.eps_g
            ));
        }
    }
    Ok(())
}
