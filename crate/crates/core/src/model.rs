//! Cubic model of the pullback in tangent-basis coordinates:
//! m(v) = f0 + gᵀv + ½ vᵀBv + (σ_cub/6)‖v‖³.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numkernel;

/// The regularized quadratic model minimized in every trial. `sigma_cub` is
/// the full cubic weight (the trial's doubling factor already folded in).
#[derive(Debug, Clone)]
pub struct CubicModel {
    pub f0: f64,
    pub g: DVector<f64>,
    pub b: DMatrix<f64>,
    pub sigma_cub: f64,
}

impl CubicModel {
    /// Validates shapes, finiteness, symmetry of `b` (within 1e-12 relative)
    /// and positivity of `sigma_cub`.
    pub fn new(f0: f64, g: DVector<f64>, b: DMatrix<f64>, sigma_cub: f64) -> Result<Self> {
        let n = g.len();
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::Dimension(format!(
                "model matrix must be {n}x{n}, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if !f0.is_finite()
            || !sigma_cub.is_finite()
            || g.iter().any(|x| !x.is_finite())
            || b.iter().any(|x| !x.is_finite())
        {
            return Err(Error::Domain(
                "model data contains non-finite entries".into(),
            ));
        }
        if sigma_cub <= 0.0 {
            return Err(Error::Domain(format!(
                "cubic weight must be positive, got {sigma_cub}"
            )));
        }
        let scale = numkernel::max_abs(&b);
        let asym = numkernel::max_abs(&(&b - b.transpose()));
        if asym > 1e-12 * (1.0 + scale) {
            return Err(Error::Domain(format!(
                "model matrix is not symmetric: max|B - Bt| = {asym:.3e}"
            )));
        }
        Ok(CubicModel {
            f0,
            g,
            b,
            sigma_cub,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "model argument must have length {}, got {}",
                self.dim(),
                v.len()
            )));
        }
        Ok(())
    }

    /// m(v) = f0 + gᵀv + ½ vᵀBv + (σ_cub/6)‖v‖³
    pub fn eval(&self, v: &DVector<f64>) -> Result<f64> {
        self.check_len(v)?;
        let quad = 0.5 * (&self.b * v).dot(v);
        Ok(self.f0 + self.g.dot(v) + quad + self.sigma_cub / 6.0 * v.norm().powi(3))
    }

    /// ∇m(v) = g + Bv + (σ_cub/2)‖v‖ v
    pub fn grad(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(v)?;
        Ok(&self.g + &self.b * v + v * (self.sigma_cub / 2.0 * v.norm()))
    }
}
