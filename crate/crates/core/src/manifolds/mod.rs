//! Manifold geometry: tangent projection, metric, retraction, exponential
//! map, parallel transport and orthonormal tangent bases for the sphere,
//! oblique, Stiefel and Grassmann manifolds, plus finite products and the
//! flat Euclidean space used in tests.
//!
//! Points and tangent vectors are stored in ambient coordinates. A product
//! manifold embeds its factors as diagonal blocks of one ambient matrix;
//! entries outside the blocks are identically zero.

mod grassmann;
mod oblique;
mod sphere;
mod stiefel;

use std::fmt;

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkernel;
use crate::sampling;

const FEASIBILITY_TOL: f64 = 1e-10;
const TANGENCY_TOL: f64 = 1e-10;
const BASIS_DISCARD_TOL: f64 = 1e-8;

/// Which maps a manifold implements beyond projection and retraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub has_exp: bool,
    pub has_transport: bool,
    pub retraction_is_second_order: bool,
}

/// A supported manifold, identified by kind and ambient sizes.
#[derive(Debug, Clone, PartialEq)]
pub enum Manifold {
    /// Flat R^r with the identity retraction; trivial geometry for tests.
    Euclidean { r: usize },
    /// Unit vectors in R^r.
    Sphere { r: usize },
    /// r x t matrices with unit-norm rows.
    Oblique { r: usize, t: usize },
    /// r x t matrices with orthonormal columns.
    Stiefel { r: usize, t: usize },
    /// t-dimensional subspaces of R^r, orthonormal representatives.
    Grassmann { r: usize, t: usize },
    /// Finite product, factors embedded block-diagonally.
    Product(Vec<Manifold>),
}

/// A point on a manifold, in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub manifold: Manifold,
    pub coords: DMatrix<f64>,
}

/// A tangent vector at `base`, in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub coords: DMatrix<f64>,
}

impl TangentVector {
    /// Riemannian norm (the embedded trace metric).
    pub fn norm(&self) -> f64 {
        self.coords.norm()
    }
}

/// Orthonormal basis of the tangent space at `base`.
#[derive(Debug, Clone)]
pub struct TangentBasis {
    pub base: Point,
    pub vectors: Vec<TangentVector>,
}

impl TangentBasis {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// Coordinates of a tangent vector in this basis.
    pub fn to_coordinates(&self, v: &TangentVector) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_fn(self.vectors.len(), |i, _| {
            self.vectors[i].coords.dot(&v.coords)
        })
    }

    /// Tangent vector with the given basis coordinates.
    pub fn from_coordinates(&self, c: &nalgebra::DVector<f64>) -> TangentVector {
        let mut coords = DMatrix::zeros(self.base.coords.nrows(), self.base.coords.ncols());
        for (i, e) in self.vectors.iter().enumerate() {
            coords += &e.coords * c[i];
        }
        TangentVector {
            base: self.base.clone(),
            coords,
        }
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Manifold::Euclidean { r } => write!(f, "R^{r}"),
            Manifold::Sphere { r } => write!(f, "Sp({r})"),
            Manifold::Oblique { r, t } => write!(f, "Ob({r},{t})"),
            Manifold::Stiefel { r, t } => write!(f, "St({r},{t})"),
            Manifold::Grassmann { r, t } => write!(f, "Gr({r},{t})"),
            Manifold::Product(fs) => {
                for (i, m) in fs.iter().enumerate() {
                    if i > 0 {
                        write!(f, "x")?;
                    }
                    write!(f, "{m}")?;
                }
                Ok(())
            }
        }
    }
}

impl Manifold {
    pub fn euclidean(r: usize) -> Result<Self> {
        if r < 1 {
            return Err(Error::Domain("Euclidean space needs r >= 1".into()));
        }
        Ok(Manifold::Euclidean { r })
    }

    pub fn sphere(r: usize) -> Result<Self> {
        if r < 2 {
            return Err(Error::Domain(
                "Sphere needs ambient dimension r >= 2".into(),
            ));
        }
        Ok(Manifold::Sphere { r })
    }

    pub fn oblique(r: usize, t: usize) -> Result<Self> {
        if r < 1 || t < 2 {
            return Err(Error::Domain(
                "Oblique needs r >= 1 rows in R^t, t >= 2".into(),
            ));
        }
        Ok(Manifold::Oblique { r, t })
    }

    pub fn stiefel(r: usize, t: usize) -> Result<Self> {
        if t < 1 || r < t || r * t <= t * (t + 1) / 2 {
            return Err(Error::Domain(
                "Stiefel needs r >= t >= 1 with positive dimension".into(),
            ));
        }
        Ok(Manifold::Stiefel { r, t })
    }

    pub fn grassmann(r: usize, t: usize) -> Result<Self> {
        if t < 1 || r <= t {
            return Err(Error::Domain("Grassmann needs r > t >= 1".into()));
        }
        Ok(Manifold::Grassmann { r, t })
    }

    pub fn product(factors: Vec<Manifold>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Domain("product needs at least one factor".into()));
        }
        Ok(Manifold::Product(factors))
    }

    /// Dimension of the tangent space.
    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Manifold::Euclidean { r } => *r,
            Manifold::Sphere { r } => r - 1,
            Manifold::Oblique { r, t } => r * (t - 1),
            Manifold::Stiefel { r, t } => r * t - t * (t + 1) / 2,
            Manifold::Grassmann { r, t } => t * (r - t),
            Manifold::Product(fs) => fs.iter().map(Manifold::intrinsic_dim).sum(),
        }
    }

    /// Shape of the ambient coordinate matrix.
    pub fn ambient_shape(&self) -> (usize, usize) {
        match self {
            Manifold::Euclidean { r } | Manifold::Sphere { r } => (*r, 1),
            Manifold::Oblique { r, t }
            | Manifold::Stiefel { r, t }
            | Manifold::Grassmann { r, t } => (*r, *t),
            Manifold::Product(fs) => fs.iter().fold((0, 0), |(r, c), m| {
                let (fr, fc) = m.ambient_shape();
                (r + fr, c + fc)
            }),
        }
    }

    pub fn capabilities(&self) -> Capabilities {
        match self {
            Manifold::Euclidean { .. }
            | Manifold::Sphere { .. }
            | Manifold::Oblique { .. }
            | Manifold::Grassmann { .. } => Capabilities {
                has_exp: true,
                has_transport: true,
                retraction_is_second_order: true,
            },
            // Closed-form parallel transport on Stiefel is not practical;
            // the polar retraction is still second order.
            Manifold::Stiefel { .. } => Capabilities {
                has_exp: false,
                has_transport: false,
                retraction_is_second_order: true,
            },
            Manifold::Product(fs) => {
                let caps: Vec<Capabilities> = fs.iter().map(Manifold::capabilities).collect();
                Capabilities {
                    has_exp: caps.iter().all(|c| c.has_exp),
                    has_transport: caps.iter().all(|c| c.has_transport),
                    retraction_is_second_order: caps.iter().all(|c| c.retraction_is_second_order),
                }
            }
        }
    }

    fn check_shape(&self, m: &DMatrix<f64>, what: &str) -> Result<()> {
        let (r, c) = self.ambient_shape();
        if m.nrows() != r || m.ncols() != c {
            return Err(Error::Dimension(format!(
                "{what} must be {r}x{c} on {self}, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(())
    }

    /// Offsets and sizes of the factor blocks of a product.
    fn blocks(factors: &[Manifold]) -> Vec<(usize, usize, usize, usize)> {
        let mut out = Vec::with_capacity(factors.len());
        let (mut ro, mut co) = (0, 0);
        for m in factors {
            let (r, c) = m.ambient_shape();
            out.push((ro, co, r, c));
            ro += r;
            co += c;
        }
        out
    }

    /// Apply `op` factor by factor on the diagonal blocks of `inputs`,
    /// assembling the block-diagonal result.
    fn zip_blocks<F>(
        factors: &[Manifold],
        shape: (usize, usize),
        inputs: &[&DMatrix<f64>],
        op: F,
    ) -> DMatrix<f64>
    where
        F: Fn(&Manifold, &[DMatrix<f64>]) -> DMatrix<f64>,
    {
        let mut out = DMatrix::zeros(shape.0, shape.1);
        for (m, (ro, co, r, c)) in factors.iter().zip(Self::blocks(factors)) {
            let views: Vec<DMatrix<f64>> = inputs
                .iter()
                .map(|x| x.view((ro, co), (r, c)).into_owned())
                .collect();
            let res = op(m, &views);
            out.view_mut((ro, co), (r, c)).copy_from(&res);
        }
        out
    }

    /// Largest entry of `x` outside the factor blocks (product only).
    fn off_block_residual(factors: &[Manifold], x: &DMatrix<f64>) -> f64 {
        let mut masked = x.clone();
        for (ro, co, r, c) in Self::blocks(factors) {
            masked.view_mut((ro, co), (r, c)).fill(0.0);
        }
        numkernel::max_abs(&masked)
    }

    /// Distance of ambient coordinates from the manifold's constraint set.
    pub fn feasibility_residual(&self, x: &DMatrix<f64>) -> f64 {
        match self {
            Manifold::Euclidean { .. } => 0.0,
            Manifold::Sphere { .. } => sphere::feasibility(x),
            Manifold::Oblique { .. } => oblique::feasibility(x),
            Manifold::Stiefel { .. } => stiefel::feasibility(x),
            Manifold::Grassmann { .. } => grassmann::feasibility(x),
            Manifold::Product(fs) => {
                let blockwise = Self::blocks(fs)
                    .into_iter()
                    .zip(fs)
                    .map(|((ro, co, r, c), m)| {
                        m.feasibility_residual(&x.view((ro, co), (r, c)).into_owned())
                    })
                    .fold(0.0, f64::max);
                blockwise.max(Self::off_block_residual(fs, x))
            }
        }
    }

    /// Distance of ambient coordinates from the tangent space at `x`.
    pub fn tangency_residual(&self, x: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
        match self {
            Manifold::Euclidean { .. } => 0.0,
            Manifold::Sphere { .. } => sphere::tangency(x, v),
            Manifold::Oblique { .. } => oblique::tangency(x, v),
            Manifold::Stiefel { .. } => stiefel::tangency(x, v),
            Manifold::Grassmann { .. } => grassmann::tangency(x, v),
            Manifold::Product(fs) => {
                let blockwise = Self::blocks(fs)
                    .into_iter()
                    .zip(fs)
                    .map(|((ro, co, r, c), m)| {
                        m.tangency_residual(
                            &x.view((ro, co), (r, c)).into_owned(),
                            &v.view((ro, co), (r, c)).into_owned(),
                        )
                    })
                    .fold(0.0, f64::max);
                blockwise.max(Self::off_block_residual(fs, v))
            }
        }
    }

    /// Wrap validated ambient coordinates as a point.
    pub fn point(&self, coords: DMatrix<f64>) -> Result<Point> {
        self.check_shape(&coords, "point coords")?;
        if !coords.iter().all(|e| e.is_finite()) {
            return Err(Error::Domain(
                "point coords contain non-finite entries".into(),
            ));
        }
        let res = self.feasibility_residual(&coords);
        if res > FEASIBILITY_TOL {
            return Err(Error::Domain(format!(
                "coords are not on {self}: feasibility residual {res:.3e}"
            )));
        }
        Ok(Point {
            manifold: self.clone(),
            coords,
        })
    }

    /// Wrap validated ambient coordinates as a tangent vector at `p`.
    pub fn tangent(&self, p: &Point, coords: DMatrix<f64>) -> Result<TangentVector> {
        self.check_shape(&coords, "tangent coords")?;
        let res = self.tangency_residual(&p.coords, &coords);
        if res > TANGENCY_TOL {
            return Err(Error::Domain(format!(
                "coords are not tangent at the given point: residual {res:.3e}"
            )));
        }
        Ok(TangentVector {
            base: p.clone(),
            coords,
        })
    }

    fn project_raw(&self, x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Manifold::Euclidean { .. } => w.clone(),
            Manifold::Sphere { .. } => sphere::project(x, w),
            Manifold::Oblique { .. } => oblique::project(x, w),
            Manifold::Stiefel { .. } => stiefel::project(x, w),
            Manifold::Grassmann { .. } => grassmann::project(x, w),
            Manifold::Product(fs) => Self::zip_blocks(fs, self.ambient_shape(), &[x, w], |m, b| {
                m.project_raw(&b[0], &b[1])
            }),
        }
    }

    fn retract_raw(&self, x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Manifold::Euclidean { .. } => x + v,
            Manifold::Sphere { .. } => sphere::exp(x, v),
            Manifold::Oblique { .. } => oblique::exp(x, v),
            Manifold::Stiefel { .. } => stiefel::retract_polar(x, v),
            Manifold::Grassmann { .. } => grassmann::exp(x, v),
            Manifold::Product(fs) => Self::zip_blocks(fs, self.ambient_shape(), &[x, v], |m, b| {
                m.retract_raw(&b[0], &b[1])
            }),
        }
    }

    fn exp_raw(&self, x: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if !self.capabilities().has_exp {
            return Err(Error::Unsupported(format!("{self} has no exponential map")));
        }
        Ok(match self {
            Manifold::Euclidean { .. } => x + v,
            Manifold::Sphere { .. } => sphere::exp(x, v),
            Manifold::Oblique { .. } => oblique::exp(x, v),
            Manifold::Grassmann { .. } => grassmann::exp(x, v),
            Manifold::Stiefel { .. } => unreachable!("capability checked above"),
            Manifold::Product(fs) => Self::zip_blocks(fs, self.ambient_shape(), &[x, v], |m, b| {
                m.exp_raw(&b[0], &b[1]).expect("factor capability checked")
            }),
        })
    }

    fn transport_raw(
        &self,
        x: &DMatrix<f64>,
        v: &DMatrix<f64>,
        u: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>> {
        if !self.capabilities().has_transport {
            return Err(Error::Unsupported(format!(
                "{self} has no parallel transport"
            )));
        }
        Ok(match self {
            Manifold::Euclidean { .. } => u.clone(),
            Manifold::Sphere { .. } => sphere::transport(x, v, u),
            Manifold::Oblique { .. } => oblique::transport(x, v, u),
            Manifold::Grassmann { .. } => grassmann::transport(x, v, u),
            Manifold::Stiefel { .. } => unreachable!("capability checked above"),
            Manifold::Product(fs) => {
                Self::zip_blocks(fs, self.ambient_shape(), &[x, v, u], |m, b| {
                    m.transport_raw(&b[0], &b[1], &b[2])
                        .expect("factor capability checked")
                })
            }
        })
    }

    /// Velocity of t -> exp_x(t v) at t = 1.
    fn endpoint_velocity_raw(&self, x: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Manifold::Euclidean { .. } => v.clone(),
            Manifold::Sphere { .. } => sphere::geodesic_endpoint_velocity(x, v),
            Manifold::Oblique { .. } => oblique::geodesic_endpoint_velocity(x, v),
            Manifold::Grassmann { .. } => grassmann::geodesic_endpoint_velocity(x, v),
            Manifold::Stiefel { .. } => unreachable!("no transport on Stiefel"),
            Manifold::Product(fs) => Self::zip_blocks(fs, self.ambient_shape(), &[x, v], |m, b| {
                m.endpoint_velocity_raw(&b[0], &b[1])
            }),
        }
    }

    /// Orthogonal projection of an ambient matrix onto the tangent space.
    pub fn project_tangent(&self, p: &Point, w: &DMatrix<f64>) -> Result<TangentVector> {
        self.check_shape(w, "projection input")?;
        Ok(TangentVector {
            base: p.clone(),
            coords: self.project_raw(&p.coords, w),
        })
    }

    /// Riemannian metric (the embedded trace inner product).
    pub fn inner(&self, p: &Point, u: &TangentVector, v: &TangentVector) -> Result<f64> {
        if u.base.coords != p.coords || v.base.coords != p.coords {
            return Err(Error::Usage(
                "inner product of tangent vectors based at different points".into(),
            ));
        }
        Ok(u.coords.dot(&v.coords))
    }

    /// Retraction; the exponential map where available, the polar map on
    /// Stiefel. `retract(p, 0)` returns `p` exactly.
    pub fn retract(&self, p: &Point, v: &TangentVector) -> Result<Point> {
        if v.base.coords != p.coords {
            return Err(Error::Usage(
                "retraction of a vector based elsewhere".into(),
            ));
        }
        Ok(Point {
            manifold: self.clone(),
            coords: self.retract_raw(&p.coords, &v.coords),
        })
    }

    /// Exponential map (geodesics); errors when the capability is absent.
    pub fn exp(&self, p: &Point, v: &TangentVector) -> Result<Point> {
        if v.base.coords != p.coords {
            return Err(Error::Usage("exp of a vector based elsewhere".into()));
        }
        Ok(Point {
            manifold: self.clone(),
            coords: self.exp_raw(&p.coords, &v.coords)?,
        })
    }

    /// Parallel transport of `u` along the geodesic t -> exp_p(t v); the
    /// result is tangent at exp_p(v).
    pub fn transport(
        &self,
        p: &Point,
        v: &TangentVector,
        u: &TangentVector,
    ) -> Result<TangentVector> {
        if v.base.coords != p.coords || u.base.coords != p.coords {
            return Err(Error::Usage("transport of a vector based elsewhere".into()));
        }
        let q = self.exp(p, v)?;
        Ok(TangentVector {
            base: q,
            coords: self.transport_raw(&p.coords, &v.coords, &u.coords)?,
        })
    }

    /// Inverse of `transport`: carries `w`, tangent at exp_p(v), back to p.
    pub fn inverse_transport(
        &self,
        p: &Point,
        v: &TangentVector,
        w: &TangentVector,
    ) -> Result<TangentVector> {
        if !self.capabilities().has_transport {
            return Err(Error::Unsupported(format!(
                "{self} has no parallel transport"
            )));
        }
        let q = self.exp_raw(&p.coords, &v.coords)?;
        // Transport along the reversed geodesic, which starts at q with the
        // negated endpoint velocity.
        let back = -self.endpoint_velocity_raw(&p.coords, &v.coords);
        Ok(TangentVector {
            base: p.clone(),
            coords: self.transport_raw(&q, &back, &w.coords)?,
        })
    }

    /// Deterministic orthonormal tangent basis at `p`: canonical ambient
    /// directions are projected and orthonormalized in row-major order,
    /// discarding directions that collapse.
    pub fn tangent_basis(&self, p: &Point) -> Result<TangentBasis> {
        let n = self.intrinsic_dim();
        let (rows, cols) = self.ambient_shape();
        let mut kept: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        'cells: for i in 0..rows {
            for j in 0..cols {
                if kept.len() == n {
                    break 'cells;
                }
                let mut e = DMatrix::zeros(rows, cols);
                e[(i, j)] = 1.0;
                let mut t = self.project_raw(&p.coords, &e);
                // Gram-Schmidt, two passes.
                for _ in 0..2 {
                    for b in &kept {
                        let c = b.dot(&t);
                        t -= b * c;
                    }
                }
                let norm = t.norm();
                if norm >= BASIS_DISCARD_TOL {
                    kept.push(t / norm);
                }
            }
        }
        if kept.len() < n {
            return Err(Error::Geometry(format!(
                "could not extract {n} independent tangent directions on {self} (got {})",
                kept.len()
            )));
        }
        let vectors = kept
            .into_iter()
            .map(|coords| TangentVector {
                base: p.clone(),
                coords,
            })
            .collect();
        Ok(TangentBasis {
            base: p.clone(),
            vectors,
        })
    }

    fn random_point_with(&self, rng: &mut ChaCha8Rng) -> Point {
        let coords = match self {
            Manifold::Euclidean { r } => sampling::gaussian_matrix(*r, 1, rng),
            Manifold::Sphere { r } => loop {
                let w = sampling::gaussian_matrix(*r, 1, rng);
                let n = w.norm();
                if n > 1e-6 {
                    break w / n;
                }
            },
            Manifold::Oblique { r, t } => {
                oblique::normalize_rows(&sampling::gaussian_matrix(*r, *t, rng))
            }
            Manifold::Stiefel { r, t } | Manifold::Grassmann { r, t } => {
                let w = sampling::gaussian_matrix(*r, *t, rng);
                let (q, _) = numkernel::qr_thin(&w).expect("gaussian matrix has full rank");
                q
            }
            Manifold::Product(fs) => {
                let shape = self.ambient_shape();
                let mut out = DMatrix::zeros(shape.0, shape.1);
                for (m, (ro, co, r, c)) in fs.iter().zip(Self::blocks(fs)) {
                    out.view_mut((ro, co), (r, c))
                        .copy_from(&m.random_point_with(rng).coords);
                }
                out
            }
        };
        Point {
            manifold: self.clone(),
            coords,
        }
    }

    /// Seed-deterministic random feasible point.
    pub fn random_point(&self, seed: u64) -> Point {
        self.random_point_with(&mut sampling::rng(seed))
    }

    /// Seed-deterministic random unit tangent vector at `p`.
    pub fn random_tangent(&self, p: &Point, seed: u64) -> Result<TangentVector> {
        let mut rng = sampling::rng(seed);
        let (rows, cols) = self.ambient_shape();
        for _ in 0..16 {
            let w = sampling::gaussian_matrix(rows, cols, &mut rng);
            let t = self.project_raw(&p.coords, &w);
            let n = t.norm();
            if n > 1e-8 {
                return Ok(TangentVector {
                    base: p.clone(),
                    coords: t / n,
                });
            }
        }
        Err(Error::Geometry(format!(
            "could not draw a random tangent direction on {self}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn e(n: usize, i: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, 1);
        m[(i, 0)] = 1.0;
        m
    }

    #[test]
    fn intrinsic_dims() {
        assert_eq!(Manifold::sphere(5).unwrap().intrinsic_dim(), 4);
        assert_eq!(Manifold::oblique(3, 4).unwrap().intrinsic_dim(), 9);
        assert_eq!(Manifold::stiefel(4, 2).unwrap().intrinsic_dim(), 5);
        assert_eq!(Manifold::grassmann(4, 2).unwrap().intrinsic_dim(), 4);
        let prod = Manifold::product(vec![
            Manifold::stiefel(4, 2).unwrap(),
            Manifold::sphere(3).unwrap(),
        ])
        .unwrap();
        assert_eq!(prod.intrinsic_dim(), 7);
        assert_eq!(prod.ambient_shape(), (7, 3));
    }

    #[test]
    fn sphere_projection_cases() {
        let m = Manifold::sphere(3).unwrap();
        let p = m.point(e(3, 0)).unwrap();
        let zero = m.project_tangent(&p, &e(3, 0)).unwrap();
        assert!(zero.norm() < 1e-15);
        let tangent = m.project_tangent(&p, &e(3, 1)).unwrap();
        assert!((&tangent.coords - e(3, 1)).norm() < 1e-15);
    }

    #[test]
    fn projection_idempotent_and_skew_on_stiefel() {
        let m = Manifold::stiefel(4, 2).unwrap();
        let p = m.random_point(3);
        let w = sampling::gaussian_matrix(4, 2, &mut sampling::rng(17));
        let v = m.project_tangent(&p, &w).unwrap();
        let v2 = m.project_tangent(&p, &v.coords).unwrap();
        assert!((&v.coords - &v2.coords).norm() <= 1e-13 * v.norm().max(1.0));
        let a = p.coords.transpose() * &v.coords;
        assert!(numkernel::max_abs(&(&a + a.transpose())) < 1e-13);
    }

    #[test]
    fn inner_product_cases() {
        let m = Manifold::sphere(3).unwrap();
        let p = m.point(e(3, 0)).unwrap();
        let u = m.tangent(&p, e(3, 1)).unwrap();
        let v = m.tangent(&p, e(3, 2)).unwrap();
        assert!((m.inner(&p, &u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert!(m.inner(&p, &u, &v).unwrap().abs() < 1e-15);
        let u2 = TangentVector {
            base: p.clone(),
            coords: &u.coords * 2.0,
        };
        assert!((m.inner(&p, &u2, &v).unwrap() - 2.0 * m.inner(&p, &u, &v).unwrap()).abs() < 1e-15);

        let q = m.point(e(3, 1)).unwrap();
        let w = m.tangent(&q, e(3, 0)).unwrap();
        assert!(matches!(m.inner(&p, &u, &w), Err(Error::Usage(_))));
    }

    #[test]
    fn retract_zero_is_identity_everywhere() {
        for m in [
            Manifold::sphere(4).unwrap(),
            Manifold::oblique(3, 3).unwrap(),
            Manifold::stiefel(4, 2).unwrap(),
            Manifold::grassmann(5, 2).unwrap(),
        ] {
            let p = m.random_point(11);
            let (r, c) = m.ambient_shape();
            let z = m.tangent(&p, DMatrix::zeros(r, c)).unwrap();
            let q = m.retract(&p, &z).unwrap();
            assert_eq!(q.coords, p.coords, "retract(p, 0) must be exact on {m}");
        }
    }

    #[test]
    fn sphere_great_circles() {
        let m = Manifold::sphere(3).unwrap();
        let p = m.point(e(3, 0)).unwrap();
        let quarter = m
            .tangent(&p, e(3, 1) * std::f64::consts::FRAC_PI_2)
            .unwrap();
        let q = m.exp(&p, &quarter).unwrap();
        assert!((&q.coords - e(3, 1)).norm() < 1e-14);

        let half = m.tangent(&p, e(3, 1) * std::f64::consts::PI).unwrap();
        let antipode = m.exp(&p, &half).unwrap();
        assert!((&antipode.coords + e(3, 0)).norm() < 1e-14);

        let full = m
            .tangent(&p, e(3, 1) * (2.0 * std::f64::consts::PI))
            .unwrap();
        let loopback = m.exp(&p, &full).unwrap();
        assert!((&loopback.coords - e(3, 0)).norm() < 1e-14);
    }

    #[test]
    fn stiefel_polar_feasible_and_has_no_exp() {
        let m = Manifold::stiefel(3, 2).unwrap();
        let p = m.point(DMatrix::identity(3, 2)).unwrap();
        let v = m.random_tangent(&p, 5).unwrap();
        let small = TangentVector {
            base: p.clone(),
            coords: &v.coords * 0.1,
        };
        let q = m.retract(&p, &small).unwrap();
        assert!(m.feasibility_residual(&q.coords) <= 1e-12);
        assert!(matches!(m.exp(&p, &small), Err(Error::Unsupported(_))));
        assert!(matches!(
            m.transport(&p, &small, &v),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn stiefel_polar_second_order_at_identity_embedding() {
        let m = Manifold::stiefel(3, 2).unwrap();
        let p = m.point(DMatrix::identity(3, 2)).unwrap();
        let v = m.random_tangent(&p, 5).unwrap();
        let h = 1e-3;
        let plus = m.retract_raw(&p.coords, &(&v.coords * h));
        let minus = m.retract_raw(&p.coords, &(&v.coords * (-h)));
        let second = (plus + minus - &p.coords * 2.0) / (h * h);
        let tangential = m.project_raw(&p.coords, &second);
        assert!(tangential.norm() <= 1e-4);
    }

    #[test]
    fn sphere_transport_cases() {
        let m = Manifold::sphere(3).unwrap();
        let p = m.point(e(3, 0)).unwrap();
        let v = m
            .tangent(&p, e(3, 1) * std::f64::consts::FRAC_PI_2)
            .unwrap();
        let u = m.tangent(&p, e(3, 1)).unwrap();
        let moved = m.transport(&p, &v, &u).unwrap();
        assert!(
            (&moved.coords + e(3, 0)).norm() < 1e-14,
            "transport along own geodesic"
        );

        let w = m.tangent(&p, e(3, 2)).unwrap();
        let unchanged = m.transport(&p, &v, &w).unwrap();
        assert!((&unchanged.coords - e(3, 2)).norm() < 1e-14);
    }

    #[test]
    fn transport_roundtrip_and_isometry() {
        for (m, seed) in [
            (Manifold::sphere(5).unwrap(), 2u64),
            (Manifold::grassmann(5, 2).unwrap(), 3u64),
            (Manifold::oblique(3, 4).unwrap(), 4u64),
        ] {
            let p = m.random_point(seed);
            let v = m.random_tangent(&p, seed + 100).unwrap();
            let u = m.random_tangent(&p, seed + 200).unwrap();
            let moved = m.transport(&p, &v, &u).unwrap();
            assert!((moved.norm() - u.norm()).abs() <= 1e-12, "isometry on {m}");
            let q = m.exp(&p, &v).unwrap();
            assert!(m.tangency_residual(&q.coords, &moved.coords) <= 1e-12);
            let back = m.inverse_transport(&p, &v, &moved).unwrap();
            assert!(
                (&back.coords - &u.coords).norm() <= 1e-12,
                "roundtrip on {m}"
            );
        }
    }

    #[test]
    fn inverse_transport_at_zero_is_identity() {
        let m = Manifold::sphere(4).unwrap();
        let p = m.random_point(9);
        let (r, c) = m.ambient_shape();
        let z = m.tangent(&p, DMatrix::zeros(r, c)).unwrap();
        let u = m.random_tangent(&p, 10).unwrap();
        let moved = m.transport(&p, &z, &u).unwrap();
        assert_eq!(moved.coords, u.coords);
        let back = m.inverse_transport(&p, &z, &moved).unwrap();
        assert_eq!(back.coords, u.coords);
    }

    #[test]
    fn grassmann_exp_additivity() {
        let m = Manifold::grassmann(4, 2).unwrap();
        let p = m.random_point(21);
        let v = m.random_tangent(&p, 22).unwrap();
        let direct = m
            .exp(
                &p,
                &TangentVector {
                    base: p.clone(),
                    coords: &v.coords * 1.0,
                },
            )
            .unwrap();
        let first = TangentVector {
            base: p.clone(),
            coords: &v.coords * 0.4,
        };
        let rest = TangentVector {
            base: p.clone(),
            coords: &v.coords * 0.6,
        };
        let q = m.exp(&p, &first).unwrap();
        assert!(m.feasibility_residual(&q.coords) <= 1e-12);
        let carried = m.transport(&p, &first, &rest).unwrap();
        let chained = m.exp(&q, &carried).unwrap();
        assert!((&chained.coords - &direct.coords).norm() <= 1e-8);
    }

    #[test]
    fn basis_on_sphere_is_canonical_complement() {
        let m = Manifold::sphere(3).unwrap();
        let p = m.point(e(3, 0)).unwrap();
        let basis = m.tangent_basis(&p).unwrap();
        assert_eq!(basis.dim(), 2);
        assert!((&basis.vectors[0].coords - e(3, 1)).norm() < 1e-14);
        assert!((&basis.vectors[1].coords - e(3, 2)).norm() < 1e-14);
    }

    #[test]
    fn basis_on_oblique_identity_is_rowwise() {
        let m = Manifold::oblique(2, 2).unwrap();
        let p = m.point(DMatrix::identity(2, 2)).unwrap();
        let basis = m.tangent_basis(&p).unwrap();
        assert_eq!(basis.dim(), 2);
        for v in &basis.vectors {
            let support: Vec<usize> = (0..2).filter(|&i| v.coords.row(i).norm() > 1e-14).collect();
            assert_eq!(support.len(), 1, "basis vector must live on a single row");
        }
    }

    #[test]
    fn basis_gram_identity_on_stiefel() {
        let m = Manifold::stiefel(4, 2).unwrap();
        let p = m.random_point(31);
        let basis = m.tangent_basis(&p).unwrap();
        assert_eq!(basis.dim(), 5);
        for i in 0..5 {
            assert!(m.tangency_residual(&p.coords, &basis.vectors[i].coords) <= 1e-10);
            for j in 0..5 {
                let g = basis.vectors[i].coords.dot(&basis.vectors[j].coords);
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn basis_coordinates_roundtrip() {
        let m = Manifold::grassmann(5, 2).unwrap();
        let p = m.random_point(41);
        let basis = m.tangent_basis(&p).unwrap();
        let v = m.random_tangent(&p, 42).unwrap();
        let c = basis.to_coordinates(&v);
        let back = basis.from_coordinates(&c);
        assert!((&back.coords - &v.coords).norm() <= 1e-12);
        assert!((c.norm() - v.norm()).abs() <= 1e-12);
    }

    #[test]
    fn random_sampling_deterministic_and_feasible() {
        for m in [
            Manifold::sphere(6).unwrap(),
            Manifold::oblique(3, 3).unwrap(),
            Manifold::stiefel(5, 2).unwrap(),
            Manifold::grassmann(5, 2).unwrap(),
        ] {
            let a = m.random_point(123);
            let b = m.random_point(123);
            assert_eq!(a.coords, b.coords);
            assert!(m.feasibility_residual(&a.coords) <= 1e-12);
            for seed in 0..100u64 {
                let t = m.random_tangent(&a, seed).unwrap();
                assert!((t.norm() - 1.0).abs() <= 1e-14);
                assert!(m.tangency_residual(&a.coords, &t.coords) <= 1e-12);
            }
        }
    }

    #[test]
    fn sphere_random_point_unit_norm() {
        let m = Manifold::sphere(7).unwrap();
        let p = m.random_point(7);
        assert!((p.coords.norm() - 1.0).abs() <= 1e-14);
    }

    #[test]
    fn product_ops_are_blockwise() {
        let f1 = Manifold::sphere(3).unwrap();
        let f2 = Manifold::stiefel(4, 2).unwrap();
        let prod = Manifold::product(vec![f1.clone(), f2.clone()]).unwrap();
        let p = prod.random_point(77);
        let p1 = f1
            .point(p.coords.view((0, 0), (3, 1)).into_owned())
            .unwrap();
        let p2 = f2
            .point(p.coords.view((3, 1), (4, 2)).into_owned())
            .unwrap();

        let w = sampling::gaussian_matrix(7, 3, &mut sampling::rng(9));
        let v = prod.project_tangent(&p, &w).unwrap();
        let v1 = f1
            .project_tangent(&p1, &w.view((0, 0), (3, 1)).into_owned())
            .unwrap();
        let v2 = f2
            .project_tangent(&p2, &w.view((3, 1), (4, 2)).into_owned())
            .unwrap();
        assert_eq!(v.coords.view((0, 0), (3, 1)).into_owned(), v1.coords);
        assert_eq!(v.coords.view((3, 1), (4, 2)).into_owned(), v2.coords);

        let q = prod.retract(&p, &v).unwrap();
        let q1 = f1.retract(&p1, &v1).unwrap();
        let q2 = f2.retract(&p2, &v2).unwrap();
        assert_eq!(q.coords.view((0, 0), (3, 1)).into_owned(), q1.coords);
        assert_eq!(q.coords.view((3, 1), (4, 2)).into_owned(), q2.coords);
        assert!(prod.feasibility_residual(&q.coords) <= 1e-12);
    }

    #[test]
    fn product_dim_check_on_construction() {
        assert!(Manifold::product(vec![]).is_err());
        assert!(Manifold::sphere(1).is_err());
        assert!(Manifold::grassmann(3, 3).is_err());
        assert!(Manifold::oblique(2, 1).is_err());
    }

    #[test]
    fn shape_mismatch_is_dimension_error() {
        let m = Manifold::sphere(3).unwrap();
        let p = m.point(e(3, 0)).unwrap();
        assert!(matches!(
            m.project_tangent(&p, &DMatrix::zeros(4, 1)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn capability_flags_truthful() {
        let st = Manifold::stiefel(4, 2).unwrap();
        assert!(!st.capabilities().has_exp);
        assert!(st.capabilities().retraction_is_second_order);
        let prod = Manifold::product(vec![st, Manifold::sphere(3).unwrap()]).unwrap();
        assert!(!prod.capabilities().has_exp);
        let smooth = Manifold::product(vec![
            Manifold::sphere(3).unwrap(),
            Manifold::grassmann(4, 2).unwrap(),
        ])
        .unwrap();
        assert!(smooth.capabilities().has_exp);
        assert!(smooth.capabilities().has_transport);
    }

    #[test]
    fn euclidean_is_flat() {
        let m = Manifold::euclidean(3).unwrap();
        let p = m
            .point(DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]))
            .unwrap();
        let v = m
            .tangent(&p, DMatrix::from_column_slice(3, 1, &[0.5, 0.0, -1.0]))
            .unwrap();
        let q = m.retract(&p, &v).unwrap();
        assert_eq!(q.coords, &p.coords + &v.coords);
        let moved = m.transport(&p, &v, &v).unwrap();
        assert_eq!(moved.coords, v.coords);
        let basis = m.tangent_basis(&p).unwrap();
        assert_eq!(basis.dim(), 3);
        let c = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let back = basis.to_coordinates(&basis.from_coordinates(&c));
        assert!((back - c).norm() < 1e-14);
    }
}
