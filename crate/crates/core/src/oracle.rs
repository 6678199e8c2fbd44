//! Convex function oracles: smooth convex pieces, prox-friendly pieces, and the
//! composite first DC component `g`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, SolverError};
use crate::Vector;

/// A differentiable convex function with a known strong-convexity modulus.
///
/// Implementations must be stateless so they can be evaluated from several
/// threads at once.
pub trait SmoothConvex: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &Vector) -> f64;
    fn grad(&self, x: &Vector) -> Vector;

    /// Strong-convexity constant (0 when merely convex).
    fn modulus(&self) -> f64 {
        0.0
    }

    /// Lipschitz constant of the gradient, if known.
    fn lipschitz_grad(&self) -> Option<f64> {
        None
    }

    /// Quadratic structure, used by the closed-form subproblem path.
    fn as_quadratic(&self) -> Option<&Quadratic> {
        None
    }
}

/// A convex function (possibly extended-valued) with a computable proximal map.
pub trait ProxConvex: Send + Sync {
    /// May return `f64::INFINITY` outside the domain.
    fn eval(&self, x: &Vector) -> f64;
    /// `argmin_z eval(z) + ‖z − v‖² / (2·step)`.
    fn prox(&self, v: &Vector, step: f64) -> Vector;
}

/// `½ xᵀQx + bᵀx + c` with `Q` symmetric positive semidefinite.
#[derive(Clone, Debug)]
pub struct Quadratic {
    q: DMatrix<f64>,
    b: Vector,
    c: f64,
    min_eig: f64,
    max_eig: f64,
}

impl Quadratic {
    pub fn new(q: DMatrix<f64>, b: Vector, c: f64) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n {
            return Err(SolverError::InvalidSpec(format!(
                "quadratic form must be square, got {}x{}",
                n,
                q.ncols()
            )));
        }
        if b.len() != n {
            return Err(SolverError::DimensionMismatch { expected: n, found: b.len() });
        }
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-10 * (1.0 + q.amax()) {
            return Err(SolverError::InvalidSpec(format!("quadratic form is not symmetric ({asym:e})")));
        }
        let eig = SymmetricEigen::new(q.clone()).eigenvalues;
        let min_eig = eig.min();
        let max_eig = eig.max();
        if min_eig < -1e-10 * (1.0 + max_eig.abs()) {
            return Err(SolverError::InvalidSpec(format!("quadratic form is not PSD (min eigenvalue {min_eig:e})")));
        }
        Ok(Self { q, b, c, min_eig: min_eig.max(0.0), max_eig: max_eig.max(0.0) })
    }

    /// `(scale/2)‖x − center‖²`.
    pub fn scaled_distance(center: &Vector, scale: f64) -> Self {
        let n = center.len();
        Self {
            q: DMatrix::identity(n, n) * scale,
            b: -center * scale,
            c: 0.5 * scale * center.norm_squared(),
            min_eig: scale,
            max_eig: scale,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn linear(&self) -> &Vector {
        &self.b
    }

    pub fn constant(&self) -> f64 {
        self.c
    }
}

impl SmoothConvex for Quadratic {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn eval(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.b.dot(x) + self.c
    }

    fn grad(&self, x: &Vector) -> Vector {
        &self.q * x + &self.b
    }

    fn modulus(&self) -> f64 {
        self.min_eig
    }

    fn lipschitz_grad(&self) -> Option<f64> {
        Some(self.max_eig.max(f64::MIN_POSITIVE))
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        Some(self)
    }
}

/// `⟨slope, x⟩ + offset`.
#[derive(Clone, Debug)]
pub struct Affine {
    pub slope: Vector,
    pub offset: f64,
}

impl SmoothConvex for Affine {
    fn dim(&self) -> usize {
        self.slope.len()
    }

    fn eval(&self, x: &Vector) -> f64 {
        self.slope.dot(x) + self.offset
    }

    fn grad(&self, _x: &Vector) -> Vector {
        self.slope.clone()
    }

    fn lipschitz_grad(&self) -> Option<f64> {
        Some(f64::MIN_POSITIVE)
    }
}

type EvalFn = dyn Fn(&Vector) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Vector) -> Vector + Send + Sync;

/// Closure-backed smooth convex function for user-defined problems.
#[derive(Clone)]
pub struct FnSmooth {
    dim: usize,
    eval: Arc<EvalFn>,
    grad: Arc<GradFn>,
    modulus: f64,
    lipschitz: Option<f64>,
}

impl FnSmooth {
    pub fn new(
        dim: usize,
        eval: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self { dim, eval: Arc::new(eval), grad: Arc::new(grad), modulus: 0.0, lipschitz: None }
    }

    pub fn with_modulus(mut self, modulus: f64) -> Self {
        self.modulus = modulus;
        self
    }

    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = Some(lipschitz);
        self
    }
}

impl fmt::Debug for FnSmooth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnSmooth").field("dim", &self.dim).field("modulus", &self.modulus).finish()
    }
}

impl SmoothConvex for FnSmooth {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &Vector) -> f64 {
        (self.eval)(x)
    }

    fn grad(&self, x: &Vector) -> Vector {
        (self.grad)(x)
    }

    fn modulus(&self) -> f64 {
        self.modulus
    }

    fn lipschitz_grad(&self) -> Option<f64> {
        self.lipschitz
    }
}

/// Indicator of the box `lower ≤ x ≤ upper` (bounds may be infinite).
#[derive(Clone, Debug)]
pub struct BoxIndicator {
    pub lower: Vector,
    pub upper: Vector,
}

impl ProxConvex for BoxIndicator {
    fn eval(&self, x: &Vector) -> f64 {
        let inside = x
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(&xi, (&lo, &hi))| xi >= lo && xi <= hi);
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }

    fn prox(&self, v: &Vector, _step: f64) -> Vector {
        Vector::from_iterator(
            v.len(),
            v.iter().zip(self.lower.iter().zip(self.upper.iter())).map(|(&vi, (&lo, &hi))| vi.max(lo).min(hi)),
        )
    }
}

/// `weight·‖x‖₁`.
#[derive(Clone, Debug)]
pub struct L1Norm {
    pub weight: f64,
}

impl ProxConvex for L1Norm {
    fn eval(&self, x: &Vector) -> f64 {
        self.weight * x.lp_norm(1)
    }

    fn prox(&self, v: &Vector, step: f64) -> Vector {
        let thr = self.weight * step;
        v.map(|vi| vi.signum() * (vi.abs() - thr).max(0.0))
    }
}

/// First DC component `g = smooth + prox_part`.
#[derive(Clone)]
pub struct ConvexG {
    pub smooth: Arc<dyn SmoothConvex>,
    pub prox_part: Option<Arc<dyn ProxConvex>>,
    pub modulus: f64,
}

impl ConvexG {
    pub fn smooth_only(smooth: Arc<dyn SmoothConvex>) -> Self {
        let modulus = smooth.modulus();
        Self { smooth, prox_part: None, modulus }
    }

    pub fn with_prox(smooth: Arc<dyn SmoothConvex>, prox: Arc<dyn ProxConvex>) -> Self {
        let modulus = smooth.modulus();
        Self { smooth, prox_part: Some(prox), modulus }
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        let s = self.smooth.eval(x);
        match &self.prox_part {
            Some(p) => s + p.eval(x),
            None => s,
        }
    }

    pub fn is_smooth(&self) -> bool {
        self.prox_part.is_none()
    }
}

impl fmt::Debug for ConvexG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConvexG")
            .field("dim", &self.dim())
            .field("has_prox_part", &self.prox_part.is_some())
            .field("modulus", &self.modulus)
            .finish()
    }
}

/// Central finite-difference gradient with step `1e−6·(1+‖x‖)`.
pub fn fd_grad(f: impl Fn(&Vector) -> f64, x: &Vector) -> Result<Vector> {
    let h = 1e-6 * (1.0 + x.norm());
    let mut out = Vector::zeros(x.len());
    let mut probe = x.clone();
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        if !up.is_finite() || !down.is_finite() {
            return Err(SolverError::Oracle(format!("non-finite value near coordinate {j}")));
        }
        out[j] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// Largest relative mismatch `‖∇f − fd‖/(1+‖fd‖)` between an oracle's
/// gradient and central differences over `points`.
pub fn grad_check(oracle: &dyn SmoothConvex, points: &[Vector]) -> Result<f64> {
    if points.is_empty() {
        return Err(SolverError::InvalidConfig("grad_check needs at least one point".into()));
    }
    let mut worst: f64 = 0.0;
    for x in points {
        crate::ensure_finite(x, "grad_check point")?;
        let g = oracle.grad(x);
        crate::ensure_finite(&g, "oracle gradient")?;
        let fd = fd_grad(|z| oracle.eval(z), x)?;
        worst = worst.max((g - &fd).norm() / (1.0 + fd.norm()));
    }
    Ok(worst)
}
