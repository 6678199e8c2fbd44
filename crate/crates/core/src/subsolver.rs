//! Inner convex programs `min_z g(z) − ⟨y, z⟩ + (μ/2)‖z − x̄‖²`.
//!
//! Quadratic `g` without a prox part is solved in closed form through a
//! Cholesky factorization of `Q + μI`. Everything else goes through an
//! accelerated proximal-gradient loop with halving backtracking and a
//! monotone restart, warm-started at the anchor.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Result, SolverError};
use crate::oracle::ConvexG;
use crate::Vector;

/// Objective value below which a subproblem is declared unbounded.
pub const UNBOUNDED_FLOOR: f64 = -1e15;

const MAX_CONDITION: f64 = 1e14;
const MAX_STEP: f64 = 1e12;
const VALUE_TEST_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct Subproblem {
    pub g: ConvexG,
    /// Linearization slope.
    pub y: Vector,
    /// Proximal anchor `x̄`.
    pub anchor: Vector,
    pub mu: f64,
}

impl Subproblem {
    pub fn new(g: &ConvexG, y: Vector, anchor: Vector, mu: f64) -> Self {
        Self { g: g.clone(), y, anchor, mu }
    }

    /// `F(z) = g(z) − ⟨y, z⟩ + (μ/2)‖z − anchor‖²`.
    pub fn objective(&self, z: &Vector) -> f64 {
        let mut v = self.g.eval(z) - self.y.dot(z);
        if self.mu > 0.0 {
            v += 0.5 * self.mu * (z - &self.anchor).norm_squared();
        }
        v
    }

    fn smooth_value(&self, z: &Vector) -> f64 {
        let mut v = self.g.smooth.eval(z) - self.y.dot(z);
        if self.mu > 0.0 {
            v += 0.5 * self.mu * (z - &self.anchor).norm_squared();
        }
        v
    }

    fn smooth_grad(&self, z: &Vector) -> Vector {
        let mut gr = self.g.smooth.grad(z) - &self.y;
        if self.mu > 0.0 {
            gr += (z - &self.anchor) * self.mu;
        }
        gr
    }

    fn prox(&self, v: Vector, step: f64) -> Vector {
        match &self.g.prox_part {
            Some(p) => p.prox(&v, step),
            None => v,
        }
    }

    fn prox_value(&self, z: &Vector) -> f64 {
        self.g.prox_part.as_ref().map_or(0.0, |p| p.eval(z))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubSolution {
    pub z: Vector,
    pub objective: f64,
    /// Gradient-mapping norm at `z`.
    pub residual: f64,
    pub inner_iters: usize,
}

fn initial_step(sp: &Subproblem) -> f64 {
    if let Some(l) = sp.g.smooth.lipschitz_grad() {
        let l = l + sp.mu;
        if l > 0.0 && l.is_finite() {
            return 1.0 / l;
        }
    }
    // secant estimate at the anchor
    let a = &sp.anchor;
    let n = a.len().max(1) as f64;
    let e = Vector::from_element(a.len(), 1e-4 * (1.0 + a.norm()) / n.sqrt());
    let g0 = sp.smooth_grad(a);
    let g1 = sp.smooth_grad(&(a + &e));
    let l = (g1 - g0).norm() / e.norm();
    if l > 0.0 && l.is_finite() {
        1.0 / l
    } else {
        1.0
    }
}

/// Accelerated proximal gradient solve to gradient-mapping norm `tol_sub`.
pub fn solve(sp: &Subproblem, tol_sub: f64, max_inner: usize) -> Result<SubSolution> {
    if !(tol_sub > 0.0) {
        return Err(SolverError::InvalidConfig("tol_sub must be positive".into()));
    }
    crate::ensure_finite(&sp.y, "subproblem slope")?;
    crate::ensure_finite(&sp.anchor, "subproblem anchor")?;

    let mut step = initial_step(sp);
    // with a known Lipschitz constant 1/L is already the safe step
    let adaptive = sp.g.smooth.lipschitz_grad().is_none();
    let mut x = sp.anchor.clone();
    if !sp.prox_value(&x).is_finite() {
        x = sp.prox(x, step);
    }
    let mut fx = sp.smooth_value(&x) + sp.prox_value(&x);
    let mut v = x.clone();
    let mut theta = 1.0_f64;
    let mut residual = f64::INFINITY;

    for it in 0..max_inner {
        let gx = sp.smooth_grad(&x);
        let xp = sp.prox(&x - &gx * step, step);
        residual = (&x - &xp).norm() / step;
        if !residual.is_finite() {
            return Err(SolverError::Oracle("non-finite gradient mapping".into()));
        }
        if residual <= tol_sub {
            return Ok(SubSolution { objective: sp.objective(&x), z: x, residual, inner_iters: it });
        }

        let sv = sp.smooth_value(&v);
        let gv = sp.smooth_grad(&v);
        let z = loop {
            let z = sp.prox(&v - &gv * step, step);
            let d = &z - &v;
            let d2 = d.norm_squared();
            let sz = sp.smooth_value(&z);
            let accept = if (sz - sv).abs() > VALUE_TEST_FLOOR * (1.0 + sv.abs()) {
                sz <= sv + gv.dot(&d) + d2 / (2.0 * step) + 1e-15 * (1.0 + sv.abs())
            } else {
                // values agree to rounding; test curvature through gradients instead
                (sp.smooth_grad(&z) - &gv).dot(&d) <= d2 / step
            };
            if accept {
                // grow the step when the local curvature is far below 1/step
                let curvature = 2.0 * (sz - sv - gv.dot(&d)) / d2;
                if adaptive && d2 > 0.0 && curvature < 0.25 / step && step < MAX_STEP {
                    step = (2.0 * step).min(MAX_STEP);
                }
                break z;
            }
            step *= 0.5;
            if step < 1e-300 {
                return Err(SolverError::Oracle("backtracking step underflow".into()));
            }
        };

        let fz = sp.smooth_value(&z) + sp.prox_value(&z);
        if fz < UNBOUNDED_FLOOR {
            return Err(SolverError::Unbounded { floor: UNBOUNDED_FLOOR });
        }
        if fz > fx && theta > 1.0 {
            // restart momentum from the last accepted point
            theta = 1.0;
            v = x.clone();
            continue;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        v = &z + (&z - &x) * ((theta - 1.0) / theta_next);
        x = z;
        fx = fz;
        theta = theta_next;
    }
    Err(SolverError::MaxInnerIters { iters: max_inner, residual })
}

fn factor(q: &DMatrix<f64>, mu: f64) -> Result<Cholesky<f64, Dyn>> {
    let n = q.nrows();
    let m = q + DMatrix::<f64>::identity(n, n) * mu;
    let chol = Cholesky::new(m).ok_or(SolverError::SingularSystem { cond: f64::INFINITY })?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &d| (lo.min(d.abs()), hi.max(d.abs())));
    let cond = if lo > 0.0 { (hi / lo).powi(2) } else { f64::INFINITY };
    if cond > MAX_CONDITION {
        return Err(SolverError::SingularSystem { cond });
    }
    Ok(chol)
}

fn finish_quadratic(
    chol: &Cholesky<f64, Dyn>,
    q: &DMatrix<f64>,
    b: &Vector,
    sp: &Subproblem,
) -> Result<SubSolution> {
    let mut rhs = &sp.y - b;
    if sp.mu > 0.0 {
        rhs += &sp.anchor * sp.mu;
    }
    let z = chol.solve(&rhs);
    crate::ensure_finite(&z, "quadratic subproblem solution")?;
    let mut lhs = q * &z;
    if sp.mu > 0.0 {
        lhs += &z * sp.mu;
    }
    let residual = (lhs - rhs).norm();
    let objective = sp.objective(&z);
    if objective < UNBOUNDED_FLOOR {
        return Err(SolverError::Unbounded { floor: UNBOUNDED_FLOOR });
    }
    Ok(SubSolution { z, objective, residual, inner_iters: 0 })
}

/// Closed-form solve when `g(z) = ½zᵀQz + bᵀz (+ c)` has no prox part:
/// `z = (Q + μI)⁻¹(y − b + μ·anchor)`.
pub fn solve_quadratic(q: &DMatrix<f64>, b: &Vector, sp: &Subproblem) -> Result<SubSolution> {
    if q.nrows() != b.len() || sp.y.len() != b.len() {
        return Err(SolverError::DimensionMismatch { expected: b.len(), found: sp.y.len() });
    }
    let chol = factor(q, sp.mu)?;
    finish_quadratic(&chol, q, b, sp)
}

/// A reusable solver for a fixed `g` and prox weight, caching the Cholesky
/// factor on the quadratic path.
#[derive(Clone, Debug)]
pub struct Subsolver {
    g: ConvexG,
    mu: f64,
    tol_sub: f64,
    max_inner: usize,
    factor: Option<Cholesky<f64, Dyn>>,
}

impl Subsolver {
    pub fn new(g: &ConvexG, mu: f64, tol_sub: f64, max_inner: usize) -> Self {
        let factor = match (&g.prox_part, g.smooth.as_quadratic()) {
            (None, Some(quad)) => factor(quad.matrix(), mu).ok(),
            _ => None,
        };
        Self { g: g.clone(), mu, tol_sub, max_inner, factor }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn solve(&self, y: &Vector, anchor: &Vector) -> Result<SubSolution> {
        self.solve_with_tol(y, anchor, self.tol_sub)
    }

    pub fn solve_with_tol(&self, y: &Vector, anchor: &Vector, tol: f64) -> Result<SubSolution> {
        let sp = Subproblem::new(&self.g, y.clone(), anchor.clone(), self.mu);
        match (&self.factor, self.g.smooth.as_quadratic()) {
            (Some(chol), Some(quad)) => finish_quadratic(chol, quad.matrix(), quad.linear(), &sp),
            _ => solve(&sp, tol, self.max_inner),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{BoxIndicator, FnSmooth, Quadratic};
    use nalgebra::dvector;
    use std::sync::Arc;

    fn half_square() -> ConvexG {
        ConvexG::smooth_only(Arc::new(Quadratic::scaled_distance(&dvector![0.0], 1.0)))
    }

    #[test]
    fn unconstrained_scalar() {
        let sp = Subproblem::new(&half_square(), dvector![1.0], dvector![0.0], 0.0);
        let s = solve(&sp, 1e-10, 10_000).unwrap();
        assert!((s.z[0] - 1.0).abs() < 1e-9);
        assert!((s.objective + 0.5).abs() < 1e-12);
        assert!(s.residual <= 1e-10);
    }

    #[test]
    fn prox_weight_halves() {
        let sp = Subproblem::new(&half_square(), dvector![1.0], dvector![0.0], 1.0);
        let s = solve(&sp, 1e-10, 10_000).unwrap();
        assert!((s.z[0] - 0.5).abs() < 1e-9);
        assert!((s.objective + 0.25).abs() < 1e-12);
    }

    #[test]
    fn constrained_projection() {
        let g = ConvexG::with_prox(
            Arc::new(Quadratic::scaled_distance(&dvector![0.0], 1.0)),
            Arc::new(BoxIndicator { lower: dvector![2.0], upper: dvector![f64::INFINITY] }),
        );
        let sp = Subproblem::new(&g, dvector![1.0], dvector![0.0], 0.0);
        let s = solve(&sp, 1e-10, 10_000).unwrap();
        assert_eq!(s.z[0], 2.0);
        assert!(s.objective.abs() < 1e-12);
    }

    #[test]
    fn quadratic_examples() {
        let g = half_square();
        let sp = Subproblem::new(&g, dvector![1.0], dvector![0.0], 0.0);
        let q = DMatrix::identity(1, 1);
        assert_eq!(solve_quadratic(&q, &dvector![0.0], &sp).unwrap().z, dvector![1.0]);

        let g2 = ConvexG::smooth_only(Arc::new(
            Quadratic::new(DMatrix::from_diagonal(&dvector![2.0, 2.0]), dvector![0.0, 0.0], 0.0).unwrap(),
        ));
        let sp = Subproblem::new(&g2, dvector![2.0, -2.0], dvector![0.0, 0.0], 0.0);
        let q2 = DMatrix::from_diagonal(&dvector![2.0, 2.0]);
        let s = solve_quadratic(&q2, &dvector![0.0, 0.0], &sp).unwrap();
        assert!((s.z - dvector![1.0, -1.0]).norm() < 1e-15);

        let sp = Subproblem::new(&g, dvector![1.0], dvector![0.0], 1.0);
        let closed = solve_quadratic(&q, &dvector![0.0], &sp).unwrap();
        let iter = solve(&sp, 1e-10, 10_000).unwrap();
        assert!((closed.z[0] - 0.5).abs() < 1e-15);
        assert!((closed.z - iter.z).norm() <= 1e-8);
    }

    #[test]
    fn singular_system_detected() {
        let g = ConvexG::smooth_only(Arc::new(
            Quadratic::new(DMatrix::zeros(2, 2), dvector![0.0, 0.0], 0.0).unwrap(),
        ));
        let sp = Subproblem::new(&g, dvector![1.0, 0.0], dvector![0.0, 0.0], 0.0);
        assert!(matches!(
            solve_quadratic(&DMatrix::zeros(2, 2), &dvector![0.0, 0.0], &sp),
            Err(SolverError::SingularSystem { .. })
        ));
    }

    #[test]
    fn unbounded_detected() {
        // g affine: min −z has no lower bound
        let g = ConvexG::smooth_only(Arc::new(FnSmooth::new(1, |_| 0.0, |_| dvector![0.0])));
        let sp = Subproblem::new(&g, dvector![1.0], dvector![0.0], 0.0);
        assert!(matches!(solve(&sp, 1e-10, 10_000), Err(SolverError::Unbounded { .. })));
    }

    #[test]
    fn max_inner_reported() {
        let g = ConvexG::smooth_only(Arc::new(
            Quadratic::new(DMatrix::from_diagonal(&dvector![1.0, 1e-6]), dvector![0.0, 0.0], 0.0).unwrap(),
        ));
        let sp = Subproblem::new(&g, dvector![1.0, 1.0], dvector![0.0, 0.0], 0.0);
        assert!(matches!(solve(&sp, 1e-12, 5), Err(SolverError::MaxInnerIters { iters: 5, .. })));
    }

    #[test]
    fn deterministic() {
        let g = ConvexG::with_prox(
            Arc::new(Quadratic::new(DMatrix::from_diagonal(&dvector![3.0, 0.5]), dvector![0.1, -0.2], 0.0).unwrap()),
            Arc::new(crate::oracle::L1Norm { weight: 0.3 }),
        );
        let sp = Subproblem::new(&g, dvector![1.0, 2.0], dvector![0.5, 0.5], 0.2);
        let a = solve(&sp, 1e-10, 10_000).unwrap();
        let b = solve(&sp, 1e-10, 10_000).unwrap();
        assert_eq!(a, b);
    }
}
