//! Oracles for the second DC component `h`.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{Result, SolverError};
use crate::oracle::SmoothConvex;
use crate::Vector;

/// Rounding slack used when comparing member values against `h(x)`.
pub fn fp_slack(hx: f64) -> f64 {
    1e-12 * (1.0 + hx.abs())
}

/// `h(x) = max_i h_i(x)` over smooth convex members.
#[derive(Clone)]
pub struct FiniteMaxH {
    members: Vec<Arc<dyn SmoothConvex>>,
}

impl FiniteMaxH {
    pub fn new(members: Vec<Arc<dyn SmoothConvex>>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(SolverError::InvalidSpec("finite max needs at least one member".into()));
        };
        let n = first.dim();
        if let Some(bad) = members.iter().find(|m| m.dim() != n) {
            return Err(SolverError::DimensionMismatch { expected: n, found: bad.dim() });
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[Arc<dyn SmoothConvex>] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Member values in index order.
    pub fn values(&self, x: &Vector) -> Result<Vec<f64>> {
        self.members
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let v = m.eval(x);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(SolverError::Oracle(format!("member {i} returned {v}")))
                }
            })
            .collect()
    }

    /// Left-to-right maximum of the member values.
    pub fn value(&self, x: &Vector) -> Result<f64> {
        Ok(self.values(x)?.into_iter().fold(f64::NEG_INFINITY, f64::max))
    }

    /// `M_δ(x) = {i : h_i(x) ≥ h(x) − δ − τ}` with `τ = 1e−12·(1+|h(x)|)`.
    pub fn active_set(&self, x: &Vector, delta: f64) -> Result<BTreeSet<usize>> {
        let vals = self.values(x)?;
        let hx = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let thr = hx - delta.max(0.0) - fp_slack(hx);
        Ok(vals.iter().enumerate().filter(|(_, &v)| v >= thr).map(|(i, _)| i).collect())
    }

    /// Smallest index attaining the maximum.
    pub fn first_active(&self, x: &Vector) -> Result<usize> {
        Ok(*self.active_set(x, 0.0)?.first().expect("M_0 is never empty"))
    }
}

impl fmt::Debug for FiniteMaxH {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteMaxH").field("members", &self.members.len()).finish()
    }
}

/// Closed Euclidean ball.
#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: Vector,
    pub radius: f64,
}

impl Ball {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, t: &Vector, slack: f64) -> bool {
        (t - &self.center).norm() <= self.radius + slack
    }

    pub fn project(&self, t: &Vector) -> Vector {
        let d = t - &self.center;
        let r = d.norm();
        if r <= self.radius {
            t.clone()
        } else {
            &self.center + d * (self.radius / r)
        }
    }
}

/// A family `φ(x, t)` of smooth convex functions of `x`, indexed by `t`.
pub trait ParamFamily: Send + Sync {
    fn value(&self, x: &Vector, t: &Vector) -> f64;
    fn grad_x(&self, x: &Vector, t: &Vector) -> Vector;

    /// One element of `argmax_{t ∈ domain} φ(x, t)` when a closed form exists.
    fn maximizer(&self, _x: &Vector, _domain: &Ball) -> Option<Vector> {
        None
    }
}

/// `h(x) = max_{t ∈ T} φ(x, t)` over a Euclidean ball `T`.
#[derive(Clone)]
pub struct ParamMaxH {
    pub family: Arc<dyn ParamFamily>,
    pub domain: Ball,
    /// `inf_t` of the members' strong-convexity constants.
    pub member_modulus: f64,
    /// Points per axis of the fallback maximizer grid.
    pub grid_resolution: usize,
}

impl ParamMaxH {
    pub fn new(family: Arc<dyn ParamFamily>, domain: Ball, member_modulus: f64) -> Result<Self> {
        if !(domain.radius > 0.0) || domain.dim() == 0 {
            return Err(SolverError::InvalidSpec("parameter ball needs positive radius and dimension".into()));
        }
        Ok(Self { family, domain, member_modulus, grid_resolution: 64 })
    }

    pub fn param_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn phi(&self, x: &Vector, t: &Vector) -> Result<f64> {
        let v = self.family.value(x, t);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SolverError::Oracle(format!("phi returned {v}")))
        }
    }

    /// A maximizer of `φ(x, ·)` over the ball, from the family's closed form
    /// or a grid search refined by projected compass search.
    pub fn maximizer(&self, x: &Vector) -> Result<Vector> {
        if let Some(t) = self.family.maximizer(x, &self.domain) {
            return Ok(t);
        }
        self.grid_maximizer(x)
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        let t = self.maximizer(x)?;
        self.phi(x, &t)
    }

    /// Grid of the ball used by the maximizer fallback and the certifier.
    pub fn grid(&self, per_axis: usize) -> Result<Vec<Vector>> {
        let nd = self.param_dim();
        if nd > 3 {
            return Err(SolverError::InvalidSpec(format!(
                "grid search is limited to parameter dimension ≤ 3, got {nd}"
            )));
        }
        let per_axis = per_axis.max(2);
        let r = self.domain.radius;
        let step = 2.0 * r / (per_axis - 1) as f64;
        let total = per_axis.pow(nd as u32);
        let mut out = Vec::new();
        for flat in 0..total {
            let mut rem = flat;
            let mut t = self.domain.center.clone();
            for j in 0..nd {
                let idx = rem % per_axis;
                rem /= per_axis;
                t[j] += -r + step * idx as f64;
            }
            if self.domain.contains(&t, 1e-12 * r) {
                out.push(t);
            }
        }
        if out.is_empty() {
            out.push(self.domain.center.clone());
        }
        Ok(out)
    }

    fn grid_maximizer(&self, x: &Vector) -> Result<Vector> {
        let mut best = self.domain.center.clone();
        let mut best_val = self.phi(x, &best)?;
        for t in self.grid(self.grid_resolution)? {
            let v = self.phi(x, &t)?;
            if v > best_val {
                best_val = v;
                best = t;
            }
        }
        // projected compass search
        let nd = self.param_dim();
        let mut step = 2.0 * self.domain.radius / (self.grid_resolution.max(2) - 1) as f64;
        while step > 1e-13 * (1.0 + self.domain.radius) {
            let mut improved = false;
            for j in 0..nd {
                for sign in [1.0, -1.0] {
                    let mut t = best.clone();
                    t[j] += sign * step;
                    let t = self.domain.project(&t);
                    let v = self.phi(x, &t)?;
                    if v > best_val {
                        best_val = v;
                        best = t;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        Ok(best)
    }
}

impl fmt::Debug for ParamMaxH {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParamMaxH")
            .field("domain", &self.domain)
            .field("member_modulus", &self.member_modulus)
            .finish()
    }
}

/// A continuous convex function known only through values and one subgradient.
pub trait SubgradOracle: Send + Sync {
    fn eval(&self, x: &Vector) -> f64;
    fn subgrad(&self, x: &Vector) -> Vector;
}

#[derive(Clone)]
pub struct GeneralConvexH {
    pub oracle: Arc<dyn SubgradOracle>,
}

impl GeneralConvexH {
    pub fn value(&self, x: &Vector) -> Result<f64> {
        let v = self.oracle.eval(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SolverError::Oracle(format!("h returned {v}")))
        }
    }

    pub fn subgrad(&self, x: &Vector) -> Result<Vector> {
        let s = self.oracle.subgrad(x);
        crate::ensure_finite(&s, "subgradient")?;
        Ok(s)
    }
}

impl fmt::Debug for GeneralConvexH {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("GeneralConvexH")
    }
}

/// `‖x‖₁` with subgradient `sign(x)` (0 ↦ +1).
#[derive(Clone, Debug, Default)]
pub struct L1Oracle;

impl SubgradOracle for L1Oracle {
    fn eval(&self, x: &Vector) -> f64 {
        x.lp_norm(1)
    }

    fn subgrad(&self, x: &Vector) -> Vector {
        x.map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
    }
}

/// The three supported shapes of `h`.
#[derive(Clone, Debug)]
pub enum HOracle {
    FiniteMax(FiniteMaxH),
    ParamMax(ParamMaxH),
    General(GeneralConvexH),
}

impl HOracle {
    pub fn value(&self, x: &Vector) -> Result<f64> {
        match self {
            HOracle::FiniteMax(h) => h.value(x),
            HOracle::ParamMax(h) => h.value(x),
            HOracle::General(h) => h.value(x),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            HOracle::FiniteMax(_) => "finite_max",
            HOracle::ParamMax(_) => "param_max",
            HOracle::General(_) => "general",
        }
    }
}

/// `h(x)` for any variant.
pub fn h_value(h: &HOracle, x: &Vector) -> Result<f64> {
    h.value(x)
}

/// Approximate active set of a finite-max `h`.
pub fn active_set(h: &FiniteMaxH, x: &Vector, delta: f64) -> Result<BTreeSet<usize>> {
    h.active_set(x, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{Affine, FnSmooth};
    use nalgebra::dvector;

    pub(crate) fn abs_h() -> FiniteMaxH {
        FiniteMaxH::new(vec![
            Arc::new(Affine { slope: dvector![1.0], offset: 0.0 }),
            Arc::new(Affine { slope: dvector![-1.0], offset: 0.0 }),
        ])
        .unwrap()
    }

    struct Huber;
    impl ParamFamily for Huber {
        fn value(&self, x: &Vector, t: &Vector) -> f64 {
            t.dot(x) - 0.5 * t.norm_squared()
        }
        fn grad_x(&self, _x: &Vector, t: &Vector) -> Vector {
            t.clone()
        }
    }

    #[test]
    fn finite_max_value() {
        assert_eq!(abs_h().value(&dvector![0.5]).unwrap(), 0.5);
        let single = FiniteMaxH::new(vec![Arc::new(Affine { slope: dvector![2.0], offset: 1.0 })]).unwrap();
        assert_eq!(single.value(&dvector![-3.0]).unwrap(), -5.0);
    }

    #[test]
    fn param_max_grid_fallback() {
        let h = ParamMaxH::new(Arc::new(Huber), Ball { center: dvector![0.0], radius: 1.0 }, 0.0).unwrap();
        let v = h.value(&dvector![0.5]).unwrap();
        assert!((v - 0.125).abs() < 1e-12, "{v}");
        let t = h.maximizer(&dvector![2.0]).unwrap();
        assert!((t[0] - 1.0).abs() < 1e-12);
        assert!((h.value(&dvector![2.0]).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn param_max_grid_fallback_2d() {
        let h = ParamMaxH::new(Arc::new(Huber), Ball { center: dvector![0.0, 0.0], radius: 1.0 }, 0.0).unwrap();
        let x = dvector![0.3, -0.2];
        let t = h.maximizer(&x).unwrap();
        assert!((t - &x).norm() < 1e-8);
        let x = dvector![3.0, 4.0];
        let t = h.maximizer(&x).unwrap();
        assert!((t - dvector![0.6, 0.8]).norm() < 1e-6);
    }

    #[test]
    fn active_set_examples() {
        let h = abs_h();
        assert_eq!(h.active_set(&dvector![0.0], 0.1).unwrap(), BTreeSet::from([0, 1]));
        assert_eq!(h.active_set(&dvector![1.0], 0.1).unwrap(), BTreeSet::from([0]));
        assert_eq!(h.active_set(&dvector![1.0], 2.5).unwrap(), BTreeSet::from([0, 1]));
    }

    #[test]
    fn non_finite_member_is_an_oracle_error() {
        let bad = FiniteMaxH::new(vec![Arc::new(FnSmooth::new(1, |_| f64::NAN, |x| x.clone()))]).unwrap();
        assert!(matches!(bad.value(&dvector![0.0]), Err(SolverError::Oracle(_))));
    }

    #[test]
    fn empty_finite_max_rejected() {
        assert!(FiniteMaxH::new(vec![]).is_err());
    }
}
