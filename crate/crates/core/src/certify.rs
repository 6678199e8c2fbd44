//! Criticality and directional-stationarity residuals.
//!
//! A point `x` is d-stationary exactly when every active slope `∇h_i(x)` lies
//! in `∂g(x)`, i.e. when `x` solves each linearized prox problem
//! `min_z g(z) − ⟨∇h_i(x), z⟩ + ½‖z − x‖²`. The residual reported here is the
//! largest distance `‖z_i − x‖` over active `i`. Criticality only asks for one
//! element of `co{∇h_i(x)}` inside `∂g(x)` and is measured as a hull distance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::hfunc::{fp_slack, HOracle};
use crate::program::DCProgram;
use crate::selectors::unit_direction;
use crate::subsolver::Subsolver;
use crate::Vector;

/// Points per axis of the near-maximizer grid for parametric `h`.
const NEAR_MAX_GRID: usize = 33;
const HULL_MAX_ITERS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    DStationary,
    CriticalNotDStationary,
    NotCritical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub x: Vec<f64>,
    /// Active member indices (finite-max `h` only).
    pub active: Vec<usize>,
    pub dstat_residual: f64,
    pub critical_residual: f64,
    pub verdict: Verdict,
    /// Parameters used to stand in for the maximizer set of a parametric `h`.
    pub near_maximizer_count: usize,
    /// `critical_residual` is an upper proxy because `g` has a prox part.
    #[serde(default)]
    pub critical_is_proxy: bool,
    /// Only the oracle's single subgradient was checked (general `h`).
    #[serde(default)]
    pub tangent_only: bool,
}

/// Slopes of the (near-)active pieces of `h` at `x`.
#[derive(Clone, Debug)]
pub struct ActiveSlopes {
    pub indices: Vec<usize>,
    pub slopes: Vec<Vector>,
    pub near_maximizer_count: usize,
    pub tangent_only: bool,
}

pub fn active_slopes(p: &DCProgram, x: &Vector, delta: f64) -> Result<ActiveSlopes> {
    p.check_dim(x)?;
    Ok(match &p.h {
        HOracle::FiniteMax(fm) => {
            let idx: Vec<usize> = fm.active_set(x, delta)?.into_iter().collect();
            let slopes = idx.iter().map(|&i| fm.members()[i].grad(x)).collect();
            ActiveSlopes { indices: idx, slopes, near_maximizer_count: 0, tangent_only: false }
        }
        HOracle::ParamMax(pm) => {
            let t_star = pm.maximizer(x)?;
            let hx = pm.phi(x, &t_star)?;
            let mut params = vec![t_star];
            if pm.param_dim() <= 3 {
                let thr = hx - delta - fp_slack(hx);
                for t in pm.grid(NEAR_MAX_GRID)? {
                    if pm.phi(x, &t)? >= thr && !params.iter().any(|q| (q - &t).norm() < 1e-12) {
                        params.push(t);
                    }
                }
            }
            let slopes = params.iter().map(|t| pm.family.grad_x(x, t)).collect();
            ActiveSlopes { indices: Vec::new(), slopes, near_maximizer_count: params.len(), tangent_only: false }
        }
        HOracle::General(gh) => ActiveSlopes {
            indices: Vec::new(),
            slopes: vec![gh.subgrad(x)?],
            near_maximizer_count: 0,
            tangent_only: true,
        },
    })
}

fn per_slope_residuals(p: &DCProgram, x: &Vector, slopes: &[Vector], tol_sub: f64) -> Result<Vec<f64>> {
    let solver = Subsolver::new(&p.g, 1.0, tol_sub, 10_000);
    slopes.iter().map(|y| Ok((solver.solve(y, x)?.z - x).norm())).collect()
}

/// `max_i ‖z_i − x‖` over the active slopes, with
/// `z_i = argmin g(z) − ⟨∇h_i(x), z⟩ + ½‖z − x‖²`.
pub fn dstat_residual(p: &DCProgram, x: &Vector, delta: f64, tol_sub: f64) -> Result<f64> {
    let act = active_slopes(p, x, delta)?;
    Ok(per_slope_residuals(p, x, &act.slopes, tol_sub)?.into_iter().fold(0.0, f64::max))
}

/// `dist(∇g(x), co{∇h_i(x) : i ∈ M_δ(x)})` for smooth `g`.
pub fn critical_residual(p: &DCProgram, x: &Vector, delta: f64) -> Result<f64> {
    if !p.g.is_smooth() {
        return Err(SolverError::InvalidConfig(
            "critical_residual needs a smooth g; use certify for the prox-part proxy".into(),
        ));
    }
    let act = active_slopes(p, x, delta)?;
    hull_distance(&p.g.smooth.grad(x), &act.slopes, 1e-12)
}

/// Full certificate at tolerance `tol_stat`.
pub fn certify(p: &DCProgram, x: &Vector, delta: f64, tol_stat: f64, tol_sub: f64) -> Result<Certificate> {
    let act = active_slopes(p, x, delta)?;
    let per = per_slope_residuals(p, x, &act.slopes, tol_sub)?;
    let dstat = per.iter().copied().fold(0.0, f64::max);
    let (critical, proxy) = if p.g.is_smooth() {
        (hull_distance(&p.g.smooth.grad(x), &act.slopes, 1e-12)?, false)
    } else {
        (per.iter().copied().fold(f64::INFINITY, f64::min), true)
    };
    let verdict = if dstat <= tol_stat {
        Verdict::DStationary
    } else if critical <= tol_stat {
        Verdict::CriticalNotDStationary
    } else {
        Verdict::NotCritical
    };
    Ok(Certificate {
        x: x.iter().copied().collect(),
        active: act.indices,
        dstat_residual: dstat,
        critical_residual: critical,
        verdict,
        near_maximizer_count: act.near_maximizer_count,
        critical_is_proxy: proxy,
        tangent_only: act.tangent_only,
    })
}

/// Euclidean distance from `target` to the convex hull of `points`, by
/// away-step Frank–Wolfe on the simplex with exact line search.
///
/// Stops once the Frank–Wolfe gap bounds the distance error by `tol`.
pub fn hull_distance(target: &Vector, points: &[Vector], tol: f64) -> Result<f64> {
    let m = points.len();
    if m == 0 {
        return Err(SolverError::InvalidConfig("hull_distance needs at least one point".into()));
    }
    for pt in points {
        crate::ensure_finite(pt, "hull point")?;
    }
    let mut lambda = vec![1.0 / m as f64; m];
    let combine = |lambda: &[f64]| {
        let mut p = Vector::zeros(target.len());
        for (l, pt) in lambda.iter().zip(points) {
            if *l != 0.0 {
                p.axpy(*l, pt, 1.0);
            }
        }
        p
    };
    let mut p = combine(&lambda);
    for _ in 0..HULL_MAX_ITERS {
        let r = &p - target;
        let d = r.norm();
        let scores: Vec<f64> = points.iter().map(|pt| r.dot(pt)).collect();
        let current = r.dot(&p);
        let (s, s_score) = scores
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let fw_gap = current - s_score;
        if d <= tol || 2.0 * fw_gap <= tol * d {
            return Ok(d);
        }
        let (a, a_score) = scores
            .iter()
            .enumerate()
            .filter(|(i, _)| lambda[*i] > 0.0)
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let away_gap = a_score - current;

        let (dir, gamma_max, toward) = if fw_gap >= away_gap || lambda[a] >= 1.0 {
            (&points[s] - &p, 1.0, true)
        } else {
            (&p - &points[a], lambda[a] / (1.0 - lambda[a]), false)
        };
        let dd = dir.norm_squared();
        if dd == 0.0 {
            return Ok(d);
        }
        let gamma = (-r.dot(&dir) / dd).clamp(0.0, gamma_max);
        if toward {
            for l in lambda.iter_mut() {
                *l *= 1.0 - gamma;
            }
            lambda[s] += gamma;
        } else {
            for l in lambda.iter_mut() {
                *l *= 1.0 + gamma;
            }
            lambda[a] -= gamma;
            if gamma >= gamma_max {
                lambda[a] = 0.0;
            }
        }
        p = combine(&lambda);
    }
    Err(SolverError::MaxInnerIters { iters: HULL_MAX_ITERS, residual: f64::NAN })
}

/// Richardson-extrapolated one-sided difference quotient of `f` at `x` along `d`.
fn one_sided_derivative(f: impl Fn(&Vector) -> f64, x: &Vector, d: &Vector) -> f64 {
    let f0 = f(x);
    let q = |t: f64| (f(&(x + d * t)) - f0) / t;
    let (q1, q2, q3) = (q(1e-4), q(1e-5), q(1e-6));
    if !(q1.is_finite() && q2.is_finite() && q3.is_finite()) {
        return f64::INFINITY;
    }
    let r1 = (10.0 * q2 - q1) / 9.0;
    let r2 = (10.0 * q3 - q2) / 9.0;
    (100.0 * r2 - r1) / 99.0
}

/// `min_d f′(x, d)` over the given directions; a negative value witnesses
/// that `x` is not d-stationary.
pub fn directional_derivative_probe(p: &DCProgram, x: &Vector, dirs: &[Vector]) -> Result<f64> {
    p.check_dim(x)?;
    let grad_g = p.g.is_smooth().then(|| p.g.smooth.grad(x));
    let slopes = match &p.h {
        HOracle::General(_) => None,
        _ => Some(active_slopes(p, x, 0.0)?.slopes),
    };
    let mut best = f64::INFINITY;
    for d in dirs {
        let g_dir = match &grad_g {
            Some(gr) => gr.dot(d),
            None => one_sided_derivative(|z| p.g.eval(z), x, d),
        };
        let h_dir = match (&slopes, &p.h) {
            (Some(sl), _) => sl.iter().map(|s| s.dot(d)).fold(f64::NEG_INFINITY, f64::max),
            (None, HOracle::General(gh)) => one_sided_derivative(|z| gh.oracle.eval(z), x, d),
            (None, _) => unreachable!(),
        };
        best = best.min(g_dir - h_dir);
    }
    Ok(best)
}

/// 64 uniform directions on the sphere plus `±e_j`.
pub fn default_probe_dirs(n: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs: Vec<Vector> = (0..64).map(|_| unit_direction(&mut rng, n)).collect();
    for j in 0..n {
        for s in [1.0, -1.0] {
            let mut e = Vector::zeros(n);
            e[j] = s;
            dirs.push(e);
        }
    }
    dirs
}
