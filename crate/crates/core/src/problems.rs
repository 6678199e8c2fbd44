//! Test-problem library.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::hfunc::{Ball, FiniteMaxH, GeneralConvexH, HOracle, L1Oracle, ParamFamily, ParamMaxH};
use crate::oracle::{ConvexG, Quadratic, SmoothConvex};
use crate::program::DCProgram;
use crate::Vector;

fn default_n() -> usize {
    4
}
fn default_m() -> usize {
    3
}
fn default_sigma() -> f64 {
    0.5
}
fn default_seed() -> u64 {
    42
}
fn default_radius() -> f64 {
    1.0
}
fn default_param_dim() -> usize {
    1
}

/// Problem family and its parameters.
#[allow(non_camel_case_types)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params")]
pub enum ProblemKind {
    /// `x²/2 − |x|` with `|x| = max(x, −x)`.
    P1_trap,
    /// Strongly convex quadratic minus a max of strongly convex quadratics.
    P2_piecewise_quadratic {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_m")]
        m: usize,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_sigma")]
        sigma_h: f64,
        #[serde(default = "default_seed")]
        seed: u64,
    },
    /// `‖x‖²` minus the Huber-type `max_{‖t‖ ≤ R} ⟨t, x⟩ − ‖t‖²/2`.
    P3_huber_continuum {
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_param_dim")]
        n: usize,
    },
    /// `½‖x − a‖² − ‖x‖₁` with `‖·‖₁` seen only through a sign subgradient.
    P4_affine_general {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default)]
        a: Option<Vec<f64>>,
        #[serde(default = "default_seed")]
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(default)]
    pub id: String,
    #[serde(flatten)]
    pub kind: ProblemKind,
}

impl ProblemSpec {
    pub fn p1() -> Self {
        Self { id: "p1".into(), kind: ProblemKind::P1_trap }
    }

    pub fn p2(n: usize, m: usize, sigma: f64, seed: u64) -> Self {
        Self {
            id: format!("p2_n{n}_m{m}_s{seed}"),
            kind: ProblemKind::P2_piecewise_quadratic { n, m, sigma, sigma_h: sigma, seed },
        }
    }

    pub fn p3(radius: f64) -> Self {
        Self { id: "p3".into(), kind: ProblemKind::P3_huber_continuum { radius, n: 1 } }
    }

    pub fn p4(n: usize, seed: u64) -> Self {
        Self { id: format!("p4_n{n}_s{seed}"), kind: ProblemKind::P4_affine_general { n, a: None, seed } }
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            ProblemKind::P1_trap => 1,
            ProblemKind::P2_piecewise_quadratic { n, .. } | ProblemKind::P3_huber_continuum { n, .. } => *n,
            ProblemKind::P4_affine_general { n, a, .. } => a.as_ref().map_or(*n, Vec::len),
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self.kind {
            ProblemKind::P1_trap => "P1",
            ProblemKind::P2_piecewise_quadratic { .. } => "P2",
            ProblemKind::P3_huber_continuum { .. } => "P3",
            ProblemKind::P4_affine_general { .. } => "P4",
        }
    }
}

/// `φ(x, t) = ⟨t, x⟩ − ‖t‖²/2`, maximized over a ball by projecting `x`.
#[derive(Clone, Copy, Debug, Default)]
pub struct HuberFamily;

impl ParamFamily for HuberFamily {
    fn value(&self, x: &Vector, t: &Vector) -> f64 {
        t.dot(x) - 0.5 * t.norm_squared()
    }

    fn grad_x(&self, _x: &Vector, t: &Vector) -> Vector {
        t.clone()
    }

    fn maximizer(&self, x: &Vector, domain: &Ball) -> Option<Vector> {
        Some(domain.project(x))
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn build_p2(n: usize, m: usize, sigma: f64, sigma_h: f64, seed: u64) -> Result<DCProgram> {
    if n == 0 || m == 0 {
        return Err(SolverError::InvalidSpec("P2 needs n ≥ 1 and m ≥ 1".into()));
    }
    if !(sigma > 0.0) || !(sigma_h > 0.0) {
        return Err(SolverError::InvalidSpec("P2 needs sigma > 0 and sigma_h > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n as f64).sqrt();
    let base = gaussian_matrix(&mut rng, n, n, scale);
    let factors: Vec<DMatrix<f64>> = (0..m).map(|_| gaussian_matrix(&mut rng, n, n, scale)).collect();
    // A stacks A0, every B_i and √σ_h·I, so Q − Q_i ⪰ A0ᵀA0 + σI
    let mut gram = base.transpose() * &base;
    for b in &factors {
        gram += b.transpose() * b;
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let q = gram + &eye * (sigma + sigma_h);
    let lin = gaussian_vector(&mut rng, n, 1.0);
    let g = Quadratic::new(q, lin, 0.0)?;
    let mut members: Vec<Arc<dyn SmoothConvex>> = Vec::with_capacity(m);
    for b in &factors {
        let qi = b.transpose() * b + &eye * sigma_h;
        let ci = gaussian_vector(&mut rng, n, 1.0);
        let di = rng.sample::<f64, _>(StandardNormal);
        members.push(Arc::new(Quadratic::new(qi, ci, di)?));
    }
    DCProgram::new(ConvexG::smooth_only(Arc::new(g)), HOracle::FiniteMax(FiniteMaxH::new(members)?))
}

/// Builds the program described by `spec`.
pub fn build_problem(spec: &ProblemSpec) -> Result<DCProgram> {
    match &spec.kind {
        ProblemKind::P1_trap => {
            let g = Quadratic::scaled_distance(&Vector::zeros(1), 1.0);
            let h = FiniteMaxH::new(vec![
                Arc::new(crate::oracle::Affine { slope: Vector::from_element(1, 1.0), offset: 0.0 }),
                Arc::new(crate::oracle::Affine { slope: Vector::from_element(1, -1.0), offset: 0.0 }),
            ])?;
            DCProgram::new(ConvexG::smooth_only(Arc::new(g)), HOracle::FiniteMax(h))
        }
        &ProblemKind::P2_piecewise_quadratic { n, m, sigma, sigma_h, seed } => build_p2(n, m, sigma, sigma_h, seed),
        &ProblemKind::P3_huber_continuum { radius, n } => {
            if n == 0 || !(radius > 0.0) {
                return Err(SolverError::InvalidSpec("P3 needs n ≥ 1 and radius > 0".into()));
            }
            let g = Quadratic::scaled_distance(&Vector::zeros(n), 2.0);
            let h = ParamMaxH::new(Arc::new(HuberFamily), Ball { center: Vector::zeros(n), radius }, 0.0)?;
            DCProgram::new(ConvexG::smooth_only(Arc::new(g)), HOracle::ParamMax(h))
        }
        ProblemKind::P4_affine_general { n, a, seed } => {
            let a = match a {
                Some(a) => Vector::from_vec(a.clone()),
                None => gaussian_vector(&mut ChaCha8Rng::seed_from_u64(*seed), *n, 1.0),
            };
            if a.is_empty() {
                return Err(SolverError::InvalidSpec("P4 needs n ≥ 1".into()));
            }
            crate::ensure_finite(&a, "P4 offset").map_err(|e| SolverError::InvalidSpec(e.to_string()))?;
            let g = Quadratic::scaled_distance(&a, 1.0);
            DCProgram::new(
                ConvexG::smooth_only(Arc::new(g)),
                HOracle::General(GeneralConvexH { oracle: Arc::new(L1Oracle) }),
            )
        }
    }
}

/// Every smooth oracle of the program (`g`'s smooth part and, for finite-max
/// `h`, each member), for gradient checks.
pub fn smooth_oracles(p: &DCProgram) -> Vec<Arc<dyn SmoothConvex>> {
    let mut out = vec![p.g.smooth.clone()];
    if let HOracle::FiniteMax(fm) = &p.h {
        out.extend(fm.members().iter().cloned());
    }
    out
}
