//! Solver tolerances and strategy knobs.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};

/// How `x^{k+1}` is picked among the candidate subproblem solutions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step3Rule {
    /// Minimize the DC surrogate `g(z) − ⟨∇h_i(x^k), z − x^k⟩ − h_i(x^k)`
    /// (plus `μ/2‖z − x^k‖²` when a prox weight is set).
    #[default]
    PaperSurrogate,
    /// Minimize `f(z)` directly.
    FValue,
    /// Minimize `f(z) + μ/2‖z − x^k‖²`.
    ProxRegularized,
}

/// Decay of the covering radius `ε_k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsDecay {
    /// `ε_k = ε₀ / (k + 1)`
    #[default]
    Harmonic,
    /// `ε_k = ε₀ · ratio^k`
    Geometric { ratio: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsSchedule {
    /// `None` means half the radius of the parameter ball.
    #[serde(default)]
    pub eps0: Option<f64>,
    #[serde(default)]
    pub decay: EpsDecay,
}

impl EpsSchedule {
    pub fn eps(&self, k: usize, radius: f64) -> f64 {
        let e0 = self.eps0.unwrap_or(0.5 * radius);
        match self.decay {
            EpsDecay::Harmonic => e0 / (k as f64 + 1.0),
            EpsDecay::Geometric { ratio } => e0 * ratio.powi(k.min(i32::MAX as usize) as i32),
        }
    }
}

/// Sampling distribution of the randomized index `ξ_k` over `I(x^k)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XiDistribution {
    #[default]
    Uniform,
    /// Weights `∝ exp((h_i(x^k) − h(x^k)) / temperature)`.
    Softmax { temperature: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Active-set slack δ; `None` means `1e−2·(1 + |h(x⁰)|)`.
    pub delta: Option<f64>,
    /// Exclusion window of Updates 1–3.
    pub k0: usize,
    pub eps_schedule: EpsSchedule,
    /// Proximal weight μ added to every subproblem.
    pub prox_weight: f64,
    pub step3_rule: Step3Rule,
    pub tol_step: f64,
    pub tol_stat: f64,
    pub tol_sub: f64,
    pub max_iters: usize,
    pub max_inner: usize,
    pub seed: u64,
    /// Subgradient samples per iteration for Update 3.
    pub sample_count: usize,
    pub xi_distribution: XiDistribution,
    /// Active-set slack used by the stationarity check in the stopping rule.
    pub cert_delta: f64,
    /// Verify tangency and minoration of every selected family.
    pub check_minorants: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta: None,
            k0: 2,
            eps_schedule: EpsSchedule::default(),
            prox_weight: 0.0,
            step3_rule: Step3Rule::PaperSurrogate,
            tol_step: 1e-8,
            tol_stat: 1e-6,
            tol_sub: 1e-10,
            max_iters: 10_000,
            max_inner: 10_000,
            seed: 0,
            sample_count: 8,
            xi_distribution: XiDistribution::Uniform,
            cert_delta: 0.0,
            check_minorants: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(SolverError::InvalidConfig(msg.to_string()));
        if let Some(d) = self.delta {
            if !(d > 0.0) || !d.is_finite() {
                return bad("delta must be positive and finite");
            }
        }
        if !(self.tol_step > 0.0 && self.tol_stat > 0.0 && self.tol_sub > 0.0) {
            return bad("tolerances must be strictly positive");
        }
        if !(self.prox_weight >= 0.0) || !self.prox_weight.is_finite() {
            return bad("prox_weight must be a finite nonnegative number");
        }
        if self.sample_count == 0 {
            return bad("sample_count must be at least 1");
        }
        if !(self.cert_delta >= 0.0) {
            return bad("cert_delta must be nonnegative");
        }
        if let Some(e0) = self.eps_schedule.eps0 {
            if !(e0 > 0.0) {
                return bad("eps0 must be positive");
            }
        }
        if let EpsDecay::Geometric { ratio } = self.eps_schedule.decay {
            if !(ratio > 0.0 && ratio < 1.0) {
                return bad("geometric eps ratio must lie in (0, 1)");
            }
        }
        if let XiDistribution::Softmax { temperature } = self.xi_distribution {
            if !(temperature > 0.0) {
                return bad("softmax temperature must be positive");
            }
        }
        Ok(())
    }

    /// δ to use for a run whose initial `h` value is `h0`.
    pub fn resolved_delta(&self, h0: f64) -> f64 {
        self.delta.unwrap_or(1e-2 * (1.0 + h0.abs()))
    }
}
