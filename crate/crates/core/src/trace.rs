use serde::{Deserialize, Serialize};

use crate::Vector;

/// Why a driver stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    StepAndResidualBelowTol,
    MaxIters,
    DivergenceDetected,
    /// The descent safeguard rejected the step even after a tighter re-solve.
    DescentSafeguard,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterateRecord {
    pub k: usize,
    pub x: Vector,
    pub f_value: f64,
    /// `‖x^{k+1} − x^k‖`
    pub step_norm: f64,
    pub index_set_size: usize,
    pub subproblems_solved: usize,
    pub chosen_index_tag: String,
    /// Constant `c` with `f(x^k) − f(x^{k+1}) ≥ (c/2)·step_norm²` guaranteed
    /// by the selected family, the prox weight and the next-step rule.
    pub descent_modulus: f64,
    pub wall_ns: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterateRecord>,
    pub termination: Termination,
    pub final_x: Vector,
    pub final_f: f64,
    pub total_subproblems: usize,
    /// Prox weight actually used by the run.
    pub prox_weight: f64,
}

impl RunTrace {
    /// `f(x^0), f(x^1), …, f(x_final)`.
    pub fn f_values(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.records.iter().map(|r| r.f_value).collect();
        out.push(self.final_f);
        out
    }

    /// Largest increase `f(x^{k+1}) − f(x^k)` over the run (≤ 0 when monotone).
    pub fn max_increase(&self) -> f64 {
        self.f_values().windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_monotone(&self, slack: f64) -> bool {
        self.f_values().windows(2).all(|w| w[1] <= w[0] + slack)
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::StepAndResidualBelowTol
    }
}
