//! Solvers for difference-of-convex programs `min f = g − h` that reach
//! directional-stationary points rather than mere critical points.
//!
//! The crate provides
//!
//! * oracles for `g` (smooth part plus prox-friendly part) and for `h` as a
//!   finite max, a parametric max over a ball, or a general convex function
//!   with a subgradient oracle ([`oracle`], [`hfunc`]);
//! * an inner convex solver ([`subsolver`]);
//! * minorant-family selectors ([`selectors`]) and the outer drivers:
//!   classical DCA, the deterministic family method and two randomized
//!   variants ([`drivers`]);
//! * a stationarity certifier ([`certify`]);
//! * a problem library, JSON run configs, CSV/JSON reports, rate fitting and
//!   benchmark suites ([`problems`], [`runconfig`], [`report`], [`rate`],
//!   [`suite`]).
//!
//! ```
//! use dcstat::problems::{build_problem, ProblemSpec};
//! use dcstat::drivers::alg1_run;
//! use dcstat::selectors::SelectorSpec;
//! use dcstat::SolverConfig;
//! use nalgebra::dvector;
//!
//! let p = build_problem(&ProblemSpec::p1()).unwrap();
//! let cfg = SolverConfig { delta: Some(0.1), ..Default::default() };
//! let trace = alg1_run(&p, &dvector![0.0], &SelectorSpec::FullActive, &cfg).unwrap();
//! assert!((trace.final_x[0] - 1.0).abs() < 1e-8);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod config;
pub mod drivers;
pub mod error;
pub mod hfunc;
pub mod oracle;
pub mod problems;
pub mod program;
pub mod rate;
pub mod report;
pub mod runconfig;
pub mod selectors;
pub mod subsolver;
pub mod suite;
pub mod trace;

pub use certify::{certify, Certificate, Verdict};
pub use config::{EpsDecay, EpsSchedule, SolverConfig, Step3Rule, XiDistribution};
pub use error::{Result, SolverError};
pub use hfunc::{Ball, FiniteMaxH, GeneralConvexH, HOracle, ParamFamily, ParamMaxH, SubgradOracle};
pub use oracle::{ConvexG, ProxConvex, Quadratic, SmoothConvex};
pub use program::DCProgram;
pub use trace::{IterateRecord, RunTrace, Termination};

pub use nalgebra;

/// Dense real vector.
pub type Vector = nalgebra::DVector<f64>;

/// Rejects vectors with NaN or infinite coordinates.
pub fn ensure_finite(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(SolverError::Oracle(format!("{what} has non-finite coordinates")))
    }
}
