//! JSON run configurations and their execution.
//!
//! A config names a problem, a driver, the selector or subgradient policy,
//! solver settings and a starting point:
//!
//! ```json
//! {
//!   "schema": 1,
//!   "problem": { "id": "p1", "kind": "P1_trap" },
//!   "driver": "alg1",
//!   "selector": { "kind": "full_active" },
//!   "solver": { "delta": 0.1 },
//!   "x0": [0.0],
//!   "output_dir": "out"
//! }
//! ```

use std::path::{Path, PathBuf};

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::{certify, Certificate};
use crate::config::SolverConfig;
use crate::drivers::{alg1_run, alg2_run, alg3_run, dca_run, SubgradientPolicy};
use crate::error::SolverError;
use crate::problems::{build_problem, ProblemKind, ProblemSpec};
use crate::program::DCProgram;
use crate::report::{save_certificate_json, save_trace_csv, ReportError};
use crate::selectors::SelectorSpec;
use crate::trace::RunTrace;
use crate::Vector;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid run config: {0}")]
    Invalid(String),
    #[error("{context}: {source}")]
    Solver { context: String, source: SolverError },
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl RunError {
    fn solver(context: impl Into<String>) -> impl FnOnce(SolverError) -> RunError {
        let context = context.into();
        move |source| RunError::Solver { context, source }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    Dca,
    Alg1,
    Alg2,
    Alg3,
}

impl Driver {
    pub fn name(self) -> &'static str {
        match self {
            Driver::Dca => "dca",
            Driver::Alg1 => "alg1",
            Driver::Alg2 => "alg2",
            Driver::Alg3 => "alg3",
        }
    }
}

fn unit() -> f64 {
    1.0
}

/// Explicit coordinates, or a seeded uniform draw from `[−scale, scale]^n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StartPoint {
    Explicit(Vec<f64>),
    Generated {
        seed: u64,
        #[serde(default = "unit")]
        scale: f64,
    },
}

impl StartPoint {
    pub fn resolve(&self, dim: usize) -> Result<Vector, RunError> {
        match self {
            StartPoint::Explicit(v) if v.len() == dim => Ok(Vector::from_column_slice(v)),
            StartPoint::Explicit(v) => {
                Err(RunError::Invalid(format!("x0 has {} coordinates, the problem has {dim}", v.len())))
            }
            StartPoint::Generated { seed, scale } => {
                if !(*scale > 0.0) || !scale.is_finite() {
                    return Err(RunError::Invalid("x0 scale must be positive".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let dist = Uniform::new_inclusive(-*scale, *scale).expect("valid range");
                Ok(Vector::from_iterator(dim, dist.sample_iter(&mut rng).take(dim)))
            }
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub problem: ProblemSpec,
    pub driver: Driver,
    /// Required by `alg1`; rejected by the other drivers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<SelectorSpec>,
    /// Subgradient policy of `dca`.
    #[serde(default)]
    pub policy: SubgradientPolicy,
    #[serde(default)]
    pub solver: SolverConfig,
    pub x0: StartPoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Write measured wall times into the trace (breaks byte reproducibility).
    #[serde(default)]
    pub record_timing: bool,
}

impl RunConfig {
    pub fn new(problem: ProblemSpec, driver: Driver, x0: StartPoint) -> Self {
        Self {
            schema: SCHEMA_VERSION,
            problem,
            driver,
            selector: None,
            policy: SubgradientPolicy::default(),
            solver: SolverConfig::default(),
            x0,
            output_dir: None,
            record_timing: false,
        }
    }

    pub fn with_selector(mut self, selector: SelectorSpec) -> Self {
        self.selector = Some(selector);
        self
    }

    pub fn with_policy(mut self, policy: SubgradientPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_solver(mut self, solver: SolverConfig) -> Self {
        self.solver = solver;
        self
    }

    /// Parses and validates a config; syntax and type errors carry the line
    /// and column reported by the JSON parser.
    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let rc: RunConfig = serde_json::from_str(text).map_err(|e| RunError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        rc.validate()?;
        Ok(rc)
    }

    pub fn from_path(path: &Path) -> Result<Self, RunError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| RunError::Read { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run configs serialize")
    }

    /// Schema version, driver/selector/problem compatibility and solver
    /// settings.
    pub fn validate(&self) -> Result<(), RunError> {
        if self.schema != SCHEMA_VERSION {
            return Err(RunError::Invalid(format!(
                "unsupported schema {}, expected {SCHEMA_VERSION}",
                self.schema
            )));
        }
        self.solver.validate().map_err(RunError::solver("solver"))?;
        let finite = matches!(
            self.problem.kind,
            ProblemKind::P1_trap | ProblemKind::P2_piecewise_quadratic { .. }
        );
        let param = matches!(self.problem.kind, ProblemKind::P3_huber_continuum { .. });
        let general = matches!(self.problem.kind, ProblemKind::P4_affine_general { .. });
        let problem = self.problem.short_name();
        match (self.driver, &self.selector) {
            (Driver::Alg1, None) => return Err(RunError::Invalid("alg1 needs a selector".into())),
            (Driver::Alg1, Some(sel)) => {
                let ok = match sel {
                    SelectorSpec::Singleton { .. } => true,
                    SelectorSpec::FullActive | SelectorSpec::Update1 => finite,
                    SelectorSpec::Update2 => param,
                    SelectorSpec::Update3 => general,
                };
                if !ok {
                    return Err(RunError::Invalid(format!("selector {} does not apply to {problem}", sel.name())));
                }
            }
            (d, Some(_)) => return Err(RunError::Invalid(format!("driver {} takes no selector", d.name()))),
            (Driver::Alg2, None) if !finite => {
                return Err(RunError::Invalid(format!("alg2 needs a finite-max problem, got {problem}")))
            }
            (Driver::Alg3, None) if !param => {
                return Err(RunError::Invalid(format!("alg3 needs a parametric problem, got {problem}")))
            }
            _ => {}
        }
        if matches!(self.policy, SubgradientPolicy::AverageActive) && !finite && self.driver == Driver::Dca {
            return Err(RunError::Invalid("average_active needs a finite-max problem".into()));
        }
        Ok(())
    }

    /// `<problem id>_<driver>[_<selector or policy>]_s<seed>`.
    pub fn run_name(&self) -> String {
        let id = if self.problem.id.is_empty() { self.problem.short_name().to_lowercase() } else { self.problem.id.clone() };
        let variant = match (self.driver, &self.selector) {
            (Driver::Alg1, Some(s)) => format!("_{}", s.name()),
            (Driver::Dca, _) => format!("_{}", self.policy.name()),
            _ => String::new(),
        };
        format!("{id}_{}{variant}_s{}", self.driver.name(), self.solver.seed)
    }
}

/// Result of [`run_config`].
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub certificate: Certificate,
    pub trace_path: Option<PathBuf>,
    pub certificate_path: Option<PathBuf>,
}

/// Runs the configured driver without touching the filesystem.
pub fn execute(rc: &RunConfig) -> Result<(DCProgram, RunTrace), RunError> {
    rc.validate()?;
    let p = build_problem(&rc.problem).map_err(RunError::solver(format!("building {}", rc.problem.short_name())))?;
    let x0 = rc.x0.resolve(p.dim)?;
    let ctx = format!("running {}", rc.run_name());
    let trace = match (rc.driver, &rc.selector) {
        (Driver::Dca, _) => dca_run(&p, &x0, &rc.policy, &rc.solver),
        (Driver::Alg1, Some(sel)) => alg1_run(&p, &x0, sel, &rc.solver),
        (Driver::Alg1, None) => unreachable!("validated"),
        (Driver::Alg2, _) => alg2_run(&p, &x0, &rc.solver),
        (Driver::Alg3, _) => alg3_run(&p, &x0, &rc.solver),
    }
    .map_err(RunError::solver(ctx))?;
    Ok((p, trace))
}

/// Certifies `x` for the config's problem at the config's tolerances.
pub fn certify_point(rc: &RunConfig, p: &DCProgram, x: &Vector) -> Result<Certificate, RunError> {
    certify(p, x, rc.solver.cert_delta, rc.solver.tol_stat, rc.solver.tol_sub).map_err(RunError::solver("certifying"))
}

/// Runs, certifies the final iterate, and writes `<name>.trace.csv` and
/// `<name>.certificate.json` into `output_dir` when one is configured.
pub fn run_config(rc: &RunConfig) -> Result<RunOutcome, RunError> {
    let (p, trace) = execute(rc)?;
    let certificate = certify_point(rc, &p, &trace.final_x)?;
    let (mut trace_path, mut certificate_path) = (None, None);
    if let Some(dir) = &rc.output_dir {
        std::fs::create_dir_all(dir).map_err(|source| RunError::Read { path: dir.clone(), source })?;
        let name = rc.run_name();
        let tp = dir.join(format!("{name}.trace.csv"));
        let cp = dir.join(format!("{name}.certificate.json"));
        save_trace_csv(&tp, &trace, rc.record_timing)?;
        save_certificate_json(&cp, &certificate)?;
        trace_path = Some(tp);
        certificate_path = Some(cp);
    }
    Ok(RunOutcome { trace, certificate, trace_path, certificate_path })
}
