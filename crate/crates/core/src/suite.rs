//! Desk-scale experiment suites and the cross-driver benchmark matrix.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::certify::Verdict;
use crate::config::SolverConfig;
use crate::drivers::SubgradientPolicy;
use crate::error::SolverError;
use crate::problems::ProblemSpec;
use crate::rate::fit_rate;
use crate::report::{strip_timestamp, trace_csv_string, ReportError};
use crate::runconfig::{run_config, Driver, RunConfig, RunError, RunOutcome, StartPoint};
use crate::selectors::covering::cover_ball;
use crate::selectors::{sample_ball, SelectorSpec};
use crate::Vector;

/// Active-set slack of the rate suite; wide enough that several pieces are
/// usually near-active, which is where Update 1 saves work.
pub const RATES_DELTA: f64 = 8.0;
/// Step tolerance of the rate suite, tight enough for a 30-point trace.
pub const RATES_TOL_STEP: f64 = 1e-14;
pub const RATES_INSTANCES: u64 = 10;
pub const RANDOMIZED_SEEDS: u64 = 20;
pub const COVERAGE_SAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteName {
    Trap,
    Rates,
    Randomized,
    Covering,
}

impl SuiteName {
    pub fn as_str(self) -> &'static str {
        match self {
            SuiteName::Trap => "trap",
            SuiteName::Rates => "rates",
            SuiteName::Randomized => "randomized",
            SuiteName::Covering => "covering",
        }
    }
}

impl FromStr for SuiteName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trap" => Ok(SuiteName::Trap),
            "rates" => Ok(SuiteName::Rates),
            "randomized" => Ok(SuiteName::Randomized),
            "covering" => Ok(SuiteName::Covering),
            other => Err(format!("unknown suite {other:?}")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteRow {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub name: &'static str,
    pub rows: Vec<SuiteRow>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0);
        let mut s = String::new();
        for r in &self.rows {
            let mark = if r.passed { "ok  " } else { "FAIL" };
            let _ = writeln!(s, "{mark} {:<width$}  {}", r.label, r.detail);
        }
        s
    }

    /// Writes `<suite>_summary.csv` into `dir`.
    pub fn write_summary(&self, dir: &Path) -> Result<std::path::PathBuf, ReportError> {
        std::fs::create_dir_all(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
        let path = dir.join(format!("{}_summary.csv", self.name));
        let mut w = csv::Writer::from_path(&path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|source| ReportError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}

fn row(label: impl Into<String>, passed: bool, detail: impl Into<String>) -> SuiteRow {
    SuiteRow { label: label.into(), passed, detail: detail.into() }
}

fn with_out(mut rc: RunConfig, out: Option<&Path>) -> RunConfig {
    rc.output_dir = out.map(Path::to_path_buf);
    rc
}

fn run_all(configs: &[RunConfig]) -> Vec<Result<RunOutcome, RunError>> {
    configs.par_iter().map(run_config).collect()
}

/// The trap suite's six P1 runs from `x0 = 0` with their expected verdicts.
pub fn trap_configs() -> Vec<(RunConfig, Verdict)> {
    let solver = SolverConfig { delta: Some(0.1), ..Default::default() };
    let base = |driver| {
        RunConfig::new(ProblemSpec::p1(), driver, StartPoint::Explicit(vec![0.0])).with_solver(solver.clone())
    };
    vec![
        (base(Driver::Dca).with_policy(SubgradientPolicy::FirstActive), Verdict::DStationary),
        (base(Driver::Dca).with_policy(SubgradientPolicy::AverageActive), Verdict::CriticalNotDStationary),
        (base(Driver::Dca).with_policy(SubgradientPolicy::MaximizerOracle), Verdict::DStationary),
        (
            base(Driver::Alg1).with_selector(SelectorSpec::Singleton { policy: SubgradientPolicy::AverageActive, rho: 0.0 }),
            Verdict::CriticalNotDStationary,
        ),
        (base(Driver::Alg1).with_selector(SelectorSpec::FullActive), Verdict::DStationary),
        (base(Driver::Alg1).with_selector(SelectorSpec::Update1), Verdict::DStationary),
    ]
}

pub fn trap_suite(out: Option<&Path>) -> Result<SuiteReport, RunError> {
    let cases = trap_configs();
    let configs: Vec<RunConfig> = cases.iter().map(|(rc, _)| with_out(rc.clone(), out)).collect();
    let mut rows = Vec::new();
    for ((rc, expected), res) in cases.iter().zip(run_all(&configs)) {
        let o = res?;
        let v = o.certificate.verdict;
        rows.push(row(
            rc.run_name(),
            v == *expected,
            format!(
                "x={:+.10} f={:+.10} iters={} verdict={v:?} dstat={:.3e} critical={:.3e}",
                o.trace.final_x[0],
                o.trace.final_f,
                o.trace.iterations(),
                o.certificate.dstat_residual,
                o.certificate.critical_residual
            ),
        ));
    }
    Ok(SuiteReport { name: "trap", rows })
}

/// One rate-suite run: P2 (n = 4, m = 3, σ = σ_h = 0.5) with the given
/// instance seed, started from `3·1`.
pub fn rates_config(seed: u64, selector: SelectorSpec) -> RunConfig {
    let solver = SolverConfig {
        delta: Some(RATES_DELTA),
        tol_step: RATES_TOL_STEP,
        seed,
        ..Default::default()
    };
    RunConfig::new(ProblemSpec::p2(4, 3, 0.5, seed), Driver::Alg1, StartPoint::Explicit(vec![3.0; 4]))
        .with_selector(selector)
        .with_solver(solver)
}

/// Per-instance outcome of the rate suite.
#[derive(Clone, Debug)]
pub struct RateRow {
    pub seed: u64,
    pub full: RunOutcome,
    pub update1: RunOutcome,
    pub fit: Result<crate::rate::RateFit, SolverError>,
}

impl RateRow {
    pub fn rate_ok(&self) -> bool {
        self.full.trace.converged() && matches!(&self.fit, Ok(f) if f.q_estimate < 1.0 && f.r_squared >= 0.9)
    }

    pub fn same_value(&self) -> bool {
        (self.full.trace.final_f - self.update1.trace.final_f).abs() <= 1e-6
    }

    pub fn cheaper(&self) -> bool {
        self.update1.trace.total_subproblems < self.full.trace.total_subproblems
    }
}

pub fn rates_runs(out: Option<&Path>) -> Result<Vec<RateRow>, RunError> {
    let configs: Vec<RunConfig> = (0..RATES_INSTANCES)
        .flat_map(|s| [rates_config(s, SelectorSpec::FullActive), rates_config(s, SelectorSpec::Update1)])
        .map(|rc| with_out(rc, out))
        .collect();
    let mut results = run_all(&configs).into_iter();
    let mut rows = Vec::new();
    for seed in 0..RATES_INSTANCES {
        let full = results.next().expect("paired")?;
        let update1 = results.next().expect("paired")?;
        let fit = fit_rate(&full.trace);
        rows.push(RateRow { seed, full, update1, fit });
    }
    Ok(rows)
}

pub fn rates_suite(out: Option<&Path>) -> Result<SuiteReport, RunError> {
    let runs = rates_runs(out)?;
    let mut rows: Vec<SuiteRow> = runs
        .iter()
        .map(|r| {
            let fit = match &r.fit {
                Ok(f) => format!("q={:.4} r2={:.5} model={:?}", f.q_estimate, f.r_squared, f.model),
                Err(e) => e.to_string(),
            };
            row(
                format!("p2_seed{}", r.seed),
                r.rate_ok() && r.same_value(),
                format!(
                    "iters={} {fit} f_full={:+.9} f_update1={:+.9} subproblems full={} update1={}",
                    r.full.trace.iterations(),
                    r.full.trace.final_f,
                    r.update1.trace.final_f,
                    r.full.trace.total_subproblems,
                    r.update1.trace.total_subproblems
                ),
            )
        })
        .collect();
    let cheaper = runs.iter().filter(|r| r.cheaper()).count();
    let never_worse = runs.iter().all(|r| r.update1.trace.total_subproblems <= r.full.trace.total_subproblems);
    rows.push(row(
        "update1_economy",
        never_worse && cheaper * 10 >= runs.len() * 8,
        format!("strictly fewer subproblems on {cheaper}/{}", runs.len()),
    ));
    Ok(SuiteReport { name: "rates", rows })
}

/// Randomized-suite configurations: `alg2` on P1 from each start, `alg3` on
/// P3 from 0.8.
pub fn randomized_configs(seeds: u64) -> Vec<RunConfig> {
    let mut out = Vec::new();
    for x0 in [0.0, -2.0, 0.7] {
        for seed in 0..seeds {
            let solver = SolverConfig { delta: Some(0.1), seed, ..Default::default() };
            let mut rc =
                RunConfig::new(ProblemSpec::p1(), Driver::Alg2, StartPoint::Explicit(vec![x0])).with_solver(solver);
            rc.problem.id = format!("p1_x{x0}");
            out.push(rc);
        }
    }
    for seed in 0..seeds {
        let solver = SolverConfig { seed, ..Default::default() };
        out.push(RunConfig::new(ProblemSpec::p3(1.0), Driver::Alg3, StartPoint::Explicit(vec![0.8])).with_solver(solver));
    }
    out
}

/// Whether a randomized run met its target.
pub fn randomized_target_met(rc: &RunConfig, o: &RunOutcome) -> bool {
    let target = match rc.driver {
        Driver::Alg3 => o.trace.final_x.amax() <= 1e-4,
        _ => o.certificate.verdict == Verdict::DStationary,
    };
    target && o.trace.is_monotone(1e-10)
}

/// Reruns `rc` and compares the trace CSVs with the timestamp line removed.
pub fn rerun_identical(rc: &RunConfig, first: &RunOutcome) -> Result<bool, RunError> {
    let mut again = rc.clone();
    again.output_dir = None;
    let second = run_config(&again)?;
    let a = trace_csv_string(&first.trace, false)?;
    let b = trace_csv_string(&second.trace, false)?;
    Ok(strip_timestamp(&a) == strip_timestamp(&b) && first.trace.final_x == second.trace.final_x)
}

pub fn randomized_suite(out: Option<&Path>) -> Result<SuiteReport, RunError> {
    let configs: Vec<RunConfig> = randomized_configs(RANDOMIZED_SEEDS).into_iter().map(|rc| with_out(rc, out)).collect();
    let outcomes: Vec<RunOutcome> = run_all(&configs).into_iter().collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for chunk in configs.iter().zip(&outcomes).collect::<Vec<_>>().chunks(RANDOMIZED_SEEDS as usize) {
        let (rc0, o0) = chunk[0];
        let met = chunk.iter().filter(|(rc, o)| randomized_target_met(rc, o)).count();
        let worst = chunk.iter().map(|(_, o)| o.trace.final_x.amax()).fold(0.0, f64::max);
        let label = format!("{}_{}", rc0.problem.id, rc0.driver.name());
        let reproducible = rerun_identical(rc0, o0)?;
        rows.push(row(
            label,
            met == chunk.len() && reproducible,
            format!(
                "targets met {met}/{} max|x_final|={worst:.3e} rerun_identical={reproducible}",
                chunk.len()
            ),
        ));
    }
    Ok(SuiteReport { name: "randomized", rows })
}

/// Coverage of one `(N, R, ε)` covering, measured on uniform samples.
#[derive(Clone, Debug)]
pub struct CoverageCheck {
    pub dim: usize,
    pub radius: f64,
    pub eps: f64,
    pub centers: usize,
    pub count_bound: f64,
    pub max_gap: f64,
}

impl CoverageCheck {
    pub fn passed(&self) -> bool {
        self.max_gap <= self.eps + 1e-12 && (self.centers as f64) <= self.count_bound
    }
}

pub fn coverage_check(dim: usize, radius: f64, eps: f64, samples: usize, seed: u64) -> Result<CoverageCheck, SolverError> {
    let center = Vector::zeros(dim);
    let cover = cover_ball(&center, radius, eps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_gap = (0..samples)
        .map(|_| cover.nearest_distance(&sample_ball(&mut rng, &center, radius)))
        .fold(0.0, f64::max);
    Ok(CoverageCheck { dim, radius, eps, centers: cover.len(), count_bound: cover.count_bound(), max_gap })
}

pub fn covering_checks() -> Result<Vec<CoverageCheck>, SolverError> {
    let mut out = Vec::new();
    for dim in 1..=3 {
        for eps in [1.0, 0.5, 0.25] {
            out.push(coverage_check(dim, 1.0, eps, COVERAGE_SAMPLES, dim as u64)?);
        }
    }
    Ok(out)
}

pub fn covering_suite() -> Result<SuiteReport, SolverError> {
    let rows = covering_checks()?
        .into_iter()
        .map(|c| {
            row(
                format!("N{}_R{}_eps{}", c.dim, c.radius, c.eps),
                c.passed(),
                format!("centers={} bound={:.1} max_gap={:.4}", c.centers, c.count_bound, c.max_gap),
            )
        })
        .collect();
    Ok(SuiteReport { name: "covering", rows })
}

pub fn run_suite(name: SuiteName, out: Option<&Path>) -> Result<SuiteReport, RunError> {
    let report = match name {
        SuiteName::Trap => trap_suite(out)?,
        SuiteName::Rates => rates_suite(out)?,
        SuiteName::Randomized => randomized_suite(out)?,
        SuiteName::Covering => covering_suite().map_err(|source| RunError::Solver { context: "covering".into(), source })?,
    };
    if let Some(dir) = out {
        report.write_summary(dir)?;
    }
    Ok(report)
}

/// Every compatible driver/selector on every problem family, per seed. The
/// seed drives the start point, the solver streams and the P2/P4 instance.
pub fn benchmark_matrix(seeds: std::ops::Range<u64>) -> Vec<RunConfig> {
    let mut out = Vec::new();
    for seed in seeds {
        let x0 = StartPoint::Generated { seed, scale: 2.0 };
        let solver = SolverConfig { seed, check_minorants: true, ..Default::default() };
        let p1 = ProblemSpec::p1();
        let p2 = ProblemSpec::p2(4, 3, 0.5, seed);
        let p3 = ProblemSpec::p3(1.0);
        let p4 = ProblemSpec::p4(3, seed);
        let rc = |p: &ProblemSpec, d| RunConfig::new(p.clone(), d, x0.clone()).with_solver(solver.clone());
        for p in [&p1, &p2] {
            out.push(rc(p, Driver::Dca).with_policy(SubgradientPolicy::FirstActive));
            out.push(rc(p, Driver::Dca).with_policy(SubgradientPolicy::AverageActive));
            out.push(rc(p, Driver::Alg1).with_selector(SelectorSpec::Singleton {
                policy: SubgradientPolicy::FirstActive,
                rho: 0.0,
            }));
            out.push(rc(p, Driver::Alg1).with_selector(SelectorSpec::FullActive));
            out.push(rc(p, Driver::Alg1).with_selector(SelectorSpec::Update1));
            out.push(rc(p, Driver::Alg2));
        }
        out.push(rc(&p3, Driver::Dca).with_policy(SubgradientPolicy::MaximizerOracle));
        out.push(rc(&p3, Driver::Alg1).with_selector(SelectorSpec::Update2));
        out.push(rc(&p3, Driver::Alg3));
        out.push(rc(&p4, Driver::Dca).with_policy(SubgradientPolicy::FirstActive));
        let mut upd3 = rc(&p4, Driver::Alg1).with_selector(SelectorSpec::Update3);
        upd3.solver.prox_weight = 1.0;
        out.push(upd3);
    }
    out
}

pub fn run_matrix(configs: &[RunConfig]) -> Vec<Result<RunOutcome, RunError>> {
    run_all(configs)
}
