//! Empirical convergence-rate fits on run traces.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SolverError};
use crate::trace::RunTrace;

/// Minimum iterations a trace needs before a fit is attempted.
pub const MIN_ITERATIONS: usize = 30;
/// Minimum number of tail points used by a fit.
pub const MIN_TAIL_POINTS: usize = 10;
/// Points dropped at the end of the tail, where `x^k − x^K` collapses to 0.
pub const TAIL_TRIM: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `‖x^k − x^∞‖ ≈ C·q^k`
    Geometric,
    /// `‖x^k − x^∞‖ ≈ C·k^{−p}`
    Power,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// `exp(slope)` of the log-linear fit.
    pub q_estimate: f64,
    /// Coefficient of determination of the geometric fit.
    pub r_squared: f64,
    pub tail_start: usize,
    pub tail_end: usize,
    /// Whichever model explains the tail better.
    pub model: RateModel,
    /// Decay exponent `p` and r² of the log-log fit.
    pub power_exponent: f64,
    pub power_r_squared: f64,
}

struct LineFit {
    slope: f64,
    r_squared: f64,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 0.0 };
    LineFit { slope, r_squared }
}

/// Fits `log‖x^k − x^K‖` against `k` over `[K/2, K − 5]`, with the final
/// iterate `x^K` standing in for the unknown limit.
pub fn fit_rate(trace: &RunTrace) -> Result<RateFit> {
    if !trace.converged() {
        return Err(SolverError::InsufficientData(format!(
            "trace ended with {:?}, not convergence",
            trace.termination
        )));
    }
    let k_final = trace.records.len();
    if k_final < MIN_ITERATIONS {
        return Err(SolverError::InsufficientData(format!(
            "{k_final} iterations, need at least {MIN_ITERATIONS}"
        )));
    }
    let tail_end = k_final - TAIL_TRIM;
    let tail_start = (k_final / 2).min(tail_end + 1 - MIN_TAIL_POINTS);
    let (ks, logs): (Vec<f64>, Vec<f64>) = trace.records[tail_start..=tail_end]
        .iter()
        .filter_map(|r| {
            let e = (&r.x - &trace.final_x).norm();
            (e > 0.0 && e.is_finite()).then(|| (r.k as f64, e.ln()))
        })
        .unzip();
    if ks.len() < MIN_TAIL_POINTS {
        return Err(SolverError::InsufficientData(format!(
            "only {} tail points differ from the final iterate",
            ks.len()
        )));
    }
    if logs.iter().all(|&l| l == logs[0]) {
        return Err(SolverError::InsufficientData("no variation over the tail".into()));
    }
    let geo = least_squares(&ks, &logs);
    let log_ks: Vec<f64> = ks.iter().map(|&k| (k + 1.0).ln()).collect();
    let pow = least_squares(&log_ks, &logs);
    let model = if pow.r_squared > geo.r_squared { RateModel::Power } else { RateModel::Geometric };
    Ok(RateFit {
        q_estimate: geo.slope.exp(),
        r_squared: geo.r_squared,
        tail_start,
        tail_end,
        model,
        power_exponent: -pow.slope,
        power_r_squared: pow.r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{IterateRecord, Termination};
    use crate::Vector;
    use approx::assert_abs_diff_eq;

    fn synthetic(xs: impl Fn(usize) -> f64, count: usize, last: f64) -> RunTrace {
        let records = (0..count)
            .map(|k| IterateRecord {
                k,
                x: Vector::from_element(1, xs(k)),
                f_value: 0.0,
                step_norm: 0.0,
                index_set_size: 1,
                subproblems_solved: 1,
                chosen_index_tag: "0".into(),
                descent_modulus: 0.0,
                wall_ns: 0,
            })
            .collect();
        RunTrace {
            records,
            termination: Termination::StepAndResidualBelowTol,
            final_x: Vector::from_element(1, last),
            final_f: 0.0,
            total_subproblems: count,
            prox_weight: 0.0,
        }
    }

    #[test]
    fn exact_geometric() {
        let fit = fit_rate(&synthetic(|k| 0.5f64.powi(k as i32), 60, 0.0)).unwrap();
        assert_abs_diff_eq!(fit.q_estimate, 0.5, epsilon = 1e-6);
        assert!(fit.r_squared >= 0.999);
        assert_eq!(fit.model, RateModel::Geometric);
        assert_eq!(fit.tail_start, 30);
        assert_eq!(fit.tail_end, 55);
    }

    #[test]
    fn power_law_is_recognised() {
        let fit = fit_rate(&synthetic(|k| 1.0 / (k as f64 + 1.0).powi(2), 200, 0.0)).unwrap();
        assert_eq!(fit.model, RateModel::Power);
        assert_abs_diff_eq!(fit.power_exponent, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn constant_trace_is_insufficient() {
        let err = fit_rate(&synthetic(|_| 1.0, 60, 1.0)).unwrap_err();
        assert!(matches!(err, SolverError::InsufficientData(_)));
    }

    #[test]
    fn short_or_unconverged_trace_is_insufficient() {
        assert!(fit_rate(&synthetic(|k| 0.5f64.powi(k as i32), 20, 0.0)).is_err());
        let mut t = synthetic(|k| 0.5f64.powi(k as i32), 60, 0.0);
        t.termination = Termination::MaxIters;
        assert!(fit_rate(&t).is_err());
    }
}
