//! Outer iteration loops: classical DCA, the deterministic minorant-family
//! method, and its two randomized variants.
//!
//! All drivers share one loop: propose candidates, pick `x^{k+1}` with the
//! configured rule, guard descent, record, and test the stopping rule. They
//! differ only in how candidates are proposed.

mod policy;

use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use policy::{CustomPolicy, SubgradientPolicy};

use crate::certify::dstat_residual;
use crate::config::{SolverConfig, Step3Rule, XiDistribution};
use crate::error::{Result, SolverError};
use crate::hfunc::{FiniteMaxH, HOracle, ParamMaxH};
use crate::program::DCProgram;
use crate::selectors::{
    sample_ball, select_full_active, verify_minorants, Minorant, Selector, SelectorSpec, SelectorState, Tag,
};
use crate::subsolver::{SubSolution, Subsolver};
use crate::trace::{IterateRecord, RunTrace, Termination};
use crate::Vector;

/// `f` values below this signal an unbounded program.
pub const DIVERGENCE_FLOOR: f64 = -1e15;

/// Prox weight switched on for Update 2 when the members are not strongly convex.
pub const FALLBACK_PROX_WEIGHT: f64 = 1.0;

const SURROGATE_SLACK: f64 = 1e-9;

const XI_STREAM: u64 = 0;
const PROBE_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// One solved subproblem, scored for the next-step rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub tag: Tag,
    /// Linearization slope `∇h_i(x^k)`.
    pub slope: Vector,
    pub z: Vector,
    /// `g(z) − ⟨∇h_i(x^k), z − x^k⟩ − h_i(x^k) + (μ/2)‖z − x^k‖²`; an upper
    /// bound on `f(z)`.
    pub surrogate: f64,
    pub f_value: f64,
    pub modulus: f64,
}

impl Candidate {
    fn score(&self, rule: Step3Rule, mu: f64, x_k: &Vector) -> f64 {
        match rule {
            Step3Rule::PaperSurrogate => self.surrogate,
            Step3Rule::FValue => self.f_value,
            Step3Rule::ProxRegularized => self.f_value + 0.5 * mu * (&self.z - x_k).norm_squared(),
        }
    }
}

/// Index of the best candidate; on ties (within `1e−12` relative) the
/// earliest candidate wins.
pub fn choose_candidate(cands: &[Candidate], rule: Step3Rule, mu: f64, x_k: &Vector) -> usize {
    let mut best = 0;
    let mut best_score = cands[0].score(rule, mu, x_k);
    for (i, c) in cands.iter().enumerate().skip(1) {
        let s = c.score(rule, mu, x_k);
        if s < best_score - 1e-12 * (1.0 + best_score.abs()) {
            best = i;
            best_score = s;
        }
    }
    best
}

struct Ctx<'a> {
    p: &'a DCProgram,
    cfg: &'a SolverConfig,
    solver: Subsolver,
    mu: f64,
    probe_rng: ChaCha8Rng,
}

impl Ctx<'_> {
    fn candidate(&self, x_k: &Vector, tag: Tag, slope: Vector, h_i: f64, modulus: f64, sol: SubSolution) -> Result<Candidate> {
        let z = sol.z;
        let d = &z - x_k;
        let mut surrogate = self.p.g.eval(&z) - slope.dot(&d) - h_i;
        if self.mu > 0.0 {
            surrogate += 0.5 * self.mu * d.norm_squared();
        }
        let f_value = self.p.f_value(&z)?;
        Ok(Candidate { tag, slope, z, surrogate, f_value, modulus })
    }

    fn minorant_candidate(&self, x_k: &Vector, m: &Minorant) -> Result<Candidate> {
        let slope = m.grad(x_k);
        crate::ensure_finite(&slope, "minorant gradient")?;
        let sol = self.solver.solve(&slope, x_k)?;
        self.candidate(x_k, m.tag.clone(), slope, m.eval(x_k), m.modulus, sol)
    }

    fn solve_family(&self, x_k: &Vector, family: &[Minorant]) -> Result<Vec<Candidate>> {
        if family.len() > 1 {
            family.par_iter().map(|m| self.minorant_candidate(x_k, m)).collect()
        } else {
            family.iter().map(|m| self.minorant_candidate(x_k, m)).collect()
        }
    }

    fn check_family(&mut self, x_k: &Vector, family: &[Minorant], cands: &[Candidate]) -> Result<()> {
        if !self.cfg.check_minorants {
            return Ok(());
        }
        verify_minorants(&self.p.h, x_k, family, &mut self.probe_rng)?;
        for c in cands {
            if c.surrogate < c.f_value - SURROGATE_SLACK {
                return Err(SolverError::MinorantViolation(format!(
                    "surrogate {} below f = {} for candidate {}",
                    c.surrogate, c.f_value, c.tag
                )));
            }
        }
        Ok(())
    }

    fn descent_modulus(&self, min_modulus: f64) -> f64 {
        match self.cfg.step3_rule {
            Step3Rule::PaperSurrogate => min_modulus + self.mu,
            Step3Rule::ProxRegularized => self.mu,
            Step3Rule::FValue => 0.0,
        }
    }
}

struct Proposal {
    cands: Vec<Candidate>,
    index_set_size: usize,
    min_modulus: f64,
    descent_override: Option<f64>,
}

/// How a driver proposes candidates at an iterate.
trait Proposer {
    fn propose(&mut self, ctx: &mut Ctx<'_>, k: usize, x_k: &Vector, delta: f64) -> Result<Proposal>;
    /// Whether the stopping rule also demands a small stationarity residual.
    fn certify_on_stop(&self) -> bool {
        true
    }
}

fn run_loop(p: &DCProgram, x0: &Vector, cfg: &SolverConfig, mu: f64, proposer: &mut dyn Proposer) -> Result<RunTrace> {
    cfg.validate()?;
    p.check_dim(x0)?;
    let mut x = x0.clone();
    let mut f = p.f_value(&x)?;
    if !f.is_finite() {
        return Err(SolverError::InvalidConfig("f is not finite at the starting point".into()));
    }
    let delta = cfg.resolved_delta(p.h_value(&x)?);
    let mut ctx = Ctx {
        p,
        cfg,
        solver: Subsolver::new(&p.g, mu, cfg.tol_sub, cfg.max_inner),
        mu,
        probe_rng: stream(cfg.seed, PROBE_STREAM),
    };
    let mut records = Vec::new();
    let mut total = 0;
    let mut termination = Termination::MaxIters;

    for k in 0..cfg.max_iters {
        let started = Instant::now();
        let prop = proposer.propose(&mut ctx, k, &x, delta)?;
        let solved = prop.cands.len();
        total += solved;
        let w = choose_candidate(&prop.cands, cfg.step3_rule, mu, &x);
        let mut winner = prop.cands[w].clone();
        let mut stalled = false;
        if winner.f_value > f + 1e-12 * (1.0 + f.abs()) {
            let sol = ctx.solver.solve_with_tol(&winner.slope, &x, cfg.tol_sub / 100.0)?;
            total += 1;
            let f_retry = p.f_value(&sol.z)?;
            if f_retry > f + 1e-12 * (1.0 + f.abs()) {
                stalled = true;
            } else {
                winner.z = sol.z;
                winner.f_value = f_retry;
            }
        }
        let step_norm = if stalled { 0.0 } else { (&winner.z - &x).norm() };
        records.push(IterateRecord {
            k,
            x: x.clone(),
            f_value: f,
            step_norm,
            index_set_size: prop.index_set_size,
            subproblems_solved: solved,
            chosen_index_tag: winner.tag.to_string(),
            descent_modulus: prop.descent_override.unwrap_or_else(|| ctx.descent_modulus(prop.min_modulus)),
            wall_ns: started.elapsed().as_nanos() as u64,
        });
        if stalled {
            log::warn!("descent safeguard stopped the run at iteration {k}");
            termination = Termination::DescentSafeguard;
            break;
        }
        x = winner.z;
        f = winner.f_value;
        if f < DIVERGENCE_FLOOR {
            termination = Termination::DivergenceDetected;
            break;
        }
        if step_norm <= cfg.tol_step
            && (!proposer.certify_on_stop() || dstat_residual(p, &x, cfg.cert_delta, cfg.tol_sub)? <= cfg.tol_stat)
        {
            termination = Termination::StepAndResidualBelowTol;
            break;
        }
    }
    Ok(RunTrace { records, termination, final_x: x, final_f: f, total_subproblems: total, prox_weight: mu })
}

struct DcaProposer<'a> {
    policy: &'a SubgradientPolicy,
}

impl Proposer for DcaProposer<'_> {
    fn propose(&mut self, ctx: &mut Ctx<'_>, _k: usize, x_k: &Vector, _delta: f64) -> Result<Proposal> {
        let y = self.policy.subgradient(&ctx.p.h, x_k)?;
        let sol = ctx.solver.solve(&y, x_k)?;
        let hx = ctx.p.h_value(x_k)?;
        let c = ctx.candidate(x_k, Tag::Tangent, y, hx, 0.0, sol)?;
        Ok(Proposal {
            cands: vec![c],
            index_set_size: 1,
            min_modulus: 0.0,
            descent_override: Some(ctx.p.g.modulus + ctx.mu),
        })
    }

    fn certify_on_stop(&self) -> bool {
        false
    }
}

/// Classical DCA: `y^k ∈ ∂h(x^k)` by `policy`, then
/// `x^{k+1} = argmin g − ⟨y^k, ·⟩ + (μ/2)‖· − x^k‖²`. Stops on a small step.
pub fn dca_run(p: &DCProgram, x0: &Vector, policy: &SubgradientPolicy, cfg: &SolverConfig) -> Result<RunTrace> {
    let mut prop = DcaProposer { policy };
    run_loop(p, x0, cfg, cfg.prox_weight, &mut prop)
}

struct FamilyProposer {
    selector: Selector,
}

impl Proposer for FamilyProposer {
    fn propose(&mut self, ctx: &mut Ctx<'_>, k: usize, x_k: &Vector, delta: f64) -> Result<Proposal> {
        let radius = match &ctx.p.h {
            HOracle::ParamMax(pm) => pm.domain.radius,
            _ => 1.0,
        };
        let eps_k = ctx.cfg.eps_schedule.eps(k, radius);
        let family = self.selector.select(&ctx.p.h, x_k, delta, eps_k, ctx.cfg.sample_count)?;
        let cands = ctx.solve_family(x_k, &family)?;
        ctx.check_family(x_k, &family, &cands)?;
        let min_modulus = family.iter().map(|m| m.modulus).fold(f64::INFINITY, f64::min);
        Ok(Proposal { cands, index_set_size: family.len(), min_modulus, descent_override: None })
    }
}

/// Effective prox weight for a selector, or a configuration error.
fn family_prox_weight(p: &DCProgram, selector: &SelectorSpec, cfg: &SolverConfig) -> Result<f64> {
    let mu = cfg.prox_weight;
    match (selector, &p.h) {
        (SelectorSpec::Update3, _) if mu <= 0.0 => Err(SolverError::InvalidConfig(
            "update3 uses affine minorants and needs prox_weight > 0".into(),
        )),
        (SelectorSpec::Update2, HOracle::ParamMax(pm)) if pm.member_modulus <= 0.0 && mu <= 0.0 => {
            log::warn!("parametric members are not strongly convex; using prox_weight = {FALLBACK_PROX_WEIGHT}");
            Ok(FALLBACK_PROX_WEIGHT)
        }
        _ => Ok(mu),
    }
}

/// Deterministic minorant-family method. Each iteration solves one
/// subproblem per selected minorant and keeps the best candidate.
pub fn alg1_run(p: &DCProgram, x0: &Vector, selector: &SelectorSpec, cfg: &SolverConfig) -> Result<RunTrace> {
    selector.check_compatible(&p.h)?;
    let mu = family_prox_weight(p, selector, cfg)?;
    let mut prop = FamilyProposer {
        selector: Selector { spec: selector.clone(), state: SelectorState::new(cfg.k0, cfg.seed) },
    };
    run_loop(p, x0, cfg, mu, &mut prop)
}

fn sample_index(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    if weights.len() == 1 {
        return 0;
    }
    match WeightedIndex::new(weights) {
        Ok(d) => d.sample(rng),
        Err(_) => rng.random_range(0..weights.len()),
    }
}

struct FiniteRandomProposer<'a> {
    h: &'a FiniteMaxH,
    rng: ChaCha8Rng,
}

impl Proposer for FiniteRandomProposer<'_> {
    fn propose(&mut self, ctx: &mut Ctx<'_>, _k: usize, x_k: &Vector, delta: f64) -> Result<Proposal> {
        let family = select_full_active(self.h, x_k, delta)?;
        let lead = self.h.first_active(x_k)?;
        let weights: Vec<f64> = match ctx.cfg.xi_distribution {
            XiDistribution::Uniform => vec![1.0; family.len()],
            XiDistribution::Softmax { temperature } => {
                let hx = self.h.value(x_k)?;
                family.iter().map(|m| ((m.eval(x_k) - hx) / temperature).exp()).collect()
            }
        };
        let xi = &family[sample_index(&mut self.rng, &weights)];
        let lead_m = family.iter().find(|m| m.tag == Tag::Member(lead)).expect("lead is active");
        let mut picked = vec![lead_m.clone()];
        if xi.tag != lead_m.tag {
            picked.push(xi.clone());
        }
        let cands = ctx.solve_family(x_k, &picked)?;
        ctx.check_family(x_k, &family, &cands)?;
        let min_modulus = picked.iter().map(|m| m.modulus).fold(f64::INFINITY, f64::min);
        Ok(Proposal { cands, index_set_size: family.len(), min_modulus, descent_override: None })
    }
}

/// Randomized method for finite-max `h`: per iteration, one exactly active
/// member plus one member drawn from `M_δ(x^k)`.
pub fn alg2_run(p: &DCProgram, x0: &Vector, cfg: &SolverConfig) -> Result<RunTrace> {
    let HOracle::FiniteMax(h) = &p.h else {
        return Err(SolverError::InvalidConfig("alg2 needs a finite-max h".into()));
    };
    let mut prop = FiniteRandomProposer { h, rng: stream(cfg.seed, XI_STREAM) };
    run_loop(p, x0, cfg, cfg.prox_weight, &mut prop)
}

struct ParamRandomProposer<'a> {
    h: &'a ParamMaxH,
    rng: ChaCha8Rng,
}

impl Proposer for ParamRandomProposer<'_> {
    fn propose(&mut self, ctx: &mut Ctx<'_>, _k: usize, x_k: &Vector, _delta: f64) -> Result<Proposal> {
        let xi = sample_ball(&mut self.rng, &self.h.domain.center, self.h.domain.radius);
        let t_k = self.h.maximizer(x_k)?;
        let picked = vec![param_minorant(self.h, t_k), param_minorant(self.h, xi)];
        let cands = ctx.solve_family(x_k, &picked)?;
        ctx.check_family(x_k, &picked, &cands)?;
        Ok(Proposal { cands, index_set_size: picked.len(), min_modulus: self.h.member_modulus, descent_override: None })
    }
}

fn param_minorant(h: &ParamMaxH, t: Vector) -> Minorant {
    Minorant {
        tag: Tag::quantize(&t),
        shape: crate::selectors::MinorantShape::Param { family: h.family.clone(), t: t.clone() },
        modulus: h.member_modulus,
        param: Some(t),
    }
}

/// Randomized method for parametric `h`: per iteration, the maximizer `t_k`
/// plus one parameter drawn uniformly from the parameter ball.
pub fn alg3_run(p: &DCProgram, x0: &Vector, cfg: &SolverConfig) -> Result<RunTrace> {
    let HOracle::ParamMax(h) = &p.h else {
        return Err(SolverError::InvalidConfig("alg3 needs a parametric h".into()));
    };
    let mut prop = ParamRandomProposer { h, rng: stream(cfg.seed, XI_STREAM) };
    run_loop(p, x0, cfg, cfg.prox_weight, &mut prop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_problem, ProblemSpec};
    use nalgebra::dvector;

    fn cand(tag: usize, z: f64, surrogate: f64, f_value: f64) -> Candidate {
        Candidate {
            tag: Tag::Member(tag),
            slope: dvector![0.0],
            z: dvector![z],
            surrogate,
            f_value,
            modulus: 0.0,
        }
    }

    #[test]
    fn ties_go_to_the_earliest_candidate() {
        let cands = [cand(0, 1.0, -0.5, -0.5), cand(1, -1.0, -0.5, -0.5)];
        assert_eq!(choose_candidate(&cands, Step3Rule::PaperSurrogate, 0.0, &dvector![0.0]), 0);
    }

    #[test]
    fn rules_score_differently() {
        let x = dvector![0.0];
        let cands = [cand(0, 2.0, -1.0, -0.9), cand(1, 0.1, -0.8, -0.85)];
        assert_eq!(choose_candidate(&cands, Step3Rule::PaperSurrogate, 1.0, &x), 0);
        assert_eq!(choose_candidate(&cands, Step3Rule::FValue, 1.0, &x), 0);
        // −0.9 + 2 versus −0.85 + 0.005
        assert_eq!(choose_candidate(&cands, Step3Rule::ProxRegularized, 1.0, &x), 1);
    }

    #[test]
    fn dca_first_active_leaves_the_kink() {
        let p = build_problem(&ProblemSpec::p1()).unwrap();
        let t = dca_run(&p, &dvector![0.0], &SubgradientPolicy::FirstActive, &SolverConfig::default()).unwrap();
        assert_eq!(t.records[0].x[0], 0.0);
        assert_eq!(t.records[1].x[0], 1.0);
        assert_eq!(t.final_x[0], 1.0);
        assert_eq!(t.final_f, -0.5);
    }

    #[test]
    fn dca_from_two() {
        let p = build_problem(&ProblemSpec::p1()).unwrap();
        let t = dca_run(&p, &dvector![2.0], &SubgradientPolicy::FirstActive, &SolverConfig::default()).unwrap();
        assert_eq!(t.records[1].x[0], 1.0);
        assert!(t.converged());
    }

    #[test]
    fn invalid_start_rejected() {
        let p = build_problem(&ProblemSpec::p1()).unwrap();
        let cfg = SolverConfig::default();
        assert!(matches!(
            dca_run(&p, &dvector![0.0, 1.0], &SubgradientPolicy::FirstActive, &cfg),
            Err(SolverError::DimensionMismatch { .. })
        ));
        assert!(dca_run(&p, &dvector![f64::NAN], &SubgradientPolicy::FirstActive, &cfg).is_err());
    }

    #[test]
    fn update3_needs_prox_weight() {
        let p = build_problem(&ProblemSpec::p4(2, 0)).unwrap();
        let r = alg1_run(&p, &dvector![0.0, 0.0], &SelectorSpec::Update3, &SolverConfig::default());
        assert!(matches!(r, Err(SolverError::InvalidConfig(_))));
    }

    #[test]
    fn randomized_drivers_check_h_kind() {
        let p1 = build_problem(&ProblemSpec::p1()).unwrap();
        let p3 = build_problem(&ProblemSpec::p3(1.0)).unwrap();
        assert!(alg3_run(&p1, &dvector![0.0], &SolverConfig::default()).is_err());
        assert!(alg2_run(&p3, &dvector![0.0], &SolverConfig::default()).is_err());
    }

    #[test]
    fn max_iters_is_reported() {
        let p = build_problem(&ProblemSpec::p2(3, 2, 0.5, 1)).unwrap();
        let cfg = SolverConfig { max_iters: 3, ..Default::default() };
        let t = alg1_run(&p, &Vector::from_element(3, 2.0), &SelectorSpec::FullActive, &cfg).unwrap();
        assert_eq!(t.termination, Termination::MaxIters);
        assert_eq!(t.iterations(), 3);
    }
}
