//! Selection of the differentiable convex minorant family `{h_i : i ∈ I(x^k)}`.
//!
//! Every selector returns minorants that touch `h` at the current iterate and
//! stay below it everywhere. The exclusion-window strategies (Updates 1–3)
//! keep a short history of what was selected and drop candidates that were
//! tried recently, always re-including one exact maximizer.

pub mod covering;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use covering::{cover_ball, Covering};

use crate::drivers::SubgradientPolicy;
use crate::error::{Result, SolverError};
use crate::hfunc::{fp_slack, FiniteMaxH, GeneralConvexH, HOracle, ParamFamily, ParamMaxH};
use crate::oracle::SmoothConvex;
use crate::Vector;

/// Grid used to turn parameter coordinates into exclusion-window identities.
pub const TAG_QUANTUM: f64 = 1e-9;

const PROBE_COUNT: usize = 100;
const MINORATION_SLACK: f64 = 1e-9;
const TANGENCY_RTOL: f64 = 1e-10;

/// Stable, ordered identity of a minorant.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    /// Member index of a finite max.
    Member(usize),
    /// Quantized parameter (Update 2) or slope (Update 3).
    Point(Vec<i64>),
    /// The single linearization of the singleton selector.
    Tangent,
}

impl Tag {
    pub fn quantize(t: &Vector) -> Self {
        Tag::Point(t.iter().map(|&v| (v / TAG_QUANTUM).round() as i64).collect())
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Member(i) => write!(f, "{i}"),
            Tag::Point(q) => {
                f.write_str("t")?;
                for (j, v) in q.iter().enumerate() {
                    let sep = if j == 0 { ':' } else { ';' };
                    write!(f, "{sep}{}", *v as f64 * TAG_QUANTUM)?;
                }
                Ok(())
            }
            Tag::Tangent => f.write_str("y"),
        }
    }
}

#[derive(Clone)]
pub enum MinorantShape {
    Member(Arc<dyn SmoothConvex>),
    Param { family: Arc<dyn ParamFamily>, t: Vector },
    /// `(ρ/2)‖z − center‖² + ⟨slope, z − center⟩ + value`; affine when `ρ = 0`.
    Quadratic { center: Vector, slope: Vector, value: f64, rho: f64 },
}

/// One differentiable convex minorant of `h`.
#[derive(Clone)]
pub struct Minorant {
    pub tag: Tag,
    pub shape: MinorantShape,
    pub modulus: f64,
    /// Parameter or slope used for exclusion-window bookkeeping.
    pub param: Option<Vector>,
}

impl fmt::Debug for Minorant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Minorant").field("tag", &self.tag).field("modulus", &self.modulus).finish()
    }
}

impl Minorant {
    pub fn eval(&self, z: &Vector) -> f64 {
        match &self.shape {
            MinorantShape::Member(m) => m.eval(z),
            MinorantShape::Param { family, t } => family.value(z, t),
            MinorantShape::Quadratic { center, slope, value, rho } => {
                let d = z - center;
                0.5 * rho * d.norm_squared() + slope.dot(&d) + value
            }
        }
    }

    pub fn grad(&self, z: &Vector) -> Vector {
        match &self.shape {
            MinorantShape::Member(m) => m.grad(z),
            MinorantShape::Param { family, t } => family.grad_x(z, t),
            MinorantShape::Quadratic { center, slope, rho, .. } => {
                if *rho == 0.0 {
                    slope.clone()
                } else {
                    slope + (z - center) * *rho
                }
            }
        }
    }

    fn member(h: &FiniteMaxH, i: usize) -> Self {
        let m = h.members()[i].clone();
        let modulus = m.modulus();
        Minorant { tag: Tag::Member(i), shape: MinorantShape::Member(m), modulus, param: None }
    }

    fn param(h: &ParamMaxH, t: Vector) -> Self {
        Minorant {
            tag: Tag::quantize(&t),
            shape: MinorantShape::Param { family: h.family.clone(), t: t.clone() },
            modulus: h.member_modulus,
            param: Some(t),
        }
    }

    /// Affine minorant `⟨slope, z − at⟩ + h(at)` from a subgradient at `at`.
    fn affine(slope: Vector, at: Vector, h_at: f64) -> Self {
        Minorant {
            tag: Tag::quantize(&slope),
            shape: MinorantShape::Quadratic { center: at, slope: slope.clone(), value: h_at, rho: 0.0 },
            modulus: 0.0,
            param: Some(slope),
        }
    }
}

/// The four selection strategies plus the singleton (plain DCA) family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectorSpec {
    Singleton {
        #[serde(default)]
        policy: SubgradientPolicy,
        #[serde(default)]
        rho: f64,
    },
    FullActive,
    Update1,
    Update2,
    Update3,
}

impl SelectorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SelectorSpec::Singleton { .. } => "singleton",
            SelectorSpec::FullActive => "full_active",
            SelectorSpec::Update1 => "update1",
            SelectorSpec::Update2 => "update2",
            SelectorSpec::Update3 => "update3",
        }
    }

    pub fn check_compatible(&self, h: &HOracle) -> Result<()> {
        let ok = match self {
            SelectorSpec::Singleton { .. } => true,
            SelectorSpec::FullActive | SelectorSpec::Update1 => matches!(h, HOracle::FiniteMax(_)),
            SelectorSpec::Update2 => matches!(h, HOracle::ParamMax(_)),
            SelectorSpec::Update3 => matches!(h, HOracle::General(_)),
        };
        if ok {
            Ok(())
        } else {
            Err(SolverError::InvalidConfig(format!("selector {} cannot be used with {} h", self.name(), h.kind())))
        }
    }
}

#[derive(Clone, Debug)]
struct Selected {
    tag: Tag,
    param: Option<Vector>,
}

/// Exclusion-window history and the sampling stream.
#[derive(Clone, Debug)]
pub struct SelectorState {
    history: VecDeque<Vec<Selected>>,
    window: usize,
    rng: ChaCha8Rng,
}

impl SelectorState {
    /// Remembers the last `k0 + 1` selections.
    pub fn new(k0: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Self { history: VecDeque::with_capacity(k0 + 1), window: k0 + 1, rng }
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    pub fn recent_tags(&self) -> BTreeSet<Tag> {
        self.history.iter().flatten().map(|s| s.tag.clone()).collect()
    }

    fn recent_params(&self) -> impl Iterator<Item = &Vector> {
        self.history.iter().flatten().filter_map(|s| s.param.as_ref())
    }

    /// Records a selection, evicting the oldest beyond the window.
    pub fn push(&mut self, minorants: &[Minorant]) {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(minorants.iter().map(|m| Selected { tag: m.tag.clone(), param: m.param.clone() }).collect());
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Uniform sample from the unit sphere in `ℝⁿ`.
pub(crate) fn unit_direction(rng: &mut impl Rng, n: usize) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = v.norm();
        if r > 1e-12 {
            return v / r;
        }
    }
}

/// Uniform sample from the ball `B(center, radius)`.
pub fn sample_ball(rng: &mut impl Rng, center: &Vector, radius: f64) -> Vector {
    let n = center.len();
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / n as f64);
    center + unit_direction(rng, n) * r
}

/// Probe points around `x` at several scales.
pub(crate) fn probe_points(rng: &mut impl Rng, x: &Vector, count: usize) -> Vec<Vector> {
    let base = 1.0 + x.norm();
    let scales = [1e-3, 1e-1, 1.0, 10.0];
    (0..count).map(|j| sample_ball(rng, x, base * scales[j % scales.len()])).collect()
}

/// Quadratic (or affine, for `rho = 0`) minorant
/// `(ρ/2)‖z − x_k‖² + ⟨y_k, z − x_k⟩ + h(x_k)` from a subgradient `y_k`.
///
/// A positive `rho` is kept only if minoration survives probing; otherwise
/// the affine minorant is used.
pub fn select_singleton(
    h: &HOracle,
    x_k: &Vector,
    y_k: &Vector,
    rho: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Minorant>> {
    let hx = h.value(x_k)?;
    let build = |rho: f64| Minorant {
        tag: Tag::Tangent,
        shape: MinorantShape::Quadratic { center: x_k.clone(), slope: y_k.clone(), value: hx, rho },
        modulus: rho,
        param: None,
    };
    if rho > 0.0 {
        let m = build(rho);
        for z in probe_points(rng, x_k, PROBE_COUNT) {
            if m.eval(&z) > h.value(&z)? + MINORATION_SLACK {
                log::warn!("quadratic minorant with rho = {rho} exceeds h near {z:?}; using the affine minorant");
                return Ok(vec![build(0.0)]);
            }
        }
        return Ok(vec![m]);
    }
    Ok(vec![build(0.0)])
}

/// `I(x^k) = M_δ(x^k)`.
pub fn select_full_active(h: &FiniteMaxH, x_k: &Vector, delta: f64) -> Result<Vec<Minorant>> {
    Ok(h.active_set(x_k, delta)?.into_iter().map(|i| Minorant::member(h, i)).collect())
}

/// `I(x^{k+1}) = (M_δ(x^{k+1}) \ ⋃ recent I) ∪ {i_{k+1}}` with `i_{k+1}` the
/// smallest exactly active index. Updates the history.
pub fn select_update1(h: &FiniteMaxH, x_k: &Vector, delta: f64, st: &mut SelectorState) -> Result<Vec<Minorant>> {
    let approx = h.active_set(x_k, delta)?;
    let lead = h.first_active(x_k)?;
    let recent = st.recent_tags();
    let mut chosen: BTreeSet<usize> = approx.into_iter().filter(|i| !recent.contains(&Tag::Member(*i))).collect();
    chosen.insert(lead);
    let out: Vec<Minorant> = chosen.into_iter().map(|i| Minorant::member(h, i)).collect();
    st.push(&out);
    Ok(out)
}

/// Covering-based selection for `h = max_{t∈T} φ(·, t)`.
///
/// Balls of the `ε_k`-covering that contain a recently selected parameter are
/// skipped; from each remaining ball the point of `T` nearest its center is
/// kept when `φ(x_k, t) ≥ h(x_k) − δ`. The maximizer `t_k` is always added.
pub fn select_update2(
    h: &ParamMaxH,
    x_k: &Vector,
    eps_k: f64,
    delta: f64,
    st: &mut SelectorState,
) -> Result<Vec<Minorant>> {
    let t_k = h.maximizer(x_k)?;
    let hx = h.phi(x_k, &t_k)?;
    let eps = eps_k.min(2.0 * h.domain.radius);
    let cover = cover_ball(&h.domain.center, h.domain.radius, eps)?;
    let recent: Vec<Vector> = st.recent_params().cloned().collect();
    let thr = hx - delta - fp_slack(hx);

    let lead = Minorant::param(h, t_k);
    let mut seen = BTreeSet::from([lead.tag.clone()]);
    let mut out = vec![lead];
    for c in &cover.centers {
        if recent.iter().any(|p| (p - c).norm() <= eps) {
            continue;
        }
        let t = h.domain.project(c);
        if h.phi(x_k, &t)? >= thr {
            let m = Minorant::param(h, t);
            if seen.insert(m.tag.clone()) {
                out.push(m);
            }
        }
    }
    out.sort_by(|a, b| a.tag.cmp(&b.tag));
    st.push(&out);
    Ok(out)
}

/// Sampled affine minorants for a general continuous convex `h`.
///
/// Draws `sample_count` points uniformly in `B(x_k, δ)`, takes a subgradient
/// at each, and keeps the affine minorants within `δ` of `h(x_k)` at `x_k`
/// whose slopes are farther than `ε_k` from every recently selected slope.
/// The tangent at `x_k` is always included.
pub fn select_update3(
    h: &GeneralConvexH,
    x_k: &Vector,
    eps_k: f64,
    delta: f64,
    sample_count: usize,
    st: &mut SelectorState,
) -> Result<Vec<Minorant>> {
    let hx = h.value(x_k)?;
    let thr = hx - delta - fp_slack(hx);
    let samples: Vec<Vector> = (0..sample_count).map(|_| sample_ball(st.rng(), x_k, delta)).collect();
    let recent: Vec<Vector> = st.recent_params().cloned().collect();

    let lead = Minorant::affine(h.subgrad(x_k)?, x_k.clone(), hx);
    let mut seen = BTreeSet::from([lead.tag.clone()]);
    let mut out = vec![lead];
    for z in samples {
        let t = h.subgrad(&z)?;
        if recent.iter().any(|p| (p - &t).norm() <= eps_k) {
            continue;
        }
        let m = Minorant::affine(t, z.clone(), h.value(&z)?);
        if m.eval(x_k) >= thr && seen.insert(m.tag.clone()) {
            out.push(m);
        }
    }
    out.sort_by(|a, b| a.tag.cmp(&b.tag));
    st.push(&out);
    Ok(out)
}

/// Checks that the family touches `h` at `x_k` and stays below it at
/// `PROBE_COUNT` random probes.
pub fn verify_minorants(h: &HOracle, x_k: &Vector, family: &[Minorant], rng: &mut impl Rng) -> Result<()> {
    let hx = h.value(x_k)?;
    let top = family.iter().map(|m| m.eval(x_k)).fold(f64::NEG_INFINITY, f64::max);
    if (top - hx).abs() > TANGENCY_RTOL * (1.0 + hx.abs()) {
        return Err(SolverError::MinorantViolation(format!(
            "tangency: max minorant value {top} vs h(x_k) = {hx}"
        )));
    }
    for z in probe_points(rng, x_k, PROBE_COUNT) {
        let hz = h.value(&z)?;
        for m in family {
            let mz = m.eval(&z);
            if mz > hz + MINORATION_SLACK {
                return Err(SolverError::MinorantViolation(format!(
                    "minoration: minorant {} gives {mz} > h = {hz}",
                    m.tag
                )));
            }
        }
    }
    Ok(())
}

/// Dispatches a selection for iterate `k`.
pub(crate) struct Selector {
    pub spec: SelectorSpec,
    pub state: SelectorState,
}

impl Selector {
    pub fn select(
        &mut self,
        h: &HOracle,
        x_k: &Vector,
        delta: f64,
        eps_k: f64,
        sample_count: usize,
    ) -> Result<Vec<Minorant>> {
        match (&self.spec, h) {
            (SelectorSpec::Singleton { policy, rho }, _) => {
                let y = policy.subgradient(h, x_k)?;
                select_singleton(h, x_k, &y, *rho, self.state.rng())
            }
            (SelectorSpec::FullActive, HOracle::FiniteMax(fm)) => select_full_active(fm, x_k, delta),
            (SelectorSpec::Update1, HOracle::FiniteMax(fm)) => select_update1(fm, x_k, delta, &mut self.state),
            (SelectorSpec::Update2, HOracle::ParamMax(pm)) => select_update2(pm, x_k, eps_k, delta, &mut self.state),
            (SelectorSpec::Update3, HOracle::General(gh)) => {
                select_update3(gh, x_k, eps_k, delta, sample_count, &mut self.state)
            }
            (spec, h) => Err(spec
                .check_compatible(h)
                .err()
                .unwrap_or_else(|| SolverError::InvalidConfig(format!("selector {} unsupported here", spec.name())))),
        }
    }
}
