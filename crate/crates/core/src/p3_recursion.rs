//! Two-moment approximations of the non-stockout probability `P{Ĩ_{t+L} > 0}`
//! and of the projected inventory `E[Ĩ_{t+L−1}]`.
//!
//! The backward scheme writes a stockout in period `t+L` as a chain of
//! overshoots: `Z_1` is the demand of period `t+L`; it must exceed the
//! candidate order `q`, after which `Z_2 = D + (Z_1 − q | Z_1 > q)` must
//! exceed the next-newest outstanding order, and so on until the last link
//! is compared with on-hand stock. Each `Z_n` after the first is replaced by
//! a two-moment fit before its tail is taken. Under shifted demand every
//! `Z_n` is at least the shift, so the fit is applied to `Z_n − shift`.
//!
//! The forward scheme iterates `Ĩ ← (Ĩ + Q − D)⁺` period by period, keeping
//! an exact atom at zero and a two-moment fit for the positive part.

use crate::distributions::{DemandDistribution, DemandMoments, Family, ZERO_TAIL};
use crate::error::{check_quantity, EvalError};
use crate::phase::PhaseMixture;
use crate::state::PipelineState;

/// Smallest cv a refit target may have. Keeps Erlang shapes near 10⁴.
pub const REFIT_MIN_CV: f64 = 0.01;

/// Mass below which a branch of the forward step is dropped.
const NEGLIGIBLE: f64 = 1e-14;

/// Per-link record of the last backward evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecursionWorkspace {
    /// Cumulative thresholds `ξ_1 ≤ … ≤ ξ_{L+1}`.
    pub thresholds: Vec<f64>,
    /// `(mean, variance)` of each `Z_n`.
    pub z_moments: Vec<(f64, f64)>,
    /// `P{Z_n > ξ_n − ξ_{n−1}}`.
    pub tail_probs: Vec<f64>,
}

impl RecursionWorkspace {
    fn clear(&mut self) {
        self.thresholds.clear();
        self.z_moments.clear();
        self.tail_probs.clear();
    }
}

/// Mixed Erlang for cv ≤ 1, hyperexponential above; cv floored at
/// [`REFIT_MIN_CV`].
pub(crate) fn refit(mean: f64, variance: f64) -> DemandDistribution {
    let cv = (variance.max(0.0).sqrt() / mean).max(REFIT_MIN_CV);
    let family = if cv <= 1.0 { Family::MixedErlangKm1K } else { Family::Hyperexponential };
    DemandDistribution::fit(DemandMoments { mean, cv }, Some(family))
        .expect("refit targets are always feasible")
}

/// Smallest value the demand can take: the shift of a shifted exponential,
/// zero otherwise.
fn lower_bound(d: &DemandDistribution) -> f64 {
    match *d {
        DemandDistribution::ShiftedExponential { shift, .. } => shift,
        _ => 0.0,
    }
}

/// `lower + X`: a variable known to be at least `lower`, with `X` fitted.
struct Bounded {
    lower: f64,
    fit: DemandDistribution,
}

impl Bounded {
    fn exact(d: &DemandDistribution) -> Self {
        Bounded { lower: 0.0, fit: d.clone() }
    }

    /// Two-moment refit of `Z − lower`, so the fit keeps the support bound.
    /// Falls back to an unshifted refit when nothing is left above `lower`.
    fn refit(lower: f64, mean: f64, variance: f64) -> Self {
        let lower = if mean - lower > 1e-9 * mean { lower } else { 0.0 };
        Bounded { lower, fit: refit(mean - lower, variance) }
    }

    fn moments(&self) -> (f64, f64) {
        let (m, v) = self.fit.moments();
        (self.lower + m, v)
    }

    /// `[P{Z > a}, E[(Z − a)^j·1{Z > a}] for j = 1, 2, 3]`, `a ≥ 0`.
    fn partial_moments(&self, a: f64) -> [f64; 4] {
        if a >= self.lower {
            return self.fit.partial_moments(a - self.lower);
        }
        let c = self.lower - a;
        let [_, m1, m2, m3] = self.fit.partial_moments(0.0);
        [1.0, c + m1, c * c + 2.0 * c * m1 + m2, c * c * c + 3.0 * c * c * m1 + 3.0 * c * m2 + m3]
    }
}

fn require_continuous(d: &DemandDistribution) -> Result<(), EvalError> {
    if d.is_discrete() {
        Err(EvalError::DiscreteDemand)
    } else {
        Ok(())
    }
}

enum FirstLink<'a> {
    /// `Z_1` is a single period's demand, used without refitting.
    Demand(&'a DemandDistribution),
    /// `Z_1 = S + W` with `W` uniform on `(0, gap)`, independent of `S`.
    Uniform(Bounded),
}

impl FirstLink<'_> {
    fn moments(&self, gap: f64) -> (f64, f64) {
        match self {
            FirstLink::Demand(d) => d.moments(),
            FirstLink::Uniform(s) => {
                let (m, v) = s.moments();
                (m + gap / 2.0, v + gap * gap / 12.0)
            }
        }
    }

    /// `(P{Z_1 > gap}, E[(Z_1 − gap)·1], E[(Z_1 − gap)²·1])`.
    fn partial(&self, gap: f64) -> (f64, f64, f64) {
        match self {
            FirstLink::Demand(d) => d.partial_overshoot(gap),
            FirstLink::Uniform(s) => {
                // Averaging over the uniform: E[(S + W − b)^j; S + W > b]
                // = (E[S^{j+1}] − E[(S − b)^{j+1}; S > b]) / ((j + 1)·b).
                let raw = s.partial_moments(0.0);
                let over = s.partial_moments(gap);
                let t = ((raw[1] - over[1]) / gap).clamp(0.0, 1.0);
                let e1 = ((raw[2] - over[2]) / (2.0 * gap)).max(0.0);
                let e2 = ((raw[3] - over[3]) / (3.0 * gap)).max(0.0);
                (t, e1, e2)
            }
        }
    }
}

/// `Π_n P{Z_n > gaps[n]}`, recording each link in `ws`.
fn tail_product(first: FirstLink, gaps: &[f64], d: &DemandDistribution, ws: &mut RecursionWorkspace) -> f64 {
    let (dm, dv) = d.moments();
    // Every later link is one period's demand plus a nonnegative overshoot.
    let lower = lower_bound(d);
    let mut product = 1.0;
    let mut over = (0.0, 0.0);
    let mut level = 0.0;
    for (n, &gap) in gaps.iter().enumerate() {
        level += gap;
        ws.thresholds.push(level);
        let z = if n == 0 { first.moments(gap) } else { (dm + over.0, dv + over.1) };
        ws.z_moments.push(z);
        if gap <= 0.0 {
            ws.tail_probs.push(1.0);
            over = z;
            continue;
        }
        let (t, e1, e2) = if n == 0 {
            first.partial(gap)
        } else {
            let [t, e1, e2, _] = Bounded::refit(lower, z.0, z.1).partial_moments(gap);
            (t, e1, e2)
        };
        ws.tail_probs.push(t);
        if t < ZERO_TAIL {
            return 0.0;
        }
        product *= t;
        let m1 = e1 / t;
        over = (m1, (e2 / t - m1 * m1).max(0.0));
    }
    product
}

/// Backward two-moment approximation of `P{Ĩ_{t+L} > 0}` when ordering `q`.
pub fn backward_p3(state: &PipelineState, q: f64, d: &DemandDistribution) -> Result<f64, EvalError> {
    backward_p3_with(state, q, d, &mut RecursionWorkspace::default())
}

/// As [`backward_p3`], leaving the per-link record in `ws`.
pub fn backward_p3_with(
    state: &PipelineState,
    q: f64,
    d: &DemandDistribution,
    ws: &mut RecursionWorkspace,
) -> Result<f64, EvalError> {
    require_continuous(d)?;
    check_quantity(q)?;
    ws.clear();
    let gaps: Vec<f64> =
        std::iter::once(q).chain(state.outstanding.iter().rev().copied()).chain([state.on_hand]).collect();
    let product = tail_product(FirstLink::Demand(d), &gaps, d, ws);
    Ok((1.0 - product).clamp(0.0, 1.0))
}

/// Backward approximation of `E[Ĩ_{t+L−1}]`, the expected stock left just
/// before the next order arrives.
///
/// `E[Ĩ] = Σ_k b_k (1 − P{joint tail k})` where the `b_k` are the pipeline
/// quantities newest first followed by on-hand, and the `k`-th joint tail
/// starts from `k` periods of demand plus a uniform on `(0, b_k)`. The
/// uniform is integrated exactly; the `k`-period demand sum is refitted for
/// `k > 1`.
pub fn pil_expected_inventory(state: &PipelineState, d: &DemandDistribution) -> Result<f64, EvalError> {
    require_continuous(d)?;
    let (dm, dv) = d.moments();
    let gaps: Vec<f64> = state.outstanding.iter().rev().copied().chain([state.on_hand]).collect();
    let mut ws = RecursionWorkspace::default();
    let mut total = 0.0;
    for (i, &b) in gaps.iter().enumerate() {
        if b <= 0.0 {
            continue;
        }
        let k = (i + 1) as f64;
        let sum = if i == 0 { Bounded::exact(d) } else { Bounded::refit(k * lower_bound(d), k * dm, k * dv) };
        ws.clear();
        total += b * (1.0 - tail_product(FirstLink::Uniform(sum), &gaps[i..], d, &mut ws));
    }
    Ok(total.clamp(0.0, state.inventory_position()))
}

/// Distribution with an exact atom at zero and a fitted positive part whose
/// blocks carry mass `1 − atom`.
#[derive(Debug, Clone)]
struct Level {
    atom: f64,
    positive: PhaseMixture,
    mean: f64,
    second: f64,
}

impl Level {
    fn zero() -> Self {
        Level { atom: 1.0, positive: PhaseMixture::new(Vec::new()), mean: 0.0, second: 0.0 }
    }

    /// From `P{X > 0}` and the partial moments of `X` on `{X > 0}`.
    fn from_partial(mass: f64, e1: f64, e2: f64) -> Self {
        if mass < NEGLIGIBLE || e1 <= 0.0 {
            return Level::zero();
        }
        let mean = e1 / mass;
        let var = (e2 / mass - mean * mean).max(0.0);
        let (_, mut positive) = refit(mean, var).phase_form().expect("refit is continuous");
        for block in positive.blocks.iter_mut() {
            block.probs.iter_mut().for_each(|p| *p *= mass);
        }
        Level { atom: 1.0 - mass, positive, mean: e1, second: e2 }
    }

    /// Mass of `{X > c + O}` together with the partial moments of `X − c − O`
    /// there, for a deterministic `c ≥ 0` and independent phase-type `O`.
    fn beyond(&self, c: f64, o: &PhaseMixture) -> (f64, f64, f64) {
        if self.atom >= 1.0 {
            return (0.0, 0.0, 0.0);
        }
        let shifted = if c > 0.0 { self.positive.overshoot(c) } else { self.positive.clone() };
        let rest = shifted.subtract(o);
        let (mass, e1, e2) = rest.raw_moments();
        ((mass - rest.atom()).max(0.0), e1, e2)
    }
}

/// Phase form of `D − a` given `D > a`: a deterministic part and a phase
/// mixture (mass `P{D > a}`).
fn demand_overshoot(shift: f64, mix: &PhaseMixture, a: f64) -> (f64, PhaseMixture) {
    if a <= shift {
        (shift - a, mix.clone())
    } else {
        (0.0, mix.overshoot(a - shift))
    }
}

/// Forward moment iteration, prepared once per decision epoch so that many
/// candidate orders can be scored cheaply.
#[derive(Debug, Clone)]
pub struct ForwardEvaluator {
    demand: DemandDistribution,
    shift: f64,
    mix: PhaseMixture,
    level: Level,
}

impl ForwardEvaluator {
    /// Propagates the distribution of stock through the `L − 1` arrivals
    /// already in the pipeline.
    pub fn new(state: &PipelineState, d: &DemandDistribution) -> Result<Self, EvalError> {
        require_continuous(d)?;
        let (shift, mix) = d.phase_form().expect("continuous");
        let (dm, dv) = d.moments();
        let d2 = dv + dm * dm;

        // (I − D)⁺
        let i = state.on_hand;
        let (t, e1, e2) = d.partial_overshoot(i);
        let below = 1.0 - t;
        let mut level = Level::from_partial(below, i - dm + e1, i * i - 2.0 * i * dm + d2 - e2);

        let mut ev = ForwardEvaluator { demand: d.clone(), shift, mix, level: Level::zero() };
        for &q in &state.outstanding {
            let (t, e1, e2) = d.partial_overshoot(q);
            let below = 1.0 - t;
            let mut mass = 0.0;
            let (mut s1, mut s2) = (0.0, 0.0);
            if below > NEGLIGIBLE {
                // W + (q − D) on {D ≤ q}; never zero.
                let f1 = (q - dm + e1).max(0.0);
                let f2 = (q * q - 2.0 * q * dm + d2 - e2).max(0.0);
                mass += below;
                s1 += below * level.mean + f1;
                s2 += below * level.second + 2.0 * level.mean * f1 + f2;
            }
            if t > ZERO_TAIL {
                let (c, o) = demand_overshoot(ev.shift, &ev.mix, q);
                let (m, b1, b2) = level.beyond(c, &o);
                mass += t * m;
                s1 += t * b1;
                s2 += t * b2;
            }
            level = Level::from_partial(mass.min(1.0), s1, s2);
        }
        ev.level = level;
        Ok(ev)
    }

    /// Approximate `E[Ĩ_{t+L−1}]`.
    pub fn expected_inventory(&self) -> f64 {
        self.level.mean
    }

    /// Approximate `P{Ĩ_{t+L} > 0}` when ordering `q`.
    pub fn p3(&self, q: f64) -> Result<f64, EvalError> {
        check_quantity(q)?;
        let t = self.demand.survival(q);
        let mut p = 1.0 - t;
        if t > ZERO_TAIL {
            let (c, o) = demand_overshoot(self.shift, &self.mix, q);
            p += t * self.level.beyond(c, &o).0;
        }
        Ok(p.clamp(0.0, 1.0))
    }
}

/// Forward moment-iteration approximation of `P{Ĩ_{t+L} > 0}`.
pub fn forward_p3(state: &PipelineState, q: f64, d: &DemandDistribution) -> Result<f64, EvalError> {
    ForwardEvaluator::new(state, d)?.p3(q)
}

/// Forward moment-iteration approximation of `E[Ĩ_{t+L−1}]`.
pub fn forward_expected_inventory(state: &PipelineState, d: &DemandDistribution) -> Result<f64, EvalError> {
    Ok(ForwardEvaluator::new(state, d)?.expected_inventory())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exp(mean: f64) -> DemandDistribution {
        DemandDistribution::exponential(mean).unwrap()
    }

    #[test]
    fn single_period_reduces_to_cdf() {
        let d = exp(2.0);
        let s = PipelineState::empty(1);
        for q in [0.0, 0.5, 3.0] {
            let want = d.cdf(q);
            assert_relative_eq!(backward_p3(&s, q, &d).unwrap(), want, epsilon = 1e-14);
            assert_relative_eq!(forward_p3(&s, q, &d).unwrap(), want, epsilon = 1e-14);
        }
    }

    #[test]
    fn large_order_saturates() {
        let d = exp(1.0);
        let s = PipelineState::new(0.5, vec![0.2, 1.0]).unwrap();
        assert!(backward_p3(&s, 200.0, &d).unwrap() > 1.0 - 1e-12);
        assert!(forward_p3(&s, 200.0, &d).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn workspace_is_consistent() {
        let d = exp(1.0);
        let s = PipelineState::new(1.5, vec![0.0, 2.0]).unwrap();
        let mut ws = RecursionWorkspace::default();
        backward_p3_with(&s, 1.0, &d, &mut ws).unwrap();
        assert_eq!(ws.thresholds, vec![1.0, 3.0, 3.0, 4.5]);
        assert_eq!(ws.tail_probs.len(), 4);
        assert_eq!(ws.tail_probs[2], 1.0);
        assert!(ws.tail_probs.iter().all(|&t| (0.0..=1.0).contains(&t)));
        assert!(ws.z_moments.iter().all(|&(_, v)| v >= 0.0));
    }

    #[test]
    fn zero_gap_carries_moments_without_refit() {
        let d = exp(1.0);
        let s = PipelineState::new(1.0, vec![0.0]).unwrap();
        let mut ws = RecursionWorkspace::default();
        backward_p3_with(&s, 0.0, &d, &mut ws).unwrap();
        assert_eq!(ws.z_moments[0], (1.0, 1.0));
        assert_eq!(ws.z_moments[1], (2.0, 2.0));
        assert_eq!(ws.z_moments[2], (3.0, 3.0));
        // Z_3 is Erlang-3 exactly, so the last tail is exact.
        let y: f64 = 1.0;
        assert_relative_eq!(ws.tail_probs[2], (-y).exp() * (1.0 + y + y * y / 2.0), max_relative = 1e-12);
    }

    #[test]
    fn shifted_demand_keeps_its_lower_bound() {
        // With q above the shift the overshoot is exponential, so
        // Z_2 − shift is Erlang-2 and the single refit is exact.
        let (shift, rate) = (3.0, 0.5);
        let d = DemandDistribution::shifted_exponential(shift, rate).unwrap();
        let (q, i) = (5.0, 6.0);
        let y = rate * (i - shift);
        let want = 1.0 - (-rate * (q - shift)).exp() * (-y).exp() * (1.0 + y);
        let s = PipelineState::new(i, vec![]).unwrap();
        assert_relative_eq!(backward_p3(&s, q, &d).unwrap(), want, max_relative = 1e-12);
        // On-hand below the shift is always exhausted.
        let low = PipelineState::new(2.0, vec![]).unwrap();
        assert_relative_eq!(backward_p3(&low, q, &d).unwrap(), d.cdf(q), max_relative = 1e-12);
    }

    #[test]
    fn expected_inventory_edge_cases() {
        let d = exp(1.0);
        let zero = PipelineState::empty(3);
        assert_eq!(pil_expected_inventory(&zero, &d).unwrap(), 0.0);
        assert_eq!(forward_expected_inventory(&zero, &d).unwrap(), 0.0);
        let s = PipelineState::new(2.0, vec![]).unwrap();
        // Forward start is moment-exact at L = 1: E[(2 − D)⁺] = 1 + e^{−2}.
        assert_relative_eq!(forward_expected_inventory(&s, &d).unwrap(), 1.0 + (-2.0f64).exp(), max_relative = 1e-12);
        // With L = 1 the uniform integration is exact as well.
        assert_relative_eq!(pil_expected_inventory(&s, &d).unwrap(), 1.0 + (-2.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn discrete_demand_is_rejected() {
        let d = DemandDistribution::Discrete(crate::DiscretePmf::constant(1));
        let s = PipelineState::empty(1);
        assert_eq!(backward_p3(&s, 1.0, &d), Err(EvalError::DiscreteDemand));
        assert!(ForwardEvaluator::new(&s, &d).is_err());
    }

    #[test]
    fn negative_order_is_rejected() {
        let s = PipelineState::empty(1);
        assert!(matches!(backward_p3(&s, -1.0, &exp(1.0)), Err(EvalError::InvalidQuantity(_))));
    }
}
