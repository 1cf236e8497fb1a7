//! Per-period demand distributions: two-moment fits, closed-form moments,
//! CDFs, sampling, and conditional overshoot moments.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phase::{erlang_partial_moments, poisson_pmfs, poisson_upper_bound, PhaseBlock, PhaseMixture};

/// Below this tail probability an overshoot is considered undefined.
pub const ZERO_TAIL: f64 = 1e-300;

/// Largest Erlang shape a fit may produce (cv ≈ 0.0032).
pub const MAX_PHASES: u32 = 100_000;

const PMF_TRUNCATION: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("cv {cv} is outside the feasible range of the {family:?} fit")]
    Infeasible { family: Family, cv: f64 },
    #[error("degenerate demand: cv must be positive, got {0}")]
    Degenerate(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("tail probability beyond {level} underflows")]
    ZeroTail { level: f64 },
}

/// Mean and coefficient of variation of demand per period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandMoments {
    pub mean: f64,
    pub cv: f64,
}

impl DemandMoments {
    pub fn new(mean: f64, cv: f64) -> Result<Self, DistError> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(DistError::InvalidParameter(format!("mean must be positive, got {mean}")));
        }
        if cv == 0.0 {
            return Err(DistError::Degenerate(cv));
        }
        if !(cv > 0.0 && cv.is_finite()) {
            return Err(DistError::InvalidParameter(format!("cv must be positive, got {cv}")));
        }
        Ok(DemandMoments { mean, cv })
    }

    pub fn variance(&self) -> f64 {
        (self.cv * self.mean).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ShiftedExponential,
    /// Erlang-(k−1) / Erlang-k mixture, cv ≤ 1.
    #[serde(rename = "mixed_erlang_km1k")]
    MixedErlangKm1K,
    /// Exponential / Erlang-k mixture, cv ≥ 1.
    #[serde(rename = "mixed_erlang_1k")]
    MixedErlang1K,
    /// Two-phase hyperexponential with gamma-matched third moment, cv ≥ 1.
    Hyperexponential,
}

impl Family {
    /// The family used when none is requested.
    pub fn default_for(cv: f64) -> Family {
        if cv <= 1.0 {
            Family::MixedErlangKm1K
        } else {
            Family::Hyperexponential
        }
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            Family::ShiftedExponential => "se",
            Family::MixedErlangKm1K => "me",
            Family::MixedErlang1K => "me1k",
            Family::Hyperexponential => "hy",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "shifted-exponential" => Some(Family::ShiftedExponential),
            "me" | "mekm1k" | "mixed-erlang" => Some(Family::MixedErlangKm1K),
            "me1k" => Some(Family::MixedErlang1K),
            "hy" | "hyperexponential" => Some(Family::Hyperexponential),
            _ => None,
        }
    }
}

/// Probability mass function on `0..probs.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePmf {
    probs: Vec<f64>,
}

impl DiscretePmf {
    pub fn new(probs: Vec<f64>) -> Result<Self, DistError> {
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
            return Err(DistError::InvalidParameter("pmf entries must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(DistError::InvalidParameter(format!("pmf sums to {total}, not 1")));
        }
        Ok(DiscretePmf { probs })
    }

    /// Truncates once the cumulative mass reaches `1 − 1e-12`, then renormalizes.
    fn from_generator(mut term: impl FnMut(usize) -> f64) -> Self {
        let mut probs = Vec::new();
        let mut cum = 0.0;
        let mut i = 0;
        while cum < 1.0 - PMF_TRUNCATION {
            let p = term(i);
            probs.push(p);
            cum += p;
            i += 1;
        }
        for p in probs.iter_mut() {
            *p /= cum;
        }
        DiscretePmf { probs }
    }

    pub fn poisson(mean: f64) -> Result<Self, DistError> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(DistError::InvalidParameter(format!("poisson mean {mean}")));
        }
        let n = poisson_upper_bound(mean, PMF_TRUNCATION / 10.0);
        let mut probs = poisson_pmfs(mean, n);
        let mut cum = 0.0;
        let cut = probs
            .iter()
            .position(|p| {
                cum += p;
                cum >= 1.0 - PMF_TRUNCATION
            })
            .unwrap_or(n);
        probs.truncate(cut + 1);
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(DiscretePmf { probs })
    }

    /// Geometric on `{0, 1, 2, …}` with the given mean.
    pub fn geometric(mean: f64) -> Result<Self, DistError> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(DistError::InvalidParameter(format!("geometric mean {mean}")));
        }
        let theta = mean / (1.0 + mean);
        Ok(Self::from_generator(|i| (1.0 - theta) * theta.powi(i as i32)))
    }

    /// Point mass at `value`.
    pub fn constant(value: usize) -> Self {
        let mut probs = vec![0.0; value + 1];
        probs[value] = 1.0;
        DiscretePmf { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_value(&self) -> usize {
        self.probs.len() - 1
    }

    /// `P{D ≤ x}`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        let top = (x.floor() as usize).min(self.max_value());
        self.probs[..=top].iter().sum::<f64>().min(1.0)
    }
}

/// A demand distribution, continuous or discrete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DemandDistribution {
    ShiftedExponential { shift: f64, rate: f64 },
    /// Erlang-(k−1) with weight `q`, Erlang-k otherwise.
    #[serde(rename = "mixed_erlang_km1k")]
    MixedErlangKm1K { k: u32, q: f64, rate: f64 },
    /// Exponential with weight `q`, Erlang-k otherwise.
    #[serde(rename = "mixed_erlang_1k")]
    MixedErlang1K { k: u32, q: f64, rate: f64 },
    Hyperexponential { q: f64, rate1: f64, rate2: f64 },
    Discrete(DiscretePmf),
}

/// Conditional moments of `Z − a` given `Z > a`, plus `P{Z > a}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overshoot {
    pub m1: f64,
    pub m2: f64,
    pub tail: f64,
}

impl Overshoot {
    pub fn variance(&self) -> f64 {
        (self.m2 - self.m1 * self.m1).max(0.0)
    }
}

fn check_rate(rate: f64) -> Result<(), DistError> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(DistError::InvalidParameter(format!("rate must be positive, got {rate}")))
    }
}

fn check_weight(q: f64) -> Result<(), DistError> {
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(DistError::InvalidParameter(format!("weight must lie in [0,1], got {q}")))
    }
}

impl DemandDistribution {
    pub fn shifted_exponential(shift: f64, rate: f64) -> Result<Self, DistError> {
        check_rate(rate)?;
        if !(shift >= 0.0 && shift.is_finite()) {
            return Err(DistError::InvalidParameter(format!("shift must be nonnegative, got {shift}")));
        }
        Ok(Self::ShiftedExponential { shift, rate })
    }

    pub fn mixed_erlang_km1k(k: u32, q: f64, rate: f64) -> Result<Self, DistError> {
        check_rate(rate)?;
        check_weight(q)?;
        if k < 2 {
            return Err(DistError::InvalidParameter(format!("k must be at least 2, got {k}")));
        }
        Ok(Self::MixedErlangKm1K { k, q, rate })
    }

    pub fn mixed_erlang_1k(k: u32, q: f64, rate: f64) -> Result<Self, DistError> {
        check_rate(rate)?;
        check_weight(q)?;
        if k < 2 {
            return Err(DistError::InvalidParameter(format!("k must be at least 2, got {k}")));
        }
        Ok(Self::MixedErlang1K { k, q, rate })
    }

    pub fn hyperexponential(q: f64, rate1: f64, rate2: f64) -> Result<Self, DistError> {
        check_rate(rate1)?;
        check_rate(rate2)?;
        check_weight(q)?;
        Ok(Self::Hyperexponential { q, rate1, rate2 })
    }

    pub fn exponential(mean: f64) -> Result<Self, DistError> {
        Self::shifted_exponential(0.0, 1.0 / mean)
    }

    /// Two-moment fit. Without a family hint, cv ≤ 1 gets the Erlang-(k−1)/k
    /// mixture and cv > 1 the hyperexponential.
    pub fn fit(m: DemandMoments, family: Option<Family>) -> Result<Self, DistError> {
        let DemandMoments { mean, cv } = DemandMoments::new(m.mean, m.cv)?;
        let family = family.unwrap_or_else(|| Family::default_for(cv));
        let c2 = cv * cv;
        match family {
            Family::ShiftedExponential => {
                if cv > 1.0 {
                    return Err(DistError::Infeasible { family, cv });
                }
                Self::shifted_exponential(mean * (1.0 - cv), 1.0 / (cv * mean))
            }
            Family::MixedErlangKm1K => {
                if cv > 1.0 {
                    return Err(DistError::Infeasible { family, cv });
                }
                let k_real = (1.0 / c2).floor() + 1.0;
                if k_real > MAX_PHASES as f64 {
                    return Err(DistError::Infeasible { family, cv });
                }
                let k = k_real as u32;
                let kf = k as f64;
                let disc = (kf * (1.0 + c2) - kf * kf * c2).max(0.0);
                let q = ((kf * c2 - disc.sqrt()) / (1.0 + c2)).clamp(0.0, 1.0);
                Self::mixed_erlang_km1k(k, q, (kf - q) / mean)
            }
            Family::MixedErlang1K => {
                if cv < 1.0 {
                    return Err(DistError::Infeasible { family, cv });
                }
                // Smallest k ≥ 2 with k² − 4kc² + 4 ≥ 0 on the upper branch.
                let root = 2.0 * c2 + 2.0 * (c2 * c2 - 1.0).max(0.0).sqrt();
                if root > MAX_PHASES as f64 {
                    return Err(DistError::Infeasible { family, cv });
                }
                let k = (root.ceil() as u32).max(2);
                let kf = k as f64;
                let disc = (kf * kf + 4.0 - 4.0 * kf * c2).max(0.0);
                let q = ((2.0 * kf * c2 + kf - 2.0 - disc.sqrt()) / (2.0 * (kf - 1.0) * (1.0 + c2)))
                    .clamp(0.0, 1.0);
                Self::mixed_erlang_1k(k, q, (q + kf * (1.0 - q)) / mean)
            }
            Family::Hyperexponential => {
                if c2 < 1.0 {
                    return Err(DistError::Infeasible { family, cv });
                }
                let rate1 = 2.0 / mean * (1.0 + ((c2 - 0.5) / (c2 + 1.0)).sqrt());
                let rate2 = 4.0 / mean - rate1;
                let q = if (rate2 - rate1).abs() < f64::EPSILON * rate1 {
                    1.0
                } else {
                    (rate1 * (rate2 * mean - 1.0) / (rate2 - rate1)).clamp(0.0, 1.0)
                };
                Self::hyperexponential(q, rate1, rate2)
            }
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Self::Discrete(_))
    }

    pub fn family(&self) -> Option<Family> {
        match self {
            Self::ShiftedExponential { .. } => Some(Family::ShiftedExponential),
            Self::MixedErlangKm1K { .. } => Some(Family::MixedErlangKm1K),
            Self::MixedErlang1K { .. } => Some(Family::MixedErlang1K),
            Self::Hyperexponential { .. } => Some(Family::Hyperexponential),
            Self::Discrete(_) => None,
        }
    }

    /// Deterministic minimum demand and the phase-type remainder. `None` for
    /// discrete demand.
    pub(crate) fn phase_form(&self) -> Option<(f64, PhaseMixture)> {
        match *self {
            Self::ShiftedExponential { shift, rate } => {
                Some((shift, PhaseMixture::new(vec![PhaseBlock::erlang(rate, 1, 1.0)])))
            }
            Self::MixedErlangKm1K { k, q, rate } => {
                let k = k as usize;
                let mut probs = vec![0.0; k + 1];
                probs[k - 1] = q;
                probs[k] += 1.0 - q;
                Some((0.0, PhaseMixture::new(vec![PhaseBlock::new(rate, probs)])))
            }
            Self::MixedErlang1K { k, q, rate } => {
                let k = k as usize;
                let mut probs = vec![0.0; k + 1];
                probs[1] = q;
                probs[k] += 1.0 - q;
                Some((0.0, PhaseMixture::new(vec![PhaseBlock::new(rate, probs)])))
            }
            Self::Hyperexponential { q, rate1, rate2 } => Some((
                0.0,
                PhaseMixture::new(vec![
                    PhaseBlock::erlang(rate1, 1, q),
                    PhaseBlock::erlang(rate2, 1, 1.0 - q),
                ]),
            )),
            Self::Discrete(_) => None,
        }
    }

    /// First two raw moments `(E[D], E[D²])`.
    pub fn raw_moments(&self) -> (f64, f64) {
        match self {
            Self::Discrete(pmf) => pmf.probs.iter().enumerate().fold((0.0, 0.0), |(a, b), (i, &p)| {
                let x = i as f64;
                (a + p * x, b + p * x * x)
            }),
            _ => {
                let (shift, mix) = self.phase_form().expect("continuous");
                let (_, m1, m2) = mix.raw_moments();
                (shift + m1, shift * shift + 2.0 * shift * m1 + m2)
            }
        }
    }

    /// `(mean, variance)`.
    pub fn moments(&self) -> (f64, f64) {
        match *self {
            Self::ShiftedExponential { shift, rate } => (shift + 1.0 / rate, 1.0 / (rate * rate)),
            Self::Hyperexponential { q, rate1, rate2 } => {
                let m = q / rate1 + (1.0 - q) / rate2;
                let m2 = 2.0 * q / (rate1 * rate1) + 2.0 * (1.0 - q) / (rate2 * rate2);
                (m, m2 - m * m)
            }
            _ => {
                let (m1, m2) = self.raw_moments();
                (m1, (m2 - m1 * m1).max(0.0))
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.moments().0
    }

    pub fn cv(&self) -> f64 {
        let (m, v) = self.moments();
        v.sqrt() / m
    }

    /// `P{D ≤ x}`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Discrete(pmf) => pmf.cdf(x),
            _ => 1.0 - self.survival(x),
        }
    }

    /// `P{D > x}`.
    pub fn survival(&self, x: f64) -> f64 {
        match self {
            Self::Discrete(pmf) => (1.0 - pmf.cdf(x)).max(0.0),
            _ if x < 0.0 => 1.0,
            _ => self.partial_overshoot(x).0.clamp(0.0, 1.0),
        }
    }

    /// `(P{D > a}, E[(D − a)·1{D > a}], E[(D − a)²·1{D > a}])` for continuous
    /// demand, `a ≥ 0`.
    pub(crate) fn partial_overshoot(&self, a: f64) -> (f64, f64, f64) {
        let [t, e1, e2, _] = self.partial_moments(a);
        (t, e1, e2)
    }

    /// `[P{D > a}, E[(D − a)^j·1{D > a}] for j = 1, 2, 3]`, continuous demand.
    pub(crate) fn partial_moments(&self, a: f64) -> [f64; 4] {
        let exponential = |rate: f64, weight: f64| {
            let t = weight * (-rate * a).exp();
            [t, t / rate, 2.0 * t / (rate * rate), 6.0 * t / (rate * rate * rate)]
        };
        let mix = |w: f64, x: [f64; 4], y: [f64; 4]| std::array::from_fn(|i| w * x[i] + (1.0 - w) * y[i]);
        match *self {
            Self::ShiftedExponential { shift, rate } => {
                if a <= shift {
                    let c = shift - a;
                    let (r1, r2, r3) = (1.0 / rate, 2.0 / (rate * rate), 6.0 / (rate * rate * rate));
                    [1.0, c + r1, c * c + 2.0 * c * r1 + r2, c * c * c + 3.0 * c * c * r1 + 3.0 * c * r2 + r3]
                } else {
                    let t = (-rate * (a - shift)).exp();
                    [t, t / rate, 2.0 * t / (rate * rate), 6.0 * t / (rate * rate * rate)]
                }
            }
            Self::MixedErlangKm1K { k, q, rate } => mix(
                q,
                erlang_partial_moments(k as usize - 1, rate, a),
                erlang_partial_moments(k as usize, rate, a),
            ),
            Self::MixedErlang1K { k, q, rate } => {
                mix(q, exponential(rate, 1.0), erlang_partial_moments(k as usize, rate, a))
            }
            Self::Hyperexponential { q, rate1, rate2 } => mix(q, exponential(rate1, 1.0), exponential(rate2, 1.0)),
            Self::Discrete(_) => unreachable!("continuous demand only"),
        }
    }

    /// Moments of `D − a` conditional on `D > a`, and `P{D > a}`.
    pub fn overshoot_moments(&self, a: f64) -> Result<Overshoot, DistError> {
        if !(a >= 0.0) {
            return Err(DistError::InvalidParameter(format!("overshoot level must be nonnegative, got {a}")));
        }
        match self {
            Self::Discrete(pmf) => {
                let (mut t, mut s1, mut s2) = (0.0, 0.0, 0.0);
                for (i, &p) in pmf.probs.iter().enumerate() {
                    let x = i as f64 - a;
                    if x > 0.0 {
                        t += p;
                        s1 += p * x;
                        s2 += p * x * x;
                    }
                }
                if t < ZERO_TAIL {
                    return Err(DistError::ZeroTail { level: a });
                }
                Ok(Overshoot { m1: s1 / t, m2: s2 / t, tail: t })
            }
            _ => {
                let (tail, m1, m2) = self.partial_overshoot(a);
                if tail < ZERO_TAIL {
                    return Err(DistError::ZeroTail { level: a });
                }
                Ok(Overshoot { m1: m1 / tail, m2: m2 / tail, tail: tail.min(1.0) })
            }
        }
    }

    /// One draw. Uniforms consumed per draw: shifted exponential 1,
    /// hyperexponential 2 (branch, then inverse transform), Erlang mixtures
    /// `1 + k` (branch, then one per phase of the longer branch; the shorter
    /// branch ignores its surplus), discrete 1.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Discrete(pmf) => {
                let u: f64 = rng.gen();
                let mut cum = 0.0;
                for (i, &p) in pmf.probs.iter().enumerate() {
                    cum += p;
                    if u < cum {
                        return i as f64;
                    }
                }
                pmf.max_value() as f64
            }
            _ => DemandSampler::new(self).sample(rng),
        }
    }
}

/// Precomputed sampler; identical draws to [`DemandDistribution::sample`].
#[derive(Debug, Clone)]
pub struct DemandSampler {
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Shifted { shift: f64, rate: f64 },
    Erlangs { short: usize, long: usize, q: f64, rate: f64 },
    Hyper { q: f64, rate1: f64, rate2: f64 },
    Table { cumulative: Vec<f64> },
}

/// `−ln(1 − u)`, one uniform.
fn unit_exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    -(1.0 - u).ln()
}

impl DemandSampler {
    pub fn new(d: &DemandDistribution) -> Self {
        let kind = match d {
            DemandDistribution::ShiftedExponential { shift, rate } => {
                SamplerKind::Shifted { shift: *shift, rate: *rate }
            }
            DemandDistribution::MixedErlangKm1K { k, q, rate } => {
                SamplerKind::Erlangs { short: *k as usize - 1, long: *k as usize, q: *q, rate: *rate }
            }
            DemandDistribution::MixedErlang1K { k, q, rate } => {
                SamplerKind::Erlangs { short: 1, long: *k as usize, q: *q, rate: *rate }
            }
            DemandDistribution::Hyperexponential { q, rate1, rate2 } => {
                SamplerKind::Hyper { q: *q, rate1: *rate1, rate2: *rate2 }
            }
            DemandDistribution::Discrete(pmf) => {
                let mut cum = 0.0;
                let cumulative = pmf
                    .probs
                    .iter()
                    .map(|p| {
                        cum += p;
                        cum
                    })
                    .collect();
                SamplerKind::Table { cumulative }
            }
        };
        DemandSampler { kind }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Shifted { shift, rate } => shift + unit_exponential(rng) / rate,
            SamplerKind::Hyper { q, rate1, rate2 } => {
                let branch: f64 = rng.gen();
                let rate = if branch < *q { rate1 } else { rate2 };
                unit_exponential(rng) / rate
            }
            SamplerKind::Erlangs { short, long, q, rate } => {
                let branch: f64 = rng.gen();
                let phases = if branch < *q { *short } else { *long };
                let mut log_sum = 0.0;
                let mut product = 1.0;
                for i in 0..*long {
                    let u: f64 = rng.gen();
                    if i < phases {
                        product *= 1.0 - u;
                        if product < 1e-200 {
                            log_sum += product.ln();
                            product = 1.0;
                        }
                    }
                }
                -(log_sum + product.ln()) / rate
            }
            SamplerKind::Table { cumulative } => {
                let u: f64 = rng.gen();
                let idx = cumulative.partition_point(|&c| c <= u);
                idx.min(cumulative.len() - 1) as f64
            }
        }
    }
}
