//! Single-rate Erlang mixtures and the handful of operations the two-moment
//! recursions are built on.
//!
//! A [`PhaseBlock`] stores `probs[j] = P{j exponential phases}` for one rate;
//! index 0 is an atom at zero. A [`PhaseMixture`] is a list of blocks whose
//! masses add up to the mixture's total mass, which lets the same type carry
//! both normalized distributions and sub-probability pieces (for instance the
//! part of a distribution lying beyond a threshold).

use statrs::function::gamma::ln_gamma;

/// Poisson probabilities `P{N = i}` for `i = 0..=n` with mean `lambda`.
///
/// Computed outward from the mode so no intermediate value overflows; terms
/// far in the tails underflow to zero.
pub(crate) fn poisson_pmfs(lambda: f64, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if lambda <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    let mode = (lambda.floor() as usize).min(n);
    let log_mode = -lambda + mode as f64 * lambda.ln() - ln_gamma(mode as f64 + 1.0);
    out[mode] = log_mode.exp();
    for i in (1..=mode).rev() {
        out[i - 1] = out[i] * i as f64 / lambda;
    }
    for i in mode..n {
        out[i + 1] = out[i] * lambda / (i + 1) as f64;
    }
    out
}

/// Upper index beyond which a Poisson(`lambda`) variable has less than
/// `tail` mass (conservative normal-style bound, refined by summation).
pub(crate) fn poisson_upper_bound(lambda: f64, tail: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let guess = (lambda + 10.0 * lambda.sqrt() + 20.0).ceil() as usize;
    let pmfs = poisson_pmfs(lambda, guess);
    let mut cum = 0.0;
    for (i, p) in pmfs.iter().enumerate() {
        cum += p;
        if i as f64 >= lambda && 1.0 - cum < tail {
            return i;
        }
    }
    guess
}

/// Calls `f(n, P{N = n})` for `n` in `lo..=hi`, `N ~ Poisson(lambda)`,
/// skipping terms too small to matter. Work is proportional to the part of
/// the window within ~40 standard deviations of the mean.
fn for_each_poisson(lambda: f64, lo: usize, hi: usize, mut f: impl FnMut(usize, f64)) {
    if lo > hi {
        return;
    }
    if lambda <= 0.0 {
        if lo == 0 {
            f(0, 1.0);
        }
        return;
    }
    let spread = 40.0 * lambda.sqrt() + 40.0;
    let lo = lo.max((lambda - spread).max(0.0) as usize);
    let hi = hi.min((lambda + spread) as usize);
    if lo > hi {
        return;
    }
    let start = (lambda.floor() as usize).clamp(lo, hi);
    let p0 = (-lambda + start as f64 * lambda.ln() - ln_gamma(start as f64 + 1.0)).exp();
    if p0 == 0.0 {
        return;
    }
    let mut p = p0;
    for n in (lo..=start).rev() {
        f(n, p);
        p *= n as f64 / lambda;
        if p == 0.0 {
            break;
        }
    }
    p = p0;
    for n in start + 1..=hi {
        p *= lambda / n as f64;
        if p == 0.0 {
            break;
        }
        f(n, p);
    }
}

/// For `Z ~ Erlang(shape, rate)`: `[P{Z > a}, E[(Z − a)^j·1{Z > a}] for j = 1, 2, 3]`.
///
/// The residual after `a` is Erlang(`shape − N`) where `N ~ Poisson(rate·a)`
/// counts phases completed by `a`.
pub(crate) fn erlang_partial_moments(shape: usize, rate: f64, a: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    if shape == 0 {
        return out;
    }
    for_each_poisson(rate * a.max(0.0), 0, shape - 1, |n, p| {
        let r = (shape - n) as f64;
        out[0] += p;
        out[1] += p * r;
        out[2] += p * r * (r + 1.0);
        out[3] += p * r * (r + 1.0) * (r + 2.0);
    });
    out[0] = out[0].min(1.0);
    out[1] /= rate;
    out[2] /= rate * rate;
    out[3] /= rate * rate * rate;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PhaseBlock {
    pub rate: f64,
    pub probs: Vec<f64>,
}

impl PhaseBlock {
    pub fn new(rate: f64, probs: Vec<f64>) -> Self {
        PhaseBlock { rate, probs }
    }

    /// Erlang-`shape` with all of `weight` on it.
    pub fn erlang(rate: f64, shape: usize, weight: f64) -> Self {
        let mut probs = vec![0.0; shape + 1];
        probs[shape] = weight;
        PhaseBlock { rate, probs }
    }

    fn mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    fn max_phase(&self) -> usize {
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Partial raw moments `(Σ p, Σ p·E[Z], Σ p·E[Z²])` over the block.
    fn raw_moments(&self) -> (f64, f64, f64) {
        let mut m0 = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (j, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let j = j as f64;
            m0 += p;
            m1 += p * j;
            m2 += p * j * (j + 1.0);
        }
        (m0, m1 / self.rate, m2 / (self.rate * self.rate))
    }

    /// Sub-distribution of `Z − a` on `{Z > a}`: phases completed by `a` are
    /// Poisson, the remaining count is what is left of the Erlang.
    fn overshoot(&self, a: f64) -> PhaseBlock {
        let top = self.max_phase();
        let mut out = vec![0.0; top + 1];
        if top == 0 {
            return PhaseBlock::new(self.rate, out);
        }
        if a <= 0.0 {
            out[1..].copy_from_slice(&self.probs[1..=top]);
            return PhaseBlock::new(self.rate, out);
        }
        let pmfs = poisson_pmfs(self.rate * a, top - 1);
        for j in 1..=top {
            let p = self.probs[j];
            if p == 0.0 {
                continue;
            }
            for r in 1..=j {
                out[r] += p * pmfs[j - r];
            }
        }
        PhaseBlock::new(self.rate, out)
    }

    /// In-place `(Z − E)⁺` with `E ~ Exp(mu)` independent of `Z`.
    fn subtract_exponential(probs: &mut [f64], rate: f64, mu: f64) {
        let n = probs.len();
        if n <= 1 {
            return;
        }
        let r = rate / (rate + mu);
        let s = mu / (rate + mu);
        let mut acc = 0.0;
        for m in (1..n).rev() {
            acc = probs[m] + r * acc;
            probs[m] = s * acc;
        }
        probs[0] += r * acc;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PhaseMixture {
    pub blocks: Vec<PhaseBlock>,
}

impl PhaseMixture {
    pub fn new(blocks: Vec<PhaseBlock>) -> Self {
        PhaseMixture { blocks }
    }

    pub fn mass(&self) -> f64 {
        self.blocks.iter().map(PhaseBlock::mass).sum()
    }

    /// `(mass, E[Z·1], E[Z²·1])` over the (possibly sub-probability) mixture.
    pub fn raw_moments(&self) -> (f64, f64, f64) {
        self.blocks.iter().fold((0.0, 0.0, 0.0), |acc, b| {
            let (m0, m1, m2) = b.raw_moments();
            (acc.0 + m0, acc.1 + m1, acc.2 + m2)
        })
    }

    /// Mass sitting exactly at zero.
    pub fn atom(&self) -> f64 {
        self.blocks.iter().map(|b| b.probs.first().copied().unwrap_or(0.0)).sum()
    }

    /// The part of the mixture beyond `a`, shifted down by `a`. Its mass is
    /// `P{Z > a}`.
    pub fn overshoot(&self, a: f64) -> PhaseMixture {
        PhaseMixture::new(self.blocks.iter().map(|b| b.overshoot(a)).collect())
    }

    /// Distribution of `(Z − O)⁺` for `O` an independent phase mixture
    /// (normalized to mass 1). Each block of `self` keeps its own rate.
    pub fn subtract(&self, other: &PhaseMixture) -> PhaseMixture {
        let total = other.mass();
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for w in &self.blocks {
            let mut acc = vec![0.0; w.probs.len()];
            for o in &other.blocks {
                let top = o.max_phase();
                let mut cur = w.probs.clone();
                if o.probs[0] > 0.0 {
                    for (a, c) in acc.iter_mut().zip(&cur) {
                        *a += o.probs[0] / total * c;
                    }
                }
                for j in 1..=top {
                    PhaseBlock::subtract_exponential(&mut cur, w.rate, o.rate);
                    let weight = o.probs[j] / total;
                    if weight > 0.0 {
                        for (a, c) in acc.iter_mut().zip(&cur) {
                            *a += weight * c;
                        }
                    }
                }
            }
            blocks.push(PhaseBlock::new(w.rate, acc));
        }
        PhaseMixture::new(blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn poisson_pmfs_sum_to_one_across_scales() {
        for &lambda in &[0.0, 1e-3, 0.7, 5.0, 80.0, 900.0, 5000.0] {
            let n = poisson_upper_bound(lambda, 1e-14);
            let s: f64 = poisson_pmfs(lambda, n).iter().sum();
            assert_relative_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn poisson_pmf_matches_direct_formula() {
        let p = poisson_pmfs(3.5, 10);
        let direct = (-3.5f64).exp() * 3.5f64.powi(4) / 24.0;
        assert_relative_eq!(p[4], direct, max_relative = 1e-13);
    }

    #[test]
    fn erlang_partial_moments_match_block_overshoot() {
        for &(shape, rate, a) in &[(1usize, 0.5, 3.0), (7, 2.0, 2.5), (40, 1.0, 55.0), (3, 1.0, 0.0)] {
            let block = PhaseMixture::new(vec![PhaseBlock::erlang(rate, shape, 1.0)]);
            let (m0, m1, m2) = block.overshoot(a).raw_moments();
            let [t, e1, e2, _] = erlang_partial_moments(shape, rate, a);
            assert_relative_eq!(t, m0, max_relative = 1e-12);
            assert_relative_eq!(e1, m1, max_relative = 1e-12);
            assert_relative_eq!(e2, m2, max_relative = 1e-12);
        }
    }

    #[test]
    fn erlang_third_moment() {
        // Erlang(2, 1) from zero: E[Z³] = 2·3·4.
        assert_relative_eq!(erlang_partial_moments(2, 1.0, 0.0)[3], 24.0, max_relative = 1e-14);
        // Exponential memorylessness: E[(Z − a)³; Z > a] = e^{−a}·6.
        assert_relative_eq!(erlang_partial_moments(1, 1.0, 2.0)[3], 6.0 * (-2.0f64).exp(), max_relative = 1e-14);
    }

    #[test]
    fn erlang_partial_moments_far_tail_underflows_to_zero() {
        assert_eq!(erlang_partial_moments(5, 1.0, 1e5)[0], 0.0);
    }

    #[test]
    fn exponential_overshoot_is_memoryless() {
        let mix = PhaseMixture::new(vec![PhaseBlock::erlang(0.5, 1, 1.0)]);
        let over = mix.overshoot(3.0);
        let (m0, m1, m2) = over.raw_moments();
        assert_relative_eq!(m0, (-1.5f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(m1 / m0, 2.0, max_relative = 1e-14);
        assert_relative_eq!(m2 / m0, 8.0, max_relative = 1e-14);
    }

    #[test]
    fn subtracting_exponential_from_exponential() {
        // (X − E)⁺ with X ~ Exp(1), E ~ Exp(2): P{X > E} = 2/3, and given
        // X > E the residual is Exp(1) again.
        let x = PhaseMixture::new(vec![PhaseBlock::erlang(1.0, 1, 1.0)]);
        let e = PhaseMixture::new(vec![PhaseBlock::erlang(2.0, 1, 1.0)]);
        let d = x.subtract(&e);
        assert_relative_eq!(d.atom(), 1.0 / 3.0, max_relative = 1e-14);
        let (_, m1, _) = d.raw_moments();
        assert_relative_eq!(m1, 2.0 / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn subtraction_conserves_mass() {
        let x = PhaseMixture::new(vec![PhaseBlock::new(1.3, vec![0.1, 0.0, 0.2, 0.3, 0.4])]);
        let o = PhaseMixture::new(vec![
            PhaseBlock::new(0.7, vec![0.0, 0.5, 0.25]),
            PhaseBlock::new(2.0, vec![0.0, 0.25]),
        ]);
        assert_relative_eq!(x.subtract(&o).mass(), 1.0, epsilon = 1e-14);
    }
}
