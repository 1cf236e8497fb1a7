//! Evaluators against independent oracles: brute-force enumeration for
//! discrete demand, Monte Carlo of the inventory recursion otherwise.

use fp3_core::exact::{
    exact_discrete_expected_inventory, exact_discrete_p3, exact_phase_expected_inventory, exact_phase_p3,
    to_phase_demand,
};
use fp3_core::p3_recursion::{backward_p3, forward_expected_inventory, forward_p3, pil_expected_inventory};
use fp3_core::{DemandDistribution, DemandMoments, DiscretePmf, Family, PipelineState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sample means and standard errors of `1{Ĩ_{t+L} > 0}` and `Ĩ_{t+L−1}`.
struct McEstimate {
    p3: f64,
    p3_se: f64,
    inv: f64,
    inv_se: f64,
}

fn monte_carlo(state: &PipelineState, q: f64, d: &DemandDistribution, n: usize, seed: u64) -> McEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = state.outstanding.len() + 1;
    let (mut hits, mut s1, mut s2) = (0usize, 0.0, 0.0);
    for _ in 0..n {
        let mut x = state.on_hand;
        let mut projected = 0.0;
        for k in 0..l {
            x = (x - d.sample(&mut rng)).max(0.0);
            if k == l - 1 {
                projected = x;
            }
            x += if k < l - 1 { state.outstanding[k] } else { q };
        }
        if x - d.sample(&mut rng) > 0.0 {
            hits += 1;
        }
        s1 += projected;
        s2 += projected * projected;
    }
    let nf = n as f64;
    let p3 = hits as f64 / nf;
    let inv = s1 / nf;
    McEstimate {
        p3,
        p3_se: (p3 * (1.0 - p3) / nf).sqrt(),
        inv,
        inv_se: ((s2 / nf - inv * inv).max(0.0) / nf).sqrt(),
    }
}

/// Direct enumeration of every demand sequence over `L + 1` periods.
fn brute_force(state: &PipelineState, q: usize, probs: &[f64]) -> (f64, f64) {
    let l = state.outstanding.len() + 1;
    let arrivals: Vec<f64> = state.outstanding.iter().copied().chain([q as f64]).collect();
    let mut p3 = 0.0;
    let mut inv = 0.0;
    let mut idx = vec![0usize; l + 1];
    loop {
        let mut weight = 1.0;
        let mut x = state.on_hand;
        let mut projected = 0.0;
        for (k, &dk) in idx.iter().enumerate() {
            weight *= probs[dk];
            x = (x - dk as f64).max(0.0);
            if k == l - 1 {
                projected = x;
            }
            if k < l {
                x += arrivals[k];
            }
        }
        if x > 0.0 {
            p3 += weight;
        }
        inv += weight * projected;
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return (p3, inv);
            }
            idx[pos] += 1;
            if idx[pos] < probs.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

fn random_pmf(rng: &mut ChaCha8Rng, support: usize) -> DiscretePmf {
    let raw: Vec<f64> = (0..support).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = raw.iter().sum();
    DiscretePmf::new(raw.iter().map(|p| p / total).collect()).unwrap()
}

#[test]
fn discrete_engine_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..25 {
        let support = rng.gen_range(2..=8);
        let pmf = random_pmf(&mut rng, support);
        let l = rng.gen_range(1..=3);
        let state = PipelineState::new(
            rng.gen_range(0..10) as f64,
            (0..l - 1).map(|_| rng.gen_range(0..8) as f64).collect(),
        )
        .unwrap();
        let q = rng.gen_range(0..10);
        let (p3, inv) = brute_force(&state, q, pmf.probs());
        let got_p3 = exact_discrete_p3(&state, q as f64, &pmf).unwrap();
        let got_inv = exact_discrete_expected_inventory(&state, &pmf).unwrap();
        assert!((got_p3 - p3).abs() <= 1e-10, "{state:?} q={q}: {got_p3} vs {p3}");
        assert!((got_inv - inv).abs() <= 1e-10, "{state:?}: {got_inv} vs {inv}");
    }
}

#[test]
fn discrete_engine_matches_monte_carlo_for_poisson() {
    let pmf = DiscretePmf::poisson(5.0).unwrap();
    let d = DemandDistribution::Discrete(pmf.clone());
    let state = PipelineState::new(3.0, vec![4.0, 6.0]).unwrap();
    let mc = monte_carlo(&state, 5.0, &d, 1_000_000, 11);
    let p3 = exact_discrete_p3(&state, 5.0, &pmf).unwrap();
    let inv = exact_discrete_expected_inventory(&state, &pmf).unwrap();
    assert!((p3 - mc.p3).abs() <= 4.0 * mc.p3_se, "{p3} vs {}", mc.p3);
    assert!((inv - mc.inv).abs() <= 4.0 * mc.inv_se, "{inv} vs {}", mc.inv);
}

#[test]
fn reference_state_for_the_approximations() {
    let d = DemandDistribution::exponential(1.0).unwrap();
    let state = PipelineState::new(1.0, vec![1.0]).unwrap();
    let mc = monte_carlo(&state, 1.0, &d, 2_000_000, 3);
    let back = backward_p3(&state, 1.0, &d).unwrap();
    let fwd = forward_p3(&state, 1.0, &d).unwrap();
    assert!((back - mc.p3).abs() <= 0.005, "backward {back} vs {}", mc.p3);
    assert!((fwd - mc.p3).abs() <= 0.02, "forward {fwd} vs {}", mc.p3);
    let pil = pil_expected_inventory(&state, &d).unwrap();
    assert!((pil / mc.inv - 1.0).abs() <= 0.01, "pil {pil} vs {}", mc.inv);

    let pd = to_phase_demand(&d).unwrap();
    let exact = exact_phase_p3(&state, 1.0, &pd).unwrap();
    let exact_inv = exact_phase_expected_inventory(&state, &pd).unwrap();
    assert!((exact - mc.p3).abs() <= 4.0 * mc.p3_se, "phase {exact} vs {}", mc.p3);
    assert!((exact_inv - mc.inv).abs() <= 4.0 * mc.inv_se, "phase {exact_inv} vs {}", mc.inv);
    // The exact engine grades the approximation on the same state.
    assert!((back - exact).abs() <= 0.005);
}

#[test]
fn phase_engine_matches_monte_carlo_on_mixed_erlang_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for i in 0..4 {
        let cv = rng.gen_range(0.3..1.0);
        let d = DemandDistribution::fit(DemandMoments::new(5.0, cv).unwrap(), Some(Family::MixedErlangKm1K)).unwrap();
        let pd = to_phase_demand(&d).unwrap();
        let l = rng.gen_range(1..=3);
        let state = PipelineState::new(
            rng.gen_range(0.0..10.0),
            (0..l - 1).map(|_| rng.gen_range(0.0..8.0)).collect(),
        )
        .unwrap();
        let q = rng.gen_range(0.0..10.0);
        let mc = monte_carlo(&state, q, &d, 400_000, 100 + i);
        let p3 = exact_phase_p3(&state, q, &pd).unwrap();
        let inv = exact_phase_expected_inventory(&state, &pd).unwrap();
        assert!((p3 - mc.p3).abs() <= 4.0 * mc.p3_se, "{state:?} q={q}: {p3} vs {}", mc.p3);
        assert!((inv - mc.inv).abs() <= 4.0 * mc.inv_se + 1e-12, "{state:?}: {inv} vs {}", mc.inv);
    }
}

#[test]
fn phase_engine_handles_shifted_exponential() {
    let d = DemandDistribution::fit(DemandMoments::new(10.0, 0.5).unwrap(), Some(Family::ShiftedExponential)).unwrap();
    let pd = to_phase_demand(&d).unwrap();
    let state = PipelineState::new(12.0, vec![9.0, 11.0]).unwrap();
    let mc = monte_carlo(&state, 10.0, &d, 400_000, 5);
    let p3 = exact_phase_p3(&state, 10.0, &pd).unwrap();
    let inv = exact_phase_expected_inventory(&state, &pd).unwrap();
    assert!((p3 - mc.p3).abs() <= 4.0 * mc.p3_se, "{p3} vs {}", mc.p3);
    assert!((inv - mc.inv).abs() <= 4.0 * mc.inv_se, "{inv} vs {}", mc.inv);
}

#[test]
fn approximations_track_monte_carlo_on_empty_pipelines() {
    // All outstanding orders and stock zero: every threshold but the first is equal.
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut back_err = 0.0;
    let mut fwd_err = 0.0;
    for i in 0..8 {
        let cv = rng.gen_range(0.25..2.0);
        let d = DemandDistribution::fit(DemandMoments::new(1.0, cv).unwrap(), None).unwrap();
        let l = rng.gen_range(1..=4);
        let state = PipelineState::new(0.0, vec![0.0; l - 1]).unwrap();
        // Aim the order at P3 near 0.9 so the comparison sits in the high-target regime.
        let q = (1..4000).map(|k| k as f64 * 0.005).find(|&q| backward_p3(&state, q, &d).unwrap() >= 0.9).unwrap();
        let mc = monte_carlo(&state, q, &d, 200_000, 200 + i);
        let b = backward_p3(&state, q, &d).unwrap();
        let f = forward_p3(&state, q, &d).unwrap();
        assert!((b - mc.p3).abs() <= 0.01, "cv={cv} L={l}: backward {b} vs {}", mc.p3);
        back_err += (b - mc.p3).abs();
        fwd_err += (f - mc.p3).abs();
    }
    assert!(back_err <= fwd_err + 1e-3, "backward {back_err} vs forward {fwd_err}");
}

#[test]
fn expected_inventory_approximations_track_monte_carlo() {
    let d = DemandDistribution::fit(DemandMoments::new(2.0, 0.7).unwrap(), None).unwrap();
    let state = PipelineState::new(3.0, vec![1.5, 2.5, 2.0]).unwrap();
    let mc = monte_carlo(&state, 0.0, &d, 400_000, 31);
    let pil = pil_expected_inventory(&state, &d).unwrap();
    let fwd = forward_expected_inventory(&state, &d).unwrap();
    assert!((pil - mc.inv).abs() <= 0.02 * mc.inv + 4.0 * mc.inv_se, "{pil} vs {}", mc.inv);
    assert!((fwd - mc.inv).abs() <= 0.05 * mc.inv + 4.0 * mc.inv_se, "{fwd} vs {}", mc.inv);
}
