mod common;

use coulomb_core::gas::{
    hamiltonian, incremental_energy_check, mean_field_energy, run_chain, GibbsChain, GibbsParams,
    ParticleConfiguration, Potential, ProposalKind,
};
use coulomb_core::manifold::{build_grid, geodesic_distance};
use coulomb_core::{DiscreteMeasure, ManifoldId, ManifoldPoint, RngState, SpectralModel};
use proptest::prelude::*;

fn torus2(points: &[(f64, f64)]) -> ParticleConfiguration {
    ParticleConfiguration::new(
        ManifoldId::Torus2,
        points.iter().map(|&(x, y)| ManifoldPoint::torus2(x, y)).collect(),
    )
    .unwrap()
}

#[test]
fn two_particle_energy_matches_lattice_sum() {
    let sm = SpectralModel::new(ManifoldId::Torus2);
    let h = hamiltonian(&sm, &torus2(&[(0.0, 0.0), (0.5, 0.5)]), None);
    assert!((h - 0.25 * common::torus2_green(0.5, 0.5)).abs() < 1e-12);
}

#[test]
fn mean_field_energy_examples() {
    let sm = SpectralModel::new(ManifoldId::Torus2);
    let grid = build_grid(ManifoldId::Torus2, 64).unwrap();
    let uniform = DiscreteMeasure::from_grid(&grid);
    assert!(mean_field_energy(&sm, &uniform, None, true).unwrap().abs() < 0.02);

    let single = DiscreteMeasure::new(ManifoldId::Torus2, vec![ManifoldPoint::torus2(0.3, 0.3)], vec![1.0]).unwrap();
    assert_eq!(mean_field_energy(&sm, &single, None, false).unwrap(), f64::INFINITY);

    // two atoms at distance 0.5·√2
    let two = DiscreteMeasure::new(
        ManifoldId::Torus2,
        vec![ManifoldPoint::torus2(0.0, 0.0), ManifoldPoint::torus2(0.5, 0.5)],
        vec![0.5, 0.5],
    )
    .unwrap();
    let h = mean_field_energy(&sm, &two, None, true).unwrap();
    assert!((h - 0.5 * 2.0 * 0.25 * common::torus2_green(0.5, 0.5)).abs() < 1e-12);
    assert_eq!(mean_field_energy(&sm, &two, None, false).unwrap(), f64::INFINITY);

    let bad = DiscreteMeasure { weights: vec![0.5, 0.6], ..two };
    assert!(mean_field_energy(&sm, &bad, None, true).is_err());
}

#[test]
fn incremental_energy_is_consistent() {
    let mut rng = RngState::from_seed(8);
    for (m, pot) in [
        (ManifoldId::Torus2, Some(Potential::Cosine { amplitude: 0.2, mode: 2 })),
        (ManifoldId::Torus3, None),
        (ManifoldId::Sphere2, Some(Potential::Zonal { amplitude: 0.5 })),
    ] {
        let sm = SpectralModel::new(m);
        let params = GibbsParams { beta: 100.0, n: 10, step: 0.1, potential: pot };
        let cfg = ParticleConfiguration::sample_uniform(m, 10, &mut rng).unwrap();
        assert!(incremental_energy_check(&sm, &params, &cfg, &mut rng).unwrap() < 1e-10);
    }
    // near collision
    let sm = SpectralModel::new(ManifoldId::Torus2);
    let cfg = torus2(&[(0.2, 0.2), (0.2 + 1e-6, 0.2), (0.7, 0.1)]);
    let params = GibbsParams { beta: 9.0, n: 3, step: 0.05, potential: None };
    assert!(hamiltonian(&sm, &cfg, None).is_finite());
    assert!(incremental_energy_check(&sm, &params, &cfg, &mut rng).unwrap() < 1e-10);
}

/// Coarse state of an n = 2 configuration: the distance band of the pair.
fn band(sm_m: ManifoldId, cfg: &[ManifoldPoint], bands: usize) -> usize {
    let d = geodesic_distance(sm_m, &cfg[0], &cfg[1]);
    ((d / sm_m.diameter() * bands as f64) as usize).min(bands - 1)
}

#[test]
fn stationary_flows_are_symmetric() {
    // every single-site update is reversible, so at stationarity the
    // probability flow between any two sets of states is symmetric
    let m = ManifoldId::Torus2;
    let sm = SpectralModel::new(m);
    let params = GibbsParams { beta: 8.0, n: 2, step: 0.15, potential: None };
    let mut rng = RngState::from_seed(21);
    let init = torus2(&[(0.0, 0.0), (0.5, 0.25)]);
    let mut chain = GibbsChain::new(&sm, params, &init, ProposalKind::Lattice { resolution: 16 }).unwrap();
    for _ in 0..1000 {
        chain.sweep(&mut rng);
    }
    let bands = 5;
    let mut flow = vec![vec![0u64; bands]; bands];
    let mut prev = band(m, chain.points(), bands);
    for _ in 0..100_000 {
        for i in 0..2 {
            chain.update(i, &mut rng);
            let now = band(m, chain.points(), bands);
            flow[prev][now] += 1;
            prev = now;
        }
    }
    let (mut stat, mut dof) = (0.0, 0);
    for a in 0..bands {
        for b in a + 1..bands {
            let (x, y) = (flow[a][b] as f64, flow[b][a] as f64);
            if x + y > 0.0 {
                stat += (x - y).powi(2) / (x + y);
                dof += 1;
            }
        }
    }
    assert!(dof > 0);
    // χ² with `dof` degrees of freedom, 99.9% quantile bound
    assert!(stat < dof as f64 + 6.0 * (2.0 * dof as f64).sqrt(), "χ² = {stat} on {dof} dof, flows {flow:?}");
}

fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let len = x.len() / batches;
    let means: Vec<f64> = (0..batches).map(|b| x[b * len..(b + 1) * len].iter().sum::<f64>() / len as f64).collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

#[test]
fn energy_trace_has_no_drift_after_burn_in() {
    for m in [ManifoldId::Torus2, ManifoldId::Sphere2] {
        let sm = SpectralModel::new(m);
        let n = 8;
        let params = GibbsParams { beta: (n * n) as f64, n, step: 0.2, potential: None };
        let mut rng = RngState::from_seed(13);
        let init = ParticleConfiguration::sample_uniform(m, n, &mut rng).unwrap();
        let run = run_chain(&sm, &params, &init, 500, 4000, &mut rng).unwrap();
        let trace = &run.stats.energy_trace;
        let (a, b) = trace.split_at(trace.len() / 2);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let se = (batch_means_se(a, 20).powi(2) + batch_means_se(b, 20).powi(2)).sqrt();
        assert!((mean(a) - mean(b)).abs() < 2.0 * se, "{m}: {} vs {} (se {se})", mean(a), mean(b));
    }
}

#[test]
fn burn_in_tunes_toward_target_acceptance() {
    let sm = SpectralModel::new(ManifoldId::Sphere2);
    let n = 16;
    let params = GibbsParams { beta: 4.0 * std::f64::consts::PI * (n * n) as f64, n, step: 0.01, potential: None };
    let mut rng = RngState::from_seed(2);
    let init = ParticleConfiguration::sample_uniform(ManifoldId::Sphere2, n, &mut rng).unwrap();
    let run = run_chain(&sm, &params, &init, 400, 400, &mut rng).unwrap();
    let rate = run.stats.acceptance_rate;
    assert!(run.step > 0.01);
    assert!(rate > 0.15 && rate < 0.5 || run.step >= ManifoldId::Sphere2.diameter(), "rate {rate}, step {}", run.step);
    assert_eq!(run.stats.sweeps, 400);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonian_is_permutation_invariant(seed in any::<u64>(), n in 2usize..12, shift in 1usize..11) {
        let sm = SpectralModel::new(ManifoldId::Torus2);
        let mut rng = RngState::from_seed(seed);
        let cfg = ParticleConfiguration::sample_uniform(ManifoldId::Torus2, n, &mut rng).unwrap();
        let mut rotated = cfg.clone();
        rotated.points.rotate_left(shift % n);
        let a = hamiltonian(&sm, &cfg, None);
        let b = hamiltonian(&sm, &rotated, None);
        prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
    }

    #[test]
    fn constant_potential_shifts_by_its_value(seed in any::<u64>(), c in -5.0..5.0f64) {
        let sm = SpectralModel::new(ManifoldId::Torus3);
        let mut rng = RngState::from_seed(seed);
        let cfg = ParticleConfiguration::sample_uniform(ManifoldId::Torus3, 6, &mut rng).unwrap();
        let pot = Potential::Constant { amplitude: c };
        let shift = hamiltonian(&sm, &cfg, Some(&pot)) - hamiltonian(&sm, &cfg, None);
        prop_assert!((shift - c).abs() < 1e-12);
    }
}
