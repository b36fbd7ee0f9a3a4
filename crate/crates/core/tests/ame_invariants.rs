//! Physical invariants of master-equation trajectories.

use annealtherm::ame::{
    closed_system_evolve, evolve, quench_sweep, sample_measurements, AmeRun, BathParams, InitialState, QuenchSweep,
};
use annealtherm::density::DensityMatrix;
use annealtherm::exact::ising_diagonal;
use annealtherm::linalg::C64;
use annealtherm::model::{
    apply_gauge_config, apply_gauge_spec, build_ferromagnetic_chain, build_frustrated_chain, ising_energy, random_gauge,
    ChainSpec, SpinConfig,
};
use annealtherm::schedule::{default_schedule, forward_protocol, reverse_protocol, ProtocolParams};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn trajectories_stay_physical(
        frustrated in proptest::bool::ANY,
        reverse in proptest::bool::ANY,
        s_p in 0.2f64..0.8,
        t_p in 0.0f64..40.0,
        log_rate in 0.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let spec = if frustrated { build_frustrated_chain(3, 1).unwrap() } else { build_ferromagnetic_chain(3).unwrap() };
        let p = ProtocolParams { s_p, t_p, rate_i: 1.0, rate_f: 10f64.powf(log_rate) };
        let proto = if reverse { reverse_protocol(&p) } else { forward_protocol(&p) }.unwrap();
        let end = proto.duration();
        let mut run = AmeRun::new(spec.clone(), default_schedule(), proto, BathParams::default());
        run.record_grid = (0..=8).map(|k| end * k as f64 / 8.0).collect();
        let out = evolve(&run).unwrap();

        prop_assert!(out.trace_error < 1e-9, "trace error {}", out.trace_error);
        prop_assert!(out.hermiticity_error < 1e-9, "hermiticity error {}", out.hermiticity_error);
        prop_assert!(out.min_eigenvalue > -1e-8, "min eigenvalue {}", out.min_eigenvalue);
        prop_assert!(out.trace.iter().all(|t| (t - 1.0).abs() < 1e-9));
        let total: f64 = out.populations_final.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        let diag = ising_diagonal(&spec);
        let e: f64 = out.populations_final.iter().zip(&diag).map(|(p, d)| p * d).sum();
        prop_assert!((e - out.e_ising_final).abs() < 1e-9);

        // Sampled energies agree with the population average.
        let shots = 20_000;
        let samples = sample_measurements(&out.populations_final, shots, seed).unwrap();
        let energies: Vec<f64> = samples.iter().map(|c| ising_energy(&spec, c).unwrap()).collect();
        let mean = energies.iter().sum::<f64>() / shots as f64;
        let var: f64 = out.populations_final.iter().zip(&diag).map(|(p, d)| p * (d - e).powi(2)).sum();
        prop_assert!((mean - e).abs() <= 5.0 * (var / shots as f64).sqrt() + 1e-12, "{} vs {}", mean, e);
    }
}

#[test]
fn zero_coupling_preserves_purity() {
    let spec = build_ferromagnetic_chain(3).unwrap();
    let p = ProtocolParams { s_p: 0.4, t_p: 5.0, rate_i: 1.0, rate_f: 100.0 };
    let bath = BathParams { coupling: 0.0, ..Default::default() };
    let mut run = AmeRun::new(spec, default_schedule(), forward_protocol(&p).unwrap(), bath);
    run.initial = InitialState::Density(DensityMatrix::basis_state(8, 0));
    let out = evolve(&run).unwrap();
    assert!((out.final_state.purity() - 1.0).abs() < 1e-8, "{}", out.final_state.purity());
}


#[test]
fn gauged_pipeline_reproduces_original_statistics() {
    let spec = build_frustrated_chain(4, 2).unwrap();
    let g = random_gauge(4, 17);
    let gauged = apply_gauge_spec(&spec, &g).unwrap();
    let p = ProtocolParams { s_p: 0.35, t_p: 30.0, rate_i: 1.0, rate_f: 1e3 };
    let run_on = |s: &ChainSpec| {
        let run = AmeRun::new(s.clone(), default_schedule(), forward_protocol(&p).unwrap(), BathParams::default());
        evolve(&run).unwrap()
    };
    let plain = run_on(&spec);
    let other = run_on(&gauged);
    // Populations of the gauged run are those of the original, relabeled.
    for (k, pk) in plain.populations_final.iter().enumerate() {
        let c = apply_gauge_config(&SpinConfig::from_index(k, 4), &g).unwrap();
        assert!((other.populations_final[c.to_index()] - pk).abs() < 1e-8);
    }
    let shots = 20_000;
    let unmap = |samples: Vec<SpinConfig>| -> f64 {
        let e: f64 = samples.iter().map(|c| ising_energy(&spec, &apply_gauge_config(c, &g).unwrap()).unwrap()).sum();
        e / shots as f64
    };
    let direct: f64 = sample_measurements(&plain.populations_final, shots, 1)
        .unwrap()
        .iter()
        .map(|c| ising_energy(&spec, c).unwrap())
        .sum::<f64>()
        / shots as f64;
    let via_gauge = unmap(sample_measurements(&other.populations_final, shots, 2).unwrap());
    let diag = ising_diagonal(&spec);
    let e: f64 = plain.populations_final.iter().zip(&diag).map(|(p, d)| p * d).sum();
    let var: f64 = plain.populations_final.iter().zip(&diag).map(|(p, d)| p * (d - e).powi(2)).sum();
    let sigma = (2.0 * var / shots as f64).sqrt();
    assert!((direct - via_gauge).abs() < 5.0 * sigma, "{direct} vs {via_gauge}");
}

#[test]
fn quench_sweep_limits() {
    let spec = build_ferromagnetic_chain(3).unwrap();
    let opt = QuenchSweep { s_p: vec![0.3, 1.0], rates: vec![1e3], t_p: 1900.0, ..Default::default() };
    let cells = quench_sweep(&spec, &default_schedule(), &BathParams::default(), &opt);
    assert_eq!(cells.len(), 2);
    let paused = cells[0].result.as_ref().unwrap();
    assert!((paused.e_ising_projected - paused.e_ising_gibbs).abs() < 1e-6, "{paused:?}");
    let end = cells[1].result.as_ref().unwrap();
    assert_eq!(end.e_ising, end.e_ising_projected);
}

#[test]
fn closed_evolution_of_a_pure_state_keeps_purity() {
    let spec = build_ferromagnetic_chain(3).unwrap();
    let p = ProtocolParams { s_p: 0.5, t_p: 2.0, rate_i: 1.0, rate_f: 10.0 };
    let run = AmeRun::new(spec, default_schedule(), forward_protocol(&p).unwrap(), BathParams::default());
    let mut psi = vec![C64::new(0.0, 0.0); 8];
    psi[0] = C64::new(0.6, 0.0);
    psi[5] = C64::new(0.0, 0.8);
    let out = closed_system_evolve(&run, Some(&psi)).unwrap();
    assert!((out.final_state.purity() - 1.0).abs() < 1e-8, "{}", out.final_state.purity());
    assert!(out.trace_error < 1e-8);
}
