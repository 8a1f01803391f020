use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

use noonsim::config::Config;
use noonsim::dynamics::{build_collapse_set, evolve_density, evolve_state, IntegratorConfig};
use noonsim::hamiltonians::{Coefficient, SystemParams, TimeDependentOperator};
use noonsim::hilbert::{annihilation, creation, displacement, embed, qudit_transition, HilbertSpec, Slot, StateVector};
use noonsim::protocol::{derive_params, run_protocol, ModelKind, RunSettings};
use noonsim::pulses::{invariant_residual, sensitivity_q, two_level_transfer, Envelope, InvariantParams};
use noonsim::sweeps::{run_sweep, Baseline, SweepParam, SweepRange, SweepSpec};

fn driven(spec: HilbertSpec, omega: f64, g: f64, nu: f64) -> TimeDependentOperator {
    let q = |j, k| embed(&qudit_transition(j, k).unwrap(), Slot::Qudit, spec).unwrap().into_csr();
    let a2 = embed(&annihilation(spec.cavity_dim()).unwrap(), Slot::Cavity2, spec).unwrap().into_csr();
    let mut h = TimeDependentOperator::new(spec);
    h.push_hermitian("drive", q(3, 0), Coefficient::function(move |t| C64::from_polar(omega, nu * t)));
    h.push_hermitian("exchange", q(4, 3).mul(&a2).unwrap(), Coefficient::Constant(C64::new(g, 0.0)));
    h.raise_frequency(nu);
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ladder_commutator_is_identity_below_the_cutoff(d in 2usize..40) {
        let a = annihilation(d).unwrap().to_dense();
        let ad = creation(d).unwrap().to_dense();
        let c = &a * &ad - &ad * &a;
        for i in 0..d {
            for j in 0..d {
                let want = if i != j { 0.0 } else if i + 1 < d { 1.0 } else { 1.0 - d as f64 };
                prop_assert!((c[(i, j)] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn displacement_is_unitary_with_mean_photon_alpha_squared(alpha in 0.0f64..2.5) {
        let d = 60;
        let disp = displacement(alpha, d).unwrap();
        let m: &DMatrix<C64> = &disp.matrix;
        let err = (m.adjoint() * m - DMatrix::<C64>::identity(d, d)).iter().fold(0.0f64, |acc, v| acc.max(v.norm()));
        prop_assert!(err < 1e-10);
        let nbar: f64 = disp.displaced_vacuum().iter().enumerate().map(|(k, v)| k as f64 * v.norm_sqr()).sum();
        prop_assert!((nbar - alpha * alpha).abs() < 1e-9);
    }

    #[test]
    fn optimized_pulse_solves_the_invariant_equation(a in 0.3f64..3.0, tau in 0.005f64..1.0) {
        let params = InvariantParams::new(a, tau).unwrap();
        let grid: Vec<f64> = (0..=200).map(|k| (tau * k as f64 / 200.0).min(tau)).collect();
        let r = invariant_residual(&grid, params, 1.0).unwrap();
        prop_assert!(r * tau < 1e-9, "residual {r}");
    }

    #[test]
    fn sensitivity_is_nonnegative_and_vanishes_at_integers(a in 0.05f64..4.0, k in 1u32..5) {
        prop_assert!(sensitivity_q(a).unwrap() >= 0.0);
        prop_assert!(sensitivity_q(k as f64).unwrap() < 1e-28);
    }

    #[test]
    fn two_level_transfer_is_a_probability_amplitude(delta in -0.5f64..0.5, a in 1u32..4) {
        for pulse in [Envelope::pi(0.0, 0.01).unwrap(), Envelope::optimized(0.0, 0.01, a as f64).unwrap()] {
            let amp = two_level_transfer(&pulse, delta).unwrap();
            prop_assert!((0.0..=1.0 + 1e-10).contains(&amp));
            prop_assert!(two_level_transfer(&pulse, 0.0).unwrap() > 1.0 - 1e-9);
        }
    }

    #[test]
    fn pure_evolution_keeps_the_norm(omega in 0.5f64..8.0, g in 0.1f64..3.0, nu in -2.0f64..2.0) {
        let spec = HilbertSpec::new(4).unwrap();
        let psi0 = StateVector::basis(spec, 0, 0, 2);
        let cfg = IntegratorConfig { rtol: 1e-10, atol: 1e-12, ..Default::default() };
        let (_, _, drift) = evolve_state(&driven(spec, omega, g, nu), &psi0, &[0.0, 2.0, 4.0], &cfg).unwrap();
        prop_assert!(drift < 1e-8, "drift {drift}");
    }

    #[test]
    fn master_equation_keeps_trace_and_positivity(gd in 0.0f64..200.0, gr in 0.0f64..200.0, gk in 0.0f64..200.0) {
        let spec = HilbertSpec::new(3).unwrap();
        let rho0 = StateVector::basis(spec, 0, 0, 2).to_density();
        let collapse = build_collapse_set(spec, gd, gr, gk).unwrap();
        let (states, run) =
            evolve_density(&driven(spec, 3.0, 1.0, 0.5), &rho0, &[0.0, 1.5, 3.0], &collapse, &IntegratorConfig::default()).unwrap();
        prop_assert!(run.trace_drift < 1e-6);
        for rho in &states {
            for k in 0..spec.dim() {
                prop_assert!(rho.population(k) > -1e-9);
            }
        }
    }

    #[test]
    fn sweep_grids_are_ordered_and_hit_the_endpoints(lo in -1.0f64..1.0, span in 0.01f64..2.0, points in 2usize..60) {
        let hi = lo + span;
        let v = SweepRange::new(lo, hi, points).unwrap().values();
        prop_assert_eq!(v.len(), points);
        prop_assert!((v[0] - lo).abs() <= 1e-11 * lo.abs().max(1e-300));
        prop_assert!((v[points - 1] - hi).abs() <= 1e-11 * hi.abs().max(1e-300));
        prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn config_survives_a_json_round_trip(n in 2u32..7, delta in -0.3f64..0.3, samples in 2usize..500) {
        let text = format!(r#"{{"protocol": {{"n": {n}}}, "errors": {{"delta": {delta}}}, "output": {{"samples": {samples}}}}}"#);
        let cfg = Config::from_json(&text).unwrap();
        let again = Config::from_json(&cfg.to_json()).unwrap();
        prop_assert_eq!(cfg.hash(), again.hash());
        prop_assert_eq!(again.protocol.n, n);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn effective_fidelities_are_bounded(n in 2u32..6, delta in -0.3f64..0.3) {
        let params = derive_params(n, &SystemParams::for_photons(n), 0.01, 15.0).unwrap();
        let mut settings = RunSettings { model: ModelKind::Effective, samples: 11, ..Default::default() };
        settings.errors.delta = delta;
        let r = run_protocol(&params, &settings).unwrap();
        for f in r.step_fidelities() {
            prop_assert!((-1e-12..=1.0 + 1e-9).contains(&f));
        }
        for o in &r.series {
            let total: f64 = o.populations.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn sweeps_do_not_depend_on_the_worker_count() {
    let base = Baseline::standard().unwrap().with_model(ModelKind::Effective);
    let spec = |jobs| SweepSpec {
        param: SweepParam::Delta,
        range: SweepRange::new(-0.2, 0.2, 9).unwrap(),
        baseline: base.clone(),
        jobs: Some(jobs),
    };
    let a = run_sweep(&spec(1)).unwrap();
    let b = run_sweep(&spec(4)).unwrap();
    assert_eq!(a, b);
}
