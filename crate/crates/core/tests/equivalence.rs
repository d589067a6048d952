use std::f64::consts::PI;

use cavity_epr::effective_dynamics::{
    effective_hamiltonian, half_period_map, scheme1_propagator, two_mode_state, Couplings,
};
use cavity_epr::fock_algebra::{
    annihilation, ModeSpace, Operator, PureState, C64, CAV1, CAV2, MOTION,
};
use cavity_epr::gaussian_oracle::GaussianState;
use cavity_epr::lindblad_integrator::{
    compare_full_vs_effective, default_observables, integrate_master, propagate_krylov,
    ComparisonOptions, KrylovControl, MasterEquation, Observable, Propagator, StepControl,
    Trajectory,
};
use cavity_epr::physical_model::SystemParams;
use nalgebra::DVector;
use proptest::prelude::*;

fn fock_run(c: &Couplings, dim: usize, t: f64) -> (ModeSpace, Trajectory) {
    let space = ModeSpace::new([(CAV1, dim), (CAV2, dim), (MOTION, dim)]).unwrap();
    let eq = MasterEquation::new(effective_hamiltonian(c, &space).unwrap(), vec![]).unwrap();
    let obs = default_observables(&space).unwrap();
    let ctl = KrylovControl {
        samples: 1,
        ..KrylovControl::default()
    };
    let tr = propagate_krylov(&eq, &PureState::vacuum(&space), (0.0, t), &ctl, &obs).unwrap();
    (space, tr)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // weak squeezing keeps a 16-level cutoff exact to well below the tolerance
    #[test]
    fn fock_matches_gaussian_at_any_time(
        r in 3.2f64..5.0,
        p1 in -PI..PI,
        p2 in -PI..PI,
        frac in 0.0f64..2.0,
    ) {
        let c = Couplings::new(C64::from_polar(0.3, p1), C64::from_polar(0.3 * r, p2));
        let t = frac * c.half_period().unwrap();
        let (space, tr) = fock_run(&c, 16, t);
        let g = GaussianState::vacuum(3).unwrap()
            .apply_bogoliubov(&scheme1_propagator(&c, t).unwrap()).unwrap();
        for k in 0..3 {
            prop_assert!((tr.values[1][k].re - g.occupation(k).unwrap()).abs() < 1e-6);
        }
        let a1a2 = &annihilation(&space, CAV1).unwrap() * &annihilation(&space, CAV2).unwrap();
        let fp = tr.pure_state(1).unwrap().expectation(&a1a2).unwrap();
        prop_assert!((fp - g.pair_amplitude(0, 1).unwrap()).norm() < 1e-6);
    }
}

#[test]
fn propagated_state_is_two_mode_squeezed() {
    let c = Couplings::new(C64::from_polar(1.0, 0.4), C64::from_polar(2.0, -1.3));
    let dim = 30;
    let (_, tr) = fock_run(&c, dim, c.half_period().unwrap());
    let cavities = tr.pure_state(1).unwrap().reduced(&[CAV1, CAV2]).unwrap();
    // the literal amplitudes carry the pair phase shifted by π
    let tms = two_mode_state(2.0, c.phase() + PI, dim - 1).unwrap();
    let pair_space = ModeSpace::new([(CAV1, dim), (CAV2, dim)]).unwrap();
    let mut amps = DVector::zeros(dim * dim);
    for (n, a) in tms.amplitudes.iter().enumerate() {
        amps[pair_space.basis_index(&[n, n]).unwrap()] = *a / tms.truncated_norm.sqrt();
    }
    let psi = PureState::new(pair_space, amps).unwrap();
    let f = cavities.fidelity_with_pure(&psi).unwrap();
    assert!(f > 1.0 - 1e-5, "fidelity {f}");

    let wrong = two_mode_state(2.0, c.phase(), dim - 1).unwrap();
    let mut amps = DVector::zeros(dim * dim);
    for (n, a) in wrong.amplitudes.iter().enumerate() {
        amps[n * dim + n] = *a / wrong.truncated_norm.sqrt();
    }
    let space = ModeSpace::new([(CAV1, dim), (CAV2, dim)]).unwrap();
    let f_wrong = cavities
        .fidelity_with_pure(&PureState::new(space, amps).unwrap())
        .unwrap();
    assert!(f_wrong < 0.9, "unshifted phase fidelity {f_wrong}");
}

/// At ⟨n⟩ = 3 a 40-level cutoff reaches the 1e-4 agreement that 25 levels
/// miss, so the residual there is truncation.
#[test]
fn larger_cutoff_closes_the_gap() {
    let c = Couplings::from_ratio(3f64.sqrt());
    let (t_pi, map) = half_period_map(&c).unwrap();
    let g = GaussianState::vacuum(3).unwrap().apply_bogoliubov(&map).unwrap();
    let n_ref = g.occupation(0).unwrap();
    assert!((n_ref - 3.0).abs() < 1e-12);
    let err = |dim: usize| {
        let (space, tr) = fock_run(&c, dim, t_pi);
        let a1a2 = &annihilation(&space, CAV1).unwrap() * &annihilation(&space, CAV2).unwrap();
        let pair = tr.pure_state(1).unwrap().expectation(&a1a2).unwrap();
        let gp = g.pair_amplitude(0, 1).unwrap();
        ((tr.values[1][0].re - n_ref).abs() / n_ref).max((pair - gp).norm() / gp.norm())
    };
    let (e25, e40) = (err(25), err(40));
    assert!(e25 > 1e-4, "dim 25 error {e25}");
    assert!(e40 < 1e-4, "dim 40 error {e40}");
}

#[test]
fn rk4_and_krylov_agree_on_full_model() {
    let p = SystemParams::scheme1(1.0, -20.0, 2.0, [C64::new(0.3, 0.0), C64::new(0.5, 0.0)], 0.1);
    let base = ComparisonOptions {
        duration: Some(4.0),
        control: StepControl {
            samples: 1,
            rel_tol: 1e-9,
            ..StepControl::default()
        },
        ..ComparisonOptions::default()
    };
    let krylov = compare_full_vs_effective(&p, [2, 4, 4, 4], &base).unwrap();
    let rk4 = compare_full_vs_effective(
        &p,
        [2, 4, 4, 4],
        &ComparisonOptions {
            propagator: Propagator::Rk4,
            ..base
        },
    )
    .unwrap();
    for (a, b) in [
        (krylov.full.n_cav1, rk4.full.n_cav1),
        (krylov.full.n_cav2, rk4.full.n_cav2),
        (krylov.full.n_motion, rk4.full.n_motion),
        (krylov.excited_population, rk4.excited_population),
    ] {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    assert!((krylov.full.pair - rk4.full.pair).norm() < 1e-8);
}

#[test]
fn lindblad_decay_matches_gaussian_damping() {
    let c = Couplings::from_ratio(3.5);
    let dim = 12;
    let (_, tr) = fock_run(&c, dim, c.half_period().unwrap());
    let cavities = tr.pure_state(1).unwrap().reduced(&[CAV1, CAV2]).unwrap();
    let space = cavities.space().clone();
    let kappa: [f64; 2] = [0.4, 0.9];
    let jumps = vec![
        &annihilation(&space, CAV1).unwrap() * (2.0 * kappa[0]).sqrt(),
        &annihilation(&space, CAV2).unwrap() * (2.0 * kappa[1]).sqrt(),
    ];
    let zero = Operator::zero(&space);
    let eq = MasterEquation::new(zero, jumps).unwrap();
    let a1a2 = &annihilation(&space, CAV1).unwrap() * &annihilation(&space, CAV2).unwrap();
    let obs = vec![Observable {
        name: "pair".into(),
        operator: a1a2,
    }];
    let mut all = default_observables(&space).unwrap();
    all.extend(obs);
    let control = StepControl {
        samples: 4,
        ..StepControl::default()
    };
    let traj = integrate_master(&eq, &cavities, (0.0, 2.0), &control, &all).unwrap();

    let (_, map) = half_period_map(&c).unwrap();
    let g0 = GaussianState::vacuum(3)
        .unwrap()
        .apply_bogoliubov(&map)
        .unwrap()
        .reduced(&[0, 1])
        .unwrap();
    for (t, v) in traj.times.iter().zip(&traj.values) {
        let g = g0.cavity_decay(&kappa, *t).unwrap();
        assert!((v[0].re - g.occupation(0).unwrap()).abs() < 1e-5);
        assert!((v[1].re - g.occupation(1).unwrap()).abs() < 1e-5);
        assert!((v[2] - g.pair_amplitude(0, 1).unwrap()).norm() < 1e-5);
    }
}
