use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use popxfer::controls::ControlSchedule;
use popxfer::experiments::{raman_baseline, Axis};
use popxfer::io::{lookup_protocol, write_learning_curve, write_sweep};
use popxfer::lindblad::{
    propagate_schedule_with, simulate_transfer, DensityMatrix, HamiltonianSpec, Method,
    PropagationOptions,
};
use popxfer::policy::{sample_actions, train, Architecture, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `|<f| exp(-i H t) |g>|^2` for the constant three-level Hamiltonian, via a
/// Hermitian eigendecomposition.
fn oracle_target_population(dp: f64, d: f64, spec: HamiltonianSpec<f64>, t: f64) -> f64 {
    let h = DMatrix::from_row_slice(
        3,
        3,
        &[
            0.0,
            spec.omega_p / 2.0,
            0.0,
            spec.omega_p / 2.0,
            dp,
            spec.omega_s / 2.0,
            0.0,
            spec.omega_s / 2.0,
            d,
        ],
    );
    let eig = h.symmetric_eigen();
    let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let phases = DVector::from_iterator(
        3,
        eig.eigenvalues
            .iter()
            .map(|&l| Complex64::new(0.0, -l * t).exp()),
    );
    let psi0 = DVector::from_vec(vec![Complex64::new(1.0, 0.0), 0.0.into(), 0.0.into()]);
    let coeffs = v.adjoint() * psi0;
    let psi = &v * coeffs.component_mul(&phases);
    psi[2].norm_sqr()
}

fn sample_times(total: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| total * k as f64 / (n - 1) as f64).collect()
}

#[test]
fn raman_resonant_point_matches_eigendecomposition() {
    let total = 40.0;
    let axis = Axis::linear("delta_p", 0.0, 0.0, 1);
    let reference = lookup_protocol("protocol1_T40", total).unwrap();
    let result = raman_baseline(total, &axis, &reference).unwrap();
    let spec = HamiltonianSpec::always_on();
    let oracle_max = sample_times(total, 401)
        .into_iter()
        .map(|t| oracle_target_population(0.0, 0.0, spec, t))
        .fold(0.0, f64::max);
    let got = result.points[0].max_rho_ff;
    assert!((got - oracle_max).abs() < 1e-8, "{got} vs {oracle_max}");
    let closed_form_final = ((1.0 - (total / 2f64.sqrt()).cos()) / 2.0).powi(2);
    assert!((result.points[0].final_rho_ff - closed_form_final).abs() < 1e-8);
}

#[test]
fn raman_values_are_symmetric_in_delta_p() {
    let reference = lookup_protocol("protocol1_T40", 40.0).unwrap();
    let result =
        raman_baseline(40.0, &Axis::linear("delta_p", -12.0, 12.0, 25), &reference).unwrap();
    for p in &result.points {
        let mirror = result.at(&[-p.coords[0]]).unwrap();
        assert!((p.max_rho_ff - mirror.max_rho_ff).abs() < 1e-9);
        assert!((p.final_rho_ff - mirror.final_rho_ff).abs() < 1e-9);
    }
}

#[test]
fn exact_propagation_matches_eigendecomposition_for_constant_detunings() {
    let spec = HamiltonianSpec::new(0.7, 1.3).unwrap();
    let mut opts = PropagationOptions::default().with_samples(2);
    opts.spec = spec;
    for &(dp, d, t) in &[(0.0, 0.0, 3.0), (2.5, -0.4, 11.0), (-7.0, 1.2, 25.0)] {
        let schedule = ControlSchedule::piecewise_constant(vec![(dp, d)]).unwrap();
        let s = simulate_transfer(&DensityMatrix::ground(3), &schedule, t, &[], &opts).unwrap();
        let oracle = oracle_target_population(dp, d, spec, t);
        assert!((s.final_target - oracle).abs() < 1e-10, "{dp} {d} {t}");
    }
}

#[test]
fn rk4_matches_eigendecomposition_for_smooth_constant_schedule() {
    let spec = HamiltonianSpec::always_on();
    let schedule = ControlSchedule::poly_pair(vec![3.0], vec![-0.25]).unwrap();
    for method in [Method::Auto, Method::Rk4] {
        let opts = PropagationOptions::default()
            .with_samples(2)
            .with_method(method);
        let s = simulate_transfer(&DensityMatrix::ground(3), &schedule, 20.0, &[], &opts).unwrap();
        let oracle = oracle_target_population(3.0, -0.25, spec, 20.0);
        assert!((s.final_target - oracle).abs() < 1e-8, "{method:?}");
    }
}

#[test]
fn rk4_error_shrinks_at_fourth_order() {
    let schedule = lookup_protocol("protocol2_T40", 40.0).unwrap();
    let run = |h: f64| {
        let mut opts = PropagationOptions::default()
            .with_method(Method::Rk4)
            .with_max_step(h)
            .with_samples(2);
        opts.phase_resolution = 10.0;
        simulate_transfer(&DensityMatrix::ground(3), &schedule, 40.0, &[], &opts)
            .unwrap()
            .final_target
    };
    let (a, b, c) = (run(0.01), run(0.005), run(0.0025));
    let ratio = (a - b).abs() / (b - c).abs();
    assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
}

#[test]
fn builtin_protocols_reach_reference_values() {
    let opts = PropagationOptions::default();
    let cases = [
        ("protocol1_T40", 40.0, (0.9974, 1.0), (0.009, 0.019)),
        ("protocol1_T20", 20.0, (0.9948, 0.9988), (0.042, 0.053)),
        ("protocol2_T40", 40.0, (0.9939, 0.9999), (0.010, 0.021)),
    ];
    for (name, t, ff, ee) in cases {
        let schedule = lookup_protocol(name, t).unwrap();
        let traj =
            propagate_schedule_with(&DensityMatrix::ground(3), &schedule, t, &[], &opts).unwrap();
        let (f, e) = (traj.final_target(), traj.max_excited());
        assert!(f >= ff.0 && f <= ff.1, "{name}: rho_ff {f}");
        assert!(e >= ee.0 && e <= ee.1, "{name}: max rho_ee {e}");
    }
}

#[test]
fn protocol1_trajectory_endpoint() {
    let schedule = lookup_protocol("protocol1", 40.0).unwrap();
    let traj = propagate_schedule_with(
        &DensityMatrix::ground(3),
        &schedule,
        40.0,
        &[],
        &PropagationOptions::default(),
    )
    .unwrap();
    assert!((traj.final_target() - 0.9994).abs() <= 0.002);
    assert_eq!(*traj.times.last().unwrap(), 40.0);
    assert!(traj.len() >= 401);
}

#[test]
fn gaussian_sampling_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 20_000;
    let means = vec![(0.2, -0.1); n];
    let a = sample_actions(&means, (0.05, 0.1), &mut rng);
    let mean0 = a.iter().map(|x| x.0).sum::<f64>() / n as f64;
    let mean1 = a.iter().map(|x| x.1).sum::<f64>() / n as f64;
    let var0 = a.iter().map(|x| (x.0 - mean0).powi(2)).sum::<f64>() / (n - 1) as f64;
    let var1 = a.iter().map(|x| (x.1 - mean1).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean0 - 0.2).abs() < 4.0 * 0.05 / (n as f64).sqrt());
    assert!((mean1 + 0.1).abs() < 4.0 * 0.1 / (n as f64).sqrt());
    assert!((var0.sqrt() / 0.05 - 1.0).abs() < 0.03);
    assert!((var1.sqrt() / 0.1 - 1.0).abs() < 0.03);
}

#[test]
fn training_is_deterministic_per_seed() {
    let mut cfg = TrainConfig::restricted_range().with_seed(11);
    cfg.n_epochs = 4;
    cfg.n_batch = 8;
    cfg.architecture = Architecture {
        lstm_units: 8,
        dense_units: 6,
    };
    let csv = |cfg: &TrainConfig| {
        let out = train::<f64>(cfg).unwrap();
        let mut buf = Vec::new();
        write_learning_curve(&mut buf, &out.curve).unwrap();
        (buf, out.network.params().to_vec())
    };
    let (a, pa) = csv(&cfg);
    let (b, pb) = csv(&cfg);
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    let (c, _) = csv(&cfg.clone().with_seed(12));
    assert_ne!(a, c);
}

#[test]
fn sweeps_are_deterministic_and_grid_refinement_is_consistent() {
    let reference = lookup_protocol("protocol1_T40", 40.0).unwrap();
    let coarse = raman_baseline(40.0, &Axis::linear("delta_p", 10.0, 20.0, 6), &reference).unwrap();
    let fine = raman_baseline(40.0, &Axis::linear("delta_p", 10.0, 20.0, 11), &reference).unwrap();
    let again = raman_baseline(40.0, &Axis::linear("delta_p", 10.0, 20.0, 6), &reference).unwrap();
    let bytes = |r| {
        let mut buf = Vec::new();
        write_sweep(&mut buf, r).unwrap();
        buf
    };
    assert_eq!(bytes(&coarse), bytes(&again));
    for p in &coarse.points {
        let q = fine.at(&p.coords).unwrap();
        assert!((p.final_rho_ff - q.final_rho_ff).abs() < 1e-9);
    }
}
