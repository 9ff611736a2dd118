#![allow(dead_code)]

use popxfer::controls::ControlSchedule;
use popxfer::linalg::CMatrix;
use popxfer::lindblad::{
    build_hamiltonian, propagate_schedule_with, DensityMatrix, HamiltonianSpec, Level, Method,
    NoiseChannel, PropagationOptions, Propagator,
};
use popxfer::Cplx;
use rand::Rng;

/// A constant Lindbladian with a random initial state and duration.
#[derive(Clone, Debug)]
pub struct RandomLindbladian {
    pub dim: usize,
    pub delta_p: f64,
    pub delta: f64,
    pub spec: HamiltonianSpec<f64>,
    pub channels: Vec<NoiseChannel<f64>>,
    pub rho0: DensityMatrix<f64>,
    pub duration: f64,
}

pub fn random_state<R: Rng>(dim: usize, rng: &mut R) -> DensityMatrix<f64> {
    let a = CMatrix::from_fn(dim, |_, _| {
        Cplx::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let m = a.matmul(&a.adjoint());
    let tr = m.trace().re;
    DensityMatrix::from_matrix(m.scale_real(1.0 / tr)).expect("A A^dagger is a state")
}

pub fn random_lindbladian<R: Rng>(rng: &mut R) -> RandomLindbladian {
    let dim = if rng.random_bool(0.5) { 3 } else { 4 };
    let mut channels = Vec::new();
    let rate = |rng: &mut R| rng.random_range(0.0..0.5);
    if dim == 4 {
        channels.push(NoiseChannel::sink(rate(rng)).unwrap());
    }
    if rng.random_bool(0.7) {
        channels.push(NoiseChannel::decay_eg(rate(rng)).unwrap());
    }
    if rng.random_bool(0.7) {
        channels.push(NoiseChannel::decay_fe(rate(rng)).unwrap());
    }
    for level in Level::SYSTEM {
        if rng.random_bool(0.5) {
            channels.push(NoiseChannel::dephase(level, rate(rng)).unwrap());
        }
    }
    RandomLindbladian {
        dim,
        delta_p: rng.random_range(-3.0..3.0),
        delta: rng.random_range(-3.0..3.0),
        spec: HamiltonianSpec::new(rng.random_range(0.3..2.0), rng.random_range(0.3..2.0)).unwrap(),
        channels,
        rho0: random_state(dim, rng),
        duration: rng.random_range(0.5..5.0),
    }
}

/// Outcome of comparing the exact and RK4 propagations of one Lindbladian.
#[derive(Clone, Debug)]
pub struct LindbladianCheck {
    /// Largest entrywise difference of the final density matrices.
    pub expm_vs_rk4: f64,
    /// Worst invariant violation over every sample of both propagations.
    pub invariant_violation: f64,
}

fn violation(rho: &DensityMatrix<f64>) -> f64 {
    let trace = (rho.trace() - 1.0).abs();
    let herm = rho.hermiticity_error();
    let pos = (-rho.min_eigenvalue()).max(0.0);
    trace.max(herm).max(pos)
}

/// Necessary positivity conditions visible from a stored trajectory sample.
fn sample_violation(pops: &[f64], cohs: &[f64]) -> f64 {
    let dim = pops.len();
    let mut worst = (pops.iter().sum::<f64>() - 1.0).abs();
    for p in pops {
        worst = worst.max(-p);
    }
    let mut k = 0;
    for i in 0..dim {
        for j in i + 1..dim {
            worst = worst.max(cohs[k] * cohs[k] - pops[i] * pops[j]);
            k += 1;
        }
    }
    worst
}

pub fn check_lindbladian(l: &RandomLindbladian, n_exact_steps: usize) -> LindbladianCheck {
    let h = build_hamiltonian(l.delta_p, l.delta, &l.spec, l.dim).unwrap();
    let dt = l.duration / n_exact_steps as f64;
    let prop = Propagator::new(&h, &l.channels, dt).unwrap();
    let mut rho = l.rho0.clone();
    let mut worst = violation(&rho);
    for _ in 0..n_exact_steps {
        rho = prop.apply(&rho).unwrap();
        worst = worst.max(violation(&rho));
    }

    let schedule = ControlSchedule::piecewise_constant(vec![(l.delta_p, l.delta)]).unwrap();
    let mut opts = PropagationOptions::default()
        .with_method(Method::Rk4)
        .with_max_step(1e-3)
        .with_samples(2);
    opts.spec = l.spec;
    opts.phase_resolution = 0.02;
    let traj = propagate_schedule_with(&l.rho0, &schedule, l.duration, &l.channels, &opts).unwrap();
    for (pops, cohs) in traj.populations.iter().zip(&traj.coherences) {
        worst = worst.max(sample_violation(pops, cohs));
    }
    worst = worst.max(violation(&traj.final_state));

    LindbladianCheck {
        expm_vs_rk4: rho.matrix().max_abs_diff(traj.final_state.matrix()),
        invariant_violation: worst,
    }
}
