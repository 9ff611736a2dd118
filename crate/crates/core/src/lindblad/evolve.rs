//! Propagation of a density matrix under a time-dependent control schedule.
//!
//! Stepwise schedules (piecewise constant, constant Raman) are propagated
//! exactly with one superoperator exponential per segment. Smooth schedules
//! use fixed-step RK4 on each smooth piece; the step never exceeds
//! [`MAX_STEP`], is at most `T/4000`, and shrinks further when the detunings
//! are large so that `h * |L| <= phase_resolution`.
//!
//! Under [`Method::Auto`], a pure initial state whose only dissipation is
//! the sink is carried as a state vector under the non-Hermitian
//! Hamiltonian `H - i (Gamma/2) |e><e|`, with the lost norm booked to the
//! sink level. This is the same dynamics at a fraction of the cost.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::{
    build_hamiltonian, check_channels, check_dim, ChannelKind, DensityMatrix, HamiltonianSpec,
    Level, LindbladError, NoiseChannel, Propagator,
};
use crate::controls::{ControlError, ControlSchedule};
use crate::linalg::CMatrix;
use crate::scalar::{Cplx, Real};

/// Largest RK4 step accepted, in units of `1/Omega_0`.
pub const MAX_STEP: f64 = 0.01;
/// Minimum number of RK4 steps over the whole protocol.
pub const MIN_RK4_STEPS: usize = 4000;
const STEP_BUDGET: usize = 50_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Exact exponentials for stepwise schedules, RK4 otherwise.
    Auto,
    Exact,
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagationOptions<T> {
    pub spec: HamiltonianSpec<T>,
    pub method: Method,
    pub max_step: T,
    /// Upper bound on `h` times the generator scale for RK4.
    pub phase_resolution: T,
    /// Minimum number of recorded samples including both end points.
    pub n_samples: usize,
}

impl<T: Real> Default for PropagationOptions<T> {
    fn default() -> Self {
        Self {
            spec: HamiltonianSpec::always_on(),
            method: Method::Auto,
            max_step: T::lit(MAX_STEP),
            phase_resolution: T::lit(0.1),
            n_samples: 401,
        }
    }
}

impl<T: Real> PropagationOptions<T> {
    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = n;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_max_step(mut self, h: T) -> Self {
        self.max_step = h;
        self
    }
}

/// Sampled trajectory of a propagation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrajectoryResult<T> {
    pub times: Vec<T>,
    /// Diagonal of rho at each sample, ordered `g, e, f[, s]`.
    pub populations: Vec<Vec<T>>,
    /// `|rho_ij|`, `i < j`, at each sample.
    pub coherences: Vec<Vec<T>>,
    /// Detunings `(delta_p, delta)` in force at each sample.
    pub controls: Vec<(T, T)>,
    pub final_state: DensityMatrix<T>,
}

impl<T: Real> TrajectoryResult<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn series(&self, level: Level) -> Vec<T> {
        self.populations
            .iter()
            .map(|p| p.get(level.index()).copied().unwrap_or_else(T::zero))
            .collect()
    }

    /// `max_t rho_ee(t)` over the stored samples.
    pub fn max_excited(&self) -> T {
        self.series(Level::E).into_iter().fold(T::zero(), T::max)
    }

    pub fn final_target(&self) -> T {
        self.final_state.population(Level::F)
    }
}

/// Final state plus running extrema, without storing the trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferSummary<T> {
    pub final_state: DensityMatrix<T>,
    pub final_target: T,
    pub max_excited: T,
    pub max_target: T,
    pub n_samples: usize,
}

pub fn propagate_schedule<T: Real>(
    rho0: &DensityMatrix<T>,
    schedule: &ControlSchedule<T>,
    total: T,
    channels: &[NoiseChannel<T>],
    n_samples: usize,
) -> Result<TrajectoryResult<T>, LindbladError> {
    let opts = PropagationOptions::default().with_samples(n_samples);
    propagate_schedule_with(rho0, schedule, total, channels, &opts)
}

pub fn propagate_schedule_with<T: Real>(
    rho0: &DensityMatrix<T>,
    schedule: &ControlSchedule<T>,
    total: T,
    channels: &[NoiseChannel<T>],
    opts: &PropagationOptions<T>,
) -> Result<TrajectoryResult<T>, LindbladError> {
    let dim = rho0.dim();
    let mut times = Vec::new();
    let mut populations = Vec::new();
    let mut coherences = Vec::new();
    let mut controls = Vec::new();
    let final_data = evolve(rho0, schedule, total, channels, opts, &mut |t, rho, ctl| {
        times.push(t);
        populations.push((0..dim).map(|i| rho[i * dim + i].re).collect());
        let mut coh = Vec::with_capacity(dim * (dim - 1) / 2);
        for i in 0..dim {
            for j in i + 1..dim {
                coh.push(rho[i * dim + j].norm());
            }
        }
        coherences.push(coh);
        controls.push(ctl);
    })?;
    Ok(TrajectoryResult {
        times,
        populations,
        coherences,
        controls,
        final_state: DensityMatrix::from_matrix_unchecked(CMatrix::from_row_major(dim, final_data)),
    })
}

/// Runs a propagation and keeps only the final state and the maxima of
/// `rho_ee` and `rho_ff` over the samples.
pub fn simulate_transfer<T: Real>(
    rho0: &DensityMatrix<T>,
    schedule: &ControlSchedule<T>,
    total: T,
    channels: &[NoiseChannel<T>],
    opts: &PropagationOptions<T>,
) -> Result<TransferSummary<T>, LindbladError> {
    let dim = rho0.dim();
    let (e, f) = (Level::E.index(), Level::F.index());
    let mut max_excited = T::neg_infinity();
    let mut max_target = T::neg_infinity();
    let mut n_samples = 0;
    let final_data = evolve(rho0, schedule, total, channels, opts, &mut |_, rho, _| {
        max_excited = max_excited.max(rho[e * dim + e].re);
        max_target = max_target.max(rho[f * dim + f].re);
        n_samples += 1;
    })?;
    let final_state =
        DensityMatrix::from_matrix_unchecked(CMatrix::from_row_major(dim, final_data));
    Ok(TransferSummary {
        final_target: final_state.population(Level::F),
        final_state,
        max_excited,
        max_target,
        n_samples,
    })
}

type Observer<'a, T> = dyn FnMut(T, &[Cplx<T>], (T, T)) + 'a;

fn evolve<T: Real>(
    rho0: &DensityMatrix<T>,
    schedule: &ControlSchedule<T>,
    total: T,
    channels: &[NoiseChannel<T>],
    opts: &PropagationOptions<T>,
    observer: &mut Observer<'_, T>,
) -> Result<Vec<Cplx<T>>, LindbladError> {
    let dim = rho0.dim();
    check_dim(dim)?;
    check_channels(channels, dim)?;
    opts.spec.validate()?;
    schedule.validate()?;
    if !(total > T::zero() && total.is_finite()) {
        return Err(ControlError::InvalidDuration(total.to_f64_lossy()).into());
    }
    if !(opts.max_step > T::zero() && opts.max_step <= T::lit(MAX_STEP)) {
        return Err(LindbladError::InvalidStep(opts.max_step.to_f64_lossy()));
    }
    let stepwise = schedule.is_stepwise();
    let data = match opts.method {
        Method::Auto if stepwise => evolve_exact(rho0, schedule, total, channels, opts, observer)?,
        Method::Exact => {
            if !stepwise {
                return Err(LindbladError::InvalidState(
                    "exact propagation needs a stepwise schedule".into(),
                ));
            }
            evolve_exact(rho0, schedule, total, channels, opts, observer)?
        }
        Method::Auto if sink_only(channels) && pure_amplitudes(rho0).is_some() => {
            let psi = pure_amplitudes(rho0).expect("checked above");
            evolve_pure(&psi, dim, schedule, total, channels, opts, observer)?
        }
        Method::Auto | Method::Rk4 => match dim {
            3 => evolve_rk4::<T, 3>(rho0, schedule, total, channels, opts, observer)?,
            _ => evolve_rk4::<T, 4>(rho0, schedule, total, channels, opts, observer)?,
        },
    };
    if data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(data)
    } else {
        Err(LindbladError::NonFinite)
    }
}

fn evolve_exact<T: Real>(
    rho0: &DensityMatrix<T>,
    schedule: &ControlSchedule<T>,
    total: T,
    channels: &[NoiseChannel<T>],
    opts: &PropagationOptions<T>,
    observer: &mut Observer<'_, T>,
) -> Result<Vec<Cplx<T>>, LindbladError> {
    let dim = rho0.dim();
    let n_seg = schedule.n_pieces();
    let wanted = opts.n_samples.max(2) - 1;
    let substeps = wanted.div_ceil(n_seg).max(1);
    let mut rho = rho0.matrix().as_slice().to_vec();
    let mut scratch = rho.clone();
    observer(T::zero(), &rho, schedule.eval_in_piece(0, T::zero(), total));
    for i in 0..n_seg {
        let (a, b) = schedule.piece_bounds(i, total);
        let ctl = schedule.eval_in_piece(i, a, total);
        let h = build_hamiltonian(ctl.0, ctl.1, &opts.spec, dim)?;
        let dt = (b - a) / T::from_usize(substeps).unwrap();
        let prop = Propagator::new(&h, channels, dt)?;
        for k in 1..=substeps {
            prop.apply_in_place(&mut rho, &mut scratch);
            let t = if k == substeps {
                b
            } else {
                a + dt * T::from_usize(k).unwrap()
            };
            observer(t, &rho, ctl);
        }
    }
    Ok(rho)
}

fn sink_only<T: Real>(channels: &[NoiseChannel<T>]) -> bool {
    channels
        .iter()
        .all(|c| c.kind == ChannelKind::Sink || c.rate == T::zero())
}

/// System amplitudes of a pure state with no sink population, if `rho0` is one.
fn pure_amplitudes<T: Real>(rho0: &DensityMatrix<T>) -> Option<[Cplx<T>; 3]> {
    let tol = T::lit(1e-12);
    if rho0.dim() == 4 && rho0.population(Level::S).abs() > tol {
        return None;
    }
    if (rho0.purity() - T::one()).abs() > tol {
        return None;
    }
    let m = rho0.matrix();
    let j = (0..3).fold(0, |b, i| if m[(i, i)].re > m[(b, b)].re { i } else { b });
    let norm = m[(j, j)].re.sqrt();
    if !(norm > T::zero()) {
        return None;
    }
    let psi = [m[(0, j)] / norm, m[(1, j)] / norm, m[(2, j)] / norm];
    let err = (0..3)
        .flat_map(|a| (0..3).map(move |b| (a, b)))
        .map(|(a, b)| (psi[a] * psi[b].conj() - m[(a, b)]).norm())
        .fold(T::zero(), T::max);
    (err <= T::lit(1e-10)).then_some(psi)
}

/// RK4 on `psi' = -i H_eff psi` over the same step plan as the density-matrix integrator.
fn evolve_pure<T: Real>(
    psi0: &[Cplx<T>; 3],
    dim: usize,
    schedule: &ControlSchedule<T>,
    total: T,
    channels: &[NoiseChannel<T>],
    opts: &PropagationOptions<T>,
    observer: &mut Observer<'_, T>,
) -> Result<Vec<Cplx<T>>, LindbladError> {
    let plan = rk4_plan(schedule, total, channels, opts)?;
    let half = T::lit(0.5);
    let (hp, hs) = (opts.spec.omega_p * half, opts.spec.omega_s * half);
    let loss = channels.iter().map(|c| c.rate).sum::<T>() * half;
    let rhs = |(dp, d): (T, T), v: &[Cplx<T>; 3]| -> [Cplx<T>; 3] {
        // -i (H - i loss |e><e|) v
        let h0 = v[1] * hp;
        let h1 = v[0] * hp + v[1] * dp + v[2] * hs;
        let h2 = v[1] * hs + v[2] * d;
        [
            Cplx::new(h0.im, -h0.re),
            Cplx::new(h1.im, -h1.re) - v[1] * loss,
            Cplx::new(h2.im, -h2.re),
        ]
    };
    let mut rho = vec![Cplx::zero(); dim * dim];
    let fill = |v: &[Cplx<T>; 3], rho: &mut [Cplx<T>]| {
        let mut norm = T::zero();
        for a in 0..3 {
            norm += v[a].norm_sqr();
            for b in 0..3 {
                rho[a * dim + b] = v[a] * v[b].conj();
            }
        }
        if dim == 4 {
            rho[15] = Cplx::new(T::one() - norm, T::zero());
        }
    };
    let mut psi = *psi0;
    let sixth = T::one() / T::lit(6.0);
    let two = T::lit(2.0);
    fill(&psi, &mut rho);
    let mut c0 = schedule.eval_in_piece(0, T::zero(), total);
    observer(T::zero(), &rho, c0);
    for (piece, &(a, b, n)) in plan.iter().enumerate() {
        let h = (b - a) / T::from_usize(n).unwrap();
        c0 = schedule.eval_in_piece(piece, a, total);
        for step in 0..n {
            let t0 = a + h * T::from_usize(step).unwrap();
            let t1 = if step + 1 == n { b } else { t0 + h };
            let cm = schedule.eval_in_piece(piece, t0 + h * half, total);
            let c1 = schedule.eval_in_piece(piece, t1, total);
            let k1 = rhs(c0, &psi);
            let k2 = rhs(cm, &std::array::from_fn(|i| psi[i] + k1[i] * (h * half)));
            let k3 = rhs(cm, &std::array::from_fn(|i| psi[i] + k2[i] * (h * half)));
            let k4 = rhs(c1, &std::array::from_fn(|i| psi[i] + k3[i] * h));
            let w = h * sixth;
            for i in 0..3 {
                psi[i] += (k1[i] + (k2[i] + k3[i]) * two + k4[i]) * w;
            }
            fill(&psi, &mut rho);
            observer(t1, &rho, c1);
            c0 = c1;
        }
    }
    Ok(rho)
}

/// Per-piece `(start, end, steps)` for RK4, checked against the step budget.
fn rk4_plan<T: Real>(
    schedule: &ControlSchedule<T>,
    total: T,
    channels: &[NoiseChannel<T>],
    opts: &PropagationOptions<T>,
) -> Result<Vec<(T, T, usize)>, LindbladError> {
    let h_target = rk4_step(schedule, total, channels, opts);
    let n_pieces = schedule.n_pieces();
    let mut budget = 0usize;
    let mut plan = Vec::with_capacity(n_pieces);
    for i in 0..n_pieces {
        let (a, b) = schedule.piece_bounds(i, total);
        let n = ((b - a) / h_target)
            .ceil()
            .to_usize()
            .unwrap_or(usize::MAX)
            .max(1);
        budget = budget.saturating_add(n);
        plan.push((a, b, n));
    }
    if budget > STEP_BUDGET {
        return Err(LindbladError::StepBudget(budget));
    }
    Ok(plan)
}

/// Real-symmetric Hamiltonian plus single-element jump operators, on
/// fixed-size arrays so the inner loops unroll.
struct Kernel<T, const D: usize> {
    half_op: T,
    half_os: T,
    jumps: Vec<(usize, usize, T)>,
}

type Mat<T, const D: usize> = [[Cplx<T>; D]; D];

impl<T: Real, const D: usize> Kernel<T, D> {
    fn new(spec: &HamiltonianSpec<T>, channels: &[NoiseChannel<T>]) -> Self {
        let half = T::lit(0.5);
        Self {
            half_op: spec.omega_p * half,
            half_os: spec.omega_s * half,
            jumps: channels
                .iter()
                .filter(|c| c.rate > T::zero())
                .map(|c| {
                    let (from, to) = c.transition();
                    (from, to, c.rate)
                })
                .collect(),
        }
    }

    #[inline]
    fn rhs(&self, (dp, d): (T, T), rho: &Mat<T, D>, out: &mut Mat<T, D>) {
        let mut h = [[T::zero(); D]; D];
        h[0][1] = self.half_op;
        h[1][0] = self.half_op;
        h[1][1] = dp;
        h[1][2] = self.half_os;
        h[2][1] = self.half_os;
        h[2][2] = d;
        for i in 0..D {
            for j in 0..D {
                let mut acc = Cplx::zero();
                for k in 0..D {
                    acc = acc + rho[k][j] * h[i][k] - rho[i][k] * h[k][j];
                }
                // -i * acc
                out[i][j] = Cplx::new(acc.im, -acc.re);
            }
        }
        let half = T::lit(0.5);
        for &(from, to, g) in &self.jumps {
            let gain = rho[from][from] * g;
            let hg = g * half;
            for j in 0..D {
                out[from][j] -= rho[from][j] * hg;
            }
            for i in 0..D {
                out[i][from] -= rho[i][from] * hg;
            }
            out[to][to] += gain;
        }
    }
}

fn axpy<T: Real, const D: usize>(base: &Mat<T, D>, k: &Mat<T, D>, s: T, out: &mut Mat<T, D>) {
    for i in 0..D {
        for j in 0..D {
            out[i][j] = base[i][j] + k[i][j] * s;
        }
    }
}

/// RK4 step size for a schedule of duration `total`.
pub(crate) fn rk4_step<T: Real>(
    schedule: &ControlSchedule<T>,
    total: T,
    channels: &[NoiseChannel<T>],
    opts: &PropagationOptions<T>,
) -> T {
    let rates: T = channels.iter().map(|c| c.rate).sum();
    let scale = schedule.max_abs_detuning(total)
        + (opts.spec.omega_p + opts.spec.omega_s) * T::lit(0.5)
        + rates;
    let mut h = opts
        .max_step
        .min(total / T::from_usize(MIN_RK4_STEPS).unwrap())
        .min(total / T::from_usize(opts.n_samples.max(2) - 1).unwrap());
    if scale > T::zero() {
        h = h.min(opts.phase_resolution / scale);
    }
    h
}

fn evolve_rk4<T: Real, const D: usize>(
    rho0: &DensityMatrix<T>,
    schedule: &ControlSchedule<T>,
    total: T,
    channels: &[NoiseChannel<T>],
    opts: &PropagationOptions<T>,
    observer: &mut Observer<'_, T>,
) -> Result<Vec<Cplx<T>>, LindbladError> {
    let kernel = Kernel::<T, D>::new(&opts.spec, channels);
    let plan = rk4_plan(schedule, total, channels, opts)?;

    let src = rho0.matrix().as_slice();
    let mut rho: Mat<T, D> = [[Cplx::zero(); D]; D];
    for i in 0..D {
        for j in 0..D {
            rho[i][j] = src[i * D + j];
        }
    }
    let zero: Mat<T, D> = [[Cplx::zero(); D]; D];
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (zero, zero, zero, zero, zero);
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    observer(
        T::zero(),
        rho.as_flattened(),
        schedule.eval_in_piece(0, T::zero(), total),
    );
    for (piece, &(a, b, n)) in plan.iter().enumerate() {
        let h = (b - a) / T::from_usize(n).unwrap();
        let mut c0 = schedule.eval_in_piece(piece, a, total);
        for step in 0..n {
            let t0 = a + h * T::from_usize(step).unwrap();
            let t1 = if step + 1 == n { b } else { t0 + h };
            let tm = t0 + h * half;
            let cm = schedule.eval_in_piece(piece, tm, total);
            let c1 = schedule.eval_in_piece(piece, t1, total);
            kernel.rhs(c0, &rho, &mut k1);
            axpy(&rho, &k1, h * half, &mut tmp);
            kernel.rhs(cm, &tmp, &mut k2);
            axpy(&rho, &k2, h * half, &mut tmp);
            kernel.rhs(cm, &tmp, &mut k3);
            axpy(&rho, &k3, h, &mut tmp);
            kernel.rhs(c1, &tmp, &mut k4);
            let w = h * sixth;
            for i in 0..D {
                for j in 0..D {
                    rho[i][j] += (k1[i][j] + (k2[i][j] + k3[i][j]) * T::lit(2.0) + k4[i][j]) * w;
                }
            }
            observer(t1, rho.as_flattened(), c1);
            c0 = c1;
        }
    }
    Ok(rho.as_flattened().to_vec())
}
