//! Three-level (plus optional sink) open-system dynamics.
//!
//! Levels are ordered `g, e, f[, s]`. Units: hbar = 1, times in `1/Omega_0`,
//! detunings and rates in `Omega_0`.

mod evolve;
mod state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controls::ControlError;
use crate::linalg::{CMatrix, LinalgError};
use crate::scalar::{c, re, Cplx, Real};

pub use evolve::{
    propagate_schedule, propagate_schedule_with, simulate_transfer, Method, PropagationOptions,
    TrajectoryResult, TransferSummary, MAX_STEP,
};
pub use state::DensityMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LindbladError {
    #[error("unsupported dimension {0}; expected 3 or 4")]
    InvalidDim(usize),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("rate must be finite and non-negative, got {0}")]
    InvalidRate(f64),
    #[error("coupling strengths must be positive, got ({0}, {1})")]
    InvalidCoupling(f64, f64),
    #[error("sink channel requires the four-level system")]
    SinkNeedsSinkLevel,
    #[error("dephasing level {0:?} is not a system level")]
    InvalidDephasingLevel(Level),
    #[error("invalid time step or duration: {0}")]
    InvalidTime(f64),
    #[error("step size {0} outside (0, {MAX_STEP}]")]
    InvalidStep(f64),
    #[error("step budget exceeded: {0} integration steps required")]
    StepBudget(usize),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("state became non-finite during propagation")]
    NonFinite,
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    G,
    E,
    F,
    S,
}

impl Level {
    #[inline]
    pub const fn index(self) -> usize {
        self as usize
    }

    pub const SYSTEM: [Level; 3] = [Level::G, Level::E, Level::F];
}

fn check_dim(dim: usize) -> Result<(), LindbladError> {
    match dim {
        3 | 4 => Ok(()),
        d => Err(LindbladError::InvalidDim(d)),
    }
}

/// Constant couplings of the pump (g-e) and Stokes (e-f) drives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec<T> {
    pub omega_p: T,
    pub omega_s: T,
}

impl<T: Real> HamiltonianSpec<T> {
    pub fn new(omega_p: T, omega_s: T) -> Result<Self, LindbladError> {
        let spec = Self { omega_p, omega_s };
        spec.validate()?;
        Ok(spec)
    }

    /// Both couplings equal to the unit coupling.
    pub fn always_on() -> Self {
        Self {
            omega_p: T::one(),
            omega_s: T::one(),
        }
    }

    pub fn validate(&self) -> Result<(), LindbladError> {
        if self.omega_p > T::zero()
            && self.omega_s > T::zero()
            && self.omega_p.is_finite()
            && self.omega_s.is_finite()
        {
            Ok(())
        } else {
            Err(LindbladError::InvalidCoupling(
                self.omega_p.to_f64_lossy(),
                self.omega_s.to_f64_lossy(),
            ))
        }
    }
}

impl<T: Real> Default for HamiltonianSpec<T> {
    fn default() -> Self {
        Self::always_on()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "level", rename_all = "snake_case")]
pub enum ChannelKind {
    /// `sqrt(rate) |s><e|`
    Sink,
    /// `sqrt(rate) |g><e|`
    DecayEG,
    /// `sqrt(rate) |e><f|`
    DecayFE,
    /// `sqrt(rate) |k><k|`
    Dephase(Level),
}

/// One collapse operator with its rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseChannel<T> {
    pub kind: ChannelKind,
    pub rate: T,
}

impl<T: Real> NoiseChannel<T> {
    pub fn new(kind: ChannelKind, rate: T) -> Result<Self, LindbladError> {
        let ch = Self { kind, rate };
        ch.validate()?;
        Ok(ch)
    }

    pub fn sink(rate: T) -> Result<Self, LindbladError> {
        Self::new(ChannelKind::Sink, rate)
    }

    pub fn decay_eg(rate: T) -> Result<Self, LindbladError> {
        Self::new(ChannelKind::DecayEG, rate)
    }

    pub fn decay_fe(rate: T) -> Result<Self, LindbladError> {
        Self::new(ChannelKind::DecayFE, rate)
    }

    pub fn dephase(level: Level, rate: T) -> Result<Self, LindbladError> {
        Self::new(ChannelKind::Dephase(level), rate)
    }

    pub fn validate(&self) -> Result<(), LindbladError> {
        if !(self.rate >= T::zero() && self.rate.is_finite()) {
            return Err(LindbladError::InvalidRate(self.rate.to_f64_lossy()));
        }
        if let ChannelKind::Dephase(Level::S) = self.kind {
            return Err(LindbladError::InvalidDephasingLevel(Level::S));
        }
        Ok(())
    }

    /// `(from, to)` level indices of the single-element operator `|to><from|`.
    pub fn transition(&self) -> (usize, usize) {
        match self.kind {
            ChannelKind::Sink => (Level::E.index(), Level::S.index()),
            ChannelKind::DecayEG => (Level::E.index(), Level::G.index()),
            ChannelKind::DecayFE => (Level::F.index(), Level::E.index()),
            ChannelKind::Dephase(k) => (k.index(), k.index()),
        }
    }

    fn check_for_dim(&self, dim: usize) -> Result<(), LindbladError> {
        self.validate()?;
        if self.kind == ChannelKind::Sink && dim != 4 {
            return Err(LindbladError::SinkNeedsSinkLevel);
        }
        Ok(())
    }

    /// Dense collapse operator `sqrt(rate) |to><from|`.
    pub fn operator(&self, dim: usize) -> Result<CMatrix<T>, LindbladError> {
        check_dim(dim)?;
        self.check_for_dim(dim)?;
        let (from, to) = self.transition();
        let mut l = CMatrix::zeros(dim);
        l[(to, from)] = re(self.rate.sqrt());
        Ok(l)
    }
}

pub(crate) fn check_channels<T: Real>(
    channels: &[NoiseChannel<T>],
    dim: usize,
) -> Result<(), LindbladError> {
    channels.iter().try_for_each(|ch| ch.check_for_dim(dim))
}

/// `H = 1/2 [[0, Op, 0], [Op, 2 dp, Os], [0, Os, 2 d]]`, zero-padded to `dim`.
pub fn build_hamiltonian<T: Real>(
    delta_p: T,
    delta: T,
    spec: &HamiltonianSpec<T>,
    dim: usize,
) -> Result<CMatrix<T>, LindbladError> {
    check_dim(dim)?;
    spec.validate()?;
    let half = T::lit(0.5);
    let mut h = CMatrix::zeros(dim);
    h[(0, 1)] = re(half * spec.omega_p);
    h[(1, 0)] = re(half * spec.omega_p);
    h[(1, 1)] = re(delta_p);
    h[(1, 2)] = re(half * spec.omega_s);
    h[(2, 1)] = re(half * spec.omega_s);
    h[(2, 2)] = re(delta);
    Ok(h)
}

/// Right-hand side of the master equation,
/// `-i[H, rho] + sum_c (L rho L^† - 1/2 {L^† L, rho})`.
pub fn lindblad_rhs<T: Real>(
    rho: &DensityMatrix<T>,
    h: &CMatrix<T>,
    channels: &[NoiseChannel<T>],
) -> Result<CMatrix<T>, LindbladError> {
    let dim = rho.dim();
    if h.dim() != dim {
        return Err(LindbladError::DimensionMismatch(h.dim(), dim));
    }
    check_channels(channels, dim)?;
    let r = rho.matrix();
    let minus_i = c(T::zero(), -T::one());
    let mut out = h.commutator(r).scale(minus_i);
    for ch in channels {
        let l = ch.operator(dim)?;
        let ld = l.adjoint();
        let jump = l.matmul(r).matmul(&ld);
        let anti = ld.matmul(&l).anticommutator(r).scale_real(T::lit(0.5));
        out = &out + &(&jump - &anti);
    }
    Ok(out)
}

/// Liouvillian superoperator acting on the row-major vectorization
/// `vec(rho)[i d + j] = rho_ij`, so that `vec(A rho B) = (A ⊗ B^T) vec(rho)`.
pub fn liouvillian<T: Real>(
    h: &CMatrix<T>,
    channels: &[NoiseChannel<T>],
) -> Result<CMatrix<T>, LindbladError> {
    let dim = h.dim();
    check_dim(dim)?;
    check_channels(channels, dim)?;
    let id = CMatrix::identity(dim);
    let minus_i = c(T::zero(), -T::one());
    let mut sup = (&h.kron(&id) - &id.kron(&h.transpose())).scale(minus_i);
    for ch in channels {
        let l = ch.operator(dim)?;
        let ldl = l.adjoint().matmul(&l);
        sup = &sup + &l.kron(&l.conj());
        let anti = &ldl.kron(&id) + &id.kron(&ldl.transpose());
        sup = &sup - &anti.scale_real(T::lit(0.5));
    }
    Ok(sup)
}

/// Exact propagator `exp(dt L)` for a constant generator.
#[derive(Clone, Debug)]
pub struct Propagator<T> {
    dim: usize,
    superop: CMatrix<T>,
}

impl<T: Real> Propagator<T> {
    pub fn new(h: &CMatrix<T>, channels: &[NoiseChannel<T>], dt: T) -> Result<Self, LindbladError> {
        if !(dt >= T::zero() && dt.is_finite()) {
            return Err(LindbladError::InvalidTime(dt.to_f64_lossy()));
        }
        let sup = liouvillian(h, channels)?.scale_real(dt);
        Ok(Self {
            dim: h.dim(),
            superop: sup.expm()?,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn superoperator(&self) -> &CMatrix<T> {
        &self.superop
    }

    pub fn apply(&self, rho: &DensityMatrix<T>) -> Result<DensityMatrix<T>, LindbladError> {
        if rho.dim() != self.dim {
            return Err(LindbladError::DimensionMismatch(rho.dim(), self.dim));
        }
        let v = self.superop.apply(rho.matrix().as_slice());
        Ok(DensityMatrix::from_matrix_unchecked(
            CMatrix::from_row_major(self.dim, v),
        ))
    }

    /// Applies the propagator to a raw row-major density matrix in place.
    pub(crate) fn apply_in_place(&self, rho: &mut [Cplx<T>], scratch: &mut [Cplx<T>]) {
        let n = rho.len();
        let data = self.superop.as_slice();
        for (i, out) in scratch.iter_mut().enumerate() {
            let row = &data[i * n..(i + 1) * n];
            let mut acc = Cplx::new(T::zero(), T::zero());
            for (a, b) in row.iter().zip(rho.iter()) {
                acc += *a * *b;
            }
            *out = acc;
        }
        rho.copy_from_slice(scratch);
    }
}

/// `exp(dt L) rho` for the constant Hamiltonian `h` and the given channels.
pub fn propagate_constant<T: Real>(
    rho: &DensityMatrix<T>,
    h: &CMatrix<T>,
    channels: &[NoiseChannel<T>],
    dt: T,
) -> Result<DensityMatrix<T>, LindbladError> {
    if h.dim() != rho.dim() {
        return Err(LindbladError::DimensionMismatch(h.dim(), rho.dim()));
    }
    Propagator::new(h, channels, dt)?.apply(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec() -> HamiltonianSpec<f64> {
        HamiltonianSpec::always_on()
    }

    #[test]
    fn resonant_hamiltonian() {
        let h = build_hamiltonian(0.0, 0.0, &spec(), 3).unwrap();
        let want = CMatrix::from_real_rows(&[
            vec![0.0, 0.5, 0.0],
            vec![0.5, 0.0, 0.5],
            vec![0.0, 0.5, 0.0],
        ]);
        assert_eq!(h, want);
    }

    #[test]
    fn detuned_hamiltonian_entries() {
        let h = build_hamiltonian(5.072, 0.0, &spec(), 3).unwrap();
        assert_eq!(h[(1, 1)], re(5.072));
        assert_eq!(h[(2, 2)], re(0.0));
        let h4 = build_hamiltonian(1.0, -2.0, &spec(), 4).unwrap();
        assert_eq!(h4.dim(), 4);
        for k in 0..4 {
            assert_eq!(h4[(3, k)], re(0.0));
            assert_eq!(h4[(k, 3)], re(0.0));
        }
        assert_eq!(h4.hermiticity_error(), 0.0);
    }

    #[test]
    fn invalid_dim_and_coupling() {
        assert_eq!(
            build_hamiltonian(0.0, 0.0, &spec(), 5),
            Err(LindbladError::InvalidDim(5))
        );
        assert!(HamiltonianSpec::new(0.0, 1.0).is_err());
    }

    #[test]
    fn zero_generator_rhs_vanishes() {
        let rho = DensityMatrix::<f64>::ground(3);
        let out = lindblad_rhs(&rho, &CMatrix::zeros(3), &[]).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    fn coherent_state(dim: usize, coh: f64) -> DensityMatrix<f64> {
        let mut m = CMatrix::zeros(dim);
        m[(0, 0)] = re(0.5);
        m[(1, 1)] = re(0.5);
        m[(0, 1)] = re(coh);
        m[(1, 0)] = re(coh);
        DensityMatrix::from_matrix(m).unwrap()
    }

    #[test]
    fn dephasing_damps_coherence_at_half_rate() {
        // L = sqrt(2)|g><g|: L rho L^† has ge entry 0, {L^†L, rho}_ge = 2 rho_ge
        let rho = coherent_state(3, 0.3);
        let ch = [NoiseChannel::dephase(Level::G, 2.0).unwrap()];
        let out = lindblad_rhs(&rho, &CMatrix::zeros(3), &ch).unwrap();
        assert_abs_diff_eq!(out[(0, 1)].re, -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(out[(0, 0)].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out[(1, 1)].re, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn sink_moves_excited_population() {
        let mut m = CMatrix::zeros(4);
        m[(0, 0)] = re(0.9);
        m[(1, 1)] = re(0.1);
        let rho = DensityMatrix::from_matrix(m).unwrap();
        let ch = [NoiseChannel::sink(0.25).unwrap()];
        let out = lindblad_rhs(&rho, &CMatrix::zeros(4), &ch).unwrap();
        assert_abs_diff_eq!(out[(3, 3)].re, 0.025, epsilon = 1e-15);
        assert_abs_diff_eq!(out[(1, 1)].re, -0.025, epsilon = 1e-15);
    }

    #[test]
    fn sink_needs_four_levels() {
        let rho = DensityMatrix::<f64>::ground(3);
        let ch = [NoiseChannel::sink(1.0).unwrap()];
        assert_eq!(
            lindblad_rhs(&rho, &CMatrix::zeros(3), &ch),
            Err(LindbladError::SinkNeedsSinkLevel)
        );
    }

    #[test]
    fn negative_rate_rejected() {
        assert!(NoiseChannel::decay_eg(-0.1f64).is_err());
        assert!(NoiseChannel::dephase(Level::S, 0.1f64).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let rho = DensityMatrix::<f64>::ground(4);
        assert_eq!(
            lindblad_rhs(&rho, &CMatrix::zeros(3), &[]),
            Err(LindbladError::DimensionMismatch(3, 4))
        );
    }

    #[test]
    fn superoperator_matches_rhs() {
        let rho = coherent_state(4, 0.2);
        let h = build_hamiltonian(0.7, -0.3, &spec(), 4).unwrap();
        let ch = [
            NoiseChannel::sink(0.4).unwrap(),
            NoiseChannel::decay_fe(0.1).unwrap(),
            NoiseChannel::dephase(Level::E, 0.3).unwrap(),
        ];
        let direct = lindblad_rhs(&rho, &h, &ch).unwrap();
        let sup = liouvillian(&h, &ch).unwrap();
        let v = sup.apply(rho.matrix().as_slice());
        let via = CMatrix::from_row_major(4, v);
        assert!(direct.max_abs_diff(&via) < 1e-15);
    }

    #[test]
    fn zero_step_is_identity() {
        let rho = coherent_state(3, 0.4);
        let h = build_hamiltonian(1.0, 2.0, &spec(), 3).unwrap();
        let out = propagate_constant(&rho, &h, &[], 0.0).unwrap();
        assert!(out.matrix().max_abs_diff(rho.matrix()) < 1e-15);
        assert!(propagate_constant(&rho, &h, &[], -1.0).is_err());
    }
}
