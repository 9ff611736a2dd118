//! Detuning control families and their evaluation.
//!
//! Every schedule yields the pair `(delta_p, delta)` in units of the
//! coupling strength. Smooth families are written in the centred time
//! variable `x = t/T - 0.5`, so `x` runs over `[-0.5, 0.5]`. A constant stray
//! offset pair rides along with every schedule and is added on evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("time {t} outside schedule domain [0, {total}]")]
    OutOfDomain { t: f64, total: f64 },
    #[error("protocol duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("normalized action {value} at step {step} outside [-1, 1]")]
    InvalidAction { step: usize, value: f64 },
    #[error("piecewise-constant schedule needs at least one segment")]
    EmptySchedule,
    #[error("invalid coefficients: {0}")]
    InvalidCoefficients(String),
}

/// Functional form of the detunings, without stray offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlShape<T> {
    /// Value `i` holds on `[i T/n, (i+1) T/n)`; `t = T` uses the last value.
    PiecewiseConstant { values: Vec<(T, T)> },
    /// Two polynomials in `x`, coefficients lowest degree first.
    PolyPair { coeffs_dp: Vec<T>, coeffs_d: Vec<T> },
    /// `delta_p = c1 - c2 exp(k x^2)`, `delta = m x`.
    Ansatz1 { c1: T, c2: T, k: T, m: T },
    /// Odd quintic for `delta_p` (x, x^3, x^5) and even quartic for `delta` (1, x^2, x^4).
    ParityPolys { dp_odd: [T; 3], d_even: [T; 3] },
    /// `delta = 0` and constant `delta_p`.
    ConstantRaman { dp: T },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct ControlSchedule<T> {
    pub shape: ControlShape<T>,
    /// Constant offsets `(delta_p, delta)` added to every evaluation.
    #[serde(default = "zero_pair")]
    pub stray: (T, T),
}

fn zero_pair<T: Real>() -> (T, T) {
    (T::zero(), T::zero())
}

fn check_duration<T: Real>(total: T) -> Result<(), ControlError> {
    if total > T::zero() && total.is_finite() {
        Ok(())
    } else {
        Err(ControlError::InvalidDuration(total.to_f64_lossy()))
    }
}

fn horner<T: Real>(coeffs: &[T], x: T) -> T {
    coeffs.iter().rev().fold(T::zero(), |acc, &c| acc * x + c)
}

impl<T: Real> ControlSchedule<T> {
    pub fn new(shape: ControlShape<T>) -> Result<Self, ControlError> {
        let s = Self {
            shape,
            stray: zero_pair(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn ansatz1(c1: T, c2: T, k: T, m: T) -> Self {
        Self {
            shape: ControlShape::Ansatz1 { c1, c2, k, m },
            stray: zero_pair(),
        }
    }

    pub fn parity_polys(dp_odd: [T; 3], d_even: [T; 3]) -> Self {
        Self {
            shape: ControlShape::ParityPolys { dp_odd, d_even },
            stray: zero_pair(),
        }
    }

    pub fn constant_raman(dp: T) -> Self {
        Self {
            shape: ControlShape::ConstantRaman { dp },
            stray: zero_pair(),
        }
    }

    pub fn poly_pair(coeffs_dp: Vec<T>, coeffs_d: Vec<T>) -> Result<Self, ControlError> {
        Self::new(ControlShape::PolyPair {
            coeffs_dp,
            coeffs_d,
        })
    }

    pub fn piecewise_constant(values: Vec<(T, T)>) -> Result<Self, ControlError> {
        Self::new(ControlShape::PiecewiseConstant { values })
    }

    /// Same schedule with the stray offsets replaced.
    pub fn with_stray(mut self, stray_dp: T, stray_d: T) -> Self {
        self.stray = (stray_dp, stray_d);
        self
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let finite = |xs: &[T]| xs.iter().all(|x| x.is_finite());
        let ok = match &self.shape {
            ControlShape::PiecewiseConstant { values } => {
                if values.is_empty() {
                    return Err(ControlError::EmptySchedule);
                }
                values.iter().all(|(a, b)| a.is_finite() && b.is_finite())
            }
            ControlShape::PolyPair {
                coeffs_dp,
                coeffs_d,
            } => {
                if coeffs_dp.is_empty() || coeffs_d.is_empty() {
                    return Err(ControlError::InvalidCoefficients(
                        "polynomials need at least a constant term".into(),
                    ));
                }
                finite(coeffs_dp) && finite(coeffs_d)
            }
            ControlShape::Ansatz1 { c1, c2, k, m } => finite(&[*c1, *c2, *k, *m]),
            ControlShape::ParityPolys { dp_odd, d_even } => finite(dp_odd) && finite(d_even),
            ControlShape::ConstantRaman { dp } => dp.is_finite(),
        };
        if ok && self.stray.0.is_finite() && self.stray.1.is_finite() {
            Ok(())
        } else {
            Err(ControlError::InvalidCoefficients(
                "non-finite schedule parameter".into(),
            ))
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        matches!(self.shape, ControlShape::PiecewiseConstant { .. })
    }

    /// True when the detunings are constant on every piece.
    pub fn is_stepwise(&self) -> bool {
        matches!(
            self.shape,
            ControlShape::PiecewiseConstant { .. } | ControlShape::ConstantRaman { .. }
        )
    }

    /// Number of intervals on which the schedule is smooth.
    pub fn n_pieces(&self) -> usize {
        match &self.shape {
            ControlShape::PiecewiseConstant { values } => values.len(),
            _ => 1,
        }
    }

    /// Start and end time of smooth piece `i`.
    pub fn piece_bounds(&self, i: usize, total: T) -> (T, T) {
        let n = T::from_usize(self.n_pieces()).unwrap();
        let lo = total * T::from_usize(i).unwrap() / n;
        let hi = if i + 1 == self.n_pieces() {
            total
        } else {
            total * T::from_usize(i + 1).unwrap() / n
        };
        (lo, hi)
    }

    /// Detunings `(delta_p, delta)` at time `t` of a protocol lasting `total`.
    pub fn eval(&self, t: T, total: T) -> Result<(T, T), ControlError> {
        check_duration(total)?;
        if !(t >= T::zero() && t <= total) {
            return Err(ControlError::OutOfDomain {
                t: t.to_f64_lossy(),
                total: total.to_f64_lossy(),
            });
        }
        let (dp, d) = match &self.shape {
            ControlShape::PiecewiseConstant { values } => {
                let n = values.len();
                let idx = (t / total * T::from_usize(n).unwrap())
                    .floor()
                    .to_usize()
                    .unwrap_or(0)
                    .min(n - 1);
                values[idx]
            }
            _ => self.eval_smooth(t / total - T::lit(0.5)),
        };
        Ok((dp + self.stray.0, d + self.stray.1))
    }

    /// Evaluation restricted to smooth piece `piece`: the time is clamped to
    /// the piece and piecewise-constant schedules return the piece value, so
    /// integrators never see the jump at a right boundary.
    pub fn eval_in_piece(&self, piece: usize, t: T, total: T) -> (T, T) {
        let (dp, d) = match &self.shape {
            ControlShape::PiecewiseConstant { values } => values[piece.min(values.len() - 1)],
            _ => {
                let tc = t.max(T::zero()).min(total);
                self.eval_smooth(tc / total - T::lit(0.5))
            }
        };
        (dp + self.stray.0, d + self.stray.1)
    }

    fn eval_smooth(&self, x: T) -> (T, T) {
        match &self.shape {
            ControlShape::PiecewiseConstant { .. } => unreachable!(),
            ControlShape::PolyPair {
                coeffs_dp,
                coeffs_d,
            } => (horner(coeffs_dp, x), horner(coeffs_d, x)),
            ControlShape::Ansatz1 { c1, c2, k, m } => (*c1 - *c2 * (*k * x * x).exp(), *m * x),
            ControlShape::ParityPolys { dp_odd, d_even } => {
                let x2 = x * x;
                (x * horner(dp_odd, x2), horner(d_even, x2))
            }
            ControlShape::ConstantRaman { dp } => (*dp, T::zero()),
        }
    }

    /// Upper bound on `|delta_p| + |delta|` sampled on a fine grid, used for
    /// step-size control.
    pub fn max_abs_detuning(&self, total: T) -> T {
        match &self.shape {
            ControlShape::PiecewiseConstant { values } => values
                .iter()
                .map(|(a, b)| (*a + self.stray.0).abs() + (*b + self.stray.1).abs())
                .fold(T::zero(), T::max),
            _ => {
                let n = 512;
                (0..=n)
                    .map(|i| {
                        let t = total * T::from_usize(i).unwrap() / T::from_usize(n).unwrap();
                        let (a, b) = self.eval_in_piece(0, t, total);
                        a.abs() + b.abs()
                    })
                    .fold(T::zero(), T::max)
            }
        }
    }
}

/// Builds a piecewise-constant schedule from normalized actions in `[-1, 1]^2`,
/// each pair ordered `(delta_p, delta)`, scaled by the half-ranges.
pub fn pwc_from_actions<T: Real>(
    actions: &[(T, T)],
    ranges: (T, T),
) -> Result<ControlSchedule<T>, ControlError> {
    if actions.is_empty() {
        return Err(ControlError::EmptySchedule);
    }
    let one = T::one();
    let mut values = Vec::with_capacity(actions.len());
    for (step, &(a_dp, a_d)) in actions.iter().enumerate() {
        for a in [a_dp, a_d] {
            if !(a >= -one && a <= one) {
                return Err(ControlError::InvalidAction {
                    step,
                    value: a.to_f64_lossy(),
                });
            }
        }
        values.push((a_dp * ranges.0, a_d * ranges.1));
    }
    ControlSchedule::piecewise_constant(values)
}

/// Root-mean-square parity deviations about `T/2`.
///
/// `dp_even_dev` is the size of the odd part of `delta_p` (zero when
/// `delta_p` is even), `dp_odd_dev` the size of its even part, and likewise
/// for `delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport<T> {
    pub dp_even_dev: T,
    pub dp_odd_dev: T,
    pub d_even_dev: T,
    pub d_odd_dev: T,
}

pub const SYMMETRY_GRID: usize = 201;

pub fn symmetry_report<T: Real>(
    schedule: &ControlSchedule<T>,
    total: T,
) -> Result<SymmetryReport<T>, ControlError> {
    check_duration(total)?;
    let n = SYMMETRY_GRID;
    let last = T::from_usize(n - 1).unwrap();
    let samples: Vec<(T, T)> = (0..n)
        .map(|i| schedule.eval(total * T::from_usize(i).unwrap() / last, total))
        .collect::<Result<_, _>>()?;
    let half = T::lit(0.5);
    let mut acc = [T::zero(); 4];
    for i in 0..n {
        let (dp, d) = samples[i];
        let (dp_r, d_r) = samples[n - 1 - i];
        let parts = [
            (dp - dp_r) * half,
            (dp + dp_r) * half,
            (d - d_r) * half,
            (d + d_r) * half,
        ];
        for (a, p) in acc.iter_mut().zip(parts) {
            *a += p * p;
        }
    }
    let rms = |s: T| (s / T::from_usize(n).unwrap()).sqrt();
    Ok(SymmetryReport {
        dp_even_dev: rms(acc[0]),
        dp_odd_dev: rms(acc[1]),
        d_even_dev: rms(acc[2]),
        d_odd_dev: rms(acc[3]),
    })
}
