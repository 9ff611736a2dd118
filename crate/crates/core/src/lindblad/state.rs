use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::{check_dim, Level, LindbladError};
use crate::linalg::{hermitian_eigen, CMatrix};
use crate::scalar::{re, Cplx, Real};

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-9;
const POSITIVITY_TOL: f64 = 1e-9;

/// Density matrix over `g, e, f` or `g, e, f, s`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix<T> {
    m: CMatrix<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// `|g><g|`
    pub fn ground(dim: usize) -> Self {
        Self::pure_level(Level::G, dim)
    }

    pub fn pure_level(level: Level, dim: usize) -> Self {
        assert!(level.index() < dim, "level outside the state space");
        let mut m = CMatrix::zeros(dim);
        m[(level.index(), level.index())] = re(T::one());
        Self { m }
    }

    /// `|psi><psi|` for a normalized amplitude vector.
    pub fn from_amplitudes(psi: &[Cplx<T>]) -> Result<Self, LindbladError> {
        check_dim(psi.len())?;
        let m = CMatrix::from_fn(psi.len(), |i, j| psi[i] * psi[j].conj());
        Self::from_matrix(m)
    }

    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_matrix(m: CMatrix<T>) -> Result<Self, LindbladError> {
        check_dim(m.dim())?;
        let rho = Self { m };
        rho.check(
            T::lit(HERMITIAN_TOL),
            T::lit(TRACE_TOL),
            T::lit(POSITIVITY_TOL),
        )?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix<T>) -> Self {
        Self { m }
    }

    /// Checks the physicality invariants at the given tolerances.
    pub fn check(&self, herm_tol: T, trace_tol: T, pos_tol: T) -> Result<(), LindbladError> {
        if !self.m.is_finite() {
            return Err(LindbladError::NonFinite);
        }
        let herm = self.m.hermiticity_error();
        if herm > herm_tol {
            return Err(LindbladError::InvalidState(format!(
                "not Hermitian (error {herm})"
            )));
        }
        let tr = self.trace();
        if (tr - T::one()).abs() > trace_tol {
            return Err(LindbladError::InvalidState(format!("trace {tr} != 1")));
        }
        let min = self.min_eigenvalue();
        if min < -pos_tol {
            return Err(LindbladError::InvalidState(format!(
                "negative eigenvalue {min}"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    #[inline]
    pub fn matrix(&self) -> &CMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.m
    }

    #[inline]
    pub fn population(&self, level: Level) -> T {
        let i = level.index();
        if i < self.dim() {
            self.m[(i, i)].re
        } else {
            T::zero()
        }
    }

    pub fn populations(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.m[(i, i)].re).collect()
    }

    /// `|rho_ij|` for `i < j` in row order.
    pub fn coherences(&self) -> Vec<T> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * (d - 1) / 2);
        for i in 0..d {
            for j in i + 1..d {
                out.push(self.m[(i, j)].norm());
            }
        }
        out
    }

    pub fn trace(&self) -> T {
        self.m.trace().re
    }

    /// `tr(rho^2)`
    pub fn purity(&self) -> T {
        self.m.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> T {
        self.m.hermiticity_error()
    }

    pub fn min_eigenvalue(&self) -> T {
        let sym = CMatrix::from_fn(self.dim(), |i, j| {
            (self.m[(i, j)] + self.m[(j, i)].conj()) * T::lit(0.5)
        });
        hermitian_eigen(&sym).0[0]
    }

    /// Same state viewed in the four-level space (sink population zero).
    pub fn with_sink(&self) -> Self {
        if self.dim() == 4 {
            return self.clone();
        }
        let m = CMatrix::from_fn(4, |i, j| {
            if i < 3 && j < 3 {
                self.m[(i, j)]
            } else {
                Cplx::zero()
            }
        });
        Self { m }
    }
}

#[derive(Serialize, Deserialize)]
struct DensityMatrixRepr<T> {
    dim: usize,
    re: Vec<T>,
    im: Vec<T>,
}

impl<T: Real> Serialize for DensityMatrix<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        DensityMatrixRepr {
            dim: self.dim(),
            re: self.m.as_slice().iter().map(|z| z.re).collect(),
            im: self.m.as_slice().iter().map(|z| z.im).collect(),
        }
        .serialize(s)
    }
}

impl<'de, T: Real> Deserialize<'de> for DensityMatrix<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = DensityMatrixRepr::<T>::deserialize(d)?;
        if repr.re.len() != repr.dim * repr.dim || repr.im.len() != repr.re.len() {
            return Err(serde::de::Error::custom(
                "density matrix entry count mismatch",
            ));
        }
        let data = repr
            .re
            .into_iter()
            .zip(repr.im)
            .map(|(a, b)| Cplx::new(a, b))
            .collect();
        Self::from_matrix(CMatrix::from_row_major(repr.dim, data)).map_err(serde::de::Error::custom)
    }
}
