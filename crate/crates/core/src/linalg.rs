//! Small dense complex matrices: products, Kronecker products, Padé matrix
//! exponential and a Hermitian Jacobi eigensolver.
//!
//! Sizes here never exceed 16x16 (the Liouvillian of a four-level system),
//! so everything is plain row-major `Vec` storage without blocking.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_traits::{One, Zero};
use thiserror::Error;

use crate::scalar::{re, Cplx, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

/// Square complex matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    n: usize,
    data: Vec<Cplx<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Cplx::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Cplx::one();
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Cplx<T>) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds a matrix from row-major data. Panics if `data.len()` is not a square.
    pub fn from_row_major(n: usize, data: Vec<Cplx<T>>) -> Self {
        assert_eq!(data.len(), n * n, "row-major data must hold n*n entries");
        Self { n, data }
    }

    /// Real matrix given as rows.
    pub fn from_real_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        Self::from_fn(n, |i, j| re(rows[i][j]))
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn as_slice(&self) -> &[Cplx<T>] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [Cplx<T>] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Cplx<T>> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn scale(&self, s: Cplx<T>) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| *z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|z| *z * s).collect(),
        }
    }

    pub fn trace(&self) -> Cplx<T> {
        (0..self.n)
            .map(|i| self[(i, i)])
            .fold(Cplx::zero(), |a, b| a + b)
    }

    /// Induced 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> T {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].norm()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().map(|z| z.norm()).fold(T::zero(), T::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a - *b).norm())
            .fold(T::zero(), T::max)
    }

    /// Largest deviation from Hermiticity, `max |A - A^†|`.
    pub fn hermiticity_error(&self) -> T {
        let mut err = T::zero();
        for i in 0..self.n {
            for j in i..self.n {
                err = err.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        err
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut out = Self::zeros(self.n);
        matmul_into(self, other, &mut out);
        out
    }

    /// `self * other - other * self`
    pub fn commutator(&self, other: &Self) -> Self {
        &self.matmul(other) - &other.matmul(self)
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        &self.matmul(other) + &other.matmul(self)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (n, m) = (self.n, other.n);
        let mut out = Self::zeros(n * m);
        for i in 0..n {
            for j in 0..n {
                let a = self[(i, j)];
                if a.is_zero() {
                    continue;
                }
                for k in 0..m {
                    for l in 0..m {
                        out[(i * m + k, j * m + l)] = a * other[(k, l)];
                    }
                }
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[Cplx<T>]) -> Vec<Cplx<T>> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let row = &self.data[i * self.n..(i + 1) * self.n];
                row.iter()
                    .zip(v)
                    .fold(Cplx::zero(), |acc, (a, b)| acc + *a * *b)
            })
            .collect()
    }

    /// Solves `self * X = rhs` by LU decomposition with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.n != rhs.n {
            return Err(LinalgError::DimensionMismatch {
                left: self.n,
                right: rhs.n,
            });
        }
        let n = self.n;
        let mut a = self.clone();
        let mut x = rhs.clone();
        let scale = a.max_abs();
        if !scale.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let tiny = scale * T::eps();
        for col in 0..n {
            let (piv, piv_abs) = (col..n).map(|r| (r, a[(r, col)].norm())).fold(
                (col, T::neg_infinity()),
                |best, cur| {
                    if cur.1 > best.1 {
                        cur
                    } else {
                        best
                    }
                },
            );
            if piv_abs <= tiny || piv_abs.is_zero() {
                return Err(LinalgError::Singular);
            }
            if piv != col {
                for j in 0..n {
                    a.data.swap(col * n + j, piv * n + j);
                    x.data.swap(col * n + j, piv * n + j);
                }
            }
            let inv = a[(col, col)].inv();
            for r in col + 1..n {
                let factor = a[(r, col)] * inv;
                if factor.is_zero() {
                    continue;
                }
                for j in col..n {
                    let v = a[(col, j)];
                    a[(r, j)] -= factor * v;
                }
                for j in 0..n {
                    let v = x[(col, j)];
                    x[(r, j)] -= factor * v;
                }
            }
        }
        for col in (0..n).rev() {
            let inv = a[(col, col)].inv();
            for j in 0..n {
                let mut s = x[(col, j)];
                for k in col + 1..n {
                    s -= a[(col, k)] * x[(k, j)];
                }
                x[(col, j)] = s * inv;
            }
        }
        Ok(x)
    }

    /// Matrix exponential by scaling and squaring with diagonal Padé
    /// approximants of degree 3, 5, 7, 9 or 13 (Higham 2005).
    pub fn expm(&self) -> Result<Self, LinalgError> {
        if !self.is_finite() {
            return Err(LinalgError::NonFinite);
        }
        let n = self.n;
        let norm = self.norm_one().to_f64_lossy();
        let ident = Self::identity(n);
        for &(m, theta) in &PADE_THETA[..4] {
            if norm <= theta {
                let (u, v) = pade_low(self, m, &ident);
                return (&v - &u).solve(&(&v + &u));
            }
        }
        let s = if norm > THETA_13 {
            (norm / THETA_13).log2().ceil().max(0.0) as i32
        } else {
            0
        };
        let a = self.scale_real(T::lit(0.5f64.powi(s)));
        let (u, v) = pade13(&a, &ident);
        let mut r = (&v - &u).solve(&(&v + &u))?;
        for _ in 0..s {
            r = r.matmul(&r);
        }
        Ok(r)
    }
}

const THETA_13: f64 = 5.371920351148152;
const PADE_THETA: [(usize, f64); 5] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
    (13, THETA_13),
];

fn pade_coeffs(m: usize) -> &'static [f64] {
    match m {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[
            17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
        ],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        13 => &[
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
        _ => unreachable!("unsupported Padé degree"),
    }
}

fn pade_low<T: Real>(a: &CMatrix<T>, m: usize, ident: &CMatrix<T>) -> (CMatrix<T>, CMatrix<T>) {
    let b = pade_coeffs(m);
    let a2 = a.matmul(a);
    // even powers A^0, A^2, ..., A^{m-1}
    let mut powers = vec![ident.clone(), a2.clone()];
    while powers.len() < m.div_ceil(2) {
        let next = powers.last().unwrap().matmul(&a2);
        powers.push(next);
    }
    let mut u_inner = CMatrix::zeros(a.dim());
    let mut v = CMatrix::zeros(a.dim());
    for (k, p) in powers.iter().enumerate() {
        u_inner = &u_inner + &p.scale_real(T::lit(b[2 * k + 1]));
        v = &v + &p.scale_real(T::lit(b[2 * k]));
    }
    (a.matmul(&u_inner), v)
}

fn pade13<T: Real>(a: &CMatrix<T>, ident: &CMatrix<T>) -> (CMatrix<T>, CMatrix<T>) {
    let b: Vec<T> = pade_coeffs(13).iter().map(|&x| T::lit(x)).collect();
    let a2 = a.matmul(a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let lin = |c6: T, c4: T, c2: T, c0: T| -> CMatrix<T> {
        let mut out = a6.scale_real(c6);
        for ((o, x4), (x2, x0)) in out
            .data
            .iter_mut()
            .zip(&a4.data)
            .zip(a2.data.iter().zip(&ident.data))
        {
            *o = *o + *x4 * c4 + *x2 * c2 + *x0 * c0;
        }
        out
    };
    let u_hi = lin(b[13], b[11], b[9], T::zero());
    let u_lo = lin(b[7], b[5], b[3], b[1]);
    let u = a.matmul(&(&a6.matmul(&u_hi) + &u_lo));
    let v_hi = lin(b[12], b[10], b[8], T::zero());
    let v_lo = lin(b[6], b[4], b[2], b[0]);
    let v = &a6.matmul(&v_hi) + &v_lo;
    (u, v)
}

/// `out = a * b`; `out` must already have the right dimension.
pub fn matmul_into<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>, out: &mut CMatrix<T>) {
    let n = a.n;
    assert!(b.n == n && out.n == n);
    for v in out.data.iter_mut() {
        *v = Cplx::zero();
    }
    for i in 0..n {
        for k in 0..n {
            let aik = a.data[i * n + k];
            if aik.is_zero() {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            let orow = &mut out.data[i * n..(i + 1) * n];
            for (o, bkj) in orow.iter_mut().zip(brow) {
                *o += aik * *bkj;
            }
        }
    }
}

impl<T> Index<(usize, usize)> for CMatrix<T> {
    type Output = Cplx<T>;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Cplx<T> {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for CMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Cplx<T> {
        &mut self.data[i * self.n + j]
    }
}

impl<T: Real> Add for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn add(self, rhs: &CMatrix<T>) -> CMatrix<T> {
        assert_eq!(self.n, rhs.n);
        CMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| *a + *b)
                .collect(),
        }
    }
}

impl<T: Real> Sub for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn sub(self, rhs: &CMatrix<T>) -> CMatrix<T> {
        assert_eq!(self.n, rhs.n);
        CMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| *a - *b)
                .collect(),
        }
    }
}

impl<T: Real> Mul for &CMatrix<T> {
    type Output = CMatrix<T>;

    fn mul(self, rhs: &CMatrix<T>) -> CMatrix<T> {
        self.matmul(rhs)
    }
}

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Returns eigenvalues in ascending order and the unitary whose
/// columns are the matching eigenvectors.
pub fn hermitian_eigen<T: Real>(m: &CMatrix<T>) -> (Vec<T>, CMatrix<T>) {
    let n = m.dim();
    let mut a = m.clone();
    let mut v = CMatrix::identity(n);
    let scale = a.max_abs().max(T::min_positive_value());
    let thresh = scale * scale * T::eps() * T::eps();
    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off <= thresh {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag <= T::min_positive_value() {
                    continue;
                }
                let phase = apq / mag;
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let theta = (aqq - app) / (T::lit(2.0) * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let cs = T::one() / (t * t + T::one()).sqrt();
                let sn = t * cs;
                // U = diag(1, e^{-i phi}) * [[c, s], [-s, c]] on the (p, q) plane
                let u00 = re(cs);
                let u01 = re(sn);
                let u10 = phase.conj() * (-sn);
                let u11 = phase.conj() * cs;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * u00 + akq * u10;
                    a[(k, q)] = akp * u01 + akq * u11;
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * u00 + vkq * u10;
                    v[(k, q)] = vkp * u01 + vkq * u11;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = u00.conj() * apk + u10.conj() * aqk;
                    a[(q, k)] = u01.conj() * apk + u11.conj() * aqk;
                }
                a[(p, q)] = Cplx::zero();
                a[(q, p)] = Cplx::zero();
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[(i, i)]
            .re
            .partial_cmp(&a[(j, j)].re)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, |r, col| v[(r, order[col])]);
    (values, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::c;

    fn rand_matrix(n: usize, seed: u64, scale: f64) -> CMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(n, |_, _| {
            c(
                rng.random_range(-1.0..1.0) * scale,
                rng.random_range(-1.0..1.0) * scale,
            )
        })
    }

    fn taylor_expm(a: &CMatrix<f64>) -> CMatrix<f64> {
        // scaled Taylor series, kept separate from the Padé path
        let s = 12;
        let small = a.scale_real(0.5f64.powi(s));
        let mut term = CMatrix::identity(a.dim());
        let mut sum = term.clone();
        for k in 1..30 {
            term = term.matmul(&small).scale_real(1.0 / k as f64);
            sum = &sum + &term;
        }
        for _ in 0..s {
            sum = sum.matmul(&sum);
        }
        sum
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = CMatrix::<f64>::zeros(4);
        assert!(z.expm().unwrap().max_abs_diff(&CMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn expm_matches_taylor_across_norm_regimes() {
        for (seed, scale) in [
            (1, 1e-3),
            (2, 0.05),
            (3, 0.2),
            (4, 0.5),
            (5, 3.0),
            (6, 20.0),
        ] {
            let a = rand_matrix(5, seed, scale);
            let p = a.expm().unwrap();
            let t = taylor_expm(&a);
            let rel = p.max_abs_diff(&t) / t.max_abs();
            assert!(rel < 1e-11, "scale {scale}: rel err {rel}");
        }
    }

    #[test]
    fn expm_of_diagonal() {
        let d = CMatrix::from_fn(3, |i, j| {
            if i == j {
                c(i as f64, 0.5)
            } else {
                Cplx::zero()
            }
        });
        let e = d.expm().unwrap();
        for i in 0..3 {
            let want = c(i as f64, 0.5).exp();
            assert!((e[(i, i)] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn solve_recovers_identity() {
        let a = rand_matrix(6, 9, 1.0);
        let inv = a.solve(&CMatrix::identity(6)).unwrap();
        assert!(a.matmul(&inv).max_abs_diff(&CMatrix::identity(6)) < 1e-12);
    }

    #[test]
    fn solve_singular_is_error() {
        let a = CMatrix::<f64>::zeros(3);
        assert_eq!(a.solve(&CMatrix::identity(3)), Err(LinalgError::Singular));
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let r = rand_matrix(4, 11, 1.0);
        let h = &r + &r.adjoint();
        let (vals, vecs) = hermitian_eigen(&h);
        let diag = CMatrix::from_fn(4, |i, j| if i == j { re(vals[i]) } else { Cplx::zero() });
        let back = vecs.matmul(&diag).matmul(&vecs.adjoint());
        assert!(back.max_abs_diff(&h) < 1e-12);
        assert!(
            vecs.matmul(&vecs.adjoint())
                .max_abs_diff(&CMatrix::identity(4))
                < 1e-12
        );
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn kron_dimensions_and_entries() {
        let a = CMatrix::from_real_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let b = CMatrix::identity(2);
        let k = a.kron(&b);
        assert_eq!(k.dim(), 4);
        assert_eq!(k[(2, 0)], re(3.0));
        assert_eq!(k[(3, 1)], re(3.0));
        assert_eq!(k[(3, 0)], Cplx::zero());
    }

    #[test]
    fn works_in_single_precision() {
        let a = CMatrix::<f32>::from_real_rows(&[vec![0.0, 1.0], vec![-1.0, 0.0]]);
        let e = a.expm().unwrap();
        assert!((e[(0, 0)].re - 1f32.cos()).abs() < 1e-6);
        assert!((e[(0, 1)].re - 1f32.sin()).abs() < 1e-6);
    }
}
