//! One-dimensional minimization: golden-ratio bracketing and Brent's method.

use super::OptimizeError;
use crate::scalar::Real;

const GOLDEN: f64 = 1.618_033_988_749_895;
const CGOLD: f64 = 0.381_966_011_250_105;
const PARABOLIC_LIMIT: f64 = 100.0;

/// Result of a one-dimensional minimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineMin<T> {
    pub x: T,
    pub fx: T,
    pub n_evals: usize,
}

/// A triple `a, b, c` with `b` between `a` and `c` and `f(b)` no larger than
/// `f(a)` and `f(c)`, together with the function values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub fa: T,
    pub fb: T,
    pub fc: T,
}

fn checked<T: Real>(v: T) -> Result<T, OptimizeError> {
    if v.is_nan() {
        Err(OptimizeError::NonFinite)
    } else {
        Ok(v)
    }
}

/// Expands outward from `a` and `a + step` by the factor `growth`, with
/// parabolic extrapolation, until the middle point is a local minimum.
pub fn bracket_minimum<T: Real, F: FnMut(T) -> T>(
    f: &mut F,
    a: T,
    fa: T,
    step: T,
    growth: T,
    max_evals: usize,
) -> Result<(Bracket<T>, usize), OptimizeError> {
    let tiny = T::lit(1e-20);
    let two = T::lit(2.0);
    let limit = T::lit(PARABOLIC_LIMIT);
    let (mut a, mut fa) = (a, checked(fa)?);
    let mut b = a + step;
    let mut fb = checked(f(b))?;
    let mut evals = 1;
    if fb > fa {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = b + growth * (b - a);
    let mut fc = checked(f(c))?;
    evals += 1;
    while fb > fc {
        if evals >= max_evals {
            return Err(OptimizeError::EvaluationBudget(evals));
        }
        let r = (b - a) * (fb - fc);
        let q = (b - c) * (fb - fa);
        let denom = two * (q - r).abs().max(tiny).copysign(q - r);
        let mut u = b - ((b - c) * q - (b - a) * r) / denom;
        let ulim = b + limit * (c - b);
        let fu;
        if (b - u) * (u - c) > T::zero() {
            let fu1 = checked(f(u))?;
            evals += 1;
            if fu1 < fc {
                return Ok((
                    Bracket {
                        a: b,
                        b: u,
                        c,
                        fa: fb,
                        fb: fu1,
                        fc,
                    },
                    evals,
                ));
            } else if fu1 > fb {
                return Ok((
                    Bracket {
                        a,
                        b,
                        c: u,
                        fa,
                        fb,
                        fc: fu1,
                    },
                    evals,
                ));
            }
            u = c + growth * (c - b);
            fu = checked(f(u))?;
            evals += 1;
        } else if (c - u) * (u - ulim) > T::zero() {
            let mut fu1 = checked(f(u))?;
            evals += 1;
            if fu1 < fc {
                b = c;
                c = u;
                u = c + growth * (c - b);
                fb = fc;
                fc = fu1;
                fu1 = checked(f(u))?;
                evals += 1;
            }
            fu = fu1;
        } else if (u - ulim) * (ulim - c) >= T::zero() {
            u = ulim;
            fu = checked(f(u))?;
            evals += 1;
        } else {
            u = c + growth * (c - b);
            fu = checked(f(u))?;
            evals += 1;
        }
        a = b;
        b = c;
        c = u;
        fa = fb;
        fb = fc;
        fc = fu;
    }
    Ok((
        Bracket {
            a,
            b,
            c,
            fa,
            fb,
            fc,
        },
        evals,
    ))
}

/// Brent's method on a bracket `(a, b, c)` with `f(b) < f(a)` and
/// `f(b) < f(c)`. Converges to within `tol * |x| + 1e-12` of a local minimizer.
pub fn brent_min<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    bracket: (T, T, T),
    tol: T,
    max_evals: usize,
) -> Result<LineMin<T>, OptimizeError> {
    let (a, b, c) = bracket;
    let between = (a < b && b < c) || (c < b && b < a);
    if !between {
        return Err(OptimizeError::InvalidBracket);
    }
    let (fa, fb, fc) = (checked(f(a))?, checked(f(b))?, checked(f(c))?);
    if !(fb < fa && fb < fc) {
        return Err(OptimizeError::InvalidBracket);
    }
    let br = Bracket {
        a,
        b,
        c,
        fa,
        fb,
        fc,
    };
    let mut out = brent_on_bracket(&mut f, &br, tol, max_evals)?;
    out.n_evals += 3;
    Ok(out)
}

/// Brent iteration on an already evaluated bracket. Returns the lowest
/// point seen, which is never worse than `b`.
pub(crate) fn brent_on_bracket<T: Real, F: FnMut(T) -> T>(
    f: &mut F,
    br: &Bracket<T>,
    tol: T,
    max_evals: usize,
) -> Result<LineMin<T>, OptimizeError> {
    let zeps = T::lit(1e-12);
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let cgold = T::lit(CGOLD);
    let (mut a, mut b) = if br.a < br.c {
        (br.a, br.c)
    } else {
        (br.c, br.a)
    };
    let (mut x, mut w, mut v) = (br.b, br.b, br.b);
    let (mut fx, mut fw, mut fv) = (br.fb, br.fb, br.fb);
    let mut d = T::zero();
    let mut e = T::zero();
    let mut evals = 0;
    loop {
        let xm = half * (a + b);
        let tol1 = tol * x.abs() + zeps;
        let tol2 = two * tol1;
        if (x - xm).abs() <= tol2 - half * (b - a) {
            return Ok(LineMin {
                x,
                fx,
                n_evals: evals,
            });
        }
        if evals >= max_evals {
            return Err(OptimizeError::EvaluationBudget(evals));
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (half * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = cgold * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = checked(f(u))?;
        evals += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            w = x;
            x = u;
            fv = fw;
            fw = fx;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                w = u;
                fv = fw;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
}

/// Golden-ratio expansion factor used by default when bracketing.
pub fn golden_ratio<T: Real>() -> T {
    T::lit(GOLDEN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn quadratic_minimum() {
        let m = brent_min(|x: f64| (x - 2.0).powi(2), (0.0, 1.0, 5.0), 1e-10, 200).unwrap();
        assert!((m.x - 2.0).abs() < 1e-8);
        assert!(m.fx < 1e-15);
    }

    #[test]
    fn cosine_minimum_at_pi() {
        let m = brent_min(f64::cos, (2.0, 3.0, 4.5), 1e-10, 200).unwrap();
        assert!((m.x - PI).abs() < 1e-8, "{}", m.x - PI);
    }

    #[test]
    fn kink_minimum() {
        let m = brent_min(|x: f64| (x - 0.3).abs(), (-1.0, 0.0, 2.0), 1e-10, 500).unwrap();
        assert!((m.x - 0.3).abs() < 1e-6);
        let grid_best = (0..=30_000)
            .map(|i| -1.0 + i as f64 * 1e-4)
            .min_by(|a, b| (a - 0.3).abs().total_cmp(&(b - 0.3).abs()))
            .unwrap();
        assert!((m.x - grid_best).abs() < 1e-4);
    }

    #[test]
    fn invalid_brackets() {
        let f = |x: f64| (x - 2.0).powi(2);
        assert!(matches!(
            brent_min(f, (0.0, 3.0, 2.5), 1e-8, 100),
            Err(OptimizeError::InvalidBracket)
        ));
        assert!(matches!(
            brent_min(f, (3.0, 4.0, 5.0), 1e-8, 100),
            Err(OptimizeError::InvalidBracket)
        ));
        assert!(brent_min(f, (5.0, 3.0, 0.0), 1e-8, 100).is_ok());
    }

    #[test]
    fn evaluation_budget() {
        let r = brent_min(f64::cos, (2.0, 3.0, 4.5), 1e-14, 3);
        assert!(matches!(r, Err(OptimizeError::EvaluationBudget(_))));
    }

    #[test]
    fn bracketing_finds_distant_minimum() {
        let mut f = |x: f64| (x - 40.0).powi(2);
        let fa = f(0.0);
        let (br, _) = bracket_minimum(&mut f, 0.0, fa, 1.0, golden_ratio(), 100).unwrap();
        let (lo, hi) = if br.a < br.c {
            (br.a, br.c)
        } else {
            (br.c, br.a)
        };
        assert!(lo < 40.0 && 40.0 < hi);
        assert!(br.fb <= br.fa && br.fb <= br.fc);
    }

    #[test]
    fn bracketing_reverses_direction() {
        let mut f = |x: f64| (x + 3.0).powi(2);
        let fa = f(0.0);
        let (br, _) = bracket_minimum(&mut f, 0.0, fa, 1.0, golden_ratio(), 100).unwrap();
        let (lo, hi) = if br.a < br.c {
            (br.a, br.c)
        } else {
            (br.c, br.a)
        };
        assert!(lo < -3.0 && -3.0 < hi);
    }

    #[test]
    fn nan_is_rejected() {
        let mut f = |_x: f64| f64::NAN;
        assert!(matches!(
            bracket_minimum(&mut f, 0.0, 1.0, 1.0, golden_ratio(), 10),
            Err(OptimizeError::NonFinite)
        ));
    }
}
