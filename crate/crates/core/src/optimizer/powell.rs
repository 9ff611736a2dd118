//! Powell's direction-set method.

use serde::{Deserialize, Serialize};

use super::line::{bracket_minimum, brent_on_bracket};
use super::OptimizeError;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowellConfig {
    /// Relative tolerance of each line minimization.
    pub x_tol: f64,
    /// Relative decrease per cycle below which the search stops.
    pub f_tol: f64,
    /// Maximum number of direction-set cycles.
    pub max_iter: usize,
    /// Expansion factor of the bracketing search.
    pub bracket_growth: f64,
    /// First trial step along each direction.
    pub initial_step: f64,
    /// Evaluation cap of a single line minimization.
    pub max_line_evals: usize,
    /// Number of random starts for the multi-start searches.
    pub restarts: usize,
    /// Interval for random starting coordinates; `None` uses the family default.
    pub init_range: Option<(f64, f64)>,
}

impl Default for PowellConfig {
    fn default() -> Self {
        Self {
            x_tol: 1e-8,
            f_tol: 1e-8,
            max_iter: 1000,
            bracket_growth: super::line::golden_ratio(),
            initial_step: 1.0,
            max_line_evals: 500,
            restarts: 10,
            init_range: None,
        }
    }
}

impl PowellConfig {
    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: &str| Err(OptimizeError::InvalidConfig(m.to_string()));
        if !(self.x_tol > 0.0 && self.f_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        if !(self.bracket_growth > 1.0) {
            return bad("bracket_growth must exceed 1");
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return bad("initial_step must be positive");
        }
        if self.max_line_evals < 3 {
            return bad("max_line_evals must be at least 3");
        }
        if let Some((lo, hi)) = self.init_range {
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                return bad("init_range must be a finite interval");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowellResult<T> {
    pub x: Vec<T>,
    pub fx: T,
    pub n_evals: usize,
    pub n_iter: usize,
    /// Objective value at the start and after every cycle.
    pub history: Vec<T>,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F> Counted<F> {
    fn call<T: Real>(&mut self, x: &[T]) -> Result<T, OptimizeError>
    where
        F: FnMut(&[T]) -> T,
    {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_nan() {
            Err(OptimizeError::NonFinite)
        } else {
            Ok(v)
        }
    }
}

/// Minimizes `f` along `dir` from `x`, updating `x` and returning the new
/// value. `dir` is rescaled to the displacement actually taken.
fn line_minimize<T: Real, F: FnMut(&[T]) -> T>(
    f: &mut Counted<F>,
    x: &mut [T],
    fx: T,
    dir: &mut [T],
    cfg: &PowellConfig,
) -> Result<T, OptimizeError> {
    let mut trial = x.to_vec();
    let mut failed = false;
    let mut g = |u: T| {
        for ((t, xi), di) in trial.iter_mut().zip(x.iter()).zip(dir.iter()) {
            *t = *xi + u * *di;
        }
        match f.call(&trial) {
            Ok(v) => v,
            Err(_) => {
                failed = true;
                T::nan()
            }
        }
    };
    let growth = T::lit(cfg.bracket_growth);
    let step = T::lit(cfg.initial_step);
    let result = bracket_minimum(&mut g, T::zero(), fx, step, growth, cfg.max_line_evals).and_then(
        |(br, n)| {
            let left = cfg.max_line_evals.saturating_sub(n).max(1);
            brent_on_bracket(&mut g, &br, T::lit(cfg.x_tol), left).map(|m| (br, m))
        },
    );
    if failed {
        return Err(OptimizeError::NonFinite);
    }
    let (u, fu) = match result {
        Ok((br, m)) => {
            let (u, fu) = (m.x, m.fx);
            if br.fb < fu {
                (br.b, br.fb)
            } else {
                (u, fu)
            }
        }
        Err(OptimizeError::EvaluationBudget(_)) => return Ok(fx),
        Err(e) => return Err(e),
    };
    if !(fu < fx) {
        for d in dir.iter_mut() {
            *d = T::zero();
        }
        return Ok(fx);
    }
    for (xi, di) in x.iter_mut().zip(dir.iter_mut()) {
        *di *= u;
        *xi += *di;
    }
    Ok(fu)
}

/// Powell's method with the standard direction-replacement rule. The
/// direction set is reset to the coordinate axes every `n` cycles.
pub fn powell_min<T: Real, F: FnMut(&[T]) -> T>(
    f: F,
    x0: &[T],
    cfg: &PowellConfig,
) -> Result<PowellResult<T>, OptimizeError> {
    cfg.validate()?;
    let n = x0.len();
    if n == 0 {
        return Err(OptimizeError::InvalidConfig(
            "empty parameter vector".into(),
        ));
    }
    let mut f = Counted { f, evals: 0 };
    let mut x = x0.to_vec();
    let mut fx = f.call(&x)?;
    if !fx.is_finite() {
        return Err(OptimizeError::NonFinite);
    }
    let identity = |i: usize| {
        let mut d = vec![T::zero(); n];
        d[i] = T::one();
        d
    };
    let mut dirs: Vec<Vec<T>> = (0..n).map(identity).collect();
    let mut history = vec![fx];
    let ftol = T::lit(cfg.f_tol);
    let tiny = T::lit(1e-25);
    let two = T::lit(2.0);
    let mut iter = 0;
    while iter < cfg.max_iter {
        iter += 1;
        if iter > 1 && (iter - 1) % n == 0 {
            dirs = (0..n).map(identity).collect();
        }
        let start = x.clone();
        let f_start = fx;
        let mut biggest = 0;
        let mut biggest_drop = T::zero();
        for (i, dir) in dirs.iter_mut().enumerate() {
            if dir.iter().all(|d| *d == T::zero()) {
                *dir = identity(i);
            }
            let before = fx;
            fx = line_minimize(&mut f, &mut x, fx, dir, cfg)?;
            if before - fx > biggest_drop {
                biggest_drop = before - fx;
                biggest = i;
            }
        }
        history.push(fx);
        if two * (f_start - fx) <= ftol * (f_start.abs() + fx.abs()) + tiny {
            break;
        }
        let extrapolated: Vec<T> = x.iter().zip(&start).map(|(a, b)| two * *a - *b).collect();
        let mut new_dir: Vec<T> = x.iter().zip(&start).map(|(a, b)| *a - *b).collect();
        let f_ext = f.call(&extrapolated)?;
        if f_ext < f_start {
            let t = two * (f_start - two * fx + f_ext) * (f_start - fx - biggest_drop).powi(2)
                - biggest_drop * (f_start - f_ext).powi(2);
            if t < T::zero() {
                fx = line_minimize(&mut f, &mut x, fx, &mut new_dir, cfg)?;
                if let Some(last) = history.last_mut() {
                    *last = fx;
                }
                if new_dir.iter().any(|d| *d != T::zero()) {
                    dirs[biggest] = dirs[n - 1].clone();
                    dirs[n - 1] = new_dir;
                }
            }
        }
    }
    Ok(PowellResult {
        x,
        fx,
        n_evals: f.evals,
        n_iter: iter,
        history,
    })
}
