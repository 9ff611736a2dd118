//! Multi-start Powell searches over control-family parameters.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::powell::{powell_min, PowellConfig};
use super::OptimizeError;
use crate::controls::ControlSchedule;
use crate::lindblad::{simulate_transfer, DensityMatrix, NoiseChannel, PropagationOptions};
use crate::policy::sink_rate_for;
use crate::scalar::Real;

/// Final target population of a schedule, used as the quantity to maximize.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Objective {
    pub total_time: f64,
    /// Adds the sink channel on the excited level.
    #[serde(default)]
    pub include_sink: bool,
    /// Sink rate; `None` means `10 / total_time`.
    #[serde(default)]
    pub sink_rate: Option<f64>,
    /// Schedules whose detunings exceed this magnitude score zero.
    #[serde(default = "default_max_detuning")]
    pub max_detuning: f64,
}

fn default_max_detuning() -> f64 {
    1000.0
}

impl Objective {
    pub fn sink_free(total_time: f64) -> Self {
        Self {
            total_time,
            include_sink: false,
            sink_rate: None,
            max_detuning: default_max_detuning(),
        }
    }

    pub fn with_sink(total_time: f64) -> Self {
        Self {
            include_sink: true,
            ..Self::sink_free(total_time)
        }
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        if !(self.total_time > 0.0 && self.total_time.is_finite()) {
            return Err(OptimizeError::InvalidConfig(
                "total_time must be positive and finite".into(),
            ));
        }
        if let Some(r) = self.sink_rate {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(OptimizeError::InvalidConfig(
                    "sink_rate must be non-negative".into(),
                ));
            }
        }
        if !(self.max_detuning > 0.0) {
            return Err(OptimizeError::InvalidConfig(
                "max_detuning must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn effective_sink_rate(&self) -> f64 {
        self.sink_rate
            .unwrap_or_else(|| sink_rate_for(self.total_time))
    }

    /// `rho_ff(T)` from `|g><g|`. Schedules that cannot be propagated, or
    /// whose detunings exceed `max_detuning`, score zero.
    pub fn score<T: Real>(&self, schedule: &ControlSchedule<T>) -> T {
        let total = T::lit(self.total_time);
        let peak = schedule.max_abs_detuning(total);
        if !(peak.is_finite() && peak <= T::lit(self.max_detuning)) {
            return T::zero();
        }
        let opts = PropagationOptions::default().with_samples(2);
        let result = if self.include_sink {
            NoiseChannel::sink(T::lit(self.effective_sink_rate())).and_then(|sink| {
                simulate_transfer(&DensityMatrix::ground(4), schedule, total, &[sink], &opts)
            })
        } else {
            simulate_transfer(&DensityMatrix::ground(3), schedule, total, &[], &opts)
        };
        match result {
            Ok(s) if s.final_target.is_finite() => s.final_target,
            _ => T::zero(),
        }
    }
}

/// Analytic families searched by [`optimize_ansatz`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnsatzFamily {
    /// Parameters `(c1, c2, k, m)`.
    Ansatz1,
    /// Parameters `(dp_odd[0..3], d_even[0..3])`.
    ParityPolys,
}

impl AnsatzFamily {
    pub fn n_params(self) -> usize {
        match self {
            Self::Ansatz1 => 4,
            Self::ParityPolys => 6,
        }
    }

    pub fn default_init_range(self) -> (f64, f64) {
        match self {
            Self::Ansatz1 => (-5.0, 5.0),
            Self::ParityPolys => (0.0, 20.0),
        }
    }

    pub fn schedule<T: Real>(self, p: &[T]) -> ControlSchedule<T> {
        match self {
            Self::Ansatz1 => ControlSchedule::ansatz1(p[0], p[1], p[2], p[3]),
            Self::ParityPolys => {
                ControlSchedule::parity_polys([p[0], p[1], p[2]], [p[3], p[4], p[5]])
            }
        }
    }
}

/// Start interval for random polynomial coefficients.
pub const POLY_INIT_RANGE: (f64, f64) = (-20.0, 20.0);

/// Polynomial pair with `order + 1` coefficients each, `delta_p` first.
pub fn poly_schedule<T: Real>(p: &[T]) -> ControlSchedule<T> {
    let (dp, d) = p.split_at(p.len() / 2);
    ControlSchedule::poly_pair(dp.to_vec(), d.to_vec()).expect("non-empty coefficient lists")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RunSummary<T> {
    pub start: Vec<T>,
    pub params: Vec<T>,
    pub score: T,
    pub n_evals: usize,
    pub n_iter: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SearchResult<T> {
    pub schedule: ControlSchedule<T>,
    pub params: Vec<T>,
    pub score: T,
    /// Every run in start order.
    pub runs: Vec<RunSummary<T>>,
}

/// Runs `n_runs` Powell searches from uniform random starts in `range` and
/// keeps the best. Starts are drawn up front from the seed, so the result
/// does not depend on the thread count.
pub fn multi_start<T, B>(
    build: B,
    n_params: usize,
    n_runs: usize,
    range: (f64, f64),
    cfg: &PowellConfig,
    objective: &Objective,
    seed: u64,
) -> Result<SearchResult<T>, OptimizeError>
where
    T: Real,
    B: Fn(&[T]) -> ControlSchedule<T> + Sync,
{
    cfg.validate()?;
    objective.validate()?;
    if n_runs == 0 {
        return Err(OptimizeError::InvalidConfig(
            "at least one run is required".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<T>> = (0..n_runs)
        .map(|_| {
            (0..n_params)
                .map(|_| T::lit(rng.random_range(range.0..=range.1)))
                .collect()
        })
        .collect();
    let runs: Vec<RunSummary<T>> = starts
        .into_par_iter()
        .map(|start| {
            let r = powell_min(|p: &[T]| -objective.score(&build(p)), &start, cfg)?;
            Ok(RunSummary {
                start,
                score: -r.fx,
                params: r.x,
                n_evals: r.n_evals,
                n_iter: r.n_iter,
            })
        })
        .collect::<Result<_, OptimizeError>>()?;
    let best = runs
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.score > runs[b].score { i } else { b });
    let params = runs[best].params.clone();
    Ok(SearchResult {
        schedule: build(&params),
        score: runs[best].score,
        params,
        runs,
    })
}

/// Best of `n_runs` Powell searches over a pair of order-`order`
/// polynomials with coefficients started uniformly in `[-20, 20]`, unless
/// `cfg.init_range` overrides the interval.
pub fn optimize_polynomial<T: Real>(
    objective: &Objective,
    order: usize,
    n_runs: usize,
    cfg: &PowellConfig,
    seed: u64,
) -> Result<SearchResult<T>, OptimizeError> {
    let range = cfg.init_range.unwrap_or(POLY_INIT_RANGE);
    multi_start(
        poly_schedule,
        2 * (order + 1),
        n_runs,
        range,
        cfg,
        objective,
        seed,
    )
}

/// Best of `cfg.restarts` Powell searches over an analytic family.
pub fn optimize_ansatz<T: Real>(
    objective: &Objective,
    family: AnsatzFamily,
    cfg: &PowellConfig,
    seed: u64,
) -> Result<SearchResult<T>, OptimizeError> {
    let range = cfg.init_range.unwrap_or(family.default_init_range());
    multi_start(
        |p: &[T]| family.schedule(p),
        family.n_params(),
        cfg.restarts,
        range,
        cfg,
        objective,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_of_builtin_protocol() {
        let s = ControlSchedule::ansatz1(5.11, -0.038, 21.51, 0.29);
        let free: f64 = Objective::sink_free(40.0).score(&s);
        let sink: f64 = Objective::with_sink(40.0).score(&s);
        assert!(free > 0.997);
        assert!(sink < free);
    }

    #[test]
    fn runaway_detunings_score_zero() {
        let s = ControlSchedule::ansatz1(5.0, -1.0, 80.0, 0.0);
        assert_eq!(Objective::sink_free(40.0).score::<f64>(&s), 0.0);
    }

    #[test]
    fn polynomial_layout() {
        let s = poly_schedule(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.eval(20.0, 40.0).unwrap(), (1.0, 3.0));
    }

    #[test]
    fn search_is_deterministic() {
        let cfg = PowellConfig {
            max_iter: 2,
            restarts: 2,
            ..PowellConfig::default()
        };
        let obj = Objective::sink_free(10.0);
        let a = optimize_ansatz::<f64>(&obj, AnsatzFamily::Ansatz1, &cfg, 3).unwrap();
        let b = optimize_ansatz::<f64>(&obj, AnsatzFamily::Ansatz1, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.runs.len(), 2);
        assert!(a
            .runs
            .iter()
            .all(|r| r.start.iter().all(|x| (-5.0..=5.0).contains(x))));
        assert!(a.runs.iter().all(|r| r.score
            >= Objective::sink_free(10.0).score(&AnsatzFamily::Ansatz1.schedule(&r.start))));
    }

    #[test]
    fn zero_runs_rejected() {
        let r = optimize_polynomial::<f64>(
            &Objective::sink_free(10.0),
            1,
            0,
            &PowellConfig::default(),
            0,
        );
        assert!(matches!(r, Err(OptimizeError::InvalidConfig(_))));
    }
}
