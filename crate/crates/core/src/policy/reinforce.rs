//! REINFORCE with a batch-mean baseline against the sink-augmented simulator.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::lstm::{Architecture, PolicyNetwork};
use super::PolicyError;
use crate::controls::{pwc_from_actions, ControlSchedule};
use crate::lindblad::{
    simulate_transfer, DensityMatrix, Level, Method, NoiseChannel, PropagationOptions,
};
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub n_batch: usize,
    pub n_epochs: usize,
    pub n_steps: usize,
    /// Protocol duration in units of `1/Omega_0`.
    pub total_time: f64,
    /// Half-ranges `(delta_p, delta)` that map normalized actions to detunings.
    pub ranges: (f64, f64),
    /// Gaussian standard deviations in normalized action units.
    pub sigma: (f64, f64),
    pub sink_rate: f64,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub architecture: Architecture,
    /// Half-width of the uniform weight initialization.
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_init_scale() -> f64 {
    0.1
}

/// Sink rate giving `Gamma T = 10`.
pub fn sink_rate_for(total_time: f64) -> f64 {
    10.0 / total_time
}

impl TrainConfig {
    /// Narrow detuning ranges: `|delta_p| <= 14`, `|delta| <= 0.2`, `T = 40`, 40 steps.
    pub fn restricted_range() -> Self {
        Self {
            n_batch: 50,
            n_epochs: 350,
            n_steps: 40,
            total_time: 40.0,
            ranges: (14.0, 0.2),
            sigma: (0.07, 0.07),
            sink_rate: sink_rate_for(40.0),
            adam: AdamConfig::default(),
            seed: 0,
            architecture: Architecture::default(),
            init_scale: default_init_scale(),
        }
    }

    /// Wide detuning ranges: both detunings in `[-50, 50]`, `T = 20`, 20 steps.
    pub fn wide_range() -> Self {
        Self {
            n_batch: 100,
            n_epochs: 350,
            n_steps: 20,
            total_time: 20.0,
            ranges: (50.0, 50.0),
            sigma: (0.001, 0.001),
            sink_rate: sink_rate_for(20.0),
            adam: AdamConfig::default(),
            seed: 0,
            architecture: Architecture::default(),
            init_scale: default_init_scale(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |msg: &str| Err(PolicyError::InvalidConfig(msg.to_string()));
        if self.n_batch == 0 {
            return bad("n_batch must be at least 1");
        }
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1");
        }
        if !(self.total_time >= 0.0 && self.total_time.is_finite()) {
            return bad("total_time must be finite and non-negative");
        }
        if !(self.sink_rate >= 0.0 && self.sink_rate.is_finite()) {
            return bad("sink_rate must be finite and non-negative");
        }
        if !(self.sigma.0 > 0.0 && self.sigma.1 > 0.0) {
            return bad("sigma must be positive");
        }
        if !(self.ranges.0 >= 0.0 && self.ranges.1 >= 0.0) {
            return bad("ranges must be non-negative");
        }
        if !(self.init_scale >= 0.0) {
            return bad("init_scale must be non-negative");
        }
        if self.adam.learning_rate <= 0.0 {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    /// Network inputs `t_i / T = i / n_steps`.
    pub fn input_times<T: Real>(&self) -> Vec<T> {
        (0..self.n_steps)
            .map(|i| T::lit(i as f64 / self.n_steps as f64))
            .collect()
    }
}

/// Draws `a ~ N(mean, sigma)` per component and clips to `[-1, 1]`.
pub fn sample_actions<T: Real, R: Rng + ?Sized>(
    means: &[(T, T)],
    sigma: (T, T),
    rng: &mut R,
) -> Vec<(T, T)> {
    let one = T::one();
    let mut z = || -> T { T::lit(StandardNormal.sample(rng)) };
    means
        .iter()
        .map(|&(m_dp, m_d)| {
            let a = m_dp + sigma.0 * z();
            let b = m_d + sigma.1 * z();
            (a.max(-one).min(one), b.max(-one).min(one))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReinforceLoss<T> {
    pub loss: T,
    pub baseline: T,
    /// `dC/dmu` per step, summed over the batch.
    pub d_means: Vec<(T, T)>,
}

/// `C = sum_j sum_i (R_j - b) |a_ji - mu_i|^2 / (2 sigma^2)` with `b` the
/// batch-mean reward, and its gradient with respect to the means.
pub fn reinforce_loss<T: Real>(
    rewards: &[T],
    actions: &[Vec<(T, T)>],
    means: &[(T, T)],
    sigma: (T, T),
) -> Result<ReinforceLoss<T>, PolicyError> {
    if rewards.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    if actions.len() != rewards.len() {
        return Err(PolicyError::LengthMismatch {
            expected: rewards.len(),
            got: actions.len(),
        });
    }
    if let Some(bad) = actions.iter().find(|a| a.len() != means.len()) {
        return Err(PolicyError::LengthMismatch {
            expected: means.len(),
            got: bad.len(),
        });
    }
    let n = T::from_usize(rewards.len()).unwrap();
    let baseline = rewards.iter().copied().sum::<T>() / n;
    let two = T::lit(2.0);
    let inv_var = (
        T::one() / (sigma.0 * sigma.0),
        T::one() / (sigma.1 * sigma.1),
    );
    let mut loss = T::zero();
    let mut d_means = vec![(T::zero(), T::zero()); means.len()];
    for (r, seq) in rewards.iter().zip(actions) {
        let adv = *r - baseline;
        for ((a, mu), g) in seq.iter().zip(means).zip(d_means.iter_mut()) {
            let (e0, e1) = (a.0 - mu.0, a.1 - mu.1);
            loss += adv * (e0 * e0 * inv_var.0 + e1 * e1 * inv_var.1) / two;
            g.0 -= adv * e0 * inv_var.0;
            g.1 -= adv * e1 * inv_var.1;
        }
    }
    Ok(ReinforceLoss {
        loss,
        baseline,
        d_means,
    })
}

/// Final target population of the four-level system (sink active) under
/// the piecewise-constant schedule encoded by the normalized actions.
pub fn rollout_reward<T: Real>(actions: &[(T, T)], config: &TrainConfig) -> Result<T, PolicyError> {
    let schedule = pwc_from_actions(actions, (T::lit(config.ranges.0), T::lit(config.ranges.1)))?;
    if config.total_time == 0.0 {
        return Ok(T::zero());
    }
    let channels = [NoiseChannel::sink(T::lit(config.sink_rate))?];
    let opts = PropagationOptions::default()
        .with_samples(2)
        .with_method(Method::Exact);
    let summary = simulate_transfer(
        &DensityMatrix::ground(4),
        &schedule,
        T::lit(config.total_time),
        &channels,
        &opts,
    )?;
    Ok(summary.final_state.population(Level::F))
}

/// Sink-free final target population of a schedule lasting `total_time`.
pub fn sink_free_transfer<T: Real>(
    schedule: &ControlSchedule<T>,
    total_time: f64,
) -> Result<T, PolicyError> {
    if total_time == 0.0 {
        return Ok(T::zero());
    }
    let opts = PropagationOptions::default().with_samples(2);
    let s = simulate_transfer(
        &DensityMatrix::ground(3),
        schedule,
        T::lit(total_time),
        &[],
        &opts,
    )?;
    Ok(s.final_target)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_reward: f64,
    pub max_reward: f64,
    pub baseline: f64,
    /// Reward of the deterministic policy (actions = means) before the update.
    pub greedy_reward: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub epochs: Vec<EpochStats>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub network: PolicyNetwork<T>,
    pub curve: LearningCurve,
    /// Greedy schedule with the highest training reward seen.
    pub best_schedule: ControlSchedule<T>,
    pub best_actions: Vec<(T, T)>,
    pub best_reward: T,
    /// Epoch at which `best_reward` was observed (`n_epochs` for the final network).
    pub best_epoch: usize,
    /// The best schedule re-evaluated on the three-level system without the sink.
    pub best_sink_free: T,
}

pub fn train<T: Real>(config: &TrainConfig) -> Result<TrainOutcome<T>, PolicyError> {
    train_with_progress(config, |_| {})
}

/// Training loop. Each epoch runs one forward pass, samples `n_batch`
/// action sequences, evaluates their rewards in parallel, and applies one
/// Adam step on the REINFORCE loss. `progress` sees every epoch's stats.
pub fn train_with_progress<T: Real>(
    config: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainOutcome<T>, PolicyError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sigma = (T::lit(config.sigma.0), T::lit(config.sigma.1));
    let mut network = PolicyNetwork::random(
        config.architecture,
        sigma,
        T::lit(config.init_scale),
        &mut rng,
    )?;
    let times: Vec<T> = config.input_times();
    let mut adam = Adam::new(config.adam, network.params().len());
    let mut curve = LearningCurve::default();
    let mut best: Option<(T, Vec<(T, T)>, usize)> = None;
    let mut consider = |reward: T, actions: &[(T, T)], epoch: usize| {
        if best.as_ref().is_none_or(|(r, _, _)| reward > *r) {
            best = Some((reward, actions.to_vec(), epoch));
        }
    };

    for epoch in 0..config.n_epochs {
        let cache = network.forward(&times)?;
        let means = cache.means().to_vec();
        let greedy = rollout_reward(&means, config)?;
        consider(greedy, &means, epoch);

        let batch: Vec<Vec<(T, T)>> = (0..config.n_batch)
            .map(|_| sample_actions(&means, sigma, &mut rng))
            .collect();
        let rewards: Vec<T> = batch
            .par_iter()
            .map(|a| rollout_reward(a, config))
            .collect::<Result<_, _>>()?;
        let lg = reinforce_loss(&rewards, &batch, &means, sigma)?;
        if !lg.loss.is_finite()
            || lg
                .d_means
                .iter()
                .any(|g| !(g.0.is_finite() && g.1.is_finite()))
        {
            return Err(PolicyError::Diverged {
                epoch,
                detail: format!("loss {}", lg.loss),
            });
        }
        let grad = network.backward(&cache, &lg.d_means)?;
        adam.step(network.params_mut(), &grad);
        if network.params().iter().any(|p| !p.is_finite()) {
            return Err(PolicyError::Diverged {
                epoch,
                detail: "non-finite parameters after update".into(),
            });
        }

        let max_reward = rewards.iter().copied().fold(T::neg_infinity(), T::max);
        let stats = EpochStats {
            epoch,
            mean_reward: lg.baseline.to_f64_lossy(),
            max_reward: max_reward.to_f64_lossy(),
            baseline: lg.baseline.to_f64_lossy(),
            greedy_reward: greedy.to_f64_lossy(),
            loss: lg.loss.to_f64_lossy(),
        };
        progress(&stats);
        curve.epochs.push(stats);
    }

    let final_means = network.means(&times)?;
    let final_reward = rollout_reward(&final_means, config)?;
    consider(final_reward, &final_means, config.n_epochs);

    let (best_reward, best_actions, best_epoch) = best.expect("at least one greedy evaluation");
    let best_schedule = pwc_from_actions(
        &best_actions,
        (T::lit(config.ranges.0), T::lit(config.ranges.1)),
    )?;
    let best_sink_free = sink_free_transfer(&best_schedule, config.total_time)?;
    Ok(TrainOutcome {
        network,
        curve,
        best_schedule,
        best_actions,
        best_reward,
        best_epoch,
        best_sink_free,
    })
}
