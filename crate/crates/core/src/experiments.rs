//! Robustness and comparison studies as parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controls::ControlSchedule;
use crate::lindblad::{
    simulate_transfer, DensityMatrix, Level, LindbladError, NoiseChannel, PropagationOptions,
};
use crate::policy::sink_rate_for;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid sweep: {0}")]
    InvalidSpec(String),
    #[error("simulation failed at {coords:?}: {source}")]
    Simulation {
        coords: Vec<f64>,
        #[source]
        source: LindbladError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

/// Named grid of `n_points` values from `min` to `max` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub n_points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl Axis {
    pub fn linear(name: &str, min: f64, max: f64, n_points: usize) -> Self {
        Self {
            name: name.to_string(),
            min,
            max,
            n_points,
            spacing: Spacing::Linear,
        }
    }

    pub fn log(name: &str, min: f64, max: f64, n_points: usize) -> Self {
        Self {
            spacing: Spacing::Log,
            ..Self::linear(name, min, max, n_points)
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::InvalidSpec(m));
        if self.n_points == 0 {
            return bad(format!("axis {} has no points", self.name));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return bad(format!("axis {} needs finite min <= max", self.name));
        }
        if self.n_points == 1 && self.min != self.max {
            return bad(format!(
                "axis {} with one point needs min == max",
                self.name
            ));
        }
        if self.spacing == Spacing::Log && self.min <= 0.0 {
            return bad(format!("log axis {} needs positive bounds", self.name));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.n_points;
        if n == 1 {
            return vec![self.min];
        }
        let frac = |i: usize| i as f64 / (n - 1) as f64;
        (0..n)
            .map(|i| match self.spacing {
                Spacing::Linear => {
                    if i == n - 1 {
                        self.max
                    } else {
                        self.min + (self.max - self.min) * frac(i)
                    }
                }
                Spacing::Log => {
                    if i == n - 1 {
                        self.max
                    } else {
                        (self.min.ln() + (self.max.ln() - self.min.ln()) * frac(i)).exp()
                    }
                }
            })
            .collect()
    }
}

/// What the sweep axes control.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Axis 0: `gamma_eg`.
    Lambda,
    /// Axis 0: `gamma_eg`, axis 1: `gamma_fe`.
    Ladder,
    /// Axis 0: dephasing rate of the given level.
    Dephasing(Level),
    /// Axis 0: stray `delta_p`, axis 1: stray `delta`.
    Stray,
    /// Axis 0: total time `T`, protocol stretched.
    TimeScan,
    /// Axis 0: constant `delta_p` with `delta = 0`; records the maximum over time of `rho_ff`.
    RamanBaseline,
}

impl Scenario {
    fn n_axes(self) -> usize {
        match self {
            Self::Ladder | Self::Stray => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub protocol: ControlSchedule<f64>,
    pub total_time: f64,
    pub axes: Vec<Axis>,
    pub scenario: Scenario,
    #[serde(default)]
    pub include_sink: bool,
    /// Sink rate; `None` means `10 / T` at each point's duration.
    #[serde(default)]
    pub sink_rate: Option<f64>,
    /// Samples per trajectory used for the maxima.
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

fn default_samples() -> usize {
    401
}

/// Default grid for `gamma_eg` in the Lambda sweep.
pub fn default_lambda_axis() -> Axis {
    Axis::linear("gamma_eg", 0.0, 0.5, 21)
}

/// Default 21 x 21 Ladder grid.
pub fn default_ladder_axes() -> Vec<Axis> {
    vec![
        Axis::linear("gamma_eg", 0.0, 0.5, 21),
        Axis::linear("gamma_fe", 0.0, 0.05, 21),
    ]
}

pub fn default_dephasing_axis() -> Axis {
    Axis::linear("rate", 0.0, 0.2, 21)
}

pub fn default_stray_axes() -> Vec<Axis> {
    vec![
        Axis::linear("stray_dp", -2.0, 2.0, 21),
        Axis::linear("stray_d", -0.2, 0.2, 21),
    ]
}

pub fn default_time_axis() -> Axis {
    Axis::linear("T", 20.0, 80.0, 61)
}

/// Constant single-photon detunings in the Raman regime `delta_p >> Omega_0`,
/// taken as `delta_p` from 10 to 50.
pub fn default_raman_axis() -> Axis {
    Axis::linear("delta_p", 10.0, 50.0, 41)
}

impl SweepSpec {
    pub fn new(
        protocol: ControlSchedule<f64>,
        total_time: f64,
        scenario: Scenario,
        axes: Vec<Axis>,
    ) -> Self {
        Self {
            protocol,
            total_time,
            axes,
            scenario,
            include_sink: scenario == Scenario::Stray,
            sink_rate: None,
            n_samples: default_samples(),
        }
    }

    /// Spec with the default grid and sink setting for the scenario.
    pub fn with_defaults(
        protocol: ControlSchedule<f64>,
        total_time: f64,
        scenario: Scenario,
    ) -> Self {
        let axes = match scenario {
            Scenario::Lambda => vec![default_lambda_axis()],
            Scenario::Ladder => default_ladder_axes(),
            Scenario::Dephasing(_) => vec![default_dephasing_axis()],
            Scenario::Stray => default_stray_axes(),
            Scenario::TimeScan => vec![default_time_axis()],
            Scenario::RamanBaseline => vec![default_raman_axis()],
        };
        Self::new(protocol, total_time, scenario, axes)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidSpec(m.to_string()));
        if self.axes.len() != self.scenario.n_axes() {
            return Err(ExperimentError::InvalidSpec(format!(
                "{:?} needs {} axes, got {}",
                self.scenario,
                self.scenario.n_axes(),
                self.axes.len()
            )));
        }
        for a in &self.axes {
            a.validate()?;
        }
        if !(self.total_time > 0.0 && self.total_time.is_finite()) {
            return bad("total_time must be positive and finite");
        }
        if let Some(r) = self.sink_rate {
            if !(r >= 0.0 && r.is_finite()) {
                return bad("sink_rate must be non-negative");
            }
        }
        if self.n_samples < 2 {
            return bad("n_samples must be at least 2");
        }
        let rates_axis = match self.scenario {
            Scenario::Lambda | Scenario::Ladder | Scenario::Dephasing(_) => true,
            Scenario::TimeScan => {
                if self.axes[0].min <= 0.0 {
                    return bad("total times must be positive");
                }
                false
            }
            _ => false,
        };
        if rates_axis && self.axes.iter().any(|a| a.min < 0.0) {
            return bad("rates must be non-negative");
        }
        if let Scenario::Dephasing(Level::S) = self.scenario {
            return bad("dephasing applies to g, e or f");
        }
        self.protocol
            .validate()
            .map_err(|e| ExperimentError::InvalidSpec(e.to_string()))
    }

    /// Grid coordinates in row-major order (last axis fastest).
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let values: Vec<Vec<f64>> = self.axes.iter().map(Axis::values).collect();
        let mut out = vec![Vec::new()];
        for vals in &values {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    vals.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub coords: Vec<f64>,
    pub final_rho_ff: f64,
    pub max_rho_ee: f64,
    /// Largest sampled `rho_ff(t)`.
    pub max_rho_ff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub scenario: Scenario,
    pub axis_names: Vec<String>,
    pub points: Vec<SweepPoint>,
    /// Reference final population (the Raman comparison protocol).
    pub reference: Option<f64>,
}

impl SweepResult {
    pub fn final_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.final_rho_ff).collect()
    }

    pub fn max_final(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.final_rho_ff)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Point whose coordinates all lie within `1e-12` of `coords`.
    pub fn at(&self, coords: &[f64]) -> Option<&SweepPoint> {
        self.points.iter().find(|p| {
            p.coords.len() == coords.len()
                && p.coords
                    .iter()
                    .zip(coords)
                    .all(|(a, b)| (a - b).abs() <= 1e-12)
        })
    }
}

struct PointSetup {
    schedule: ControlSchedule<f64>,
    total: f64,
    channels: Vec<NoiseChannel<f64>>,
}

fn setup(spec: &SweepSpec, coords: &[f64]) -> Result<PointSetup, LindbladError> {
    let mut schedule = spec.protocol.clone();
    let mut total = spec.total_time;
    let mut channels = Vec::new();
    match spec.scenario {
        Scenario::Lambda => channels.push(NoiseChannel::decay_eg(coords[0])?),
        Scenario::Ladder => {
            channels.push(NoiseChannel::decay_eg(coords[0])?);
            channels.push(NoiseChannel::decay_fe(coords[1])?);
        }
        Scenario::Dephasing(level) => channels.push(NoiseChannel::dephase(level, coords[0])?),
        Scenario::Stray => {
            schedule = schedule.with_stray(coords[0], coords[1]);
        }
        Scenario::TimeScan => total = coords[0],
        Scenario::RamanBaseline => {
            schedule = ControlSchedule::constant_raman(coords[0])
                .with_stray(spec.protocol.stray.0, spec.protocol.stray.1);
        }
    }
    channels.retain(|c| c.rate > 0.0);
    if spec.include_sink {
        let rate = spec.sink_rate.unwrap_or_else(|| sink_rate_for(total));
        channels.push(NoiseChannel::sink(rate)?);
    }
    Ok(PointSetup {
        schedule,
        total,
        channels,
    })
}

fn evaluate(spec: &SweepSpec, coords: &[f64]) -> Result<SweepPoint, LindbladError> {
    let p = setup(spec, coords)?;
    let dim = if spec.include_sink { 4 } else { 3 };
    let opts = PropagationOptions::default().with_samples(spec.n_samples);
    let s = simulate_transfer(
        &DensityMatrix::ground(dim),
        &p.schedule,
        p.total,
        &p.channels,
        &opts,
    )?;
    Ok(SweepPoint {
        coords: coords.to_vec(),
        final_rho_ff: s.final_target,
        max_rho_ee: s.max_excited,
        max_rho_ff: s.max_target,
    })
}

/// Evaluates every grid point of `spec` in parallel. Results are in grid
/// order regardless of scheduling.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    spec.validate()?;
    let points = spec
        .grid()
        .into_par_iter()
        .map(|coords| {
            evaluate(spec, &coords).map_err(|source| ExperimentError::Simulation { coords, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult {
        scenario: spec.scenario,
        axis_names: spec.axes.iter().map(|a| a.name.clone()).collect(),
        points,
        reference: None,
    })
}

fn require(spec: &SweepSpec, ok: bool, what: &str) -> Result<(), ExperimentError> {
    if ok {
        Ok(())
    } else {
        Err(ExperimentError::InvalidSpec(format!(
            "{what} cannot run a {:?} sweep",
            spec.scenario
        )))
    }
}

/// Energy-relaxation sweep: Lambda (`gamma_eg` only) or Ladder (`gamma_eg` x `gamma_fe`).
pub fn sweep_decay(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    require(
        spec,
        matches!(spec.scenario, Scenario::Lambda | Scenario::Ladder),
        "sweep_decay",
    )?;
    run_sweep(spec)
}

/// Pure-dephasing sweep of one level.
pub fn sweep_dephasing(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    require(
        spec,
        matches!(spec.scenario, Scenario::Dephasing(_)),
        "sweep_dephasing",
    )?;
    run_sweep(spec)
}

/// One dephasing curve per level, merged into a grid with a leading
/// `level` coordinate (0 = g, 1 = e, 2 = f).
pub fn sweep_dephasing_all(
    protocol: &ControlSchedule<f64>,
    total_time: f64,
    rate_axis: &Axis,
    include_sink: bool,
) -> Result<SweepResult, ExperimentError> {
    let mut points = Vec::new();
    for level in Level::SYSTEM {
        let mut spec = SweepSpec::new(
            protocol.clone(),
            total_time,
            Scenario::Dephasing(level),
            vec![rate_axis.clone()],
        );
        spec.include_sink = include_sink;
        for mut p in sweep_dephasing(&spec)?.points {
            p.coords.insert(0, level.index() as f64);
            points.push(p);
        }
    }
    Ok(SweepResult {
        scenario: Scenario::Dephasing(Level::G),
        axis_names: vec!["level".into(), rate_axis.name.clone()],
        points,
        reference: None,
    })
}

/// Quasi-static detuning offsets over a `(stray_dp, stray_d)` grid.
pub fn sweep_stray(spec: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    require(spec, spec.scenario == Scenario::Stray, "sweep_stray")?;
    run_sweep(spec)
}

/// Runs the protocol stretched to each total time on the grid.
pub fn scan_total_time(
    protocol: &ControlSchedule<f64>,
    time_axis: &Axis,
    include_sink: bool,
) -> Result<SweepResult, ExperimentError> {
    let mut spec = SweepSpec::new(
        protocol.clone(),
        time_axis.max,
        Scenario::TimeScan,
        vec![time_axis.clone()],
    );
    spec.include_sink = include_sink;
    run_sweep(&spec)
}

/// Constant-detuning baseline: for each `delta_p` on the grid, with
/// `delta = 0`, the largest `rho_ff(t)` over the protocol. The reference is
/// the final population of `reference` at the same duration.
pub fn raman_baseline(
    total_time: f64,
    dp_axis: &Axis,
    reference: &ControlSchedule<f64>,
) -> Result<SweepResult, ExperimentError> {
    let spec = SweepSpec::new(
        reference.clone(),
        total_time,
        Scenario::RamanBaseline,
        vec![dp_axis.clone()],
    );
    let mut result = run_sweep(&spec)?;
    let opts = PropagationOptions::default().with_samples(2);
    let r = simulate_transfer(&DensityMatrix::ground(3), reference, total_time, &[], &opts)
        .map_err(|source| ExperimentError::Simulation {
            coords: vec![],
            source,
        })?;
    result.reference = Some(r.final_target);
    Ok(result)
}
