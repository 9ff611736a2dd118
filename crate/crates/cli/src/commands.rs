use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use popxfer::controls::{ControlError, ControlSchedule};
use popxfer::experiments::{self, Axis, ExperimentError, Scenario, SweepResult, SweepSpec};
use popxfer::io::{self as pio, Checkpoint, IoError, ProtocolRef, RunConfig};
use popxfer::lindblad::{
    propagate_schedule_with, DensityMatrix, Level, LindbladError, NoiseChannel, PropagationOptions,
};
use popxfer::optimizer::{
    optimize_ansatz, optimize_polynomial, AnsatzFamily, Objective, OptimizeError, SearchResult,
};
use popxfer::policy::{sink_rate_for, train_with_progress, PolicyError, TrainConfig};
use thiserror::Error;

use crate::{Cli, Command, Common, Family, Preset, SweepKind};

const DEFAULT_PROTOCOL: &str = "protocol1";
const THREADS_VAR: &str = "QCTRL_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 1,
            Self::Numerical(_) => 2,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<ControlError> for CliError {
    fn from(e: ControlError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<LindbladError> for CliError {
    fn from(e: LindbladError) -> Self {
        match e {
            LindbladError::InvalidRate(_)
            | LindbladError::InvalidDim(_)
            | LindbladError::InvalidTime(_)
            | LindbladError::InvalidCoupling(..)
            | LindbladError::InvalidDephasingLevel(_)
            | LindbladError::SinkNeedsSinkLevel => Self::Config(e.to_string()),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<PolicyError> for CliError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::InvalidConfig(_)
            | PolicyError::InvalidArchitecture
            | PolicyError::InvalidSigma
            | PolicyError::ParameterCount { .. }
            | PolicyError::Control(_) => Self::Config(e.to_string()),
            PolicyError::Simulation(inner) => inner.into(),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::InvalidConfig(_) => Self::Config(e.to_string()),
            other => Self::Numerical(other.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidSpec(m) => Self::Config(m),
            ExperimentError::Simulation { coords, source } => match CliError::from(source) {
                Self::Numerical(m) => Self::Numerical(format!("at {coords:?}: {m}")),
                config => config,
            },
        }
    }
}

/// Command-line flags merged over the configuration file.
struct Settings {
    config: RunConfig,
    out: Option<PathBuf>,
    protocol: Option<String>,
    sink_flag: Option<bool>,
}

impl Settings {
    fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let c = &cli.common;
        let mut config = match &c.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(t) = c.total_time {
            if !(t.is_finite() && t >= 0.0) {
                return Err(CliError::Config(format!(
                    "--T must be finite and non-negative, got {t}"
                )));
            }
            config.system.total_time = t;
        }
        if let Some(s) = c.sink {
            config.system.sink = s.into();
        }
        if let Some(seed) = c.seed {
            config.seed = seed;
        }
        let out = c
            .out
            .clone()
            .or_else(|| config.out.as_ref().map(PathBuf::from));
        Ok(Self {
            config,
            out,
            protocol: c.protocol.clone(),
            sink_flag: c.sink.map(Into::into),
        })
    }

    fn total_time(&self) -> f64 {
        self.config.system.total_time
    }

    fn sink(&self) -> bool {
        self.config.system.sink
    }

    fn protocol(&self) -> Result<ControlSchedule<f64>, CliError> {
        let t = self.total_time();
        let schedule = match (&self.protocol, &self.config.protocol) {
            (Some(name), _) => pio::resolve_protocol(name, t)?,
            (None, Some(p)) => p.resolve(t)?,
            (None, None) => ProtocolRef::Named(DEFAULT_PROTOCOL.into()).resolve(t)?,
        };
        Ok(schedule)
    }

    fn write_output<F>(&self, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> io::Result<()>,
    {
        write_to(self.out.as_deref(), write)
    }

    /// Sibling of the output file with the given suffix, if there is an output file.
    fn sibling(&self, suffix: &str) -> Option<PathBuf> {
        let out = self.out.as_ref()?;
        let stem = out.file_stem().unwrap_or_default().to_string_lossy();
        Some(out.with_file_name(format!("{stem}{suffix}")))
    }
}

fn write_to<F>(path: Option<&Path>, write: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    let fail = |e: io::Error| {
        let target = path.map_or("stdout".into(), |p| p.display().to_string());
        CliError::Config(format!("cannot write {target}: {e}"))
    };
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(fail)?);
            write(&mut w).and_then(|_| w.flush()).map_err(fail)
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w).and_then(|_| w.flush()).map_err(fail)
        }
    }
}

fn save_schedule(path: &Path, schedule: &ControlSchedule<f64>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(schedule).expect("schedule serializes");
    write_to(Some(path), |w| writeln!(w, "{text}"))?;
    eprintln!("best schedule written to {}", path.display());
    Ok(())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "{THREADS_VAR} must be a positive integer, got {raw:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot configure {n} threads: {e}")))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let settings = Settings::from_cli(&cli)?;
    match cli.command {
        Command::Simulate => simulate(&settings),
        Command::Train {
            preset,
            epochs,
            checkpoint,
        } => train(&settings, &cli.common, preset, epochs, checkpoint),
        Command::OptimizePoly { order, runs } => optimize_poly(&settings, order, runs),
        Command::OptimizeAnsatz { family, restarts } => {
            optimize_family(&settings, family, restarts)
        }
        Command::Sweep { scenario } => sweep(&settings, scenario),
        Command::ScanTime {
            t_min,
            t_max,
            points,
        } => scan_time(&settings, Axis::linear("T", t_min, t_max, points)),
        Command::RamanScan {
            dp_min,
            dp_max,
            points,
        } => raman_scan(&settings, Axis::linear("delta_p", dp_min, dp_max, points)),
        Command::CheckpointInfo { path } => checkpoint_info(&settings, &path),
    }
}

fn simulate(s: &Settings) -> Result<(), CliError> {
    let schedule = s.protocol()?;
    let sys = &s.config.system;
    let (dim, channels) = if sys.sink {
        (4, vec![NoiseChannel::sink(sys.effective_sink_rate())?])
    } else {
        (3, vec![])
    };
    let opts = PropagationOptions::default().with_samples(sys.n_samples);
    let traj = propagate_schedule_with(
        &DensityMatrix::ground(dim),
        &schedule,
        sys.total_time,
        &channels,
        &opts,
    )?;
    eprintln!(
        "T = {}: final rho_ff = {:.6}, max rho_ee = {:.6}",
        sys.total_time,
        traj.final_target(),
        traj.max_excited()
    );
    s.write_output(|w| pio::write_trajectory(w, &traj))
}

fn train(
    s: &Settings,
    common: &Common,
    preset: Preset,
    epochs: Option<usize>,
    checkpoint: Option<PathBuf>,
) -> Result<(), CliError> {
    let mut cfg = s.config.train.clone().unwrap_or_else(|| match preset {
        Preset::Restricted => TrainConfig::restricted_range(),
        Preset::Wide => TrainConfig::wide_range(),
    });
    if common.seed.is_some() || s.config.train.is_none() {
        cfg.seed = s.config.seed;
    }
    if let Some(t) = common.total_time {
        cfg.total_time = t;
        cfg.sink_rate = sink_rate_for(t);
    }
    if s.sink_flag == Some(false) {
        cfg.sink_rate = 0.0;
    }
    if let Some(n) = epochs {
        cfg.n_epochs = n;
    }
    cfg.validate()?;
    let outcome = train_with_progress::<f64>(&cfg, |e| {
        if e.epoch % 25 == 0 {
            eprintln!(
                "epoch {:>4}: mean reward {:.5}, greedy {:.5}",
                e.epoch, e.mean_reward, e.greedy_reward
            );
        }
    })?;
    eprintln!(
        "best greedy reward {:.6} at epoch {}; sink-free transfer {:.6}",
        outcome.best_reward, outcome.best_epoch, outcome.best_sink_free
    );
    s.write_output(|w| pio::write_learning_curve(w, &outcome.curve))?;
    let ckpt_path = checkpoint
        .or_else(|| s.sibling(".checkpoint.json"))
        .unwrap_or_else(|| PathBuf::from("checkpoint.json"));
    Checkpoint::from_outcome(&cfg, &outcome).save(&ckpt_path)?;
    eprintln!("checkpoint written to {}", ckpt_path.display());
    if let Some(p) = s.sibling(".schedule.json") {
        save_schedule(&p, &outcome.best_schedule)?;
    }
    Ok(())
}

fn objective(s: &Settings) -> Result<Objective, CliError> {
    let t = s.total_time();
    let mut obj = if s.sink() {
        Objective::with_sink(t)
    } else {
        Objective::sink_free(t)
    };
    obj.sink_rate = s.config.system.sink_rate;
    if let Some(o) = &s.config.optimize {
        obj.max_detuning = o.max_detuning;
    }
    obj.validate()?;
    Ok(obj)
}

fn report_search(s: &Settings, result: &SearchResult<f64>) -> Result<(), CliError> {
    eprintln!(
        "best rho_ff(T) = {:.8} over {} runs",
        result.score,
        result.runs.len()
    );
    s.write_output(|w| pio::write_runs(w, &result.runs))?;
    if let Some(p) = s.sibling(".schedule.json") {
        save_schedule(&p, &result.schedule)?;
    }
    Ok(())
}

fn optimize_poly(s: &Settings, order: Option<usize>, runs: Option<usize>) -> Result<(), CliError> {
    let section = s.config.optimize.clone().unwrap_or_default();
    let order = order.unwrap_or(section.order);
    let runs = runs.unwrap_or(section.n_runs);
    if runs == 0 {
        return Err(CliError::Config("--runs must be at least 1".into()));
    }
    let result =
        optimize_polynomial::<f64>(&objective(s)?, order, runs, &section.powell, s.config.seed)?;
    report_search(s, &result)
}

fn optimize_family(
    s: &Settings,
    family: Option<Family>,
    restarts: Option<usize>,
) -> Result<(), CliError> {
    let section = s.config.optimize.clone().unwrap_or_default();
    let family = match family {
        Some(Family::Ansatz1) => AnsatzFamily::Ansatz1,
        Some(Family::ParityPolys) => AnsatzFamily::ParityPolys,
        None => section.family,
    };
    let mut powell = section.powell;
    if let Some(r) = restarts {
        powell.restarts = r;
    }
    let result = optimize_ansatz::<f64>(&objective(s)?, family, &powell, s.config.seed)?;
    report_search(s, &result)
}

fn sweep(s: &Settings, kind: Option<SweepKind>) -> Result<(), CliError> {
    let section = s.config.sweep.as_ref();
    let scenario = match kind {
        Some(SweepKind::Lambda) => Scenario::Lambda,
        Some(SweepKind::Ladder) => Scenario::Ladder,
        Some(SweepKind::DephasingG) | Some(SweepKind::Dephasing) => Scenario::Dephasing(Level::G),
        Some(SweepKind::DephasingE) => Scenario::Dephasing(Level::E),
        Some(SweepKind::DephasingF) => Scenario::Dephasing(Level::F),
        Some(SweepKind::Stray) => Scenario::Stray,
        None => section.map_or(Scenario::Lambda, |sw| sw.scenario),
    };
    if matches!(scenario, Scenario::TimeScan | Scenario::RamanBaseline) {
        return Err(CliError::Config(
            "use scan-time or raman-scan for this scenario".into(),
        ));
    }
    let protocol = s.protocol()?;
    let mut spec = SweepSpec::with_defaults(protocol, s.total_time(), scenario);
    if let Some(axes) = section.and_then(|sw| sw.axes.clone()) {
        spec.axes = axes;
    }
    if let Some(sink) = s.sink_flag.or(section.and_then(|sw| sw.include_sink)) {
        spec.include_sink = sink;
    }
    spec.sink_rate = s.config.system.sink_rate;
    spec.n_samples = s.config.system.n_samples;
    let result = if kind == Some(SweepKind::Dephasing) {
        spec.validate()?;
        experiments::sweep_dephasing_all(
            &spec.protocol,
            spec.total_time,
            &spec.axes[0],
            spec.include_sink,
        )?
    } else {
        experiments::run_sweep(&spec)?
    };
    summarize(&result);
    s.write_output(|w| pio::write_sweep(w, &result))
}

fn summarize(result: &SweepResult) {
    let finals = result.final_values();
    let min = finals.iter().copied().fold(f64::INFINITY, f64::min);
    eprintln!(
        "{} grid points: final rho_ff in [{:.6}, {:.6}]",
        finals.len(),
        min,
        result.max_final()
    );
}

fn scan_time(s: &Settings, axis: Axis) -> Result<(), CliError> {
    let protocol = s.protocol()?;
    let result = experiments::scan_total_time(&protocol, &axis, s.sink())?;
    summarize(&result);
    s.write_output(|w| pio::write_sweep(w, &result))
}

fn raman_scan(s: &Settings, axis: Axis) -> Result<(), CliError> {
    let protocol = s.protocol()?;
    let result = experiments::raman_baseline(s.total_time(), &axis, &protocol)?;
    let best = result
        .points
        .iter()
        .map(|p| p.max_rho_ff)
        .fold(f64::NEG_INFINITY, f64::max);
    eprintln!(
        "reference final rho_ff = {:.6}; best constant-detuning max rho_ff = {:.6}",
        result.reference.unwrap_or(f64::NAN),
        best
    );
    s.write_output(|w| pio::write_sweep(w, &result))
}

fn checkpoint_info(s: &Settings, path: &Path) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(path)?;
    let net = ckpt.network()?;
    let shapes: Vec<String> = ckpt
        .parameters
        .iter()
        .map(|p| format!("{}{:?}", p.name, p.shape))
        .collect();
    let summary = serde_json::json!({
        "version": ckpt.version,
        "epoch": ckpt.epoch,
        "seed": ckpt.seed,
        "n_parameters": net.params().len(),
        "parameters": shapes,
        "best_reward": ckpt.best_reward,
        "best_sink_free": ckpt.best_sink_free,
        "n_steps": ckpt.best_actions.len(),
        "total_time": ckpt.config.total_time,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.write_output(|w| writeln!(w, "{text}"))
}
