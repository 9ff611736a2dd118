//! JSON run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::protocols::resolve_protocol;
use super::IoError;
use crate::controls::ControlSchedule;
use crate::experiments::{Axis, Scenario};
use crate::optimizer::{AnsatzFamily, PowellConfig};
use crate::policy::{sink_rate_for, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    /// Protocol duration in units of `1/Omega_0`.
    pub total_time: f64,
    #[serde(default)]
    pub sink: bool,
    /// Sink rate; `None` means `10 / total_time`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sink_rate: Option<f64>,
    /// Samples written to trajectory files.
    #[serde(default = "default_samples")]
    pub n_samples: usize,
}

fn default_samples() -> usize {
    401
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            total_time: 40.0,
            sink: false,
            sink_rate: None,
            n_samples: default_samples(),
        }
    }
}

impl SystemSection {
    pub fn effective_sink_rate(&self) -> f64 {
        self.sink_rate
            .unwrap_or_else(|| sink_rate_for(self.total_time))
    }
}

/// A registry name or path, or an inline schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProtocolRef {
    Named(String),
    Inline(ControlSchedule<f64>),
}

impl ProtocolRef {
    pub fn resolve(&self, total_time: f64) -> Result<ControlSchedule<f64>, IoError> {
        match self {
            Self::Named(name) => resolve_protocol(name, total_time),
            Self::Inline(s) => {
                s.validate().map_err(|e| IoError::Config(e.to_string()))?;
                Ok(s.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeSection {
    #[serde(default)]
    pub powell: PowellConfig,
    #[serde(default = "default_family")]
    pub family: AnsatzFamily,
    /// Polynomial order for `optimize-poly`.
    #[serde(default = "default_order")]
    pub order: usize,
    /// Number of Powell runs for `optimize-poly`.
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    /// Detunings beyond this magnitude score zero.
    #[serde(default = "default_max_detuning")]
    pub max_detuning: f64,
}

fn default_family() -> AnsatzFamily {
    AnsatzFamily::Ansatz1
}

fn default_order() -> usize {
    5
}

fn default_runs() -> usize {
    10
}

fn default_max_detuning() -> f64 {
    1000.0
}

impl Default for OptimizeSection {
    fn default() -> Self {
        Self {
            powell: PowellConfig::default(),
            family: default_family(),
            order: default_order(),
            n_runs: default_runs(),
            max_detuning: default_max_detuning(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub scenario: Scenario,
    /// Grid axes; the scenario defaults apply when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<Axis>>,
    /// Overrides the scenario's sink default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_sink: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    /// Output path used when none is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IoError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            IoError::Config(m) => IoError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), IoError> {
        let bad = |m: String| Err(IoError::Config(m));
        let s = &self.system;
        if !(s.total_time >= 0.0 && s.total_time.is_finite()) {
            return bad("system.total_time must be finite and non-negative".into());
        }
        if let Some(r) = s.sink_rate {
            if !(r >= 0.0 && r.is_finite()) {
                return bad("system.sink_rate must be non-negative".into());
            }
        }
        if s.n_samples < 2 {
            return bad("system.n_samples must be at least 2".into());
        }
        if let Some(t) = &self.train {
            t.validate()
                .map_err(|e| IoError::Config(format!("train: {e}")))?;
            if t.n_epochs == 0 {
                return bad("train.n_epochs must be at least 1".into());
            }
        }
        if let Some(o) = &self.optimize {
            o.powell
                .validate()
                .map_err(|e| IoError::Config(format!("optimize.powell: {e}")))?;
            if o.n_runs == 0 {
                return bad("optimize.n_runs must be at least 1".into());
            }
            if !(o.max_detuning > 0.0) {
                return bad("optimize.max_detuning must be positive".into());
            }
        }
        if let Some(sw) = &self.sweep {
            for a in sw.axes.iter().flatten() {
                a.validate()
                    .map_err(|e| IoError::Config(format!("sweep: {e}")))?;
            }
        }
        if let Some(ProtocolRef::Inline(p)) = &self.protocol {
            p.validate()
                .map_err(|e| IoError::Config(format!("protocol: {e}")))?;
        }
        Ok(())
    }
}
