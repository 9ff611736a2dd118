//! Policy checkpoints as JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::policy::{PolicyNetwork, TrainConfig, TrainOutcome};

pub const CHECKPOINT_VERSION: u32 = 1;

/// One parameter block with its shape, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    /// Number of completed epochs.
    pub epoch: usize,
    pub seed: u64,
    pub sigma: (f64, f64),
    pub parameters: Vec<ParamArray>,
    pub best_reward: f64,
    pub best_actions: Vec<(f64, f64)>,
    /// Sink-free transfer of the best greedy schedule.
    pub best_sink_free: f64,
}

impl Checkpoint {
    pub fn from_outcome(config: &TrainConfig, outcome: &TrainOutcome<f64>) -> Self {
        let net = &outcome.network;
        let parameters = net
            .architecture()
            .blocks()
            .into_iter()
            .map(|b| ParamArray {
                values: net.params()[b.offset..b.offset + b.len()].to_vec(),
                name: b.name,
                shape: b.shape,
            })
            .collect();
        Self {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            epoch: outcome.curve.len(),
            seed: config.seed,
            sigma: net.sigma(),
            parameters,
            best_reward: outcome.best_reward,
            best_actions: outcome.best_actions.clone(),
            best_sink_free: outcome.best_sink_free,
        }
    }

    /// Rebuilds the network, checking every block's name and shape.
    pub fn network(&self) -> Result<PolicyNetwork<f64>, IoError> {
        let arch = self.config.architecture;
        let blocks = arch.blocks();
        if blocks.len() != self.parameters.len() {
            return Err(IoError::Config(format!(
                "checkpoint has {} parameter arrays, expected {}",
                self.parameters.len(),
                blocks.len()
            )));
        }
        let mut params = Vec::with_capacity(arch.n_params());
        for (b, p) in blocks.iter().zip(&self.parameters) {
            if b.name != p.name || b.shape != p.shape || p.values.len() != b.len() {
                return Err(IoError::Config(format!(
                    "parameter array {} has shape {:?} with {} values, expected {} with shape {:?}",
                    p.name,
                    p.shape,
                    p.values.len(),
                    b.name,
                    b.shape
                )));
            }
            params.extend_from_slice(&p.values);
        }
        PolicyNetwork::from_params(arch, params, self.sigma)
            .map_err(|e| IoError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let ck: Self = serde_json::from_str(text).map_err(|e| IoError::Config(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(IoError::Config(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        ck.network()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| IoError::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IoError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
