use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bilevel::BilevelTrainer;
use crate::error::{io_err, CoreError, Result};
use crate::search::{EdgeId, Supernet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub id: usize,
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeState {
    pub edge: EdgeId,
    pub alive: Vec<bool>,
}

/// Complete search state: parameters, live candidates and optimizer
/// moments. Restores into a network built from the same space and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: Vec<ParamState>,
    pub edges: Vec<EdgeState>,
    pub trainer: BilevelTrainer,
}

impl Checkpoint {
    pub fn capture(net: &Supernet, trainer: &BilevelTrainer) -> Result<Self> {
        let params = net
            .params()
            .into_iter()
            .map(|p| ParamState {
                id: p.id(),
                name: p.name().to_string(),
                shape: p.tensor().shape().to_vec(),
                values: p.values().to_vec(),
            })
            .collect();
        let edges = net
            .edge_ids()
            .into_iter()
            .map(|id| {
                Ok(EdgeState {
                    edge: id,
                    alive: net.edge(id)?.alive().to_vec(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            params,
            edges,
            trainer: trainer.clone(),
        })
    }

    /// Writes the saved values into `net` and returns the optimizer state.
    pub fn restore(&self, net: &mut Supernet) -> Result<BilevelTrainer> {
        let mut params = net.params_mut();
        if params.len() != self.params.len() {
            return Err(CoreError::Dimension(format!(
                "checkpoint has {} parameters, network has {}",
                self.params.len(),
                params.len()
            )));
        }
        for (p, saved) in params.iter_mut().zip(&self.params) {
            if p.id() != saved.id || p.name() != saved.name || p.tensor().shape() != saved.shape.as_slice() {
                return Err(CoreError::Dimension(format!(
                    "checkpoint parameter `{}` does not match `{}`",
                    saved.name,
                    p.name()
                )));
            }
            p.tensor_mut().set_data(saved.values.clone())?;
        }
        for state in &self.edges {
            let edge = net.edge_mut(state.edge)?;
            if edge.len() != state.alive.len() {
                return Err(CoreError::Dimension(format!("edge {} changed size", state.edge)));
            }
            // revive first so the last-candidate guard never trips
            for i in 0..state.alive.len() {
                edge.set_alive(i, true)?;
            }
            for (i, alive) in state.alive.iter().enumerate() {
                if !alive {
                    edge.set_alive(i, false)?;
                }
            }
        }
        Ok(self.trainer.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }
}
