//! Training cost: mean squared error of the network over a fixed set of rows.

use crate::error::{Error, Result};
use crate::mlp::{batch_forward, Matrix, MlpTopology};
use crate::optim::Objective;

pub struct MseObjective {
    topology: MlpTopology,
    features: Matrix,
    targets: Vec<f64>,
}

impl MseObjective {
    pub fn new(topology: MlpTopology, features: Matrix, targets: Vec<f64>) -> Result<Self> {
        if features.cols() != topology.input_dim() {
            return Err(Error::Shape(format!(
                "features have {} columns, topology expects {}",
                features.cols(),
                topology.input_dim()
            )));
        }
        if features.rows() != targets.len() || targets.is_empty() {
            return Err(Error::Shape(format!(
                "{} feature rows against {} targets",
                features.rows(),
                targets.len()
            )));
        }
        Ok(Self {
            topology,
            features,
            targets,
        })
    }

    pub fn dim(&self) -> usize {
        self.topology.param_count()
    }

    pub fn topology(&self) -> &MlpTopology {
        &self.topology
    }
}

impl Objective for MseObjective {
    fn cost(&self, params: &[f64]) -> f64 {
        match batch_forward(params, &self.topology, &self.features) {
            Ok(out) => {
                let sum: f64 = out
                    .iter()
                    .zip(&self.targets)
                    .map(|(o, t)| (t - o) * (t - o))
                    .sum();
                sum / self.targets.len() as f64
            }
            // surfaces as an objective error naming the position
            Err(_) => f64::NAN,
        }
    }
}
