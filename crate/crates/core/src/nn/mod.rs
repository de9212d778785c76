//! Graph attention regressor (GATv2 layers), trained with exact gradients.

mod adam;
mod batch;
mod checkpoint;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FEATURE_DIM, LABEL_DIM};

pub use adam::Adam;
pub use batch::GraphBatch;
pub use checkpoint::{Checkpoint, CHECKPOINT_SCHEMA};
pub use model::{attention_forward, mse_loss, ForwardCache, LayerSlots, Mode, Model, ParamLayout, BN_EPS};
pub use train::{design_errors, infer, predict_labels, train, EpochMetrics, Sample, TrainConfig, TrainReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub out_dim: usize,
    pub dropout_p: f64,
    pub leaky_slope: f64,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            in_dim: FEATURE_DIM,
            hidden: 64,
            layers: 6,
            heads: 8,
            head_dim: 8,
            out_dim: LABEL_DIM,
            dropout_p: 0.1,
            leaky_slope: 0.2,
            lr: 0.01,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Structural(m));
        if self.heads * self.head_dim != self.hidden {
            return bad(format!("{} heads x {} != hidden {}", self.heads, self.head_dim, self.hidden));
        }
        if self.out_dim != LABEL_DIM {
            return bad(format!("out_dim must be {LABEL_DIM}, got {}", self.out_dim));
        }
        if self.in_dim == 0 || self.hidden == 0 {
            return bad("zero-width layer".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Domain(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        if !(self.lr >= 0.0) || !self.leaky_slope.is_finite() {
            return Err(Error::Domain("lr must be >= 0 and leaky_slope finite".into()));
        }
        Ok(())
    }
}
