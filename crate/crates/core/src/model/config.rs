use crate::error::{contract, Result};
use serde::{Deserialize, Serialize};

/// Architecture and capacity limits of the in-context classifier.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Maximum feature count after encoding; inputs are zero-padded to this
    /// width.
    pub d_max: usize,
    /// Maximum class count the head can express.
    pub c_max: usize,
    /// Maximum context length a single forward pass accepts.
    pub l_ctx_max: usize,
}

impl Default for ModelConfig {
    /// Desk-scale defaults: small enough to prior-fit on a CPU, large enough
    /// to show the underfitting-with-complexity behaviour.
    fn default() -> Self {
        ModelConfig {
            n_layers: 3,
            d_model: 64,
            n_heads: 4,
            d_ff: 128,
            d_max: 20,
            c_max: 10,
            l_ctx_max: 512,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(contract(format!(
                "d_model={} must be divisible by n_heads={}",
                self.d_model, self.n_heads
            )));
        }
        if self.n_layers == 0 || self.d_ff == 0 {
            return Err(contract("n_layers and d_ff must be positive"));
        }
        if self.d_max == 0 || self.c_max == 0 || self.l_ctx_max == 0 {
            return Err(contract("d_max, c_max and l_ctx_max must be positive"));
        }
        Ok(())
    }

    /// Embedding-table row used for query positions ("label absent").
    pub fn sentinel_label(&self) -> u32 {
        self.c_max as u32
    }
}
