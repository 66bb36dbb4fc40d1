use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::GridConfig;

/// Residual image branch. Block `i` has `channels[i]` filters; every block
/// after the first halves the spatial resolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnConfig {
    pub blocks: usize,
    pub channels: Vec<usize>,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            blocks: 3,
            channels: vec![16, 32, 64],
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.channels.len() != self.blocks || self.channels.contains(&0) {
            return Err(Error::Config(format!(
                "cnn needs at least one block and one positive channel count per block: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Dilated causal sequence branch: `levels` residual blocks of two
/// convolutions each, block `i` dilated by `dilation_base^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcnConfig {
    pub in_channels: usize,
    pub hidden_units: usize,
    pub kernel: usize,
    pub dilation_base: usize,
    pub levels: usize,
    pub dropout: f64,
    pub seq_len: usize,
}

impl Default for TcnConfig {
    fn default() -> Self {
        TcnConfig {
            in_channels: 3,
            hidden_units: 25,
            kernel: 3,
            dilation_base: 2,
            levels: 4,
            dropout: 0.05,
            seq_len: 300,
        }
    }
}

impl TcnConfig {
    pub fn dilations(&self) -> Vec<usize> {
        (0..self.levels as u32).map(|i| self.dilation_base.pow(i)).collect()
    }

    pub fn conv_layers(&self) -> usize {
        2 * self.levels
    }

    /// Input positions visible from one output position.
    pub fn receptive_field(&self) -> usize {
        1 + self.dilations().iter().map(|d| 2 * (self.kernel - 1) * d).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.hidden_units == 0 || self.kernel == 0 || self.levels == 0 || self.seq_len == 0 {
            return Err(Error::Config(format!("tcn sizes must be positive: {self:?}")));
        }
        if self.dilation_base == 0 {
            return Err(Error::Config("tcn dilation base must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("tcn dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// Architecture of the fused model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub grid: GridConfig,
    pub classes: usize,
    pub cnn: CnnConfig,
    pub tcn: TcnConfig,
}

impl ModelConfig {
    pub fn new(grid: GridConfig, classes: usize) -> Self {
        ModelConfig {
            grid,
            classes,
            cnn: CnnConfig::default(),
            tcn: TcnConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.cnn.validate()?;
        self.tcn.validate()?;
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least two classes, got {}", self.classes)));
        }
        Ok(())
    }
}
