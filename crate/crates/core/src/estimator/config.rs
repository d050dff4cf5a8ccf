use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: usize,
}

/// What sits between the convolutional stack and the shared dense layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    /// Bidirectional LSTM read out at its final states.
    BiLstm,
    /// Flatten + tanh dense layer sized to the BiLSTM parameter budget.
    FlattenDense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub sensors: usize,
    pub conv: Vec<ConvBlock>,
    pub pool: usize,
    pub hidden: usize,
    pub dense: usize,
    pub dropout: f64,
    pub speed_classes: usize,
    pub direction_classes: usize,
    pub backbone: Backbone,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            seq_len: 64,
            sensors: 3,
            conv: vec![ConvBlock { filters: 32, kernel: 5 }, ConvBlock { filters: 64, kernel: 3 }],
            pool: 2,
            hidden: 64,
            dense: 64,
            dropout: 0.3,
            speed_classes: 5,
            direction_classes: 2,
            backbone: Backbone::BiLstm,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for end-to-end gradient checks.
    pub fn tiny() -> Self {
        ModelConfig {
            seq_len: 8,
            sensors: 3,
            conv: vec![ConvBlock { filters: 4, kernel: 3 }, ConvBlock { filters: 4, kernel: 2 }],
            pool: 2,
            hidden: 4,
            dense: 6,
            dropout: 0.3,
            speed_classes: 5,
            direction_classes: 2,
            backbone: Backbone::BiLstm,
        }
    }

    /// `(length, channels)` after the convolution/pooling stack.
    pub fn conv_output(&self) -> Result<(usize, usize)> {
        let mut len = self.seq_len;
        let mut ch = self.sensors;
        for (i, b) in self.conv.iter().enumerate() {
            if b.kernel == 0 || b.filters == 0 {
                return Err(Error::invalid(format!("conv block {i} has zero kernel or filters")));
            }
            if len < b.kernel {
                return Err(Error::invalid(format!("sequence of length {len} too short for kernel {} in block {i}", b.kernel)));
            }
            len = len - b.kernel + 1;
            if len < self.pool {
                return Err(Error::invalid(format!("sequence of length {len} too short for pooling in block {i}")));
            }
            len = (len - self.pool) / self.pool + 1;
            ch = b.filters;
        }
        Ok((len, ch))
    }

    /// Scalars in the two LSTM directions (one bias vector per direction).
    pub fn bilstm_param_count(&self) -> Result<usize> {
        let (_, ch) = self.conv_output()?;
        Ok(2 * 4 * self.hidden * (ch + self.hidden + 1))
    }

    /// Width of the flatten replacement whose parameter count is closest to the BiLSTM's.
    pub fn flatten_units(&self) -> Result<usize> {
        let (len, ch) = self.conv_output()?;
        let per_unit = len * ch + 1;
        let budget = self.bilstm_param_count()?;
        Ok(((budget as f64 / per_unit as f64).round() as usize).max(1))
    }

    /// Width of the representation fed to dropout and the shared dense layer.
    pub fn feature_width(&self) -> Result<usize> {
        match self.backbone {
            Backbone::BiLstm => Ok(2 * self.hidden),
            Backbone::FlattenDense => self.flatten_units(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seq_len == 0 || self.sensors == 0 || self.pool == 0 || self.hidden == 0 || self.dense == 0 {
            return Err(Error::invalid("model dimensions must be positive"));
        }
        if self.speed_classes < 2 || self.direction_classes < 2 {
            return Err(Error::invalid("classification heads need at least two classes"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        let (len, _) = self.conv_output()?;
        if len < 1 {
            return Err(Error::invalid("no time steps left after pooling"));
        }
        Ok(())
    }

    pub fn with_backbone(&self, backbone: Backbone) -> Self {
        ModelConfig { backbone, ..self.clone() }
    }
}

/// Loss weights `(λ1, λ2, λ3)` for displacement, speed and direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskWeights {
    pub displacement: f64,
    pub speed: f64,
    pub direction: f64,
}

pub const WEIGHT_BOUNDS: (f64, f64) = (0.01, 10.0);

impl Default for TaskWeights {
    fn default() -> Self {
        TaskWeights { displacement: 1.0, speed: 1.0, direction: 1.0 }
    }
}

impl TaskWeights {
    pub fn new(displacement: f64, speed: f64, direction: f64) -> Self {
        TaskWeights { displacement, speed, direction }
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        TaskWeights::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.displacement, self.speed, self.direction]
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = WEIGHT_BOUNDS;
        if self.to_array().iter().any(|w| !(lo..=hi).contains(w)) {
            return Err(Error::invalid(format!("task weights {:?} outside [{lo}, {hi}]", self.to_array())));
        }
        Ok(())
    }
}
