use serde::{Deserialize, Serialize};

use super::{Mode, Tensor};
use crate::error::{Error, Result};

/// Per-channel batch normalization over `[batch, time, channels]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNorm1d {
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        RunningStats { mean: vec![0.0; channels], var: vec![1.0; channels] }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    mode: Mode,
    shape: [usize; 3],
}

impl BatchNorm1d {
    pub fn new(channels: usize) -> Self {
        BatchNorm1d { channels, eps: 1e-5, momentum: 0.1 }
    }

    /// In train mode `running` is updated in place when `update_running` is set.
    pub fn forward(
        &self,
        x: &Tensor,
        gamma: &Tensor,
        beta: &Tensor,
        running: &mut RunningStats,
        mode: Mode,
        update_running: bool,
    ) -> Result<(Tensor, BatchNormCache)> {
        let [b, l, c] = x.dims::<3>("batchnorm1d")?;
        if c != self.channels || gamma.len() != c || beta.len() != c || running.mean.len() != c {
            return Err(Error::shape("batchnorm1d channels", self.channels, c));
        }
        let n = b * l;
        let xd = x.data();
        let (mean, var) = match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::invalid("batchnorm1d needs batch·length > 1 in train mode"));
                }
                let mut mean = vec![0.0; c];
                for row in xd.chunks_exact(c) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; c];
                for row in xd.chunks_exact(c) {
                    for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                if update_running {
                    let unbias = n as f64 / (n as f64 - 1.0);
                    for ch in 0..c {
                        running.mean[ch] = (1.0 - self.momentum) * running.mean[ch] + self.momentum * mean[ch];
                        running.var[ch] = (1.0 - self.momentum) * running.var[ch] + self.momentum * var[ch] * unbias;
                    }
                }
                (mean, var)
            }
            Mode::Eval => (running.mean.clone(), running.var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for (i, (row, hrow)) in xd.chunks_exact(c).zip(xhat.chunks_exact_mut(c)).enumerate() {
            for ch in 0..c {
                let h = (row[ch] - mean[ch]) * inv_std[ch];
                hrow[ch] = h;
                out[i * c + ch] = gamma.data()[ch] * h + beta.data()[ch];
            }
        }
        let cache = BatchNormCache { xhat, inv_std, mode, shape: [b, l, c] };
        Ok((Tensor::new(vec![b, l, c], out)?, cache))
    }

    /// Returns `(dx, dgamma, dbeta)`.
    pub fn backward(&self, cache: &BatchNormCache, gamma: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let [b, l, c] = cache.shape;
        if dy.shape() != cache.shape {
            return Err(Error::shape("batchnorm1d backward", format!("{:?}", cache.shape), format!("{:?}", dy.shape())));
        }
        let n = (b * l) as f64;
        let g = gamma.data();
        let dyd = dy.data();
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for (row, hrow) in dyd.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for ch in 0..c {
                dgamma[ch] += row[ch] * hrow[ch];
                dbeta[ch] += row[ch];
            }
        }
        let mut dx = vec![0.0; dyd.len()];
        match cache.mode {
            Mode::Train => {
                // dx = γ·σ⁻¹/n · (n·dy − Σdy − x̂·Σ(dy·x̂))
                for (i, (row, hrow)) in dyd.chunks_exact(c).zip(cache.xhat.chunks_exact(c)).enumerate() {
                    for ch in 0..c {
                        dx[i * c + ch] = g[ch] * cache.inv_std[ch] / n
                            * (n * row[ch] - dbeta[ch] - hrow[ch] * dgamma[ch]);
                    }
                }
            }
            Mode::Eval => {
                for (i, row) in dyd.chunks_exact(c).enumerate() {
                    for ch in 0..c {
                        dx[i * c + ch] = row[ch] * g[ch] * cache.inv_std[ch];
                    }
                }
            }
        }
        Ok((
            Tensor::new(vec![b, l, c], dx)?,
            Tensor::new(vec![c], dgamma)?,
            Tensor::new(vec![c], dbeta)?,
        ))
    }
}
