use super::Tensor;
use crate::error::{Error, Result};

/// Max pooling over the time axis of `[batch, time, channels]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool1d {
    pub window: usize,
    pub stride: usize,
}

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    /// Flat input index of each output's argmax.
    argmax: Vec<usize>,
    in_shape: [usize; 3],
}

impl MaxPool1d {
    pub fn new(window: usize) -> Self {
        MaxPool1d { window, stride: window }
    }

    pub fn out_len(&self, len: usize) -> Result<usize> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::invalid("maxpool1d window and stride must be positive"));
        }
        if len < self.window {
            return Err(Error::shape("maxpool1d", format!("length >= {}", self.window), len));
        }
        Ok((len - self.window) / self.stride + 1)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
        let [b, l, c] = x.dims::<3>("maxpool1d")?;
        let out_len = self.out_len(l)?;
        let xd = x.data();
        let mut out = vec![0.0; b * out_len * c];
        let mut argmax = vec![0; out.len()];
        for s in 0..b {
            for t in 0..out_len {
                for ch in 0..c {
                    let start = (s * l + t * self.stride) * c + ch;
                    let (mut best, mut best_idx) = (xd[start], start);
                    for w in 1..self.window {
                        let idx = start + w * c;
                        // strict `>` keeps the first index on ties
                        if xd[idx] > best {
                            best = xd[idx];
                            best_idx = idx;
                        }
                    }
                    let o = (s * out_len + t) * c + ch;
                    out[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        Ok((Tensor::new(vec![b, out_len, c], out)?, MaxPoolCache { argmax, in_shape: [b, l, c] }))
    }

    pub fn backward(&self, cache: &MaxPoolCache, dy: &Tensor) -> Result<Tensor> {
        if dy.len() != cache.argmax.len() {
            return Err(Error::shape("maxpool1d backward", cache.argmax.len(), dy.len()));
        }
        let mut dx = vec![0.0; cache.in_shape.iter().product()];
        for (g, &idx) in dy.data().iter().zip(&cache.argmax) {
            dx[idx] += g;
        }
        Tensor::new(cache.in_shape.to_vec(), dx)
    }
}
