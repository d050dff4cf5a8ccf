use super::gemm::{gemm, View};
use super::Tensor;
use crate::error::{Error, Result};

/// 1-D cross-correlation over the time axis of a `[batch, time, in_channels]` tensor.
///
/// Weights follow the conventional `[out_channels, in_channels, kernel]` layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    padded: Vec<f64>,
    packed_w: Vec<f64>,
    batch: usize,
    padded_len: usize,
    out_len: usize,
    in_len: usize,
}

impl Conv1d {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Conv1d { in_channels, out_channels, kernel, stride: 1, padding: 0 }
    }

    pub fn out_len(&self, len: usize) -> Result<usize> {
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::invalid("conv1d kernel and stride must be positive"));
        }
        let padded = len + 2 * self.padding;
        if padded < self.kernel {
            return Err(Error::shape("conv1d", format!("padded length >= {}", self.kernel), padded));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    fn check_weights(&self, w: &Tensor, b: Option<&Tensor>) -> Result<()> {
        let want = [self.out_channels, self.in_channels, self.kernel];
        if w.shape() != want {
            return Err(Error::shape("conv1d weight", format!("{want:?}"), format!("{:?}", w.shape())));
        }
        if let Some(b) = b {
            if b.shape() != [self.out_channels] {
                return Err(Error::shape("conv1d bias", self.out_channels, format!("{:?}", b.shape())));
            }
        }
        Ok(())
    }

    /// Packs `[C_out, C_in, K]` into the `[K·C_in, C_out]` matrix used by the kernel.
    fn pack(&self, w: &Tensor) -> Vec<f64> {
        let (co, ci, k) = (self.out_channels, self.in_channels, self.kernel);
        let wd = w.data();
        let mut packed = vec![0.0; k * ci * co];
        for o in 0..co {
            for c in 0..ci {
                for t in 0..k {
                    packed[(t * ci + c) * co + o] = wd[(o * ci + c) * k + t];
                }
            }
        }
        packed
    }

    pub fn forward(&self, x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<(Tensor, Conv1dCache)> {
        let [batch, len, ch] = x.dims::<3>("conv1d")?;
        if ch != self.in_channels {
            return Err(Error::shape("conv1d input channels", self.in_channels, ch));
        }
        self.check_weights(w, b)?;
        let out_len = self.out_len(len)?;
        let (ci, co) = (self.in_channels, self.out_channels);
        let padded_len = len + 2 * self.padding;
        let padded = if self.padding == 0 {
            x.data().to_vec()
        } else {
            let mut p = vec![0.0; batch * padded_len * ci];
            for s in 0..batch {
                let dst = (s * padded_len + self.padding) * ci;
                p[dst..dst + len * ci].copy_from_slice(&x.data()[s * len * ci..(s + 1) * len * ci]);
            }
            p
        };
        let packed_w = self.pack(w);
        let mut out = vec![0.0; batch * out_len * co];
        if let Some(b) = b {
            for row in out.chunks_exact_mut(co) {
                row.copy_from_slice(b.data());
            }
        }
        let kc = self.kernel * ci;
        for s in 0..batch {
            let src = &padded[s * padded_len * ci..(s + 1) * padded_len * ci];
            // Overlapping rows: window t starts `stride·C_in` values after window t-1.
            let rows = View { data: src, rows: out_len, cols: kc, rs: self.stride * ci, cs: 1 };
            gemm(
                1.0,
                rows,
                View::rm(&packed_w, kc, co),
                1.0,
                &mut out[s * out_len * co..(s + 1) * out_len * co],
                co,
            );
        }
        let cache = Conv1dCache { padded, packed_w, batch, padded_len, out_len, in_len: len };
        Ok((Tensor::new(vec![batch, out_len, co], out)?, cache))
    }

    /// Returns `(dx, dw, db)`; `db` is summed even when the layer has no bias.
    pub fn backward(&self, cache: &Conv1dCache, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let (ci, co, k) = (self.in_channels, self.out_channels, self.kernel);
        let Conv1dCache { batch, padded_len, out_len, in_len, .. } = *cache;
        if dy.shape() != [batch, out_len, co] {
            return Err(Error::shape("conv1d backward", format!("{:?}", [batch, out_len, co]), format!("{:?}", dy.shape())));
        }
        let kc = k * ci;
        let dyd = dy.data();
        let mut dpacked = vec![0.0; kc * co];
        let mut dpadded = vec![0.0; batch * padded_len * ci];
        let mut cols = vec![0.0; out_len * kc];
        for s in 0..batch {
            let src = &cache.padded[s * padded_len * ci..(s + 1) * padded_len * ci];
            let dys = &dyd[s * out_len * co..(s + 1) * out_len * co];
            let rows_t = View { data: src, rows: kc, cols: out_len, rs: 1, cs: self.stride * ci };
            gemm(1.0, rows_t, View::rm(dys, out_len, co), 1.0, &mut dpacked, co);
            gemm(1.0, View::rm(dys, out_len, co), View::rm_t(&cache.packed_w, kc, co), 0.0, &mut cols, kc);
            let dst = &mut dpadded[s * padded_len * ci..(s + 1) * padded_len * ci];
            for t in 0..out_len {
                let base = t * self.stride * ci;
                for (d, c) in dst[base..base + kc].iter_mut().zip(&cols[t * kc..(t + 1) * kc]) {
                    *d += c;
                }
            }
        }
        let mut dw = vec![0.0; co * ci * k];
        for o in 0..co {
            for c in 0..ci {
                for t in 0..k {
                    dw[(o * ci + c) * k + t] = dpacked[(t * ci + c) * co + o];
                }
            }
        }
        let mut db = vec![0.0; co];
        for row in dyd.chunks_exact(co) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        let dx = if self.padding == 0 {
            dpadded
        } else {
            let mut dx = vec![0.0; batch * in_len * ci];
            for s in 0..batch {
                let src = (s * padded_len + self.padding) * ci;
                dx[s * in_len * ci..(s + 1) * in_len * ci].copy_from_slice(&dpadded[src..src + in_len * ci]);
            }
            dx
        };
        Ok((
            Tensor::new(vec![batch, in_len, ci], dx)?,
            Tensor::new(vec![co, ci, k], dw)?,
            Tensor::new(vec![co], db)?,
        ))
    }
}
