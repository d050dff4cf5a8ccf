//! Unidirectional and bidirectional LSTM over `[batch, time, features]`.
//!
//! Gate order inside the `4H` axis is input, forget, candidate, output.
//! Initial hidden and cell states are zero.

use super::dense::sigmoid;
use super::gemm::{gemm, View};
use super::Tensor;
use crate::error::{Error, Result};

/// Borrowed weights of one direction: `w_ih [4H, F]`, `w_hh [4H, H]`, `bias [4H]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams<'a> {
    pub w_ih: &'a Tensor,
    pub w_hh: &'a Tensor,
    pub bias: &'a Tensor,
}

impl LstmParams<'_> {
    fn dims(&self) -> Result<(usize, usize)> {
        let [g, f] = self.w_ih.dims::<2>("lstm w_ih")?;
        let h = g / 4;
        if g != 4 * h || h == 0 {
            return Err(Error::shape("lstm w_ih rows", "4·hidden", g));
        }
        if self.w_hh.shape() != [g, h] || self.bias.shape() != [g] {
            return Err(Error::shape(
                "lstm w_hh/bias",
                format!("[{g}, {h}] and [{g}]"),
                format!("{:?} and {:?}", self.w_hh.shape(), self.bias.shape()),
            ));
        }
        Ok((f, h))
    }
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    reverse: bool,
    batch: usize,
    steps: usize,
    features: usize,
    hidden: usize,
    x: Vec<f64>,
    /// Post-activation gates per processing step: `[step][batch][4H]`.
    gates: Vec<f64>,
    cell: Vec<f64>,
    tanh_cell: Vec<f64>,
    hidden_out: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    pub forward: LstmCache,
    pub backward: LstmCache,
}

/// Gradients of one direction, same shapes as [`LstmParams`].
pub type LstmGrads = (Tensor, Tensor, Tensor);

impl LstmCache {
    fn time_of(&self, step: usize) -> usize {
        if self.reverse {
            self.steps - 1 - step
        } else {
            step
        }
    }
}

/// Runs one direction; `reverse` consumes the sequence from the last step to the first.
/// Output `[B, T, H]` is indexed by original time.
pub fn lstm_forward(x: &Tensor, p: LstmParams<'_>, reverse: bool) -> Result<(Tensor, LstmCache)> {
    let [b, t, f] = x.dims::<3>("lstm input")?;
    let (pf, h) = p.dims()?;
    if pf != f {
        return Err(Error::shape("lstm input features", pf, f));
    }
    if t == 0 {
        return Err(Error::invalid("lstm needs at least one time step"));
    }
    let g4 = 4 * h;
    // Input projections for every (sample, time) at once.
    let mut z = vec![0.0; b * t * g4];
    gemm(1.0, View::rm(x.data(), b * t, f), View::rm_t(p.w_ih.data(), g4, f), 0.0, &mut z, g4);

    let mut gates = vec![0.0; t * b * g4];
    let mut cell = vec![0.0; t * b * h];
    let mut tanh_cell = vec![0.0; t * b * h];
    let mut hidden_out = vec![0.0; t * b * h];
    let mut out = vec![0.0; b * t * h];
    let mut pre = vec![0.0; b * g4];
    let bias = p.bias.data();

    for step in 0..t {
        let time = if reverse { t - 1 - step } else { step };
        for s in 0..b {
            let src = &z[(s * t + time) * g4..(s * t + time + 1) * g4];
            for ((d, zv), bv) in pre[s * g4..(s + 1) * g4].iter_mut().zip(src).zip(bias) {
                *d = zv + bv;
            }
        }
        if step > 0 {
            let prev = &hidden_out[(step - 1) * b * h..step * b * h];
            gemm(1.0, View::rm(prev, b, h), View::rm_t(p.w_hh.data(), g4, h), 1.0, &mut pre, g4);
        }
        for s in 0..b {
            let pg = &pre[s * g4..(s + 1) * g4];
            let base = (step * b + s) * h;
            for j in 0..h {
                let i_g = sigmoid(pg[j]);
                let f_g = sigmoid(pg[h + j]);
                let c_g = pg[2 * h + j].tanh();
                let o_g = sigmoid(pg[3 * h + j]);
                let c_prev = if step > 0 { cell[((step - 1) * b + s) * h + j] } else { 0.0 };
                let c = f_g * c_prev + i_g * c_g;
                let tc = c.tanh();
                let hv = o_g * tc;
                let gb = (step * b + s) * g4;
                gates[gb + j] = i_g;
                gates[gb + h + j] = f_g;
                gates[gb + 2 * h + j] = c_g;
                gates[gb + 3 * h + j] = o_g;
                cell[base + j] = c;
                tanh_cell[base + j] = tc;
                hidden_out[base + j] = hv;
                out[(s * t + time) * h + j] = hv;
            }
        }
    }
    let cache = LstmCache {
        reverse,
        batch: b,
        steps: t,
        features: f,
        hidden: h,
        x: x.data().to_vec(),
        gates,
        cell,
        tanh_cell,
        hidden_out,
    };
    Ok((Tensor::new(vec![b, t, h], out)?, cache))
}

/// Backpropagation through time. `dy` has the forward output's shape.
pub fn lstm_backward(cache: &LstmCache, p: LstmParams<'_>, dy: &Tensor) -> Result<(Tensor, LstmGrads)> {
    let LstmCache { batch: b, steps: t, features: f, hidden: h, .. } = *cache;
    if dy.shape() != [b, t, h] {
        return Err(Error::shape("lstm backward", format!("{:?}", [b, t, h]), format!("{:?}", dy.shape())));
    }
    let g4 = 4 * h;
    let dyd = dy.data();
    let mut dz = vec![0.0; b * t * g4];
    let mut dw_hh = vec![0.0; g4 * h];
    let mut dbias = vec![0.0; g4];
    let mut dh_next = vec![0.0; b * h];
    let mut dc_next = vec![0.0; b * h];
    let mut dgate = vec![0.0; b * g4];

    for step in (0..t).rev() {
        let time = cache.time_of(step);
        for s in 0..b {
            let base = (step * b + s) * h;
            let gb = (step * b + s) * g4;
            for j in 0..h {
                let i_g = cache.gates[gb + j];
                let f_g = cache.gates[gb + h + j];
                let c_g = cache.gates[gb + 2 * h + j];
                let o_g = cache.gates[gb + 3 * h + j];
                let tc = cache.tanh_cell[base + j];
                let c_prev = if step > 0 { cache.cell[((step - 1) * b + s) * h + j] } else { 0.0 };
                let dh = dyd[(s * t + time) * h + j] + dh_next[s * h + j];
                let d_o = dh * tc;
                let dc = dc_next[s * h + j] + dh * o_g * (1.0 - tc * tc);
                let d_i = dc * c_g;
                let d_c = dc * i_g;
                let d_f = dc * c_prev;
                dc_next[s * h + j] = dc * f_g;
                let row = &mut dgate[s * g4..(s + 1) * g4];
                row[j] = d_i * i_g * (1.0 - i_g);
                row[h + j] = d_f * f_g * (1.0 - f_g);
                row[2 * h + j] = d_c * (1.0 - c_g * c_g);
                row[3 * h + j] = d_o * o_g * (1.0 - o_g);
            }
        }
        for s in 0..b {
            let row = &dgate[s * g4..(s + 1) * g4];
            dz[(s * t + time) * g4..(s * t + time + 1) * g4].copy_from_slice(row);
            for (d, v) in dbias.iter_mut().zip(row) {
                *d += v;
            }
        }
        if step > 0 {
            let prev = &cache.hidden_out[(step - 1) * b * h..step * b * h];
            gemm(1.0, View::rm_t(&dgate, b, g4), View::rm(prev, b, h), 1.0, &mut dw_hh, h);
            gemm(1.0, View::rm(&dgate, b, g4), View::rm(p.w_hh.data(), g4, h), 0.0, &mut dh_next, h);
        }
    }
    let mut dw_ih = vec![0.0; g4 * f];
    gemm(1.0, View::rm_t(&dz, b * t, g4), View::rm(&cache.x, b * t, f), 0.0, &mut dw_ih, f);
    let mut dx = vec![0.0; b * t * f];
    gemm(1.0, View::rm(&dz, b * t, g4), View::rm(p.w_ih.data(), g4, f), 0.0, &mut dx, f);
    Ok((
        Tensor::new(vec![b, t, f], dx)?,
        (
            Tensor::new(vec![g4, f], dw_ih)?,
            Tensor::new(vec![g4, h], dw_hh)?,
            Tensor::new(vec![g4], dbias)?,
        ),
    ))
}

/// Forward and reversed passes concatenated per time step: `[B, T, 2H]`.
pub fn bilstm_forward(x: &Tensor, fwd: LstmParams<'_>, bwd: LstmParams<'_>) -> Result<(Tensor, BiLstmCache)> {
    let (yf, cf) = lstm_forward(x, fwd, false)?;
    let (yb, cb) = lstm_forward(x, bwd, true)?;
    let [b, t, h] = yf.dims::<3>("bilstm")?;
    let mut out = vec![0.0; b * t * 2 * h];
    for (row, (a, c)) in out.chunks_exact_mut(2 * h).zip(yf.data().chunks_exact(h).zip(yb.data().chunks_exact(h))) {
        row[..h].copy_from_slice(a);
        row[h..].copy_from_slice(c);
    }
    Ok((Tensor::new(vec![b, t, 2 * h], out)?, BiLstmCache { forward: cf, backward: cb }))
}

pub fn bilstm_backward(
    cache: &BiLstmCache,
    fwd: LstmParams<'_>,
    bwd: LstmParams<'_>,
    dy: &Tensor,
) -> Result<(Tensor, LstmGrads, LstmGrads)> {
    let [b, t, h2] = dy.dims::<3>("bilstm backward")?;
    let h = h2 / 2;
    let mut df = vec![0.0; b * t * h];
    let mut db = vec![0.0; b * t * h];
    for ((row, a), c) in dy.data().chunks_exact(h2).zip(df.chunks_exact_mut(h)).zip(db.chunks_exact_mut(h)) {
        a.copy_from_slice(&row[..h]);
        c.copy_from_slice(&row[h..]);
    }
    let (dxf, gf) = lstm_backward(&cache.forward, fwd, &Tensor::new(vec![b, t, h], df)?)?;
    let (dxb, gb) = lstm_backward(&cache.backward, bwd, &Tensor::new(vec![b, t, h], db)?)?;
    let mut dx = dxf.into_data();
    for (d, v) in dx.iter_mut().zip(dxb.data()) {
        *d += v;
    }
    let f = cache.forward.features;
    Ok((Tensor::new(vec![b, t, f], dx)?, gf, gb))
}
