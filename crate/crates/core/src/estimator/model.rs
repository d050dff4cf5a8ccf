//! The CNN-BiLSTM multi-output network as a fixed sequence of layers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Backbone, ModelConfig};
use crate::error::{Error, Result};
use crate::tensor::{
    bilstm_backward, bilstm_forward, dense_backward, dense_forward, relu, relu_backward, softmax_rows, tanh_backward,
    tanh_inplace, BatchNorm1d, BatchNormCache, BiLstmCache, Conv1d, Conv1dCache, DropoutMask, LstmParams, MaxPool1d,
    MaxPoolCache, Mode, ParameterSet, RunningStats, Tensor,
};

/// How a forward pass treats batch norm and dropout.
pub enum Pass<'a> {
    /// Batch statistics, fresh dropout mask drawn from the generator.
    Train(&'a mut ChaCha8Rng),
    /// Batch statistics with a caller-supplied dropout mask; used for gradient checks.
    Frozen(&'a DropoutMask),
    /// Running statistics, no dropout.
    Eval,
}

#[derive(Debug, Clone, Copy)]
struct ConvIdx {
    weight: usize,
    gamma: usize,
    beta: usize,
}

#[derive(Debug, Clone, Copy)]
struct LstmIdx {
    w_ih: usize,
    w_hh: usize,
    bias: usize,
}

#[derive(Debug, Clone, Copy)]
struct DenseIdx {
    weight: usize,
    bias: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    conv: Vec<ConvIdx>,
    lstm: Option<[LstmIdx; 2]>,
    flatten: Option<DenseIdx>,
    shared: DenseIdx,
    regression: DenseIdx,
    speed: DenseIdx,
    direction: DenseIdx,
}

/// Raw network outputs for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    /// Displacement estimate in `[−1, 1]`, one per sample.
    pub x_hat: Vec<f64>,
    pub speed_logits: Tensor,
    pub direction_logits: Tensor,
}

/// Loss gradients with respect to [`Outputs`].
#[derive(Debug, Clone)]
pub struct OutputGrads {
    pub x_hat: Vec<f64>,
    pub speed_logits: Tensor,
    pub direction_logits: Tensor,
}

/// Per-sample decoded estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    pub x_hat: f64,
    pub speed_probs: Vec<f64>,
    pub dir_probs: Vec<f64>,
}

struct BlockTape {
    conv: Conv1dCache,
    bn: BatchNormCache,
    activated: Tensor,
    pool: MaxPoolCache,
}

enum BackboneTape {
    BiLstm { cache: BiLstmCache, steps: usize },
    Flatten { input: Tensor, output: Tensor },
}

/// Everything the backward pass needs from one forward pass.
pub struct Tape {
    blocks: Vec<BlockTape>,
    backbone: BackboneTape,
    pooled_shape: [usize; 3],
    dropout: Option<DropoutMask>,
    dropped: Tensor,
    shared: Tensor,
    x_hat: Tensor,
    /// Running statistics after this pass (unchanged in eval and frozen passes).
    pub running: Vec<RunningStats>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterSet,
    pub bn_stats: Vec<RunningStats>,
    layout: Layout,
}

fn kaiming_uniform(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-bound..bound)).collect()).expect("shape")
}

impl Model {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParameterSet::new();
        let mut conv = Vec::new();
        let mut bn_stats = Vec::new();
        let mut ch = config.sensors;
        for (i, b) in config.conv.iter().enumerate() {
            let weight = ps.add(
                format!("conv{i}.weight"),
                kaiming_uniform(&mut rng, vec![b.filters, ch, b.kernel], ch * b.kernel),
                true,
            );
            let gamma = ps.add(format!("bn{i}.gamma"), Tensor::filled(vec![b.filters], 1.0), true);
            let beta = ps.add(format!("bn{i}.beta"), Tensor::zeros(vec![b.filters]), true);
            conv.push(ConvIdx { weight, gamma, beta });
            bn_stats.push(RunningStats::new(b.filters));
            ch = b.filters;
        }
        let (len, ch) = config.conv_output()?;
        let (lstm, flatten) = match config.backbone {
            Backbone::BiLstm => {
                let h = config.hidden;
                let bound = 1.0 / (h as f64).sqrt();
                let mut dir = |name: &str, ps: &mut ParameterSet| {
                    let mut uni = |shape: Vec<usize>| {
                        let n = shape.iter().product();
                        Tensor::new(shape, (0..n).map(|_| rng.random_range(-bound..bound)).collect()).expect("shape")
                    };
                    let w_ih = uni(vec![4 * h, ch]);
                    let w_hh = uni(vec![4 * h, h]);
                    let mut bias = Tensor::zeros(vec![4 * h]);
                    bias.data_mut()[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
                    LstmIdx {
                        w_ih: ps.add(format!("{name}.w_ih"), w_ih, true),
                        w_hh: ps.add(format!("{name}.w_hh"), w_hh, true),
                        bias: ps.add(format!("{name}.bias"), bias, true),
                    }
                };
                let f = dir("lstm_fwd", &mut ps);
                let b = dir("lstm_bwd", &mut ps);
                (Some([f, b]), None)
            }
            Backbone::FlattenDense => {
                let units = config.flatten_units()?;
                let fan_in = len * ch;
                let weight = ps.add("flatten.weight", kaiming_uniform(&mut rng, vec![units, fan_in], fan_in), true);
                let bias = ps.add("flatten.bias", Tensor::zeros(vec![units]), true);
                (None, Some(DenseIdx { weight, bias }))
            }
        };
        let mut dense = |name: &str, out: usize, inp: usize, ps: &mut ParameterSet| DenseIdx {
            weight: ps.add(format!("{name}.weight"), kaiming_uniform(&mut rng, vec![out, inp], inp), true),
            bias: ps.add(format!("{name}.bias"), Tensor::zeros(vec![out]), true),
        };
        let width = config.feature_width()?;
        let shared = dense("shared", config.dense, width, &mut ps);
        let regression = dense("head_x", 1, config.dense, &mut ps);
        let speed = dense("head_speed", config.speed_classes, config.dense, &mut ps);
        let direction = dense("head_dir", config.direction_classes, config.dense, &mut ps);
        Ok(Model {
            config: config.clone(),
            params: ps,
            bn_stats,
            layout: Layout { conv, lstm, flatten, shared, regression, speed, direction },
        })
    }

    fn p(&self, idx: usize) -> &Tensor {
        self.params.get(idx)
    }

    fn lstm_params(&self, idx: LstmIdx) -> LstmParams<'_> {
        LstmParams { w_ih: self.p(idx.w_ih), w_hh: self.p(idx.w_hh), bias: self.p(idx.bias) }
    }

    /// Forward pass over `x [B, seq_len, sensors]` (already standardized).
    pub fn forward(&self, x: &Tensor, pass: Pass<'_>) -> Result<(Outputs, Tape)> {
        let cfg = &self.config;
        let [batch, sl, n] = x.dims::<3>("model input")?;
        if sl != cfg.seq_len || n != cfg.sensors {
            return Err(Error::shape(
                "model input",
                format!("[_, {}, {}]", cfg.seq_len, cfg.sensors),
                format!("{:?}", x.shape()),
            ));
        }
        let mode = match pass {
            Pass::Eval => Mode::Eval,
            _ => Mode::Train,
        };
        let update_stats = matches!(pass, Pass::Train(_));
        let mut running = self.bn_stats.clone();
        let mut blocks = Vec::with_capacity(cfg.conv.len());
        let mut h = x.clone();
        let mut ch = cfg.sensors;
        for (i, (b, idx)) in cfg.conv.iter().zip(&self.layout.conv).enumerate() {
            let conv = Conv1d::new(ch, b.filters, b.kernel);
            let (y, conv_cache) = conv.forward(&h, self.p(idx.weight), None)?;
            let bn = BatchNorm1d::new(b.filters);
            let (y, bn_cache) = bn.forward(&y, self.p(idx.gamma), self.p(idx.beta), &mut running[i], mode, update_stats)?;
            let activated = relu(&y);
            let (pooled, pool_cache) = MaxPool1d::new(cfg.pool).forward(&activated)?;
            blocks.push(BlockTape { conv: conv_cache, bn: bn_cache, activated, pool: pool_cache });
            h = pooled;
            ch = b.filters;
        }
        let pooled_shape = h.dims::<3>("pooled")?;
        let (features, backbone) = match (self.layout.lstm, self.layout.flatten) {
            (Some([f, b]), _) => {
                let (seq, cache) = bilstm_forward(&h, self.lstm_params(f), self.lstm_params(b))?;
                let [_, steps, h2] = seq.dims::<3>("bilstm output")?;
                let hid = h2 / 2;
                // forward direction's last step, backward direction's final state (time 0)
                let mut feat = vec![0.0; batch * h2];
                for s in 0..batch {
                    let last = &seq.data()[((s * steps) + steps - 1) * h2..((s * steps) + steps) * h2];
                    let first = &seq.data()[(s * steps) * h2..(s * steps + 1) * h2];
                    feat[s * h2..s * h2 + hid].copy_from_slice(&last[..hid]);
                    feat[s * h2 + hid..(s + 1) * h2].copy_from_slice(&first[hid..]);
                }
                (Tensor::new(vec![batch, h2], feat)?, BackboneTape::BiLstm { cache, steps })
            }
            (None, Some(idx)) => {
                let flat = h.clone().reshape(vec![batch, pooled_shape[1] * pooled_shape[2]])?;
                let mut out = dense_forward(&flat, self.p(idx.weight), self.p(idx.bias))?;
                tanh_inplace(&mut out);
                (out.clone(), BackboneTape::Flatten { input: flat, output: out })
            }
            (None, None) => unreachable!("model without backbone"),
        };
        let (dropped, dropout) = match pass {
            Pass::Eval => (features, None),
            Pass::Frozen(mask) => (mask.apply(&features)?, Some(mask.clone())),
            Pass::Train(rng) => {
                let mask = DropoutMask::sample(features.len(), cfg.dropout, rng)?;
                (mask.apply(&features)?, Some(mask))
            }
        };
        let l = &self.layout;
        let shared = relu(&dense_forward(&dropped, self.p(l.shared.weight), self.p(l.shared.bias))?);
        let mut x_hat = dense_forward(&shared, self.p(l.regression.weight), self.p(l.regression.bias))?;
        tanh_inplace(&mut x_hat);
        let speed_logits = dense_forward(&shared, self.p(l.speed.weight), self.p(l.speed.bias))?;
        let direction_logits = dense_forward(&shared, self.p(l.direction.weight), self.p(l.direction.bias))?;
        if mode == Mode::Train
            && !(x_hat.all_finite() && speed_logits.all_finite() && direction_logits.all_finite())
        {
            return Err(Error::NonFinite("network outputs".into()));
        }
        let outputs = Outputs { x_hat: x_hat.data().to_vec(), speed_logits, direction_logits };
        let tape = Tape { blocks, backbone, pooled_shape, dropout, dropped, shared, x_hat, running };
        Ok((outputs, tape))
    }

    /// Parameter gradients, indexed like `self.params`.
    pub fn backward(&self, tape: &Tape, grads: &OutputGrads) -> Result<Vec<Tensor>> {
        let cfg = &self.config;
        let l = &self.layout;
        let batch = grads.x_hat.len();
        let mut out: Vec<Tensor> = self.params.params().iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();

        let dx_hat = tanh_backward(&tape.x_hat, &Tensor::new(vec![batch, 1], grads.x_hat.clone())?);
        let mut d_shared = Tensor::zeros(tape.shared.shape().to_vec());
        for (head, dy) in [(l.regression, &dx_hat), (l.speed, &grads.speed_logits), (l.direction, &grads.direction_logits)] {
            let (dx, dw, db) = dense_backward(&tape.shared, self.p(head.weight), dy)?;
            for (a, b) in d_shared.data_mut().iter_mut().zip(dx.data()) {
                *a += b;
            }
            out[head.weight] = dw;
            out[head.bias] = db;
        }
        let d_shared = relu_backward(&tape.shared, &d_shared);
        let (d_dropped, dw, db) = dense_backward(&tape.dropped, self.p(l.shared.weight), &d_shared)?;
        out[l.shared.weight] = dw;
        out[l.shared.bias] = db;
        let d_features = match &tape.dropout {
            Some(mask) => mask.apply(&d_dropped)?,
            None => d_dropped,
        };

        let [_, plen, pch] = tape.pooled_shape;
        let mut dh = match (&tape.backbone, l.lstm, l.flatten) {
            (BackboneTape::BiLstm { cache, steps }, Some([f, b]), _) => {
                let steps = *steps;
                let h2 = 2 * cfg.hidden;
                let hid = cfg.hidden;
                let mut dseq = vec![0.0; batch * steps * h2];
                for s in 0..batch {
                    let df = &d_features.data()[s * h2..(s + 1) * h2];
                    let last = ((s * steps) + steps - 1) * h2;
                    let first = (s * steps) * h2;
                    dseq[last..last + hid].copy_from_slice(&df[..hid]);
                    dseq[first + hid..first + h2].copy_from_slice(&df[hid..]);
                }
                let dseq = Tensor::new(vec![batch, steps, h2], dseq)?;
                let (dx, gf, gb) = bilstm_backward(cache, self.lstm_params(f), self.lstm_params(b), &dseq)?;
                for (idx, g) in [(f, gf), (b, gb)] {
                    out[idx.w_ih] = g.0;
                    out[idx.w_hh] = g.1;
                    out[idx.bias] = g.2;
                }
                dx
            }
            (BackboneTape::Flatten { input, output }, _, Some(idx)) => {
                let dz = tanh_backward(output, &d_features);
                let (dx, dw, db) = dense_backward(input, self.p(idx.weight), &dz)?;
                out[idx.weight] = dw;
                out[idx.bias] = db;
                dx.reshape(vec![batch, plen, pch])?
            }
            _ => unreachable!("tape does not match layout"),
        };

        for (i, (blk, idx)) in tape.blocks.iter().zip(&l.conv).enumerate().rev() {
            let b = cfg.conv[i];
            let ch_in = if i == 0 { cfg.sensors } else { cfg.conv[i - 1].filters };
            let d_act = MaxPool1d::new(cfg.pool).backward(&blk.pool, &dh)?;
            let d_bn = relu_backward(&blk.activated, &d_act);
            let (d_conv, dgamma, dbeta) = BatchNorm1d::new(b.filters).backward(&blk.bn, self.p(idx.gamma), &d_bn)?;
            out[idx.gamma] = dgamma;
            out[idx.beta] = dbeta;
            let (dx, dw, _) = Conv1d::new(ch_in, b.filters, b.kernel).backward(&blk.conv, &d_conv)?;
            out[idx.weight] = dw;
            dh = dx;
        }
        Ok(out)
    }

    /// Decoded estimates for a batch evaluated in eval mode.
    pub fn estimate(&self, x: &Tensor) -> Result<Vec<StateEstimate>> {
        let (out, _) = self.forward(x, Pass::Eval)?;
        let sp = softmax_rows(&out.speed_logits)?;
        let dp = softmax_rows(&out.direction_logits)?;
        let (v, d) = (self.config.speed_classes, self.config.direction_classes);
        Ok(out
            .x_hat
            .iter()
            .enumerate()
            .map(|(s, &x_hat)| StateEstimate {
                x_hat,
                speed_probs: sp.data()[s * v..(s + 1) * v].to_vec(),
                dir_probs: dp.data()[s * d..(s + 1) * d].to_vec(),
            })
            .collect())
    }

    pub fn feature_width(&self) -> usize {
        self.config.feature_width().expect("validated at construction")
    }

    /// Copies parameter values and running statistics from `other` by name.
    pub fn load_state(&mut self, params: &ParameterSet, bn_stats: &[RunningStats]) -> Result<()> {
        if params.len() != self.params.len() || bn_stats.len() != self.bn_stats.len() {
            return Err(Error::invalid("checkpoint layout does not match the model configuration"));
        }
        for (mine, theirs) in self.params.params().iter().zip(params.params()) {
            if mine.name != theirs.name || mine.value.shape() != theirs.value.shape() {
                return Err(Error::invalid(format!(
                    "checkpoint parameter {} {:?} does not match {} {:?}",
                    theirs.name,
                    theirs.value.shape(),
                    mine.name,
                    mine.value.shape()
                )));
            }
        }
        let mut loaded = params.clone();
        loaded.zero_grad();
        self.params = loaded;
        self.bn_stats = bn_stats.to_vec();
        Ok(())
    }
}
