//! Dense tensors and the hand-written layers of the estimator network.
//!
//! Sequence tensors use a channels-last layout `[batch, time, channels]`, so a
//! pressure window (`time × sensors`) is already in kernel order. Every layer
//! exposes a `forward` that returns a cache and a `backward` that consumes it;
//! the network composes them in a fixed order, so no tape is needed.

mod adam;
mod conv;
mod dense;
pub(crate) mod gemm;
mod gradcheck;
mod loss;
mod lstm;
mod norm;
mod pool;

pub use adam::{AdamConfig, Parameter, ParameterSet};
pub use conv::{Conv1d, Conv1dCache};
pub use dense::{
    dense_backward, dense_forward, dropout_forward, relu, relu_backward, sigmoid, tanh_backward,
    tanh_inplace, DropoutMask,
};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{mse_loss, softmax_crossentropy, softmax_rows, CrossEntropy};
pub use lstm::{
    bilstm_backward, bilstm_forward, lstm_backward, lstm_forward, BiLstmCache, LstmCache, LstmGrads,
    LstmParams,
};
pub use norm::{BatchNorm1d, BatchNormCache, RunningStats};
pub use pool::{MaxPool1d, MaxPoolCache};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Train mode uses batch statistics and stochastic dropout; eval mode is deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Row-major dense tensor of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("Tensor::new", format!("{n} elements for {shape:?}"), data.len()));
        }
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![0.0; n], grad: None }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Tensor { shape, data: vec![value; n], grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::shape("Tensor::set_grad", self.data.len(), grad.len()));
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::shape("Tensor::reshape", self.data.len(), format!("{shape:?}")));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Fails if the tensor does not have exactly `rank` dimensions.
    pub(crate) fn dims<const R: usize>(&self, op: &'static str) -> Result<[usize; R]> {
        <[usize; R]>::try_from(self.shape.as_slice())
            .map_err(|_| Error::shape(op, format!("rank {R}"), format!("{:?}", self.shape)))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Swaps the last two axes of a rank-2 or rank-3 tensor.
    pub fn transpose_last2(&self) -> Tensor {
        let r = self.shape.len();
        assert!(r >= 2);
        let (rows, cols) = (self.shape[r - 2], self.shape[r - 1]);
        let batch: usize = self.shape[..r - 2].iter().product();
        let mut out = vec![0.0; self.data.len()];
        for b in 0..batch {
            let src = &self.data[b * rows * cols..(b + 1) * rows * cols];
            let dst = &mut out[b * rows * cols..(b + 1) * rows * cols];
            for i in 0..rows {
                for j in 0..cols {
                    dst[j * rows + i] = src[i * cols + j];
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.swap(r - 2, r - 1);
        Tensor { shape, data: out, grad: None }
    }
}
