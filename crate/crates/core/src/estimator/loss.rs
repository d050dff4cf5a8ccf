use super::config::TaskWeights;
use super::model::{OutputGrads, Outputs};
use crate::dataset::MotionState;
use crate::error::Result;
use crate::tensor::{mse_loss, softmax_crossentropy, Tensor};

/// Displacement loss: batch-mean squared error.
pub fn loss_l1(x_hat: &[f64], x: &[f64]) -> Result<f64> {
    mse_loss(x_hat, x).map(|(l, _)| l)
}

/// Classification loss (speed or direction): batch-mean cross-entropy.
pub fn loss_ce(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    softmax_crossentropy(logits, labels).map(|ce| ce.loss)
}

/// `λ1·l1 + λ2·l2 + λ3·l3`
pub fn loss_total(l1: f64, l2: f64, l3: f64, w: &TaskWeights) -> f64 {
    w.displacement * l1 + w.speed * l2 + w.direction * l3
}

#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub total: f64,
    /// Gradient of `total` with respect to the outputs.
    pub grads: OutputGrads,
}

pub fn batch_loss(out: &Outputs, targets: &[MotionState], w: &TaskWeights) -> Result<BatchLoss> {
    let x: Vec<f64> = targets.iter().map(|t| t.x).collect();
    let v: Vec<usize> = targets.iter().map(|t| t.v_class).collect();
    let d: Vec<usize> = targets.iter().map(|t| t.d_class).collect();
    let (l1, mut g1) = mse_loss(&out.x_hat, &x)?;
    let ce_v = softmax_crossentropy(&out.speed_logits, &v)?;
    let ce_d = softmax_crossentropy(&out.direction_logits, &d)?;
    g1.iter_mut().for_each(|g| *g *= w.displacement);
    let mut gv = ce_v.grad;
    gv.data_mut().iter_mut().for_each(|g| *g *= w.speed);
    let mut gd = ce_d.grad;
    gd.data_mut().iter_mut().for_each(|g| *g *= w.direction);
    Ok(BatchLoss {
        l1,
        l2: ce_v.loss,
        l3: ce_d.loss,
        total: loss_total(l1, ce_v.loss, ce_d.loss, w),
        grads: OutputGrads { x_hat: g1, speed_logits: gv, direction_logits: gd },
    })
}
