use rand::Rng;

use super::gemm::{gemm, View};
use super::{Mode, Tensor};
use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Affine map `y = x·wᵀ + b` with `x [B, in]`, `w [out, in]`, `b [out]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let [batch, inp] = x.dims::<2>("dense input")?;
    let [out, w_in] = w.dims::<2>("dense weight")?;
    if w_in != inp || b.shape() != [out] {
        return Err(Error::shape(
            "dense",
            format!("weight [_, {inp}] and bias [{out}]"),
            format!("{:?} and {:?}", w.shape(), b.shape()),
        ));
    }
    let mut y = vec![0.0; batch * out];
    for row in y.chunks_exact_mut(out) {
        row.copy_from_slice(b.data());
    }
    gemm(1.0, View::rm(x.data(), batch, inp), View::rm_t(w.data(), out, inp), 1.0, &mut y, out);
    Tensor::new(vec![batch, out], y)
}

/// Returns `(dx, dw, db)`.
pub fn dense_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let [batch, inp] = x.dims::<2>("dense backward input")?;
    let [out, _] = w.dims::<2>("dense backward weight")?;
    if dy.shape() != [batch, out] {
        return Err(Error::shape("dense backward", format!("[{batch}, {out}]"), format!("{:?}", dy.shape())));
    }
    let mut dx = vec![0.0; batch * inp];
    gemm(1.0, View::rm(dy.data(), batch, out), View::rm(w.data(), out, inp), 0.0, &mut dx, inp);
    let mut dw = vec![0.0; out * inp];
    gemm(1.0, View::rm_t(dy.data(), batch, out), View::rm(x.data(), batch, inp), 0.0, &mut dw, inp);
    let mut db = vec![0.0; out];
    for row in dy.data().chunks_exact(out) {
        for (d, v) in db.iter_mut().zip(row) {
            *d += v;
        }
    }
    Ok((
        Tensor::new(vec![batch, inp], dx)?,
        Tensor::new(vec![out, inp], dw)?,
        Tensor::new(vec![out], db)?,
    ))
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut y = x.clone();
    y.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gradient of relu given its output (or input; the sign pattern is the same).
pub fn relu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, v) in dx.data_mut().iter_mut().zip(y.data()) {
        if *v <= 0.0 {
            *d = 0.0;
        }
    }
    dx
}

pub fn tanh_inplace(x: &mut Tensor) {
    x.data_mut().iter_mut().for_each(|v| *v = v.tanh());
}

/// Gradient of tanh given its output `y`.
pub fn tanh_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    let mut dx = dy.clone();
    for (d, v) in dx.data_mut().iter_mut().zip(y.data()) {
        *d *= 1.0 - v * v;
    }
    dx
}

/// Inverted-dropout multiplier per element: `0` or `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(pub Vec<f64>);

impl DropoutMask {
    pub fn sample<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Result<Self> {
        check_rate(rate)?;
        let keep = 1.0 / (1.0 - rate);
        Ok(DropoutMask(
            (0..len)
                .map(|_| if rate > 0.0 && rng.random::<f64>() < rate { 0.0 } else { keep })
                .collect(),
        ))
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if self.0.len() != x.len() {
            return Err(Error::shape("dropout mask", x.len(), self.0.len()));
        }
        let mut y = x.clone();
        for (v, m) in y.data_mut().iter_mut().zip(&self.0) {
            *v *= m;
        }
        Ok(y)
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Train mode draws a fresh mask; eval mode is the identity.
pub fn dropout_forward<R: Rng + ?Sized>(
    x: &Tensor,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, Option<DropoutMask>)> {
    check_rate(rate)?;
    match mode {
        Mode::Eval => Ok((x.clone(), None)),
        Mode::Train => {
            let mask = DropoutMask::sample(x.len(), rate, rng)?;
            Ok((mask.apply(x)?, Some(mask)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_dense() {
        let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]).unwrap();
        let mut eye = Tensor::zeros(vec![3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        let y = dense_forward(&x, &eye, &Tensor::zeros(vec![3])).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn dropout_rate_zero_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::new(vec![1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        for mode in [Mode::Train, Mode::Eval] {
            let (y, _) = dropout_forward(&x, 0.0, mode, &mut rng).unwrap();
            assert_eq!(y.data(), x.data());
        }
        let (y, mask) = dropout_forward(&x, 0.5, Mode::Eval, &mut rng).unwrap();
        assert_eq!(y.data(), x.data());
        assert!(mask.is_none());
    }

    #[test]
    fn dropout_rejects_bad_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = Tensor::zeros(vec![1, 2]);
        assert!(dropout_forward(&x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(dropout_forward(&x, -0.1, Mode::Eval, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_expectation() {
        let x = Tensor::new(vec![1, 5], vec![1.0, -2.0, 0.5, 4.0, 3.0]).unwrap();
        let draws = 20_000;
        let mut acc = [0.0; 5];
        for seed in 0..draws {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (y, _) = dropout_forward(&x, 0.3, Mode::Train, &mut rng).unwrap();
            for (a, v) in acc.iter_mut().zip(y.data()) {
                *a += v;
            }
        }
        for (a, v) in acc.iter().zip(x.data()) {
            let mean = a / draws as f64;
            assert!((mean - v).abs() <= 0.02 * v.abs(), "{mean} vs {v}");
        }
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!((sigmoid(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dense_tanh_finite_difference() {
        let (b, i, o) = (3, 4, 2);
        let vals: Vec<f64> = (0..b * i + o * i + o).map(|k| ((k * 7919) % 97) as f64 / 50.0 - 1.0).collect();
        let proj: Vec<f64> = (0..b * o).map(|k| (k as f64).cos()).collect();
        let split = |p: &[f64]| {
            (
                Tensor::new(vec![b, i], p[..b * i].to_vec()).unwrap(),
                Tensor::new(vec![o, i], p[b * i..b * i + o * i].to_vec()).unwrap(),
                Tensor::new(vec![o], p[b * i + o * i..].to_vec()).unwrap(),
            )
        };
        let loss = |p: &[f64]| {
            let (x, w, bb) = split(p);
            let mut y = dense_forward(&x, &w, &bb).unwrap();
            tanh_inplace(&mut y);
            y.data().iter().zip(&proj).map(|(a, c)| a * c).sum::<f64>()
        };
        let (x, w, bb) = split(&vals);
        let mut y = dense_forward(&x, &w, &bb).unwrap();
        tanh_inplace(&mut y);
        let dz = tanh_backward(&y, &Tensor::new(vec![b, o], proj.clone()).unwrap());
        let (dx, dw, db) = dense_backward(&x, &w, &dz).unwrap();
        let analytic = [dx.into_data(), dw.into_data(), db.into_data()].concat();
        let report = grad_check(loss, &vals, &analytic, 1e-4);
        assert!(report.passed, "{report:?}");
    }
}
