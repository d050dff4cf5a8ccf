use serde::{Deserialize, Serialize};

use crate::dataset::MotionState;
use crate::error::{Error, Result};

/// Decoded point prediction for one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub x_hat: f64,
    pub v_class: usize,
    pub d_class: usize,
}

/// Index of the first maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Test-set quality. Confusion rows are actual classes, columns predicted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub rmse_x: f64,
    pub acc_speed: f64,
    pub acc_dir: f64,
    pub confusion_speed: Vec<Vec<u64>>,
    pub confusion_dir: Vec<Vec<u64>>,
}

/// `[1 − ACC1, 1 − ACC2, ERR]` with `ERR` the displacement RMSE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalVector(pub [f64; 3]);

impl EvalVector {
    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).sum()
    }
}

impl Metrics {
    pub fn from_predictions(
        preds: &[Prediction],
        truth: &[MotionState],
        speed_classes: usize,
        direction_classes: usize,
    ) -> Result<Self> {
        if preds.len() != truth.len() {
            return Err(Error::shape("metrics", truth.len(), preds.len()));
        }
        if preds.is_empty() {
            return Err(Error::invalid("cannot score an empty split"));
        }
        let mut cs = vec![vec![0u64; speed_classes]; speed_classes];
        let mut cd = vec![vec![0u64; direction_classes]; direction_classes];
        let mut sq = 0.0;
        for (p, t) in preds.iter().zip(truth) {
            if p.v_class >= speed_classes || t.v_class >= speed_classes || p.d_class >= direction_classes || t.d_class >= direction_classes {
                return Err(Error::invalid("class index outside the label space"));
            }
            sq += (p.x_hat - t.x) * (p.x_hat - t.x);
            cs[t.v_class][p.v_class] += 1;
            cd[t.d_class][p.d_class] += 1;
        }
        let n = preds.len() as f64;
        let diag = |m: &[Vec<u64>]| m.iter().enumerate().map(|(i, r)| r[i]).sum::<u64>() as f64;
        Ok(Metrics {
            count: preds.len(),
            rmse_x: (sq / n).sqrt(),
            acc_speed: diag(&cs) / n,
            acc_dir: diag(&cd) / n,
            confusion_speed: cs,
            confusion_dir: cd,
        })
    }

    pub fn eval_vector(&self) -> EvalVector {
        EvalVector([1.0 - self.acc_speed, 1.0 - self.acc_dir, self.rmse_x])
    }

    pub fn fitness(&self) -> f64 {
        fitness(self)
    }
}

/// `g = ‖e‖₁ = (1 − ACC1) + (1 − ACC2) + RMSE`
pub fn fitness(m: &Metrics) -> f64 {
    m.eval_vector().l1_norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(acc_speed: f64, acc_dir: f64, rmse_x: f64) -> Metrics {
        Metrics { count: 1, rmse_x, acc_speed, acc_dir, confusion_speed: vec![], confusion_dir: vec![] }
    }

    #[test]
    fn fitness_examples() {
        assert!((fitness(&metrics(0.9737, 0.9975, 0.0498)) - 0.0786).abs() < 1e-12);
        assert_eq!(fitness(&metrics(1.0, 1.0, 0.0)), 0.0);
        assert!((fitness(&metrics(0.5, 0.5, 0.5)) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn oracle_predictions_are_perfect() {
        let truth: Vec<MotionState> = (0..20)
            .map(|i| MotionState { x: (i as f64 / 10.0) - 1.0, v_class: i % 5, d_class: i % 2 })
            .collect();
        let preds: Vec<Prediction> = truth.iter().map(|t| Prediction { x_hat: t.x, v_class: t.v_class, d_class: t.d_class }).collect();
        let m = Metrics::from_predictions(&preds, &truth, 5, 2).unwrap();
        assert_eq!((m.rmse_x, m.acc_speed, m.acc_dir), (0.0, 1.0, 1.0));
        for (i, row) in m.confusion_speed.iter().enumerate() {
            assert_eq!(row.iter().sum::<u64>(), row[i]);
        }
    }

    #[test]
    fn constant_zero_on_uniform_labels() {
        // x on a fine uniform grid over [−1, 1]; E[x²] = 1/3
        let n = 20_001;
        let truth: Vec<MotionState> = (0..n)
            .map(|i| MotionState { x: -1.0 + 2.0 * i as f64 / (n - 1) as f64, v_class: 0, d_class: 0 })
            .collect();
        let preds = vec![Prediction { x_hat: 0.0, v_class: 0, d_class: 0 }; n];
        let m = Metrics::from_predictions(&preds, &truth, 5, 2).unwrap();
        assert!((m.rmse_x - (1.0f64 / 3.0).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let truth = [(0, 1), (0, 0), (2, 1), (4, 0), (4, 0), (4, 1)]
            .map(|(v, d)| MotionState { x: 0.0, v_class: v, d_class: d });
        let preds = [(1, 1), (0, 0), (2, 0), (4, 0), (3, 1), (4, 1)]
            .map(|(v, d)| Prediction { x_hat: 0.1, v_class: v, d_class: d });
        let m = Metrics::from_predictions(&preds, &truth, 5, 2).unwrap();
        let sums: Vec<u64> = m.confusion_speed.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(sums, vec![2, 0, 1, 0, 3]);
        assert_eq!(m.confusion_dir[1], vec![1, 2]);
        assert!((m.acc_speed - 4.0 / 6.0).abs() < 1e-15);
        assert!((m.acc_dir - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn argmax_first_on_ties() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[3.0]), 0);
    }
}
