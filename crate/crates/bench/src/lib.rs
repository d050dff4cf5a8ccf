//! Input builders shared by the kernel benchmarks in `benches/`.

use propwake::dataset::MotionState;
use propwake::estimator::ModelConfig;
use propwake::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_tensor(shape: Vec<usize>, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape matches data")
}

/// A standardized-looking input batch with random labels.
pub fn random_batch(cfg: &ModelConfig, batch: usize, seed: u64) -> (Tensor, Vec<MotionState>) {
    let x = random_tensor(vec![batch, cfg.seq_len, cfg.sensors], seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let y = (0..batch)
        .map(|_| MotionState {
            x: rng.random_range(-1.0..1.0),
            v_class: rng.random_range(0..cfg.speed_classes),
            d_class: rng.random_range(0..cfg.direction_classes),
        })
        .collect();
    (x, y)
}
