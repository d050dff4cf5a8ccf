use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use propwake::estimator::{batch_loss, train_step, Model, ModelConfig, Pass, TaskWeights};
use propwake::tensor::{bilstm_backward, bilstm_forward, AdamConfig, Conv1d, LstmParams};
use propwake::woa::{woa_optimize, WoaConfig};
use propwake_bench::{random_batch, random_tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn conv(c: &mut Criterion) {
    let layer = Conv1d::new(32, 64, 3);
    let x = random_tensor(vec![64, 30, 32], 1);
    let w = random_tensor(vec![64, 32, 3], 2);
    c.bench_function("conv1d forward 64x30x32 -> 64", |b| b.iter(|| layer.forward(black_box(&x), &w, None).unwrap()));
    let (y, cache) = layer.forward(&x, &w, None).unwrap();
    c.bench_function("conv1d backward 64x30x32 -> 64", |b| b.iter(|| layer.backward(&cache, black_box(&y)).unwrap()));
}

fn lstm(c: &mut Criterion) {
    let (h, f) = (64, 64);
    let x = random_tensor(vec![64, 14, f], 3);
    let w_ih = random_tensor(vec![4 * h, f], 4);
    let w_hh = random_tensor(vec![4 * h, h], 5);
    let bias = random_tensor(vec![4 * h], 6);
    let p = || LstmParams { w_ih: &w_ih, w_hh: &w_hh, bias: &bias };
    c.bench_function("bilstm forward 64x14x64 h64", |b| b.iter(|| bilstm_forward(black_box(&x), p(), p()).unwrap()));
    let (y, cache) = bilstm_forward(&x, p(), p()).unwrap();
    c.bench_function("bilstm backward 64x14x64 h64", |b| b.iter(|| bilstm_backward(&cache, p(), p(), black_box(&y)).unwrap()));
}

fn network(c: &mut Criterion) {
    let cfg = ModelConfig::default();
    let (x, y) = random_batch(&cfg, 64, 7);
    let weights = TaskWeights::default();
    let model = Model::new(&cfg, 8).unwrap();
    c.bench_function("forward eval batch 64", |b| b.iter(|| model.forward(black_box(&x), Pass::Eval).unwrap()));
    c.bench_function("forward+loss+backward batch 64", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        b.iter(|| {
            let (out, tape) = model.forward(&x, Pass::Train(&mut rng)).unwrap();
            let loss = batch_loss(&out, &y, &weights).unwrap();
            model.backward(&tape, &loss.grads).unwrap()
        })
    });
    let mut trained = model.clone();
    let adam = AdamConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    c.bench_function("train step batch 64", |b| {
        b.iter(|| train_step(&mut trained, black_box(&x), &y, &weights, &adam, &mut rng).unwrap())
    });
}

fn woa(c: &mut Criterion) {
    let cfg = WoaConfig { population: 20, max_iters: 200, ..WoaConfig::default() };
    c.bench_function("woa sphere p20 t200", |b| {
        b.iter(|| woa_optimize(|x| Ok(x.iter().map(|v| (v - 1.0).powi(2)).sum()), black_box(&cfg)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = conv, lstm, network, woa
}
criterion_main!(benches);
