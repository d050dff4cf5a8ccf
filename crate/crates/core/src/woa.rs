//! Whale optimization over a box-bounded search space, plus task-weight tuning on top of it.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::estimator::{evaluate, train, ModelConfig, TaskWeights, TrainConfig, WEIGHT_BOUNDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WoaConfig {
    pub population: usize,
    pub max_iters: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Logarithmic spiral shape constant.
    pub spiral_b: f64,
    pub seed: u64,
}

impl Default for WoaConfig {
    fn default() -> Self {
        WoaConfig {
            population: 6,
            max_iters: 10,
            lower: vec![WEIGHT_BOUNDS.0; 3],
            upper: vec![WEIGHT_BOUNDS.1; 3],
            spiral_b: 1.0,
            seed: 0,
        }
    }
}

impl WoaConfig {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::invalid(format!("population must be at least 2, got {}", self.population)));
        }
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(Error::invalid("bounds must be non-empty and of equal length"));
        }
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!("bad bound interval [{lo}, {hi}]")));
            }
        }
        if !self.spiral_b.is_finite() {
            return Err(Error::invalid("spiral constant must be finite"));
        }
        Ok(())
    }

    fn clamp(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| rng.random_range(*lo..=*hi)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub position: Vec<f64>,
    pub fitness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WoaResult {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    /// Best-so-far fitness after each iteration.
    pub trace: Vec<f64>,
    /// Best-so-far position after each iteration.
    pub best_positions: Vec<Vec<f64>>,
    pub evaluations: usize,
}

/// Logarithmic-spiral move around `leader`, with `l` in [-1, 1].
pub fn spiral_move(x: &[f64], leader: &[f64], l: f64, b: f64) -> Vec<f64> {
    let s = (b * l).exp() * (2.0 * PI * l).cos();
    x.iter().zip(leader).map(|(xi, li)| (li - xi).abs() * s + li).collect()
}

const RESAMPLE_LIMIT: usize = 20;

/// Minimizes `objective` over the box. NaN evaluations re-sample the agent uniformly.
pub fn woa_optimize<F>(mut objective: F, cfg: &WoaConfig) -> Result<WoaResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut evaluations = 0usize;

    let mut eval = |agent: &mut Agent, rng: &mut ChaCha8Rng| -> Result<()> {
        for _ in 0..RESAMPLE_LIMIT {
            evaluations += 1;
            let f = objective(&agent.position)?;
            if !f.is_nan() {
                agent.fitness = Some(f);
                return Ok(());
            }
            agent.position = cfg.sample(rng);
        }
        Err(Error::NonFinite(format!("objective stayed NaN after {RESAMPLE_LIMIT} re-samples")))
    };

    let mut agents: Vec<Agent> = (0..cfg.population).map(|_| Agent { position: cfg.sample(&mut rng), fitness: None }).collect();
    let mut best: Option<Agent> = None;
    let mut trace = Vec::with_capacity(cfg.max_iters);
    let mut best_positions = Vec::with_capacity(cfg.max_iters);

    for iter in 0..cfg.max_iters {
        if iter > 0 {
            let leader = best.as_ref().expect("leader after first iteration").position.clone();
            let a = 2.0 - 2.0 * iter as f64 / cfg.max_iters as f64;
            let snapshot: Vec<Vec<f64>> = agents.iter().map(|ag| ag.position.clone()).collect();
            for agent in agents.iter_mut() {
                let p: f64 = rng.random();
                let mut next = if p < 0.5 {
                    let other = &snapshot[rng.random_range(0..snapshot.len())];
                    let mut next = Vec::with_capacity(cfg.dim());
                    for j in 0..cfg.dim() {
                        let a_coef = 2.0 * a * rng.random::<f64>() - a;
                        let c_coef = 2.0 * rng.random::<f64>();
                        let target = if a_coef.abs() < 1.0 { leader[j] } else { other[j] };
                        next.push(target - a_coef * (c_coef * target - agent.position[j]).abs());
                    }
                    next
                } else {
                    let l: f64 = rng.random_range(-1.0..=1.0);
                    spiral_move(&agent.position, &leader, l, cfg.spiral_b)
                };
                cfg.clamp(&mut next);
                agent.position = next;
                agent.fitness = None;
            }
        }
        for agent in agents.iter_mut() {
            eval(agent, &mut rng)?;
            let f = agent.fitness.expect("evaluated");
            if best.as_ref().is_none_or(|b| f < b.fitness.expect("evaluated")) {
                best = Some(agent.clone());
            }
        }
        let b = best.as_ref().expect("population is non-empty");
        trace.push(b.fitness.expect("evaluated"));
        best_positions.push(b.position.clone());
    }
    let best = best.expect("population is non-empty");
    Ok(WoaResult {
        best_fitness: best.fitness.expect("evaluated"),
        best_position: best.position,
        trace,
        best_positions,
        evaluations,
    })
}

/// Memoizes objective values by position rounded to four decimals.
#[derive(Debug, Default, Clone)]
pub struct FitnessCache {
    values: HashMap<Vec<i64>, f64>,
    pub hits: usize,
}

impl FitnessCache {
    pub fn key(position: &[f64]) -> Vec<i64> {
        position.iter().map(|v| (v * 1e4).round() as i64).collect()
    }

    pub fn get_or_insert_with<F>(&mut self, position: &[f64], f: F) -> Result<f64>
    where
        F: FnOnce() -> Result<f64>,
    {
        let key = Self::key(position);
        if let Some(v) = self.values.get(&key) {
            self.hits += 1;
            return Ok(*v);
        }
        let v = f()?;
        self.values.insert(key, v);
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub best_fitness: f64,
    pub best_weights: TaskWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub best_weights: TaskWeights,
    pub best_fitness: f64,
    pub iterations: Vec<IterationRecord>,
    /// Objective calls, including cache hits.
    pub evaluations: usize,
    /// Trainings actually run.
    pub trainings: usize,
    pub cache_hits: usize,
    /// Wall-clock seconds per training run.
    pub eval_seconds: Vec<f64>,
    pub proxy_epochs: usize,
}

/// Searches task weights with short proxy trainings scored by test-split fitness.
pub fn tune_task_weights(
    ds: &LabeledDataset,
    model: &ModelConfig,
    hyper: &TrainConfig,
    woa: &WoaConfig,
    proxy_epochs: usize,
) -> Result<TuningReport> {
    if woa.dim() != 3 {
        return Err(Error::invalid(format!("task weights are 3-dimensional, bounds have {}", woa.dim())));
    }
    let proxy = TrainConfig { epochs: proxy_epochs, eval_every: 0, ..*hyper };
    let mut cache = FitnessCache::default();
    let mut eval_seconds = Vec::new();
    let result = woa_optimize(
        |pos| {
            cache.get_or_insert_with(pos, || {
                let start = Instant::now();
                let w = TaskWeights::from_array([pos[0], pos[1], pos[2]]);
                let out = train(ds, model, &w, &proxy)?;
                let fitness = evaluate(&out.model, ds, &ds.test)?.fitness();
                eval_seconds.push(start.elapsed().as_secs_f64());
                Ok(fitness)
            })
        },
        woa,
    )?;
    let to_weights = |p: &[f64]| TaskWeights::from_array([p[0], p[1], p[2]]);
    let iterations = result
        .trace
        .iter()
        .zip(&result.best_positions)
        .enumerate()
        .map(|(iteration, (f, p))| IterationRecord { iteration, best_fitness: *f, best_weights: to_weights(p) })
        .collect();
    Ok(TuningReport {
        best_weights: to_weights(&result.best_position),
        best_fitness: result.best_fitness,
        iterations,
        evaluations: result.evaluations,
        trainings: cache.len(),
        cache_hits: cache.hits,
        eval_seconds,
        proxy_epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> Result<f64> {
        Ok(x.iter().map(|v| (v - 1.0) * (v - 1.0)).sum())
    }

    #[test]
    fn sphere_reaches_optimum() {
        let cfg = WoaConfig { population: 20, max_iters: 200, seed: 3, ..WoaConfig::default() };
        let r = woa_optimize(sphere, &cfg).unwrap();
        assert!(r.best_fitness < 1e-5, "{}", r.best_fitness);
        assert_eq!(r.trace.len(), 200);
        assert_eq!(r.evaluations, 20 * 200);
    }

    #[test]
    fn constant_objective() {
        let cfg = WoaConfig { population: 4, max_iters: 5, ..WoaConfig::default() };
        let r = woa_optimize(|_| Ok(2.5), &cfg).unwrap();
        assert!(r.trace.iter().all(|&f| f == 2.5));
    }

    #[test]
    fn nan_agents_are_resampled() {
        let cfg = WoaConfig { population: 5, max_iters: 8, ..WoaConfig::default() };
        let r = woa_optimize(|x| Ok(if x[0] > 5.0 { f64::NAN } else { x[0] }), &cfg).unwrap();
        assert!(r.best_fitness.is_finite());
        assert!(r.evaluations > 5 * 8);
    }

    #[test]
    fn objective_errors_propagate() {
        let cfg = WoaConfig::default();
        assert!(woa_optimize(|_| Err(Error::invalid("boom")), &cfg).is_err());
    }

    #[test]
    fn invalid_configs() {
        let base = WoaConfig::default();
        assert!(WoaConfig { population: 1, ..base.clone() }.validate().is_err());
        assert!(WoaConfig { max_iters: 0, ..base.clone() }.validate().is_err());
        assert!(WoaConfig { lower: vec![1.0; 3], upper: vec![1.0; 3], ..base.clone() }.validate().is_err());
        assert!(WoaConfig { upper: vec![10.0; 2], ..base }.validate().is_err());
    }

    #[test]
    fn spiral_contracts_toward_leader() {
        // Mean log distance after repeated spiral moves around a fixed leader shrinks.
        let leader = [1.0, 2.0, 3.0];
        let mut total = 0.0;
        let runs = 200;
        for seed in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = vec![8.0, -4.0, 0.5];
            for _ in 0..30 {
                x = spiral_move(&x, &leader, rng.random_range(-1.0..=1.0), 1.0);
            }
            let d: f64 = x.iter().zip(&leader).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            total += d;
        }
        let start: f64 = [7.0f64, -6.0, -2.5].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(total / (runs as f64) < 0.05 * start);
    }

    #[test]
    fn cache_quantizes() {
        let mut c = FitnessCache::default();
        let mut calls = 0;
        c.get_or_insert_with(&[1.00001, 2.0], || { calls += 1; Ok(1.0) }).unwrap();
        c.get_or_insert_with(&[1.00002, 2.0], || { calls += 1; Ok(2.0) }).unwrap();
        assert_eq!(calls, 1);
        assert_eq!(c.hits, 1);
    }
}
