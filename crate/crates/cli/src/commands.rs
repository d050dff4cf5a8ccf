use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use anyhow::{Context, Result};
use propwake::dataset::{build_samples, LabeledDataset, SpeedClasses};
use propwake::estimator::{
    evaluate, train_observed, Backbone, Checkpoint, EpochRecord, Metrics, Model, TaskWeights, TrainStatus,
};
use propwake::hashing::bytes_hash;
use propwake::wake::{derive_seed, generate_corpus, write_corpus, Trial, MANIFEST_FILE};
use propwake::woa::{tune_task_weights, TuningReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{config_error, RunConfig};

static VERBOSE: AtomicBool = AtomicBool::new(false);

/// Enables progress lines on stderr.
pub fn set_verbose(on: bool) {
    VERBOSE.store(on, Ordering::Relaxed);
}

fn progress(msg: impl AsRef<str>) {
    if VERBOSE.load(Ordering::Relaxed) {
        eprintln!("{}", msg.as_ref());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub elapsed_s: f64,
}

pub const CONFIG_FILE: &str = "config.toml";
pub const MANIFEST: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EVAL_FILE: &str = "eval_metrics.json";
pub const TUNING_FILE: &str = "tuning.json";
pub const TUNE_COMPARISON_FILE: &str = "tune_comparison.json";
pub const ABLATION_FILE: &str = "ablation.json";
pub const SWEEP_FILE: &str = "sweep.json";

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Creates the output directory and stores the resolved config next to the outputs.
fn start_run(cfg: &RunConfig) -> Result<Instant> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;
    let path = cfg.out_dir.join(CONFIG_FILE);
    fs::write(&path, cfg.to_toml()?).with_context(|| format!("writing {}", path.display()))?;
    Ok(Instant::now())
}

fn finish_run(cfg: &RunConfig, command: &str, mut outputs: Vec<&str>, start: Instant) -> Result<Manifest> {
    outputs.insert(0, CONFIG_FILE);
    let versions = [
        ("propwake-core".to_string(), propwake::VERSION.to_string()),
        ("propwake-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
    ]
    .into_iter()
    .collect();
    let manifest = Manifest {
        command: command.to_string(),
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        versions,
        outputs: outputs.into_iter().map(String::from).collect(),
        elapsed_s: start.elapsed().as_secs_f64(),
    };
    write_json(&cfg.out_dir.join(MANIFEST), &manifest)?;
    Ok(manifest)
}

pub fn generate(cfg: &RunConfig) -> Result<Vec<Trial>> {
    Ok(generate_corpus(&cfg.grid.scenarios(), &cfg.geometry, &cfg.wake, cfg.repeats)?)
}

/// Corpus → windows → stratified split with a fitted standardizer.
pub fn build_dataset(cfg: &RunConfig) -> Result<LabeledDataset> {
    let trials = generate(cfg)?;
    let classes = SpeedClasses::new(cfg.grid.speeds_mm_s.clone())?;
    let samples = build_samples(&trials, &cfg.dataset.window_options(), &classes)?;
    if samples.is_empty() {
        return Err(config_error(format!("no windows of length {} fit the corpus", cfg.dataset.sl)));
    }
    Ok(LabeledDataset::prepare(
        samples,
        cfg.dataset.sl,
        cfg.geometry.count(),
        classes,
        cfg.dataset.split_ratio,
        cfg.dataset.split_seed,
        cfg.data_hash()?,
    )?)
}

/// Test-split scores of one trained (or loaded) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub label: String,
    pub config_hash: String,
    pub seed: u64,
    pub sl: usize,
    pub backbone: Backbone,
    pub weights: Option<TaskWeights>,
    pub parameters: usize,
    pub count: usize,
    pub rmse_x: f64,
    pub acc_speed: f64,
    pub acc_dir: f64,
    pub fitness: f64,
    pub confusion_speed: Vec<Vec<u64>>,
    pub confusion_dir: Vec<Vec<u64>>,
    pub status: TrainStatus,
    pub history: Vec<EpochRecord>,
}

impl RunMetrics {
    fn new(label: &str, cfg: &RunConfig, model: &Model, m: Metrics, weights: Option<TaskWeights>) -> Result<Self> {
        Ok(RunMetrics {
            label: label.to_string(),
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            sl: model.config.seq_len,
            backbone: model.config.backbone,
            weights,
            parameters: model.params.scalar_count(),
            count: m.count,
            rmse_x: m.rmse_x,
            acc_speed: m.acc_speed,
            acc_dir: m.acc_dir,
            fitness: m.fitness(),
            confusion_speed: m.confusion_speed,
            confusion_dir: m.confusion_dir,
            status: TrainStatus::Completed,
            history: Vec::new(),
        })
    }
}

/// Trains one model on `ds` and scores it on the test split.
pub fn train_and_score(
    cfg: &RunConfig,
    ds: &LabeledDataset,
    weights: TaskWeights,
    backbone: Backbone,
    label: &str,
) -> Result<(Model, RunMetrics)> {
    let model_cfg = cfg.model.with_backbone(backbone);
    let init = Model::new(&model_cfg, derive_seed(cfg.train.seed, 0))?;
    let outcome = train_observed(init, ds, &weights, &cfg.train, |r| {
        if let Some(t) = &r.test {
            progress(format!(
                "[{label}] epoch {} loss {:.4} rmse {:.4} acc_speed {:.4} acc_dir {:.4}",
                r.epoch + 1,
                r.train_loss,
                t.rmse_x,
                t.acc_speed,
                t.acc_dir
            ));
        }
    })?;
    if let TrainStatus::Diverged { epoch, reason } = &outcome.status {
        progress(format!("[{label}] stopped at epoch {}: {reason}", epoch + 1));
    }
    let m = evaluate(&outcome.model, ds, &ds.test)?;
    let mut metrics = RunMetrics::new(label, cfg, &outcome.model, m, Some(weights))?;
    metrics.status = outcome.status;
    metrics.history = outcome.history;
    Ok((outcome.model, metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub traces: usize,
    pub corpus_dir: PathBuf,
    /// SHA-256 of the corpus manifest file.
    pub corpus_hash: String,
    pub manifest: Manifest,
}

pub fn cmd_gen(cfg: &RunConfig) -> Result<GenSummary> {
    let start = start_run(cfg)?;
    let trials = generate(cfg)?;
    let dir = cfg.out_dir.join("corpus");
    write_corpus(&dir, &trials, &cfg.geometry, &cfg.wake)?;
    let bytes = fs::read(dir.join(MANIFEST_FILE))?;
    progress(format!("wrote {} traces to {}", trials.len(), dir.display()));
    let manifest = finish_run(cfg, "gen", vec!["corpus/"], start)?;
    Ok(GenSummary { traces: trials.len(), corpus_dir: dir, corpus_hash: bytes_hash(&bytes), manifest })
}

fn tune(cfg: &RunConfig, ds: &LabeledDataset) -> Result<TuningReport> {
    progress(format!(
        "weight search: {} agents x {} iterations, {} proxy epochs",
        cfg.tune.woa.population, cfg.tune.woa.max_iters, cfg.tune.proxy_epochs
    ));
    let report = tune_task_weights(ds, &cfg.model, &cfg.train, &cfg.tune.woa, cfg.tune.proxy_epochs)?;
    write_json(&cfg.out_dir.join(TUNING_FILE), &report)?;
    progress(format!("best weights {:?} (proxy fitness {:.4})", report.best_weights.to_array(), report.best_fitness));
    Ok(report)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<RunMetrics> {
    cfg.validate_training()?;
    let start = start_run(cfg)?;
    let ds = build_dataset(cfg)?;
    let mut outputs = vec![CHECKPOINT_FILE, METRICS_FILE];
    let weights = if cfg.tune_weights {
        outputs.push(TUNING_FILE);
        tune(cfg, &ds)?.best_weights
    } else {
        cfg.weights
    };
    let (model, metrics) = train_and_score(cfg, &ds, weights, cfg.model.backbone, "train")?;
    Checkpoint::from_model(&model, cfg.hash()?)?.save(&cfg.out_dir.join(CHECKPOINT_FILE))?;
    write_json(&cfg.out_dir.join(METRICS_FILE), &metrics)?;
    finish_run(cfg, "train", outputs, start)?;
    Ok(metrics)
}

/// Scores a saved checkpoint (default: the one in the output directory) on the test split.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<RunMetrics> {
    cfg.validate_training()?;
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.join(CHECKPOINT_FILE));
    let ck = Checkpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if ck.config.seq_len != cfg.dataset.sl || ck.config.sensors != cfg.geometry.count() {
        return Err(config_error(format!(
            "checkpoint expects sl {} with {} sensors, config has sl {} with {}",
            ck.config.seq_len,
            ck.config.sensors,
            cfg.dataset.sl,
            cfg.geometry.count()
        )));
    }
    let start = start_run(cfg)?;
    let model = ck.into_model()?;
    let ds = build_dataset(cfg)?;
    let m = evaluate(&model, &ds, &ds.test)?;
    let metrics = RunMetrics::new("eval", cfg, &model, m, None)?;
    write_json(&cfg.out_dir.join(EVAL_FILE), &metrics)?;
    finish_run(cfg, "eval", vec![EVAL_FILE], start)?;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneSummary {
    pub tuning: TuningReport,
    pub tuned: RunMetrics,
    pub baselines: Vec<RunMetrics>,
    pub baseline_median_fitness: f64,
    /// Tuned fitness followed by every baseline fitness.
    pub fitness_values: Vec<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Uniform draws inside the search box, seeded from the search seed.
pub fn random_weights(cfg: &RunConfig, count: usize) -> Vec<TaskWeights> {
    let woa = &cfg.tune.woa;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(woa.seed, 1_000));
    (0..count)
        .map(|_| {
            let mut w = [0.0; 3];
            for (j, v) in w.iter_mut().enumerate() {
                *v = rng.random_range(woa.lower[j]..=woa.upper[j]);
            }
            TaskWeights::from_array(w)
        })
        .collect()
}

/// Weight search, full retrain with the best weights, and random-weight baselines.
pub fn cmd_tune(cfg: &RunConfig) -> Result<TuneSummary> {
    cfg.validate_training()?;
    let start = start_run(cfg)?;
    let ds = build_dataset(cfg)?;
    let tuning = tune(cfg, &ds)?;
    let (model, tuned) = train_and_score(cfg, &ds, tuning.best_weights, cfg.model.backbone, "tuned")?;
    Checkpoint::from_model(&model, cfg.hash()?)?.save(&cfg.out_dir.join(CHECKPOINT_FILE))?;
    write_json(&cfg.out_dir.join(METRICS_FILE), &tuned)?;
    let mut baselines = Vec::new();
    for (i, w) in random_weights(cfg, cfg.tune.baselines).into_iter().enumerate() {
        let (_, m) = train_and_score(cfg, &ds, w, cfg.model.backbone, &format!("random-{i}"))?;
        baselines.push(m);
    }
    let baseline_fitness: Vec<f64> = baselines.iter().map(|m| m.fitness).collect();
    let mut fitness_values = vec![tuned.fitness];
    fitness_values.extend(&baseline_fitness);
    let summary = TuneSummary {
        baseline_median_fitness: median(&baseline_fitness),
        tuning,
        tuned,
        baselines,
        fitness_values,
    };
    write_json(&cfg.out_dir.join(TUNE_COMPARISON_FILE), &summary)?;
    finish_run(cfg, "tune", vec![TUNING_FILE, CHECKPOINT_FILE, METRICS_FILE, TUNE_COMPARISON_FILE], start)?;
    Ok(summary)
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        if values.is_empty() {
            return Stat { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub runs: usize,
    pub rmse_x: Stat,
    pub acc_speed: Stat,
    pub acc_dir: Stat,
    pub fitness: Stat,
}

impl MetricSummary {
    pub fn of(runs: &[&RunMetrics]) -> MetricSummary {
        let field = |f: fn(&RunMetrics) -> f64| Stat::of(&runs.iter().map(|m| f(m)).collect::<Vec<_>>());
        MetricSummary {
            runs: runs.len(),
            rmse_x: field(|m| m.rmse_x),
            acc_speed: field(|m| m.acc_speed),
            acc_dir: field(|m| m.acc_dir),
            fitness: field(|m| m.fitness),
        }
    }
}

/// `hybrid − cnn_only` for each score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub rmse_x: f64,
    pub acc_speed: f64,
    pub acc_dir: f64,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPair {
    pub seed: u64,
    pub hybrid: RunMetrics,
    pub cnn_only: RunMetrics,
    pub delta: MetricDelta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub pairs: Vec<AblationPair>,
    pub hybrid: MetricSummary,
    pub cnn_only: MetricSummary,
    pub backbone_parameters: BTreeMap<String, usize>,
}

/// CNN-BiLSTM against the parameter-matched CNN-only variant, same data and seeds.
pub fn cmd_ablate(cfg: &RunConfig) -> Result<AblationSummary> {
    cfg.validate_training()?;
    let start = start_run(cfg)?;
    let ds = build_dataset(cfg)?;
    let mut pairs = Vec::new();
    for &seed in &cfg.ablate.seeds {
        let c = cfg.with_seed(seed);
        let (_, hybrid) = train_and_score(&c, &ds, cfg.weights, Backbone::BiLstm, &format!("hybrid/{seed}"))?;
        let (_, cnn_only) = train_and_score(&c, &ds, cfg.weights, Backbone::FlattenDense, &format!("cnn-only/{seed}"))?;
        let delta = MetricDelta {
            rmse_x: hybrid.rmse_x - cnn_only.rmse_x,
            acc_speed: hybrid.acc_speed - cnn_only.acc_speed,
            acc_dir: hybrid.acc_dir - cnn_only.acc_dir,
            fitness: hybrid.fitness - cnn_only.fitness,
        };
        pairs.push(AblationPair { seed, hybrid, cnn_only, delta });
    }
    let mut backbone_parameters = BTreeMap::new();
    backbone_parameters.insert("bilstm".to_string(), cfg.model.bilstm_param_count()?);
    let flat = cfg.model.with_backbone(Backbone::FlattenDense);
    let (len, ch) = flat.conv_output()?;
    backbone_parameters.insert("flatten-dense".to_string(), flat.flatten_units()? * (len * ch + 1));
    let summary = AblationSummary {
        hybrid: MetricSummary::of(&pairs.iter().map(|p| &p.hybrid).collect::<Vec<_>>()),
        cnn_only: MetricSummary::of(&pairs.iter().map(|p| &p.cnn_only).collect::<Vec<_>>()),
        pairs,
        backbone_parameters,
    };
    write_json(&cfg.out_dir.join(ABLATION_FILE), &summary)?;
    finish_run(cfg, "ablate", vec![ABLATION_FILE], start)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sl: usize,
    pub runs: Vec<RunMetrics>,
    pub summary: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
}

/// One row per window length, sorted ascending, each averaged over the sweep seeds.
pub fn cmd_sweep_seqlen(cfg: &RunConfig) -> Result<SweepSummary> {
    cfg.validate_training()?;
    let start = start_run(cfg)?;
    let mut lens = cfg.sweep.seq_lens.clone();
    lens.sort_unstable();
    lens.dedup();
    let mut rows = Vec::new();
    for sl in lens {
        let c = cfg.with_sl(sl);
        let ds = build_dataset(&c)?;
        let mut runs = Vec::new();
        for &seed in &cfg.sweep.seeds {
            let (_, m) = train_and_score(&c.with_seed(seed), &ds, cfg.weights, cfg.model.backbone, &format!("sl={sl}/{seed}"))?;
            runs.push(m);
        }
        let summary = MetricSummary::of(&runs.iter().collect::<Vec<_>>());
        rows.push(SweepRow { sl, runs, summary });
    }
    let summary = SweepSummary { rows };
    write_json(&cfg.out_dir.join(SWEEP_FILE), &summary)?;
    finish_run(cfg, "sweep-seqlen", vec![SWEEP_FILE], start)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn stat_examples() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[7.0]).std, 0.0);
    }

    #[test]
    fn random_weights_in_bounds_and_seeded() {
        let cfg = RunConfig::default();
        let a = random_weights(&cfg, 5);
        assert_eq!(a, random_weights(&cfg, 5));
        for w in &a {
            assert!(w.validate().is_ok());
        }
    }
}
