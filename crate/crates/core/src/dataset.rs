//! From raw traces to standardized, labelled windows with a stratified split.
//!
//! Windows are cut from the whole debiased trace, lead-in included, and a
//! window is kept only when the state at its final frame lies inside the
//! clip range. The label of a window is that final-frame state.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wake::{Direction, PressureTrace, Trial};

/// Lateral half-range kept for estimation, mm. Labels are `x / CLIP_MM`.
pub const CLIP_MM: f64 = 120.0;
pub const DEFAULT_BASELINE_LEN: usize = 50;

/// `sl × N` consecutive frames, row-major, ending at `end_index` of its trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub frames: Vec<f64>,
    pub end_index: usize,
}

/// Estimation target: normalized displacement and class indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    pub x: f64,
    pub v_class: usize,
    pub d_class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub window: Window,
    pub state: MotionState,
    /// Index of the source trace within the corpus.
    pub trace: usize,
}

/// Subtracts each sensor's mean over the first `baseline_len` samples.
pub fn debias(trace: &PressureTrace, baseline_len: usize) -> Result<PressureTrace> {
    if baseline_len == 0 || baseline_len > trace.len() {
        return Err(Error::invalid(format!(
            "baseline length {baseline_len} must be in 1..={}",
            trace.len()
        )));
    }
    if baseline_len > trace.motion_start {
        return Err(Error::invalid(format!(
            "baseline length {baseline_len} exceeds the {} stationary samples",
            trace.motion_start
        )));
    }
    let n = trace.sensors;
    let mut mean = vec![0.0; n];
    for k in 0..baseline_len {
        for (m, v) in mean.iter_mut().zip(trace.frame(k)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= baseline_len as f64);
    let mut out = trace.clone();
    for row in out.frames.chunks_exact_mut(n) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    Ok(out)
}

/// Maps a lateral position into `[−1, 1]`, or `None` outside the clip range.
pub fn normalize_x(x_mm: f64) -> Option<f64> {
    (x_mm.abs() <= CLIP_MM).then(|| x_mm / CLIP_MM)
}

/// Samples of a trace inside the clip range, with normalized displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct ClippedTrace {
    pub sensors: usize,
    pub times: Vec<f64>,
    pub frames: Vec<f64>,
    pub x: Vec<f64>,
    /// Index of each kept sample in the source trace.
    pub source_index: Vec<usize>,
}

pub fn clip_and_normalize(trace: &PressureTrace) -> Result<ClippedTrace> {
    let mut out = ClippedTrace {
        sensors: trace.sensors,
        times: vec![],
        frames: vec![],
        x: vec![],
        source_index: vec![],
    };
    for k in 0..trace.len() {
        if let Some(x) = normalize_x(trace.truth[k].x_mm) {
            out.times.push(trace.times[k]);
            out.frames.extend_from_slice(trace.frame(k));
            out.x.push(x);
            out.source_index.push(k);
        }
    }
    if out.x.is_empty() {
        return Err(Error::invalid("no samples left inside the clip range"));
    }
    Ok(out)
}

/// Windows ending at `k = sl−1, sl−1+stride, …`; empty when the trace is shorter than `sl`.
pub fn make_windows(trace: &PressureTrace, sl: usize, stride: usize) -> Result<Vec<Window>> {
    if sl == 0 || stride == 0 {
        return Err(Error::invalid("sequence length and stride must be positive"));
    }
    if trace.len() < sl {
        log_short_trace(trace.len(), sl);
        return Ok(Vec::new());
    }
    let n = trace.sensors;
    Ok((sl - 1..trace.len())
        .step_by(stride)
        .map(|k| Window { frames: trace.frames[(k + 1 - sl) * n..(k + 1) * n].to_vec(), end_index: k })
        .collect())
}

fn log_short_trace(len: usize, sl: usize) {
    eprintln!("warning: trace of {len} samples is shorter than sequence length {sl}; no windows");
}

/// Ascending, de-duplicated speed set used for class indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedClasses(Vec<f64>);

impl SpeedClasses {
    pub fn new(mut speeds: Vec<f64>) -> Result<Self> {
        if speeds.is_empty() || speeds.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("speed set must be non-empty and finite"));
        }
        speeds.sort_by(f64::total_cmp);
        speeds.dedup();
        Ok(SpeedClasses(speeds))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn speeds(&self) -> &[f64] {
        &self.0
    }
}

/// `v` → rank in the ascending speed set (exact match); `P` → 0, `N` → 1.
pub fn encode_labels(speed: f64, direction: Direction, classes: &SpeedClasses) -> Result<(usize, usize)> {
    let v_class = classes
        .0
        .iter()
        .position(|s| *s == speed)
        .ok_or_else(|| Error::invalid(format!("speed {speed} is not in the configured set {:?}", classes.0)))?;
    let d_class = match direction {
        Direction::P => 0,
        Direction::N => 1,
    };
    Ok((v_class, d_class))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowOptions {
    pub sl: usize,
    pub stride: usize,
    pub baseline_len: usize,
}

impl Default for WindowOptions {
    fn default() -> Self {
        WindowOptions { sl: 64, stride: 1, baseline_len: DEFAULT_BASELINE_LEN }
    }
}

/// Debias → window → keep windows whose final frame is inside the clip range → label.
pub fn build_samples(trials: &[Trial], opts: &WindowOptions, classes: &SpeedClasses) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (ti, trial) in trials.iter().enumerate() {
        let trace = debias(&trial.trace, opts.baseline_len)?;
        for window in make_windows(&trace, opts.sl, opts.stride)? {
            let truth = trace.truth[window.end_index];
            let Some(x) = normalize_x(truth.x_mm) else { continue };
            let (v_class, d_class) = encode_labels(truth.speed_mm_s, truth.direction, classes)?;
            out.push(Sample { window, state: MotionState { x, v_class, d_class }, trace: ti });
        }
    }
    Ok(out)
}

/// Deterministic split stratified by `(v_class, d_class)`; both parts sorted.
pub fn split(samples: &[Sample], ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} must lie in (0, 1)")));
    }
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry((s.state.v_class, s.state.d_class)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (class, mut idx) in groups {
        if idx.len() < 2 {
            return Err(Error::invalid(format!("class {class:?} has fewer than 2 samples")));
        }
        idx.shuffle(&mut rng);
        let n_train = ((idx.len() as f64 * ratio).round() as usize).clamp(1, idx.len() - 1);
        test.extend_from_slice(&idx[n_train..]);
        idx.truncate(n_train);
        train.extend(idx);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Per-sensor mean and standard deviation of the training windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(windows: impl IntoIterator<Item = &'a Window>, sensors: usize) -> Result<Self> {
        let mut sum = vec![0.0; sensors];
        let mut sq = vec![0.0; sensors];
        let mut count = 0usize;
        for w in windows {
            for row in w.frames.chunks_exact(sensors) {
                for i in 0..sensors {
                    sum[i] += row[i];
                    sq[i] += row[i] * row[i];
                }
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::invalid("cannot standardize an empty window set"));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, std })
    }

    pub fn identity(sensors: usize) -> Self {
        Standardizer { mean: vec![0.0; sensors], std: vec![1.0; sensors] }
    }

    /// Writes the standardized window into `out` (same length as `frames`).
    pub fn apply_into(&self, frames: &[f64], out: &mut [f64]) {
        let n = self.mean.len();
        for (row, orow) in frames.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            for i in 0..n {
                orow[i] = (row[i] - self.mean[i]) / self.std[i];
            }
        }
    }
}

/// Windows, labels, split and normalization statistics of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub sl: usize,
    pub sensors: usize,
    pub speed_classes: SpeedClasses,
    pub samples: Vec<Sample>,
    pub split_seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub standardizer: Standardizer,
    pub config_hash: String,
}

impl LabeledDataset {
    /// Splits `samples` and fits the standardizer on the training part.
    pub fn prepare(
        samples: Vec<Sample>,
        sl: usize,
        sensors: usize,
        speed_classes: SpeedClasses,
        ratio: f64,
        split_seed: u64,
        config_hash: impl Into<String>,
    ) -> Result<Self> {
        if let Some(bad) = samples.iter().find(|s| s.window.frames.len() != sl * sensors) {
            return Err(Error::shape("LabeledDataset window", sl * sensors, bad.window.frames.len()));
        }
        let (train, test) = split(&samples, ratio, split_seed)?;
        let standardizer = Standardizer::fit(train.iter().map(|&i| &samples[i].window), sensors)?;
        Ok(LabeledDataset {
            sl,
            sensors,
            speed_classes,
            samples,
            split_seed,
            train,
            test,
            standardizer,
            config_hash: config_hash.into(),
        })
    }

    /// Same dataset restricted to the given training indices (test split unchanged).
    pub fn with_train_subset(&self, train: Vec<usize>) -> Self {
        LabeledDataset { train, ..self.clone() }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
