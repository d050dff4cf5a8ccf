//! Synthetic wake surrogate: pressure traces seen by a cylindrical sensor
//! array while a propeller sweeps laterally past it.
//!
//! Each sensor reads a Gaussian lateral envelope centred on its own lateral
//! offset, scaled by an inverse-square longitudinal decay, plus a blade-rate
//! pulsation carried by the same envelope, white noise and a constant
//! hydrostatic bias. Before the sweep the propeller rests at `x_start` with
//! the rotor stopped, which gives the still-water baseline used for debiasing.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// Towards +x.
    P,
    /// Towards −x.
    N,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::P => 1.0,
            Direction::N => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::P => "P",
            Direction::N => "N",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "P" => Ok(Direction::P),
            "N" => Ok(Direction::N),
            other => Err(Error::invalid(format!("unknown direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorGeometry {
    pub radius_mm: f64,
    /// Angular positions from the array axis, strictly increasing.
    pub angles_deg: Vec<f64>,
}

impl Default for SensorGeometry {
    fn default() -> Self {
        SensorGeometry { radius_mm: 40.0, angles_deg: vec![-45.0, 0.0, 45.0] }
    }
}

impl SensorGeometry {
    pub fn count(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_mm > 0.0) || !self.radius_mm.is_finite() {
            return Err(Error::invalid(format!("sensor radius must be positive, got {}", self.radius_mm)));
        }
        if self.angles_deg.is_empty() {
            return Err(Error::invalid("sensor geometry has no sensors"));
        }
        if self.angles_deg.iter().any(|a| !a.is_finite()) || self.angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("sensor angles must be finite and strictly increasing"));
        }
        Ok(())
    }

    /// Lateral position of each sensor: `radius · sin(angle)`.
    pub fn lateral_offsets_mm(&self) -> Vec<f64> {
        self.angles_deg.iter().map(|a| self.radius_mm * a.to_radians().sin()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Peak blade-rate pulsation at the envelope maximum, Pa.
    pub pulsation_amp: f64,
    pub blade_rate_hz: f64,
    pub gaussian_sigma: f64,
    /// Hydrostatic offset per sensor, Pa. Missing entries read as zero.
    pub bias_per_sensor: Vec<f64>,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            pulsation_amp: 5.0,
            blade_rate_hz: 25.0,
            gaussian_sigma: 1.0,
            bias_per_sensor: vec![1962.0, 1957.5, 1966.0],
        }
    }
}

impl NoiseParams {
    pub fn silent() -> Self {
        NoiseParams { pulsation_amp: 0.0, blade_rate_hz: 25.0, gaussian_sigma: 0.0, bias_per_sensor: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.pulsation_amp, self.blade_rate_hz, self.gaussian_sigma];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("noise amplitudes and blade rate must be finite and non-negative"));
        }
        if self.bias_per_sensor.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("sensor bias must be finite"));
        }
        Ok(())
    }

    fn bias(&self, sensor: usize) -> f64 {
        self.bias_per_sensor.get(sensor).copied().unwrap_or(0.0)
    }
}

/// Constants of the mean pressure field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WakeModel {
    /// Envelope peak `A0` at the reference offset, Pa.
    pub peak_pa: f64,
    /// Lateral envelope width `σ_x`, mm.
    pub lateral_sigma_mm: f64,
    /// Longitudinal offset `y0` at which the peak equals `A0`, mm.
    pub reference_offset_mm: f64,
}

impl Default for WakeModel {
    fn default() -> Self {
        WakeModel { peak_pa: 30.0, lateral_sigma_mm: 60.0, reference_offset_mm: 250.0 }
    }
}

/// Where and when a pressure sample is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleInstant {
    /// Propeller lateral position relative to the array centre, mm.
    pub x_mm: f64,
    /// Longitudinal separation, mm.
    pub y_mm: f64,
    pub t_s: f64,
    /// Rotor phase at `t = 0`, radians.
    pub blade_phase: f64,
}

impl WakeModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_pa >= 0.0 && self.lateral_sigma_mm > 0.0 && self.reference_offset_mm > 0.0) {
            return Err(Error::invalid("wake model constants must be positive"));
        }
        Ok(())
    }

    /// `A0 · exp(−(x − x_off)² / 2σ_x²) · (y0 / y)²`
    pub fn envelope(&self, x_mm: f64, y_mm: f64, sensor_offset_mm: f64) -> f64 {
        let dx = x_mm - sensor_offset_mm;
        let ratio = self.reference_offset_mm / y_mm;
        self.peak_pa * (-dx * dx / (2.0 * self.lateral_sigma_mm * self.lateral_sigma_mm)).exp() * ratio * ratio
    }

    /// Wake pressure at one sensor, without hydrostatic bias. Draws one normal
    /// variate from `rng` when `gaussian_sigma > 0`.
    pub fn pressure_at<R: Rng + ?Sized>(
        &self,
        at: &SampleInstant,
        sensor_offset_mm: f64,
        noise: &NoiseParams,
        rng: &mut R,
    ) -> Result<f64> {
        let inputs = [at.x_mm, at.y_mm, at.t_s, at.blade_phase, sensor_offset_mm];
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pressure_at inputs".into()));
        }
        if !(at.y_mm > 0.0) {
            return Err(Error::invalid(format!("longitudinal offset must be positive, got {}", at.y_mm)));
        }
        let env = self.envelope(at.x_mm, at.y_mm, sensor_offset_mm);
        let pulsation = if noise.pulsation_amp > 0.0 && self.peak_pa > 0.0 {
            noise.pulsation_amp * (env / self.peak_pa) * (2.0 * PI * noise.blade_rate_hz * at.t_s + at.blade_phase).sin()
        } else {
            0.0
        };
        Ok(env + pulsation + gaussian(noise.gaussian_sigma, rng))
    }
}

fn gaussian<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("sigma validated").sample(rng)
    } else {
        0.0
    }
}

/// One lateral sweep at constant speed and longitudinal offset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub y_mm: f64,
    pub speed_mm_s: f64,
    pub direction: Direction,
    pub x_start_mm: f64,
    pub x_end_mm: f64,
    pub dt_s: f64,
    /// Stationary, rotor-off segment before the sweep, s.
    pub lead_in_s: f64,
    pub seed: u64,
    pub noise: NoiseParams,
}

pub const DEFAULT_HALF_RANGE_MM: f64 = 175.0;
pub const DEFAULT_DT_S: f64 = 0.01;
pub const DEFAULT_LEAD_IN_S: f64 = 1.0;

impl Scenario {
    /// Sweep over `±175 mm` in the given direction with default timing and noise.
    pub fn new(y_mm: f64, speed_mm_s: f64, direction: Direction, seed: u64) -> Self {
        let s = direction.sign();
        Scenario {
            y_mm,
            speed_mm_s,
            direction,
            x_start_mm: -s * DEFAULT_HALF_RANGE_MM,
            x_end_mm: s * DEFAULT_HALF_RANGE_MM,
            dt_s: DEFAULT_DT_S,
            lead_in_s: DEFAULT_LEAD_IN_S,
            seed,
            noise: NoiseParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.y_mm, self.speed_mm_s, self.x_start_mm, self.x_end_mm, self.dt_s, self.lead_in_s];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scenario".into()));
        }
        if !(self.y_mm > 0.0 && self.speed_mm_s > 0.0 && self.dt_s > 0.0) {
            return Err(Error::invalid("scenario y, speed and dt must be positive"));
        }
        if self.lead_in_s < 0.0 {
            return Err(Error::invalid("lead-in must be non-negative"));
        }
        if self.x_start_mm == self.x_end_mm {
            return Err(Error::invalid("sweep start and end coincide"));
        }
        if (self.x_end_mm - self.x_start_mm).signum() != self.direction.sign() {
            return Err(Error::invalid(format!(
                "sweep {} -> {} mm disagrees with direction {}",
                self.x_start_mm,
                self.x_end_mm,
                self.direction.as_str()
            )));
        }
        self.noise.validate()
    }

    pub fn sweep_duration_s(&self) -> f64 {
        (self.x_end_mm - self.x_start_mm).abs() / self.speed_mm_s
    }

    /// Samples at `τ = 0, dt, …` with `τ ≤ duration`.
    pub fn sweep_samples(&self) -> usize {
        (self.sweep_duration_s() / self.dt_s + 1e-9).floor() as usize + 1
    }

    pub fn lead_in_samples(&self) -> usize {
        (self.lead_in_s / self.dt_s).round() as usize
    }

    pub fn position_at(&self, tau_s: f64) -> f64 {
        self.x_start_mm + self.direction.sign() * self.speed_mm_s * tau_s
    }
}

/// Ground truth of the propeller at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueState {
    pub x_mm: f64,
    pub speed_mm_s: f64,
    pub direction: Direction,
}

/// A sampled trial: `frames` is row-major `len × sensors`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureTrace {
    pub sensors: usize,
    pub times: Vec<f64>,
    pub frames: Vec<f64>,
    pub truth: Vec<TrueState>,
    /// Number of leading stationary samples.
    pub motion_start: usize,
}

impl PressureTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn frame(&self, k: usize) -> &[f64] {
        &self.frames[k * self.sensors..(k + 1) * self.sensors]
    }

    /// Series of one sensor over time.
    pub fn sensor_series(&self, sensor: usize) -> Vec<f64> {
        self.frames.iter().skip(sensor).step_by(self.sensors).copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.frames.len() != n * self.sensors || self.truth.len() != n {
            return Err(Error::shape("PressureTrace", n, format!("{} frames, {} truth", self.frames.len(), self.truth.len())));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("trace times must be strictly increasing"));
        }
        if self.frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("trace frames".into()));
        }
        Ok(())
    }
}

/// Samples one trial: a stationary lead-in followed by the constant-speed sweep.
pub fn simulate_trial(scenario: &Scenario, geometry: &SensorGeometry, model: &WakeModel) -> Result<PressureTrace> {
    scenario.validate()?;
    geometry.validate()?;
    model.validate()?;
    let sweep = scenario.sweep_samples();
    if sweep < 2 {
        return Err(Error::invalid(format!(
            "dt = {} s yields {sweep} sample(s) over a {:.3} s sweep",
            scenario.dt_s,
            scenario.sweep_duration_s()
        )));
    }
    let lead = scenario.lead_in_samples();
    let n_sensors = geometry.count();
    let offsets = geometry.lateral_offsets_mm();
    let noise = &scenario.noise;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let blade_phase = rng.random::<f64>() * 2.0 * PI;

    let total = lead + sweep;
    let mut times = Vec::with_capacity(total);
    let mut frames = Vec::with_capacity(total * n_sensors);
    let mut truth = Vec::with_capacity(total);
    for k in 0..total {
        let t = k as f64 * scenario.dt_s;
        times.push(t);
        let x = if k < lead {
            scenario.x_start_mm
        } else {
            scenario.position_at((k - lead) as f64 * scenario.dt_s)
        };
        for (i, off) in offsets.iter().enumerate() {
            let wake = if k < lead {
                gaussian(noise.gaussian_sigma, &mut rng)
            } else {
                let at = SampleInstant { x_mm: x, y_mm: scenario.y_mm, t_s: t, blade_phase };
                model.pressure_at(&at, *off, noise, &mut rng)?
            };
            frames.push(noise.bias(i) + wake);
        }
        truth.push(TrueState { x_mm: x, speed_mm_s: scenario.speed_mm_s, direction: scenario.direction });
    }
    Ok(PressureTrace { sensors: n_sensors, times, frames, truth, motion_start: lead })
}

/// Full factorial of offsets × speeds × directions sharing one timing/noise setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioGrid {
    pub offsets_mm: Vec<f64>,
    pub speeds_mm_s: Vec<f64>,
    pub directions: Vec<Direction>,
    pub half_range_mm: f64,
    pub dt_s: f64,
    pub lead_in_s: f64,
    pub noise: NoiseParams,
    pub seed: u64,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        ScenarioGrid {
            offsets_mm: vec![250.0, 300.0],
            speeds_mm_s: vec![400.0, 500.0, 600.0, 700.0, 800.0],
            directions: vec![Direction::P, Direction::N],
            half_range_mm: DEFAULT_HALF_RANGE_MM,
            dt_s: DEFAULT_DT_S,
            lead_in_s: DEFAULT_LEAD_IN_S,
            noise: NoiseParams::default(),
            seed: 2024,
        }
    }
}

impl ScenarioGrid {
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        for &y in &self.offsets_mm {
            for &v in &self.speeds_mm_s {
                for &d in &self.directions {
                    let s = d.sign();
                    out.push(Scenario {
                        y_mm: y,
                        speed_mm_s: v,
                        direction: d,
                        x_start_mm: -s * self.half_range_mm,
                        x_end_mm: s * self.half_range_mm,
                        dt_s: self.dt_s,
                        lead_in_s: self.lead_in_s,
                        seed: derive_seed(self.seed, out.len() as u64),
                        noise: self.noise.clone(),
                    });
                }
            }
        }
        out
    }
}

/// SplitMix64 finalizer over `(base, index)`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One generated trial together with the scenario (and derived seed) that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub scenario: Scenario,
    pub repeat: usize,
    pub trace: PressureTrace,
}

/// `repeats` trials per scenario, each seeded from the scenario seed and repeat index.
pub fn generate_corpus(
    scenarios: &[Scenario],
    geometry: &SensorGeometry,
    model: &WakeModel,
    repeats: usize,
) -> Result<Vec<Trial>> {
    if scenarios.is_empty() {
        return Err(Error::invalid("empty scenario list"));
    }
    if repeats == 0 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    let mut out = Vec::with_capacity(scenarios.len() * repeats);
    for sc in scenarios {
        for r in 0..repeats {
            let scenario = Scenario { seed: derive_seed(sc.seed, r as u64), ..sc.clone() };
            let trace = simulate_trial(&scenario, geometry, model)?;
            out.push(Trial { scenario, repeat: r, trace });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    /// Relative to the manifest directory.
    pub path: String,
    pub repeat: usize,
    pub scenario: Scenario,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub geometry: SensorGeometry,
    pub model: WakeModel,
    pub entries: Vec<CorpusEntry>,
}

pub const MANIFEST_FILE: &str = "corpus.json";

/// CSV with header `t,p0,…,p{N-1},x,v,d`.
pub fn write_trace_csv(path: &Path, trace: &PressureTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..trace.sensors).map(|i| format!("p{i}")));
    header.extend(["x", "v", "d"].map(String::from));
    w.write_record(&header)?;
    for k in 0..trace.len() {
        let st = &trace.truth[k];
        let mut row = vec![trace.times[k].to_string()];
        row.extend(trace.frame(k).iter().map(|v| v.to_string()));
        row.push(st.x_mm.to_string());
        row.push(st.speed_mm_s.to_string());
        row.push(st.direction.as_str().to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a trace CSV; `motion_start` is not stored in the file and must be supplied.
pub fn read_trace_csv(path: &Path, motion_start: usize) -> Result<PressureTrace> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let cols = header.len();
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    if cols < 5 || &header[0] != "t" || &header[cols - 3] != "x" || &header[cols - 2] != "v" || &header[cols - 1] != "d" {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let sensors = cols - 4;
    let mut trace = PressureTrace { sensors, times: vec![], frames: vec![], truth: vec![], motion_start };
    for rec in r.records() {
        let rec = rec?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("column {i}: {e}")));
        trace.times.push(num(0)?);
        for i in 0..sensors {
            trace.frames.push(num(1 + i)?);
        }
        trace.truth.push(TrueState {
            x_mm: num(cols - 3)?,
            speed_mm_s: num(cols - 2)?,
            direction: Direction::parse(&rec[cols - 1])?,
        });
    }
    trace.validate()?;
    Ok(trace)
}

/// Writes `traces/trace_NNNN.csv` files plus the manifest into `dir`.
pub fn write_corpus(dir: &Path, trials: &[Trial], geometry: &SensorGeometry, model: &WakeModel) -> Result<CorpusManifest> {
    let traces_dir = dir.join("traces");
    fs::create_dir_all(&traces_dir).map_err(|e| Error::io(&traces_dir, e))?;
    let mut entries = Vec::with_capacity(trials.len());
    for (i, trial) in trials.iter().enumerate() {
        let rel = format!("traces/trace_{i:04}.csv");
        write_trace_csv(&dir.join(&rel), &trial.trace)?;
        entries.push(CorpusEntry { path: rel, repeat: trial.repeat, scenario: trial.scenario.clone() });
    }
    let manifest = CorpusManifest { geometry: geometry.clone(), model: *model, entries };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn read_corpus(dir: &Path) -> Result<(CorpusManifest, Vec<Trial>)> {
    let path: PathBuf = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CorpusManifest = serde_json::from_str(&text)?;
    let mut trials = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let trace = read_trace_csv(&dir.join(&e.path), e.scenario.lead_in_samples())?;
        trials.push(Trial { scenario: e.scenario.clone(), repeat: e.repeat, trace });
    }
    Ok((manifest, trials))
}
