use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};

use crate::commands::{
    read_json, write_json, AblationSummary, MetricSummary, RunMetrics, Stat, SweepSummary, TuneSummary, ABLATION_FILE,
    EVAL_FILE, METRICS_FILE, SWEEP_FILE, TUNE_COMPARISON_FILE,
};
use crate::config::config_error;

pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_JSON: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub dir: PathBuf,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub runs: Vec<RunEntry>,
    pub aggregate: Option<MetricSummary>,
    pub ablations: Vec<(PathBuf, AblationSummary)>,
    pub sweeps: Vec<(PathBuf, SweepSummary)>,
    pub tunings: Vec<(PathBuf, TuneSummary)>,
}

fn load_if<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str) -> Result<Option<T>> {
    let path = dir.join(name);
    if path.is_file() {
        Ok(Some(read_json(&path)?))
    } else {
        Ok(None)
    }
}

/// Collects the outputs of the given run directories.
pub fn collect(dirs: &[PathBuf]) -> Result<Report> {
    if dirs.is_empty() {
        return Err(config_error("report needs at least one run directory (usage: propwake report DIR [DIR ...])"));
    }
    let mut report = Report { runs: vec![], aggregate: None, ablations: vec![], sweeps: vec![], tunings: vec![] };
    for dir in dirs {
        if !dir.is_dir() {
            return Err(config_error(format!("{} is not a directory", dir.display())));
        }
        let before = report.runs.len() + report.ablations.len() + report.sweeps.len() + report.tunings.len();
        let metrics: Option<RunMetrics> = match load_if(dir, METRICS_FILE)? {
            Some(m) => Some(m),
            None => load_if(dir, EVAL_FILE)?,
        };
        if let Some(metrics) = metrics {
            report.runs.push(RunEntry { dir: dir.clone(), metrics });
        }
        if let Some(a) = load_if(dir, ABLATION_FILE)? {
            report.ablations.push((dir.clone(), a));
        }
        if let Some(s) = load_if(dir, SWEEP_FILE)? {
            report.sweeps.push((dir.clone(), s));
        }
        if let Some(t) = load_if(dir, TUNE_COMPARISON_FILE)? {
            report.tunings.push((dir.clone(), t));
        }
        if report.runs.len() + report.ablations.len() + report.sweeps.len() + report.tunings.len() == before {
            return Err(config_error(format!("no run outputs found in {}", dir.display())));
        }
    }
    if !report.runs.is_empty() {
        report.aggregate = Some(MetricSummary::of(&report.runs.iter().map(|r| &r.metrics).collect::<Vec<_>>()));
    }
    Ok(report)
}

fn pm(s: Stat) -> String {
    format!("{:.4} ± {:.4}", s.mean, s.std)
}

/// Horizontal bars scaled to the largest value.
pub fn bar_chart(rows: &[(String, f64)], width: usize) -> String {
    let max = rows.iter().map(|r| r.1).filter(|v| v.is_finite()).fold(0.0f64, f64::max);
    let label_w = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for (label, v) in rows {
        let n = if max > 0.0 && v.is_finite() { ((v / max) * width as f64).round() as usize } else { 0 };
        let _ = writeln!(out, "  {label:>label_w$} | {} {v:.4}", "#".repeat(n));
    }
    out
}

fn summary_table(out: &mut String, rows: &[(String, MetricSummary)]) {
    let _ = writeln!(out, "  {:<22} {:>4}  {:<17} {:<17} {:<17} {:<17}", "", "n", "rmse_x", "acc_speed", "acc_dir", "fitness");
    for (name, s) in rows {
        let _ = writeln!(
            out,
            "  {:<22} {:>4}  {:<17} {:<17} {:<17} {:<17}",
            name,
            s.runs,
            pm(s.rmse_x),
            pm(s.acc_speed),
            pm(s.acc_dir),
            pm(s.fitness)
        );
    }
}

pub fn render(report: &Report) -> String {
    let mut out = String::new();
    if !report.runs.is_empty() {
        let _ = writeln!(out, "runs");
        let _ = writeln!(out, "  {:<40} {:>8} {:>10} {:>8} {:>8}", "dir", "rmse_x", "acc_speed", "acc_dir", "fitness");
        for r in &report.runs {
            let m = &r.metrics;
            let _ = writeln!(
                out,
                "  {:<40} {:>8.4} {:>10.4} {:>8.4} {:>8.4}",
                r.dir.display(),
                m.rmse_x,
                m.acc_speed,
                m.acc_dir,
                m.fitness
            );
        }
        if let Some(agg) = &report.aggregate {
            let _ = writeln!(out, "\naggregate (mean ± std)");
            summary_table(&mut out, &[("all runs".to_string(), *agg)]);
        }
        for r in &report.runs {
            let h = &r.metrics.history;
            if h.is_empty() {
                continue;
            }
            let step = h.len().div_ceil(20);
            let rows: Vec<(String, f64)> =
                h.iter().filter(|e| e.epoch % step == 0 || e.epoch + 1 == h.len()).map(|e| (format!("epoch {}", e.epoch + 1), e.train_loss)).collect();
            let _ = writeln!(out, "\ntraining loss: {}", r.dir.display());
            out.push_str(&bar_chart(&rows, 50));
        }
    }
    for (dir, a) in &report.ablations {
        let _ = writeln!(out, "\nablation: {}", dir.display());
        summary_table(&mut out, &[("cnn-bilstm".to_string(), a.hybrid), ("cnn-only".to_string(), a.cnn_only)]);
        for p in &a.pairs {
            let _ = writeln!(
                out,
                "  seed {:<4} delta rmse_x {:+.4} acc_speed {:+.4} acc_dir {:+.4} fitness {:+.4}",
                p.seed, p.delta.rmse_x, p.delta.acc_speed, p.delta.acc_dir, p.delta.fitness
            );
        }
    }
    for (dir, s) in &report.sweeps {
        let _ = writeln!(out, "\nsequence length sweep: {}", dir.display());
        let rows: Vec<(String, MetricSummary)> = s.rows.iter().map(|r| (format!("sl={}", r.sl), r.summary)).collect();
        summary_table(&mut out, &rows);
        let _ = writeln!(out, "\n  mean fitness by sl");
        out.push_str(&bar_chart(&s.rows.iter().map(|r| (format!("sl={}", r.sl), r.summary.fitness.mean)).collect::<Vec<_>>(), 50));
    }
    for (dir, t) in &report.tunings {
        let _ = writeln!(out, "\nweight tuning: {}", dir.display());
        let w = t.tuning.best_weights;
        let _ = writeln!(out, "  best weights ({:.4}, {:.4}, {:.4}), {} trainings, {} cache hits", w.displacement, w.speed, w.direction, t.tuning.trainings, t.tuning.cache_hits);
        let mut rows = vec![("tuned".to_string(), t.tuned.fitness)];
        for b in &t.baselines {
            let w = b.weights.unwrap_or_default();
            rows.push((format!("random ({:.2}, {:.2}, {:.2})", w.displacement, w.speed, w.direction), b.fitness));
        }
        out.push_str(&bar_chart(&rows, 50));
        let _ = writeln!(out, "  baseline median fitness {:.4}", t.baseline_median_fitness);
        let _ = writeln!(out, "\n  best proxy fitness per iteration");
        out.push_str(&bar_chart(
            &t.tuning.iterations.iter().map(|i| (format!("iter {}", i.iteration + 1), i.best_fitness)).collect::<Vec<_>>(),
            50,
        ));
    }
    out
}

/// Writes `report.txt` and `report.json` into `out_dir`.
pub fn write_report(report: &Report, out_dir: &Path) -> Result<String> {
    fs::create_dir_all(out_dir)?;
    let text = render(report);
    fs::write(out_dir.join(REPORT_TEXT), &text)?;
    write_json(&out_dir.join(REPORT_JSON), report)?;
    Ok(text)
}
