use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{
    read_json, seed_dir_name, summary_file_name, write_json, SeedMetrics, CONFIG_FILE, METRICS_FILE, TRACE_FILE,
};
use crate::error::{io_err, CoreError, Result};
use crate::prune::{Discretizer, PruneTrace};

pub const REPORT_FILE: &str = "report.json";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

/// Mean and population standard deviation of one quantity across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// `supernet` or `discrete`.
    pub model: String,
    /// `validation` or `test`.
    pub split: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

/// Aggregate over the seeds of one configuration and discretizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config_hash: String,
    pub discretizer: Discretizer,
    pub penalty_weight: f64,
    /// Seeds with a complete metrics document.
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub rows: Vec<MetricRow>,
    pub failures: Vec<SeedFailure>,
}

impl MetricReport {
    pub fn row(&self, model: &str, split: &str, metric: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.split == split && r.metric == metric)
    }
}

/// Mean and population standard deviation; `(NaN, NaN)` when empty.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn summarize(
    config_hash: &str,
    discretizer: Discretizer,
    penalty_weight: f64,
    results: &[SeedMetrics],
    failures: Vec<SeedFailure>,
) -> Result<MetricReport> {
    let mut rows: Vec<MetricRow> = Vec::new();
    let mut push = |model: &str, split: &str, metric: &str, value: f64| {
        match rows
            .iter_mut()
            .find(|r| r.model == model && r.split == split && r.metric == metric)
        {
            Some(r) => r.values.push(value),
            None => rows.push(MetricRow {
                model: model.to_string(),
                split: split.to_string(),
                metric: metric.to_string(),
                mean: 0.0,
                std: 0.0,
                values: vec![value],
            }),
        }
    };
    for m in results {
        if m.config_hash != config_hash || m.discretizer != discretizer {
            return Err(CoreError::Config(format!(
                "seed {} belongs to run {} / {}, not {config_hash} / {discretizer}",
                m.seed, m.config_hash, m.discretizer
            )));
        }
        for (model, result) in [("supernet", &m.supernet), ("discrete", &m.discrete)] {
            for (split, eval) in [("validation", &result.validation), ("test", &result.test)] {
                for (name, value) in eval.metrics.entries() {
                    push(model, split, name, value);
                }
                push(model, split, "loss", eval.loss);
            }
        }
        push("supernet", "-", "selector-divergence", m.selector_divergence);
    }
    for r in &mut rows {
        (r.mean, r.std) = mean_std(&r.values);
    }
    Ok(MetricReport {
        config_hash: config_hash.to_string(),
        discretizer,
        penalty_weight,
        runs: results.len(),
        seeds: results.iter().map(|m| m.seed).collect(),
        rows,
        failures,
    })
}

/// One point of a pruning trajectory: validation metric after `step`
/// removals (step 0 is the trained supernet).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub config_hash: String,
    pub seed: u64,
    pub step: usize,
    pub edge: Option<String>,
    pub removed: Option<String>,
    pub metric_after_removal: f64,
    pub metric_after_finetune: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutput {
    pub reports: Vec<MetricReport>,
    /// Expected metrics documents that were not found.
    pub missing: Vec<PathBuf>,
    #[serde(skip)]
    pub trajectory: Vec<TrajectoryPoint>,
    #[serde(skip)]
    pub text: String,
}

fn sorted_children(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn run_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(CONFIG_FILE).exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    Ok(sorted_children(dir)?
        .into_iter()
        .filter(|d| d.join(CONFIG_FILE).exists())
        .collect())
}

fn seeds_present(run: &Path) -> Result<Vec<u64>> {
    let mut seeds: Vec<u64> = sorted_children(run)?
        .iter()
        .filter_map(|d| d.file_name()?.to_str()?.strip_prefix("seed-")?.parse().ok())
        .collect();
    seeds.sort_unstable();
    Ok(seeds)
}

fn format_cell(row: Option<&MetricRow>) -> String {
    match row {
        Some(r) => format!("{:.4} ± {:.4}", r.mean, r.std),
        None => "-".to_string(),
    }
}

/// Renders one report as a table of `mean ± std` per model and split.
pub fn render(report: &MetricReport) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "run {}  discretizer {}  penalty {}  ({} seeds{})",
        report.config_hash,
        report.discretizer,
        report.penalty_weight,
        report.runs,
        if report.failures.is_empty() {
            String::new()
        } else {
            format!(", {} failed", report.failures.len())
        }
    );
    let mut metrics: Vec<&str> = Vec::new();
    for r in &report.rows {
        if r.model != "supernet" || r.split != "-" {
            if !metrics.contains(&r.metric.as_str()) {
                metrics.push(&r.metric);
            }
        }
    }
    let _ = write!(text, "{:<10}{:<12}", "model", "split");
    for m in &metrics {
        let _ = write!(text, "{m:<20}");
    }
    text.push('\n');
    for model in ["supernet", "discrete"] {
        for split in ["validation", "test"] {
            let _ = write!(text, "{model:<10}{split:<12}");
            for m in &metrics {
                let _ = write!(text, "{:<20}", format_cell(report.row(model, split, m)));
            }
            text.push('\n');
        }
    }
    if let Some(r) = report.row("supernet", "-", "selector-divergence") {
        let _ = writeln!(text, "selector divergence {}", format_cell(Some(r)));
    }
    for f in &report.failures {
        let _ = writeln!(text, "seed {} failed: {}", f.seed, f.error);
    }
    text
}

/// Aggregates every run found under `dir` (a run directory or a directory
/// of runs) from the per-seed metrics files, writes `report.json` and
/// `trajectory.csv` into `dir`, and returns the rendered tables. Missing
/// metrics files are listed, not fatal.
pub fn report(dir: &Path) -> Result<ReportOutput> {
    let mut out = ReportOutput {
        reports: Vec::new(),
        missing: Vec::new(),
        trajectory: Vec::new(),
        text: String::new(),
    };
    for run in run_dirs(dir)? {
        let cfg = ExperimentConfig::load(&run.join(CONFIG_FILE))?;
        let hash = cfg.hash();
        let present = seeds_present(&run)?;
        for method in Discretizer::ALL {
            let summary: Option<MetricReport> = read_json(&run.join(summary_file_name(method))).ok();
            let touched = summary.is_some()
                || present
                    .iter()
                    .any(|s| run.join(seed_dir_name(*s)).join(method.name()).exists());
            if !touched {
                continue;
            }
            let mut seeds = present.clone();
            if let Some(s) = &summary {
                seeds.extend(s.seeds.iter().chain(s.failures.iter().map(|f| &f.seed)));
            }
            seeds.sort_unstable();
            seeds.dedup();
            let mut results = Vec::new();
            for seed in seeds {
                let seed_dir = run.join(seed_dir_name(seed));
                let path = seed_dir.join(method.name()).join(METRICS_FILE);
                if !path.exists() {
                    out.missing.push(path);
                    continue;
                }
                results.push(read_json::<SeedMetrics>(&path)?);
                if let Ok(trace) = read_json::<PruneTrace>(&seed_dir.join(method.name()).join(TRACE_FILE)) {
                    out.trajectory.extend(trajectory(&hash, seed, &trace));
                }
            }
            let failures = summary.map(|s| s.failures).unwrap_or_default();
            let r = summarize(&hash, method, cfg.train.penalty_weight, &results, failures)?;
            out.text.push_str(&render(&r));
            out.text.push('\n');
            out.reports.push(r);
        }
    }
    if out.reports.is_empty() {
        out.text = format!("no runs found in {}\n", dir.display());
    }
    if !out.missing.is_empty() {
        out.text.push_str("missing metrics files:\n");
        for p in &out.missing {
            let _ = writeln!(out.text, "  {}", p.display());
        }
    }
    if dir.is_dir() {
        write_json(&dir.join(REPORT_FILE), &out)?;
        let csv = dir.join(TRAJECTORY_FILE);
        fs::write(&csv, trajectory_csv(&out.trajectory)).map_err(io_err(&csv))?;
    }
    Ok(out)
}

fn trajectory(hash: &str, seed: u64, trace: &PruneTrace) -> Vec<TrajectoryPoint> {
    let mut points = vec![TrajectoryPoint {
        config_hash: hash.to_string(),
        seed,
        step: 0,
        edge: None,
        removed: None,
        metric_after_removal: trace.initial_metric,
        metric_after_finetune: trace.initial_metric,
    }];
    for (i, e) in trace.events.iter().enumerate() {
        points.push(TrajectoryPoint {
            config_hash: hash.to_string(),
            seed,
            step: i + 1,
            edge: Some(e.edge.to_string()),
            removed: Some(e.removed.clone()),
            metric_after_removal: e.metric_after_removal,
            metric_after_finetune: e.metric_after_finetune,
        });
    }
    points
}

pub fn trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let mut csv = String::from("config_hash,seed,step,edge,removed,metric_after_removal,metric_after_finetune\n");
    for p in points {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            p.config_hash,
            p.seed,
            p.step,
            p.edge.as_deref().unwrap_or(""),
            p.removed.as_deref().unwrap_or(""),
            p.metric_after_removal,
            p.metric_after_finetune
        );
    }
    csv
}
