use std::fs;
use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::report::{summarize, MetricReport, SeedFailure};
use crate::data::{generate_synthetic, load_dataset, save_dataset, DatasetSplit};
use crate::error::{io_err, CoreError, Result};
use crate::prune::{discretize, ArchitectureExport, Discretizer, PruneConfig, PruneTrace, Provenance};
use crate::search::Supernet;
use crate::train::{
    evaluate, mean_pairwise_cross_entropy, penalty_value, selector_distributions, train_supernet, BilevelTrainer,
    Checkpoint, Evaluation, TrainConfig, TrainHistory,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const DATASET_FILE: &str = "dataset.ndjson";
pub const SUPERNET_FILE: &str = "supernet.json";
pub const HISTORY_FILE: &str = "history.json";
pub const ARCHITECTURE_FILE: &str = "architecture.json";
pub const NETWORK_FILE: &str = "network.json";
pub const TRACE_FILE: &str = "trace.json";
pub const METRICS_FILE: &str = "metrics.json";

pub(crate) fn seed_dir_name(seed: u64) -> String {
    format!("seed-{seed}")
}

pub(crate) fn summary_file_name(method: Discretizer) -> String {
    format!("{method}-summary.json")
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(io_err(path))
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(CoreError::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// Validation and test results of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub validation: Evaluation,
    pub test: Evaluation,
    pub parameters: usize,
}

/// Metrics document of one seed and discretizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub config_hash: String,
    pub seed: u64,
    pub discretizer: Discretizer,
    pub penalty_weight: f64,
    pub supernet: ModelResult,
    pub discrete: ModelResult,
    /// Penalty value of the trained supernet's selectors.
    pub penalty: f64,
    /// Mean pairwise cross-entropy between node selector distributions.
    pub selector_divergence: f64,
    pub trace_events: usize,
}

/// Artifacts of one configuration, rooted at `<out>/<hash>`.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub hash: String,
    pub dir: PathBuf,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let hash = config.hash();
        let dir = config.run_dir();
        Ok(Self { config, hash, dir })
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.dir.join(seed_dir_name(seed))
    }

    pub fn method_dir(&self, seed: u64, method: Discretizer) -> PathBuf {
        self.seed_dir(seed).join(method.name())
    }

    fn prepare(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let config = self.dir.join(CONFIG_FILE);
        if !config.exists() {
            fs::write(&config, self.config.to_toml()?).map_err(io_err(&config))?;
        }
        Ok(())
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.config.train.clone()
        }
    }

    fn fresh_network(&self, data: &DatasetSplit, seed: u64) -> Result<Supernet> {
        Supernet::new(self.config.search.clone(), data.dims, data.task, seed)
    }

    fn dataset(&self, seed: u64) -> Result<DatasetSplit> {
        match &self.config.data.path {
            Some(path) => load_dataset(path),
            None => generate_synthetic(&self.config.data.synth(seed)),
        }
    }

    /// Generates (or loads) the data and trains the supernet for `seed`.
    /// Refuses to replace an existing checkpoint unless `force`.
    pub fn train_seed(&self, seed: u64, force: bool) -> Result<TrainHistory> {
        let dir = self.seed_dir(seed);
        if dir.join(SUPERNET_FILE).exists() {
            if !force {
                return Err(CoreError::AlreadyExists(dir));
            }
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        self.prepare(&dir)?;
        let data = self.dataset(seed)?;
        save_dataset(&data, &dir.join(DATASET_FILE))?;
        let cfg = self.train_config(seed);
        let mut net = self.fresh_network(&data, seed)?;
        let history = train_supernet(&mut net, &data, &cfg)?;
        write_json(&dir.join(HISTORY_FILE), &history)?;
        Checkpoint::capture(&net, &BilevelTrainer::from_config(&cfg))?.save(&dir.join(SUPERNET_FILE))?;
        Ok(history)
    }

    fn load_trained(&self, seed: u64) -> Result<(DatasetSplit, Supernet)> {
        let dir = self.seed_dir(seed);
        let checkpoint = Checkpoint::load_artifact(&dir.join(SUPERNET_FILE))?;
        let data = load_dataset(&dir.join(DATASET_FILE))?;
        let mut net = self.fresh_network(&data, seed)?;
        checkpoint.restore(&mut net)?;
        Ok((data, net))
    }

    /// Discretizes the trained supernet of `seed`.
    pub fn discretize_seed(&self, seed: u64, method: Discretizer, force: bool) -> Result<ArchitectureExport> {
        let dir = self.method_dir(seed, method);
        if dir.join(ARCHITECTURE_FILE).exists() {
            if !force {
                return Err(CoreError::AlreadyExists(dir));
            }
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let (data, mut net) = self.load_trained(seed)?;
        let cfg = PruneConfig {
            seed,
            finetune_steps: self.config.train.finetune_steps,
            finetune_lr: self.config.train.finetune_lr,
            batch_size: self.config.train.batch_size,
            penalty_weight: self.config.train.penalty_weight,
        };
        let (arch, trace) = discretize(method, &mut net, &data, &cfg)?;
        self.prepare(&dir)?;
        if let Some(trace) = &trace {
            write_json(&dir.join(TRACE_FILE), trace)?;
            Checkpoint::capture(&net, &BilevelTrainer::new(cfg.finetune_lr, cfg.finetune_lr, cfg.penalty_weight))?
                .save(&dir.join(NETWORK_FILE))?;
        }
        let export = arch.export(Some(Provenance {
            seed,
            config_hash: self.hash.clone(),
            discretizer: method.name().to_string(),
            trace_events: trace.as_ref().map_or(0, |t| t.events.len()),
            initial_metric: trace.as_ref().map(|t| t.initial_metric),
            final_metric: trace.as_ref().map(PruneTrace::final_metric),
        }));
        export.save(&dir.join(ARCHITECTURE_FILE))?;
        Ok(export)
    }

    /// Scores the supernet and its discretization on validation and test
    /// and writes the seed's metrics document.
    pub fn evaluate_seed(&self, seed: u64, method: Discretizer, force: bool) -> Result<SeedMetrics> {
        let dir = self.method_dir(seed, method);
        let out = dir.join(METRICS_FILE);
        if out.exists() && !force {
            return Err(CoreError::AlreadyExists(out));
        }
        let (data, supernet) = self.load_trained(seed)?;
        let export = ArchitectureExport::load_artifact(&dir.join(ARCHITECTURE_FILE))?;
        // pruning finetunes the weights it keeps; the baselines reuse the
        // trained supernet
        let mut source = supernet.clone();
        let network = dir.join(NETWORK_FILE);
        if network.exists() {
            Checkpoint::load(&network)?.restore(&mut source)?;
        }
        let discrete = export.architecture.materialize(&source)?;
        let score = |net: &Supernet| -> Result<ModelResult> {
            Ok(ModelResult {
                validation: evaluate(net, &data.validation)?,
                test: evaluate(net, &data.test)?,
                parameters: net.param_count(),
            })
        };
        let dists = selector_distributions(&supernet);
        let metrics = SeedMetrics {
            config_hash: self.hash.clone(),
            seed,
            discretizer: method,
            penalty_weight: self.config.train.penalty_weight,
            supernet: score(&supernet)?,
            discrete: score(&discrete)?,
            penalty: penalty_value(&dists),
            selector_divergence: mean_pairwise_cross_entropy(&dists),
            trace_events: export.provenance.as_ref().map_or(0, |p| p.trace_events),
        };
        write_json(&out, &metrics)?;
        Ok(metrics)
    }

    /// Trains one seed (reusing an existing checkpoint unless `force`),
    /// then discretizes and evaluates it with each of `methods`.
    pub fn run_seed(&self, seed: u64, methods: &[Discretizer], force: bool) -> Vec<Result<SeedMetrics>> {
        if force || !self.seed_dir(seed).join(SUPERNET_FILE).exists() {
            if let Err(e) = self.train_seed(seed, true) {
                let msg = e.to_string();
                return methods
                    .iter()
                    .map(|_| Err(CoreError::Precondition(format!("training failed: {msg}"))))
                    .collect();
            }
        }
        methods
            .iter()
            .map(|&method| {
                self.discretize_seed(seed, method, true)?;
                self.evaluate_seed(seed, method, true)
            })
            .collect()
    }

    /// Runs every configured seed with each of `methods`, recording
    /// per-seed failures, and writes one summary per method. Refuses to
    /// start if any of the requested results already exist, unless `force`.
    pub fn run(&self, methods: &[Discretizer], force: bool) -> Result<Vec<MetricReport>> {
        if !force {
            for &seed in &self.config.run.seeds {
                for &method in methods {
                    let out = self.method_dir(seed, method).join(METRICS_FILE);
                    if out.exists() {
                        return Err(CoreError::AlreadyExists(out));
                    }
                }
            }
        }
        let mut results = vec![Vec::new(); methods.len()];
        let mut failures = vec![Vec::new(); methods.len()];
        for &seed in &self.config.run.seeds {
            for (i, outcome) in self.run_seed(seed, methods, force).into_iter().enumerate() {
                match outcome {
                    Ok(m) => results[i].push(m),
                    Err(e) => failures[i].push(SeedFailure {
                        seed,
                        error: e.to_string(),
                    }),
                }
            }
        }
        methods
            .iter()
            .zip(results)
            .zip(failures)
            .map(|((&method, r), f)| self.write_summary(method, &r, f))
            .collect()
    }

    /// Rewrites the summary of `method` from the metrics documents present
    /// for the configured seeds; absent seeds are recorded as failures.
    pub fn summarize_existing(&self, method: Discretizer) -> Result<MetricReport> {
        let mut results = Vec::new();
        let mut failures = Vec::new();
        for &seed in &self.config.run.seeds {
            match read_json::<SeedMetrics>(&self.method_dir(seed, method).join(METRICS_FILE)) {
                Ok(m) => results.push(m),
                Err(e) => failures.push(SeedFailure {
                    seed,
                    error: e.to_string(),
                }),
            }
        }
        self.write_summary(method, &results, failures)
    }

    pub fn write_summary(
        &self,
        method: Discretizer,
        results: &[SeedMetrics],
        failures: Vec<SeedFailure>,
    ) -> Result<MetricReport> {
        let report = summarize(&self.hash, method, self.config.train.penalty_weight, results, failures)?;
        self.prepare(&self.dir)?;
        write_json(&self.dir.join(summary_file_name(method)), &report)?;
        Ok(report)
    }
}

/// Runs `config` end to end with its configured discretizer.
pub fn run_experiment(config: &ExperimentConfig, force: bool) -> Result<MetricReport> {
    let mut reports = Experiment::new(config.clone())?.run(&[config.run.discretizer], force)?;
    Ok(reports.remove(0))
}

/// One cell of the penalty × discretizer grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixCell {
    pub penalty: bool,
    pub report: MetricReport,
}

/// Every discretizer with the configured penalty weight and with the
/// penalty switched off. Each supernet is trained once per seed and shared
/// by the three discretizers.
pub fn run_matrix(config: &ExperimentConfig, force: bool) -> Result<Vec<MatrixCell>> {
    let mut cells = Vec::new();
    for penalty in [true, false] {
        let mut cfg = config.clone();
        if !penalty {
            cfg.train.penalty_weight = 0.0;
        }
        let exp = Experiment::new(cfg)?;
        for report in exp.run(&Discretizer::ALL, force)? {
            cells.push(MatrixCell { penalty, report });
        }
        if config.train.penalty_weight == 0.0 {
            break;
        }
    }
    Ok(cells)
}

impl Checkpoint {
    fn load_artifact(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CoreError::MissingArtifact(path.to_path_buf()));
        }
        Self::load(path)
    }
}

impl ArchitectureExport {
    fn load_artifact(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(CoreError::MissingArtifact(path.to_path_buf()));
        }
        Self::load(path)
    }
}
