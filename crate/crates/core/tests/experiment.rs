mod common;

use std::fs;
use std::path::Path;

use common::*;
use mmnas_core::data::PlantedRule;
use mmnas_core::experiment::*;
use mmnas_core::prune::Discretizer;
use mmnas_core::CoreError;

fn quick(out: &Path, seeds: Vec<u64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.train = 24;
    cfg.data.validation = 12;
    cfg.data.test = 12;
    cfg.data.dims = small_dims();
    cfg.search = mmnas_core::search::SearchSpace {
        nodes: 2,
        ..small_space()
    };
    cfg.train.epochs = 1;
    cfg.train.batch_size = 8;
    cfg.train.finetune_steps = 1;
    cfg.run.seeds = seeds;
    cfg.run.out = out.to_path_buf();
    cfg
}

#[test]
fn toml_round_trip_and_defaults() {
    let cfg = quick(Path::new("somewhere"), vec![3, 4]);
    let text = cfg.to_toml().unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);

    let partial = ExperimentConfig::from_toml("[data]\nrule = \"static-only\"\n[train]\nepochs = 3\n").unwrap();
    assert_eq!(partial.data.rule, PlantedRule::StaticOnly);
    assert_eq!(partial.train.epochs, 3);
    assert_eq!(partial.search, ExperimentConfig::default().search);

    assert!(matches!(
        ExperimentConfig::from_toml("[train]\nepochs_typo = 3\n"),
        Err(CoreError::Config(_))
    ));
    assert!(ExperimentConfig::from_toml("[run]\nseeds = []\n").is_err());
}

#[test]
fn hash_ignores_run_section_only() {
    let base = quick(Path::new("a"), vec![0]);
    let hash = base.hash();
    assert_eq!(hash.len(), HASH_LEN);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));

    let mut moved = base.clone();
    moved.run.out = "b".into();
    moved.run.seeds = vec![1, 2, 3];
    moved.run.discretizer = Discretizer::Magnitude;
    assert_eq!(moved.hash(), hash);
    assert_eq!(moved.run_dir(), Path::new("b").join(&hash));

    let mut off = base.clone();
    off.train.penalty_weight = 0.0;
    assert_ne!(off.hash(), hash);
    let mut wider = base.clone();
    wider.search.embed_dim = 8;
    assert_ne!(wider.hash(), hash);
}

#[test]
fn empty_directory_reports_no_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = report(dir.path()).unwrap();
    assert!(out.reports.is_empty());
    assert!(out.text.starts_with("no runs found"));
    let missing = report(&dir.path().join("absent")).unwrap();
    assert!(missing.text.starts_with("no runs found"));
}

#[test]
fn one_seed_run_has_zero_spread_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(dir.path(), vec![5]);
    let summary = run_experiment(&cfg, false).unwrap();
    assert_eq!(summary.runs, 1);
    assert!(summary.failures.is_empty());
    for row in &summary.rows {
        assert_eq!(row.std, 0.0, "{} {} {}", row.model, row.split, row.metric);
        assert_eq!(row.mean, row.values[0]);
    }
    let run = cfg.run_dir();
    for file in ["config.toml", "prune-summary.json"] {
        assert!(run.join(file).exists(), "{file}");
    }
    for file in [SUPERNET_FILE, HISTORY_FILE, DATASET_FILE] {
        assert!(run.join("seed-5").join(file).exists(), "{file}");
    }
    for file in [ARCHITECTURE_FILE, NETWORK_FILE, TRACE_FILE, METRICS_FILE] {
        assert!(run.join("seed-5/prune").join(file).exists(), "{file}");
    }
    assert_eq!(ExperimentConfig::load(&run.join(CONFIG_FILE)).unwrap(), cfg);
}

#[test]
fn rerun_refuses_without_force_and_is_deterministic_with_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(dir.path(), vec![1]);
    run_experiment(&cfg, false).unwrap();
    let metrics = cfg.run_dir().join("seed-1/prune").join(METRICS_FILE);
    let first = fs::read(&metrics).unwrap();
    assert!(matches!(run_experiment(&cfg, false), Err(CoreError::AlreadyExists(_))));
    run_experiment(&cfg, true).unwrap();
    assert_eq!(fs::read(&metrics).unwrap(), first);
}

#[test]
fn report_matches_recomputation_from_seed_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick(dir.path(), vec![0, 1]);
    cfg.run.discretizer = Discretizer::Magnitude;
    let summary = run_experiment(&cfg, false).unwrap();
    assert_eq!(summary.runs, 2);

    let out = report(dir.path()).unwrap();
    assert_eq!(out.reports, vec![summary.clone()]);
    assert!(out.missing.is_empty());
    assert!(dir.path().join(REPORT_FILE).exists());

    let seeds: Vec<SeedMetrics> = [0, 1]
        .iter()
        .map(|s| {
            let path = cfg.run_dir().join(format!("seed-{s}/magnitude")).join(METRICS_FILE);
            serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
        })
        .collect();
    let aupr: Vec<f64> = seeds
        .iter()
        .map(|m| m.discrete.test.metrics.entries().into_iter().find(|e| e.0 == "aupr").unwrap().1)
        .collect();
    let mean = (aupr[0] + aupr[1]) / 2.0;
    let std = (((aupr[0] - mean).powi(2) + (aupr[1] - mean).powi(2)) / 2.0).sqrt();
    let row = summary.row("discrete", "test", "aupr").unwrap();
    assert!((row.mean - mean).abs() < 1e-15);
    assert!((row.std - std).abs() < 1e-15);
    assert!(out.text.contains(&format!("{:.4} ± {:.4}", row.mean, row.std)));
}

#[test]
fn missing_metrics_are_listed_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(dir.path(), vec![0, 1]);
    run_experiment(&cfg, false).unwrap();
    let gone = cfg.run_dir().join("seed-1/prune").join(METRICS_FILE);
    fs::remove_file(&gone).unwrap();
    let out = report(&cfg.run_dir()).unwrap();
    assert_eq!(out.missing, vec![gone]);
    assert_eq!(out.reports[0].runs, 1);
    assert!(out.text.contains("missing metrics files"));
    let csv = fs::read_to_string(cfg.run_dir().join(TRAJECTORY_FILE)).unwrap();
    assert!(csv.starts_with("config_hash,seed,step"));
    assert!(csv.lines().count() > 2);
}

#[test]
fn stages_run_separately() {
    let dir = tempfile::tempdir().unwrap();
    let exp = Experiment::new(quick(dir.path(), vec![2])).unwrap();
    assert!(matches!(
        exp.discretize_seed(2, Discretizer::Perturb, false),
        Err(CoreError::MissingArtifact(_))
    ));
    let history = exp.train_seed(2, false).unwrap();
    assert_eq!(history.epochs.len(), 1);
    assert!(matches!(exp.train_seed(2, false), Err(CoreError::AlreadyExists(_))));
    exp.discretize_seed(2, Discretizer::Perturb, false).unwrap();
    let m = exp.evaluate_seed(2, Discretizer::Perturb, false).unwrap();
    assert_eq!(m.trace_events, 0);
    assert!(m.discrete.parameters < m.supernet.parameters);
    assert_eq!(exp.summarize_existing(Discretizer::Perturb).unwrap().runs, 1);
}

#[test]
fn matrix_shares_training_across_discretizers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(dir.path(), vec![0]);
    let cells = run_matrix(&cfg, false).unwrap();
    assert_eq!(cells.len(), 6);
    assert_eq!(cells.iter().filter(|c| c.penalty).count(), 3);
    for cell in &cells {
        assert_eq!(cell.report.runs, 1);
        assert_eq!(cell.report.penalty_weight, if cell.penalty { 0.1 } else { 0.0 });
    }
    let on = &cells[0].report;
    let off = &cells[3].report;
    assert_ne!(on.config_hash, off.config_hash);
    for cell in &cells[..3] {
        assert_eq!(
            cell.report.row("supernet", "validation", "loss"),
            on.row("supernet", "validation", "loss")
        );
    }
    assert_eq!(report(dir.path()).unwrap().reports.len(), 6);
}
