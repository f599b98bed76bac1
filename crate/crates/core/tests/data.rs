use mmnas_core::data::{
    bayes_accuracy, generate_synthetic, load_dataset, modality_summary, save_dataset, split_counts,
    DatasetSplit, Label, PatientRecord, PlantedRule, SynthConfig, TaskKind, SPLIT_RATIO,
};
use mmnas_core::CoreError;

fn sized(rule: PlantedRule, n: usize, seed: u64) -> SynthConfig {
    let mut cfg = SynthConfig::new(rule, seed);
    cfg.train = n;
    cfg.validation = 0;
    cfg.test = 0;
    cfg
}

fn accuracy(split: &DatasetSplit, predict: impl Fn(&PatientRecord) -> bool) -> f64 {
    let hits = split.train.iter().filter(|r| predict(r) == r.is_positive()).count();
    hits as f64 / split.train.len() as f64
}

fn ramp_score(r: &PatientRecord) -> f64 {
    let t = r.continuous[0].len();
    let half = (t as f64 - 1.0) / 2.0;
    r.continuous[0]
        .iter()
        .enumerate()
        .map(|(i, v)| v * (i as f64 - half) / half)
        .sum()
}

#[test]
fn same_seed_same_dataset() {
    for rule in PlantedRule::ALL {
        let cfg = SynthConfig::new(rule, 17);
        assert_eq!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&cfg).unwrap());
        let other = SynthConfig { seed: 18, ..cfg };
        assert_ne!(generate_synthetic(&cfg).unwrap(), generate_synthetic(&other).unwrap());
    }
}

#[test]
fn generated_records_are_valid() {
    for rule in PlantedRule::ALL {
        let split = generate_synthetic(&SynthConfig::new(rule, 3)).unwrap();
        split.validate().unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (600, 150, 150)
        );
    }
}

#[test]
fn noiseless_oracles_are_exact() {
    let split = generate_synthetic(&sized(PlantedRule::StaticOnly, 2000, 1)).unwrap();
    let tau = 0.0; // prevalence 0.5
    let acc = accuracy(&split, |r| {
        r.demographics.iter().sum::<f64>() / (r.demographics.len() as f64).sqrt() > tau
    });
    assert_eq!(acc, 1.0);

    let split = generate_synthetic(&sized(PlantedRule::TemporalCross, 2000, 1)).unwrap();
    let acc = accuracy(&split, |r| {
        let m = &r.continuous[0];
        m[m.len() - 1] > m[0] && r.demographics[0] > 0.0
    });
    assert_eq!(acc, 1.0);

    let split = generate_synthetic(&sized(PlantedRule::LateCombo, 2000, 1)).unwrap();
    let acc = accuracy(&split, |r| (r.continuous[0][0] > 0.0) != (r.note[0] > 0.0));
    assert_eq!(acc, 1.0);
    for rule in [PlantedRule::StaticOnly, PlantedRule::TemporalCross, PlantedRule::LateCombo] {
        assert_eq!(bayes_accuracy(&sized(rule, 1, 0)), Some(1.0));
    }
}

#[test]
fn noisy_bayes_accuracy_matches_likelihood_ratio_classifier() {
    let sigma = 1.5;
    let mut cfg = sized(PlantedRule::TemporalCross, 40_000, 5);
    cfg.noise = sigma;
    cfg.prevalence = 0.3;
    let rho = cfg.prevalence.sqrt();
    let split = generate_synthetic(&cfg).unwrap();
    let acc = accuracy(&split, |r| {
        let llr = 2.0 * ramp_score(r) / (sigma * sigma) + (rho / (1.0 - rho)).ln();
        llr > 0.0 && r.demographics[0] > 0.0
    });
    let expected = bayes_accuracy(&cfg).unwrap();
    assert!((acc - expected).abs() < 0.01, "{acc} vs {expected}");

    let mut cfg = sized(PlantedRule::LateCombo, 40_000, 5);
    cfg.noise = sigma;
    cfg.prevalence = 0.4;
    let q: f64 = (1.0 - (1.0 - 2.0 * cfg.prevalence).sqrt()) / 2.0;
    let t = cfg.dims.steps as f64;
    let split = generate_synthetic(&cfg).unwrap();
    let acc = accuracy(&split, |r| {
        let mean = r.continuous[0].iter().sum::<f64>() / t;
        let prior = (q / (1.0 - q)).ln();
        let a = 2.0 * mean * t / (sigma * sigma) + prior > 0.0;
        let b = 2.0 * r.note[0] / (sigma * sigma) + prior > 0.0;
        a != b
    });
    let expected = bayes_accuracy(&cfg).unwrap();
    assert!((acc - expected).abs() < 0.01, "{acc} vs {expected}");
}

/// Best accuracy of `score > τ` or `score < τ` over all thresholds.
fn best_threshold_accuracy(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    let n = scores.len() as f64;
    let positives = labels.iter().filter(|l| **l).count() as f64;
    // predict positive above the cut
    let mut below_neg = 0.0;
    let mut below_pos = 0.0;
    let mut best = positives.max(n - positives) / n;
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                below_pos += 1.0;
            } else {
                below_neg += 1.0;
            }
            i += 1;
        }
        let above_pos = positives - below_pos;
        let up = (below_neg + above_pos) / n;
        let down = (below_pos + (n - positives - below_neg)) / n;
        best = best.max(up).max(down);
    }
    best
}

fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let d = x[0].len() + 1;
    let mut a = vec![vec![0.0; d + 1]; d];
    for (row, target) in x.iter().zip(y) {
        let f: Vec<f64> = row.iter().copied().chain([1.0]).collect();
        for i in 0..d {
            for j in 0..d {
                a[i][j] += f[i] * f[j];
            }
            a[i][d] += f[i] * target;
        }
    }
    for i in 0..d {
        a[i][i] += 1e-9;
    }
    for col in 0..d {
        let pivot = (col..d).max_by(|p, q| a[*p][col].abs().total_cmp(&a[*q][col].abs())).unwrap();
        a.swap(col, pivot);
        for r in 0..d {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=d {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..d).map(|i| a[i][d] / a[i][i]).collect()
}

#[test]
fn late_combo_defeats_linear_probes() {
    let split = generate_synthetic(&sized(PlantedRule::LateCombo, 10_000, 9)).unwrap();
    let feats: Vec<Vec<f64>> = split.train.iter().map(modality_summary).collect();
    let labels: Vec<bool> = split.train.iter().map(PatientRecord::is_positive).collect();
    let y: Vec<f64> = labels.iter().map(|l| f64::from(u8::from(*l))).collect();

    let w = least_squares(&feats, &y);
    let scores: Vec<f64> = feats
        .iter()
        .map(|f| f.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let acc = best_threshold_accuracy(&scores, &labels);
    assert!(acc <= 0.75, "least-squares probe reached {acc}");

    // every direction in the plane of the two informative summaries
    let d = split.dims;
    let (ia, ib) = (0, d.continuous + d.discrete + d.demographics);
    let mut best: f64 = 0.0;
    for k in 0..360 {
        let th = (k as f64).to_radians();
        let scores: Vec<f64> = feats.iter().map(|f| th.cos() * f[ia] + th.sin() * f[ib]).collect();
        best = best.max(best_threshold_accuracy(&scores, &labels));
    }
    assert!(best <= 0.75, "planar probe reached {best}");
    assert!(best >= 0.74);
}

#[test]
fn class_balance_tracks_prevalence() {
    for rule in [PlantedRule::StaticOnly, PlantedRule::TemporalCross, PlantedRule::LateCombo] {
        for prevalence in [0.2, 0.35, 0.5] {
            let mut cfg = sized(rule, 1000, 4);
            cfg.prevalence = prevalence;
            let split = generate_synthetic(&cfg).unwrap();
            let rate = split.train.iter().filter(|r| r.is_positive()).count() as f64 / 1000.0;
            assert!((rate - prevalence).abs() <= 0.05, "{rule} at {prevalence}: {rate}");
        }
    }
}

#[test]
fn multi_label_sets_are_well_formed() {
    let mut cfg = SynthConfig::new(PlantedRule::MultiCombo, 2);
    cfg.classes = 12;
    let split = generate_synthetic(&cfg).unwrap();
    assert_eq!(split.task, TaskKind::MultiLabel { classes: 12 });
    let mut seen = [false; 12];
    for r in split.all_records() {
        let Label::MultiLabel(set) = &r.label else {
            panic!("binary label in multi-label task")
        };
        for c in set {
            seen[*c] = true;
        }
    }
    assert!(seen.iter().filter(|s| **s).count() >= 10);
}

#[test]
fn unknown_rule_is_rejected() {
    assert!(matches!(
        "temporal".parse::<PlantedRule>(),
        Err(CoreError::UnknownRule(s)) if s == "temporal"
    ));
}

#[test]
fn default_split_ratio() {
    assert_eq!(split_counts(1000, SPLIT_RATIO), (700, 150, 150));
}

fn small_split() -> DatasetSplit {
    let mut cfg = SynthConfig::new(PlantedRule::TemporalCross, 11);
    cfg.train = 6;
    cfg.validation = 2;
    cfg.test = 2;
    cfg.noise = 0.3;
    generate_synthetic(&cfg).unwrap()
}

#[test]
fn save_load_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.ndjson");
    let split = small_split();
    assert_eq!(split.len(), 10);
    save_dataset(&split, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back, split);
    for (a, b) in back.all_records().zip(split.all_records()) {
        for (x, y) in a.continuous.iter().flatten().zip(b.continuous.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    let mut multi = SynthConfig::new(PlantedRule::MultiCombo, 1);
    multi.train = 5;
    multi.validation = 2;
    multi.test = 1;
    let split = generate_synthetic(&multi).unwrap();
    save_dataset(&split, &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), split);
}

#[test]
fn invalid_discrete_entry_is_rejected_with_record_index() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.ndjson");
    save_dataset(&small_split(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut record: serde_json::Value = serde_json::from_str(&lines[4]).unwrap();
    record["E"][0][0] = serde_json::json!(2.0);
    lines[4] = record.to_string();
    std::fs::write(&path, lines.join("\n")).unwrap();
    match load_dataset(&path) {
        Err(CoreError::InvalidRecord { record, reason }) => {
            assert_eq!(record, 3);
            assert!(reason.contains("0 or 1"), "{reason}");
        }
        other => panic!("expected invalid record, got {other:?}"),
    }
}

#[test]
fn truncated_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.ndjson");
    save_dataset(&small_split(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();

    let whole_lines: Vec<&str> = text.lines().take(8).collect();
    std::fs::write(&path, whole_lines.join("\n")).unwrap();
    assert!(matches!(load_dataset(&path), Err(CoreError::Parse { .. })));

    std::fs::write(&path, &text[..text.len() - 40]).unwrap();
    match load_dataset(&path) {
        Err(CoreError::Parse { line, .. }) => assert_eq!(line, 11),
        other => panic!("expected parse error, got {other:?}"),
    }

    std::fs::write(&path, "").unwrap();
    assert!(matches!(load_dataset(&path), Err(CoreError::Parse { line: 1, .. })));
}
