mod common;

use common::*;
use mmnas_autodiff::{ParamKind, Tensor};
use mmnas_core::data::{generate_synthetic, Batch, PlantedRule, SynthConfig};
use mmnas_core::prune::*;
use mmnas_core::search::*;
use mmnas_core::train::{evaluate, selection_metric, train_supernet, TrainConfig};
use mmnas_core::CoreError;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick_config(seed: u64) -> PruneConfig {
    PruneConfig {
        seed,
        finetune_steps: 2,
        batch_size: 4,
        ..PruneConfig::default()
    }
}

/// Resolves every edge to a random candidate by one-hot logits.
fn one_hot(net: &mut Supernet, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = Vec::new();
    for id in net.edge_ids() {
        let edge = net.edge_mut(id).unwrap();
        let pick = rng.random_range(0..edge.len());
        let logits: Vec<f64> = (0..edge.len()).map(|i| if i == pick { 0.0 } else { -1000.0 }).collect();
        edge.logits_mut().tensor_mut().set_data(logits).unwrap();
        picks.push(pick);
    }
    picks
}

#[test]
fn masking_a_near_dead_candidate_barely_moves_the_metric() {
    let data = small_data(PlantedRule::TemporalCross, 0, 16);
    let mut net = supernet(small_space(), &data, 0);
    let edge = EdgeId::Fusion { node: 2 };
    net.edge_mut(edge).unwrap().logits_mut().tensor_mut().set_data(vec![0.0, 0.1, -30.0]).unwrap();
    assert!(net.edge(edge).unwrap().weights()[2] < 1e-9);
    let base = selection_metric(&net, &data.validation).unwrap();
    let masked = evaluate_removal(&mut net, edge, 2, &data.validation).unwrap();
    assert!((base - masked).abs() < 1e-6);
}

#[test]
fn removal_evaluation_restores_the_network() {
    let data = small_data(PlantedRule::TemporalCross, 1, 16);
    let batch = Batch::new(&data.train, &data.dims, data.task).unwrap();
    let mut net = supernet(small_space(), &data, 1);
    let before = net.predict(&batch).unwrap();
    let weights = snapshot(&net, ParamKind::Weight);
    let arch = net.arch_params();
    for id in net.edge_ids() {
        for op in 0..net.edge(id).unwrap().len() {
            evaluate_removal(&mut net, id, op, &data.validation).unwrap();
        }
    }
    assert_eq!(net.predict(&batch).unwrap(), before);
    assert_eq!(snapshot(&net, ParamKind::Weight), weights);
    assert_eq!(net.arch_params(), arch);
    assert!(net.edge_ids().iter().all(|id| net.edge(*id).unwrap().alive().iter().all(|a| *a)));
}

#[test]
fn removal_needs_two_live_candidates() {
    let data = small_data(PlantedRule::TemporalCross, 2, 8);
    let mut net = supernet(small_space(), &data, 2);
    let edge = EdgeId::Selector { node: 0, input: 1 };
    net.edge_mut(edge).unwrap().keep_only(0).unwrap();
    assert!(matches!(
        evaluate_removal(&mut net, edge, 0, &data.validation),
        Err(CoreError::Precondition(_))
    ));
}

proptest! {
    #[test]
    fn removal_renormalizes_survivors(logits in proptest::collection::vec(-4.0f64..4.0, 2..6), pick in 0usize..6) {
        let n = logits.len();
        let pick = pick % n;
        let mut f = ParamFactory::new(0);
        let ops = (0..n).map(|_| StaticOp::new(StaticOpKind::Identity, &mut f, "s", 2)).collect();
        let param = mmnas_autodiff::Param::new(0, "a", ParamKind::Architecture, Tensor::vector(logits).unwrap());
        let mut edge = MixedOp::new(param, ops).unwrap();
        let prior = edge.weights();
        edge.set_alive(pick, false).unwrap();
        let after = edge.weights();
        let rest: f64 = (0..n).filter(|i| *i != pick).map(|i| prior[i]).sum();
        prop_assert_eq!(after[pick], 0.0);
        for i in (0..n).filter(|i| *i != pick) {
            prop_assert!((after[i] - prior[i] / rest).abs() < 1e-12);
        }
    }
}

#[test]
fn resolved_supernet_prunes_to_itself_with_empty_trace() {
    let data = small_data(PlantedRule::TemporalCross, 3, 8);
    let mut net = supernet(small_space(), &data, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut picks = Vec::new();
    for id in net.edge_ids() {
        let edge = net.edge_mut(id).unwrap();
        let keep = rng.random_range(0..edge.len());
        edge.keep_only(keep).unwrap();
        picks.push(keep);
    }
    let (arch, trace) = prune_supernet(&mut net, &data, &quick_config(3)).unwrap();
    assert!(trace.events.is_empty());
    assert!(trace.is_monotone_resolving());
    assert_eq!(trace.final_metric(), trace.initial_metric);
    let chosen: Vec<usize> = arch.choices(&net).unwrap().into_iter().map(|c| c.1).collect();
    assert_eq!(chosen, picks);
}

#[test]
fn magnitude_breaks_exact_ties_toward_lower_index() {
    let data = small_data(PlantedRule::TemporalCross, 4, 8);
    let mut net = supernet(small_space(), &data, 4);
    for id in net.edge_ids() {
        let edge = net.edge_mut(id).unwrap();
        let zeros = vec![0.0; edge.len()];
        edge.logits_mut().tensor_mut().set_data(zeros).unwrap();
    }
    let arch = discretize_magnitude(&net).unwrap();
    assert!(arch.choices(&net).unwrap().iter().all(|c| c.1 == 0));
}

#[test]
fn all_discretizers_agree_on_one_hot_supernets() {
    for seed in 0..3 {
        let data = small_data(PlantedRule::TemporalCross, 10 + seed, 8);
        let mut net = supernet(tiny_space(4), &data, seed);
        let picks = one_hot(&mut net, seed);
        for (id, pick) in net.edge_ids().into_iter().zip(&picks) {
            net.edge_mut(id).unwrap().keep_only(*pick).unwrap();
        }
        let magnitude = discretize_magnitude(&net).unwrap();
        let perturbation = discretize_perturbation(&net, &data.validation).unwrap();
        let (pruned, trace) = prune_supernet(&mut net.clone(), &data, &quick_config(seed)).unwrap();
        let chosen: Vec<usize> = magnitude.choices(&net).unwrap().into_iter().map(|c| c.1).collect();
        assert_eq!(chosen, picks);
        assert_eq!(perturbation, magnitude, "seed {seed}");
        assert_eq!(pruned, magnitude, "seed {seed}");
        assert!(trace.events.is_empty());
    }
}

#[test]
fn soft_one_hot_logits_pick_the_hot_candidate_by_magnitude() {
    let data = small_data(PlantedRule::TemporalCross, 13, 8);
    let mut net = supernet(small_space(), &data, 13);
    let picks = one_hot(&mut net, 13);
    let arch = discretize_magnitude(&net).unwrap();
    let chosen: Vec<usize> = arch.choices(&net).unwrap().into_iter().map(|c| c.1).collect();
    assert_eq!(chosen, picks);
}

#[test]
fn prune_trace_is_monotone_and_deterministic() {
    let data = small_data(PlantedRule::TemporalCross, 5, 12);
    let mut net = supernet(small_space(), &data, 5);
    train_supernet(&mut net, &data, &TrainConfig { epochs: 1, batch_size: 4, seed: 5, ..TrainConfig::default() }).unwrap();
    let run = |mut net: Supernet| prune_supernet(&mut net, &data, &quick_config(5)).unwrap();
    let (a1, t1) = run(net.clone());
    let (a2, t2) = run(net.clone());
    assert_eq!(a1, a2);
    assert_eq!(t1, t2);
    assert!(t1.is_monotone_resolving());
    let total: usize = net.edge_ids().iter().map(|id| net.edge(*id).unwrap().len() - 1).sum();
    assert_eq!(t1.events.len(), total);
    assert!(t1.events.iter().all(|e| e.metric_after_removal.is_finite() && e.metric_after_finetune.is_finite()));
}

#[test]
fn tampered_traces_are_not_monotone() {
    let data = small_data(PlantedRule::TemporalCross, 6, 8);
    let mut net = supernet(tiny_space(4), &data, 6);
    let (_, trace) = prune_supernet(&mut net, &data, &quick_config(6)).unwrap();
    assert!(trace.is_monotone_resolving());
    let mut short = trace.clone();
    short.events.pop();
    assert!(!short.is_monotone_resolving());
    let mut skipped = trace.clone();
    skipped.events[0].remaining += 1;
    assert!(!skipped.is_monotone_resolving());
}

#[test]
fn export_round_trip_preserves_the_network() {
    let data = small_data(PlantedRule::TemporalCross, 7, 8);
    let batch = Batch::new(&data.validation, &data.dims, data.task).unwrap();
    let mut net = supernet(small_space(), &data, 7);
    one_hot(&mut net, 7);
    let arch = discretize_magnitude(&net).unwrap();
    let export = arch.export(Some(Provenance {
        seed: 7,
        config_hash: "0123456789abcdef".into(),
        discretizer: "magnitude".into(),
        trace_events: 0,
        initial_metric: None,
        final_metric: None,
    }));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("arch.json");
    export.save(&path).unwrap();
    let loaded = ArchitectureExport::load(&path).unwrap();
    assert_eq!(loaded, export);
    assert_eq!(ArchitectureExport::from_json(&export.to_json().unwrap()).unwrap(), export);

    let direct = arch.materialize(&net).unwrap();
    let reloaded = loaded.architecture.materialize(&net).unwrap();
    let out = direct.predict(&batch).unwrap();
    assert_eq!(reloaded.predict(&batch).unwrap(), out);
    assert!(direct.param_count() < net.param_count());

    let mut resolved = net.clone();
    arch.apply(&mut resolved).unwrap();
    assert_eq!(resolved.predict(&batch).unwrap(), out);
    assert_eq!(export.format, ARCHITECTURE_FORMAT);
}

#[test]
fn architecture_from_another_space_is_rejected() {
    let data = small_data(PlantedRule::TemporalCross, 8, 8);
    let mut tiny = supernet(tiny_space(4), &data, 8);
    one_hot(&mut tiny, 8);
    let arch = discretize_magnitude(&tiny).unwrap();
    let big = supernet(small_space(), &data, 8);
    assert!(matches!(arch.materialize(&big), Err(CoreError::Config(_))));
}

#[test]
fn enumeration_covers_the_tiny_space_once() {
    let data = small_data(PlantedRule::TemporalCross, 9, 8);
    let net = supernet(tiny_space(4), &data, 9);
    let all = DiscreteArchitecture::enumerate(&net).unwrap();
    assert_eq!(all.len(), 768);
    let mut unique = all.clone();
    unique.sort_by_key(|a| serde_json::to_string(a).unwrap());
    unique.dedup();
    assert_eq!(unique.len(), 768);
}

#[test]
fn discretizer_names_round_trip() {
    for d in Discretizer::ALL {
        assert_eq!(d.name().parse::<Discretizer>().unwrap(), d);
    }
    assert!("argmax".parse::<Discretizer>().is_err());
}

#[test]
fn dropping_the_informative_input_hurts_more_than_dropping_zero() {
    let mut cfg = SynthConfig::new(PlantedRule::StaticOnly, 0);
    cfg.train = 200;
    cfg.validation = 100;
    cfg.test = 10;
    let data = generate_synthetic(&cfg).unwrap();
    let space = SearchSpace {
        layers: 1,
        nodes: 1,
        embed_dim: 8,
        ..SearchSpace::default()
    };
    let mut net = Supernet::new(space, data.dims, data.task, 0).unwrap();
    train_supernet(&mut net, &data, &TrainConfig { epochs: 8, seed: 0, ..TrainConfig::default() }).unwrap();
    let selector = EdgeId::Selector {
        node: 0,
        input: Modality::Demographics.index(),
    };
    let without_identity = evaluate_removal(&mut net, selector, 0, &data.validation).unwrap();
    let without_zero = evaluate_removal(&mut net, selector, 1, &data.validation).unwrap();
    assert!(
        without_identity < without_zero,
        "identity removed {without_identity}, zero removed {without_zero}"
    );
    assert!(evaluate(&net, &data.validation).unwrap().metrics.selection() > 0.9);
}
