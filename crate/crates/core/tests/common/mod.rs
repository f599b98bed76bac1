#![allow(dead_code)]

use mmnas_core::data::{generate_synthetic, DatasetSplit, Dims, PlantedRule, SynthConfig};
use mmnas_core::search::{FusionOpKind, SearchSpace, SequentialOpKind, StaticOpKind, Supernet};

pub fn small_dims() -> Dims {
    Dims {
        continuous: 3,
        discrete: 2,
        demographics: 3,
        note: 2,
        steps: 4,
    }
}

pub fn small_data(rule: PlantedRule, seed: u64, train: usize) -> DatasetSplit {
    let mut cfg = SynthConfig::new(rule, seed);
    cfg.train = train;
    cfg.validation = train / 2;
    cfg.test = train / 2;
    cfg.dims = small_dims();
    cfg.classes = 5;
    generate_synthetic(&cfg).unwrap()
}

pub fn small_space() -> SearchSpace {
    SearchSpace {
        embed_dim: 4,
        ..SearchSpace::default()
    }
}

/// One layer, one node, two candidates per modality edge.
pub fn tiny_space(embed_dim: usize) -> SearchSpace {
    SearchSpace {
        layers: 1,
        nodes: 1,
        embed_dim,
        static_ops: vec![StaticOpKind::Identity, StaticOpKind::Linear],
        sequential_ops: vec![SequentialOpKind::Identity, SequentialOpKind::Gru],
        fusion_ops: FusionOpKind::ALL.to_vec(),
    }
}

pub fn supernet(space: SearchSpace, data: &DatasetSplit, seed: u64) -> Supernet {
    Supernet::new(space, data.dims, data.task, seed).unwrap()
}

/// Snapshot of every parameter of one kind.
pub fn snapshot(net: &Supernet, kind: mmnas_autodiff::ParamKind) -> Vec<Vec<f64>> {
    net.params()
        .into_iter()
        .filter(|p| p.kind() == kind)
        .map(|p| p.values().to_vec())
        .collect()
}
