//! Bilevel search: optimizer, diversity penalty, training loop and
//! checkpoints.

mod adam;
mod bilevel;
mod checkpoint;
mod penalty;

pub use adam::{Adam, Moments};
pub use bilevel::{
    evaluate, selection_metric, train_supernet, train_weights_only, train_with, BilevelTrainer, EpochRecord,
    Evaluation, TrainConfig, TrainHistory,
};
pub use checkpoint::{Checkpoint, EdgeState, ParamState};
pub use penalty::{
    cross_entropy, mean_pairwise_cross_entropy, penalty, penalty_value, selector_distribution,
    selector_distributions, LOG_FLOOR,
};
