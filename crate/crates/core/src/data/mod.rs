//! Patient records, batching, dataset files and synthetic generators.

mod batch;
mod io;
mod record;
mod synth;

pub use batch::{sequential_batches, shuffled_batches, Batch};
pub use io::{load_dataset, save_dataset, SplitName, DATASET_FORMAT};
pub use record::{split_counts, DatasetSplit, Dims, Label, PatientRecord, TaskKind, SPLIT_RATIO};
pub use synth::{bayes_accuracy, generate_synthetic, modality_summary, PlantedRule, SynthConfig};
