//! Experiment orchestration: configuration, seed derivation, the toy corpus
//! and the clean-train / noisy-test grid runner.

mod config;
mod run;
mod seed;
mod toy;

pub use config::{Backend, ExperimentConfig, FusionMode, FusionSection, GmmSection, IvectorSection, NoiseCell};
pub use run::{run_experiment, CellResult, RunSummary};
pub use seed::{content_hash, derive_seed};
pub use toy::{make_toy_corpus, ToyCorpusConfig};
