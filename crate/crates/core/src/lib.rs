//! Neuroevolution of network hyperparameters with twin-structured populations.
//!
//! Two populations of small feedforward networks are evolved on a source task.
//! Offspring are bred as monozygotic (identical genome) and dizygotic (half
//! shared genome) twin pairs, twins are kept in separate populations, and every
//! individual trains on a randomly thinned copy of the training set that it
//! shares with its twin. The evolved genome distribution is then re-trained on
//! other tasks to measure transfer against a random-genome baseline.
//!
//! Module map:
//!
//! * [`dataio`]: dataset loading, normalization, padding, stratified splits, SES filters
//! * [`mlp`]: one-hidden-layer logistic network trained by SGD with momentum, metrics
//! * [`genome`]: hyperparameter genomes, calibration bounds, crossover, mutation, twins
//! * [`evolve`]: the dual-population loop, selective breeding, split/combine, final merge
//! * [`relatedness`]: weight-space distance between reference networks of different tasks
//! * [`calibrate`]: grid search and derivation of calibration bounds
//! * [`experiment`]: transfer and baseline runs, table emission, the desk pipeline
//! * [`config`]: key-value run configuration

pub mod calibrate;
pub mod config;
pub mod dataio;
pub mod error;
pub mod evolve;
pub mod experiment;
pub mod genome;
pub mod mlp;
pub mod relatedness;
pub mod rng;
pub mod task;

pub use dataio::{RawDataset, SesFilter, Split, TaskDataset, D_COMMON};
pub use error::{Error, Result};
pub use evolve::{EvolutionConfig, Individual, Population};
pub use genome::{CalibrationBounds, Genome, TwinPair, Zygosity};
pub use mlp::{ConfusionSummary, Metrics, NetConfig, Network};
pub use task::Task;
