//! Hierarchical nonparametric topic-marked multivariate Hawkes process.
//!
//! Events are `(time, user, document)` triples. Each event is either
//! exogenous, with its topic drawn from a per-user restaurant over topics
//! shared through a network-wide franchise, or triggered by an earlier event
//! whose topic it inherits. Topics carry their own exponential kernel rate.
//!
//! [`simulate`] draws synthetic streams with known ground truth and
//! [`ParticleFilter`] fits the model online by collapsed sequential Monte
//! Carlo.

pub mod config;
pub mod error;
pub mod eval;
pub mod inference;
pub mod likelihood;
pub mod model;
pub mod simulator;
pub mod snapshot;

pub use config::{EvalConfig, ExperimentConfig};
pub use error::{Error, Result};
pub use inference::{InferenceConfig, MapSummary, ParticleFilter, StepReport};
pub use likelihood::{ModelMode, RateEstimates, TopicMode};
pub use model::{BranchingRecord, Doc, Event, GammaPrior, Hyperparams};
pub use simulator::{simulate, GroundTruth, Simulation, SimulationConfig};
pub use snapshot::{Snapshot, SnapshotKind};
