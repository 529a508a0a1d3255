//! Federated averaging over a fixed client pool, with the pieces needed to
//! run and score MNIST-style experiments end to end: IDX ingestion, a dense
//! network trained by SGD, non-IID partitioning, a round state machine and
//! bootstrap-based evaluation.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision types used on the wire and in the
//! simulator.

pub mod aggregation;
pub mod dataset;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod nn;
pub mod partition;
pub mod protocol;
pub mod scalar;
pub mod seed;
pub mod simulator;

pub use aggregation::{fed_avg, AggregationMode, Aggregator, ClientUpdate};
pub use dataset::{Batch, Dataset};
pub use error::{Error, Result};
pub use metrics::{BootstrapSettings, Interval, MetricsReport};
pub use nn::{ModelSpec, TrainingConfig, Weights};
pub use partition::{make_partition, Partition, PartitionScheme, SchemeKind};
pub use protocol::{PutOutcome, RejectReason, RoundState, ServerConfig};
pub use scalar::Scalar;
pub use simulator::{run_experiment, ExecutionMode, ExperimentConfig, RunHistory};

/// Double-precision parameter vector: the unit exchanged with the server.
pub type WeightVector = Weights<f64>;
pub type WeightVector32 = Weights<f32>;
pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Update = ClientUpdate<f64>;
pub type ServerState = RoundState<f64>;
