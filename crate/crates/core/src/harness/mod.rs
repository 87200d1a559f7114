//! Random inputs, norm estimates, experiment configs and the runners behind the CLI.

pub mod config;
pub mod experiments;
pub mod norm;
pub mod random;
pub mod rng;

pub use config::{ExperimentConfig, ExperimentKind, SCHEMA_VERSION};
pub use experiments::{run_experiment, ExperimentOutput, OutputFormat};
pub use norm::{estimate_norm, FnOperator, NormEstimate, NormOperator, NormRequest};
pub use random::{random_function, InputModel};
pub use rng::SeedStream;
