//! Seeded benchmark instances and suite runner.

pub mod generators;
pub mod imaging;
pub mod rng;
pub mod suite;

pub use generators::{generate, problem_spec, ExperimentKind, ExperimentSpec, Generated, PoissonParams};
pub use suite::{run_suite, solver_config, suite, ResultRecord, RunOutput, SuiteOutcome};
