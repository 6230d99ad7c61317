//! Benchmark harness for `ecm-core`: the fixture library and oracle, seeded
//! chain generation, an oracle-driven execution model, the baselines and
//! the experiment drivers.

pub mod experiments;
pub mod fixtures;
pub mod generate;
pub mod report;
pub mod runtime;
pub mod sim;

pub use experiments::{
    run_ablation, run_ablation_all, run_experiment1, run_experiment2, run_experiment3, ExperimentError,
    ExperimentResult, Method, Population,
};
pub use fixtures::{FixtureError, Fixtures, Library, Oracle, TaskTemplate};
pub use generate::{generate_chains, ChainSpec, GenerateError, POPULATION, SEED_PRIMARY};
pub use runtime::{runtime_validate, AuditLog, AuditRecord};
pub use sim::{schema_only_check, simulate_execution, ExecOutcome};
