//! Scenario configuration, the builtin catalog and run artifacts: summary
//! table, reproducibility manifest, optional node dump and convergence
//! tables.

mod builtins;
mod config;
mod run;
#[cfg(test)]
mod tests;

pub use builtins::{builtin, builtin_names};
pub use config::{
    detect_closed_form, DriverKind, DriverSection, GeneratorKind, GeneratorSection, ModelSection, ProcessKind, Scenario,
    ScenarioConfig, SolverKind, SolverSection, SpaceSection, TerminalSection, TimeSection,
};
pub use run::{
    nodes_csv, run_convergence, run_scenario, sha256_hex, solve, summary_csv, ConvergenceRow, ConvergenceTable,
    GuardSummary, RunManifest, RunOutput, RunStatus, Timings,
};
