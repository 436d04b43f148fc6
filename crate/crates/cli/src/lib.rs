//! Command-line harness library: run configuration, scenario orchestration
//! and N-1 screening reports. The `dtsim` binary is a thin shell over these
//! modules so integration tests can exercise the same code paths in-process.

pub mod config;
pub mod report;
pub mod run;

pub use config::{RunConfig, Solver};
pub use report::{quantile, ContingencyRow, ScreeningReport};
pub use run::{build_model, make_contingencies, run_case, run_screening, RunOutcome};

/// Process exit codes, stable across releases.
pub mod exit_codes {
    pub const SUCCESS: i32 = 0;
    /// A simulated case hit the instability cutoff.
    pub const UNSTABLE: i32 = 2;
    /// Unreadable/invalid case or configuration input.
    pub const INPUT_ERROR: i32 = 3;
    /// The solver failed to produce a solution.
    pub const SOLVER_DIVERGENCE: i32 = 4;
}

/// Maps a core error to the exit-code contract.
pub fn exit_code_for(err: &dtsim_core::Error) -> i32 {
    use dtsim_core::Error as E;
    match err {
        E::Case(_) | E::Topology(_) | E::Event(_) | E::Comparison(_) | E::Io(_) => {
            exit_codes::INPUT_ERROR
        }
        E::StepDiverged { .. }
        | E::ErrorSeriesDiverged { .. }
        | E::SolverDiverged(_)
        | E::PowerFlowDiverged(_)
        | E::Singular(_)
        | E::Init(_)
        | E::InvalidSpec(_)
        | E::ProbePole(_) => exit_codes::SOLVER_DIVERGENCE,
    }
}
