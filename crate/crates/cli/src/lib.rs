//! Library side of the `predual` command-line tool: configuration, the three
//! run modes and the output writers.

pub mod config;
pub mod export;

use std::time::Instant;

use predual::evolution::{self, MassBalance, StepRecord};
use predual::problems::{convergence_study, ProblemSpec, StudyTable};
use predual::solver::{continuation_solve, recovered_gradient, Diagnostics, SolverConfig, TauStep};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Format, Mode, RunConfig};
use crate::export::{export_study_csv, export_summary_json, export_vtk, Timing};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("I/O failure: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit status: 2 for configuration, 3 for solver and 4 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

/// Everything a run reports, written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub problem: ProblemSpec,
    pub solver: SolverConfig,
    /// Per-τ Newton statistics of a stationary solve.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tau_steps: Vec<TauStep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_r1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyTable>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub time_steps: Vec<StepRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mass_balance: Vec<MassBalance>,
}

impl RunSummary {
    fn new(config: &RunConfig, problem: ProblemSpec) -> Self {
        Self {
            mode: config.mode,
            scenario: config.scenario.clone(),
            problem,
            solver: config.solver,
            tau_steps: Vec::new(),
            final_r1: None,
            final_r2: None,
            diagnostics: None,
            study: None,
            time_steps: Vec::new(),
            mass_balance: Vec::new(),
        }
    }
}

/// Runs the configured mode and writes the requested outputs into `config.output.dir`.
/// Files are written only after all solves have finished.
pub fn execute(config: &RunConfig) -> Result<RunSummary, CliError> {
    config.validate()?;
    let start = Instant::now();
    let dir = &config.output.dir;
    let spec = config.problem_spec()?;
    let mut summary = RunSummary::new(config, spec.clone());
    match config.mode {
        Mode::Solve => {
            let problem = spec.discretize(config.solver.exec).map_err(|e| CliError::Config(e.to_string()))?;
            let (sol, diag) = continuation_solve(&problem, &config.solver).map_err(|e| CliError::Solver(e.to_string()))?;
            summary.tau_steps = sol.steps.clone();
            summary.final_r1 = Some(sol.r1);
            summary.final_r2 = Some(sol.r2);
            summary.diagnostics = Some(diag);
            if config.output.wants(Format::Vtk) {
                let grad: Vec<f64> = recovered_gradient(&sol.p, &problem, sol.tau_final).iter().map(|g| g.norm()).collect();
                export_vtk(&problem.mesh, &sol.u, &grad, &sol.p, &dir.join("solution.vtk"))?;
            }
        }
        Mode::Study => {
            let sizes = config.mesh_sizes.as_deref().unwrap_or_default();
            let table = convergence_study(&spec, sizes, &config.solver).map_err(|e| match e {
                predual::problems::ProblemError::Solver { .. } => CliError::Solver(e.to_string()),
                other => CliError::Config(other.to_string()),
            })?;
            if config.output.wants(Format::Csv) {
                export_study_csv(&table, &dir.join("study.csv"))?;
            }
            summary.study = Some(table);
        }
        Mode::Evolve => {
            let evo = config.evolution_spec()?;
            let traj = evolution::run(&evo, &config.solver).map_err(|e| match e {
                evolution::EvolutionError::Step { .. } => CliError::Solver(e.to_string()),
                other => CliError::Config(other.to_string()),
            })?;
            summary.time_steps = traj.steps.clone();
            summary.mass_balance = evolution::conservation_report(&traj);
            if config.output.wants(Format::Vtk) {
                let problem = evo.problem.discretize(config.solver.exec).map_err(|e| CliError::Config(e.to_string()))?;
                let tau = *config.solver.tau_schedule().last().expect("nonempty schedule");
                for (n, frame) in traj.frames.iter().enumerate() {
                    let grad: Vec<f64> = recovered_gradient(&frame.p, &problem, tau).iter().map(|g| g.norm()).collect();
                    export_vtk(&traj.mesh, &frame.u, &grad, &frame.p, &dir.join(format!("frame_{n:04}.vtk")))?;
                }
            }
        }
    }
    if config.output.wants(Format::Json) {
        export_summary_json(&summary, &dir.join("summary.json"))?;
        export_summary_json(&Timing { wall_seconds: start.elapsed().as_secs_f64() }, &dir.join("timing.json"))?;
    }
    Ok(summary)
}
