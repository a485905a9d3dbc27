use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use predual_cli::config::{Mode, RunConfig};
use predual_cli::{execute, CliError};

/// Gradient-constrained problems solved through their regularized pre-dual.
#[derive(Debug, Parser)]
#[command(name = "predual", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve one stationary problem and write `solution.vtk` and `summary.json`.
    Solve(RunArgs),
    /// Run a mesh-convergence study against the closed-form solution and write `study.csv`.
    Study {
        #[command(flatten)]
        run: RunArgs,
        /// Grid sizes, e.g. `8,16,32,64`.
        #[arg(long, value_delimiter = ',')]
        mesh_sizes: Option<Vec<usize>>,
    },
    /// Run implicit Euler time stepping and write one VTK frame per step.
    Evolve(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named scenario; replaces the problem of the configuration file.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Final smoothing parameter of the continuation.
    #[arg(long)]
    tau_min: Option<f64>,
    /// Newton stopping tolerance on both residual norms.
    #[arg(long)]
    newton_tol: Option<f64>,
    /// Use an `n × n` grid.
    #[arg(long)]
    resolution: Option<usize>,
}

fn build_config(mode: Mode, args: &RunArgs, mesh_sizes: Option<Vec<usize>>) -> Result<RunConfig, CliError> {
    let mut config = match (&args.config, &args.scenario) {
        (Some(path), _) => {
            // validation happens after the command-line overrides are applied
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(de)
                .map_err(|err| CliError::Config(format!("`{}`: {}", err.path(), err.inner())))?
        }
        (None, Some(name)) => RunConfig::for_scenario(mode, name),
        (None, None) => return Err(CliError::Config("either --config or --scenario is required".into())),
    };
    config.mode = mode;
    if let Some(name) = &args.scenario {
        config.scenario = Some(name.clone());
        config.problem = None;
    }
    if let Some(dir) = &args.out {
        config.output.dir = dir.clone();
    }
    if let Some(t) = args.tau_min {
        config.solver.tau_min = t;
    }
    if let Some(t) = args.newton_tol {
        config.solver.newton_tol = t;
    }
    if args.resolution.is_some() {
        config.resolution = args.resolution;
    }
    if mesh_sizes.is_some() {
        config.mesh_sizes = mesh_sizes;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(args) => build_config(Mode::Solve, &args, None),
        Command::Study { run, mesh_sizes } => build_config(Mode::Study, &run, mesh_sizes),
        Command::Evolve(args) => build_config(Mode::Evolve, &args, None),
    }
    .and_then(|config| execute(&config));
    match result {
        Ok(summary) => {
            if let Some(d) = summary.diagnostics {
                log::info!("duality gap {:.3e}, max |grad u|/alpha {:.6}", d.duality_gap, d.max_grad_ratio);
            }
            if let Some(t) = &summary.study {
                log::info!("fitted rates: u {:.3}, p {:.3}", t.rate_u, t.rate_p);
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
