//! JSON run configuration.
//!
//! ```json
//! {
//!   "mode": "study",
//!   "scenario": "ex1_f1_a1",
//!   "mesh_sizes": [8, 16, 32, 64],
//!   "solver": { "tau_min": 1e-6 },
//!   "output": { "dir": "out" }
//! }
//! ```
//!
//! Exactly one of `scenario` and `problem` names the spatial problem. Unknown
//! keys are rejected; errors carry the path of the offending field.

use std::path::{Path, PathBuf};

use predual::evolution::{EvolutionSpec, PreviousWeight, RateSpec};
use predual::problems::{scenario, ProblemSpec, SourceSpec};
use predual::solver::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Solve,
    Study,
    Evolve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Vtk,
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Vtk, Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), formats: default_formats() }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Time-stepping block of an `evolve` run; the spatial part comes from the scenario or problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    #[serde(default)]
    pub initial: Option<SourceSpec>,
    pub rate: RateSpec,
    pub final_time: f64,
    pub step: f64,
    #[serde(default)]
    pub previous_weight: PreviousWeight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    /// Overrides the grid of the scenario or problem with `n × n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    /// Grid sizes of a `study` run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evolution: Option<EvolutionConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn config_error(path: &str, message: impl Into<String>) -> CliError {
    CliError::Config(format!("`{path}`: {}", message.into()))
}

impl RunConfig {
    /// Minimal configuration running a named scenario.
    pub fn for_scenario(mode: Mode, name: &str) -> Self {
        Self {
            mode,
            scenario: Some(name.to_string()),
            problem: None,
            resolution: None,
            mesh_sizes: None,
            evolution: None,
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|err| {
            let path = err.path().to_string();
            CliError::Config(format!("`{path}`: {}", err.into_inner()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Spatial problem after applying the resolution override.
    pub fn problem_spec(&self) -> Result<ProblemSpec, CliError> {
        let spec = match (&self.scenario, &self.problem) {
            (Some(name), None) => scenario(name).map_err(|e| config_error("scenario", e.to_string()))?,
            (None, Some(p)) => p.clone(),
            (Some(_), Some(_)) => return Err(config_error("scenario", "give either `scenario` or `problem`, not both")),
            (None, None) => return Err(config_error("scenario", "a `scenario` name or a `problem` block is required")),
        };
        let spec = match self.resolution {
            Some(n) => spec.with_resolution(n),
            None => spec,
        };
        spec.validate().map_err(|e| match e {
            predual::problems::ProblemError::InvalidSpec { path, message } => config_error(&format!("problem.{path}"), message),
            other => CliError::Config(other.to_string()),
        })?;
        Ok(spec)
    }

    pub fn evolution_spec(&self) -> Result<EvolutionSpec, CliError> {
        let evo = self.evolution.as_ref().ok_or_else(|| config_error("evolution", "required for mode `evolve`"))?;
        let spec = EvolutionSpec {
            problem: self.problem_spec()?,
            initial: evo.initial.clone(),
            rate: evo.rate.clone(),
            final_time: evo.final_time,
            step: evo.step,
            previous_weight: evo.previous_weight,
        };
        spec.validate().map_err(|e| match e {
            predual::evolution::EvolutionError::InvalidSpec { path, message } => config_error(&format!("evolution.{path}"), message),
            other => CliError::Config(other.to_string()),
        })?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.problem_spec()?;
        if let Some(0) = self.resolution {
            return Err(config_error("resolution", "must be at least 1"));
        }
        self.solver.validate().map_err(|e| config_error("solver", e.to_string()))?;
        match self.mode {
            Mode::Solve => {}
            Mode::Study => {
                let sizes = self.mesh_sizes.as_ref().ok_or_else(|| config_error("mesh_sizes", "required for mode `study`"))?;
                if sizes.is_empty() {
                    return Err(config_error("mesh_sizes", "must list at least one grid size"));
                }
                if let Some(i) = sizes.iter().position(|&n| n == 0) {
                    return Err(config_error(&format!("mesh_sizes[{i}]"), "must be at least 1"));
                }
            }
            Mode::Evolve => {
                self.evolution_spec()?;
            }
        }
        if self.output.formats.is_empty() {
            return Err(config_error("output.formats", "must list at least one format"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_json(r#"{"mode": "solve", "scenario": "ex1_f1_a1"}"#).unwrap();
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.solver.tau_start, 10.0);
        assert_eq!(c.solver.tau_factor, 1.3);
        assert_eq!(c.solver.tau_min, 1e-6);
        assert_eq!(c.output, OutputConfig::default());
        assert_eq!(c.problem_spec().unwrap().nx, 64);
    }

    #[test]
    fn errors_name_the_field() {
        let err = RunConfig::from_json(r#"{"mode": "solve", "scenario": "ex1_f1_a1", "solver": {"tau_mn": 1}}"#).unwrap_err();
        assert!(err.to_string().contains("solver"), "{err}");

        let neg = r#"{"mode": "solve", "problem": {"nx": 4, "ny": 4,
            "alpha": {"kind": "constant", "value": -1}, "source": {"kind": "constant", "value": 1}}}"#;
        let err = RunConfig::from_json(neg).unwrap_err();
        assert!(err.to_string().contains("problem.alpha.value"), "{err}");

        let err = RunConfig::from_json(r#"{"mode": "study", "scenario": "ex1_f1_a1"}"#).unwrap_err();
        assert!(err.to_string().contains("mesh_sizes"), "{err}");

        let err = RunConfig::from_json(r#"{"mode": "evolve", "scenario": "ex1_f1_a1"}"#).unwrap_err();
        assert!(err.to_string().contains("evolution"), "{err}");

        let err = RunConfig::from_json(r#"{"mode": "solve", "scenario": "nope"}"#).unwrap_err();
        assert!(err.to_string().contains("scenario"), "{err}");
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::for_scenario(Mode::Study, "ex1_f025_a1");
        c.mesh_sizes = Some(vec![4, 8]);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
    }
}
