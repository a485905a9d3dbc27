//! Implicit Euler time stepping for the evolutionary problem.
//!
//! Step `n` projects `u_{n−1} + ∫_{t_{n−1}}^{t_n} f dt` onto the gradient
//! constraint, i.e. it is one stationary solve with that effective source.
//! The time integral is approximated by the midpoint rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{P0Field, QuadField, Rt0Field, DEGREE4, NQ};
use crate::mesh::Mesh;
use crate::par::Exec;
use crate::problems::{ProblemError, ProblemSpec, SourceSpec};
use crate::solver::{continuation_solve, DiscreteProblem, SolverConfig, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("invalid evolution specification at `{path}`: {message}")]
    InvalidSpec { path: String, message: String },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("time step {step} failed: {source}")]
    Step { step: usize, source: SolverError },
}

/// Deposition rate `f(t, x) = source(x)` for `active_from ≤ t < active_until`, zero otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    pub source: SourceSpec,
    #[serde(default)]
    pub active_from: f64,
    #[serde(default = "infinity", skip_serializing_if = "is_infinite")]
    pub active_until: f64,
}

fn infinity() -> f64 {
    f64::INFINITY
}

fn is_infinite(v: &f64) -> bool {
    v.is_infinite()
}

impl RateSpec {
    pub fn constant(source: SourceSpec) -> Self {
        Self { source, active_from: 0.0, active_until: f64::INFINITY }
    }

    fn active(&self, t: f64) -> bool {
        t >= self.active_from && t < self.active_until
    }
}

/// How the previous state enters the effective source.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreviousWeight {
    /// `u_{n−1} + ∫f`, the backward-Euler step of the evolution law.
    #[default]
    Unit,
    /// `k·u_{n−1} + ∫f`, kept for comparison with the alternative scaling.
    StepLength,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSpec {
    /// Geometry, boundary partition and constraint; its `source` is ignored.
    pub problem: ProblemSpec,
    /// Initial state; zero when absent.
    #[serde(default)]
    pub initial: Option<SourceSpec>,
    pub rate: RateSpec,
    pub final_time: f64,
    pub step: f64,
    #[serde(default)]
    pub previous_weight: PreviousWeight,
}

impl EvolutionSpec {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |path: &str, message: &str| {
            Err(EvolutionError::InvalidSpec { path: path.to_string(), message: message.to_string() })
        };
        self.problem.validate()?;
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step", "must be positive and finite");
        }
        if !(self.final_time >= self.step && self.final_time.is_finite()) {
            return bad("final_time", "must be finite and at least one step");
        }
        if let Some(init) = &self.initial {
            init.validate("initial")?;
        }
        self.rate.source.validate("rate.source")?;
        if self.rate.active_from.is_nan() || self.rate.active_until.is_nan() {
            return bad("rate", "activity window must not be NaN");
        }
        Ok(())
    }

    /// `⌈T/k⌉`, ignoring round-off in the quotient.
    pub fn num_steps(&self) -> usize {
        (self.final_time / self.step - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub u: P0Field,
    pub p: Rt0Field,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub newton_iterations: usize,
    pub r1: f64,
    pub r2: f64,
    pub duality_gap: f64,
    pub max_violation: f64,
    /// `∫_Ω ∫_{t_{n−1}}^{t_n} f`.
    pub deposited: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mesh: Mesh,
    /// `frames[0]` is the initial state at `t = 0`; `frames[n]` is at `t = n·k`.
    pub frames: Vec<Frame>,
    pub steps: Vec<StepRecord>,
    /// True when every boundary side carries the no-flux condition.
    pub closed: bool,
}

/// Sampled rate integral `∫_{t0}^{t1} f(t, ·) dt` at the quadrature points (midpoint rule).
fn rate_integral(spec: &EvolutionSpec, mesh: &Mesh, t0: f64, t1: f64, exec: Exec) -> QuadField {
    let mid = 0.5 * (t0 + t1);
    if !spec.rate.active(mid) {
        return QuadField::constant(mesh, 0.0);
    }
    QuadField::sample(mesh, exec, |x| spec.rate.source.value_at(x)).scaled(t1 - t0)
}

/// Cell averages of the initial state.
fn initial_state(spec: &EvolutionSpec, mesh: &Mesh, exec: Exec) -> P0Field {
    match &spec.initial {
        None => P0Field::zeros(mesh),
        Some(src) => {
            let q = QuadField::sample(mesh, exec, |x| src.value_at(x));
            let values = (0..mesh.num_triangles()).map(|t| DEGREE4.integrate(1.0, q.element(t))).collect();
            P0Field { values }
        }
    }
}

/// Result of one implicit Euler step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub u: P0Field,
    pub p: Rt0Field,
    pub record: StepRecord,
}

/// Advances `u_prev` over `[t0, t1]` on the discretized `problem`, whose source is overwritten.
pub fn step(
    problem: &mut DiscreteProblem,
    spec: &EvolutionSpec,
    u_prev: &P0Field,
    (t0, t1): (f64, f64),
    index: usize,
    config: &SolverConfig,
) -> Result<StepOutcome, EvolutionError> {
    let mesh = problem.mesh.clone();
    if u_prev.values.len() != mesh.num_triangles() {
        return Err(EvolutionError::InvalidSpec {
            path: "u_prev".into(),
            message: format!("expected {} values, got {}", mesh.num_triangles(), u_prev.values.len()),
        });
    }
    let weight = match spec.previous_weight {
        PreviousWeight::Unit => 1.0,
        PreviousWeight::StepLength => t1 - t0,
    };
    let deposit = rate_integral(spec, &mesh, t0, t1, config.exec);
    let deposited: f64 = (0..mesh.num_triangles()).map(|t| DEGREE4.integrate(mesh.area(t), deposit.element(t))).sum();
    let values = (0..mesh.num_triangles())
        .map(|t| {
            let d = deposit.element(t);
            std::array::from_fn::<f64, NQ, _>(|q| weight * u_prev.values[t] + d[q])
        })
        .collect();
    problem.set_source(QuadField::from_values(values));
    let (sol, diag) = continuation_solve(problem, config).map_err(|source| EvolutionError::Step { step: index, source })?;
    let record = StepRecord {
        step: index,
        t: t1,
        newton_iterations: sol.steps.iter().map(|s| s.iterations).sum(),
        r1: sol.r1,
        r2: sol.r2,
        duality_gap: diag.duality_gap,
        max_violation: diag.max_violation,
        deposited,
    };
    Ok(StepOutcome { u: sol.u, p: sol.p, record })
}

/// Runs `⌈T/k⌉` implicit Euler steps from the initial state.
pub fn run(spec: &EvolutionSpec, config: &SolverConfig) -> Result<Trajectory, EvolutionError> {
    spec.validate()?;
    config.validate().map_err(|source| EvolutionError::Step { step: 0, source })?;
    let mut problem = spec.problem.discretize(config.exec)?;
    let mesh = problem.mesh.clone();
    let u0 = initial_state(spec, &mesh, config.exec);
    let mut frames = vec![Frame { t: 0.0, u: u0, p: Rt0Field::zeros(&mesh) }];
    let mut steps = Vec::new();
    for n in 1..=spec.num_steps() {
        let (t0, t1) = ((n - 1) as f64 * spec.step, n as f64 * spec.step);
        let prev = &frames.last().expect("initial frame").u;
        let out = step(&mut problem, spec, prev, (t0, t1), n, config)?;
        log::info!("step {n}: t={t1:.4}, {} Newton iterations", out.record.newton_iterations);
        steps.push(out.record);
        frames.push(Frame { t: t1, u: out.u, p: out.p });
    }
    Ok(Trajectory { mesh, frames, steps, closed: !spec.problem.boundary.has_dirichlet() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassBalance {
    pub step: usize,
    /// `∫u_n − ∫u_{n−1}`.
    pub mass_change: f64,
    /// `∫∫f` over the step.
    pub deposited: f64,
    /// `mass_change − deposited`.
    pub imbalance: f64,
}

/// Per-step material balance. Only meaningful for closed domains; a warning is
/// logged otherwise and the balances are reported anyway.
pub fn conservation_report(traj: &Trajectory) -> Vec<MassBalance> {
    if !traj.closed {
        log::warn!("mass balance requested for a domain with outflow boundary; material is not conserved");
    }
    traj.steps
        .iter()
        .zip(traj.frames.windows(2))
        .map(|(rec, w)| {
            let mass_change = w[1].u.integral(&traj.mesh) - w[0].u.integral(&traj.mesh);
            MassBalance { step: rec.step, mass_change, deposited: rec.deposited, imbalance: mass_change - rec.deposited }
        })
        .collect()
}
