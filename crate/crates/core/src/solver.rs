//! Newton continuation for the Huber-regularized primal–dual system
//!
//! ```text
//!   −Bᵀu + H_τ(p) = 0          (flux equation, one row per free edge)
//!    M u + B p    = F          (state equation, one row per triangle)
//! ```
//!
//! `M` is diagonal, so the state is eliminated exactly, `u = M⁻¹(F − Bp)`, and
//! Newton runs on the reduced residual `R(p) = BᵀM⁻¹(Bp − F) + H_τ(p)` with the
//! SPD Jacobian `S(p) = G_τ(p) + BᵀM⁻¹B`. Steps are globalized by Armijo
//! backtracking on `½‖R‖²`. The smoothing parameter follows a geometric
//! schedule and every solve is warm-started from the previous one.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{
    assemble_div, assemble_huber_residual, assemble_load, assemble_mass_p0, huber_energy, huber_jacobian_locals,
    weighted_norm_integral, EdgePattern, LocalMatrix, LocalRt0, P0Field, P0Mass, QuadField, Rt0Field, DEGREE4, NQ,
};
use crate::huber;
use crate::linalg::{norm2, LinalgError, SparseMatrix, SpdSolver};
use crate::mesh::{BoundaryPartition, Mesh};
use crate::par::Exec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("Newton did not converge at tau={tau:e} within {iterations} iterations (|r1|={r1:e}, |r2|={r2:e})")]
    MaxIterationsExceeded { tau: f64, iterations: usize, r1: f64, r2: f64 },
    #[error("line search stalled at tau={tau:e}, Newton iteration {iteration} (|r1|={r1:e})")]
    LineSearchStalled { tau: f64, iteration: usize, r1: f64 },
    #[error("linear solve failed at tau={tau:e}, Newton iteration {iteration}: {source}")]
    Linear { tau: f64, iteration: usize, source: LinalgError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearch {
    pub shrink: f64,
    pub sufficient_decrease: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self { shrink: 0.5, sufficient_decrease: 1e-4, max_backtracks: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tau_start: f64,
    pub tau_factor: f64,
    pub tau_min: f64,
    /// Absolute tolerance on both residual norms.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub linesearch: LineSearch,
    /// Relative residual demanded from each Newton linear solve.
    pub linear_tol: f64,
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau_start: 10.0,
            tau_factor: 1.30,
            tau_min: 1e-6,
            newton_tol: 1e-8,
            newton_max_iter: 50,
            linesearch: LineSearch::default(),
            linear_tol: 1e-10,
            exec: Exec::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: &str| Err(SolverError::InvalidConfig(msg.to_string()));
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.tau_start) || !positive(self.tau_min) {
            return bad("tau_start and tau_min must be positive");
        }
        if !(self.tau_factor > 1.0 && self.tau_factor.is_finite()) {
            return bad("tau_factor must exceed 1");
        }
        if !positive(self.newton_tol) || !positive(self.linear_tol) {
            return bad("tolerances must be positive");
        }
        if self.newton_max_iter == 0 {
            return bad("newton_max_iter must be at least 1");
        }
        let ls = &self.linesearch;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) || !(ls.sufficient_decrease > 0.0 && ls.sufficient_decrease < 0.5) {
            return bad("line search needs 0 < shrink < 1 and 0 < sufficient_decrease < 0.5");
        }
        Ok(())
    }

    /// `τ_k = τ_start / factor^k` for `k = 1, 2, …`, up to and including the first value `≤ τ_min`.
    pub fn tau_schedule(&self) -> Vec<f64> {
        let mut taus = Vec::new();
        for k in 1.. {
            let tau = self.tau_start / self.tau_factor.powi(k);
            taus.push(tau);
            if tau <= self.tau_min {
                break;
            }
        }
        taus
    }
}

/// The discrete operators and data of one stationary problem.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub mesh: Mesh,
    pub boundary: BoundaryPartition,
    /// Constraint bound at the quadrature points.
    pub alpha: QuadField,
    /// Constraint bound at element centroids (used for the recovered gradient).
    pub alpha_centroid: Vec<f64>,
    /// Source at the quadrature points.
    pub source: QuadField,
    pub load: Vec<f64>,
    pub mass: P0Mass,
    pub div: SparseMatrix,
    /// Edges on Γ_N whose flux is pinned to zero.
    pub fixed: Vec<bool>,
    pub pattern: EdgePattern,
}

impl DiscreteProblem {
    pub fn new(mesh: Mesh, boundary: BoundaryPartition, alpha: QuadField, alpha_centroid: Vec<f64>, source: QuadField) -> Self {
        assert_eq!(alpha.len(), mesh.num_triangles());
        assert_eq!(alpha_centroid.len(), mesh.num_triangles());
        assert_eq!(source.len(), mesh.num_triangles());
        let (_, neumann) = mesh.classify_boundary(&boundary);
        let mut fixed = vec![false; mesh.num_edges()];
        for e in neumann {
            fixed[e] = true;
        }
        let load = assemble_load(&mesh, &source);
        let mass = assemble_mass_p0(&mesh);
        let div = assemble_div(&mesh);
        let pattern = EdgePattern::new(&mesh);
        Self { mesh, boundary, alpha, alpha_centroid, source, load, mass, div, fixed, pattern }
    }

    /// Replaces the source term, keeping geometry and constraint data.
    pub fn set_source(&mut self, source: QuadField) {
        assert_eq!(source.len(), self.mesh.num_triangles());
        self.load = assemble_load(&self.mesh, &source);
        self.source = source;
    }

    fn zero_fixed(&self, p: &mut [f64]) {
        for (v, &f) in p.iter_mut().zip(&self.fixed) {
            if f {
                *v = 0.0;
            }
        }
    }
}

/// Per-τ record of one continuation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauStep {
    pub tau: f64,
    pub iterations: usize,
    pub backtracks: usize,
    pub r1: f64,
    pub r2: f64,
    pub duality_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    pub p: Rt0Field,
    pub u: P0Field,
    pub tau_final: f64,
    pub steps: Vec<TauStep>,
    /// Residual norms `(‖r1‖₂, ‖r2‖_{L²})` at the last accepted iterate.
    pub r1: f64,
    pub r2: f64,
}

impl DiscreteSolution {
    pub fn zeros(problem: &DiscreteProblem) -> Self {
        Self {
            p: Rt0Field::zeros(&problem.mesh),
            u: recover_u(&Rt0Field::zeros(&problem.mesh), problem),
            tau_final: f64::NAN,
            steps: Vec::new(),
            r1: f64::NAN,
            r2: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Value of the pre-dual objective `½‖div p − f‖² + ∫ α|p|₂`.
    pub primal_value: f64,
    /// `(f, u) − ½‖u‖²`, the negated primal objective.
    pub dual_value: f64,
    pub duality_gap: f64,
    /// `max_T |∇u_T| / α_T` over the recovered gradient.
    pub max_grad_ratio: f64,
    /// `max_T (|∇u_T| − α_T)`.
    pub max_violation: f64,
    /// `Σ_T |T| max(0, |∇u_T| − α_T)`.
    pub feasibility_violation: f64,
    /// Area fraction of elements whose centroid flux lies on the linear Huber
    /// branch, where `|∇u_T| = α_T`.
    pub active_fraction: f64,
}

/// `u = M⁻¹(F − B p)`, the P0 realization of `f − div p`.
pub fn recover_u(p: &Rt0Field, problem: &DiscreteProblem) -> P0Field {
    let bp = problem.div.spmv(&p.dofs).expect("RT0 field sized to mesh");
    let r: Vec<f64> = problem.load.iter().zip(&bp).map(|(f, b)| f - b).collect();
    P0Field { values: problem.mass.solve(&r) }
}

/// Full residual of the saddle-point system for independent `p` and `u`.
///
/// `r1 = −Bᵀu + H_τ(p)` (Γ_N rows zeroed), `r2 = M u + B p − F`.
pub fn residual(p: &Rt0Field, u: &P0Field, problem: &DiscreteProblem, tau: f64, exec: Exec) -> (Vec<f64>, Vec<f64>) {
    let mut r1 = assemble_huber_residual(&problem.mesh, p, &problem.alpha, tau, &problem.fixed, exec);
    let btu = problem.div.spmv_transpose(&u.values).expect("P0 field sized to mesh");
    for ((r, b), &f) in r1.iter_mut().zip(&btu).zip(&problem.fixed) {
        if !f {
            *r -= b;
        }
    }
    let bp = problem.div.spmv(&p.dofs).expect("RT0 field sized to mesh");
    let mu = problem.mass.apply(&u.values);
    let r2 = (0..mu.len()).map(|t| mu[t] + bp[t] - problem.load[t]).collect();
    (r1, r2)
}

/// Reduced residual with `u` eliminated, plus the state and `‖r2‖` it implies.
fn reduced_residual(p: &[f64], problem: &DiscreteProblem, tau: f64, exec: Exec) -> (Vec<f64>, P0Field, f64) {
    let field = Rt0Field { dofs: p.to_vec() };
    let u = recover_u(&field, problem);
    let (r1, r2) = residual(&field, &u, problem, tau, exec);
    let r2n = problem.mass.dual_norm(&r2);
    (r1, u, r2n)
}

/// `S(p) = G_τ(p) + BᵀM⁻¹B`, with identity rows on Γ_N edges.
fn newton_matrix(problem: &DiscreteProblem, p: &Rt0Field, tau: f64, exec: Exec) -> SparseMatrix {
    let mesh = &problem.mesh;
    let mut locals: Vec<LocalMatrix> = huber_jacobian_locals(mesh, p, &problem.alpha, tau, exec);
    for (t, m) in locals.iter_mut().enumerate() {
        let s = mesh.triangle_signs(t);
        let inv_area = 1.0 / mesh.area(t);
        for k in 0..3 {
            for l in 0..3 {
                m[k][l] += s[k] * s[l] * inv_area;
            }
        }
    }
    problem.pattern.assemble(mesh, &locals, &problem.fixed)
}

/// Result of a single fixed-τ Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonResult {
    pub p: Rt0Field,
    pub u: P0Field,
    pub iterations: usize,
    pub backtracks: usize,
    pub r1: f64,
    pub r2: f64,
    /// `‖r1‖` after each iteration, starting with the initial iterate.
    pub history: Vec<f64>,
}

/// Newton with Armijo backtracking at fixed τ, starting from `initial`.
pub fn newton_solve(
    problem: &DiscreteProblem,
    tau: f64,
    initial: &Rt0Field,
    config: &SolverConfig,
) -> Result<NewtonResult, SolverError> {
    config.validate()?;
    newton_solve_with(problem, tau, initial, config, &mut SpdSolver::new())
}

fn newton_solve_with(
    problem: &DiscreteProblem,
    tau: f64,
    initial: &Rt0Field,
    config: &SolverConfig,
    linear: &mut SpdSolver,
) -> Result<NewtonResult, SolverError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(SolverError::InvalidConfig(format!("tau must be positive, got {tau}")));
    }
    let exec = config.exec;
    let ls = &config.linesearch;
    let mut p = initial.dofs.clone();
    problem.zero_fixed(&mut p);
    let (mut r, mut u, mut r2) = reduced_residual(&p, problem, tau, exec);
    let mut r1 = norm2(&r);
    let mut history = vec![r1];
    let mut backtracks = 0;

    for iteration in 0..=config.newton_max_iter {
        if r1 <= config.newton_tol && r2 <= config.newton_tol {
            return Ok(NewtonResult { p: Rt0Field { dofs: p }, u, iterations: iteration, backtracks, r1, r2, history });
        }
        if iteration == config.newton_max_iter {
            break;
        }
        let s = newton_matrix(problem, &Rt0Field { dofs: p.clone() }, tau, exec);
        let rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        // an inexact direction is acceptable; the line search decides whether it helps
        let (d, report) = linear
            .solve_best_effort(&s, &rhs, config.linear_tol)
            .map_err(|source| SolverError::Linear { tau, iteration, source })?;
        if report.relative_residual > config.linear_tol {
            log::debug!("tau={tau:e} it={iteration}: linear residual {:e}", report.relative_residual);
        }

        let merit = 0.5 * r1 * r1;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=ls.max_backtracks {
            let trial: Vec<f64> = p.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let (rt, ut, r2t) = reduced_residual(&trial, problem, tau, exec);
            let r1t = norm2(&rt);
            if 0.5 * r1t * r1t <= (1.0 - 2.0 * ls.sufficient_decrease * step) * merit
                || (r1t <= config.newton_tol && r2t <= config.newton_tol)
            {
                accepted = Some((trial, rt, ut, r1t, r2t));
                break;
            }
            step *= ls.shrink;
            backtracks += 1;
        }
        let Some((trial, rt, ut, r1t, r2t)) = accepted else {
            return Err(SolverError::LineSearchStalled { tau, iteration, r1 });
        };
        p = trial;
        r = rt;
        u = ut;
        r1 = r1t;
        r2 = r2t;
        history.push(r1);
    }
    Err(SolverError::MaxIterationsExceeded { tau, iterations: config.newton_max_iter, r1, r2 })
}

/// Runs Newton over the τ schedule from a zero initial flux, warm-starting each solve.
pub fn continuation_solve(
    problem: &DiscreteProblem,
    config: &SolverConfig,
) -> Result<(DiscreteSolution, Diagnostics), SolverError> {
    continuation_from(problem, config, &Rt0Field::zeros(&problem.mesh))
}

/// As [`continuation_solve`], but starting from the given flux.
pub fn continuation_from(
    problem: &DiscreteProblem,
    config: &SolverConfig,
    initial: &Rt0Field,
) -> Result<(DiscreteSolution, Diagnostics), SolverError> {
    config.validate()?;
    let mut linear = SpdSolver::new();
    let mut p = initial.clone();
    let mut steps = Vec::new();
    let mut last = None;
    for tau in config.tau_schedule() {
        let res = newton_solve_with(problem, tau, &p, config, &mut linear)?;
        log::debug!("tau={tau:.3e}: {} Newton iterations, |r1|={:.2e}", res.iterations, res.r1);
        let solution = DiscreteSolution {
            p: res.p,
            u: res.u,
            tau_final: tau,
            steps: Vec::new(),
            r1: res.r1,
            r2: res.r2,
        };
        let diag = diagnostics(&solution, problem, config.exec);
        steps.push(TauStep {
            tau,
            iterations: res.iterations,
            backtracks: res.backtracks,
            r1: res.r1,
            r2: res.r2,
            duality_gap: diag.duality_gap,
        });
        p = solution.p.clone();
        last = Some((solution, diag));
    }
    let (mut solution, diag) = last.expect("schedule has at least one value");
    solution.steps = steps;
    Ok((solution, diag))
}

/// Per-element `−α(x_T) φ'_τ(p_h(x_T))` at centroids, the discrete counterpart of `∇u`.
pub fn recovered_gradient(p: &Rt0Field, problem: &DiscreteProblem, tau: f64) -> Vec<Vector2<f64>> {
    let mesh = &problem.mesh;
    (0..mesh.num_triangles())
        .map(|t| {
            let local = LocalRt0::new(mesh, t);
            let pc = local.eval(&p.dofs, &mesh.centroid(t));
            -huber::dphi(&pc, tau) * problem.alpha_centroid[t]
        })
        .collect()
}

/// Flux at element centroids.
pub fn centroid_flux(p: &Rt0Field, mesh: &Mesh) -> Vec<Vector2<f64>> {
    (0..mesh.num_triangles()).map(|t| LocalRt0::new(mesh, t).eval(&p.dofs, &mesh.centroid(t))).collect()
}

pub fn diagnostics(solution: &DiscreteSolution, problem: &DiscreteProblem, exec: Exec) -> Diagnostics {
    let mesh = &problem.mesh;
    let p = &solution.p;
    let u = &solution.u.values;
    let bp = problem.div.spmv(&p.dofs).expect("RT0 field sized to mesh");

    let misfit: f64 = (0..mesh.num_triangles())
        .map(|t| {
            let div = bp[t] / mesh.area(t);
            let f = problem.source.element(t);
            let vals: [f64; NQ] = std::array::from_fn(|q| (div - f[q]).powi(2));
            DEGREE4.integrate(mesh.area(t), &vals)
        })
        .sum();
    let primal_value = 0.5 * misfit + weighted_norm_integral(mesh, p, &problem.alpha, exec);
    let fu: f64 = u.iter().zip(&problem.load).map(|(a, b)| a * b).sum();
    let uu = problem.mass.norm(u).powi(2);
    let dual_value = fu - 0.5 * uu;

    let tau = solution.tau_final;
    let flux = centroid_flux(p, mesh);
    let mut max_grad_ratio: f64 = 0.0;
    let mut max_violation = f64::NEG_INFINITY;
    let mut feasibility_violation = 0.0;
    let mut active_area = 0.0;
    for t in 0..mesh.num_triangles() {
        let alpha = problem.alpha_centroid[t];
        let grad = (huber::dphi(&flux[t], tau) * alpha).norm();
        if alpha > 0.0 {
            max_grad_ratio = max_grad_ratio.max(grad / alpha);
        }
        max_violation = max_violation.max(grad - alpha);
        feasibility_violation += mesh.area(t) * (grad - alpha).max(0.0);
        if flux[t].norm() > tau {
            active_area += mesh.area(t);
        }
    }
    Diagnostics {
        primal_value,
        dual_value,
        duality_gap: primal_value - dual_value,
        max_grad_ratio,
        max_violation,
        feasibility_violation,
        active_fraction: active_area / mesh.rect().area(),
    }
}

/// Value of the regularized reduced objective `½(Bp − F)ᵀM⁻¹(Bp − F) + ∫ α φ_τ(p_h)`,
/// whose gradient is the reduced residual.
pub fn regularized_objective(p: &Rt0Field, problem: &DiscreteProblem, tau: f64, exec: Exec) -> f64 {
    let bp = problem.div.spmv(&p.dofs).expect("RT0 field sized to mesh");
    let r: Vec<f64> = bp.iter().zip(&problem.load).map(|(a, b)| a - b).collect();
    0.5 * problem.mass.dual_norm(&r).powi(2) + huber_energy(&problem.mesh, p, &problem.alpha, tau, exec)
}
