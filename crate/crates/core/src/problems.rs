//! Problem data: constraint bounds, sources, the closed-form Example 1
//! solution, the named scenario library and mesh-convergence studies.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem::{l2_error_p0, l2_error_rt0, QuadField};
use crate::mesh::{build_rect_mesh, BoundaryPartition, Mesh, MeshError, Point, Rect};
use crate::par::Exec;
use crate::solver::{continuation_solve, DiscreteProblem, SolverConfig, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid problem specification at `{path}`: {message}")]
    InvalidSpec { path: String, message: String },
    #[error("unknown scenario `{0}` (expected one of: {names})", names = SCENARIOS.join(", "))]
    UnknownScenario(String),
    #[error("scenario has no closed-form solution")]
    NoExactSolution,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("solve on the {n}x{n} mesh failed: {source}")]
    Solver { n: usize, source: SolverError },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ProblemError {
    ProblemError::InvalidSpec { path: path.into(), message: message.into() }
}

/// A subset of the plane used to build piecewise-constant data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    /// `{ a·x + b·y ≤ c }`.
    HalfPlane { a: f64, b: f64, c: f64 },
    /// Closed axis-aligned box.
    Box { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Region {
    pub fn contains(&self, p: &Point) -> bool {
        match *self {
            Region::HalfPlane { a, b, c } => a * p.x + b * p.y <= c,
            Region::Box { x0, y0, x1, y1 } => p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1,
        }
    }

    fn validate(&self, path: &str) -> Result<(), ProblemError> {
        let finite = match *self {
            Region::HalfPlane { a, b, c } => {
                if a == 0.0 && b == 0.0 {
                    return Err(invalid(path, "half-plane normal (a, b) must be nonzero"));
                }
                [a, b, c].iter().all(|v| v.is_finite())
            }
            Region::Box { x0, y0, x1, y1 } => {
                if !(x0 <= x1 && y0 <= y1) {
                    return Err(invalid(path, "box corners must satisfy x0 <= x1 and y0 <= y1"));
                }
                [x0, y0, x1, y1].iter().all(|v| v.is_finite())
            }
        };
        if finite {
            Ok(())
        } else {
            Err(invalid(path, "region coefficients must be finite"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionValue {
    pub region: Region,
    pub value: f64,
}

/// First region containing `p` wins; otherwise `default`.
fn piecewise_value(regions: &[RegionValue], default: f64, p: &Point) -> f64 {
    regions.iter().find(|r| r.region.contains(p)).map_or(default, |r| r.value)
}

/// Strip height of the line-measure mollification, in units of the mesh size.
pub const DEFAULT_STRIP_CELLS: f64 = 100.0;

fn default_strip_cells() -> f64 {
    DEFAULT_STRIP_CELLS
}

fn default_base() -> f64 {
    1.0
}

/// Pointwise bound on the gradient magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaSpec {
    Constant { value: f64 },
    Piecewise { regions: Vec<RegionValue>, default: f64 },
    /// Lebesgue density `base` plus a horizontal line measure of total weight
    /// `weight · length` on `y = line_y`. On a mesh of size `h` the line is
    /// smeared over the strip `line_y − strip_cells·h ≤ y ≤ line_y` with
    /// density `weight / (strip_cells·h)`.
    MeasureLine {
        weight: f64,
        line_y: f64,
        #[serde(default = "default_base")]
        base: f64,
        #[serde(default = "default_strip_cells")]
        strip_cells: f64,
    },
}

impl AlphaSpec {
    pub fn validate(&self, path: &str) -> Result<(), ProblemError> {
        let positive = |v: f64, p: String| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(p, format!("must be positive and finite, got {v}")))
            }
        };
        match self {
            AlphaSpec::Constant { value } => positive(*value, format!("{path}.value")),
            AlphaSpec::Piecewise { regions, default } => {
                positive(*default, format!("{path}.default"))?;
                for (i, r) in regions.iter().enumerate() {
                    r.region.validate(&format!("{path}.regions[{i}].region"))?;
                    positive(r.value, format!("{path}.regions[{i}].value"))?;
                }
                Ok(())
            }
            AlphaSpec::MeasureLine { weight, line_y, base, strip_cells } => {
                positive(*weight, format!("{path}.weight"))?;
                positive(*base, format!("{path}.base"))?;
                positive(*strip_cells, format!("{path}.strip_cells"))?;
                if !line_y.is_finite() {
                    return Err(invalid(format!("{path}.line_y"), "must be finite"));
                }
                Ok(())
            }
        }
    }

    /// Value at `p` for mesh size `h` (only the line measure depends on `h`).
    pub fn value_at(&self, h: f64, p: &Point) -> f64 {
        match self {
            AlphaSpec::Constant { value } => *value,
            AlphaSpec::Piecewise { regions, default } => piecewise_value(regions, *default, p),
            AlphaSpec::MeasureLine { weight, line_y, base, strip_cells } => {
                let width = strip_cells * h;
                if p.y <= *line_y && p.y >= line_y - width {
                    base + weight / width
                } else {
                    *base
                }
            }
        }
    }
}

/// Constraint bound at `point` on `mesh`; the line measure uses `h = min(Δx, Δy)`.
pub fn alpha_at(spec: &AlphaSpec, mesh: &Mesh, point: &Point) -> Result<f64, ProblemError> {
    spec.validate("alpha")?;
    if !mesh.rect().contains(point) {
        return Err(invalid("alpha", format!("point ({}, {}) lies outside the domain", point.x, point.y)));
    }
    Ok(spec.value_at(mesh.h(), point))
}

/// Built-in source fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePreset {
    /// `1e-3 + u₀` with the two-cone support structure `u₀` of [`example2_support`].
    Example2,
    /// `u₀` alone.
    Example2Support,
    /// `0.25` on the upper half `y ≥ 0.5`, zero below.
    Example4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    Constant { value: f64 },
    Piecewise { regions: Vec<RegionValue>, default: f64 },
    Preset { name: SourcePreset },
}

impl SourceSpec {
    pub fn validate(&self, path: &str) -> Result<(), ProblemError> {
        let finite = |v: f64, p: String| if v.is_finite() { Ok(()) } else { Err(invalid(p, "must be finite")) };
        match self {
            SourceSpec::Constant { value } => finite(*value, format!("{path}.value")),
            SourceSpec::Piecewise { regions, default } => {
                finite(*default, format!("{path}.default"))?;
                for (i, r) in regions.iter().enumerate() {
                    r.region.validate(&format!("{path}.regions[{i}].region"))?;
                    finite(r.value, format!("{path}.regions[{i}].value"))?;
                }
                Ok(())
            }
            SourceSpec::Preset { .. } => Ok(()),
        }
    }

    pub fn value_at(&self, p: &Point) -> f64 {
        match self {
            SourceSpec::Constant { value } => *value,
            SourceSpec::Piecewise { regions, default } => piecewise_value(regions, *default, p),
            SourceSpec::Preset { name } => match name {
                SourcePreset::Example2 => 1e-3 + example2_support(p),
                SourcePreset::Example2Support => example2_support(p),
                SourcePreset::Example4 => {
                    if p.y >= 0.5 {
                        0.25
                    } else {
                        0.0
                    }
                }
            },
        }
    }
}

/// Support structure of the two-cone example: a paraboloid capped at 0.2, and
/// above the anti-diagonal additionally a cone of slope 5 peaking at (0.7, 0.7).
pub fn example2_support(p: &Point) -> f64 {
    let bowl = (0.5 * (p.x * p.x + p.y * p.y)).min(0.2);
    if p.y <= 1.0 - p.x {
        bowl
    } else {
        let cone = 1.0 - 5.0 * ((p.x - 0.7).powi(2) + (p.y - 0.7).powi(2)).sqrt();
        cone.max(bowl)
    }
}

/// A complete stationary problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default = "unit_rect")]
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
    /// Sides with zero-flux conditions; all other sides carry `u = 0`.
    #[serde(default)]
    pub boundary: BoundaryPartition,
    pub alpha: AlphaSpec,
    pub source: SourceSpec,
}

fn unit_rect() -> Rect {
    Rect::UNIT
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), ProblemError> {
        self.rect.validate().map_err(|e| invalid("rect", e.to_string()))?;
        if self.nx == 0 {
            return Err(invalid("nx", "must be at least 1"));
        }
        if self.ny == 0 {
            return Err(invalid("ny", "must be at least 1"));
        }
        self.alpha.validate("alpha")?;
        self.source.validate("source")
    }

    /// Same problem on an `n × n` grid.
    pub fn with_resolution(&self, n: usize) -> Self {
        Self { nx: n, ny: n, ..self.clone() }
    }

    pub fn build_mesh(&self) -> Result<Mesh, ProblemError> {
        self.validate()?;
        Ok(build_rect_mesh(self.rect, self.nx, self.ny)?)
    }

    /// Samples the data on the mesh and assembles the discrete operators.
    pub fn discretize(&self, exec: Exec) -> Result<DiscreteProblem, ProblemError> {
        let mesh = self.build_mesh()?;
        let h = mesh.h();
        if let AlphaSpec::MeasureLine { line_y, strip_cells, .. } = &self.alpha {
            if line_y - strip_cells * h < self.rect.y0 {
                log::warn!(
                    "line-measure strip of height {:.3} leaves the domain on this mesh (h = {h:.3e}); \
                     it is clipped and carries less than the full line mass",
                    strip_cells * h
                );
            }
        }
        let alpha = QuadField::sample(&mesh, exec, |p| self.alpha.value_at(h, p));
        let alpha_centroid = (0..mesh.num_triangles()).map(|t| self.alpha.value_at(h, &mesh.centroid(t))).collect();
        let source = QuadField::sample(&mesh, exec, |p| self.source.value_at(p));
        Ok(DiscreteProblem::new(mesh, self.boundary.clone(), alpha, alpha_centroid, source))
    }

    /// Closed-form solution, available for constant data on the unit square with `u = 0` on the whole boundary.
    pub fn exact_solution(&self) -> Option<Ex1Exact> {
        match (&self.alpha, &self.source) {
            (AlphaSpec::Constant { value: alpha }, SourceSpec::Constant { value: f })
                if self.rect == Rect::UNIT && !self.boundary.has_neumann() && *f > 0.0 =>
            {
                Some(Ex1Exact { f: *f, alpha: *alpha })
            }
            _ => None,
        }
    }
}

/// Closed-form solution for constant `f > 0` and `α > 0` on the unit square
/// with homogeneous Dirichlet data: a truncated pyramid and its flux.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ex1Exact {
    pub f: f64,
    pub alpha: f64,
}

impl Ex1Exact {
    /// `min{f, αs, α(1 − s)}`, the one-dimensional profile.
    pub fn profile(&self, s: f64) -> f64 {
        self.f.min(self.alpha * s).min(self.alpha * (1.0 - s))
    }

    pub fn u(&self, p: &Point) -> f64 {
        self.profile(p.x).min(self.profile(p.y))
    }

    /// Flux with `div p = f − u` and `∇u = −α p/|p|` wherever `p ≠ 0`.
    pub fn p(&self, p: &Point) -> Vector2<f64> {
        let (mx, my) = (self.profile(p.x), self.profile(p.y));
        let level = self.f - 0.5 * (mx + my);
        if (p.x - 0.5).abs() > (p.y - 0.5).abs() {
            Vector2::new((my - mx) * (p.x - 0.5).signum() * level / self.alpha, 0.0)
        } else {
            Vector2::new(0.0, (mx - my) * (p.y - 0.5).signum() * level / self.alpha)
        }
    }
}

/// Names accepted by [`scenario`].
pub const SCENARIOS: [&str; 8] =
    ["ex1_f1_a1", "ex1_f025_a1", "ex1_f01_a1", "ex1_f1_a05", "ex1_f1_ajump", "ex2_a25", "ex2_a15", "ex4_measure"];

/// Default grid resolution of the scenario library.
pub const DEFAULT_RESOLUTION: usize = 64;
/// Line-measure scenarios need `strip_cells · h < 0.5` for the strip to fit below the line.
pub const MEASURE_RESOLUTION: usize = 256;

/// Named problem from the example library, on the unit square with `u = 0` on the boundary.
pub fn scenario(name: &str) -> Result<ProblemSpec, ProblemError> {
    let constant = |f: f64, a: f64| (SourceSpec::Constant { value: f }, AlphaSpec::Constant { value: a });
    let (source, alpha, n) = match name {
        "ex1_f1_a1" => (constant(1.0, 1.0).0, constant(1.0, 1.0).1, DEFAULT_RESOLUTION),
        "ex1_f025_a1" => (constant(0.25, 1.0).0, constant(0.25, 1.0).1, DEFAULT_RESOLUTION),
        "ex1_f01_a1" => (constant(0.1, 1.0).0, constant(0.1, 1.0).1, DEFAULT_RESOLUTION),
        "ex1_f1_a05" => (constant(1.0, 0.5).0, constant(1.0, 0.5).1, DEFAULT_RESOLUTION),
        "ex1_f1_ajump" => (
            SourceSpec::Constant { value: 1.0 },
            AlphaSpec::Piecewise {
                regions: vec![RegionValue { region: Region::HalfPlane { a: 1.0, b: 1.0, c: 1.0 }, value: 0.75 }],
                default: 1.0,
            },
            DEFAULT_RESOLUTION,
        ),
        "ex2_a25" => (SourceSpec::Preset { name: SourcePreset::Example2 }, AlphaSpec::Constant { value: 2.5 }, DEFAULT_RESOLUTION),
        "ex2_a15" => (SourceSpec::Preset { name: SourcePreset::Example2 }, AlphaSpec::Constant { value: 1.5 }, DEFAULT_RESOLUTION),
        "ex4_measure" => (
            SourceSpec::Preset { name: SourcePreset::Example4 },
            AlphaSpec::MeasureLine { weight: 100.0, line_y: 0.5, base: 1.0, strip_cells: DEFAULT_STRIP_CELLS },
            MEASURE_RESOLUTION,
        ),
        other => return Err(ProblemError::UnknownScenario(other.to_string())),
    };
    Ok(ProblemSpec { rect: Rect::UNIT, nx: n, ny: n, boundary: BoundaryPartition::all_dirichlet(), alpha, source })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub h: f64,
    pub error_u: f64,
    pub error_p: f64,
    pub newton_iterations: usize,
    pub duality_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of `log error_u` against `log h`.
    pub rate_u: f64,
    pub rate_p: f64,
}

/// Least-squares slope of `log y` against `log x`; NaN with fewer than two points.
pub fn fitted_rate(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    if x.len() < 2 {
        return f64::NAN;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Solves `spec` on each `n × n` grid and measures L² errors against the closed-form solution.
///
/// Meshes are solved concurrently when `config.exec` is parallel; rows keep the order of `sizes`.
pub fn convergence_study(spec: &ProblemSpec, sizes: &[usize], config: &SolverConfig) -> Result<StudyTable, ProblemError> {
    let exact = spec.exact_solution().ok_or(ProblemError::NoExactSolution)?;
    let rows = config.exec.map_with_min_len(sizes.len(), 1, |i| -> Result<StudyRow, ProblemError> {
        let n = sizes[i];
        let problem = spec.with_resolution(n).discretize(config.exec)?;
        let (sol, diag) = continuation_solve(&problem, config).map_err(|source| ProblemError::Solver { n, source })?;
        Ok(StudyRow {
            n,
            h: problem.mesh.h(),
            error_u: l2_error_p0(&problem.mesh, &sol.u, |p| exact.u(p)),
            error_p: l2_error_rt0(&problem.mesh, &sol.p, |p| exact.p(p)),
            newton_iterations: sol.steps.iter().map(|s| s.iterations).sum(),
            duality_gap: diag.duality_gap,
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let eu: Vec<f64> = rows.iter().map(|r| r.error_u).collect();
    let ep: Vec<f64> = rows.iter().map(|r| r.error_p).collect();
    Ok(StudyTable { rate_u: fitted_rate(&h, &eu), rate_p: fitted_rate(&h, &ep), rows })
}
