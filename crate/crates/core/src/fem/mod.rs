//! RT0 × P0 mixed finite elements on [`Mesh`](crate::mesh::Mesh): basis
//! evaluation, interpolation, quadrature and the discrete operators of the
//! regularized saddle-point system.

mod assembly;
mod quadrature;
mod rt0;

use thiserror::Error;

pub use assembly::{
    assemble_div, assemble_huber_jacobian, assemble_huber_residual, assemble_load, assemble_mass_p0, assemble_rt0_mass,
    huber_energy, huber_jacobian_locals, l2_error_p0, l2_error_rt0, weighted_norm_integral, EdgePattern, LocalMatrix,
    P0Mass,
};
pub use quadrature::{QuadField, QuadratureRule, DEGREE4, EDGE_GAUSS3, NQ};
pub(crate) use rt0::LocalRt0;
pub use rt0::{interpolate_rt0, rt0_eval, P0Field, Rt0Field};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("point ({x}, {y}) lies outside triangle {triangle}")]
    PointOutside { triangle: usize, x: f64, y: f64 },
    #[error("triangle index {0} out of range")]
    NoSuchTriangle(usize),
    #[error("field has {got} coefficients, mesh expects {expected}")]
    FieldSize { expected: usize, got: usize },
}
