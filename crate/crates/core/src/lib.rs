//! Solver for minimization problems with pointwise gradient constraints
//! `|∇u|₂ ≤ α`, computed through the Fenchel pre-dual in the flux variable `p`.
//!
//! The pre-dual objective `½‖div p − f‖² + ∫ α|p|` is smoothed with a Huber
//! regularization of the norm, discretized with RT0 fluxes and P0 states, and
//! solved by Newton's method along a decreasing sequence of smoothing parameters.
//! The primal state is recovered as `u = f − div p`.

pub mod evolution;
pub mod fem;
pub mod huber;
pub mod linalg;
pub mod mesh;
pub mod par;
pub mod problems;
pub mod solver;

pub use mesh::{build_rect_mesh, BoundaryPartition, Mesh, Point, Rect, Side};
pub use par::Exec;
