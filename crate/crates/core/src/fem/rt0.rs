//! Lowest-order Raviart–Thomas fields with signed-flux degrees of freedom.
//!
//! On a triangle with vertices `P_k` the basis function attached to the edge
//! opposite `P_k` is `σ_k (x − P_k) / (2|T|)`, where `σ_k` relates the global edge
//! normal to the outward one. Its outward flux through that edge is `σ_k` and
//! its divergence is `σ_k / |T|`.

use nalgebra::Vector2;

use super::quadrature::EDGE_GAUSS3;
use super::FemError;
use crate::mesh::{Mesh, Point};

#[derive(Debug, Clone, PartialEq)]
pub struct Rt0Field {
    pub dofs: Vec<f64>,
}

impl Rt0Field {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self { dofs: vec![0.0; mesh.num_edges()] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct P0Field {
    pub values: Vec<f64>,
}

impl P0Field {
    pub fn zeros(mesh: &Mesh) -> Self {
        Self { values: vec![0.0; mesh.num_triangles()] }
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        Self { values: vec![c; mesh.num_triangles()] }
    }

    /// ∫_Ω u.
    pub fn integral(&self, mesh: &Mesh) -> f64 {
        self.values.iter().zip(mesh.areas()).map(|(u, a)| u * a).sum()
    }
}

/// Per-element data needed to evaluate the three local RT0 basis functions.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LocalRt0 {
    pub vertices: [Point; 3],
    pub signs: [f64; 3],
    pub edges: [usize; 3],
    pub area: f64,
}

impl LocalRt0 {
    pub fn new(mesh: &Mesh, t: usize) -> Self {
        Self {
            vertices: mesh.triangle_vertices(t),
            signs: mesh.triangle_signs(t),
            edges: mesh.triangle_edges(t),
            area: mesh.area(t),
        }
    }

    #[inline]
    pub fn basis(&self, k: usize, x: &Point) -> Vector2<f64> {
        (x - self.vertices[k]) * (self.signs[k] / (2.0 * self.area))
    }

    #[inline]
    pub fn basis_at(&self, x: &Point) -> [Vector2<f64>; 3] {
        std::array::from_fn(|k| self.basis(k, x))
    }

    #[inline]
    pub fn eval(&self, dofs: &[f64], x: &Point) -> Vector2<f64> {
        (0..3).fold(Vector2::zeros(), |acc, k| acc + self.basis(k, x) * dofs[self.edges[k]])
    }

    /// Constant divergence of the local field.
    #[cfg(test)]
    pub fn divergence(&self, dofs: &[f64]) -> f64 {
        (0..3).map(|k| self.signs[k] * dofs[self.edges[k]]).sum::<f64>() / self.area
    }
}

const INSIDE_TOL: f64 = 1e-12;

/// Value of the RT0 field restricted to triangle `t` at `point`.
pub fn rt0_eval(mesh: &Mesh, field: &Rt0Field, t: usize, point: &Point) -> Result<Vector2<f64>, FemError> {
    if t >= mesh.num_triangles() {
        return Err(FemError::NoSuchTriangle(t));
    }
    if field.dofs.len() != mesh.num_edges() {
        return Err(FemError::FieldSize { expected: mesh.num_edges(), got: field.dofs.len() });
    }
    if mesh.barycentric(t, point).iter().any(|&l| l < -INSIDE_TOL) {
        return Err(FemError::PointOutside { triangle: t, x: point.x, y: point.y });
    }
    Ok(LocalRt0::new(mesh, t).eval(&field.dofs, point))
}

/// Interpolates a vector field by its flux through each edge (3-point Gauss per edge).
pub fn interpolate_rt0<F>(mesh: &Mesh, field: F) -> Rt0Field
where
    F: Fn(&Point) -> Vector2<f64>,
{
    let dofs = mesh
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &[a, b])| {
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            let n = mesh.edge_normal(e);
            let len = (pb - pa).norm();
            len * EDGE_GAUSS3.iter().map(|&(s, w)| w * field(&(pa + (pb - pa) * s)).dot(&n)).sum::<f64>()
        })
        .collect();
    Rt0Field { dofs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::assemble_div;
    use crate::mesh::{build_rect_mesh, Rect};

    #[test]
    fn basis_has_unit_flux_on_own_edge_only() {
        let mesh = build_rect_mesh(Rect::new(0.0, 0.0, 2.0, 1.0).unwrap(), 2, 3).unwrap();
        for t in 0..mesh.num_triangles() {
            let local = LocalRt0::new(&mesh, t);
            let geo = mesh.element_geometry(t).unwrap();
            for k in 0..3 {
                for j in 0..3 {
                    // normal component is constant along an edge; test at its midpoint
                    let mid = mesh.edge_midpoint(local.edges[j]);
                    let flux = local.basis(k, &mid).dot(&geo.outward_normals[j]) * geo.edge_lengths[j];
                    let expected = if j == k { local.signs[k] } else { 0.0 };
                    assert!((flux - expected).abs() < 1e-13, "t={t} k={k} j={j}");
                }
            }
        }
    }

    #[test]
    fn interpolant_of_constant_field() {
        let mesh = build_rect_mesh(Rect::UNIT, 1, 1).unwrap();
        let field = interpolate_rt0(&mesh, |_| Vector2::new(1.0, 0.0));
        for (e, &[a, b]) in mesh.edges().iter().enumerate() {
            let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
            if pa.x == pb.x {
                assert!((field.dofs[e].abs() - mesh.edge_length(e)).abs() < 1e-15);
            } else if pa.y == pb.y {
                assert_eq!(field.dofs[e], 0.0);
            }
        }
        for t in 0..2 {
            let c = mesh.centroid(t);
            for x in [c, mesh.triangle_vertices(t)[0] * 0.2 + c * 0.8] {
                let v = rt0_eval(&mesh, &field, t, &x).unwrap();
                assert!((v - Vector2::new(1.0, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_field_is_zero() {
        let mesh = build_rect_mesh(Rect::UNIT, 3, 3).unwrap();
        let field = interpolate_rt0(&mesh, |_| Vector2::zeros());
        assert!(field.dofs.iter().all(|&d| d == 0.0));
        let v = rt0_eval(&mesh, &field, 4, &mesh.centroid(4)).unwrap();
        assert_eq!(v, Vector2::zeros());
    }

    #[test]
    fn linear_field_is_reproduced_at_centroids() {
        // (x, y) lies in the local RT0 space, so interpolation is exact
        let mesh = build_rect_mesh(Rect::new(-1.0, 0.5, 1.0, 2.0).unwrap(), 4, 3).unwrap();
        let field = interpolate_rt0(&mesh, |p| *p);
        for t in 0..mesh.num_triangles() {
            let c = mesh.centroid(t);
            let v = rt0_eval(&mesh, &field, t, &c).unwrap();
            assert!((v - c).norm() < 1e-13);
        }
    }

    #[test]
    fn divergence_of_identity_field_is_two() {
        let mesh = build_rect_mesh(Rect::UNIT, 5, 4).unwrap();
        let field = interpolate_rt0(&mesh, |p| *p);
        let b = assemble_div(&mesh);
        let div = b.spmv(&field.dofs).unwrap();
        for t in 0..mesh.num_triangles() {
            assert!((div[t] - 2.0 * mesh.area(t)).abs() < 1e-14);
            assert!((LocalRt0::new(&mesh, t).divergence(&field.dofs) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_points_outside() {
        let mesh = build_rect_mesh(Rect::UNIT, 1, 1).unwrap();
        let field = Rt0Field::zeros(&mesh);
        // triangle 0 is below the diagonal
        let err = rt0_eval(&mesh, &field, 0, &Point::new(0.1, 0.9)).unwrap_err();
        assert!(matches!(err, FemError::PointOutside { triangle: 0, .. }));
        assert!(rt0_eval(&mesh, &field, 7, &Point::new(0.1, 0.9)).is_err());
    }
}
