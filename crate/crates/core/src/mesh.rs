//! Structured triangulations of axis-aligned rectangles.
//!
//! Every cell of the `nx × ny` grid is split into two counterclockwise triangles
//! by the diagonal running from its lower-left to its upper-right corner. Edges
//! carry a fixed global unit normal, obtained by rotating the tangent from the
//! lower to the higher vertex index clockwise. Triangles store, for each local
//! vertex `k`, the edge opposite to it and the sign relating the global edge
//! normal to the triangle's outward normal on that edge.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = Vector2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("mesh resolution must be at least 1 in each direction (got nx={nx}, ny={ny})")]
    EmptyGrid { nx: usize, ny: usize },
    #[error("degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]")]
    DegenerateRect { x0: f64, y0: f64, x1: f64, y1: f64 },
    #[error("triangle index {0} out of range")]
    NoSuchTriangle(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 };

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, MeshError> {
        let rect = Rect { x0, y0, x1, y1 };
        rect.validate()?;
        Ok(rect)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let finite = [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite());
        if !finite || self.x0 >= self.x1 || self.y0 >= self.y1 {
            return Err(MeshError::DegenerateRect { x0: self.x0, y0: self.y0, x1: self.x1, y1: self.y1 });
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x0 && p.x <= self.x1 && p.y >= self.y0 && p.y <= self.y1
    }
}

/// A side of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];
}

/// Sides carrying the no-flux condition (Γ_N). The remaining sides form Γ_D.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoundaryPartition {
    pub neumann_sides: Vec<Side>,
}

impl BoundaryPartition {
    /// Γ_N = ∅, Γ_D = ∂Ω.
    pub fn all_dirichlet() -> Self {
        Self { neumann_sides: Vec::new() }
    }

    /// Γ_N = ∂Ω.
    pub fn all_neumann() -> Self {
        Self { neumann_sides: Side::ALL.to_vec() }
    }

    pub fn is_neumann(&self, side: Side) -> bool {
        self.neumann_sides.contains(&side)
    }

    pub fn has_neumann(&self) -> bool {
        !self.neumann_sides.is_empty()
    }

    pub fn has_dirichlet(&self) -> bool {
        Side::ALL.iter().any(|s| !self.is_neumann(*s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGeometry {
    pub area: f64,
    pub centroid: Point,
    /// Length of the edge opposite each local vertex.
    pub edge_lengths: [f64; 3],
    /// Outward unit normal on the edge opposite each local vertex.
    pub outward_normals: [Point; 3],
}

#[derive(Debug, Clone)]
pub struct Mesh {
    rect: Rect,
    nx: usize,
    ny: usize,
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    edge_normals: Vec<Point>,
    /// Edge opposite local vertex k.
    tri_edges: Vec<[usize; 3]>,
    /// +1 when the global edge normal points out of the triangle.
    tri_signs: Vec<[f64; 3]>,
    edge_tris: Vec<Vec<usize>>,
    boundary_edges: Vec<(usize, Side)>,
    areas: Vec<f64>,
}

impl Mesh {
    pub fn rect(&self) -> Rect {
        self.rect
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        (self.rect.x1 - self.rect.x0) / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        (self.rect.y1 - self.rect.y0) / self.ny as f64
    }

    /// Mesh size used by the measure mollification: the shorter cell side.
    pub fn h(&self) -> f64 {
        self.dx().min(self.dy())
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn edge_normal(&self, e: usize) -> Point {
        self.edge_normals[e]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        (self.vertices[b] - self.vertices[a]).norm()
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let [a, b] = self.edges[e];
        (self.vertices[a] + self.vertices[b]) * 0.5
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn triangle_signs(&self, t: usize) -> [f64; 3] {
        self.tri_signs[t]
    }

    pub fn triangle_vertices(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Triangles incident to edge `e` (one for boundary edges, two otherwise).
    pub fn edge_triangles(&self, e: usize) -> &[usize] {
        &self.edge_tris[e]
    }

    pub fn boundary_edges(&self) -> &[(usize, Side)] {
        &self.boundary_edges
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn centroid(&self, t: usize) -> Point {
        let [a, b, c] = self.triangle_vertices(t);
        (a + b + c) / 3.0
    }

    pub fn element_geometry(&self, t: usize) -> Result<ElementGeometry, MeshError> {
        if t >= self.triangles.len() {
            return Err(MeshError::NoSuchTriangle(t));
        }
        let pts = self.triangle_vertices(t);
        let centroid = (pts[0] + pts[1] + pts[2]) / 3.0;
        let mut edge_lengths = [0.0; 3];
        let mut outward_normals = [Point::zeros(); 3];
        for k in 0..3 {
            let e = self.tri_edges[t][k];
            edge_lengths[k] = self.edge_length(e);
            outward_normals[k] = self.edge_normals[e] * self.tri_signs[t][k];
        }
        Ok(ElementGeometry { area: self.areas[t], centroid, edge_lengths, outward_normals })
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, p: &Point) -> [f64; 3] {
        let [a, b, c] = self.triangle_vertices(t);
        let area2 = (b - a).perp(&(c - a));
        let l1 = (c - b).perp(&(p - b)) / area2;
        let l2 = (a - c).perp(&(p - c)) / area2;
        [l1, l2, 1.0 - l1 - l2]
    }

    /// Triangle containing `p`. Points on a cell diagonal resolve to the lower-right triangle.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        if !self.rect.contains(p) {
            return None;
        }
        let i = (((p.x - self.rect.x0) / self.dx()).floor() as usize).min(self.nx - 1);
        let j = (((p.y - self.rect.y0) / self.dy()).floor() as usize).min(self.ny - 1);
        let cell = j * self.nx + i;
        let fx = (p.x - self.rect.x0) / self.dx() - i as f64;
        let fy = (p.y - self.rect.y0) / self.dy() - j as f64;
        Some(if fy <= fx { 2 * cell } else { 2 * cell + 1 })
    }

    /// Splits the boundary edges into Γ_D and Γ_N lists, each in increasing edge order.
    pub fn classify_boundary(&self, bp: &BoundaryPartition) -> (Vec<usize>, Vec<usize>) {
        let mut dirichlet = Vec::new();
        let mut neumann = Vec::new();
        for &(e, side) in &self.boundary_edges {
            if bp.is_neumann(side) {
                neumann.push(e);
            } else {
                dirichlet.push(e);
            }
        }
        dirichlet.sort_unstable();
        neumann.sort_unstable();
        (dirichlet, neumann)
    }
}

fn signed_area(pts: &[Point; 3]) -> f64 {
    0.5 * (pts[1] - pts[0]).perp(&(pts[2] - pts[0]))
}

pub fn build_rect_mesh(rect: Rect, nx: usize, ny: usize) -> Result<Mesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::EmptyGrid { nx, ny });
    }
    rect.validate()?;
    let dx = (rect.x1 - rect.x0) / nx as f64;
    let dy = (rect.y1 - rect.y0) / ny as f64;
    let vid = |i: usize, j: usize| j * (nx + 1) + i;

    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            // pin the far sides so the rectangle is reproduced exactly
            let x = if i == nx { rect.x1 } else { rect.x0 + i as f64 * dx };
            let y = if j == ny { rect.y1 } else { rect.y0 + j as f64 * dy };
            vertices.push(Point::new(x, y));
        }
    }

    let n_horizontal = nx * (ny + 1);
    let n_vertical = ny * (nx + 1);
    let horizontal = |i: usize, j: usize| j * nx + i;
    let vertical = |i: usize, j: usize| n_horizontal + j * (nx + 1) + i;
    let diagonal = |i: usize, j: usize| n_horizontal + n_vertical + j * nx + i;

    let num_edges = n_horizontal + n_vertical + nx * ny;
    let mut edges = Vec::with_capacity(num_edges);
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for j in 0..=ny {
        for i in 0..nx {
            edges.push([vid(i, j), vid(i + 1, j)]);
            if j == 0 {
                boundary_edges.push((horizontal(i, j), Side::Bottom));
            } else if j == ny {
                boundary_edges.push((horizontal(i, j), Side::Top));
            }
        }
    }
    for j in 0..ny {
        for i in 0..=nx {
            edges.push([vid(i, j), vid(i, j + 1)]);
            if i == 0 {
                boundary_edges.push((vertical(i, j), Side::Left));
            } else if i == nx {
                boundary_edges.push((vertical(i, j), Side::Right));
            }
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            edges.push([vid(i, j), vid(i + 1, j + 1)]);
        }
    }
    debug_assert_eq!(edges.len(), num_edges);

    let edge_normals: Vec<Point> = edges
        .iter()
        .map(|&[a, b]| {
            let t = vertices[b] - vertices[a];
            Point::new(t.y, -t.x) / t.norm()
        })
        .collect();

    let mut triangles = Vec::with_capacity(2 * nx * ny);
    let mut tri_edges = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            tri_edges.push([vertical(i + 1, j), diagonal(i, j), horizontal(i, j)]);
            triangles.push([v00, v11, v01]);
            tri_edges.push([horizontal(i, j + 1), vertical(i, j), diagonal(i, j)]);
        }
    }

    let mut tri_signs = Vec::with_capacity(triangles.len());
    let mut edge_tris = vec![Vec::with_capacity(2); num_edges];
    for (t, (tri, tes)) in triangles.iter().zip(&tri_edges).enumerate() {
        let mut signs = [0.0; 3];
        for k in 0..3 {
            let e = tes[k];
            let [a, b] = edges[e];
            let mid = (vertices[a] + vertices[b]) * 0.5;
            let away = mid - vertices[tri[k]];
            signs[k] = if edge_normals[e].dot(&away) > 0.0 { 1.0 } else { -1.0 };
            edge_tris[e].push(t);
        }
        tri_signs.push(signs);
    }

    let areas = triangles
        .iter()
        .map(|&[a, b, c]| signed_area(&[vertices[a], vertices[b], vertices[c]]))
        .collect();

    Ok(Mesh { rect, nx, ny, vertices, triangles, edges, edge_normals, tri_edges, tri_signs, edge_tris, boundary_edges, areas })
}
