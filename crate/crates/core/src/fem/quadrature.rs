use crate::mesh::{Mesh, Point};
use crate::par::Exec;

/// Number of points in [`DEGREE4`].
pub const NQ: usize = 6;

/// Symmetric triangle rule given by barycentric points and weights normalized to sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureRule {
    pub points: [[f64; 3]; NQ],
    pub weights: [f64; NQ],
}

const A1: f64 = 0.445_948_490_915_964_886_32;
const W1: f64 = 0.223_381_589_678_011_465_70;
const A2: f64 = 0.091_576_213_509_770_743_46;
const W2: f64 = 0.109_951_743_655_321_867_64;

/// Six-point rule exact for polynomials of total degree ≤ 4.
pub const DEGREE4: QuadratureRule = QuadratureRule {
    points: [
        [A1, A1, 1.0 - 2.0 * A1],
        [A1, 1.0 - 2.0 * A1, A1],
        [1.0 - 2.0 * A1, A1, A1],
        [A2, A2, 1.0 - 2.0 * A2],
        [A2, 1.0 - 2.0 * A2, A2],
        [1.0 - 2.0 * A2, A2, A2],
    ],
    weights: [W1, W1, W1, W2, W2, W2],
};

impl QuadratureRule {
    pub fn physical_points(&self, vertices: &[Point; 3]) -> [Point; NQ] {
        std::array::from_fn(|q| {
            let [l0, l1, l2] = self.points[q];
            vertices[0] * l0 + vertices[1] * l1 + vertices[2] * l2
        })
    }

    /// ∫_T g over a triangle of the given area, `g` sampled at the rule's points.
    pub fn integrate(&self, area: f64, values: &[f64; NQ]) -> f64 {
        area * self.weights.iter().zip(values).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Gauss–Legendre nodes on [0, 1] and weights summing to one, exact to degree 5.
pub const EDGE_GAUSS3: [(f64, f64); 3] = [
    (0.5 - 0.387_298_334_620_741_7, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.5 + 0.387_298_334_620_741_7, 5.0 / 18.0),
];

/// A scalar field sampled at the [`DEGREE4`] points of every triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadField {
    values: Vec<[f64; NQ]>,
}

impl QuadField {
    pub fn sample<F>(mesh: &Mesh, exec: Exec, f: F) -> Self
    where
        F: Fn(&Point) -> f64 + Sync + Send,
    {
        let values = exec.map(mesh.num_triangles(), |t| {
            let pts = DEGREE4.physical_points(&mesh.triangle_vertices(t));
            std::array::from_fn(|q| f(&pts[q]))
        });
        Self { values }
    }

    pub fn constant(mesh: &Mesh, c: f64) -> Self {
        Self { values: vec![[c; NQ]; mesh.num_triangles()] }
    }

    pub fn from_values(values: Vec<[f64; NQ]>) -> Self {
        Self { values }
    }

    pub fn element(&self, t: usize) -> &[f64; NQ] {
        &self.values[t]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { values: self.values.iter().map(|v| v.map(|x| x * s)).collect() }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
