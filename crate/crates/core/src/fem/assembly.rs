use nalgebra::Vector2;

use super::quadrature::{QuadField, DEGREE4, NQ};
use super::rt0::{LocalRt0, P0Field, Rt0Field};
use crate::huber;
use crate::linalg::SparseMatrix;
use crate::mesh::{Mesh, Point};
use crate::par::Exec;

pub type LocalMatrix = [[f64; 3]; 3];

/// Discrete divergence pairing: `B[T, e] = σ_{T,e}`, so `(B p)_T = ∫_T div p_h`.
pub fn assemble_div(mesh: &Mesh) -> SparseMatrix {
    let mut triplets = Vec::with_capacity(3 * mesh.num_triangles());
    for t in 0..mesh.num_triangles() {
        let edges = mesh.triangle_edges(t);
        let signs = mesh.triangle_signs(t);
        for k in 0..3 {
            triplets.push((t, edges[k], signs[k]));
        }
    }
    SparseMatrix::from_triplets(mesh.num_triangles(), mesh.num_edges(), &triplets).expect("valid mesh incidence")
}

/// Diagonal P0 mass matrix, `M_TT = |T|`.
#[derive(Debug, Clone, PartialEq)]
pub struct P0Mass {
    pub diag: Vec<f64>,
}

impl P0Mass {
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.diag).map(|(a, b)| a * b).collect()
    }

    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.diag).map(|(a, b)| a / b).collect()
    }

    /// L² norm of the P0 function whose load vector is `r`, i.e. `sqrt(rᵀ M⁻¹ r)`.
    pub fn dual_norm(&self, r: &[f64]) -> f64 {
        r.iter().zip(&self.diag).map(|(a, b)| a * a / b).sum::<f64>().sqrt()
    }

    /// `sqrt(uᵀ M u)`.
    pub fn norm(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.diag).map(|(a, b)| a * a * b).sum::<f64>().sqrt()
    }
}

pub fn assemble_mass_p0(mesh: &Mesh) -> P0Mass {
    P0Mass { diag: mesh.areas().to_vec() }
}

/// `F_T = ∫_T f` with `f` sampled at the degree-4 points.
pub fn assemble_load(mesh: &Mesh, f: &QuadField) -> Vec<f64> {
    (0..mesh.num_triangles()).map(|t| DEGREE4.integrate(mesh.area(t), f.element(t))).collect()
}

/// CSR structure of edge–edge couplings (edges sharing a triangle) with the
/// position of every local 3×3 entry inside the value array.
#[derive(Debug, Clone)]
pub struct EdgePattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    scatter: Vec<[usize; 9]>,
}

impl EdgePattern {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.num_edges();
        let mut neighbours: Vec<Vec<usize>> = vec![Vec::with_capacity(5); n];
        for t in 0..mesh.num_triangles() {
            let edges = mesh.triangle_edges(t);
            for &a in &edges {
                neighbours[a].extend_from_slice(&edges);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut neighbours {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let scatter = (0..mesh.num_triangles())
            .map(|t| {
                let edges = mesh.triangle_edges(t);
                std::array::from_fn(|kl| {
                    let (r, c) = (edges[kl / 3], edges[kl % 3]);
                    let row = &col_idx[row_ptr[r]..row_ptr[r + 1]];
                    row_ptr[r] + row.binary_search(&c).expect("pattern contains element couplings")
                })
            })
            .collect();
        Self { n, row_ptr, col_idx, scatter }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Sums element matrices into a global matrix. Rows and columns of `fixed`
    /// edges are replaced by the identity.
    pub fn assemble(&self, mesh: &Mesh, locals: &[LocalMatrix], fixed: &[bool]) -> SparseMatrix {
        debug_assert_eq!(locals.len(), mesh.num_triangles());
        let mut values = vec![0.0; self.col_idx.len()];
        for (t, local) in locals.iter().enumerate() {
            let edges = mesh.triangle_edges(t);
            let pos = &self.scatter[t];
            for k in 0..3 {
                if fixed[edges[k]] {
                    continue;
                }
                for l in 0..3 {
                    if !fixed[edges[l]] {
                        values[pos[3 * k + l]] += local[k][l];
                    }
                }
            }
        }
        for (r, _) in fixed.iter().enumerate().filter(|(_, f)| **f) {
            let row = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
            let k = row.binary_search(&r).expect("diagonal present");
            values[self.row_ptr[r] + k] = 1.0;
        }
        SparseMatrix::from_csr(self.n, self.n, self.row_ptr.clone(), self.col_idx.clone(), values)
    }
}

fn check_sizes(mesh: &Mesh, p: &Rt0Field, alpha: &QuadField) {
    assert_eq!(p.dofs.len(), mesh.num_edges(), "RT0 field size");
    assert_eq!(alpha.len(), mesh.num_triangles(), "quadrature field size");
}

fn local_huber_residual(local: &LocalRt0, dofs: &[f64], alpha: &[f64; NQ], tau: f64) -> [f64; 3] {
    let pts = DEGREE4.physical_points(&local.vertices);
    let mut r = [0.0; 3];
    for q in 0..NQ {
        if alpha[q] == 0.0 {
            continue;
        }
        let psi = local.basis_at(&pts[q]);
        let p = psi[0] * dofs[local.edges[0]] + psi[1] * dofs[local.edges[1]] + psi[2] * dofs[local.edges[2]];
        let g = huber::dphi(&p, tau) * (DEGREE4.weights[q] * local.area * alpha[q]);
        for k in 0..3 {
            r[k] += g.dot(&psi[k]);
        }
    }
    r
}

fn local_huber_jacobian(local: &LocalRt0, dofs: &[f64], alpha: &[f64; NQ], tau: f64) -> LocalMatrix {
    let pts = DEGREE4.physical_points(&local.vertices);
    let mut m = [[0.0; 3]; 3];
    for q in 0..NQ {
        if alpha[q] == 0.0 {
            continue;
        }
        let psi = local.basis_at(&pts[q]);
        let p = psi[0] * dofs[local.edges[0]] + psi[1] * dofs[local.edges[1]] + psi[2] * dofs[local.edges[2]];
        let h = huber::d2phi(&p, tau) * (DEGREE4.weights[q] * local.area * alpha[q]);
        for k in 0..3 {
            let hk = h * psi[k];
            for l in 0..3 {
                m[k][l] += hk.dot(&psi[l]);
            }
        }
    }
    m
}

fn scatter_vector(mesh: &Mesh, locals: &[[f64; 3]], fixed: &[bool]) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_edges()];
    for (t, r) in locals.iter().enumerate() {
        for (k, &e) in mesh.triangle_edges(t).iter().enumerate() {
            out[e] += r[k];
        }
    }
    for (o, &f) in out.iter_mut().zip(fixed) {
        if f {
            *o = 0.0;
        }
    }
    out
}

/// `H_e = Σ_T ∫_T α φ'_τ(p_h)·ψ_e`, with entries of `fixed` edges set to zero.
pub fn assemble_huber_residual(
    mesh: &Mesh,
    p: &Rt0Field,
    alpha: &QuadField,
    tau: f64,
    fixed: &[bool],
    exec: Exec,
) -> Vec<f64> {
    check_sizes(mesh, p, alpha);
    let locals = exec.map(mesh.num_triangles(), |t| {
        local_huber_residual(&LocalRt0::new(mesh, t), &p.dofs, alpha.element(t), tau)
    });
    scatter_vector(mesh, &locals, fixed)
}

/// Element matrices `∫_T α ψ_kᵀ φ''_τ(p_h) ψ_l`.
pub fn huber_jacobian_locals(mesh: &Mesh, p: &Rt0Field, alpha: &QuadField, tau: f64, exec: Exec) -> Vec<LocalMatrix> {
    check_sizes(mesh, p, alpha);
    exec.map(mesh.num_triangles(), |t| {
        local_huber_jacobian(&LocalRt0::new(mesh, t), &p.dofs, alpha.element(t), tau)
    })
}

/// `G_{e,e'} = Σ_T ∫_T α ψ_eᵀ φ''_τ(p_h) ψ_{e'}`; fixed edges get identity rows.
pub fn assemble_huber_jacobian(
    mesh: &Mesh,
    pattern: &EdgePattern,
    p: &Rt0Field,
    alpha: &QuadField,
    tau: f64,
    fixed: &[bool],
    exec: Exec,
) -> SparseMatrix {
    pattern.assemble(mesh, &huber_jacobian_locals(mesh, p, alpha, tau, exec), fixed)
}

/// `Σ_T ∫_T α φ_τ(p_h)`.
pub fn huber_energy(mesh: &Mesh, p: &Rt0Field, alpha: &QuadField, tau: f64, exec: Exec) -> f64 {
    weighted_integral(mesh, p, alpha, exec, |v| huber::phi(v, tau))
}

/// `Σ_T ∫_T α |p_h|₂`.
pub fn weighted_norm_integral(mesh: &Mesh, p: &Rt0Field, alpha: &QuadField, exec: Exec) -> f64 {
    weighted_integral(mesh, p, alpha, exec, |v| v.norm())
}

fn weighted_integral<F>(mesh: &Mesh, p: &Rt0Field, alpha: &QuadField, exec: Exec, g: F) -> f64
where
    F: Fn(&Vector2<f64>) -> f64 + Sync + Send,
{
    check_sizes(mesh, p, alpha);
    exec.map(mesh.num_triangles(), |t| {
        let local = LocalRt0::new(mesh, t);
        let pts = DEGREE4.physical_points(&local.vertices);
        let a = alpha.element(t);
        let vals: [f64; NQ] = std::array::from_fn(|q| a[q] * g(&local.eval(&p.dofs, &pts[q])));
        DEGREE4.integrate(local.area, &vals)
    })
    .into_iter()
    .sum()
}

/// RT0 mass matrix `∫ ψ_e · ψ_e'`.
pub fn assemble_rt0_mass(mesh: &Mesh, pattern: &EdgePattern, fixed: &[bool]) -> SparseMatrix {
    let locals: Vec<LocalMatrix> = (0..mesh.num_triangles())
        .map(|t| {
            let local = LocalRt0::new(mesh, t);
            let pts = DEGREE4.physical_points(&local.vertices);
            let mut m = [[0.0; 3]; 3];
            for q in 0..NQ {
                let psi = local.basis_at(&pts[q]);
                for k in 0..3 {
                    for l in 0..3 {
                        m[k][l] += DEGREE4.weights[q] * local.area * psi[k].dot(&psi[l]);
                    }
                }
            }
            m
        })
        .collect();
    pattern.assemble(mesh, &locals, fixed)
}

pub fn l2_error_p0<F>(mesh: &Mesh, u: &P0Field, exact: F) -> f64
where
    F: Fn(&Point) -> f64,
{
    assert_eq!(u.values.len(), mesh.num_triangles(), "P0 field size");
    (0..mesh.num_triangles())
        .map(|t| {
            let pts = DEGREE4.physical_points(&mesh.triangle_vertices(t));
            let vals = pts.map(|x| (exact(&x) - u.values[t]).powi(2));
            DEGREE4.integrate(mesh.area(t), &vals)
        })
        .sum::<f64>()
        .sqrt()
}

pub fn l2_error_rt0<F>(mesh: &Mesh, p: &Rt0Field, exact: F) -> f64
where
    F: Fn(&Point) -> Vector2<f64>,
{
    assert_eq!(p.dofs.len(), mesh.num_edges(), "RT0 field size");
    (0..mesh.num_triangles())
        .map(|t| {
            let local = LocalRt0::new(mesh, t);
            let pts = DEGREE4.physical_points(&local.vertices);
            let vals = pts.map(|x| (exact(&x) - local.eval(&p.dofs, &x)).norm_squared());
            DEGREE4.integrate(local.area, &vals)
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::interpolate_rt0;
    use crate::linalg::{dot, norm2};
    use crate::mesh::{build_rect_mesh, BoundaryPartition, Rect, Side};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> Mesh {
        build_rect_mesh(Rect::UNIT, n, n).unwrap()
    }

    fn free(mesh: &Mesh) -> Vec<bool> {
        vec![false; mesh.num_edges()]
    }

    fn random_field(mesh: &Mesh, rng: &mut ChaCha8Rng, scale: f64) -> Rt0Field {
        Rt0Field { dofs: (0..mesh.num_edges()).map(|_| rng.gen_range(-scale..scale)).collect() }
    }

    #[test]
    fn div_and_mass_on_single_cell() {
        let mesh = unit(1);
        let b = assemble_div(&mesh);
        assert_eq!((b.nrows(), b.ncols()), (2, 5));
        for t in 0..2 {
            let row: Vec<_> = b.row(t).collect();
            assert_eq!(row.len(), 3);
            assert!(row.iter().all(|&(_, v)| v.abs() == 1.0));
        }
        assert_eq!(assemble_mass_p0(&mesh).diag, vec![0.5, 0.5]);
    }

    #[test]
    fn interior_columns_cancel() {
        let mesh = unit(4);
        let bt = assemble_div(&mesh).transpose();
        for e in 0..mesh.num_edges() {
            let col: Vec<f64> = bt.row(e).map(|(_, v)| v).collect();
            if col.len() == 2 {
                assert_eq!(col[0] + col[1], 0.0);
            } else {
                assert_eq!(col.len(), 1);
            }
        }
    }

    #[test]
    fn commuting_identity_for_polynomial_fields() {
        // (B Π v)_T = ∫_∂T v·n, and for these fields ∫_T div v is exact with the degree-4 rule
        let mesh = build_rect_mesh(Rect::new(0.0, -1.0, 2.0, 1.0).unwrap(), 6, 5).unwrap();
        let fields: [(fn(&Point) -> Vector2<f64>, fn(&Point) -> f64); 3] = [
            (|p| Vector2::new(p.x * p.x * p.y, p.y.powi(3) - p.x), |p| 2.0 * p.x * p.y + 3.0 * p.y * p.y),
            (|p| Vector2::new(p.y.powi(2), p.x.powi(2)), |_| 0.0),
            (|p| Vector2::new(p.x.powi(4), p.x * p.y), |p| 4.0 * p.x.powi(3) + p.x),
        ];
        let b = assemble_div(&mesh);
        for (v, div) in fields {
            let interp = interpolate_rt0(&mesh, v);
            let bp = b.spmv(&interp.dofs).unwrap();
            let exact = QuadField::sample(&mesh, Exec::Sequential, div);
            let load = assemble_load(&mesh, &exact);
            for t in 0..mesh.num_triangles() {
                assert!((bp[t] - load[t]).abs() < 1e-12, "t={t}: {} vs {}", bp[t], load[t]);
            }
        }
    }

    #[test]
    fn load_examples() {
        let mesh = unit(2);
        let ones = assemble_load(&mesh, &QuadField::constant(&mesh, 1.0));
        assert!(ones.iter().zip(mesh.areas()).all(|(a, b)| (a - b).abs() < 1e-16));
        assert!(assemble_load(&mesh, &QuadField::constant(&mesh, 0.0)).iter().all(|&v| v == 0.0));
        let step = QuadField::sample(&mesh, Exec::Sequential, |p| if p.y >= 0.5 { 0.25 } else { 0.0 });
        for (t, v) in assemble_load(&mesh, &step).iter().enumerate() {
            let expected = if mesh.centroid(t).y > 0.5 { 0.03125 } else { 0.0 };
            assert!((v - expected).abs() < 1e-16);
        }
    }

    #[test]
    fn huber_residual_examples() {
        let mesh = unit(4);
        let fixed = free(&mesh);
        let alpha = QuadField::constant(&mesh, 1.0);
        let zero = Rt0Field::zeros(&mesh);
        assert!(assemble_huber_residual(&mesh, &zero, &alpha, 0.1, &fixed, Exec::Sequential).iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_field(&mesh, &mut rng, 0.3);
        let none = QuadField::constant(&mesh, 0.0);
        assert!(assemble_huber_residual(&mesh, &p, &none, 0.1, &fixed, Exec::Sequential).iter().all(|&v| v == 0.0));

        let one = assemble_huber_residual(&mesh, &p, &alpha, 0.1, &fixed, Exec::Sequential);
        let two = assemble_huber_residual(&mesh, &p, &alpha.scaled(2.0), 0.1, &fixed, Exec::Sequential);
        for (a, b) in one.iter().zip(&two) {
            assert!((2.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn residual_zeroes_fixed_rows() {
        let mesh = unit(3);
        let (_, neumann) = mesh.classify_boundary(&BoundaryPartition { neumann_sides: vec![Side::Left, Side::Top] });
        let mut fixed = free(&mesh);
        neumann.iter().for_each(|&e| fixed[e] = true);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_field(&mesh, &mut rng, 1.0);
        let r = assemble_huber_residual(&mesh, &p, &QuadField::constant(&mesh, 1.0), 0.5, &fixed, Exec::Sequential);
        for e in neumann {
            assert_eq!(r[e], 0.0);
        }
    }

    #[test]
    fn quadratic_branch_jacobian_is_scaled_mass() {
        let mesh = unit(3);
        let pattern = EdgePattern::new(&mesh);
        let fixed = free(&mesh);
        let g = assemble_huber_jacobian(
            &mesh,
            &pattern,
            &Rt0Field::zeros(&mesh),
            &QuadField::constant(&mesh, 1.0),
            1.0,
            &fixed,
            Exec::Sequential,
        );
        let m = assemble_rt0_mass(&mesh, &pattern, &fixed);
        for (a, b) in g.values().iter().zip(m.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobian_is_symmetric_and_psd() {
        let mesh = unit(5);
        let pattern = EdgePattern::new(&mesh);
        let fixed = free(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let alpha = QuadField::sample(&mesh, Exec::Sequential, |p| 0.5 + p.x);
        for _ in 0..10 {
            let p = random_field(&mesh, &mut rng, 0.2);
            let g = assemble_huber_jacobian(&mesh, &pattern, &p, &alpha, 0.05, &fixed, Exec::Sequential);
            assert!(g.is_symmetric(1e-13));
            for _ in 0..10 {
                let x: Vec<f64> = (0..mesh.num_edges()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let gx = g.spmv(&x).unwrap();
                assert!(dot(&x, &gx) >= -1e-12 * dot(&x, &x));
            }
        }
    }

    #[test]
    fn jacobian_matches_directional_differences() {
        let mesh = unit(4);
        let pattern = EdgePattern::new(&mesh);
        let fixed = free(&mesh);
        let alpha = QuadField::sample(&mesh, Exec::Sequential, |p| 1.0 + p.y);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        // large tau keeps every quadrature point on the quadratic branch; small tau on the linear one
        for (tau, scale) in [(50.0, 0.5), (1e-4, 0.5)] {
            let p = random_field(&mesh, &mut rng, scale);
            let d = random_field(&mesh, &mut rng, 1.0);
            let g = assemble_huber_jacobian(&mesh, &pattern, &p, &alpha, tau, &fixed, Exec::Sequential);
            let r0 = assemble_huber_residual(&mesh, &p, &alpha, tau, &fixed, Exec::Sequential);
            let gd = g.spmv(&d.dofs).unwrap();
            let mut errors = Vec::new();
            for eps in [1e-3, 5e-4] {
                let shifted = Rt0Field { dofs: p.dofs.iter().zip(&d.dofs).map(|(a, b)| a + eps * b).collect() };
                let r1 = assemble_huber_residual(&mesh, &shifted, &alpha, tau, &fixed, Exec::Sequential);
                let diff: Vec<f64> = (0..r0.len()).map(|i| r1[i] - r0[i] - eps * gd[i]).collect();
                errors.push(norm2(&diff));
            }
            // O(ε²): halving ε divides the remainder by about four
            let ratio = errors[0] / errors[1];
            assert!(errors[1] < 1e-4 * norm2(&gd).max(1.0) || (3.0..5.0).contains(&ratio), "tau={tau} errors={errors:?}");
        }
    }

    #[test]
    fn fixed_rows_become_identity() {
        let mesh = unit(2);
        let pattern = EdgePattern::new(&mesh);
        let (_, neumann) = mesh.classify_boundary(&BoundaryPartition::all_neumann());
        let mut fixed = free(&mesh);
        neumann.iter().for_each(|&e| fixed[e] = true);
        let m = assemble_rt0_mass(&mesh, &pattern, &fixed);
        for &e in &neumann {
            let row: Vec<_> = m.row(e).filter(|&(_, v)| v != 0.0).collect();
            assert_eq!(row, vec![(e, 1.0)]);
        }
        assert!(m.is_symmetric(0.0));
    }

    #[test]
    fn exec_modes_agree_bitwise() {
        let mesh = unit(16);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_field(&mesh, &mut rng, 0.1);
        let alpha = QuadField::constant(&mesh, 1.0);
        let fixed = free(&mesh);
        let a = assemble_huber_residual(&mesh, &p, &alpha, 0.05, &fixed, Exec::Sequential);
        let b = assemble_huber_residual(&mesh, &p, &alpha, 0.05, &fixed, Exec::Parallel);
        assert_eq!(a, b);
        assert_eq!(
            huber_energy(&mesh, &p, &alpha, 0.05, Exec::Sequential),
            huber_energy(&mesh, &p, &alpha, 0.05, Exec::Parallel)
        );
    }

    #[test]
    fn l2_error_examples() {
        let mesh = unit(4);
        let u = P0Field { values: (0..mesh.num_triangles()).map(|t| t as f64 * 0.1).collect() };
        let self_err = l2_error_p0(&mesh, &u, |x| u.values[mesh.locate(x).unwrap()]);
        assert!(self_err <= 1e-14);
        assert!((l2_error_p0(&mesh, &P0Field::zeros(&mesh), |_| 1.0) - 1.0).abs() < 1e-14);

        let p = interpolate_rt0(&mesh, |x| Vector2::new(x.x + 1.0, x.y - 2.0));
        assert!(l2_error_rt0(&mesh, &p, |x| Vector2::new(x.x + 1.0, x.y - 2.0)) < 1e-14);
    }

    #[test]
    fn p0_projection_error_is_first_order() {
        // oracle: for u = x on a triangle, ‖u − ū‖²_T = ∫_T (x − x_c)² in closed form
        // via the exact second moment (|T|/12)·Σ_i (x_i − x_c)²
        for n in [4usize, 8, 16, 32] {
            let mesh = unit(n);
            let mut exact_sq = 0.0;
            let u = P0Field {
                values: (0..mesh.num_triangles())
                    .map(|t| {
                        let c = mesh.centroid(t);
                        let pts = mesh.triangle_vertices(t);
                        exact_sq += mesh.area(t) / 12.0 * pts.iter().map(|p| (p.x - c.x).powi(2)).sum::<f64>();
                        c.x
                    })
                    .collect(),
            };
            let err = l2_error_p0(&mesh, &u, |x| x.x);
            assert!((err - exact_sq.sqrt()).abs() < 1e-14);
            // per-triangle second moment is h²/36·(something constant): err·n is constant
            assert!((err * n as f64 - (1.0f64 / 18.0).sqrt()).abs() < 1e-12, "n={n} err={err}");
        }
    }
}
