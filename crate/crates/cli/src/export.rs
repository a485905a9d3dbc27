//! File writers: legacy ASCII VTK for fields, CSV for convergence tables and
//! JSON for run summaries. All output is a pure function of its inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use predual::fem::{P0Field, Rt0Field};
use predual::mesh::Mesh;
use predual::problems::StudyTable;
use predual::solver::centroid_flux;
use serde::{Deserialize, Serialize};

use crate::CliError;

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Legacy VTK unstructured grid with per-cell `u`, `grad_u_mag` and the flux `p` at centroids.
pub fn vtk_string(mesh: &Mesh, u: &P0Field, grad_u_mag: &[f64], p: &Rt0Field) -> String {
    let nt = mesh.num_triangles();
    assert_eq!(u.values.len(), nt);
    assert_eq!(grad_u_mag.len(), nt);
    let flux = centroid_flux(p, mesh);
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("predual solution\n");
    s.push_str("ASCII\n");
    s.push_str("DATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {} double", mesh.num_vertices());
    for v in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", v.x, v.y);
    }
    let _ = writeln!(s, "CELLS {} {}", nt, 4 * nt);
    for tri in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", tri[0], tri[1], tri[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "CELL_DATA {nt}");
    for (name, values) in [("u", &u.values[..]), ("grad_u_mag", grad_u_mag)] {
        let _ = writeln!(s, "SCALARS {name} double 1");
        s.push_str("LOOKUP_TABLE default\n");
        for v in values {
            let _ = writeln!(s, "{v}");
        }
    }
    s.push_str("VECTORS p double\n");
    for v in &flux {
        let _ = writeln!(s, "{} {} 0", v.x, v.y);
    }
    s
}

pub fn export_vtk(mesh: &Mesh, u: &P0Field, grad_u_mag: &[f64], p: &Rt0Field, path: &Path) -> Result<(), CliError> {
    write_file(path, &vtk_string(mesh, u, grad_u_mag, p))
}

/// Header plus one row per mesh with the observed rate against the previous
/// row, and a final `fit` row with the least-squares rates.
pub fn study_csv_string(table: &StudyTable) -> String {
    let mut s = String::from("h,err_u,err_p,rate_u,rate_p\n");
    if table.rows.is_empty() {
        return s;
    }
    for (i, r) in table.rows.iter().enumerate() {
        let (ru, rp) = match i.checked_sub(1).map(|j| &table.rows[j]) {
            Some(prev) => {
                let lh = (r.h / prev.h).ln();
                (format!("{}", (r.error_u / prev.error_u).ln() / lh), format!("{}", (r.error_p / prev.error_p).ln() / lh))
            }
            None => (String::new(), String::new()),
        };
        let _ = writeln!(s, "{},{},{},{},{}", r.h, r.error_u, r.error_p, ru, rp);
    }
    let _ = writeln!(s, "fit,,,{},{}", table.rate_u, table.rate_p);
    s
}

pub fn export_study_csv(table: &StudyTable, path: &Path) -> Result<(), CliError> {
    write_file(path, &study_csv_string(table))
}

pub fn export_summary_json<T: Serialize>(summary: &T, path: &Path) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(summary).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_file(path, &text)
}

/// Wall-clock timings, kept apart from the summary so the summary stays reproducible.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Timing {
    pub wall_seconds: f64,
}
