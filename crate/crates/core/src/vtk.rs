//! Legacy ASCII VTK output of a solution.

use std::io::{self, Write};
use std::path::Path;

use crate::cases::Permeability;
use crate::mesh::{centroid, Mesh, Region};
use crate::solve::SolutionFields;

/// Writes an unstructured grid with vertex velocity (cell values averaged
/// over adjacent cells, for display), and per-cell region tag (0 Stokes,
/// 1 Darcy), mean pressure and permeability at the centroid (0 on Stokes
/// cells).
pub fn write_vtk<W: Write>(mut w: W, mesh: &Mesh, fields: &SolutionFields, kappa: &Permeability) -> io::Result<()> {
    let nv = mesh.vertices().len();
    let nc = mesh.num_cells();
    let mut vel = vec![[0.0; 2]; nv];
    let mut count = vec![0usize; nv];
    for c in 0..nc {
        for &v in &mesh.cells()[c].vertices {
            let u = fields.velocity_at(mesh, c, mesh.vertices()[v]);
            vel[v][0] += u[0];
            vel[v][1] += u[1];
            count[v] += 1;
        }
    }

    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "stokes-darcy solution")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {nv} double")?;
    for p in mesh.vertices() {
        writeln!(w, "{:.12e} {:.12e} 0", p[0], p[1])?;
    }
    writeln!(w, "CELLS {nc} {}", 4 * nc)?;
    for c in mesh.cells() {
        writeln!(w, "3 {} {} {}", c.vertices[0], c.vertices[1], c.vertices[2])?;
    }
    writeln!(w, "CELL_TYPES {nc}")?;
    for _ in 0..nc {
        writeln!(w, "5")?;
    }
    writeln!(w, "POINT_DATA {nv}")?;
    writeln!(w, "VECTORS velocity double")?;
    for (u, &n) in vel.iter().zip(&count) {
        let n = n.max(1) as f64;
        writeln!(w, "{:.12e} {:.12e} 0", u[0] / n, u[1] / n)?;
    }
    writeln!(w, "CELL_DATA {nc}")?;
    writeln!(w, "SCALARS region int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for c in mesh.cells() {
        writeln!(w, "{}", (c.region == Region::Darcy) as u8)?;
    }
    writeln!(w, "SCALARS pressure double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for c in 0..nc {
        writeln!(w, "{:.12e}", fields.cell_mean_pressure(c))?;
    }
    writeln!(w, "SCALARS kappa double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for c in 0..nc {
        let k = match mesh.cells()[c].region {
            Region::Darcy => kappa.at(centroid(mesh.cell_points(c))),
            Region::Stokes => 0.0,
        };
        writeln!(w, "{k:.12e}")?;
    }
    Ok(())
}

pub fn write_vtk_file(path: impl AsRef<Path>, mesh: &Mesh, fields: &SolutionFields, kappa: &Permeability) -> io::Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = io::BufWriter::new(f);
    write_vtk(&mut w, mesh, fields, kappa)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::CaseDefinition;
    use crate::mesh::generate_mesh;
    use crate::spaces::build_layout;
    use crate::verify::{interpolate, PatchSolution};

    #[test]
    fn sections_and_counts() {
        let mesh = generate_mesh(2).unwrap();
        let exact = PatchSolution { mu: 1.0, kappa: 1.0 };
        let case: CaseDefinition = exact.case_definition(-1.0);
        let layout = build_layout(&mesh, 1, &case).unwrap();
        let fields = SolutionFields::unchecked(interpolate(&mesh, &layout, &exact).unwrap(), &layout).unwrap();
        let mut buf = Vec::new();
        write_vtk(&mut buf, &mesh, &fields, &Permeability::Constant(5.0)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0\n"));
        assert!(text.contains("POINTS 9 double"));
        assert!(text.contains("CELLS 8 32"));
        assert!(text.contains("CELL_DATA 8"));
        let after = text.split("VECTORS velocity double\n").nth(1).unwrap();
        assert!(after.lines().next().unwrap().starts_with("0.000000000000e0 1.000000000000e0"));
    }
}
