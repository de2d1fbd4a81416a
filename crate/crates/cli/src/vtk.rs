//! Legacy ASCII VTK output of cellwise fields.

use std::fmt::Write as _;

use msmfe_core::quadrature::reference_vertices;
use msmfe_core::spaces::{eval_rotation, eval_stress, eval_velocity, physical_bdm1};
use msmfe_core::{CellType, FeSpaces, FieldState, Mesh, Result, Tensor, Vec2};

/// Per-cell values written to a snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFields {
    pub p: Vec<f64>,
    pub u: Vec<Vec2>,
    pub gamma: Vec<f64>,
    pub z: Vec<Vec2>,
    pub sigma: Vec<Tensor>,
}

/// Samples γ, z and σ at the vertices of each cell and averages them.
pub fn cell_fields(mesh: &Mesh, spaces: &FeSpaces, state: &FieldState) -> Result<CellFields> {
    let n = mesh.n_cells();
    let mut out = CellFields {
        p: state.p.clone(),
        u: (0..n).map(|c| Vec2::new(state.u[2 * c], state.u[2 * c + 1])).collect(),
        gamma: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        sigma: Vec::with_capacity(n),
    };
    let verts = reference_vertices(mesh.cell_type);
    let w = 1.0 / verts.len() as f64;
    for c in 0..n {
        let map = mesh.element_map(c)?;
        let (mut g, mut z, mut s) = (0.0, Vec2::zeros(), Tensor::zeros());
        for &xh in verts {
            let basis = physical_bdm1(&map, xh);
            g += eval_rotation(mesh.cell_type, &spaces.rotation.cell_dofs[c], xh, &state.gamma);
            z += eval_velocity(&spaces.velocity.cell_dofs[c], &basis, &state.z).0;
            s += eval_stress(&spaces.stress.cell_dofs[c], &basis, &state.sigma).0;
        }
        out.gamma.push(g * w);
        out.z.push(z * w);
        out.sigma.push(s * w);
    }
    Ok(out)
}

fn vtk_cell_type(cell: CellType) -> u8 {
    match cell {
        CellType::Triangle => 5,
        CellType::Quadrilateral => 9,
    }
}

/// Renders an unstructured-grid file with cell data `p`, `u`, `gamma`, `z`
/// and `sigma`.
pub fn render(mesh: &Mesh, fields: &CellFields, title: &str) -> String {
    let mut s = String::new();
    let n = mesh.n_cells();
    let _ = writeln!(
        s,
        "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID"
    );
    let _ = writeln!(s, "POINTS {} double", mesh.n_nodes());
    for x in &mesh.nodes {
        let _ = writeln!(s, "{:e} {:e} 0", x.x, x.y);
    }
    let size: usize = mesh.cells.iter().map(|c| c.len() + 1).sum();
    let _ = writeln!(s, "CELLS {n} {size}");
    for cell in &mesh.cells {
        let ids: Vec<String> = cell.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{} {}", cell.len(), ids.join(" "));
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    for _ in 0..n {
        let _ = writeln!(s, "{}", vtk_cell_type(mesh.cell_type));
    }
    let _ = writeln!(s, "CELL_DATA {n}");
    for (name, vals) in [("p", &fields.p), ("gamma", &fields.gamma)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in vals {
            let _ = writeln!(s, "{v:e}");
        }
    }
    for (name, vals) in [("u", &fields.u), ("z", &fields.z)] {
        let _ = writeln!(s, "VECTORS {name} double");
        for v in vals {
            let _ = writeln!(s, "{:e} {:e} 0", v.x, v.y);
        }
    }
    let _ = writeln!(s, "TENSORS sigma double");
    for t in &fields.sigma {
        let _ = writeln!(
            s,
            "{:e} {:e} 0\n{:e} {:e} 0\n0 0 0",
            t[(0, 0)],
            t[(0, 1)],
            t[(1, 0)],
            t[(1, 1)]
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use msmfe_core::mesh::build_rectangle_mesh;
    use msmfe_core::verify::{interpolate, ExactSolution, ExactValues};
    use msmfe_core::Rect;

    struct Affine;

    impl ExactSolution for Affine {
        fn eval(&self, x: Vec2, _t: f64) -> ExactValues {
            let sigma = Tensor::new(1.0 + x.x, 2.0, 3.0 - x.y, 4.0);
            ExactValues {
                p: 0.5,
                u: Vec2::new(1.0, -1.0),
                sigma,
                div_sigma: Vec2::new(1.0, -1.0),
                rotation: 2.0 * x.x - x.y,
                z: Vec2::new(x.x, 2.0),
                div_z: 1.0,
                f: Vec2::zeros(),
                q: 0.0,
            }
        }
    }

    #[test]
    fn averages_reproduce_linear_fields_at_centroids() {
        for cell in [CellType::Triangle, CellType::Quadrilateral] {
            let mesh = build_rectangle_mesh(Rect::UNIT, 3, 2, cell).unwrap();
            let spaces = FeSpaces::new(&mesh);
            let state = interpolate(&Affine, &mesh, &spaces, 0.0).unwrap();
            let f = cell_fields(&mesh, &spaces, &state).unwrap();
            for c in 0..mesh.n_cells() {
                // vertex averages of affine fields equal the vertex-mean point value
                let xm = mesh.cell_vertices(c).iter().sum::<Vec2>() / mesh.cells[c].len() as f64;
                let ex = Affine.eval(xm, 0.0);
                assert!((f.gamma[c] - ex.rotation).abs() < 1e-12);
                assert!((f.z[c] - ex.z).norm() < 1e-12);
                assert!((f.sigma[c] - ex.sigma).norm() < 1e-12);
                assert_eq!(f.p[c], 0.5);
            }
        }
    }

    #[test]
    fn render_has_consistent_section_sizes() {
        let mesh = build_rectangle_mesh(Rect::UNIT, 2, 1, CellType::Triangle).unwrap();
        let spaces = FeSpaces::new(&mesh);
        let state = FieldState::zeros(&spaces, 0.0);
        let text = render(&mesh, &cell_fields(&mesh, &spaces, &state).unwrap(), "t");
        assert!(text.contains("POINTS 6 double"));
        assert!(text.contains("CELLS 4 16"));
        assert!(text.contains("CELL_DATA 4"));
        assert_eq!(text.lines().filter(|l| *l == "5").count(), 4);
    }
}
