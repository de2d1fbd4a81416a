//! Discrete spaces, reference bases and degree-of-freedom numbering.
//!
//! | space        | element              | global dof                     |
//! |--------------|----------------------|--------------------------------|
//! | stress       | BDM1, row-wise       | `4·edge + 2·endpoint + row`     |
//! | displacement | P0/Q0 vector         | `2·cell + component`           |
//! | rotation     | continuous P1/Q1     | vertex id                      |
//! | velocity     | BDM1                 | `2·edge + endpoint`            |
//! | pressure     | P0/Q0                | cell id                        |
//!
//! BDM1 degrees of freedom are physical normal components (along the global
//! edge normal) at the two edge endpoints; `endpoint` indexes the edge's
//! sorted vertex pair. The rotation is the scalar `r` of `γ = [[0, r], [−r, 0]]`.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SMatrix};

use crate::mesh::{CellType, ElementMap, Mesh};
use crate::quadrature::{gauss_legendre_unit, reference_vertices};
use crate::{Tensor, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    StressBdm1,
    VelocityBdm1,
    DisplacementP0,
    PressureP0,
    RotationP1,
}

impl SpaceKind {
    pub fn name(self) -> &'static str {
        match self {
            SpaceKind::StressBdm1 => "stress",
            SpaceKind::VelocityBdm1 => "velocity",
            SpaceKind::DisplacementP0 => "displacement",
            SpaceKind::PressureP0 => "pressure",
            SpaceKind::RotationP1 => "rotation",
        }
    }
}

/// One local shape function of a cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalDof {
    pub global: usize,
    /// Reference basis index: `2k + a` for BDM1 (local edge k, local endpoint a),
    /// the local vertex for rotation, the component for displacement.
    pub basis: usize,
    /// Tensor row for stress, vector component for displacement, otherwise 0.
    pub row: usize,
    /// `sign · |e| / |ê|` for BDM1 (sign of the global normal relative to the
    /// cell's outward normal), 1 otherwise.
    pub scale: f64,
    /// Mesh vertex the dof is attached to (BDM1 and rotation), else `usize::MAX`.
    pub vertex: usize,
    /// Mesh edge of a BDM1 dof, else `usize::MAX`.
    pub edge: usize,
}

#[derive(Clone, Debug)]
pub struct DofMap {
    pub kind: SpaceKind,
    pub n_dofs: usize,
    pub cell_dofs: Vec<Vec<LocalDof>>,
    /// Dofs living at each mesh vertex (BDM1 and rotation); empty for P0 spaces.
    pub vertex_groups: Vec<Vec<usize>>,
}

/// Global dof of a velocity normal component.
pub fn velocity_dof(edge: usize, endpoint: usize) -> usize {
    2 * edge + endpoint
}

/// Global dof of a stress row normal component.
pub fn stress_dof(edge: usize, endpoint: usize, row: usize) -> usize {
    4 * edge + 2 * endpoint + row
}

pub fn build_dofmap(mesh: &Mesh, kind: SpaceKind) -> DofMap {
    let nv = mesh.cell_type.n_vertices();
    let mut cell_dofs = Vec::with_capacity(mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let mut local = Vec::new();
        match kind {
            SpaceKind::VelocityBdm1 | SpaceKind::StressBdm1 => {
                let rows = if kind == SpaceKind::StressBdm1 { 2 } else { 1 };
                for k in 0..nv {
                    let e = mesh.cell_edges[c][k];
                    let edge = &mesh.edges[e];
                    let scale = mesh.edge_sign(e, c) * edge.length / reference_edge_length(mesh.cell_type, k);
                    for j in 0..2 {
                        let v = edge.vertices[j];
                        let a = if mesh.cells[c][k] == v { 0 } else { 1 };
                        for row in 0..rows {
                            let global = if rows == 2 {
                                stress_dof(e, j, row)
                            } else {
                                velocity_dof(e, j)
                            };
                            local.push(LocalDof {
                                global,
                                basis: 2 * k + a,
                                row,
                                scale,
                                vertex: v,
                                edge: e,
                            });
                        }
                    }
                }
            }
            SpaceKind::DisplacementP0 => {
                for comp in 0..2 {
                    local.push(LocalDof {
                        global: 2 * c + comp,
                        basis: comp,
                        row: comp,
                        scale: 1.0,
                        vertex: usize::MAX,
                        edge: usize::MAX,
                    });
                }
            }
            SpaceKind::PressureP0 => local.push(LocalDof {
                global: c,
                basis: 0,
                row: 0,
                scale: 1.0,
                vertex: usize::MAX,
                edge: usize::MAX,
            }),
            SpaceKind::RotationP1 => {
                for (i, &v) in mesh.cells[c].iter().enumerate() {
                    local.push(LocalDof {
                        global: v,
                        basis: i,
                        row: 0,
                        scale: 1.0,
                        vertex: v,
                        edge: usize::MAX,
                    });
                }
            }
        }
        cell_dofs.push(local);
    }
    let n_dofs = match kind {
        SpaceKind::StressBdm1 => 4 * mesh.n_edges(),
        SpaceKind::VelocityBdm1 => 2 * mesh.n_edges(),
        SpaceKind::DisplacementP0 => 2 * mesh.n_cells(),
        SpaceKind::PressureP0 => mesh.n_cells(),
        SpaceKind::RotationP1 => mesh.n_nodes(),
    };
    let mut vertex_groups = vec![Vec::new(); mesh.n_nodes()];
    match kind {
        SpaceKind::VelocityBdm1 | SpaceKind::StressBdm1 => {
            for (v, group) in vertex_groups.iter_mut().enumerate() {
                for &e in &mesh.vertex_edges[v] {
                    let j = if mesh.edges[e].vertices[0] == v { 0 } else { 1 };
                    if kind == SpaceKind::StressBdm1 {
                        group.push(stress_dof(e, j, 0));
                        group.push(stress_dof(e, j, 1));
                    } else {
                        group.push(velocity_dof(e, j));
                    }
                }
            }
        }
        SpaceKind::RotationP1 => {
            for (v, group) in vertex_groups.iter_mut().enumerate() {
                group.push(v);
            }
        }
        _ => vertex_groups.clear(),
    }
    DofMap {
        kind,
        n_dofs,
        cell_dofs,
        vertex_groups,
    }
}

/// The five discrete spaces on one mesh.
#[derive(Clone, Debug)]
pub struct FeSpaces {
    pub stress: DofMap,
    pub displacement: DofMap,
    pub rotation: DofMap,
    pub velocity: DofMap,
    pub pressure: DofMap,
}

impl FeSpaces {
    pub fn new(mesh: &Mesh) -> Self {
        Self {
            stress: build_dofmap(mesh, SpaceKind::StressBdm1),
            displacement: build_dofmap(mesh, SpaceKind::DisplacementP0),
            rotation: build_dofmap(mesh, SpaceKind::RotationP1),
            velocity: build_dofmap(mesh, SpaceKind::VelocityBdm1),
            pressure: build_dofmap(mesh, SpaceKind::PressureP0),
        }
    }

    /// Sizes in the block order σ, u, γ, z, p.
    pub fn sizes(&self) -> [usize; 5] {
        [
            self.stress.n_dofs,
            self.displacement.n_dofs,
            self.rotation.n_dofs,
            self.velocity.n_dofs,
            self.pressure.n_dofs,
        ]
    }
}

/// Length of local reference edge `k`.
pub fn reference_edge_length(cell: CellType, k: usize) -> f64 {
    match (cell, k) {
        (CellType::Triangle, 1) => std::f64::consts::SQRT_2,
        _ => 1.0,
    }
}

/// Unit outward normal of local reference edge `k`.
pub fn reference_normal(cell: CellType, k: usize) -> Vec2 {
    let v = reference_vertices(cell);
    let d = v[(k + 1) % v.len()] - v[k];
    Vec2::new(d.y, -d.x) / d.norm()
}

const N_MONO: usize = 8;

/// Vector monomials spanning reference BDM1 (first 6 on the triangle).
fn monomial(i: usize, p: Vec2) -> Vec2 {
    let (x, y) = (p.x, p.y);
    match i {
        0 => Vec2::new(1.0, 0.0),
        1 => Vec2::new(x, 0.0),
        2 => Vec2::new(y, 0.0),
        3 => Vec2::new(0.0, 1.0),
        4 => Vec2::new(0.0, x),
        5 => Vec2::new(0.0, y),
        6 => Vec2::new(x * x, -2.0 * x * y),
        7 => Vec2::new(2.0 * x * y, -y * y),
        _ => unreachable!(),
    }
}

fn monomial_div(i: usize) -> f64 {
    match i {
        1 | 5 => 1.0,
        _ => 0.0,
    }
}

/// Reference BDM1 basis in monomial coefficients: column j holds basis j.
struct Bdm1Reference {
    n: usize,
    coeffs: SMatrix<f64, N_MONO, N_MONO>,
}

fn bdm1_reference(cell: CellType) -> &'static Bdm1Reference {
    static TRI: OnceLock<Bdm1Reference> = OnceLock::new();
    static QUAD: OnceLock<Bdm1Reference> = OnceLock::new();
    let build = |cell: CellType| {
        let nv = cell.n_vertices();
        let n = 2 * nv;
        let verts = reference_vertices(cell);
        let mut nodal = DMatrix::<f64>::zeros(n, n);
        for k in 0..nv {
            let nk = reference_normal(cell, k);
            for a in 0..2 {
                let x = verts[(k + a) % nv];
                for m in 0..n {
                    nodal[(2 * k + a, m)] = monomial(m, x).dot(&nk);
                }
            }
        }
        let inv = nodal.try_inverse().expect("BDM1 nodal matrix is invertible");
        let mut coeffs = SMatrix::<f64, N_MONO, N_MONO>::zeros();
        coeffs.view_mut((0, 0), (n, n)).copy_from(&inv);
        Bdm1Reference { n, coeffs }
    };
    match cell {
        CellType::Triangle => TRI.get_or_init(|| build(cell)),
        CellType::Quadrilateral => QUAD.get_or_init(|| build(cell)),
    }
}

/// Number of reference BDM1 functions (6 or 8).
pub fn bdm1_dim(cell: CellType) -> usize {
    2 * cell.n_vertices()
}

/// Reference BDM1 basis values and (constant) divergences at `xh`.
pub fn bdm1_reference_basis(cell: CellType, xh: Vec2) -> (Vec<Vec2>, Vec<f64>) {
    let r = bdm1_reference(cell);
    let mono: Vec<Vec2> = (0..r.n).map(|m| monomial(m, xh)).collect();
    let mut vals = vec![Vec2::zeros(); r.n];
    let mut divs = vec![0.0; r.n];
    for j in 0..r.n {
        for m in 0..r.n {
            let c = r.coeffs[(m, j)];
            vals[j] += mono[m] * c;
            divs[j] += monomial_div(m) * c;
        }
    }
    (vals, divs)
}

/// Reference rotation (P1/Q1) basis at `xh`, one value per local vertex.
pub fn rotation_reference_basis(cell: CellType, xh: Vec2) -> Vec<f64> {
    let (x, y) = (xh.x, xh.y);
    match cell {
        CellType::Triangle => vec![1.0 - x - y, x, y],
        CellType::Quadrilateral => vec![(1.0 - x) * (1.0 - y), x * (1.0 - y), x * y, (1.0 - x) * y],
    }
}

/// Gradient of the reference rotation basis at `xh`.
pub fn rotation_reference_gradient(cell: CellType, xh: Vec2) -> Vec<Vec2> {
    let (x, y) = (xh.x, xh.y);
    match cell {
        CellType::Triangle => vec![Vec2::new(-1.0, -1.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)],
        CellType::Quadrilateral => vec![
            Vec2::new(-(1.0 - y), -(1.0 - x)),
            Vec2::new(1.0 - y, -x),
            Vec2::new(y, x),
            Vec2::new(-y, 1.0 - x),
        ],
    }
}

/// Physical BDM1 basis (one vector per local reference function, unscaled by
/// the dof sign) at `xh`: values `(1/J) DF ψ̂` and divergences `div̂ ψ̂ / J`.
pub struct PhysicalBdm1 {
    pub values: Vec<Vec2>,
    pub divs: Vec<f64>,
    pub det: f64,
}

pub fn physical_bdm1(map: &ElementMap, xh: Vec2) -> PhysicalBdm1 {
    let (vals, divs) = bdm1_reference_basis(map.cell_type, xh);
    let df = map.jacobian(xh);
    let det = df.determinant();
    PhysicalBdm1 {
        values: vals.iter().map(|v| df * v / det).collect(),
        divs: divs.iter().map(|d| d / det).collect(),
        det,
    }
}

/// Velocity field `Σ c_i ψ_i` at `xh` in a cell, and its divergence.
pub fn eval_velocity(dofs: &[LocalDof], basis: &PhysicalBdm1, coeffs: &[f64]) -> (Vec2, f64) {
    let mut v = Vec2::zeros();
    let mut d = 0.0;
    for ld in dofs {
        let c = coeffs[ld.global] * ld.scale;
        v += basis.values[ld.basis] * c;
        d += basis.divs[ld.basis] * c;
    }
    (v, d)
}

/// Stress field at `xh` in a cell, and its row-wise divergence.
pub fn eval_stress(dofs: &[LocalDof], basis: &PhysicalBdm1, coeffs: &[f64]) -> (Tensor, Vec2) {
    let mut s = Tensor::zeros();
    let mut d = Vec2::zeros();
    for ld in dofs {
        let c = coeffs[ld.global] * ld.scale;
        let v = basis.values[ld.basis] * c;
        s[(ld.row, 0)] += v.x;
        s[(ld.row, 1)] += v.y;
        d[ld.row] += basis.divs[ld.basis] * c;
    }
    (s, d)
}

/// Scalar rotation at `xh` in a cell.
pub fn eval_rotation(cell_type: CellType, dofs: &[LocalDof], xh: Vec2, coeffs: &[f64]) -> f64 {
    let phi = rotation_reference_basis(cell_type, xh);
    dofs.iter().map(|ld| phi[ld.basis] * coeffs[ld.global]).sum()
}

/// Skew tensor `[[0, r], [−r, 0]]`.
pub fn skew(r: f64) -> Tensor {
    Tensor::new(0.0, r, -r, 0.0)
}

/// How boundary normal data is turned into dof values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Value at each endpoint.
    Pointwise,
    /// Edge mean (L² projection onto constants) at both endpoints.
    EdgeAverage,
}

impl BoundaryMode {
    /// Edge averages on quadrilaterals, endpoint values on triangles.
    pub fn for_cell(cell: CellType) -> Self {
        match cell {
            CellType::Quadrilateral => BoundaryMode::EdgeAverage,
            CellType::Triangle => BoundaryMode::Pointwise,
        }
    }
}

/// Mean of `g` over an edge, by 5-point Gauss–Legendre.
pub fn edge_mean(a: Vec2, b: Vec2, g: impl Fn(Vec2) -> f64) -> f64 {
    let (x, w) = gauss_legendre_unit(5);
    x.iter().zip(&w).map(|(&s, &w)| w * g(a + (b - a) * s)).sum()
}

/// Dof values (in the edge's sorted-endpoint order) for boundary normal data
/// `gn(x) = g(x)·n`.
pub fn interpolate_boundary_normal(mesh: &Mesh, edge: usize, gn: impl Fn(Vec2) -> f64, mode: BoundaryMode) -> [f64; 2] {
    let [a, b] = mesh.edges[edge].vertices;
    let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
    match mode {
        BoundaryMode::Pointwise => [gn(pa), gn(pb)],
        BoundaryMode::EdgeAverage => {
            let m = edge_mean(pa, pb, gn);
            [m, m]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rectangle_mesh, distort_example2, Rect};

    #[test]
    fn nodal_property_on_reference_cells() {
        for cell in [CellType::Triangle, CellType::Quadrilateral] {
            let nv = cell.n_vertices();
            let verts = reference_vertices(cell);
            for k in 0..nv {
                let n = reference_normal(cell, k);
                for a in 0..2 {
                    let (vals, _) = bdm1_reference_basis(cell, verts[(k + a) % nv]);
                    for (j, v) in vals.iter().enumerate() {
                        let expect = if j == 2 * k + a { 1.0 } else { 0.0 };
                        assert!((v.dot(&n) - expect).abs() < 1e-13, "{cell:?} node ({k},{a}) basis {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn divergence_matches_finite_differences() {
        for cell in [CellType::Triangle, CellType::Quadrilateral] {
            let p = Vec2::new(0.21, 0.33);
            let h = 1e-6;
            let (_, divs) = bdm1_reference_basis(cell, p);
            let f = |q: Vec2| bdm1_reference_basis(cell, q).0;
            let (xp, xm) = (f(p + Vec2::new(h, 0.0)), f(p - Vec2::new(h, 0.0)));
            let (yp, ym) = (f(p + Vec2::new(0.0, h)), f(p - Vec2::new(0.0, h)));
            for j in 0..divs.len() {
                let fd = (xp[j].x - xm[j].x + yp[j].y - ym[j].y) / (2.0 * h);
                assert!((fd - divs[j]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn constant_field_reproduced() {
        // (1,0) has normal data n̂ₓ at every node
        for cell in [CellType::Triangle, CellType::Quadrilateral] {
            let nv = cell.n_vertices();
            let p = Vec2::new(0.3, 0.2);
            let (vals, _) = bdm1_reference_basis(cell, p);
            let mut sum = Vec2::zeros();
            for k in 0..nv {
                let n = reference_normal(cell, k);
                sum += (vals[2 * k] + vals[2 * k + 1]) * n.x;
            }
            assert!((sum - Vec2::new(1.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn square_basis_gram_rank() {
        let rule = crate::quadrature::gauss_rule(CellType::Quadrilateral, 5).unwrap();
        let mut g = DMatrix::<f64>::zeros(8, 8);
        for (p, w) in rule.iter() {
            let (v, _) = bdm1_reference_basis(CellType::Quadrilateral, p);
            for i in 0..8 {
                for j in 0..8 {
                    g[(i, j)] += w * v[i].dot(&v[j]);
                }
            }
        }
        assert_eq!(g.rank(1e-10), 8);
    }

    #[test]
    fn dof_counts() {
        let m = build_rectangle_mesh(Rect::UNIT, 1, 1, CellType::Quadrilateral).unwrap();
        assert_eq!(build_dofmap(&m, SpaceKind::VelocityBdm1).n_dofs, 8);
        assert_eq!(build_dofmap(&m, SpaceKind::RotationP1).n_dofs, 4);
        let m = build_rectangle_mesh(Rect::UNIT, 2, 2, CellType::Quadrilateral).unwrap();
        let vel = build_dofmap(&m, SpaceKind::VelocityBdm1);
        let st = build_dofmap(&m, SpaceKind::StressBdm1);
        assert_eq!(vel.vertex_groups[4].len(), 4);
        assert_eq!(st.vertex_groups[4].len(), 8);
        let mut sizes: Vec<usize> = vel.vertex_groups.iter().map(Vec::len).collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3, 3, 3, 3, 4]);
        // every local dof appears once per adjacent cell
        let local: usize = vel.cell_dofs.iter().map(Vec::len).sum();
        let shared = 2 * m.edges.iter().filter(|e| !e.is_boundary()).count();
        assert_eq!(local - shared, vel.n_dofs);
    }

    #[test]
    fn normal_continuity_across_edges() {
        let m = distort_example2(&build_rectangle_mesh(Rect::UNIT, 3, 3, CellType::Quadrilateral).unwrap());
        let vel = build_dofmap(&m, SpaceKind::VelocityBdm1);
        let coeffs: Vec<f64> = (0..vel.n_dofs).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        for (e, edge) in m.edges.iter().enumerate().filter(|(_, e)| !e.is_boundary()) {
            for &v in &edge.vertices {
                let mut values = Vec::new();
                for &c in &edge.cells {
                    let map = m.element_map(c).unwrap();
                    let i = m.cells[c].iter().position(|&x| x == v).unwrap();
                    let xh = reference_vertices(m.cell_type)[i];
                    let basis = physical_bdm1(&map, xh);
                    let (z, _) = eval_velocity(&vel.cell_dofs[c], &basis, &coeffs);
                    values.push(z.dot(&edge.normal));
                }
                assert!((values[0] - values[1]).abs() < 1e-12, "edge {e}");
            }
        }
    }

    #[test]
    fn boundary_interpolation_modes() {
        let m = build_rectangle_mesh(Rect::UNIT, 1, 1, CellType::Quadrilateral).unwrap();
        let bottom = m.edges_with_tag("bottom").next().unwrap();
        let p = interpolate_boundary_normal(&m, bottom, |x| x.x, BoundaryMode::Pointwise);
        assert_eq!(p, [0.0, 1.0]);
        let a = interpolate_boundary_normal(&m, bottom, |x| x.x, BoundaryMode::EdgeAverage);
        assert!((a[0] - 0.5).abs() < 1e-15 && (a[1] - 0.5).abs() < 1e-15);
        let c = interpolate_boundary_normal(&m, bottom, |_| 3.0, BoundaryMode::EdgeAverage);
        assert!((c[0] - 3.0).abs() < 1e-14 && (c[1] - 3.0).abs() < 1e-14);
    }
}
