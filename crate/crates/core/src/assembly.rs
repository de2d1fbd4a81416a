//! Assembly of the five-field block system and its right-hand sides.
//!
//! Unknowns are ordered σ, u, γ, z, p. One backward-Euler step with step size
//! `s = Δt` solves
//!
//! ```text
//! [  Ass  Asuᵀ Asgᵀ   0     Aspᵀ ] [σ]   [b_s]
//! [ -Asu   0    0     0      0   ] [u]   [b_u]
//! [ -Asg   0    0     0      0   ] [γ] = [b_g]
//! [   0    0    0   s·Azz  s·Azpᵀ] [z]   [b_z]
//! [  Asp   0    0  -s·Azp   App  ] [p]   [b_p]
//! ```
//!
//! with `Ass = (Aσ,τ)_Q`, `Asg = (σ,ξ)_Q`, `Asp = α(Aσ, wI)_Q`,
//! `App = c0 (p,w) + α²(A pI, wI)_Q`, `Azz = (K⁻¹z,ζ)_Q`, `Asu = (div σ, v)` and
//! `Azp = −(div z, w)`. The subscript Q marks the vertex quadrature rule; the
//! divergence couplings are integrated exactly. The mass equation has been
//! multiplied by Δt, which keeps the matrix well scaled for small steps.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::material::{FlowBc, MaterialModel, MechanicalBc, SourceData};
use crate::mesh::Mesh;
use crate::quadrature::{gauss_legendre_unit, gauss_rule, reference_area, reference_vertices, vertex_rule};
use crate::spaces::{
    bdm1_reference_basis, interpolate_boundary_normal, physical_bdm1, stress_dof, velocity_dof, BoundaryMode, FeSpaces,
};
use crate::sparse::Csr;
use crate::{Tensor, Vec2};

/// Gauss order used for source integrals.
pub const SOURCE_ORDER: usize = 5;

/// The seven operator blocks.
#[derive(Clone, Debug)]
pub struct BlockSystem {
    pub ass: Csr,
    pub asu: Csr,
    pub asg: Csr,
    pub asp: Csr,
    pub azz: Csr,
    pub azp: Csr,
    pub app: Csr,
    /// Rotation dofs fixed to zero because every stress dof at their vertex is
    /// prescribed (their weak-symmetry row is empty).
    pub pinned_rotations: Vec<usize>,
    /// Block sizes in the order σ, u, γ, z, p.
    pub sizes: [usize; 5],
}

/// Right-hand side of one step, split by block.
#[derive(Clone, Debug, PartialEq)]
pub struct RhsVectors {
    pub b_s: Vec<f64>,
    pub b_u: Vec<f64>,
    pub b_g: Vec<f64>,
    pub b_z: Vec<f64>,
    pub b_p: Vec<f64>,
}

impl RhsVectors {
    pub fn zeros(sizes: [usize; 5]) -> Self {
        Self {
            b_s: vec![0.0; sizes[0]],
            b_u: vec![0.0; sizes[1]],
            b_g: vec![0.0; sizes[2]],
            b_z: vec![0.0; sizes[3]],
            b_p: vec![0.0; sizes[4]],
        }
    }

    pub fn concat(&self) -> Vec<f64> {
        [&self.b_s[..], &self.b_u, &self.b_g, &self.b_z, &self.b_p].concat()
    }

    pub fn is_zero(&self) -> bool {
        self.concat().iter().all(|&v| v == 0.0)
    }
}

/// Essential (normal-trace) conditions: prescribed stress and velocity dofs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Constraints {
    pub stress: BTreeMap<usize, f64>,
    pub velocity: BTreeMap<usize, f64>,
}

impl Constraints {
    pub fn is_empty(&self) -> bool {
        self.stress.is_empty() && self.velocity.is_empty()
    }

    fn insert(map: &mut BTreeMap<usize, f64>, space: &'static str, dof: usize, value: f64) -> Result<()> {
        if let Some(&old) = map.get(&dof) {
            if (old - value).abs() > 1e-12 * (1.0 + old.abs().max(value.abs())) {
                return Err(Error::ConflictingConstraint {
                    space,
                    dof,
                    first: old,
                    second: value,
                });
            }
        }
        map.insert(dof, value);
        Ok(())
    }

    pub fn add_stress(&mut self, dof: usize, value: f64) -> Result<()> {
        Self::insert(&mut self.stress, "stress", dof, value)
    }

    pub fn add_velocity(&mut self, dof: usize, value: f64) -> Result<()> {
        Self::insert(&mut self.velocity, "velocity", dof, value)
    }

    /// Traction and normal-flux data of `data` at time `t`.
    pub fn from_data(mesh: &Mesh, data: &SourceData, t: f64) -> Result<Self> {
        let mode = BoundaryMode::for_cell(mesh.cell_type);
        let mut c = Constraints::default();
        for (&e, tag) in &mesh.boundary_tags {
            if let Some(MechanicalBc::Traction(g)) = data.mechanical.get(tag) {
                for row in 0..2 {
                    let vals = interpolate_boundary_normal(mesh, e, |x| g(x, t)[row], mode);
                    for (j, v) in vals.into_iter().enumerate() {
                        c.add_stress(stress_dof(e, j, row), v)?;
                    }
                }
            }
            if let Some(FlowBc::NormalFlux(g)) = data.flow.get(tag) {
                let vals = interpolate_boundary_normal(mesh, e, |x| g(x, t), mode);
                for (j, v) in vals.into_iter().enumerate() {
                    c.add_velocity(velocity_dof(e, j), v)?;
                }
            }
        }
        Ok(c)
    }
}

/// Checks that every boundary tag has both a mechanical and a flow condition.
pub fn check_boundary_coverage(mesh: &Mesh, data: &SourceData) -> Result<()> {
    for tag in mesh.boundary_tags.values() {
        if !data.mechanical.contains_key(tag) {
            return Err(Error::InvalidArgument(format!(
                "boundary tag '{tag}' has no displacement/traction condition"
            )));
        }
        if !data.flow.contains_key(tag) {
            return Err(Error::InvalidArgument(format!(
                "boundary tag '{tag}' has no pressure/flux condition"
            )));
        }
    }
    Ok(())
}

#[derive(Default)]
struct LocalTriplets {
    ass: Vec<(usize, usize, f64)>,
    asu: Vec<(usize, usize, f64)>,
    asg: Vec<(usize, usize, f64)>,
    asp: Vec<(usize, usize, f64)>,
    azz: Vec<(usize, usize, f64)>,
    azp: Vec<(usize, usize, f64)>,
    app: Vec<(usize, usize, f64)>,
}

/// Stress basis function of a local dof as a tensor (its row holds the vector).
fn row_tensor(row: usize, v: Vec2) -> Tensor {
    let mut t = Tensor::zeros();
    t[(row, 0)] = v.x;
    t[(row, 1)] = v.y;
    t
}

fn cell_contributions(mesh: &Mesh, spaces: &FeSpaces, model: &MaterialModel, c: usize) -> Result<LocalTriplets> {
    let map = mesh.element_map(c)?;
    let cell_type = mesh.cell_type;
    let rule = vertex_rule(cell_type);
    let sdofs = &spaces.stress.cell_dofs[c];
    let zdofs = &spaces.velocity.cell_dofs[c];
    let mut out = LocalTriplets::default();
    let alpha = model.alpha;
    let mut app = model.c0 * mesh.cell_area(c);

    for (i, (xh, w0)) in rule.iter().enumerate() {
        let vertex = mesh.cells[c][i];
        let x = map.map(xh);
        let basis = physical_bdm1(&map, xh);
        let w = w0 * basis.det;
        let (mu, lambda) = ((model.mu)(x), (model.lambda)(x));
        model.check_at(x)?;
        let kinv = model.perm_inverse(x)?;

        // only dofs attached to this vertex are nonzero here
        let s_here: Vec<(usize, Tensor)> = sdofs
            .iter()
            .filter(|d| d.vertex == vertex)
            .map(|d| (d.global, row_tensor(d.row, basis.values[d.basis] * d.scale)))
            .collect();
        let z_here: Vec<(usize, Vec2)> = zdofs
            .iter()
            .filter(|d| d.vertex == vertex)
            .map(|d| (d.global, basis.values[d.basis] * d.scale))
            .collect();

        for (ga, ta) in &s_here {
            let ata = crate::material::compliance(ta, mu, lambda);
            for (gb, tb) in &s_here {
                out.ass.push((*gb, *ga, w * ata.component_mul(tb).sum()));
            }
            out.asg.push((vertex, *ga, w * (ta[(0, 1)] - ta[(1, 0)])));
            if alpha != 0.0 {
                out.asp.push((c, *ga, alpha * w * ata.trace()));
            }
        }
        for (ga, va) in &z_here {
            let kv = kinv * va;
            for (gb, vb) in &z_here {
                out.azz.push((*gb, *ga, w * kv.dot(vb)));
            }
        }
        app += alpha * alpha * w * crate::material::compliance(&Tensor::identity(), mu, lambda).trace();
    }

    // exact divergence couplings: ∫_E div ψ = scale · div̂ψ̂ · |Ê|
    let (_, ref_divs) = bdm1_reference_basis(cell_type, reference_vertices(cell_type)[0]);
    let area_ref = reference_area(cell_type);
    for d in sdofs {
        out.asu
            .push((2 * c + d.row, d.global, d.scale * ref_divs[d.basis] * area_ref));
    }
    for d in zdofs {
        out.azp.push((c, d.global, -d.scale * ref_divs[d.basis] * area_ref));
    }
    out.app.push((c, c, app));
    Ok(out)
}

/// Assembles all operator blocks (no boundary constraints applied).
pub fn assemble_blocks(mesh: &Mesh, spaces: &FeSpaces, model: &MaterialModel) -> Result<BlockSystem> {
    model.check_constants()?;
    let locals: Vec<LocalTriplets> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| cell_contributions(mesh, spaces, model, c))
        .collect::<Result<_>>()?;
    let sizes = spaces.sizes();
    let [ns, nu, ng, nz, np] = sizes;
    let gather = |f: fn(&LocalTriplets) -> &Vec<(usize, usize, f64)>| -> Vec<(usize, usize, f64)> {
        locals.iter().flat_map(|l| f(l).iter().copied()).collect()
    };
    Ok(BlockSystem {
        ass: Csr::from_triplets(ns, ns, gather(|l| &l.ass)),
        asu: Csr::from_triplets(nu, ns, gather(|l| &l.asu)),
        asg: Csr::from_triplets(ng, ns, gather(|l| &l.asg)),
        asp: Csr::from_triplets(np, ns, gather(|l| &l.asp)),
        azz: Csr::from_triplets(nz, nz, gather(|l| &l.azz)),
        azp: Csr::from_triplets(np, nz, gather(|l| &l.azp)),
        app: Csr::from_triplets(np, np, gather(|l| &l.app)),
        pinned_rotations: Vec::new(),
        sizes,
    })
}

impl BlockSystem {
    /// The assembled step matrix for Darcy scale `s` (the time step).
    pub fn full_matrix(&self, s: f64) -> Csr {
        let asu_t = self.asu.transpose();
        let asg_t = self.asg.transpose();
        let asp_t = self.asp.transpose();
        let azp_t = self.azp.transpose();
        let neg_asu = self.asu.scaled(-1.0);
        let neg_asg = self.asg.scaled(-1.0);
        let s_azz = self.azz.scaled(s);
        let s_azp_t = azp_t.scaled(s);
        let neg_s_azp = self.azp.scaled(-s);
        let mut pin = vec![0.0; self.sizes[2]];
        for &r in &self.pinned_rotations {
            pin[r] = 1.0;
        }
        let agg = Csr::diagonal(&pin).filter(|_, _, v| v != 0.0);
        let blocks: Vec<Vec<Option<&Csr>>> = vec![
            vec![Some(&self.ass), Some(&asu_t), Some(&asg_t), None, Some(&asp_t)],
            vec![Some(&neg_asu), None, None, None, None],
            vec![Some(&neg_asg), None, Some(&agg), None, None],
            vec![None, None, None, Some(&s_azz), Some(&s_azp_t)],
            vec![Some(&self.asp), None, None, Some(&neg_s_azp), Some(&self.app)],
        ];
        Csr::block(&blocks, &self.sizes, &self.sizes)
    }

    /// Applies the step matrix to a concatenated state vector.
    pub fn apply(&self, s: f64, x: &[f64]) -> Vec<f64> {
        self.full_matrix(s).mul_vec(x)
    }

    /// Writes every block in `row col value` form into `dir/<name>.txt`.
    pub fn dump(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, m) in [
            ("A_ss", &self.ass),
            ("A_su", &self.asu),
            ("A_sg", &self.asg),
            ("A_sp", &self.asp),
            ("A_zz", &self.azz),
            ("A_zp", &self.azp),
            ("A_pp", &self.app),
        ] {
            let f = std::fs::File::create(dir.join(format!("{name}.txt")))?;
            m.write_triplets(std::io::BufWriter::new(f))?;
        }
        Ok(())
    }
}

/// `∫_E f` over every cell with the Gauss rule of `order`.
pub fn cell_integrals<T, F>(mesh: &Mesh, order: usize, f: F) -> Result<Vec<T>>
where
    T: Send + Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    F: Fn(Vec2) -> T + Sync,
{
    let rule = gauss_rule(mesh.cell_type, order)?;
    (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| {
            let map = mesh.element_map(c)?;
            let mut acc = T::default();
            for (xh, w) in rule.iter() {
                acc = acc + f(map.map(xh)) * (w * map.det(xh));
            }
            Ok(acc)
        })
        .collect()
}

/// `∫_e g φ_j ds` for the two endpoint hats of a straight edge, with `g`
/// replaced by its edge mean on quadrilaterals.
pub fn edge_moments(mesh: &Mesh, edge: usize, g: impl Fn(Vec2) -> f64) -> [f64; 2] {
    let e = &mesh.edges[edge];
    let (a, b) = (mesh.nodes[e.vertices[0]], mesh.nodes[e.vertices[1]]);
    let (xs, ws) = gauss_legendre_unit(5);
    match BoundaryMode::for_cell(mesh.cell_type) {
        BoundaryMode::EdgeAverage => {
            let mean: f64 = xs.iter().zip(&ws).map(|(&s, &w)| w * g(a + (b - a) * s)).sum();
            [0.5 * mean * e.length, 0.5 * mean * e.length]
        }
        BoundaryMode::Pointwise => {
            let mut m = [0.0; 2];
            for (&s, &w) in xs.iter().zip(&ws) {
                let v = g(a + (b - a) * s) * w * e.length;
                m[0] += v * (1.0 - s);
                m[1] += v * s;
            }
            m
        }
    }
}

/// Boundary and source terms at time `t` for Darcy scale `s`, without the
/// time-lag terms: `b_s = ⟨g_u, τn⟩`, `b_u = (f, v)`, `b_z = −s⟨g_p, ζ·n⟩`,
/// `b_p = s (q, w)`.
pub fn assemble_sources(mesh: &Mesh, spaces: &FeSpaces, data: &SourceData, t: f64, s: f64) -> Result<RhsVectors> {
    let mut rhs = RhsVectors::zeros(spaces.sizes());
    for (&e, tag) in &mesh.boundary_tags {
        if let Some(MechanicalBc::Displacement(g)) = data.mechanical.get(tag) {
            for row in 0..2 {
                let m = edge_moments(mesh, e, |x| g(x, t)[row]);
                for (j, v) in m.into_iter().enumerate() {
                    rhs.b_s[stress_dof(e, j, row)] += v;
                }
            }
        }
        if let Some(FlowBc::Pressure(g)) = data.flow.get(tag) {
            let m = edge_moments(mesh, e, |x| g(x, t));
            for (j, v) in m.into_iter().enumerate() {
                rhs.b_z[velocity_dof(e, j)] -= s * v;
            }
        }
    }
    let f = &data.body_force;
    let forces: Vec<Vec2> = cell_integrals(mesh, SOURCE_ORDER, |x| f(x, t))?;
    for (c, fv) in forces.iter().enumerate() {
        rhs.b_u[2 * c] = fv.x;
        rhs.b_u[2 * c + 1] = fv.y;
    }
    let q = &data.fluid_source;
    let qs: Vec<f64> = cell_integrals(mesh, SOURCE_ORDER, |x| q(x, t))?;
    for (c, qv) in qs.iter().enumerate() {
        rhs.b_p[c] = s * qv;
    }
    Ok(rhs)
}

/// Full right-hand side of the backward-Euler step from `prev` to time `t`:
/// sources plus the lag terms `Asp σⁿ⁻¹ + App pⁿ⁻¹` (unconstrained blocks).
pub fn assemble_rhs(
    mesh: &Mesh,
    spaces: &FeSpaces,
    blocks: &BlockSystem,
    data: &SourceData,
    t: f64,
    dt: f64,
    prev_sigma: &[f64],
    prev_p: &[f64],
) -> Result<RhsVectors> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let mut rhs = assemble_sources(mesh, spaces, data, t, dt)?;
    let lag_s = blocks.asp.mul_vec(prev_sigma);
    let lag_p = blocks.app.mul_vec(prev_p);
    for i in 0..rhs.b_p.len() {
        rhs.b_p[i] += lag_s[i] + lag_p[i];
    }
    Ok(rhs)
}

/// Vertices whose stress dofs are all constrained.
pub fn fully_constrained_vertices(spaces: &FeSpaces, constraints: &Constraints) -> Vec<usize> {
    spaces
        .stress
        .vertex_groups
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty() && g.iter().all(|d| constraints.stress.contains_key(d)))
        .map(|(v, _)| v)
        .collect()
}

/// Symmetric elimination of the constrained dofs: rows and columns are zeroed
/// and the diagonal set to one. Rotations at fully constrained vertices are pinned.
pub fn constrain_blocks(blocks: &BlockSystem, spaces: &FeSpaces, constraints: &Constraints) -> BlockSystem {
    let cs = |i: usize| constraints.stress.contains_key(&i);
    let cz = |i: usize| constraints.velocity.contains_key(&i);
    let mut ass = blocks.ass.filter(|i, j, _| !cs(i) && !cs(j));
    let mut azz = blocks.azz.filter(|i, j, _| !cz(i) && !cz(j));
    if !constraints.stress.is_empty() {
        let mut d = vec![0.0; blocks.sizes[0]];
        for &i in constraints.stress.keys() {
            d[i] = 1.0;
        }
        ass = ass.add_scaled(1.0, &Csr::diagonal(&d).filter(|_, _, v| v != 0.0), 1.0);
    }
    if !constraints.velocity.is_empty() {
        let mut d = vec![0.0; blocks.sizes[3]];
        for &i in constraints.velocity.keys() {
            d[i] = 1.0;
        }
        azz = azz.add_scaled(1.0, &Csr::diagonal(&d).filter(|_, _, v| v != 0.0), 1.0);
    }
    BlockSystem {
        ass,
        asu: blocks.asu.filter(|_, j, _| !cs(j)),
        asg: blocks.asg.filter(|_, j, _| !cs(j)),
        asp: blocks.asp.filter(|_, j, _| !cs(j)),
        azz,
        azp: blocks.azp.filter(|_, j, _| !cz(j)),
        app: blocks.app.clone(),
        pinned_rotations: fully_constrained_vertices(spaces, constraints),
        sizes: blocks.sizes,
    }
}

/// Moves the prescribed columns to the right-hand side (using the
/// unconstrained `blocks`) and sets the constrained rows so that the
/// constrained system returns the prescribed values.
pub fn lift_constraints(
    blocks: &BlockSystem,
    pinned: &[usize],
    constraints: &Constraints,
    rhs: &mut RhsVectors,
    s: f64,
) -> Result<()> {
    if !constraints.stress.is_empty() {
        let mut g = vec![0.0; blocks.sizes[0]];
        for (&i, &v) in &constraints.stress {
            g[i] = v;
        }
        let (a, b, c, d) = (
            blocks.ass.mul_vec(&g),
            blocks.asu.mul_vec(&g),
            blocks.asg.mul_vec(&g),
            blocks.asp.mul_vec(&g),
        );
        crate::sparse::axpy(-1.0, &a, &mut rhs.b_s);
        crate::sparse::axpy(1.0, &b, &mut rhs.b_u);
        crate::sparse::axpy(-1.0, &d, &mut rhs.b_p);
        // the ξ-row holds −Asg σ
        crate::sparse::axpy(1.0, &c, &mut rhs.b_g);
        for &r in pinned {
            let scale: f64 = {
                let (cols, vals) = blocks.asg.row(r);
                cols.iter().zip(vals).map(|(&j, &v)| (v * g[j]).abs()).sum()
            };
            if rhs.b_g[r].abs() > 1e-9 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::InconsistentData(format!(
                    "prescribed traction at vertex {r} is not compatible with a symmetric stress"
                )));
            }
            rhs.b_g[r] = 0.0;
        }
        for (&i, &v) in &constraints.stress {
            rhs.b_s[i] = v;
        }
    }
    if !constraints.velocity.is_empty() {
        let mut g = vec![0.0; blocks.sizes[3]];
        for (&i, &v) in &constraints.velocity {
            g[i] = v;
        }
        let a = blocks.azz.mul_vec(&g);
        let b = blocks.azp.mul_vec(&g);
        crate::sparse::axpy(-s, &a, &mut rhs.b_z);
        crate::sparse::axpy(s, &b, &mut rhs.b_p);
        for (&i, &v) in &constraints.velocity {
            rhs.b_z[i] = s * v;
        }
    }
    Ok(())
}

/// Symmetric elimination of essential conditions on a block system and its
/// right-hand side. The constrained z rows read `s·z_c = s·g_c`.
pub fn apply_essential_bc(
    blocks: &BlockSystem,
    spaces: &FeSpaces,
    rhs: &RhsVectors,
    constraints: &Constraints,
    s: f64,
) -> Result<(BlockSystem, RhsVectors)> {
    let constrained = constrain_blocks(blocks, spaces, constraints);
    let mut out = rhs.clone();
    lift_constraints(blocks, &constrained.pinned_rotations, constraints, &mut out, s)?;
    Ok((constrained, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rectangle_mesh, distort_example2, CellType, Rect};
    use crate::sparse::Cholesky;

    fn unit_model() -> MaterialModel {
        MaterialModel::constant(1.0, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn azz_blocks_on_2x2_quads() {
        let m = build_rectangle_mesh(Rect::UNIT, 2, 2, CellType::Quadrilateral).unwrap();
        let sp = FeSpaces::new(&m);
        let b = assemble_blocks(&m, &sp, &unit_model()).unwrap();
        assert_eq!(b.azz.nrows(), 24);
        let mut owner = [usize::MAX; 24];
        for (v, g) in sp.velocity.vertex_groups.iter().enumerate() {
            for &d in g {
                owner[d] = v;
            }
        }
        for (i, j, _) in b.azz.iter() {
            assert_eq!(owner[i], owner[j]);
        }
        for g in &sp.velocity.vertex_groups {
            let blk = b.azz.dense_block(g, g);
            assert!((&blk - blk.transpose()).norm() < 1e-12);
            assert!(blk.cholesky().is_some());
        }
    }

    #[test]
    fn reference_triangle_velocity_mass() {
        let nodes = vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let m = Mesh::from_cells(CellType::Triangle, nodes, vec![vec![0, 1, 2]], |_, _| None).unwrap();
        let sp = FeSpaces::new(&m);
        let b = assemble_blocks(&m, &sp, &unit_model()).unwrap();
        // at vertex 0 the two functions are −e_y-normal and −e_x-normal: values (0,−1), (−1,0)
        let g0 = &sp.velocity.vertex_groups[0];
        let blk = b.azz.dense_block(g0, g0);
        assert_eq!(g0.len(), 2);
        let expect = nalgebra::DMatrix::from_row_slice(2, 2, &[1.0 / 6.0, 0.0, 0.0, 1.0 / 6.0]);
        assert!((blk - expect).norm() < 1e-14);
        assert_eq!(b.azz.nnz(), 12);
    }

    #[test]
    fn asu_matches_gauss_integration_of_divergence() {
        let m = distort_example2(&build_rectangle_mesh(Rect::UNIT, 4, 4, CellType::Quadrilateral).unwrap());
        let sp = FeSpaces::new(&m);
        let b = assemble_blocks(&m, &sp, &unit_model()).unwrap();
        let rule = gauss_rule(m.cell_type, 5).unwrap();
        let c = 5;
        let map = m.element_map(c).unwrap();
        for d in &sp.stress.cell_dofs[c] {
            let exact: f64 = rule
                .iter()
                .map(|(xh, w)| {
                    let pb = physical_bdm1(&map, xh);
                    w * pb.det * pb.divs[d.basis] * d.scale
                })
                .sum();
            assert!((b.asu.get(2 * c + d.row, d.global) - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn asp_is_alpha_times_compliance_trace() {
        let m = build_rectangle_mesh(Rect::UNIT, 2, 2, CellType::Triangle).unwrap();
        let sp = FeSpaces::new(&m);
        let mut model = MaterialModel::constant(2.0, 3.0, 1.0, 0.0, 0.5).unwrap();
        let b = assemble_blocks(&m, &sp, &model).unwrap();
        model.alpha = 1.0;
        let b1 = assemble_blocks(&m, &sp, &model).unwrap();
        assert!((b.asp.scaled(2.0).to_dense() - b1.asp.to_dense()).norm() < 1e-14);
        // p = 1 on one cell: Aspᵀ column equals α(A I, τ)_Q
        let c = 3;
        let row = b
            .asp
            .transpose()
            .mul_vec(&(0..m.n_cells()).map(|i| f64::from(i == c)).collect::<Vec<_>>());
        let ai = crate::material::compliance(&Tensor::identity(), 2.0, 3.0);
        let map = m.element_map(c).unwrap();
        for d in &sp.stress.cell_dofs[c] {
            let mut v = 0.0;
            for (i, (xh, w0)) in vertex_rule(m.cell_type).iter().enumerate() {
                if d.vertex != m.cells[c][i] {
                    continue;
                }
                let pb = physical_bdm1(&map, xh);
                let t = row_tensor(d.row, pb.values[d.basis] * d.scale);
                v += 0.5 * w0 * pb.det * ai.component_mul(&t).sum();
            }
            assert!((row[d.global] - v).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_data_gives_zero_rhs() {
        let m = build_rectangle_mesh(Rect::UNIT, 2, 2, CellType::Quadrilateral).unwrap();
        let sp = FeSpaces::new(&m);
        let b = assemble_blocks(&m, &sp, &unit_model()).unwrap();
        let data = SourceData::zero()
            .clamped(&["left", "right", "bottom", "top"])
            .drained(&["left", "right", "bottom", "top"]);
        let z = vec![0.0; sp.stress.n_dofs];
        let p = vec![0.0; sp.pressure.n_dofs];
        let rhs = assemble_rhs(&m, &sp, &b, &data, 0.1, 0.1, &z, &p).unwrap();
        assert!(rhs.is_zero());
    }

    #[test]
    fn source_integrals_agree_between_rules() {
        let m = distort_example2(&build_rectangle_mesh(Rect::UNIT, 4, 4, CellType::Quadrilateral).unwrap());
        // quadratics pulled back through a bilinear map stay within the exact degree
        let f = |x: Vec2| 1.0 + 2.0 * x.x - x.y + 3.0 * x.x * x.y - x.x * x.x + 0.5 * x.y * x.y;
        let a: Vec<f64> = cell_integrals(&m, 5, f).unwrap();
        let b: Vec<f64> = cell_integrals(&m, 9, f).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-14);
        }
        let g = |x: Vec2| (3.0 * x.x).sin() * (2.0 * x.y).exp();
        let a: Vec<f64> = cell_integrals(&m, 5, g).unwrap();
        let b: Vec<f64> = cell_integrals(&m, 9, g).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-5 * y.abs().max(1e-3));
        }
    }

    #[test]
    fn lifting_matches_explicit_elimination() {
        // constraining one dof to 1 subtracts its column and sets a unit row
        let m = build_rectangle_mesh(Rect::UNIT, 2, 1, CellType::Triangle).unwrap();
        let sp = FeSpaces::new(&m);
        let b = assemble_blocks(&m, &sp, &unit_model()).unwrap();
        let e = m.edges_with_tag("top").next().unwrap();
        let mut cons = Constraints::default();
        cons.add_velocity(velocity_dof(e, 0), 1.0).unwrap();
        let rhs0 = RhsVectors::zeros(b.sizes);
        let (cb, rhs) = apply_essential_bc(&b, &sp, &rhs0, &cons, 1.0).unwrap();
        let c = velocity_dof(e, 0);
        for i in 0..b.sizes[3] {
            if i == c {
                assert_eq!(rhs.b_z[i], 1.0);
                assert_eq!(cb.azz.get(i, i), 1.0);
            } else {
                assert!((rhs.b_z[i] + b.azz.get(i, c)).abs() < 1e-15);
                assert_eq!(cb.azz.get(i, c), 0.0);
            }
        }
        for k in 0..b.sizes[4] {
            assert!((rhs.b_p[k] - b.azp.get(k, c)).abs() < 1e-15);
        }
        let (same, r2) = apply_essential_bc(&b, &sp, &rhs0, &Constraints::default(), 1.0).unwrap();
        assert_eq!(same.azz, b.azz);
        assert_eq!(r2, rhs0);
    }

    #[test]
    fn conflicting_constraints_rejected() {
        let mut c = Constraints::default();
        c.add_stress(3, 1.0).unwrap();
        c.add_stress(3, 1.0).unwrap();
        assert!(matches!(
            c.add_stress(3, 2.0),
            Err(Error::ConflictingConstraint { dof: 3, .. })
        ));
    }

    #[test]
    fn stress_vertex_blocks_are_spd() {
        let m = distort_example2(&build_rectangle_mesh(Rect::UNIT, 4, 4, CellType::Quadrilateral).unwrap());
        let sp = FeSpaces::new(&m);
        let b = assemble_blocks(&m, &sp, &unit_model()).unwrap();
        for g in &sp.stress.vertex_groups {
            let blk = b.ass.dense_block(g, g);
            assert!((&blk - blk.transpose()).norm() < 1e-12);
            assert!(blk.cholesky().is_some());
        }
        assert!(Cholesky::new(&b.ass).is_ok());
    }
}
