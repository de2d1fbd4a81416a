//! Local elimination of stress, velocity and rotation.
//!
//! With `Ass` and `Azz` block-diagonal around mesh vertices, the step system
//! is reduced in three stages:
//!
//! 1. `σ = Ass⁻¹ (b_s − Asuᵀu − Asgᵀγ − Aspᵀp)` (one dense solve per vertex),
//! 2. `z = Azz⁻¹ (b_z/s − Azpᵀp)` (one dense solve per vertex),
//! 3. `γ = D⁻¹ (r_g − A_uσγᵀ u − A_γσp p)` with the diagonal `D = Asg Ass⁻¹ Asgᵀ`,
//!
//! leaving
//!
//! ```text
//! [ A11  A12 ] [u]   [rhs1]
//! [ A21  A22 ] [p] = [rhs2],     A21 = −A12ᵀ,
//! ```
//!
//! where `A11` and `A22` are symmetric positive definite and couple cells that
//! share a vertex. The reduced system is solved by GMRES preconditioned with
//! direct solves of `A11` and `A22`.

use nalgebra::{Cholesky as DenseCholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::assembly::{BlockSystem, Constraints, RhsVectors};
use crate::error::{Error, Result};
use crate::krylov::{gmres, GmresOptions, GmresOutcome};
use crate::spaces::FeSpaces;
use crate::sparse::{Cholesky, Csr};

/// Dense vertex blocks of the stress and velocity mass matrices (free dofs only).
#[derive(Clone, Debug)]
pub struct LocalVertexSystem {
    pub vertex: usize,
    /// Number of free velocity dofs at the vertex.
    pub k: usize,
    pub stress_dofs: Vec<usize>,
    pub velocity_dofs: Vec<usize>,
    pub ass: DMatrix<f64>,
    pub azz: DMatrix<f64>,
    /// Weak-symmetry row `Asg` restricted to the free stress dofs (1 × 2k).
    pub asg: DVector<f64>,
    ass_chol: Option<DenseCholesky<f64, Dyn>>,
    azz_chol: Option<DenseCholesky<f64, Dyn>>,
}

impl LocalVertexSystem {
    pub fn solve_stress(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.ass_chol {
            Some(ch) => ch.solve(rhs),
            None => DVector::zeros(0),
        }
    }

    pub fn solve_velocity(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.azz_chol {
            Some(ch) => ch.solve(rhs),
            None => DVector::zeros(0),
        }
    }

    pub fn ass_inverse(&self) -> DMatrix<f64> {
        self.ass_chol
            .as_ref()
            .map_or_else(|| DMatrix::zeros(0, 0), |c| c.inverse())
    }

    pub fn azz_inverse(&self) -> DMatrix<f64> {
        self.azz_chol
            .as_ref()
            .map_or_else(|| DMatrix::zeros(0, 0), |c| c.inverse())
    }

    /// `Asg Ass⁻¹ Asgᵀ` at this vertex.
    pub fn rotation_schur(&self) -> f64 {
        if self.asg.is_empty() {
            return 0.0;
        }
        self.asg.dot(&self.solve_stress(&self.asg))
    }
}

fn symmetric_check(m: &DMatrix<f64>) -> bool {
    (m - m.transpose()).norm() <= 1e-12 * m.norm().max(f64::MIN_POSITIVE)
}

/// Checks that every nonzero of `matrix` couples dofs of one vertex group.
pub fn check_vertex_block_structure(matrix: &Csr, groups: &[Vec<usize>], name: &'static str) -> Result<()> {
    let mut owner = vec![usize::MAX; matrix.nrows()];
    for (v, g) in groups.iter().enumerate() {
        for &d in g {
            owner[d] = v;
        }
    }
    for (i, j, val) in matrix.iter() {
        if val != 0.0 && owner[i] != owner[j] {
            return Err(Error::InvalidArgument(format!(
                "{name} entry ({i}, {j}) couples vertices {} and {}",
                owner[i], owner[j]
            )));
        }
    }
    Ok(())
}

/// Extracts and factorises the vertex blocks of the constrained system.
/// Constrained dofs are left out so every block stays definite.
pub fn build_local_systems(
    blocks: &BlockSystem,
    spaces: &FeSpaces,
    constraints: &Constraints,
) -> Result<Vec<LocalVertexSystem>> {
    check_vertex_block_structure(&blocks.ass, &spaces.stress.vertex_groups, "A_ss")?;
    check_vertex_block_structure(&blocks.azz, &spaces.velocity.vertex_groups, "A_zz")?;
    let n_vertices = spaces.rotation.n_dofs;
    (0..n_vertices)
        .into_par_iter()
        .map(|v| {
            let stress_dofs: Vec<usize> = spaces.stress.vertex_groups[v]
                .iter()
                .copied()
                .filter(|d| !constraints.stress.contains_key(d))
                .collect();
            let velocity_dofs: Vec<usize> = spaces.velocity.vertex_groups[v]
                .iter()
                .copied()
                .filter(|d| !constraints.velocity.contains_key(d))
                .collect();
            let ass = blocks.ass.dense_block(&stress_dofs, &stress_dofs);
            let azz = blocks.azz.dense_block(&velocity_dofs, &velocity_dofs);
            let asg = DVector::from_iterator(stress_dofs.len(), stress_dofs.iter().map(|&d| blocks.asg.get(v, d)));
            let factor = |m: &DMatrix<f64>, block: &'static str| -> Result<Option<DenseCholesky<f64, Dyn>>> {
                if m.is_empty() {
                    return Ok(None);
                }
                if !symmetric_check(m) {
                    return Err(Error::SingularLocalBlock { vertex: v, block });
                }
                m.clone()
                    .cholesky()
                    .map(Some)
                    .ok_or(Error::SingularLocalBlock { vertex: v, block })
            };
            let ass_chol = factor(&ass, "A_ss")?;
            let azz_chol = factor(&azz, "A_zz")?;
            Ok(LocalVertexSystem {
                vertex: v,
                k: velocity_dofs.len(),
                stress_dofs,
                velocity_dofs,
                ass,
                azz,
                asg,
                ass_chol,
                azz_chol,
            })
        })
        .collect()
}

/// Block-diagonal inverse assembled from the local blocks; dofs outside every
/// block (the constrained ones) get a unit diagonal.
fn block_inverse(
    n: usize,
    locals: &[LocalVertexSystem],
    pick: impl Fn(&LocalVertexSystem) -> (&[usize], DMatrix<f64>),
) -> Csr {
    let mut covered = vec![false; n];
    let mut trips = Vec::new();
    for l in locals {
        let (dofs, inv) = pick(l);
        for (a, &i) in dofs.iter().enumerate() {
            covered[i] = true;
            for (b, &j) in dofs.iter().enumerate() {
                trips.push((i, j, inv[(a, b)]));
            }
        }
    }
    for (i, c) in covered.iter().enumerate() {
        if !c {
            trips.push((i, i, 1.0));
        }
    }
    Csr::from_triplets(n, n, trips)
}

/// The cell-centred displacement–pressure system and the operators needed to
/// form its right-hand side and recover the eliminated fields.
pub struct ReducedSystem {
    pub a11: Csr,
    pub a12: Csr,
    /// Stored as `−A12ᵀ`.
    pub a21: Csr,
    /// `A21` evaluated from its own formula `A_γσpᵀ D⁻¹ A_uσγᵀ − A_uσpᵀ`, kept
    /// to certify the skew structure.
    pub a21_formula: Csr,
    pub a22: Csr,
    /// Darcy scale (time step) the system was built for.
    pub s: f64,
    /// `Asg Ass⁻¹ Asgᵀ` per vertex; pinned rotations carry 1.
    pub rotation_diag: Vec<f64>,
    asu_si: Csr,
    asg_si: Csr,
    asp_si: Csr,
    azp_zi: Csr,
    a_usg: Csr,
    a_gsp: Csr,
    asu: Csr,
    asg: Csr,
    asp: Csr,
    azp: Csr,
    chol11: Cholesky,
    chol22: Cholesky,
    sizes: [usize; 5],
}

impl std::fmt::Debug for ReducedSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReducedSystem")
            .field("n_u", &self.a11.nrows())
            .field("n_p", &self.a22.nrows())
            .field("s", &self.s)
            .finish_non_exhaustive()
    }
}

/// Reduced right-hand side plus the intermediate vectors used in recovery.
#[derive(Clone, Debug)]
pub struct ReducedRhs {
    pub rhs1: Vec<f64>,
    pub rhs2: Vec<f64>,
    r_g: Vec<f64>,
    c_z: Vec<f64>,
}

/// Forms the Schur complements for Darcy scale `s` from the constrained blocks.
pub fn eliminate(blocks: &BlockSystem, locals: &[LocalVertexSystem], s: f64) -> Result<ReducedSystem> {
    let [ns, _, ng, nz, _] = blocks.sizes;
    let s_inv = block_inverse(ns, locals, |l| (&l.stress_dofs, l.ass_inverse()));
    let z_inv = block_inverse(nz, locals, |l| (&l.velocity_dofs, l.azz_inverse()));

    let asu_si = blocks.asu.matmul(&s_inv);
    let asg_si = blocks.asg.matmul(&s_inv);
    let asp_si = blocks.asp.matmul(&s_inv);
    let azp_zi = blocks.azp.matmul(&z_inv);
    let asu_t = blocks.asu.transpose();
    let asg_t = blocks.asg.transpose();
    let asp_t = blocks.asp.transpose();

    let a_usu = asu_si.matmul(&asu_t);
    let a_usg = asu_si.matmul(&asg_t);
    let a_usp = asu_si.matmul(&asp_t);
    let a_gsp = asg_si.matmul(&asp_t);
    let a_psp = asp_si.matmul(&asp_t);
    let a_zp = azp_zi.matmul(&blocks.azp.transpose());

    let mut pinned = vec![false; ng];
    for &r in &blocks.pinned_rotations {
        pinned[r] = true;
    }
    let mut rotation_diag = vec![0.0; ng];
    for l in locals {
        let v = l.vertex;
        if pinned[v] {
            rotation_diag[v] = 1.0;
            continue;
        }
        let d = l.rotation_schur();
        let scale =
            l.ass.diagonal().iter().map(|x| 1.0 / x).sum::<f64>() * l.asg.norm_squared() / l.asg.len().max(1) as f64;
        if !(d > 1e-12 * scale) {
            return Err(Error::SingularRotation { vertex: v, value: d });
        }
        rotation_diag[v] = d;
    }
    let d_inv: Vec<f64> = rotation_diag.iter().map(|d| 1.0 / d).collect();

    let a_usg_dinv = a_usg.transpose().scale_rows(&d_inv).transpose();
    let a11 = a_usu.add_scaled(1.0, &a_usg_dinv.matmul(&a_usg.transpose()), -1.0);
    let a12 = a_usp.add_scaled(1.0, &a_usg_dinv.matmul(&a_gsp), -1.0);
    let a21 = a12.transpose().scaled(-1.0);
    let gsp_t_dinv = a_gsp.transpose().matmul(&Csr::diagonal(&d_inv));
    let a21_formula = gsp_t_dinv
        .matmul(&a_usg.transpose())
        .add_scaled(1.0, &a_usp.transpose(), -1.0);
    let a22 = blocks
        .app
        .add_scaled(1.0, &a_psp, -1.0)
        .add_scaled(1.0, &a_zp, s)
        .add_scaled(1.0, &gsp_t_dinv.matmul(&a_gsp), 1.0);

    let chol11 = Cholesky::new(&a11).map_err(|e| Error::Factorization(format!("A11: {e}")))?;
    let chol22 = Cholesky::new(&a22).map_err(|e| Error::Factorization(format!("A22: {e}")))?;

    Ok(ReducedSystem {
        a11,
        a12,
        a21,
        a21_formula,
        a22,
        s,
        rotation_diag,
        asu_si,
        asg_si,
        asp_si,
        azp_zi,
        a_usg,
        a_gsp,
        asu: blocks.asu.clone(),
        asg: blocks.asg.clone(),
        asp: blocks.asp.clone(),
        azp: blocks.azp.clone(),
        chol11,
        chol22,
        sizes: blocks.sizes,
    })
}

impl ReducedSystem {
    pub fn n_u(&self) -> usize {
        self.a11.nrows()
    }

    pub fn n_p(&self) -> usize {
        self.a22.nrows()
    }

    /// Reduced right-hand side from the (constrained) step right-hand side.
    pub fn reduce_rhs(&self, rhs: &RhsVectors) -> ReducedRhs {
        let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + s * y).collect() };
        let r_u = add(&rhs.b_u, &self.asu_si.mul_vec(&rhs.b_s), 1.0);
        let r_g = add(&rhs.b_g, &self.asg_si.mul_vec(&rhs.b_s), 1.0);
        let c_z: Vec<f64> = rhs.b_z.iter().map(|v| v / self.s).collect();
        let r_p = add(
            &add(&rhs.b_p, &self.asp_si.mul_vec(&rhs.b_s), -1.0),
            &self.azp_zi.mul_vec(&c_z),
            self.s,
        );
        let dinv_rg: Vec<f64> = r_g.iter().zip(&self.rotation_diag).map(|(r, d)| r / d).collect();
        let rhs1 = add(&r_u, &self.a_usg.mul_vec(&dinv_rg), -1.0);
        let rhs2 = add(&r_p, &self.a_gsp.mul_vec_transpose(&dinv_rg), 1.0);
        ReducedRhs { rhs1, rhs2, r_g, c_z }
    }

    /// `[A11 A12; A21 A22] [u; p]`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (u, p) = x.split_at(self.n_u());
        let mut y = self.a11.mul_vec(u);
        crate::sparse::axpy(1.0, &self.a12.mul_vec(p), &mut y);
        let mut y2 = self.a21.mul_vec(u);
        crate::sparse::axpy(1.0, &self.a22.mul_vec(p), &mut y2);
        y.extend(y2);
        y
    }

    /// Block-diagonal preconditioner `diag(A11⁻¹, A22⁻¹)`.
    pub fn precondition(&self, x: &[f64]) -> Vec<f64> {
        let (u, p) = x.split_at(self.n_u());
        let mut y = self.chol11.solve(u);
        y.extend(self.chol22.solve(p));
        y
    }

    /// Direct solve of `A11 u = b`.
    pub fn solve_a11(&self, b: &[f64]) -> Vec<f64> {
        self.chol11.solve(b)
    }

    /// Direct solve of `A22 p = b`.
    pub fn solve_a22(&self, b: &[f64]) -> Vec<f64> {
        self.chol22.solve(b)
    }

    /// Writes the reduced blocks in triplet form into `dir`.
    pub fn dump(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, m) in [
            ("A11", &self.a11),
            ("A12", &self.a12),
            ("A21", &self.a21),
            ("A22", &self.a22),
        ] {
            let f = std::fs::File::create(dir.join(format!("{name}.txt")))?;
            m.write_triplets(std::io::BufWriter::new(f))?;
        }
        Ok(())
    }
}

/// Solves the reduced system by preconditioned GMRES; returns `(u, p)` and
/// the Krylov outcome.
///
/// GMRES runs on the symmetrically Jacobi-scaled system `D A D y = D b`,
/// `x = D y`, so that the displacement and pressure rows, whose magnitudes
/// can differ by many orders, weigh comparably in the stopping test.
pub fn solve_reduced(red: &ReducedSystem, rhs: &ReducedRhs, tol: f64) -> Result<(Vec<f64>, Vec<f64>, GmresOutcome)> {
    let d: Vec<f64> = red
        .a11
        .diag()
        .into_iter()
        .chain(red.a22.diag())
        .map(|a| if a.abs() > 0.0 { 1.0 / a.abs().sqrt() } else { 1.0 })
        .collect();
    let scale = |x: &[f64]| x.iter().zip(&d).map(|(x, d)| x * d).collect::<Vec<f64>>();
    let unscale = |x: &[f64]| x.iter().zip(&d).map(|(x, d)| x / d).collect::<Vec<f64>>();
    let b: Vec<f64> = rhs.rhs1.iter().chain(&rhs.rhs2).copied().collect();
    let opts = GmresOptions {
        tol,
        ..GmresOptions::default()
    };
    let mut out = gmres(
        |y| scale(&red.apply(&scale(y))),
        |y| unscale(&red.precondition(&unscale(y))),
        &scale(&b),
        opts,
    )?;
    out.x = scale(&out.x);
    let (u, p) = out.x.split_at(red.n_u());
    Ok((u.to_vec(), p.to_vec(), out))
}

/// Eliminated fields after back substitution.
#[derive(Clone, Debug)]
pub struct RecoveredFields {
    pub sigma: Vec<f64>,
    pub gamma: Vec<f64>,
    pub z: Vec<f64>,
}

/// Back substitution in reverse elimination order: γ, then σ and z by
/// per-vertex solves. Constrained dofs take their prescribed values.
pub fn recover_fields(
    red: &ReducedSystem,
    locals: &[LocalVertexSystem],
    rhs: &RhsVectors,
    reduced_rhs: &ReducedRhs,
    u: &[f64],
    p: &[f64],
) -> RecoveredFields {
    let [ns, _, ng, nz, _] = red.sizes;
    let t1 = red.a_usg.mul_vec_transpose(u);
    let t2 = red.a_gsp.mul_vec(p);
    let gamma: Vec<f64> = (0..ng)
        .map(|v| (reduced_rhs.r_g[v] - t1[v] - t2[v]) / red.rotation_diag[v])
        .collect();

    // σ = Ass⁻¹ (b_s − Asuᵀu − Asgᵀγ − Aspᵀp); constrained rows are identity
    let mut fs = rhs.b_s.clone();
    crate::sparse::axpy(-1.0, &red.asu.mul_vec_transpose(u), &mut fs);
    crate::sparse::axpy(-1.0, &red.asg.mul_vec_transpose(&gamma), &mut fs);
    crate::sparse::axpy(-1.0, &red.asp.mul_vec_transpose(p), &mut fs);
    let mut fz = reduced_rhs.c_z.clone();
    crate::sparse::axpy(-1.0, &red.azp.mul_vec_transpose(p), &mut fz);

    let mut sigma = fs.clone();
    let mut z = fz.clone();
    // (global dof, value) pairs for the stress and velocity of each vertex
    type Updates = Vec<(usize, f64)>;
    let solved: Vec<(Updates, Updates)> = locals
        .par_iter()
        .map(|l| {
            let bs = DVector::from_iterator(l.stress_dofs.len(), l.stress_dofs.iter().map(|&d| fs[d]));
            let bz = DVector::from_iterator(l.velocity_dofs.len(), l.velocity_dofs.iter().map(|&d| fz[d]));
            let xs = l.solve_stress(&bs);
            let xz = l.solve_velocity(&bz);
            (
                l.stress_dofs.iter().copied().zip(xs.iter().copied()).collect(),
                l.velocity_dofs.iter().copied().zip(xz.iter().copied()).collect(),
            )
        })
        .collect();
    for (ss, zz) in solved {
        for (d, v) in ss {
            sigma[d] = v;
        }
        for (d, v) in zz {
            z[d] = v;
        }
    }
    debug_assert_eq!(sigma.len(), ns);
    debug_assert_eq!(z.len(), nz);
    RecoveredFields { sigma, gamma, z }
}

/// Smallest eigenvalue of a symmetric sparse matrix (dense computation; for
/// certificates on small meshes).
pub fn smallest_eigenvalue(m: &Csr) -> f64 {
    let d = m.to_dense();
    let sym = (&d + d.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// `‖M − Mᵀ‖_max / ‖M‖_max`
pub fn asymmetry(m: &Csr) -> f64 {
    let diff = m.add_scaled(1.0, &m.transpose(), -1.0);
    diff.max_abs() / m.max_abs().max(f64::MIN_POSITIVE)
}
