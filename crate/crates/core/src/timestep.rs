//! Backward-Euler time stepping, initial data and the direct full-system path.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::assembly::{
    assemble_blocks, assemble_rhs, assemble_sources, cell_integrals, check_boundary_coverage, constrain_blocks,
    lift_constraints, BlockSystem, Constraints, RhsVectors, SOURCE_ORDER,
};
use crate::error::{Error, Result};
use crate::material::{InitialData, InitialFields, MaterialModel, SourceData};
use crate::mesh::Mesh;
use crate::quadrature::vertex_rule;
use crate::reduction::{
    build_local_systems, eliminate, recover_fields, solve_reduced, LocalVertexSystem, ReducedSystem,
};
use crate::spaces::FeSpaces;
use crate::sparse::{Csr, Lu};
use crate::{Tensor, Vec2};

/// `0 = t₀ < t₁ < … < t_N = T`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    /// Exact step of a uniform grid, so every step reuses the same operators.
    uniform_dt: Option<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidArgument("time grid needs at least two levels".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("time levels must be strictly increasing".into()));
        }
        Ok(Self {
            times,
            uniform_dt: None,
        })
    }

    /// `N = round(T/Δt)` equal steps from 0 to `T`.
    pub fn uniform(t_final: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_final >= dt) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < dt ≤ T, got dt = {dt}, T = {t_final}"
            )));
        }
        let n = (t_final / dt).round() as usize;
        if ((n as f64) * dt - t_final).abs() > 1e-9 * t_final {
            return Err(Error::InvalidArgument(format!(
                "T = {t_final} is not a multiple of dt = {dt}"
            )));
        }
        let mut grid = Self::new((0..=n).map(|i| t_final * i as f64 / n as f64).collect())?;
        grid.uniform_dt = Some(t_final / n as f64);
        Ok(grid)
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dt(&self, n: usize) -> f64 {
        self.uniform_dt.unwrap_or(self.times[n] - self.times[n - 1])
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// Coefficient vectors of all five fields at one time level.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub sigma: Vec<f64>,
    pub u: Vec<f64>,
    pub gamma: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
}

impl FieldState {
    pub fn zeros(spaces: &FeSpaces, t: f64) -> Self {
        let [ns, nu, ng, nz, np] = spaces.sizes();
        Self {
            t,
            sigma: vec![0.0; ns],
            u: vec![0.0; nu],
            gamma: vec![0.0; ng],
            z: vec![0.0; nz],
            p: vec![0.0; np],
        }
    }

    pub fn concat(&self) -> Vec<f64> {
        [&self.sigma[..], &self.u, &self.gamma, &self.z, &self.p].concat()
    }

    pub fn from_concat(x: &[f64], sizes: [usize; 5], t: f64) -> Self {
        let mut off = 0;
        let mut take = |n: usize| {
            let v = x[off..off + n].to_vec();
            off += n;
            v
        };
        Self {
            t,
            sigma: take(sizes[0]),
            u: take(sizes[1]),
            gamma: take(sizes[2]),
            z: take(sizes[3]),
            p: take(sizes[4]),
        }
    }

    /// Fields in the order σ, u, γ, z, p with their names.
    pub fn fields(&self) -> [(&'static str, &[f64]); 5] {
        [
            ("sigma", &self.sigma),
            ("u", &self.u),
            ("gamma", &self.gamma),
            ("z", &self.z),
            ("p", &self.p),
        ]
    }

    /// Largest per-field relative difference `‖a − b‖ / max(‖a‖, ‖b‖)`.
    pub fn max_relative_difference(&self, other: &FieldState) -> f64 {
        self.fields()
            .iter()
            .zip(other.fields().iter())
            .map(|((_, a), (_, b))| relative_difference(a, b))
            .fold(0.0, f64::max)
    }
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_difference(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n = crate::sparse::norm2(a).max(crate::sparse::norm2(b));
    if n == 0.0 {
        0.0
    } else {
        d / n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolvePath {
    /// Local elimination and GMRES on the cell-centred system.
    Reduced,
    /// Sparse LU of the assembled five-field system.
    Full,
}

impl std::str::FromStr for SolvePath {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduced" => Ok(SolvePath::Reduced),
            "full" => Ok(SolvePath::Full),
            other => Err(Error::InvalidArgument(format!("unknown solve path '{other}'"))),
        }
    }
}

/// Per-step solver report.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    /// Krylov iterations (0 for the direct path).
    pub iterations: usize,
    /// Relative residual of the solved linear system.
    pub residual: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    /// `states[0]` is the initial state.
    pub states: Vec<FieldState>,
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Assembled operators for one mesh and material, reused across steps.
pub struct Stepper {
    pub mesh: Mesh,
    pub spaces: FeSpaces,
    pub model: MaterialModel,
    pub data: SourceData,
    /// Blocks before boundary constraints (used for lag terms and balances).
    pub blocks: BlockSystem,
    /// Blocks after symmetric elimination of the essential conditions.
    pub constrained: BlockSystem,
    pub locals: Vec<LocalVertexSystem>,
    reduced: Mutex<HashMap<u64, Arc<ReducedSystem>>>,
    direct: Mutex<HashMap<u64, Arc<Lu>>>,
}

impl Stepper {
    pub fn new(mesh: &Mesh, model: MaterialModel, data: SourceData) -> Result<Self> {
        check_boundary_coverage(mesh, &data)?;
        let spaces = FeSpaces::new(mesh);
        let blocks = assemble_blocks(mesh, &spaces, &model)?;
        let pattern = Constraints::from_data(mesh, &data, 0.0)?;
        let constrained = constrain_blocks(&blocks, &spaces, &pattern);
        let locals = build_local_systems(&constrained, &spaces, &pattern)?;
        Ok(Self {
            mesh: mesh.clone(),
            spaces,
            model,
            data,
            blocks,
            constrained,
            locals,
            reduced: Mutex::new(HashMap::new()),
            direct: Mutex::new(HashMap::new()),
        })
    }

    /// Reduced system for Darcy scale `s`, built once per distinct `s`.
    pub fn reduced_system(&self, s: f64) -> Result<Arc<ReducedSystem>> {
        let key = s.to_bits();
        if let Some(r) = self.reduced.lock().unwrap().get(&key) {
            return Ok(r.clone());
        }
        let r = Arc::new(eliminate(&self.constrained, &self.locals, s)?);
        self.reduced.lock().unwrap().insert(key, r.clone());
        Ok(r)
    }

    fn direct_solver(&self, s: f64) -> Result<Arc<Lu>> {
        let key = s.to_bits();
        if let Some(r) = self.direct.lock().unwrap().get(&key) {
            return Ok(r.clone());
        }
        let lu = Arc::new(Lu::new(&self.constrained.full_matrix(s))?);
        self.direct.lock().unwrap().insert(key, lu.clone());
        Ok(lu)
    }

    /// Constrained step right-hand side.
    pub fn step_rhs(&self, prev: &FieldState, t: f64, dt: f64) -> Result<RhsVectors> {
        let mut rhs = assemble_rhs(
            &self.mesh,
            &self.spaces,
            &self.blocks,
            &self.data,
            t,
            dt,
            &prev.sigma,
            &prev.p,
        )?;
        let cons = Constraints::from_data(&self.mesh, &self.data, t)?;
        lift_constraints(&self.blocks, &self.constrained.pinned_rotations, &cons, &mut rhs, dt)?;
        Ok(rhs)
    }

    /// Solves the constrained system with Darcy scale `s` for a given RHS.
    pub fn solve(
        &self,
        rhs: &RhsVectors,
        s: f64,
        t: f64,
        path: SolvePath,
        tol: f64,
    ) -> Result<(FieldState, usize, f64)> {
        match path {
            SolvePath::Reduced => {
                let red = self.reduced_system(s)?;
                let rr = red.reduce_rhs(rhs);
                let (u, p, out) = solve_reduced(&red, &rr, tol)?;
                let rec = recover_fields(&red, &self.locals, rhs, &rr, &u, &p);
                Ok((
                    FieldState {
                        t,
                        sigma: rec.sigma,
                        u,
                        gamma: rec.gamma,
                        z: rec.z,
                        p,
                    },
                    out.iterations,
                    out.residual,
                ))
            }
            SolvePath::Full => {
                let lu = self.direct_solver(s)?;
                let b = rhs.concat();
                let x = lu.solve(&b)?;
                let r = self.constrained.full_matrix(s).mul_vec(&x);
                let res = relative_difference(&r, &b);
                Ok((FieldState::from_concat(&x, self.spaces.sizes(), t), 0, res))
            }
        }
    }

    /// One backward-Euler step from `prev` to `t = prev.t + dt`.
    pub fn step(&self, prev: &FieldState, dt: f64, path: SolvePath, tol: f64) -> Result<(FieldState, StepDiagnostics)> {
        let t = prev.t + dt;
        let rhs = self.step_rhs(prev, t, dt)?;
        let (state, iterations, residual) = self.solve(&rhs, dt, t, path, tol)?;
        Ok((
            state,
            StepDiagnostics {
                step: 0,
                t,
                iterations,
                residual,
            },
        ))
    }

    /// Initial state according to the data's initial specification.
    pub fn initial_state(&self, path: SolvePath, tol: f64) -> Result<FieldState> {
        match &self.data.initial {
            InitialData::Zero => Ok(FieldState::zeros(&self.spaces, 0.0)),
            InitialData::Exact(fields) => self.elliptic_projection(fields.as_ref(), path, tol),
            InitialData::Pressure(p0) => self.pressure_initial_state(p0.as_ref()),
        }
    }

    /// Solves the stationary operator (the step operator with unit Darcy
    /// scale) against the image of continuous initial fields.
    pub fn elliptic_projection(&self, fields: &dyn InitialFields, path: SolvePath, tol: f64) -> Result<FieldState> {
        let mut rhs = assemble_sources(&self.mesh, &self.spaces, &self.data, 0.0, 1.0)?;
        rhs.b_p = self.mass_row_image(fields)?;
        let cons = Constraints::from_data(&self.mesh, &self.data, 0.0)?;
        lift_constraints(&self.blocks, &self.constrained.pinned_rotations, &cons, &mut rhs, 1.0)?;
        Ok(self.solve(&rhs, 1.0, 0.0, path, tol)?.0)
    }

    /// `c0 (p̃, w) + α(A(σ̃ + αp̃I), wI)_Q + (div z̃, w)` per cell.
    fn mass_row_image(&self, fields: &dyn InitialFields) -> Result<Vec<f64>> {
        let model = &self.model;
        let exact: Vec<f64> = cell_integrals(&self.mesh, SOURCE_ORDER, |x| {
            model.c0 * fields.pressure(x) + fields.div_velocity(x)
        })?;
        let rule = vertex_rule(self.mesh.cell_type);
        let mut out = exact;
        for (c, o) in out.iter_mut().enumerate() {
            let map = self.mesh.element_map(c)?;
            for (xh, w) in rule.iter() {
                let x = map.map(xh);
                let s = fields.stress(x) + Tensor::identity() * (model.alpha * fields.pressure(x));
                *o += model.alpha * w * map.det(xh) * model.compliance_apply(&s, x).trace();
            }
        }
        Ok(out)
    }

    /// Pressure-driven initial state: `p` = cell means of `p0`, displacement
    /// from the elasticity problem with that pressure, velocity from Darcy.
    fn pressure_initial_state(&self, p0: &(dyn Fn(Vec2) -> f64 + Send + Sync)) -> Result<FieldState> {
        let areas: Vec<f64> = (0..self.mesh.n_cells()).map(|c| self.mesh.cell_area(c)).collect();
        let ints: Vec<f64> = cell_integrals(&self.mesh, SOURCE_ORDER, p0)?;
        let p: Vec<f64> = ints.iter().zip(&areas).map(|(i, a)| i / a).collect();
        let mut rhs = assemble_sources(&self.mesh, &self.spaces, &self.data, 0.0, 1.0)?;
        let cons = Constraints::from_data(&self.mesh, &self.data, 0.0)?;
        lift_constraints(&self.blocks, &self.constrained.pinned_rotations, &cons, &mut rhs, 1.0)?;
        let red = self.reduced_system(1.0)?;
        let rr = red.reduce_rhs(&rhs);
        let mut b = rr.rhs1.clone();
        crate::sparse::axpy(-1.0, &red.a12.mul_vec(&p), &mut b);
        let u = red.solve_a11(&b);
        let rec = recover_fields(&red, &self.locals, &rhs, &rr, &u, &p);
        Ok(FieldState {
            t: 0.0,
            sigma: rec.sigma,
            u,
            gamma: rec.gamma,
            z: rec.z,
            p,
        })
    }

    /// Discrete steady state at time `t`: the mass equation reduces to
    /// `(div z, w) = (q, w)`. Solved directly.
    pub fn stationary_state(&self, t: f64) -> Result<FieldState> {
        let c = &self.constrained;
        let [ns, _, _, _, np] = c.sizes;
        let off_p = c.sizes[..4].iter().sum::<usize>();
        // drop the storage terms (Asp, App) from the mass rows
        let m = c.full_matrix(1.0).filter(|i, j, _| i < off_p || (j >= ns && j < off_p));
        let mut rhs = assemble_sources(&self.mesh, &self.spaces, &self.data, t, 1.0)?;
        let cons = Constraints::from_data(&self.mesh, &self.data, t)?;
        let without_storage = BlockSystem {
            asp: Csr::zeros(np, ns),
            ..self.blocks.clone()
        };
        lift_constraints(&without_storage, &c.pinned_rotations, &cons, &mut rhs, 1.0)?;
        let x = Lu::new(&m)?.solve(&rhs.concat())?;
        Ok(FieldState::from_concat(&x, self.spaces.sizes(), t))
    }

    /// Runs the whole grid from the initial state.
    pub fn run(&self, grid: &TimeGrid, path: SolvePath, tol: f64) -> Result<Trajectory> {
        let init = self.initial_state(path, tol)?;
        self.run_from(init, grid, path, tol, |_, _| Ok(()))
    }

    /// Runs from a given state, calling `observe` after each step.
    pub fn run_from(
        &self,
        init: FieldState,
        grid: &TimeGrid,
        path: SolvePath,
        tol: f64,
        mut observe: impl FnMut(&FieldState, &StepDiagnostics) -> Result<()>,
    ) -> Result<Trajectory> {
        let mut states = vec![init];
        let mut diagnostics = Vec::with_capacity(grid.n_steps());
        for n in 1..=grid.n_steps() {
            let prev = states.last().unwrap();
            let dt = grid.dt(n);
            let (mut next, mut diag) = self.step(prev, dt, path, tol)?;
            next.t = grid.times()[n];
            diag.step = n;
            diag.t = next.t;
            observe(&next, &diag)?;
            states.push(next);
            diagnostics.push(diag);
        }
        Ok(Trajectory { states, diagnostics })
    }

    /// Residual of the mass balance summed over the domain, relative to the
    /// sum of magnitudes of its terms.
    pub fn mass_balance(&self, prev: &FieldState, next: &FieldState, dt: f64) -> Result<BalanceReport> {
        let b = &self.blocks;
        let ds: Vec<f64> = next.sigma.iter().zip(&prev.sigma).map(|(a, b)| a - b).collect();
        let dp: Vec<f64> = next.p.iter().zip(&prev.p).map(|(a, b)| a - b).collect();
        let t1 = b.asp.mul_vec(&ds);
        let t2 = b.app.mul_vec(&dp);
        let t3 = b.azp.mul_vec(&next.z);
        let q = &self.data.fluid_source;
        let qs: Vec<f64> = cell_integrals(&self.mesh, SOURCE_ORDER, |x| q(x, next.t))?;
        let per_cell = (0..qs.len()).map(|c| [t1[c], t2[c], -dt * t3[c], -dt * qs[c]]);
        Ok(BalanceReport::from_terms(per_cell))
    }

    /// `(div σ + f, v)` per cell, relative to the magnitudes of its terms.
    pub fn momentum_balance(&self, state: &FieldState) -> Result<BalanceReport> {
        let div = self.blocks.asu.mul_vec(&state.sigma);
        let f = &self.data.body_force;
        let fs: Vec<Vec2> = cell_integrals(&self.mesh, SOURCE_ORDER, |x| f(x, state.t))?;
        let mag = abs_row_products(&self.blocks.asu, &state.sigma);
        // one row per cell and component; the residual is div σ + f
        let rows = (0..2 * fs.len()).map(|i| {
            let (c, k) = (i / 2, i % 2);
            [div[i], fs[c][k], mag[i] - div[i].abs()]
        });
        Ok(BalanceReport::from_rows(rows))
    }
}

fn abs_row_products(m: &Csr, x: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| {
            let (cols, vals) = m.row(i);
            cols.iter().zip(vals).map(|(&j, &v)| (v * x[j]).abs()).sum()
        })
        .collect()
}

/// Relative balance residuals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BalanceReport {
    /// Domain-summed residual over the summed term magnitudes.
    pub global: f64,
    /// Largest per-cell residual over the largest per-cell term magnitude.
    pub max_cell: f64,
}

impl BalanceReport {
    /// Each item lists the signed terms of one cell's balance.
    pub fn from_terms<const N: usize>(cells: impl Iterator<Item = [f64; N]>) -> Self {
        Self::from_rows(cells.map(|t| {
            let r: f64 = t.iter().sum();
            let mag: f64 = t.iter().map(|x| x.abs()).sum();
            [r, 0.0, mag - r.abs()]
        }))
    }

    /// Each item is `[a, b, extra]`: the residual is `a + b` and the term
    /// magnitude `|a| + |b| + extra`.
    fn from_rows(rows: impl Iterator<Item = [f64; 3]>) -> Self {
        let (mut total, mut scale, mut worst, mut biggest) = (0.0, 0.0, 0.0f64, 0.0f64);
        for [a, b, extra] in rows {
            let r = a + b;
            let s = a.abs() + b.abs() + extra;
            total += r;
            scale += s;
            worst = worst.max(r.abs());
            biggest = biggest.max(s);
        }
        let ratio = |x: f64, y: f64| if y > 0.0 { x / y } else { 0.0 };
        Self {
            global: ratio(total.abs(), scale),
            max_cell: ratio(worst, biggest),
        }
    }
}
