//! Manufactured solutions, discrete-in-time error norms, convergence tables
//! and pressure-oscillation indicators.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;

use crate::dual::{Dual2, Real};
use crate::error::{Error, Result};
use crate::material::{
    lame_from_young_poisson, FlowBc, InitialData, InitialFields, MaterialModel, MechanicalBc, SourceData,
};
use crate::mesh::{CellType, Mesh};
use crate::quadrature::gauss_rule;
use crate::spaces::{eval_rotation, eval_stress, eval_velocity, physical_bdm1, FeSpaces};
use crate::timestep::{FieldState, SolvePath, Stepper, TimeGrid, Trajectory};
use crate::{Tensor, Vec2};

/// Gauss order of the error integrals.
pub const ERROR_ORDER: usize = 5;

/// Field names, in report order.
pub const FIELDS: [&str; 7] = ["sigma", "div_sigma", "u", "gamma", "z", "div_z", "p"];

/// Every exact field and source at one space–time point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactValues {
    pub p: f64,
    pub u: Vec2,
    pub sigma: Tensor,
    pub div_sigma: Vec2,
    /// Scalar rotation `r` with `γ = [[0, r], [−r, 0]] = Skew(∇u)`.
    pub rotation: f64,
    pub z: Vec2,
    pub div_z: f64,
    pub f: Vec2,
    pub q: f64,
}

impl ExactValues {
    pub fn gamma(&self) -> Tensor {
        crate::spaces::skew(self.rotation)
    }
}

/// A closed-form solution of the Biot system together with its sources.
pub trait ExactSolution: Send + Sync {
    fn eval(&self, x: Vec2, t: f64) -> ExactValues;
}

/// How the manufactured fields depend on time.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeProfile {
    /// Fields scale with `eᵗ`.
    Exponential,
    /// Fields are frozen at their `t = 0` shape.
    Steady,
}

/// The smooth manufactured solution on the unit square:
/// `p = eᵗ(sin πx cos πy + 10)`, a polynomial/trigonometric displacement, a
/// full spatially varying permeability and a Young's modulus
/// `E = sin 5πx sin 5πy + 5` with fixed Poisson ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Example2Solution {
    pub c0: f64,
    pub alpha: f64,
    pub nu: f64,
    pub profile: TimeProfile,
}

impl Default for Example2Solution {
    fn default() -> Self {
        Self {
            c0: 1e-5,
            alpha: 1.0,
            nu: 0.2,
            profile: TimeProfile::Exponential,
        }
    }
}

impl Example2Solution {
    fn time_factor<T: Real>(&self, t: T) -> T {
        match self.profile {
            TimeProfile::Exponential => t.exp(),
            TimeProfile::Steady => t * 0.0 + 1.0,
        }
    }

    pub fn pressure_generic<T: Real>(&self, x: T, y: T, t: T) -> T {
        let pi = std::f64::consts::PI;
        self.time_factor(t) * ((x * pi).sin() * (y * pi).cos() + 10.0)
    }

    pub fn displacement_generic<T: Real>(&self, x: T, y: T, t: T) -> [T; 2] {
        let e = self.time_factor(t);
        let one = T::cst(1.0);
        let (ox, oy) = (one - x, one - y);
        let u0 = x.powi(3) * y.powi(4) + x.powi(2) + (ox * oy).sin() * oy.cos();
        let u1 = ox.powi(4) * oy.powi(3) + oy.powi(2) + (x * y).cos() * x.sin();
        [e * u0, e * u1]
    }

    pub fn young_generic<T: Real>(x: T, y: T) -> T {
        let pi = std::f64::consts::PI;
        (x * (5.0 * pi)).sin() * (y * (5.0 * pi)).sin() + 5.0
    }

    pub fn permeability_generic<T: Real>(x: T, y: T) -> [[T; 2]; 2] {
        let xp = x + 1.0;
        let off = (x * y).sin();
        [[xp * xp + y * y, off], [off, xp * xp]]
    }

    pub fn young(x: Vec2) -> f64 {
        Self::young_generic(x.x, x.y)
    }

    pub fn permeability(x: Vec2) -> Tensor {
        let k = Self::permeability_generic(x.x, x.y);
        Tensor::new(k[0][0], k[0][1], k[1][0], k[1][1])
    }

    pub fn lame(&self, x: Vec2) -> (f64, f64) {
        lame_from_young_poisson(Self::young(x), self.nu).expect("Poisson ratio validated on construction")
    }

    pub fn material(&self) -> Result<MaterialModel> {
        lame_from_young_poisson(1.0, self.nu)?;
        let (a, b) = (*self, *self);
        let model = MaterialModel {
            mu: Arc::new(move |x| a.lame(x).0),
            lambda: Arc::new(move |x| b.lame(x).1),
            perm: Arc::new(Self::permeability),
            c0: self.c0,
            alpha: self.alpha,
        };
        model.check_constants()?;
        Ok(model)
    }
}

impl ExactSolution for Example2Solution {
    fn eval(&self, x: Vec2, t: f64) -> ExactValues {
        let (dx, dy, dt) = Dual2::vars(x.x, x.y, t);
        let p = self.pressure_generic(dx, dy, dt);
        let u = self.displacement_generic(dx, dy, dt);
        let e = Self::young_generic(dx, dy);
        let nu = self.nu;
        let mu = e * (1.0 / (2.0 * (1.0 + nu)));
        let lambda = e * (nu / ((1.0 + nu) * (1.0 - 2.0 * nu)));
        let k = Self::permeability_generic(dx, dy);

        // grad[i][j] = ∂_j u_i
        let grad = [[u[0].g[0], u[0].g[1]], [u[1].g[0], u[1].g[1]]];
        let div_u = grad[0][0] + grad[1][1];
        let eps = |i: usize, j: usize| 0.5 * (grad[i][j] + grad[j][i]);
        // ∂_j ε_ij and ∂_j div u
        let d_eps = |i: usize, j: usize| 0.5 * (u[i].h[j][j] + u[j].h[i][j]);
        let d_div = |j: usize| u[0].h[0][j] + u[1].h[1][j];

        let mut sigma = Tensor::zeros();
        let mut div_sigma = Vec2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                let delta = if i == j { 1.0 } else { 0.0 };
                sigma[(i, j)] = 2.0 * mu.v * eps(i, j) + delta * (lambda.v * div_u - self.alpha * p.v);
                div_sigma[i] += 2.0 * mu.g[j] * eps(i, j)
                    + 2.0 * mu.v * d_eps(i, j)
                    + delta * (lambda.g[j] * div_u + lambda.v * d_div(j) - self.alpha * p.g[j]);
            }
        }

        let mut z = Vec2::zeros();
        let mut div_z = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                z[i] -= k[i][j].v * p.g[j];
                div_z -= k[i][j].g[i] * p.g[j] + k[i][j].v * p.h[i][j];
            }
        }
        let dt_div_u = u[0].h[0][2] + u[1].h[1][2];
        let q = self.c0 * p.g[2] + self.alpha * dt_div_u + div_z;

        ExactValues {
            p: p.v,
            u: Vec2::new(u[0].v, u[1].v),
            sigma,
            div_sigma,
            rotation: 0.5 * (grad[0][1] - grad[1][0]),
            z,
            div_z,
            f: -div_sigma,
            q,
        }
    }
}

/// Exact fields frozen at one time, as initial data.
pub struct ExactAt {
    pub exact: Arc<dyn ExactSolution>,
    pub t: f64,
}

impl InitialFields for ExactAt {
    fn pressure(&self, x: Vec2) -> f64 {
        self.exact.eval(x, self.t).p
    }
    fn displacement(&self, x: Vec2) -> Vec2 {
        self.exact.eval(x, self.t).u
    }
    fn stress(&self, x: Vec2) -> Tensor {
        self.exact.eval(x, self.t).sigma
    }
    fn velocity(&self, x: Vec2) -> Vec2 {
        self.exact.eval(x, self.t).z
    }
    fn div_velocity(&self, x: Vec2) -> f64 {
        self.exact.eval(x, self.t).div_z
    }
}

/// Sources, Dirichlet data on every listed tag and projected initial data,
/// all taken from `exact`.
pub fn manufactured_data(exact: Arc<dyn ExactSolution>, tags: &[&str]) -> SourceData {
    let (e1, e2, e3, e4) = (exact.clone(), exact.clone(), exact.clone(), exact.clone());
    let data = SourceData {
        body_force: Arc::new(move |x, t| e1.eval(x, t).f),
        fluid_source: Arc::new(move |x, t| e2.eval(x, t).q),
        initial: InitialData::Exact(Arc::new(ExactAt { exact, t: 0.0 })),
        ..SourceData::zero()
    };
    data.with_mechanical(tags, MechanicalBc::Displacement(Arc::new(move |x, t| e3.eval(x, t).u)))
        .with_flow(tags, FlowBc::Pressure(Arc::new(move |x, t| e4.eval(x, t).p)))
}

/// A problem with a known solution.
#[derive(Clone)]
pub struct ManufacturedProblem {
    pub name: String,
    pub exact: Arc<dyn ExactSolution>,
    pub model: MaterialModel,
    pub data: SourceData,
    pub grid: TimeGrid,
    pub cell_type: CellType,
}

impl std::fmt::Debug for ManufacturedProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ManufacturedProblem")
            .field("name", &self.name)
            .field("cell_type", &self.cell_type)
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

const UNIT_SQUARE_TAGS: [&str; 4] = ["left", "right", "bottom", "top"];

/// The smooth solution on distorted quadrilaterals, `c0 = 10⁻⁵`, `α = 1`,
/// `T = 10⁻³`, `Δt = 10⁻⁴`.
pub fn make_example2() -> ManufacturedProblem {
    make_with(Example2Solution::default(), CellType::Quadrilateral, "example2")
}

/// The same solution and coefficients on triangle meshes.
pub fn make_simplicial_mms() -> ManufacturedProblem {
    make_with(Example2Solution::default(), CellType::Triangle, "simplicial_mms")
}

/// A manufactured problem for an arbitrary variant of the smooth solution.
pub fn make_with(sol: Example2Solution, cell_type: CellType, name: &str) -> ManufacturedProblem {
    let exact: Arc<dyn ExactSolution> = Arc::new(sol);
    ManufacturedProblem {
        name: name.to_string(),
        exact: exact.clone(),
        model: sol.material().expect("built-in parameters are valid"),
        data: manufactured_data(exact, &UNIT_SQUARE_TAGS),
        grid: TimeGrid::uniform(1e-3, 1e-4).expect("built-in grid is valid"),
        cell_type,
    }
}

/// Residuals of the strong equations at `(x, t)`, computed from
/// `exact.eval` by central finite differences with step `h`:
/// `[|div σ − (div σ)_fd|, |f + (div σ)_fd|, |z + K∇p_fd|, |div z − (div z)_fd|,
///   |q − c0 ∂ₜp − α ∂ₜ div u − div z|]`, each relative to `max(1, |term|)`.
pub fn strong_form_residuals(sol: &Example2Solution, x: Vec2, t: f64, h: f64) -> [f64; 5] {
    let at = |dx: f64, dy: f64, dt: f64| sol.eval(Vec2::new(x.x + dx, x.y + dy), t + dt);
    let v = at(0.0, 0.0, 0.0);
    let (xp, xm, yp, ym) = (at(h, 0.0, 0.0), at(-h, 0.0, 0.0), at(0.0, h, 0.0), at(0.0, -h, 0.0));
    let c = 2.0 * h;
    let div_sigma_fd = Vec2::new(
        (xp.sigma[(0, 0)] - xm.sigma[(0, 0)]) / c + (yp.sigma[(0, 1)] - ym.sigma[(0, 1)]) / c,
        (xp.sigma[(1, 0)] - xm.sigma[(1, 0)]) / c + (yp.sigma[(1, 1)] - ym.sigma[(1, 1)]) / c,
    );
    let grad_p_fd = Vec2::new((xp.p - xm.p) / c, (yp.p - ym.p) / c);
    let div_z_fd = (xp.z.x - xm.z.x) / c + (yp.z.y - ym.z.y) / c;
    // div u from the trace of the constitutive law: tr σ = 2(μ + λ) div u − 2αp
    let div_u = |s: &ExactValues, y: Vec2| {
        let (mu, lambda) = sol.lame(y);
        (s.sigma.trace() + 2.0 * sol.alpha * s.p) / (2.0 * (mu + lambda))
    };
    let (tp, tm) = (at(0.0, 0.0, h), at(0.0, 0.0, -h));
    let dt_p = (tp.p - tm.p) / c;
    let dt_div_u = (div_u(&tp, x) - div_u(&tm, x)) / c;
    let k = Example2Solution::permeability(x);
    let rel = |a: f64, scale: f64| a.abs() / scale.abs().max(1.0);
    [
        rel((v.div_sigma - div_sigma_fd).amax(), v.div_sigma.amax()),
        rel((v.f + div_sigma_fd).amax(), v.f.amax()),
        rel((v.z + k * grad_p_fd).amax(), v.z.amax()),
        rel(v.div_z - div_z_fd, v.div_z),
        rel(v.q - sol.c0 * dt_p - sol.alpha * dt_div_u - v.div_z, v.q),
    ]
}

/// Discrete-in-time norm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Norm {
    /// `(Σₙ Δtₙ ‖·‖²)^{1/2}` over `n = 1..N`.
    L2L2,
    /// `maxₙ ‖·‖` over `n = 0..N`.
    LinfL2,
}

impl Norm {
    pub fn name(self) -> &'static str {
        match self {
            Norm::L2L2 => "l2L2",
            Norm::LinfL2 => "linfL2",
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2L2" => Ok(Norm::L2L2),
            "linfL2" => Ok(Norm::LinfL2),
            other => Err(Error::InvalidArgument(format!("unknown norm '{other}'"))),
        }
    }
}

/// Squared L² norms of the error and of the exact field, per field.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StateErrors {
    pub error_sq: [f64; 7],
    pub exact_sq: [f64; 7],
}

impl StateErrors {
    /// Relative L² error of one field.
    pub fn relative(&self, field: &str) -> Option<f64> {
        let i = FIELDS.iter().position(|&f| f == field)?;
        Some(ratio(self.error_sq[i].sqrt(), self.exact_sq[i].sqrt()))
    }
}

fn ratio(e: f64, x: f64) -> f64 {
    if x > 0.0 {
        e / x
    } else {
        e
    }
}

/// L² errors of one discrete state against the exact fields at `state.t`.
pub fn state_errors(
    exact: &dyn ExactSolution,
    mesh: &Mesh,
    spaces: &FeSpaces,
    state: &FieldState,
) -> Result<StateErrors> {
    let rule = gauss_rule(mesh.cell_type, ERROR_ORDER)?;
    let per_cell: Vec<StateErrors> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|c| {
            let map = mesh.element_map(c)?;
            let mut acc = StateErrors::default();
            let uh = Vec2::new(state.u[2 * c], state.u[2 * c + 1]);
            let ph = state.p[c];
            for (xh, w) in rule.iter() {
                let basis = physical_bdm1(&map, xh);
                let wj = w * basis.det;
                let (sh, dsh) = eval_stress(&spaces.stress.cell_dofs[c], &basis, &state.sigma);
                let (zh, dzh) = eval_velocity(&spaces.velocity.cell_dofs[c], &basis, &state.z);
                let rh = eval_rotation(mesh.cell_type, &spaces.rotation.cell_dofs[c], xh, &state.gamma);
                let ex = exact.eval(map.map(xh), state.t);
                // the rotation is measured as the full skew tensor, hence the factor 2
                let pairs = [
                    ((ex.sigma - sh).norm_squared(), ex.sigma.norm_squared()),
                    ((ex.div_sigma - dsh).norm_squared(), ex.div_sigma.norm_squared()),
                    ((ex.u - uh).norm_squared(), ex.u.norm_squared()),
                    (2.0 * (ex.rotation - rh).powi(2), 2.0 * ex.rotation.powi(2)),
                    ((ex.z - zh).norm_squared(), ex.z.norm_squared()),
                    ((ex.div_z - dzh).powi(2), ex.div_z.powi(2)),
                    ((ex.p - ph).powi(2), ex.p.powi(2)),
                ];
                for (k, (e, x)) in pairs.into_iter().enumerate() {
                    acc.error_sq[k] += wj * e;
                    acc.exact_sq[k] += wj * x;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = StateErrors::default();
    for c in &per_cell {
        for k in 0..7 {
            total.error_sq[k] += c.error_sq[k];
            total.exact_sq[k] += c.exact_sq[k];
        }
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorEntry {
    pub field: &'static str,
    pub norm: Norm,
    pub error: f64,
}

/// Errors of a whole trajectory in both discrete-in-time norms.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub h: f64,
    pub relative: bool,
    pub entries: Vec<ErrorEntry>,
}

impl ErrorReport {
    pub fn get(&self, field: &str, norm: Norm) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.field == field && e.norm == norm)
            .map(|e| e.error)
    }
}

/// Accumulates per-state errors into the two time norms.
pub fn combine_errors(states: &[(f64, StateErrors)], h: f64, relative: bool) -> ErrorReport {
    let mut l2 = [0.0; 7];
    let mut l2x = [0.0; 7];
    let mut linf = [0.0f64; 7];
    let mut linfx = [0.0f64; 7];
    for (n, (_, s)) in states.iter().enumerate() {
        for k in 0..7 {
            linf[k] = linf[k].max(s.error_sq[k].sqrt());
            linfx[k] = linfx[k].max(s.exact_sq[k].sqrt());
        }
        if n > 0 {
            let dt = states[n].0 - states[n - 1].0;
            for k in 0..7 {
                l2[k] += dt * s.error_sq[k];
                l2x[k] += dt * s.exact_sq[k];
            }
        }
    }
    let mut entries = Vec::with_capacity(14);
    for (k, &field) in FIELDS.iter().enumerate() {
        let (e2, x2) = (l2[k].sqrt(), l2x[k].sqrt());
        let (ei, xi) = (linf[k], linfx[k]);
        let (a, b) = if relative {
            (ratio(e2, x2), ratio(ei, xi))
        } else {
            (e2, ei)
        };
        entries.push(ErrorEntry {
            field,
            norm: Norm::L2L2,
            error: a,
        });
        entries.push(ErrorEntry {
            field,
            norm: Norm::LinfL2,
            error: b,
        });
    }
    ErrorReport { h, relative, entries }
}

/// Relative errors of a trajectory against the problem's exact solution.
pub fn compute_errors(problem: &ManufacturedProblem, traj: &Trajectory, stepper: &Stepper) -> Result<ErrorReport> {
    compute_errors_with(problem.exact.as_ref(), traj, stepper, true)
}

/// Errors of a trajectory, relative or absolute.
pub fn compute_errors_with(
    exact: &dyn ExactSolution,
    traj: &Trajectory,
    stepper: &Stepper,
    relative: bool,
) -> Result<ErrorReport> {
    if traj.states.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let per_state = traj
        .states
        .iter()
        .map(|s| Ok((s.t, state_errors(exact, &stepper.mesh, &stepper.spaces, s)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine_errors(&per_state, stepper.mesh.max_diameter(), relative))
}

/// Coefficients of the canonical interpolant of the exact fields at time `t`:
/// normal components at edge endpoints for σ and z, vertex values for the
/// rotation and cell means for u and p.
pub fn interpolate(exact: &dyn ExactSolution, mesh: &Mesh, spaces: &FeSpaces, t: f64) -> Result<FieldState> {
    let mut state = FieldState::zeros(spaces, t);
    for (e, edge) in mesh.edges.iter().enumerate() {
        for (j, &v) in edge.vertices.iter().enumerate() {
            let ex = exact.eval(mesh.nodes[v], t);
            state.z[crate::spaces::velocity_dof(e, j)] = ex.z.dot(&edge.normal);
            let sn = ex.sigma * edge.normal;
            for row in 0..2 {
                state.sigma[crate::spaces::stress_dof(e, j, row)] = sn[row];
            }
        }
    }
    for (v, x) in mesh.nodes.iter().enumerate() {
        if v < state.gamma.len() {
            state.gamma[v] = exact.eval(*x, t).rotation;
        }
    }
    let rule = gauss_rule(mesh.cell_type, ERROR_ORDER)?;
    for c in 0..mesh.n_cells() {
        let map = mesh.element_map(c)?;
        let (mut u, mut p, mut area) = (Vec2::zeros(), 0.0, 0.0);
        for (xh, w) in rule.iter() {
            let wj = w * map.det(xh);
            let ex = exact.eval(map.map(xh), t);
            u += ex.u * wj;
            p += ex.p * wj;
            area += wj;
        }
        state.u[2 * c] = u.x / area;
        state.u[2 * c + 1] = u.y / area;
        state.p[c] = p / area;
    }
    Ok(state)
}

/// One row of a convergence table.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    pub field: &'static str,
    pub norm: Norm,
    pub error: f64,
    /// `log(e_coarse / e) / log(h_coarse / h)`; absent on the coarsest level.
    pub rate: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

/// Observed rate between two levels.
pub fn observed_rate(h_coarse: f64, e_coarse: f64, h_fine: f64, e_fine: f64) -> f64 {
    (e_coarse / e_fine).ln() / (h_coarse / h_fine).ln()
}

impl ConvergenceTable {
    /// Builds the table from reports ordered from coarse to fine. The `h` of
    /// each report is used as the mesh size.
    pub fn from_reports(reports: &[ErrorReport]) -> Self {
        let mut rows = Vec::new();
        for (l, rep) in reports.iter().enumerate() {
            for e in &rep.entries {
                let rate = (l > 0).then(|| {
                    let prev = &reports[l - 1];
                    let ec = prev.get(e.field, e.norm).unwrap_or(f64::NAN);
                    observed_rate(prev.h, ec, rep.h, e.error)
                });
                rows.push(ConvergenceRow {
                    h: rep.h,
                    field: e.field,
                    norm: e.norm,
                    error: e.error,
                    rate,
                });
            }
        }
        rows.sort_by(|a, b| {
            (FIELDS.iter().position(|&f| f == a.field), a.norm)
                .cmp(&(FIELDS.iter().position(|&f| f == b.field), b.norm))
                .then(b.h.total_cmp(&a.h))
        });
        Self { rows }
    }

    /// Rows for one field and norm, coarse to fine.
    pub fn series(&self, field: &str, norm: Norm) -> Vec<&ConvergenceRow> {
        self.rows
            .iter()
            .filter(|r| r.field == field && r.norm == norm)
            .collect()
    }

    /// Smallest rate over all levels for one field and norm.
    pub fn min_rate(&self, field: &str, norm: Norm) -> Option<f64> {
        self.series(field, norm).iter().filter_map(|r| r.rate).reduce(f64::min)
    }

    /// `h,field,norm,error,rate` with an empty rate on the coarsest level.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,field,norm,error,rate\n");
        for r in &self.rows {
            let rate = r.rate.map(|x| format!("{x:.6}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "{:.10e},{},{},{:.10e},{}",
                r.h,
                r.field,
                r.norm.name(),
                r.error,
                rate
            );
        }
        s
    }
}

/// Runs the problem on `base` and `levels − 1` uniform refinements of it.
/// `base_h` is the nominal mesh size of `base`; each refinement halves it.
pub fn convergence_study(
    problem: &ManufacturedProblem,
    base: &Mesh,
    base_h: f64,
    levels: usize,
    path: SolvePath,
    tol: f64,
) -> Result<ConvergenceTable> {
    if levels == 0 {
        return Err(Error::InvalidArgument(
            "convergence study needs at least one level".into(),
        ));
    }
    let mut mesh = base.clone();
    let mut reports = Vec::with_capacity(levels);
    for l in 0..levels {
        if l > 0 {
            mesh = crate::mesh::refine_uniform(&mesh);
        }
        let stepper = Stepper::new(&mesh, problem.model.clone(), problem.data.clone())?;
        let traj = stepper.run(&problem.grid, path, tol)?;
        let mut rep = compute_errors(problem, &traj, &stepper)?;
        rep.h = base_h / f64::powi(2.0, l as i32);
        reports.push(rep);
    }
    Ok(ConvergenceTable::from_reports(&reports))
}

/// Pressure-oscillation summary of a cellwise field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckerboardReport {
    /// Cells lying strictly above, or strictly below, every edge neighbour.
    /// Smooth fields peaking at a boundary cell are counted too.
    pub count: usize,
    /// Strict extrema whose every edge neighbour is a strict extremum of the
    /// opposite kind, i.e. cells taking part in an alternating pattern.
    pub alternating: usize,
    /// `Σ |p_L − p_R|` over interior edges, over `(max p − min p) · n_interior`.
    pub ratio: f64,
}

/// Counts strict-checkerboard cells and measures the jump oscillation ratio.
pub fn checkerboard_indicator(p: &[f64], mesh: &Mesh) -> CheckerboardReport {
    let (lo, hi) = p
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let range = hi - lo;
    if p.is_empty() || range <= 0.0 {
        return CheckerboardReport {
            count: 0,
            alternating: 0,
            ratio: 0.0,
        };
    }
    let thresh = 1e-8 * range;
    let nbrs: Vec<Vec<usize>> = (0..mesh.n_cells()).map(|c| mesh.edge_neighbors(c)).collect();
    // +1 strict local maximum, −1 strict local minimum, 0 otherwise
    let kind: Vec<i8> = (0..mesh.n_cells())
        .map(|c| {
            let diffs = nbrs[c].iter().map(|&n| p[c] - p[n]);
            if nbrs[c].is_empty() {
                0
            } else if diffs.clone().all(|d| d > thresh) {
                1
            } else if diffs.clone().all(|d| d < -thresh) {
                -1
            } else {
                0
            }
        })
        .collect();
    let count = kind.iter().filter(|&&k| k != 0).count();
    let alternating = (0..mesh.n_cells())
        .filter(|&c| kind[c] != 0 && nbrs[c].iter().all(|&n| kind[n] == -kind[c]))
        .count();
    let (mut jumps, mut n_int) = (0.0, 0usize);
    for e in &mesh.edges {
        if let [a, b] = e.cells[..] {
            jumps += (p[a] - p[b]).abs();
            n_int += 1;
        }
    }
    let ratio = if n_int > 0 { jumps / (range * n_int as f64) } else { 0.0 };
    CheckerboardReport {
        count,
        alternating,
        ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rectangle_mesh, distort_example2, Rect};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn pressure_point_value() {
        let s = Example2Solution::default();
        assert!((s.eval(Vec2::new(0.5, 0.0), 0.0).p - 11.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_tensor_has_zero_diagonal() {
        let s = Example2Solution::default();
        let g = s.eval(Vec2::new(0.2, 0.9), 0.3).gamma();
        assert_eq!(g[(0, 0)], 0.0);
        assert_eq!(g[(1, 1)], 0.0);
        assert_eq!(g[(0, 1)], -g[(1, 0)]);
    }

    #[test]
    fn momentum_residual_at_reference_point() {
        let s = Example2Solution::default();
        let r = strong_form_residuals(&s, Vec2::new(0.3, 0.7), 5e-4, 1e-6);
        assert!(r[1] <= 1e-8 * 100.0, "{r:?}");
    }

    #[test]
    fn derived_fields_match_finite_differences_at_random_points() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for (sol, name) in [
            (Example2Solution::default(), "transient"),
            (
                Example2Solution {
                    profile: TimeProfile::Steady,
                    ..Default::default()
                },
                "steady",
            ),
        ] {
            for _ in 0..100 {
                let x = Vec2::new(rng.random_range(0.05..0.95), rng.random_range(0.05..0.95));
                let t = rng.random_range(0.0..1e-3);
                let r = strong_form_residuals(&sol, x, t, 1e-6);
                for (k, v) in r.iter().enumerate() {
                    assert!(*v < 1e-6, "{name} residual {k} = {v} at {x:?}, t = {t}");
                }
            }
        }
    }

    #[test]
    fn constitutive_law_matches_finite_difference_strain() {
        // σ from the dual gradient against σ from differenced displacements
        let s = Example2Solution::default();
        let (x, t, h) = (Vec2::new(0.41, 0.63), 2e-4, 1e-6);
        let u = |dx: f64, dy: f64| s.eval(Vec2::new(x.x + dx, x.y + dy), t).u;
        let gx = (u(h, 0.0) - u(-h, 0.0)) / (2.0 * h);
        let gy = (u(0.0, h) - u(0.0, -h)) / (2.0 * h);
        let grad = Tensor::new(gx.x, gy.x, gx.y, gy.y);
        let eps = 0.5 * (grad + grad.transpose());
        let (mu, lambda) = s.lame(x);
        let v = s.eval(x, t);
        let sigma = 2.0 * mu * eps + Tensor::identity() * (lambda * eps.trace() - s.alpha * v.p);
        assert!((sigma - v.sigma).amax() < 1e-6 * v.sigma.amax());
        assert!((v.rotation - 0.5 * (grad[(0, 1)] - grad[(1, 0)])).abs() < 1e-8);
    }

    struct Constant;

    impl ExactSolution for Constant {
        fn eval(&self, _: Vec2, _: f64) -> ExactValues {
            ExactValues {
                p: 2.5,
                u: Vec2::new(-1.0, 0.5),
                sigma: Tensor::new(1.0, -2.0, 0.25, 3.0),
                div_sigma: Vec2::zeros(),
                rotation: 0.75,
                z: Vec2::new(0.3, -0.8),
                div_z: 0.0,
                f: Vec2::zeros(),
                q: 0.0,
            }
        }
    }

    #[test]
    fn interpolated_constant_fields_have_zero_error() {
        for cell in [CellType::Triangle, CellType::Quadrilateral] {
            let mesh = distort_example2(&build_rectangle_mesh(Rect::UNIT, 4, 4, cell).unwrap());
            let spaces = FeSpaces::new(&mesh);
            let st = interpolate(&Constant, &mesh, &spaces, 0.0).unwrap();
            let e = state_errors(&Constant, &mesh, &spaces, &st).unwrap();
            for (k, f) in FIELDS.iter().enumerate() {
                assert!(e.error_sq[k].sqrt() < 1e-12, "{cell:?} {f}: {}", e.error_sq[k]);
            }
        }
    }

    fn fake_report(h: f64, scale: f64, order: f64) -> ErrorReport {
        let entries = FIELDS
            .iter()
            .flat_map(|&field| {
                [Norm::L2L2, Norm::LinfL2].map(|norm| ErrorEntry {
                    field,
                    norm,
                    error: scale * h.powf(order),
                })
            })
            .collect();
        ErrorReport {
            h,
            relative: true,
            entries,
        }
    }

    #[test]
    fn synthetic_rates_are_recovered() {
        for order in [0.5, 1.0, 2.0] {
            let reports: Vec<_> = (0..4).map(|l| fake_report(0.125 / 2f64.powi(l), 3.7, order)).collect();
            let table = ConvergenceTable::from_reports(&reports);
            for f in FIELDS {
                for norm in [Norm::L2L2, Norm::LinfL2] {
                    let s = table.series(f, norm);
                    assert_eq!(s.len(), 4);
                    assert!(s[0].rate.is_none());
                    for r in &s[1..] {
                        assert!((r.rate.unwrap() - order).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn csv_has_header_and_one_row_per_entry() {
        let table = ConvergenceTable::from_reports(&[fake_report(0.5, 1.0, 1.0), fake_report(0.25, 1.0, 1.0)]);
        let csv = table.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "h,field,norm,error,rate");
        assert_eq!(lines.len(), 1 + 2 * 14);
        assert!(lines[1].ends_with(','));
        assert!(lines[2].ends_with("1.000000"));
    }

    #[test]
    fn linf_component_ignores_time_order() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let states: Vec<(f64, StateErrors)> = (0..6)
            .map(|n| {
                let mut s = StateErrors::default();
                for k in 0..7 {
                    s.error_sq[k] = rng.random::<f64>();
                    s.exact_sq[k] = 1.0 + rng.random::<f64>();
                }
                (n as f64 * 0.1, s)
            })
            .collect();
        let fwd = combine_errors(&states, 0.1, true);
        let times: Vec<f64> = states.iter().map(|(t, _)| *t).collect();
        let rev: Vec<(f64, StateErrors)> = times.into_iter().zip(states.iter().rev().map(|(_, s)| *s)).collect();
        let bwd = combine_errors(&rev, 0.1, true);
        for f in FIELDS {
            assert_eq!(fwd.get(f, Norm::LinfL2), bwd.get(f, Norm::LinfL2));
        }
    }

    #[test]
    fn checkerboard_examples() {
        let mesh = build_rectangle_mesh(Rect::UNIT, 4, 4, CellType::Quadrilateral).unwrap();
        let flat = checkerboard_indicator(&[3.0; 16], &mesh);
        assert_eq!(
            flat,
            CheckerboardReport {
                count: 0,
                alternating: 0,
                ratio: 0.0
            }
        );
        let board: Vec<f64> = (0..16)
            .map(|c| if (c % 4 + c / 4) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let r = checkerboard_indicator(&board, &mesh);
        assert_eq!(r.count, 16);
        assert_eq!(r.alternating, 16);
        assert!((r.ratio - 1.0).abs() < 1e-15);
        // a ramp peaking in a corner has two strict extrema but no alternation
        let ramp: Vec<f64> = (0..16).map(|c| (c % 4 + c / 4) as f64).collect();
        let r = checkerboard_indicator(&ramp, &mesh);
        assert_eq!((r.count, r.alternating), (2, 0));
    }

    proptest! {
        #[test]
        fn error_entries_are_nonnegative(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let states: Vec<(f64, StateErrors)> = (0..4).map(|n| {
                let mut s = StateErrors::default();
                for k in 0..7 {
                    s.error_sq[k] = rng.random::<f64>();
                    s.exact_sq[k] = rng.random::<f64>();
                }
                (n as f64, s)
            }).collect();
            for rel in [true, false] {
                let rep = combine_errors(&states, 1.0, rel);
                prop_assert!(rep.entries.iter().all(|e| e.error >= 0.0));
            }
        }

        #[test]
        fn checkerboard_ratio_is_scale_invariant(seed in 0u64..1000, a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let mesh = build_rectangle_mesh(Rect::UNIT, 3, 3, CellType::Triangle).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<f64> = (0..mesh.n_cells()).map(|_| rng.random::<f64>()).collect();
            let q: Vec<f64> = p.iter().map(|x| a * x + b).collect();
            let (r1, r2) = (checkerboard_indicator(&p, &mesh), checkerboard_indicator(&q, &mesh));
            prop_assert_eq!(r1.count, r2.count);
            prop_assert!((r1.ratio - r2.ratio).abs() < 1e-12);
        }
    }
}
