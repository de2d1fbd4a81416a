//! The `converge` and `run` commands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use msmfe_core::mesh::refine_uniform;
use msmfe_core::verify::{self, checkerboard_indicator, ConvergenceTable, Norm};
use msmfe_core::{SolvePath, Stepper};

use crate::config::{PathChoice, RunConfig};
use crate::error::CliError;
use crate::setup::{setup, study};
use crate::vtk;

/// Rates below this make `converge` exit nonzero.
pub const MIN_RATE: f64 = 0.8;

/// Outcome of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Some observed rate fell below [`MIN_RATE`].
    RateBelowThreshold,
}

fn log(msg: &str) {
    eprintln!("msmfe: {msg}");
}

/// Convergence study: writes `errors.csv` and `rates.txt` into the output
/// directory.
pub fn converge(cfg: &RunConfig) -> Result<Status, CliError> {
    let st = study(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let mut mesh = st.base.clone();
    let mut reports = Vec::with_capacity(cfg.levels);
    let mut discrepancies = Vec::new();
    for level in 0..cfg.levels {
        if level > 0 {
            mesh = refine_uniform(&mesh);
        }
        let h = st.base_h / f64::powi(2.0, level as i32);
        log(&format!("level {level}: {} cells, h = {h}", mesh.n_cells()));
        let stepper = Stepper::new(&mesh, st.problem.model.clone(), st.problem.data.clone())?;
        let traj = stepper.run(&st.problem.grid, cfg.path.primary(), cfg.tol)?;
        let mut report = verify::compute_errors(&st.problem, &traj, &stepper)?;
        report.h = h;
        if cfg.path == PathChoice::Both {
            let full = stepper.run(&st.problem.grid, SolvePath::Full, cfg.tol)?;
            let d = traj
                .states
                .iter()
                .zip(&full.states)
                .map(|(a, b)| a.max_relative_difference(b))
                .fold(0.0, f64::max);
            discrepancies.push((h, d));
        }
        reports.push(report);
    }
    let table = ConvergenceTable::from_reports(&reports);
    fs::write(cfg.out.join("errors.csv"), errors_csv(&table, &discrepancies))?;
    let (summary, worst) = rate_summary(&table);
    print!("{summary}");
    fs::write(cfg.out.join("rates.txt"), &summary)?;
    Ok(match worst {
        Some(r) if r < MIN_RATE => {
            log(&format!("lowest observed rate {r:.3} is below {MIN_RATE}"));
            Status::RateBelowThreshold
        }
        _ => Status::Ok,
    })
}

/// The error table, with a `discrepancy` column (reduced vs full, maximum
/// over all steps) when both paths were run.
fn errors_csv(table: &ConvergenceTable, discrepancies: &[(f64, f64)]) -> String {
    if discrepancies.is_empty() {
        return table.to_csv();
    }
    let mut s = String::from("h,field,norm,error,rate,discrepancy\n");
    let body = table.to_csv();
    for (line, row) in body.lines().skip(1).zip(&table.rows) {
        let d = discrepancies
            .iter()
            .find(|(h, _)| *h == row.h)
            .map(|(_, d)| format!("{d:.6e}"))
            .unwrap_or_default();
        let _ = writeln!(s, "{line},{d}");
    }
    s
}

/// Human-readable per-field rates and the lowest rate, if any.
fn rate_summary(table: &ConvergenceTable) -> (String, Option<f64>) {
    let mut s = String::new();
    let mut worst: Option<f64> = None;
    for norm in [Norm::L2L2, Norm::LinfL2] {
        for field in verify::FIELDS {
            let rows = table.series(field, norm);
            let cols: Vec<String> = rows
                .iter()
                .map(|r| match r.rate {
                    Some(rate) => format!("{:.3e} ({rate:.2})", r.error),
                    None => format!("{:.3e}", r.error),
                })
                .collect();
            let _ = writeln!(s, "{field:>9} {:>6}: {}", norm.name(), cols.join("  "));
            if let Some(m) = table.min_rate(field, norm) {
                worst = Some(worst.map_or(m, |w| w.min(m)));
            }
        }
    }
    match worst {
        Some(w) => {
            let _ = writeln!(s, "lowest rate: {w:.3}");
        }
        None => s.push_str("single level: no rates\n"),
    }
    (s, worst)
}

/// Time-dependent run: VTK snapshots every `snapshot_every` steps plus
/// `diagnostics.csv`.
pub fn run(cfg: &RunConfig) -> Result<Status, CliError> {
    let s = setup(cfg)?;
    fs::create_dir_all(&cfg.out)?;
    let stepper = Stepper::new(&s.mesh, s.model, s.data)?;
    log(&format!(
        "{}: {} {} cells, {} steps",
        s.name,
        s.mesh.n_cells(),
        s.mesh.cell_type.name(),
        s.grid.n_steps()
    ));
    let primary = cfg.path.primary();
    let init = stepper.initial_state(primary, cfg.tol)?;
    let mut check = match cfg.path {
        PathChoice::Both => Some(init.clone()),
        PathChoice::One(_) => None,
    };
    let mut csv =
        String::from("step,t,iterations,residual,checkerboard_count,checkerboard_alternating,oscillation_ratio");
    csv.push_str(if check.is_some() { ",discrepancy\n" } else { "\n" });
    let out: &Path = &cfg.out;
    stepper.run_from(init, &s.grid, primary, cfg.tol, |state, diag| {
        let cb = checkerboard_indicator(&state.p, &stepper.mesh);
        let _ = write!(
            csv,
            "{},{:e},{},{:e},{},{},{:e}",
            diag.step, diag.t, diag.iterations, diag.residual, cb.count, cb.alternating, cb.ratio
        );
        if let Some(prev) = check.as_mut() {
            let (next, _) = stepper.step(prev, s.grid.dt(diag.step), SolvePath::Full, cfg.tol)?;
            let _ = write!(csv, ",{:e}", state.max_relative_difference(&next));
            *prev = next;
        }
        csv.push('\n');
        if diag.step % cfg.snapshot_every == 0 || diag.step == s.grid.n_steps() {
            let fields = vtk::cell_fields(&stepper.mesh, &stepper.spaces, state)?;
            let title = format!("{} step {} t={:e}", s.name, diag.step, diag.t);
            let path = out.join(format!("{}_{:04}.vtk", s.name, diag.step));
            fs::write(path, vtk::render(&stepper.mesh, &fields, &title))?;
        }
        Ok(())
    })?;
    fs::write(out.join("diagnostics.csv"), csv)?;
    Ok(Status::Ok)
}
