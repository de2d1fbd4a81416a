//! Turns a [`RunConfig`] into meshes, materials, data and time grids.

use std::collections::BTreeSet;

use msmfe_core::mesh::{build_rectangle_mesh, distort_example2};
use msmfe_core::presets::{self, HomogeneousParams, CANTILEVER_PARAMS, FOOTING_PARAMS};
use msmfe_core::verify::{make_with, Example2Solution, ManufacturedProblem};
use msmfe_core::{mesh_io, CellType, MaterialModel, Mesh, Rect, SourceData, TimeGrid};

use crate::config::{ExperimentKind, MeshSource, RunConfig};
use crate::error::CliError;

/// Everything needed to run one experiment.
pub struct Setup {
    pub name: String,
    pub mesh: Mesh,
    pub model: MaterialModel,
    pub data: SourceData,
    pub grid: TimeGrid,
}

/// A manufactured problem and the coarsest mesh of its refinement sequence.
pub struct Study {
    pub problem: ManufacturedProblem,
    pub base: Mesh,
    pub base_h: f64,
}

fn grid(cfg: &RunConfig, t_final: f64, dt: f64) -> Result<TimeGrid, CliError> {
    let (t, dt) = (cfg.t_final.unwrap_or(t_final), cfg.dt.unwrap_or(dt));
    TimeGrid::uniform(t, dt).map_err(|e| CliError::Config(e.to_string()))
}

fn load_mesh(path: &std::path::Path) -> Result<Mesh, CliError> {
    mesh_io::read_mesh(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Manufactured problem with its base mesh; fails for experiments without
/// a closed-form solution.
pub fn study(cfg: &RunConfig) -> Result<Study, CliError> {
    let default_cell = match cfg.experiment {
        ExperimentKind::Example2 => CellType::Quadrilateral,
        ExperimentKind::SimplicialMms => CellType::Triangle,
        other => {
            return Err(CliError::Config(format!(
                "'{}' has no exact solution; convergence studies need example2 or simplicial_mms",
                other.name()
            )))
        }
    };
    let cell = cfg.cell.unwrap_or(default_cell);
    let mut problem = make_with(Example2Solution::default(), cell, cfg.experiment.name());
    problem.grid = grid(cfg, problem.grid.final_time(), problem.grid.dt(1))?;

    let (base, base_h) = match &cfg.mesh {
        MeshSource::File(p) => {
            let m = load_mesh(p)?;
            let h = m.max_diameter();
            (m, h)
        }
        MeshSource::Generated => {
            let distort = cfg.experiment == ExperimentKind::Example2;
            match (cfg.nx, cell) {
                (None, CellType::Quadrilateral) if distort => (presets::example2_mesh(1)?, presets::example2_h(1)),
                (nx, _) => {
                    let nx = nx.unwrap_or(8);
                    let ny = cfg.ny.unwrap_or(nx);
                    let m = build_rectangle_mesh(Rect::UNIT, nx, ny, cell)?;
                    let m = if distort { distort_example2(&m) } else { m };
                    (m, 1.0 / nx.min(ny) as f64)
                }
            }
        }
    };
    if base.cell_type != cell {
        return Err(CliError::Config(format!(
            "mesh has {} cells but cell = {}",
            base.cell_type.name(),
            cell.name()
        )));
    }
    Ok(Study { problem, base, base_h })
}

fn material(cfg: &RunConfig, defaults: HomogeneousParams) -> Result<MaterialModel, CliError> {
    let model = match cfg.material.as_deref() {
        Some("example2") => Example2Solution::default().material(),
        Some("example3") => FOOTING_PARAMS.model(),
        Some("example4") => CANTILEVER_PARAMS.model(),
        Some(other) => return Err(CliError::Config(format!("unknown material preset '{other}'"))),
        None => {
            let o = &cfg.overrides;
            HomogeneousParams {
                young: o.young.unwrap_or(defaults.young),
                poisson: o.poisson.unwrap_or(defaults.poisson),
                permeability: o.permeability.unwrap_or(defaults.permeability),
                c0: o.c0.unwrap_or(defaults.c0),
                alpha: o.alpha.unwrap_or(defaults.alpha),
            }
            .model()
        }
    };
    model.map_err(|e| CliError::Config(e.to_string()))
}

/// Experiment set-up for a time-dependent run.
pub fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let name = cfg.experiment.name().to_string();
    match cfg.experiment {
        ExperimentKind::Example2 | ExperimentKind::SimplicialMms => {
            let s = study(cfg)?;
            Ok(Setup {
                name,
                mesh: s.base,
                model: s.problem.model,
                data: s.problem.data,
                grid: s.problem.grid,
            })
        }
        ExperimentKind::Footing => {
            let ex = presets::footing(
                cfg.nx.unwrap_or(24),
                cfg.ny.unwrap_or(18),
                cfg.cell.unwrap_or(CellType::Quadrilateral),
            )?;
            Ok(Setup {
                name,
                model: material(cfg, FOOTING_PARAMS)?,
                grid: grid(cfg, ex.grid.final_time(), ex.grid.dt(1))?,
                mesh: ex.mesh,
                data: ex.data,
            })
        }
        ExperimentKind::Cantilever => {
            let n = cfg.nx.unwrap_or(16);
            if cfg.ny.is_some_and(|ny| ny != n) {
                return Err(CliError::Config("the cantilever mesh is square; set nx only".into()));
            }
            let ex = presets::cantilever(n, cfg.cell.unwrap_or(CellType::Quadrilateral))?;
            Ok(Setup {
                name,
                model: material(cfg, CANTILEVER_PARAMS)?,
                grid: grid(cfg, ex.grid.final_time(), ex.grid.dt(1))?,
                mesh: ex.mesh,
                data: ex.data,
            })
        }
        ExperimentKind::Custom => {
            let mesh = match &cfg.mesh {
                MeshSource::File(p) => load_mesh(p)?,
                MeshSource::Generated => {
                    let nx = cfg.nx.unwrap_or(8);
                    build_rectangle_mesh(
                        Rect::UNIT,
                        nx,
                        cfg.ny.unwrap_or(nx),
                        cfg.cell.unwrap_or(CellType::Quadrilateral),
                    )?
                }
            };
            // no sources; every boundary segment clamped and drained
            let tags: BTreeSet<&str> = mesh.boundary_tags.values().map(String::as_str).collect();
            let tags: Vec<&str> = tags.into_iter().collect();
            let data = SourceData::zero().clamped(&tags).drained(&tags);
            Ok(Setup {
                name,
                model: material(cfg, CANTILEVER_PARAMS)?,
                grid: grid(cfg, 1.0, 0.1)?,
                mesh,
                data,
            })
        }
    }
}
