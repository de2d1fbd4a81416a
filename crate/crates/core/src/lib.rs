//! Coupled multipoint stress / multipoint flux mixed finite elements for the
//! quasi-static Biot poroelasticity system in two dimensions.
//!
//! The five unknowns are stress σ (BDM1, row-wise), displacement u (piecewise
//! constant), rotation γ (continuous linear/bilinear scalar), Darcy velocity z
//! (BDM1) and pressure p (piecewise constant). A vertex quadrature rule makes
//! the stress and velocity mass matrices block-diagonal around mesh vertices,
//! so σ, z and γ can be eliminated locally, leaving a cell-centred
//! displacement–pressure system with three unknowns per cell.
//!
//! Typical use:
//!
//! ```no_run
//! use msmfe_core::{presets, timestep::{Stepper, SolvePath}, verify};
//!
//! let problem = presets::example2();
//! let mesh = presets::example2_mesh(1).unwrap();
//! let stepper = Stepper::new(&mesh, problem.model.clone(), problem.data.clone()).unwrap();
//! let traj = stepper.run(&problem.grid, SolvePath::Reduced, 1e-10).unwrap();
//! let report = verify::compute_errors(&problem, &traj, &stepper).unwrap();
//! println!("{:?}", report.get("p", verify::Norm::L2L2));
//! ```

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the formulas
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod assembly;
pub mod dual;
pub mod error;
pub mod krylov;
pub mod material;
pub mod mesh;
pub mod mesh_io;
pub mod presets;
pub mod quadrature;
pub mod reduction;
pub mod spaces;
pub mod sparse;
pub mod timestep;
pub mod verify;

pub use error::{Error, Result};
pub use material::{MaterialModel, SourceData};
pub use mesh::{CellType, Mesh, Rect};
pub use spaces::{DofMap, FeSpaces, SpaceKind};
pub use timestep::{FieldState, SolvePath, Stepper, TimeGrid};

/// Point or vector in the plane.
pub type Vec2 = nalgebra::Vector2<f64>;
/// 2×2 tensor.
pub type Tensor = nalgebra::Matrix2<f64>;

/// Number of worker threads requested through `MSMFE_THREADS`, if set.
pub fn thread_limit_from_env() -> Option<usize> {
    std::env::var("MSMFE_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Installs a global rayon pool capped by `MSMFE_THREADS`. Later calls are no-ops.
pub fn init_thread_pool() {
    if let Some(n) = thread_limit_from_env() {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}
