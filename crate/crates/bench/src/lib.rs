//! Fixtures shared by the solver benchmarks.

use msmfe_core::presets;
use msmfe_core::timestep::{FieldState, Stepper};
use msmfe_core::Result;

/// Assembled stepper for the manufactured quadrilateral problem at `level`
/// (`h = 1/(4·2^level)`), together with its initial state.
pub fn example2_fixture(level: usize) -> Result<(Stepper, FieldState)> {
    let problem = presets::example2();
    let mesh = presets::example2_mesh(level)?;
    let stepper = Stepper::new(&mesh, problem.model.clone(), problem.data.clone())?;
    let init = stepper.initial_state(msmfe_core::SolvePath::Full, 1e-10)?;
    Ok((stepper, init))
}
