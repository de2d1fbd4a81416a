//! Built-in experiments: the smooth manufactured problems, the footing
//! problem and the cantilever bracket.

use std::sync::Arc;

use crate::error::Result;
use crate::material::{lame_from_young_poisson, FlowBc, MaterialModel, MechanicalBc, SourceData};
use crate::mesh::{build_rectangle_mesh, distort_example2, refine_uniform, CellType, Mesh, Rect};
use crate::timestep::TimeGrid;
use crate::verify::{make_example2, make_simplicial_mms, ManufacturedProblem};
use crate::{Tensor, Vec2};

/// Manufactured problem on distorted quadrilaterals.
pub fn example2() -> ManufacturedProblem {
    make_example2()
}

/// Manufactured problem on triangles.
pub fn simplicial_mms() -> ManufacturedProblem {
    make_simplicial_mms()
}

/// Nominal mesh size of [`example2_mesh`] at `level`.
pub fn example2_h(level: usize) -> f64 {
    0.25 / f64::powi(2.0, level as i32)
}

/// The distorted 4×4 coarse grid refined `level` times (`h = 1/(4·2^level)`).
pub fn example2_mesh(level: usize) -> Result<Mesh> {
    let coarse = build_rectangle_mesh(Rect::UNIT, 4, 4, CellType::Quadrilateral)?;
    let mut mesh = distort_example2(&coarse);
    for _ in 0..level {
        mesh = refine_uniform(&mesh);
    }
    Ok(mesh)
}

/// Structured triangle mesh of the unit square with `n × n` squares.
pub fn simplicial_mesh(n: usize) -> Result<Mesh> {
    build_rectangle_mesh(Rect::UNIT, n, n, CellType::Triangle)
}

/// A problem without a closed-form solution.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub name: String,
    pub mesh: Mesh,
    pub model: MaterialModel,
    pub data: SourceData,
    pub grid: TimeGrid,
}

/// Homogeneous isotropic material with scalar permeability.
pub fn homogeneous(e: f64, nu: f64, k: f64, c0: f64, alpha: f64) -> Result<MaterialModel> {
    let (mu, lambda) = lame_from_young_poisson(e, nu)?;
    MaterialModel::constant(mu, lambda, k, c0, alpha)
}

/// Constants of a homogeneous material.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomogeneousParams {
    pub young: f64,
    pub poisson: f64,
    pub permeability: f64,
    pub c0: f64,
    pub alpha: f64,
}

impl HomogeneousParams {
    pub fn model(&self) -> Result<MaterialModel> {
        homogeneous(self.young, self.poisson, self.permeability, self.c0, self.alpha)
    }
}

pub const FOOTING_PARAMS: HomogeneousParams = HomogeneousParams {
    young: 3e4,
    poisson: 0.4995,
    permeability: 1e-4,
    c0: 1e-3,
    alpha: 1.0,
};

pub const CANTILEVER_PARAMS: HomogeneousParams = HomogeneousParams {
    young: 1e5,
    poisson: 0.4,
    permeability: 1e-7,
    c0: 0.0,
    alpha: 0.93,
};

/// Footing parameters.
pub const FOOTING_LOAD: f64 = 1e4;
pub const FOOTING_DOMAIN: Rect = Rect {
    x0: -50.0,
    x1: 50.0,
    y0: 0.0,
    y1: 75.0,
};

pub fn footing_material() -> Result<MaterialModel> {
    FOOTING_PARAMS.model()
}

/// Soil block `[−50, 50] × [0, 75]` under a strip load on the middle third of
/// its top side; sides and bottom clamped, the whole boundary drained.
/// Top edges whose midpoint lies on the strip carry the load, so the strip
/// is resolved exactly when `nx` is a multiple of 3.
pub fn footing(nx: usize, ny: usize, cell_type: CellType) -> Result<Experiment> {
    let mut mesh = build_rectangle_mesh(FOOTING_DOMAIN, nx, ny, cell_type)?;
    let strip = 50.0 / 3.0;
    let top: Vec<usize> = mesh.edges_with_tag("top").collect();
    for e in top {
        let mid = mesh.edges[e].midpoint(&mesh.nodes);
        if mid.x.abs() < strip {
            mesh.boundary_tags.insert(e, "load".into());
        }
    }
    let data = SourceData::zero()
        .with_mechanical(
            &["load"],
            MechanicalBc::Traction(Arc::new(|_, _| Vec2::new(0.0, -FOOTING_LOAD))),
        )
        .with_mechanical(&["top"], MechanicalBc::Traction(Arc::new(|_, _| Vec2::zeros())))
        .clamped(&["left", "right", "bottom"])
        .drained(&["load", "top", "left", "right", "bottom"]);
    Ok(Experiment {
        name: "footing".into(),
        mesh,
        model: footing_material()?,
        data,
        grid: TimeGrid::uniform(50.0, 1.0)?,
    })
}

pub fn cantilever_material() -> Result<MaterialModel> {
    CANTILEVER_PARAMS.model()
}

/// Unit square, clamped on the left, unit downward traction on top,
/// traction-free bottom and right, no flow through any side.
pub fn cantilever(n: usize, cell_type: CellType) -> Result<Experiment> {
    let mesh = build_rectangle_mesh(Rect::UNIT, n, n, cell_type)?;
    let all = ["left", "right", "bottom", "top"];
    let data = SourceData::zero()
        .with_mechanical(&["top"], MechanicalBc::Traction(Arc::new(|_, _| Vec2::new(0.0, -1.0))))
        .with_mechanical(
            &["bottom", "right"],
            MechanicalBc::Traction(Arc::new(|_, _| Vec2::zeros())),
        )
        .clamped(&["left"])
        .with_flow(&all, FlowBc::NormalFlux(Arc::new(|_, _| 0.0)));
    Ok(Experiment {
        name: "cantilever".into(),
        mesh,
        model: cantilever_material()?,
        data,
        grid: TimeGrid::uniform(1.0, 1e-3)?,
    })
}

/// Isotropic permeability tensor.
pub fn isotropic(k: f64) -> Tensor {
    Tensor::identity() * k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example2_hierarchy_sizes() {
        for level in 0..3 {
            let m = example2_mesh(level).unwrap();
            assert_eq!(m.n_cells(), 16 * 4usize.pow(level as u32));
        }
        assert_eq!(example2_h(1), 0.125);
    }

    #[test]
    fn grids_have_the_stated_step_counts() {
        assert_eq!(example2().grid.n_steps(), 10);
        assert_eq!(footing(6, 6, CellType::Triangle).unwrap().grid.n_steps(), 50);
        assert_eq!(cantilever(4, CellType::Quadrilateral).unwrap().grid.n_steps(), 1000);
    }

    #[test]
    fn footing_load_strip_covers_middle_third() {
        let ex = footing(6, 3, CellType::Quadrilateral).unwrap();
        let len: f64 = ex.mesh.edges_with_tag("load").map(|e| ex.mesh.edges[e].length).sum();
        assert!((len - 100.0 / 3.0).abs() < 1e-10);
        let ex = footing(8, 8, CellType::Quadrilateral).unwrap();
        assert_eq!(ex.mesh.edges_with_tag("load").count(), 2);
    }
}
