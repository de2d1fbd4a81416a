//! Physical coefficients, the compliance operator and problem data.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::{Tensor, Vec2};

pub type ScalarField = Arc<dyn Fn(Vec2) -> f64 + Send + Sync>;
pub type TensorField = Arc<dyn Fn(Vec2) -> Tensor + Send + Sync>;
pub type ScalarFieldT = Arc<dyn Fn(Vec2, f64) -> f64 + Send + Sync>;
pub type VectorFieldT = Arc<dyn Fn(Vec2, f64) -> Vec2 + Send + Sync>;

/// Lamé parameters, permeability, storativity and Biot–Willis constant.
#[derive(Clone)]
pub struct MaterialModel {
    pub mu: ScalarField,
    pub lambda: ScalarField,
    pub perm: TensorField,
    pub c0: f64,
    pub alpha: f64,
}

impl fmt::Debug for MaterialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MaterialModel")
            .field("c0", &self.c0)
            .field("alpha", &self.alpha)
            .finish_non_exhaustive()
    }
}

impl MaterialModel {
    /// Constant coefficients with isotropic permeability `k·I`.
    pub fn constant(mu: f64, lambda: f64, k: f64, c0: f64, alpha: f64) -> Result<Self> {
        let m = Self {
            mu: Arc::new(move |_| mu),
            lambda: Arc::new(move |_| lambda),
            perm: Arc::new(move |_| Tensor::identity() * k),
            c0,
            alpha,
        };
        m.check_constants()?;
        m.check_at(Vec2::zeros())?;
        Ok(m)
    }

    /// Rejects `c0 < 0` and `α ∉ [0, 1]`.
    pub fn check_constants(&self) -> Result<()> {
        if !(self.c0 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "storativity c0 = {} must be ≥ 0",
                self.c0
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "Biot-Willis α = {} must lie in [0, 1]",
                self.alpha
            )));
        }
        Ok(())
    }

    /// Checks μ > 0, λ ≥ 0 and K symmetric positive definite at `x`.
    pub fn check_at(&self, x: Vec2) -> Result<()> {
        let (mu, lambda) = ((self.mu)(x), (self.lambda)(x));
        if !(mu > 0.0) || !(lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Lamé parameters at ({}, {}) must satisfy μ > 0, λ ≥ 0 (got μ = {mu}, λ = {lambda})",
                x.x, x.y
            )));
        }
        let k = (self.perm)(x);
        let asym = (k[(0, 1)] - k[(1, 0)]).abs();
        if asym > 1e-12 * k.norm() || !(k[(0, 0)] > 0.0) || !(k.determinant() > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "permeability at ({}, {}) is not symmetric positive definite",
                x.x, x.y
            )));
        }
        Ok(())
    }

    /// `Aσ = (σ − λ/(2μ + 2λ) tr(σ) I) / (2μ)` at `x`, for any 2×2 σ.
    pub fn compliance_apply(&self, sigma: &Tensor, x: Vec2) -> Tensor {
        compliance(sigma, (self.mu)(x), (self.lambda)(x))
    }

    pub fn perm_inverse(&self, x: Vec2) -> Result<Tensor> {
        invert_2x2((self.perm)(x))
    }
}

/// Isotropic compliance with explicit Lamé parameters, evaluated in the
/// deviatoric/spherical split `dev σ / 2μ + tr σ / (2(2μ + 2λ)) I`, which
/// avoids cancellation when λ ≫ μ.
pub fn compliance(sigma: &Tensor, mu: f64, lambda: f64) -> Tensor {
    let half_tr = 0.5 * sigma.trace();
    let dev = sigma - Tensor::identity() * half_tr;
    dev / (2.0 * mu) + Tensor::identity() * (half_tr / (2.0 * mu + 2.0 * lambda))
}

/// `(μ, λ)` from Young's modulus and Poisson ratio.
pub fn lame_from_young_poisson(e: f64, nu: f64) -> Result<(f64, f64)> {
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::InvalidArgument(format!("Poisson ratio {nu} outside (-1, 0.5)")));
    }
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    Ok((mu, lambda))
}

pub fn invert_2x2(k: Tensor) -> Result<Tensor> {
    let det = k.determinant();
    if det.abs() < 1e-300 || !det.is_finite() {
        return Err(Error::InvalidArgument(format!("singular permeability (det = {det:e})")));
    }
    Ok(Tensor::new(k[(1, 1)], -k[(0, 1)], -k[(1, 0)], k[(0, 0)]) / det)
}

/// Condition on the displacement / stress part of a boundary segment.
#[derive(Clone)]
pub enum MechanicalBc {
    /// `u = g` (natural in the mixed form; enters the stress equation's RHS).
    Displacement(VectorFieldT),
    /// `σn = g` (essential on the stress normal components).
    Traction(VectorFieldT),
}

/// Condition on the pressure / velocity part of a boundary segment.
#[derive(Clone)]
pub enum FlowBc {
    /// `p = g` (natural).
    Pressure(ScalarFieldT),
    /// `z·n = g` (essential on the velocity normal components).
    NormalFlux(ScalarFieldT),
}

/// Exact initial fields; used for manufactured problems.
pub trait InitialFields: Send + Sync {
    fn pressure(&self, x: Vec2) -> f64;
    fn displacement(&self, x: Vec2) -> Vec2;
    fn stress(&self, x: Vec2) -> Tensor;
    fn velocity(&self, x: Vec2) -> Vec2;
    fn div_velocity(&self, x: Vec2) -> f64;
}

#[derive(Clone)]
pub enum InitialData {
    /// Zero initial state.
    Zero,
    /// Initial pressure; u, σ, z follow from the equilibrium and Darcy equations.
    Pressure(ScalarField),
    /// Elliptic projection of known continuous initial fields.
    Exact(Arc<dyn InitialFields>),
}

/// Sources, boundary conditions (keyed by boundary tag) and initial data.
#[derive(Clone)]
pub struct SourceData {
    pub body_force: VectorFieldT,
    pub fluid_source: ScalarFieldT,
    pub mechanical: BTreeMap<String, MechanicalBc>,
    pub flow: BTreeMap<String, FlowBc>,
    pub initial: InitialData,
}

impl fmt::Debug for SourceData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceData")
            .field("mechanical", &self.mechanical.keys().collect::<Vec<_>>())
            .field("flow", &self.flow.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl SourceData {
    /// No sources, zero initial state and no boundary conditions.
    pub fn zero() -> Self {
        Self {
            body_force: Arc::new(|_, _| Vec2::zeros()),
            fluid_source: Arc::new(|_, _| 0.0),
            mechanical: BTreeMap::new(),
            flow: BTreeMap::new(),
            initial: InitialData::Zero,
        }
    }

    pub fn with_mechanical(mut self, tags: &[&str], bc: MechanicalBc) -> Self {
        for t in tags {
            self.mechanical.insert(t.to_string(), bc.clone());
        }
        self
    }

    pub fn with_flow(mut self, tags: &[&str], bc: FlowBc) -> Self {
        for t in tags {
            self.flow.insert(t.to_string(), bc.clone());
        }
        self
    }

    /// Convenience: zero displacement on the given tags.
    pub fn clamped(self, tags: &[&str]) -> Self {
        self.with_mechanical(tags, MechanicalBc::Displacement(Arc::new(|_, _| Vec2::zeros())))
    }

    /// Convenience: zero pressure on the given tags.
    pub fn drained(self, tags: &[&str]) -> Self {
        self.with_flow(tags, FlowBc::Pressure(Arc::new(|_, _| 0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compliance_examples() {
        let s = Tensor::new(1.0, 2.0, -3.0, 4.0);
        assert!((compliance(&s, 0.5, 0.0) - s).norm() < 1e-15);
        let a = compliance(&Tensor::identity(), 100.0, 100.0);
        assert!((a - Tensor::identity() / 400.0).norm() < 1e-17);
        let tf = Tensor::new(1.0, 2.0, 5.0, -1.0);
        assert!((compliance(&tf, 100.0, 37.0) - tf / 200.0).norm() < 1e-16);
    }

    #[test]
    fn lame_examples() {
        assert_eq!(lame_from_young_poisson(1.0, 0.0).unwrap(), (0.5, 0.0));
        let (mu, la) = lame_from_young_poisson(3e4, 0.4995).unwrap();
        assert!((mu - 1.00033e4).abs() / 1.00033e4 < 1e-5);
        // Eν/((1+ν)(1−2ν)) = 14985 / 0.0014995
        assert!((la - 9.993331e6).abs() / 9.993331e6 < 1e-6);
        assert!((la - 9.99167e6).abs() / 9.99167e6 < 2e-4);
        let (mu, la) = lame_from_young_poisson(1e5, 0.4).unwrap();
        assert!((mu - 3.5714e4).abs() / 3.5714e4 < 1e-4);
        assert!((la - 1.42857e5).abs() / 1.42857e5 < 1e-5);
        assert!(lame_from_young_poisson(1.0, 0.5).is_err());
    }

    #[test]
    fn perm_inverse_examples() {
        let m = MaterialModel::constant(1.0, 1.0, 1e-7, 0.0, 0.93).unwrap();
        let ki = m.perm_inverse(Vec2::zeros()).unwrap();
        assert!((ki - Tensor::identity() * 1e7).norm() < 1e-6);
        assert!(invert_2x2(Tensor::zeros()).is_err());
        assert!(invert_2x2(Tensor::identity() * 1e-160).is_err());
    }

    #[test]
    fn invalid_constants_rejected() {
        assert!(MaterialModel::constant(1.0, 1.0, 1.0, -1.0, 1.0).is_err());
        assert!(MaterialModel::constant(1.0, 1.0, 1.0, 0.0, 1.5).is_err());
        assert!(MaterialModel::constant(0.0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(MaterialModel::constant(1.0, 1.0, 1.0, 0.0, 0.0).is_ok());
    }

    fn tensor() -> impl Strategy<Value = Tensor> {
        prop::array::uniform4(-10.0..10.0f64).prop_map(|a| Tensor::new(a[0], a[1], a[2], a[3]))
    }

    proptest! {
        #[test]
        fn compliance_is_linear(s in tensor(), t in tensor(), a in -3.0..3.0f64, b in -3.0..3.0f64,
                                mu in 0.1..100.0f64, la in 0.0..1000.0f64) {
            let lhs = compliance(&(s * a + t * b), mu, la);
            let rhs = compliance(&s, mu, la) * a + compliance(&t, mu, la) * b;
            prop_assert!((lhs - rhs).norm() <= 1e-14 * (1.0 + lhs.norm()));
        }

        #[test]
        fn compliance_positive_on_symmetric(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64,
                                            mu in 0.1..100.0f64, la in 0.0..1e6f64) {
            prop_assume!(a.abs() + b.abs() + c.abs() > 1e-3);
            let s = Tensor::new(a, b, b, c);
            prop_assert!(compliance(&s, mu, la).component_mul(&s).sum() > 0.0);
        }

        #[test]
        fn trace_of_a_identity_decreases_in_lambda(mu in 0.1..100.0f64, la in 0.0..1e4f64, d in 0.1..1e4f64) {
            let t1 = compliance(&Tensor::identity(), mu, la).trace();
            let t2 = compliance(&Tensor::identity(), mu, la + d).trace();
            prop_assert!(t2 < t1);
            prop_assert!((t1 - 2.0 / (2.0 * mu + 2.0 * la)).abs() < 1e-12 * t1);
        }
    }
}
