//! Quadrature rules on the reference triangle and square.
//!
//! The reference triangle has vertices (0,0), (1,0), (0,1); the reference
//! square is `[0,1]²`. The vertex rule samples only the reference vertices with
//! weight |Ê|/s (s = number of vertices). Gauss rules are used for source terms
//! and error norms.

use crate::error::{Error, Result};
use crate::mesh::CellType;
use crate::Vec2;

/// Highest supported Gauss order.
pub const MAX_GAUSS_ORDER: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleKind {
    Vertex,
    Gauss(usize),
}

/// Points and weights on a reference element. Weights are the reference
/// measure weights; physical integrals multiply by `J_E(x̂)`.
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub kind: RuleKind,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// ∫_Ê f(x̂) dx̂ approximated by the rule.
    pub fn integrate(&self, mut f: impl FnMut(Vec2) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Reference vertices in counterclockwise order.
pub fn reference_vertices(cell: CellType) -> &'static [Vec2] {
    static TRI: std::sync::OnceLock<[Vec2; 3]> = std::sync::OnceLock::new();
    static QUAD: std::sync::OnceLock<[Vec2; 4]> = std::sync::OnceLock::new();
    match cell {
        CellType::Triangle => TRI.get_or_init(|| [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)]),
        CellType::Quadrilateral => QUAD.get_or_init(|| {
            [
                Vec2::new(0.0, 0.0),
                Vec2::new(1.0, 0.0),
                Vec2::new(1.0, 1.0),
                Vec2::new(0.0, 1.0),
            ]
        }),
    }
}

/// Area of the reference element.
pub fn reference_area(cell: CellType) -> f64 {
    match cell {
        CellType::Triangle => 0.5,
        CellType::Quadrilateral => 1.0,
    }
}

/// Element-vertex rule: each vertex carries weight |Ê|/s.
pub fn vertex_rule(cell: CellType) -> QuadratureRule {
    let verts = reference_vertices(cell);
    let w = reference_area(cell) / verts.len() as f64;
    QuadratureRule {
        points: verts.to_vec(),
        weights: vec![w; verts.len()],
        kind: RuleKind::Vertex,
    }
}

/// Gauss rule exact for polynomials of total degree `order` (triangle) or
/// degree `order` in each variable (square).
pub fn gauss_rule(cell: CellType, order: usize) -> Result<QuadratureRule> {
    if order > MAX_GAUSS_ORDER {
        return Err(Error::UnsupportedOrder {
            cell: cell.name(),
            order,
        });
    }
    let (points, weights) = match cell {
        CellType::Quadrilateral => {
            let (x, w) = gauss_legendre_unit(order.div_ceil(2).max(1));
            let mut pts = Vec::with_capacity(x.len() * x.len());
            let mut wts = Vec::with_capacity(x.len() * x.len());
            for j in 0..x.len() {
                for i in 0..x.len() {
                    pts.push(Vec2::new(x[i], x[j]));
                    wts.push(w[i] * w[j]);
                }
            }
            (pts, wts)
        }
        CellType::Triangle => triangle_rule(order),
    };
    Ok(QuadratureRule {
        points,
        weights,
        kind: RuleKind::Gauss(order),
    })
}

/// Gauss–Legendre nodes and weights on `[0,1]` with `n` points.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        // Chebyshev-like initial guess followed by Newton on P_n
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, t);
        if d != 0.0 {
            dp = d;
        }
        x[i] = 0.5 * (1.0 - t);
        w[i] = 1.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

/// Value and derivative of the Legendre polynomial P_n at t.
fn legendre(n: usize, t: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, t);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

fn triangle_rule(order: usize) -> (Vec<Vec2>, Vec<f64>) {
    // Barycentric orbits with area-normalised weights (sum to 1)
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    let orbit3 = |a: f64, b: f64, w: f64, pts: &mut Vec<Vec2>, wts: &mut Vec<f64>| {
        for (x, y) in [(a, b), (b, a), (b, b)] {
            pts.push(Vec2::new(x, y));
            wts.push(0.5 * w);
        }
    };
    match order {
        0 | 1 => {
            pts.push(Vec2::new(1.0 / 3.0, 1.0 / 3.0));
            wts.push(0.5);
        }
        2 => {
            let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
            orbit3(a, b, 1.0 / 3.0, &mut pts, &mut wts);
        }
        3 | 4 => {
            orbit3(
                0.108_103_018_168_070,
                0.445_948_490_915_965,
                0.223_381_589_678_011,
                &mut pts,
                &mut wts,
            );
            orbit3(
                0.816_847_572_980_459,
                0.091_576_213_509_771,
                0.109_951_743_655_322,
                &mut pts,
                &mut wts,
            );
        }
        5 => {
            pts.push(Vec2::new(1.0 / 3.0, 1.0 / 3.0));
            wts.push(0.5 * 0.225);
            orbit3(
                0.059_715_871_789_770,
                0.470_142_064_105_115,
                0.132_394_152_788_506,
                &mut pts,
                &mut wts,
            );
            orbit3(
                0.797_426_985_353_087,
                0.101_286_507_323_456,
                0.125_939_180_544_827,
                &mut pts,
                &mut wts,
            );
        }
        _ => return collapsed_rule(order),
    }
    (pts, wts)
}

/// Collapsed tensor rule: map the square onto the triangle with
/// (ξ, η) ↦ (ξ(1−η), η), Jacobian (1−η).
fn collapsed_rule(order: usize) -> (Vec<Vec2>, Vec<f64>) {
    let n = (order + 2).div_ceil(2);
    let (x, w) = gauss_legendre_unit(n);
    let mut pts = Vec::with_capacity(n * n);
    let mut wts = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let eta = x[j];
            pts.push(Vec2::new(x[i] * (1.0 - eta), eta));
            wts.push(w[i] * w[j] * (1.0 - eta));
        }
    }
    (pts, wts)
}
