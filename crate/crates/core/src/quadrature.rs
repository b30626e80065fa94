//! Symmetric quadrature on triangles (barycentric points, weights normalised to
//! sum to one) and Gauss-Legendre rules on time intervals.

use alloc::vec::Vec;

use crate::math::Vec2;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRule {
    pub degree: usize,
    /// Barycentric coordinates of each point.
    pub points: Vec<[f64; 3]>,
    /// Weights relative to the triangle area; they sum to 1.
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Smallest tabulated rule that integrates polynomials of total degree
    /// `degree` exactly (1, 2, 4 or 6 points sets).
    pub fn with_degree(degree: usize) -> Result<Self> {
        match degree {
            0 | 1 => Ok(centroid()),
            2 => Ok(strang_fix_3()),
            3 | 4 => Ok(dunavant_4()),
            5 | 6 => Ok(dunavant_6()),
            _ => Err(Error::UnsupportedQuadrature { degree }),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Physical coordinates of the points on the triangle `corners`.
    pub fn map(&self, corners: &[Vec2; 3]) -> impl Iterator<Item = (Vec2, [f64; 3], f64)> + '_ {
        let corners = *corners;
        self.points.iter().zip(&self.weights).map(move |(l, &w)| {
            let x = l[0] * corners[0][0] + l[1] * corners[1][0] + l[2] * corners[2][0];
            let y = l[0] * corners[0][1] + l[1] * corners[1][1] + l[2] * corners[2][1];
            ([x, y], *l, w)
        })
    }

    /// `int_K f dx` for a triangle with the given corners and area.
    pub fn integrate(&self, corners: &[Vec2; 3], area: f64, mut f: impl FnMut(Vec2) -> f64) -> f64 {
        area * self.map(corners).map(|(x, _, w)| w * f(x)).sum::<f64>()
    }
}

fn centroid() -> TriangleRule {
    let third = 1.0 / 3.0;
    TriangleRule { degree: 1, points: alloc::vec![[third; 3]], weights: alloc::vec![1.0] }
}

fn strang_fix_3() -> TriangleRule {
    let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
    TriangleRule {
        degree: 2,
        points: alloc::vec![[a, b, b], [b, a, b], [b, b, a]],
        weights: alloc::vec![1.0 / 3.0; 3],
    }
}

fn push_orbit3(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, b: f64, w: f64) {
    points.extend([[a, b, b], [b, a, b], [b, b, a]]);
    weights.extend([w; 3]);
}

fn push_orbit6(points: &mut Vec<[f64; 3]>, weights: &mut Vec<f64>, a: f64, b: f64, c: f64, w: f64) {
    points.extend([[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]);
    weights.extend([w; 6]);
}

// Dunavant (1985), 6 points.
fn dunavant_4() -> TriangleRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    push_orbit3(&mut points, &mut weights, 0.108103018168070, 0.445948490915965, 0.223381589678011);
    push_orbit3(&mut points, &mut weights, 0.816847572980459, 0.091576213509771, 0.109951743655322);
    TriangleRule { degree: 4, points, weights }
}

// Dunavant (1985), 12 points.
fn dunavant_6() -> TriangleRule {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    push_orbit3(&mut points, &mut weights, 0.501426509658179, 0.249286745170910, 0.116786275726379);
    push_orbit3(&mut points, &mut weights, 0.873821971016996, 0.063089014491502, 0.050844906370207);
    push_orbit6(
        &mut points,
        &mut weights,
        0.053145049844817,
        0.310352451033784,
        0.636502499121399,
        0.082851075618374,
    );
    TriangleRule { degree: 6, points, weights }
}

/// Three-point Gauss-Legendre rule on `[0, 1]`: `(nodes, weights)`.
pub const GAUSS3_UNIT: ([f64; 3], [f64; 3]) = (
    [0.112_701_665_379_258_31, 0.5, 0.887_298_334_620_741_7],
    [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
);

/// Gauss points and weights of the three-point rule on `[a, b]`; the weights
/// sum to `b - a`.
pub fn gauss3(a: f64, b: f64) -> [(f64, f64); 3] {
    let (nodes, weights) = GAUSS3_UNIT;
    let len = b - a;
    core::array::from_fn(|i| (a + len * nodes[i], len * weights[i]))
}
