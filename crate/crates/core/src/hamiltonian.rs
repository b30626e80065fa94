//! Convex Hamiltonians `H(t, x, p)` and measurable selections of their
//! subdifferential in `p`.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::FeSpace;
use crate::math::{dot, norm, Vec2};
use crate::timestepping::{SpaceTimeField, TimeGrid};
use crate::{Error, Result};

/// Below this gradient norm the eikonal selector returns the zero vector.
pub const GRADIENT_FLOOR: f64 = 1e-14;

pub trait Hamiltonian: Send + Sync {
    fn value(&self, t: f64, x: Vec2, p: Vec2) -> f64;

    /// Some element of `partial_p H(t, x, p)`.
    fn select(&self, t: f64, x: Vec2, p: Vec2) -> Vec2;

    /// Lipschitz constant in `p`, which also bounds every subgradient.
    fn lipschitz(&self) -> f64;

    /// Whether `H` depends on `(t, x)`. When it does not, the element load of
    /// `H(grad u)` is exact with one evaluation per element.
    fn is_autonomous(&self) -> bool {
        false
    }
}

/// `H(p) = |p|`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Eikonal;

pub fn eikonal() -> Eikonal {
    Eikonal
}

impl Hamiltonian for Eikonal {
    fn value(&self, _t: f64, _x: Vec2, p: Vec2) -> f64 {
        norm(p)
    }

    fn select(&self, _t: f64, _x: Vec2, p: Vec2) -> Vec2 {
        let r = norm(p);
        if r > GRADIENT_FLOOR {
            [p[0] / r, p[1] / r]
        } else {
            [0.0, 0.0]
        }
    }

    fn lipschitz(&self) -> f64 {
        1.0
    }

    fn is_autonomous(&self) -> bool {
        true
    }
}

pub type DriftFn = Box<dyn Fn(f64, Vec2) -> Vec2 + Send + Sync>;
pub type CostFn = Box<dyn Fn(f64, Vec2) -> f64 + Send + Sync>;

/// One control: drift `b(t, x)` and running cost `f(t, x)`.
pub struct Control {
    pub drift: DriftFn,
    pub cost: CostFn,
}

impl Control {
    pub fn new(
        drift: impl Fn(f64, Vec2) -> Vec2 + Send + Sync + 'static,
        cost: impl Fn(f64, Vec2) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Control { drift: Box::new(drift), cost: Box::new(cost) }
    }

    /// Control with constant drift and cost.
    pub fn constant(drift: Vec2, cost: f64) -> Self {
        Control::new(move |_, _| drift, move |_, _| cost)
    }
}

/// `H(t, x, p) = max_a (b_a(t, x) . p - f_a(t, x))` over a finite control set.
pub struct DiscreteControl {
    controls: Vec<Control>,
    lipschitz: f64,
    autonomous: bool,
}

impl core::fmt::Debug for DiscreteControl {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("DiscreteControl")
            .field("controls", &self.controls.len())
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

/// Builds a finite-control Hamiltonian. `L_H` is estimated as the largest
/// `|b_a|` sampled on a `grid x grid` lattice of `[0,1]^2` at `grid` times in
/// `[0, horizon]`.
pub fn discrete_control(controls: Vec<Control>, horizon: f64, grid: usize) -> Result<DiscreteControl> {
    if controls.is_empty() {
        return Err(Error::InvalidArgument("control set is empty".into()));
    }
    let g = grid.max(2);
    let mut lipschitz: f64 = 0.0;
    for c in &controls {
        for it in 0..g {
            let t = horizon * it as f64 / (g - 1) as f64;
            for ix in 0..g {
                for iy in 0..g {
                    let x = [ix as f64 / (g - 1) as f64, iy as f64 / (g - 1) as f64];
                    lipschitz = lipschitz.max(norm((c.drift)(t, x)));
                }
            }
        }
    }
    Ok(DiscreteControl { controls, lipschitz, autonomous: false })
}

impl DiscreteControl {
    /// Same controls with an analytically known `L_H`.
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    /// Declares that drifts and costs do not depend on `(t, x)`.
    pub fn autonomous(mut self) -> Self {
        self.autonomous = true;
        self
    }

    /// Index of the maximising control, lowest index on ties.
    pub fn argmax(&self, t: f64, x: Vec2, p: Vec2) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, c) in self.controls.iter().enumerate() {
            let v = dot((c.drift)(t, x), p) - (c.cost)(t, x);
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }
}

impl Hamiltonian for DiscreteControl {
    fn value(&self, t: f64, x: Vec2, p: Vec2) -> f64 {
        self.argmax(t, x, p).1
    }

    fn select(&self, t: f64, x: Vec2, p: Vec2) -> Vec2 {
        let (i, _) = self.argmax(t, x, p);
        (self.controls[i].drift)(t, x)
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn is_autonomous(&self) -> bool {
        self.autonomous
    }
}

/// Drift constant on each element of each time slab.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportField {
    n_elements: usize,
    data: Vec<Vec<Vec2>>,
}

impl TransportField {
    pub fn zeros(n_slabs: usize, n_elements: usize) -> Self {
        TransportField { n_elements, data: vec![vec![[0.0; 2]; n_elements]; n_slabs] }
    }

    pub fn from_slabs(data: Vec<Vec<Vec2>>) -> Result<Self> {
        let n_elements = data.first().map_or(0, Vec::len);
        if let Some(bad) = data.iter().find(|s| s.len() != n_elements) {
            return Err(Error::DimensionMismatch { expected: n_elements, found: bad.len() });
        }
        Ok(TransportField { n_elements, data })
    }

    pub fn n_slabs(&self) -> usize {
        self.data.len()
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    /// Values on slab `n` (1-based, as in `I_1, ..., I_N`).
    pub fn slab(&self, n: usize) -> &[Vec2] {
        &self.data[n - 1]
    }

    pub fn slab_mut(&mut self, n: usize) -> &mut [Vec2] {
        &mut self.data[n - 1]
    }

    pub fn slabs(&self) -> &[Vec<Vec2>] {
        &self.data
    }

    pub fn max_norm(&self) -> f64 {
        self.data.iter().flatten().map(|b| norm(*b)).fold(0.0, f64::max)
    }
}

/// Per-slab, per-element selection `b = select(t_mid, centroid, grad u|_K)`.
/// For `(t, x)`-independent Hamiltonians this is an exact pointwise selection
/// since `grad u` is constant on each cell.
pub fn select_field(
    ham: &dyn Hamiltonian,
    u: &SpaceTimeField,
    fes: &FeSpace<'_>,
    grid: &TimeGrid,
) -> TransportField {
    let mesh = fes.mesh();
    let data = (1..=grid.n_steps())
        .map(|n| {
            let t = grid.midpoint(n);
            let slab = u.slab(n);
            (0..mesh.n_triangles())
                .map(|k| ham.select(t, mesh.centroid(k), fes.element_gradient(k, slab)))
                .collect()
        })
        .collect();
    TransportField { n_elements: mesh.n_triangles(), data }
}
