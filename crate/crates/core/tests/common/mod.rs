#![allow(dead_code)]

use mfg_core::assembly::{default_weights, Discretization, FeSpace, StabilizationTensor};
use mfg_core::hamiltonian::TransportField;
use mfg_core::math::Vec2;
use mfg_core::mesh::Mesh;
use mfg_core::timestepping::{Continuity, SpaceTimeField};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Discretization with `nu = 1` and the default weights for `L_H = 1`.
pub fn disc(mesh: &Mesh) -> Discretization<'_> {
    let fes = FeSpace::new(mesh, 6).unwrap();
    let w = default_weights(mesh, 1.0, 1.0).unwrap();
    Discretization::new(fes, StabilizationTensor::build(mesh, &w), 1.0)
}

pub fn vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn nonnegative(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
}

/// Random vector in the closed unit disc.
pub fn drift(rng: &mut ChaCha8Rng) -> Vec2 {
    let r = rng.gen_range(0.0f64..=1.0).sqrt();
    let a = rng.gen_range(0.0..core::f64::consts::TAU);
    [r * a.cos(), r * a.sin()]
}

pub fn transport(rng: &mut ChaCha8Rng, slabs: usize, elements: usize) -> TransportField {
    TransportField::from_slabs((0..slabs).map(|_| (0..elements).map(|_| drift(rng)).collect()).collect()).unwrap()
}

pub fn field(rng: &mut ChaCha8Rng, slabs: usize, n: usize, continuity: Continuity) -> SpaceTimeField {
    let s = (0..slabs).map(|_| vector(rng, n)).collect();
    SpaceTimeField::new(s, vector(rng, n), continuity).unwrap()
}
