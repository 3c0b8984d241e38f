#![allow(dead_code)]

use ocmg::{BlockField, GridSpec, MaskField, ScalarField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_scalar(grid: GridSpec, rng: &mut ChaCha8Rng) -> ScalarField {
    let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ScalarField::from_vec(grid, values).unwrap()
}

pub fn random_block(grid: GridSpec, rng: &mut ChaCha8Rng) -> BlockField {
    BlockField::new(random_scalar(grid, rng), random_scalar(grid, rng)).unwrap()
}

pub fn random_mask(grid: GridSpec, rng: &mut ChaCha8Rng) -> MaskField {
    MaskField::from_vec(grid, (0..grid.len()).map(|_| rng.gen_bool(0.6)).collect()).unwrap()
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(f64::MIN_POSITIVE)
}
