//! Seeded random sources shared by the estimator, the identity suites and tests.

use crate::scalar::{cx, Cx, Real};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A ChaCha8 generator on stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex_gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Cx<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    cx(T::lit(re), T::lit(im))
}

/// Entrywise standard complex Gaussian matrix.
pub fn random_matrix<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<Cx<T>> {
    DMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Deterministic value in `[-1, 1)` from a seed and a lattice pair; used for
/// reproducible pseudo-random symbols without storing tables.
pub fn hash_unit(seed: u64, s: &[i64], t: &[i64]) -> f64 {
    let mut h = splitmix(seed ^ 0x9e37_79b9_7f4a_7c15);
    for &x in s.iter().chain([i64::MIN].iter()).chain(t) {
        h = splitmix(h ^ x as u64);
    }
    (h >> 11) as f64 / (1u64 << 52) as f64 - 1.0
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
