//! Random inputs for unit tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::Dataset;
use crate::nuisance::NuisanceFits;

/// A binary-treatment dataset with both arms non-empty and arbitrary
/// (not fitted) nuisance values.
pub(crate) fn random_binary(seed: u64, n: usize, p: usize) -> (Dataset, NuisanceFits) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let mut z: Vec<usize> = (0..n).map(|_| rng.random_bool(0.4) as usize).collect();
    z[0] = 1;
    z[1] = 0;
    let y: Vec<f64> = (0..n).map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal)).collect();
    let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.9)).collect();
    let mu1: Vec<f64> = (0..n).map(|_| 1.5 + rng.sample::<f64, _>(StandardNormal)).collect();
    let mu0: Vec<f64> = (0..n).map(|_| 0.5 + rng.sample::<f64, _>(StandardNormal)).collect();
    let ds = Dataset::from_parts(x, z, y).unwrap();
    (ds, NuisanceFits::from_values(e, mu1, mu0).unwrap())
}
