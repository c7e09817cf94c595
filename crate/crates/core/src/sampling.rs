//! Seeded random draws used by the sampling-based operations.
//!
//! Every randomized operation in the crate takes an explicit seed and routes
//! it through [`rng_from_seed`], so identical seeds give identical results.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::{expm, SkewEndo};

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard Gaussian vector normalized to the unit sphere.
pub fn unit_vector(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

/// Skew matrix with independent Gaussian entries above the diagonal.
pub fn random_skew(n: usize, rng: &mut impl Rng) -> SkewEndo {
    let mut m = DMatrix::zeros(n, n);
    for p in 0..n {
        for q in (p + 1)..n {
            let x: f64 = rng.sample(StandardNormal);
            m[(p, q)] = x;
            m[(q, p)] = -x;
        }
    }
    SkewEndo::new(m, 1e-12).expect("constructed skew")
}

/// Haar-ish random special orthogonal matrix, as the exponential of a
/// random skew matrix.
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    expm(&random_skew(n, rng), 1.0)
}
