//! Seedable random stream used by the sampler and the oracle.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Open01, StandardNormal};

/// Deterministic ChaCha8 stream. Identical `(seed, stream)` pairs give
/// identical output sequences on every platform.
#[derive(Debug, Clone)]
pub struct RandomSource {
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` derived from `seed`.
    pub fn for_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomSource { rng }
    }

    /// Uniform variate on the open interval `(0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        Open01.sample(&mut self.rng)
    }

    /// Gamma variate with the given shape and rate (density
    /// `λ^α t^{α-1} e^{-λt} / Γ(α)`). Uses Marsaglia-Tsang rejection, with
    /// the `U^{1/α}` boost for shape below one.
    ///
    /// Panics if `shape` or `rate` is not finite and positive.
    #[inline]
    pub fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        Gamma::new(shape, 1.0 / rate)
            .expect("gamma shape and rate must be positive")
            .sample(&mut self.rng)
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}
