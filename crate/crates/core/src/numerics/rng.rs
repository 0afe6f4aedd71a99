use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Generator behind every stream. Pinned so sequences are stable across
/// releases.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.3.1, seed_from_u64 + set_stream)";

/// A single-owner random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha20Rng,
}

pub fn rng_stream(seed: u64, stream_id: u64) -> RngStream {
    let mut inner = ChaCha20Rng::seed_from_u64(seed);
    inner.set_stream(stream_id);
    RngStream { inner }
}

impl RngStream {
    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u = self.uniform();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Draw by inverse transform through a quantile function.
    pub fn inverse_transform<Q: Fn(f64) -> f64>(&mut self, quantile: Q) -> f64 {
        quantile(self.uniform())
    }

    /// Standard normal via Box-Muller (used by random-walk proposals).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }
}
