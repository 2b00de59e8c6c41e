//! Labeled, reproducible random streams.
//!
//! A stream is keyed by `(seed, label)`. The ChaCha8 key is the SHA-256
//! digest of the seed's little-endian bytes followed by the UTF-8 label, so
//! two streams with the same key produce the same draws on every platform.
//! Every derived distribution below is computed by hand from raw `u64`
//! draws rather than through a distribution crate, which keeps the
//! transforms fixed:
//!
//! * uniform `f64` in `[0, 1)`: top 53 bits of one draw times 2⁻⁵³;
//! * bounded integers: Lemire's multiply-and-reject;
//! * standard normal: Box–Muller on `(1 - u1, u2)`, the sine branch cached
//!   for the next call.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: String,
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, label: impl Into<String>) -> Self {
        let label = label.into();
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(label.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        RngStream {
            seed,
            label,
            inner: ChaCha8Rng::from_seed(key),
            spare_normal: None,
        }
    }

    /// A fresh stream under the same seed whose label extends this one.
    pub fn derive(&self, sub: &str) -> RngStream {
        RngStream::new(self.seed, format!("{}/{}", self.label, sub))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let threshold = n.wrapping_neg() % n;
        loop {
            let x = self.next_u64();
            let m = (x as u128) * (n as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as usize;
            }
        }
    }

    /// Standard normal draw.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n` in draw order (partial Fisher–Yates).
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot draw {k} of {n} without replacement");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }

    /// `k` distinct elements of `items` in draw order.
    pub fn choose<T: Copy>(&mut self, items: &[T], k: usize) -> Vec<T> {
        self.sample_indices(items.len(), k)
            .into_iter()
            .map(|i| items[i])
            .collect()
    }
}

/// Matrix of i.i.d. `Normal(0, scale²)` entries.
pub fn gaussian_noise(rows: usize, cols: usize, scale: f64, rng: &mut RngStream) -> Result<Matrix> {
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(Error::Argument(format!("noise scale must be finite and >= 0, got {scale}")));
    }
    let mut m = Matrix::zeros(rows, cols);
    if scale > 0.0 {
        for x in m.as_mut_slice() {
            *x = scale * rng.normal();
        }
    }
    Ok(m)
}
