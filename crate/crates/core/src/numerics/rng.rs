//! Explicitly seeded random streams.
//!
//! Every stochastic operation takes a `&mut RngStream`; there is no global
//! generator. The backing generator is ChaCha8, whose output for a given
//! `(seed, stream)` pair is fixed across platforms.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent sub-stream `stream` of the generator seeded by `seed`.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Draws a fresh 64-bit seed.
    pub fn next_seed(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Draws a fresh seed and returns a child stream from it.
    pub fn fork(&mut self) -> RngStream {
        RngStream::new(self.next_seed())
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<U>(&mut self, items: &mut [U]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.random_range(0..=i);
            items.swap(i, j);
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// One Bernoulli draw; `p` must lie in `[0, 1]`.
pub fn sample_bernoulli<T: Scalar>(p: T, rng: &mut RngStream) -> Result<bool> {
    let p = p.as_f64();
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("bernoulli probability {p} outside [0, 1]")));
    }
    Ok(rng.uniform() < p)
}

/// One Gaussian draw with the given mean and variance.
pub fn sample_gaussian<T: Scalar>(mean: T, variance: T, rng: &mut RngStream) -> Result<T> {
    if !(variance >= T::zero()) || !variance.is_finite() || !mean.is_finite() {
        return Err(Error::invalid(format!(
            "gaussian needs finite mean and variance >= 0, got mean {mean} variance {variance}"
        )));
    }
    Ok(mean + variance.sqrt() * T::lit(rng.standard_normal()))
}

/// Index drawn with probability proportional to `weights`.
pub fn sample_categorical<T: Scalar>(weights: &[T], rng: &mut RngStream) -> Result<usize> {
    let mut total = 0.0;
    for &w in weights {
        let w = w.as_f64();
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::invalid(format!("categorical weight {w} is not finite and >= 0")));
        }
        total += w;
    }
    if total <= 0.0 {
        return Err(Error::invalid("categorical weights are all zero"));
    }
    let target = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        let w = w.as_f64();
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if target < acc {
                return Ok(i);
            }
        }
    }
    // rounding left target just past the final cumulative sum
    Ok(last_positive)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
            assert_eq!(a.standard_normal().to_bits(), b.standard_normal().to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::with_stream(42, 0);
        let mut b = RngStream::with_stream(42, 1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn bernoulli_degenerate_probabilities() {
        let mut rng = RngStream::new(1);
        for _ in 0..1000 {
            assert!(!sample_bernoulli(0.0, &mut rng).unwrap());
            assert!(sample_bernoulli(1.0, &mut rng).unwrap());
        }
        assert!(sample_bernoulli(1.5, &mut rng).is_err());
        assert!(sample_bernoulli(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn categorical_uniform_frequencies() {
        let mut rng = RngStream::new(7);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_categorical(&[1.0, 1.0, 1.0, 1.0], &mut rng).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn categorical_skips_zero_weights() {
        let mut rng = RngStream::new(3);
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[0.0, 2.0, 0.0], &mut rng).unwrap(), 1);
        }
        assert!(sample_categorical(&[0.0, 0.0], &mut rng).is_err());
        assert!(sample_categorical(&[1.0, -0.5], &mut rng).is_err());
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = RngStream::new(11);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_gaussian(2.0, 9.0, &mut rng).unwrap())
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.05);
        assert!((var - 9.0).abs() < 0.2);
        assert!(sample_gaussian(0.0, -1.0, &mut rng).is_err());
        assert_eq!(sample_gaussian(3.0, 0.0, &mut rng).unwrap(), 3.0);
    }
}
