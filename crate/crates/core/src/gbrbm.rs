//! Dense restricted Boltzmann machine with binary hidden units and either
//! binary or Gaussian visible units.
//!
//! Binary energy:
//! `E(v, h) = -Σ v_i W_ij h_j - Σ b_j h_j - Σ c_i v_i`.
//!
//! Gaussian energy, with per-unit standard deviation `σ_i`:
//! `E(v, h) = ½ Σ v_i² / σ_i² - Σ (v_i / σ_i²) W_ij h_j - Σ b_j h_j - Σ c_i v_i`,
//! which is the plain quadratic form when every `σ_i = 1`. The visible
//! conditional implied by this energy is Gaussian with mean
//! `σ_i² c_i + Σ_j W_ij h_j` and variance `σ_i²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, sample_bernoulli, sample_gaussian, sigmoid, Matrix2, RngStream};
use crate::scalar::Scalar;

/// Largest `D + K` accepted by [`GbRbm::joint_bruteforce`].
pub const MAX_ENUMERATED_UNITS: usize = 20;

/// Standard deviation of the initial weights.
pub const INIT_WEIGHT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisibleKind {
    Binary,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbRbm<T> {
    /// `D x K`.
    pub weights: Matrix2<T>,
    pub hidden_bias: Vec<T>,
    pub visible_bias: Vec<T>,
    pub visible_std: Vec<T>,
    pub visible: VisibleKind,
}

/// Parameter increments produced by one contrastive-divergence step.
#[derive(Debug, Clone, PartialEq)]
pub struct GbRbmDeltas<T> {
    pub weights: Matrix2<T>,
    pub hidden_bias: Vec<T>,
    pub visible_bias: Vec<T>,
}

impl<T: Scalar> GbRbmDeltas<T> {
    fn zeros(d: usize, k: usize) -> Self {
        GbRbmDeltas {
            weights: Matrix2::zeros(d, k),
            hidden_bias: vec![T::zero(); k],
            visible_bias: vec![T::zero(); d],
        }
    }

    /// All increments flattened: weights, then hidden then visible biases.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = self.weights.as_slice().to_vec();
        out.extend_from_slice(&self.hidden_bias);
        out.extend_from_slice(&self.visible_bias);
        out
    }
}

impl<T: Scalar> GbRbm<T> {
    pub fn zeros(n_visible: usize, n_hidden: usize, visible: VisibleKind) -> Self {
        GbRbm {
            weights: Matrix2::zeros(n_visible, n_hidden),
            hidden_bias: vec![T::zero(); n_hidden],
            visible_bias: vec![T::zero(); n_visible],
            visible_std: vec![T::one(); n_visible],
            visible,
        }
    }

    /// Small Gaussian weights, zero biases, unit visible deviations.
    pub fn new(n_visible: usize, n_hidden: usize, visible: VisibleKind, rng: &mut RngStream) -> Self {
        let mut m = Self::zeros(n_visible, n_hidden, visible);
        m.weights = Matrix2::from_fn(n_visible, n_hidden, |_, _| T::lit(INIT_WEIGHT_STD * rng.standard_normal()));
        m
    }

    pub fn n_visible(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.cols()
    }

    fn check_lengths(&self, v: &[T], h: &[T], context: &'static str) -> Result<()> {
        if v.len() != self.n_visible() {
            return Err(Error::shape(context, self.n_visible(), v.len()));
        }
        if h.len() != self.n_hidden() {
            return Err(Error::shape(context, self.n_hidden(), h.len()));
        }
        Ok(())
    }

    pub fn energy_binary(&self, v: &[T], h: &[T]) -> Result<T> {
        self.check_lengths(v, h, "GbRbm::energy_binary")?;
        let vw = self.weights.vec_mul(v);
        let coupling: T = vw.iter().zip(h).map(|(&a, &b)| a * b).sum();
        let hidden: T = self.hidden_bias.iter().zip(h).map(|(&b, &x)| b * x).sum();
        let visible: T = self.visible_bias.iter().zip(v).map(|(&c, &x)| c * x).sum();
        Ok(-coupling - hidden - visible)
    }

    pub fn energy_gaussian(&self, v: &[T], h: &[T]) -> Result<T> {
        self.check_lengths(v, h, "GbRbm::energy_gaussian")?;
        let scaled = self.scaled_visible(v);
        let quadratic: T = v.iter().zip(&scaled).map(|(&x, &s)| x * s).sum::<T>() * T::half();
        let vw = self.weights.vec_mul(&scaled);
        let coupling: T = vw.iter().zip(h).map(|(&a, &b)| a * b).sum();
        let hidden: T = self.hidden_bias.iter().zip(h).map(|(&b, &x)| b * x).sum();
        let visible: T = self.visible_bias.iter().zip(v).map(|(&c, &x)| c * x).sum();
        Ok(quadratic - coupling - hidden - visible)
    }

    /// Energy under this model's visible kind.
    pub fn energy(&self, v: &[T], h: &[T]) -> Result<T> {
        match self.visible {
            VisibleKind::Binary => self.energy_binary(v, h),
            VisibleKind::Gaussian => self.energy_gaussian(v, h),
        }
    }

    /// `v_i / σ_i²` for Gaussian visibles, `v` itself for binary ones.
    fn scaled_visible(&self, v: &[T]) -> Vec<T> {
        match self.visible {
            VisibleKind::Binary => v.to_vec(),
            VisibleKind::Gaussian => v
                .iter()
                .zip(&self.visible_std)
                .map(|(&x, &s)| x / (s * s))
                .collect(),
        }
    }

    /// Pre-sigmoid hidden input `Σ_i W_ij v_i / σ_i² + b_j`.
    pub fn hidden_input(&self, v: &[T]) -> Result<Vec<T>> {
        if v.len() != self.n_visible() {
            return Err(Error::shape("GbRbm::hidden_input", self.n_visible(), v.len()));
        }
        let mut act = self.weights.vec_mul(&self.scaled_visible(v));
        for (a, &b) in act.iter_mut().zip(&self.hidden_bias) {
            *a += b;
        }
        Ok(act)
    }

    pub fn prob_h_given_v(&self, v: &[T]) -> Result<Vec<T>> {
        Ok(self.hidden_input(v)?.into_iter().map(sigmoid).collect())
    }

    /// Binary visibles: `p(v_i = 1 | h)`. Gaussian visibles: the conditional
    /// mean; the conditional variance is `σ_i²`.
    pub fn prob_v_given_h(&self, h: &[T]) -> Result<Vec<T>> {
        if h.len() != self.n_hidden() {
            return Err(Error::shape("GbRbm::prob_v_given_h", self.n_hidden(), h.len()));
        }
        let wh = self.weights.mul_vec(h);
        Ok(match self.visible {
            VisibleKind::Binary => wh
                .into_iter()
                .zip(&self.visible_bias)
                .map(|(a, &c)| sigmoid(a + c))
                .collect(),
            VisibleKind::Gaussian => wh
                .into_iter()
                .zip(self.visible_bias.iter().zip(&self.visible_std))
                .map(|(a, (&c, &s))| s * s * c + a)
                .collect(),
        })
    }

    fn sample_units(probs: &[T], rng: &mut RngStream) -> Vec<T> {
        probs
            .iter()
            .map(|&p| {
                if sample_bernoulli(p, rng).expect("sigmoid output is a probability") {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    pub fn sample_h(&self, v: &[T], rng: &mut RngStream) -> Result<Vec<T>> {
        Ok(Self::sample_units(&self.prob_h_given_v(v)?, rng))
    }

    pub fn sample_v(&self, h: &[T], rng: &mut RngStream) -> Result<Vec<T>> {
        let params = self.prob_v_given_h(h)?;
        Ok(match self.visible {
            VisibleKind::Binary => Self::sample_units(&params, rng),
            VisibleKind::Gaussian => params
                .iter()
                .zip(&self.visible_std)
                .map(|(&m, &s)| sample_gaussian(m, s * s, rng).expect("finite mean"))
                .collect(),
        })
    }

    /// CD-`n_steps` increments averaged over `batch` and scaled by
    /// `learning_rate`.
    ///
    /// The chain samples hidden and visible states; the hidden statistics at
    /// step 0 and step `n` use conditional probabilities.
    pub fn cd_update(
        &self,
        batch: &[Vec<T>],
        n_steps: usize,
        learning_rate: T,
        rng: &mut RngStream,
    ) -> Result<GbRbmDeltas<T>> {
        if n_steps == 0 {
            return Err(Error::invalid("contrastive divergence needs at least one Gibbs step"));
        }
        if batch.is_empty() {
            return Err(Error::invalid("contrastive divergence needs a non-empty batch"));
        }
        let (d, k) = (self.n_visible(), self.n_hidden());
        let mut acc = GbRbmDeltas::zeros(d, k);
        for v0 in batch {
            let ph0 = self.prob_h_given_v(v0)?;
            let mut h = Self::sample_units(&ph0, rng);
            let mut vn = Vec::new();
            let mut phn = Vec::new();
            for step in 1..=n_steps {
                vn = self.sample_v(&h, rng)?;
                phn = self.prob_h_given_v(&vn)?;
                if step < n_steps {
                    h = Self::sample_units(&phn, rng);
                }
            }
            let s0 = self.scaled_visible(v0);
            let sn = self.scaled_visible(&vn);
            for i in 0..d {
                for j in 0..k {
                    acc.weights[(i, j)] += s0[i] * ph0[j] - sn[i] * phn[j];
                }
                acc.visible_bias[i] += v0[i] - vn[i];
            }
            for j in 0..k {
                acc.hidden_bias[j] += ph0[j] - phn[j];
            }
        }
        let scale = learning_rate / T::lit(batch.len() as f64);
        acc.weights.scale(scale);
        acc.hidden_bias.iter_mut().for_each(|x| *x *= scale);
        acc.visible_bias.iter_mut().for_each(|x| *x *= scale);
        Ok(acc)
    }

    pub fn apply(&mut self, deltas: &GbRbmDeltas<T>) {
        self.weights.axpy(T::one(), &deltas.weights);
        for (b, &d) in self.hidden_bias.iter_mut().zip(&deltas.hidden_bias) {
            *b += d;
        }
        for (c, &d) in self.visible_bias.iter_mut().zip(&deltas.visible_bias) {
            *c += d;
        }
    }

    /// Mean squared error of the mean-field reconstruction
    /// `v -> p(h|v) -> E[v|h]`, averaged over samples.
    pub fn reconstruction_error(&self, data: &[Vec<T>]) -> Result<T> {
        let mut total = T::zero();
        for v in data {
            let recon = self.prob_v_given_h(&self.prob_h_given_v(v)?)?;
            total += v.iter().zip(&recon).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
        }
        Ok(total / T::lit(data.len().max(1) as f64))
    }

    /// Mini-batch CD training over shuffled data; returns the reconstruction
    /// error after each epoch.
    pub fn train(
        &mut self,
        data: &[Vec<T>],
        epochs: usize,
        batch_size: usize,
        learning_rate: T,
        n_steps: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<T>> {
        let mut history = Vec::with_capacity(epochs);
        if data.is_empty() || epochs == 0 {
            return Ok(history);
        }
        let batch_size = batch_size.max(1);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for _ in 0..epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(batch_size) {
                let batch: Vec<Vec<T>> = chunk.iter().map(|&i| data[i].clone()).collect();
                let deltas = self.cd_update(&batch, n_steps, learning_rate, rng)?;
                self.apply(&deltas);
            }
            history.push(self.reconstruction_error(data)?);
        }
        Ok(history)
    }

    /// Exact joint distribution over all binary states, by enumeration.
    ///
    /// Uses the binary energy regardless of [`GbRbm::visible`].
    pub fn joint_bruteforce(&self) -> Result<JointTable<T>> {
        let (d, k) = (self.n_visible(), self.n_hidden());
        if d + k > MAX_ENUMERATED_UNITS {
            return Err(Error::invalid(format!(
                "enumeration over {} units exceeds the bound of {MAX_ENUMERATED_UNITS}",
                d + k
            )));
        }
        let n_states = 1usize << (d + k);
        let mut neg_energy = Vec::with_capacity(n_states);
        for state in 0..n_states {
            let v = bits_to_units::<T>(state, d);
            let h = bits_to_units::<T>(state >> d, k);
            neg_energy.push(-self.energy_binary(&v, &h)?);
        }
        let log_partition = log_sum_exp(&neg_energy);
        let probs = neg_energy.into_iter().map(|e| (e - log_partition).exp()).collect();
        Ok(JointTable {
            n_visible: d,
            n_hidden: k,
            probs,
            log_partition,
        })
    }
}

/// Unpacks the low `n` bits of `bits` into 0/1 units.
pub fn bits_to_units<T: Scalar>(bits: usize, n: usize) -> Vec<T> {
    (0..n)
        .map(|i| if (bits >> i) & 1 == 1 { T::one() } else { T::zero() })
        .collect()
}

/// Enumerated joint `p(v, h)` of a binary RBM.
///
/// State index packs `v` in the low `n_visible` bits and `h` above them.
#[derive(Debug, Clone)]
pub struct JointTable<T> {
    pub n_visible: usize,
    pub n_hidden: usize,
    pub probs: Vec<T>,
    pub log_partition: T,
}

impl<T: Scalar> JointTable<T> {
    pub fn prob(&self, v_bits: usize, h_bits: usize) -> T {
        self.probs[v_bits | (h_bits << self.n_visible)]
    }

    pub fn marginal_v(&self, v_bits: usize) -> T {
        (0..1usize << self.n_hidden).map(|h| self.prob(v_bits, h)).sum()
    }

    pub fn marginal_h(&self, h_bits: usize) -> T {
        (0..1usize << self.n_visible).map(|v| self.prob(v, h_bits)).sum()
    }

    /// `p(h_j = 1 | v)` for every `j`.
    pub fn hidden_conditional(&self, v_bits: usize) -> Vec<T> {
        let z = self.marginal_v(v_bits);
        (0..self.n_hidden)
            .map(|j| {
                (0..1usize << self.n_hidden)
                    .filter(|h| (h >> j) & 1 == 1)
                    .map(|h| self.prob(v_bits, h))
                    .sum::<T>()
                    / z
            })
            .collect()
    }

    /// `p(v_i = 1 | h)` for every `i`.
    pub fn visible_conditional(&self, h_bits: usize) -> Vec<T> {
        let z = self.marginal_h(h_bits);
        (0..self.n_visible)
            .map(|i| {
                (0..1usize << self.n_visible)
                    .filter(|v| (v >> i) & 1 == 1)
                    .map(|v| self.prob(v, h_bits))
                    .sum::<T>()
                    / z
            })
            .collect()
    }

    /// Exact joint draw, returned as `(v_bits, h_bits)`.
    pub fn sample(&self, rng: &mut RngStream) -> (usize, usize) {
        let state = crate::numerics::sample_categorical(&self.probs, rng).expect("normalized table");
        (state & ((1 << self.n_visible) - 1), state >> self.n_visible)
    }
}
