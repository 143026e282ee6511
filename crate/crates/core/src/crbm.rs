//! Convolutional RBM with probabilistic max-pooling.
//!
//! A layer sees `channels` visible maps of side `N_v` and owns `groups`
//! detection maps of side `N_H = N_v - N_w + 1`, one `N_w x N_w` kernel per
//! (group, channel) pair. Energy, for one channel:
//!
//! ```text
//! E(v, h) = -Σ_k Σ_ij Σ_rs h^k_ij W^k_rs v_{i+r, j+s} - Σ_k b_k Σ_ij h^k_ij - c Σ_ij v_ij
//! ```
//!
//! plus `½ Σ v²` for Gaussian visibles. Detection maps are tiled into
//! `C x C` blocks; within a block at most one unit may be on, and the
//! block's pooling unit is on exactly when one of them is.
//!
//! The bottom-up signal of a detection unit is the gradient of `-E` with
//! respect to it: the sliding correlation of `v` with the unflipped kernel,
//! plus `b_k`. The top-down signal into the visibles is the full
//! convolution of each detection map with its kernel, plus `c`.

use std::borrow::Cow;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gbrbm::{VisibleKind, INIT_WEIGHT_STD};
use crate::numerics::{
    conv2d_full_acc, conv2d_valid_acc, sample_bernoulli, sample_categorical, sigmoid, Matrix2, RngStream,
};
use crate::scalar::Scalar;

/// Geometry of one CRBM layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrbmShape {
    /// Side of the (unpadded) visible maps fed to the layer.
    pub input_side: usize,
    pub channels: usize,
    pub groups: usize,
    pub kernel_size: usize,
    pub pool: usize,
    pub visible: VisibleKind,
}

impl CrbmShape {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.groups == 0 || self.kernel_size == 0 || self.pool == 0 {
            return Err(Error::Config(format!(
                "CRBM needs positive channels, groups, kernel size and pool block, got {self:?}"
            )));
        }
        if self.kernel_size > self.input_side {
            return Err(Error::Config(format!(
                "kernel size {} exceeds visible side {}",
                self.kernel_size, self.input_side
            )));
        }
        Ok(())
    }

    /// Visible side after zero-padding so that the detection side is a
    /// multiple of the pool block.
    pub fn visible_side(&self) -> usize {
        let hidden = self.input_side + 1 - self.kernel_size;
        let padded_hidden = hidden.div_ceil(self.pool) * self.pool;
        padded_hidden + self.kernel_size - 1
    }

    pub fn hidden_side(&self) -> usize {
        self.visible_side() + 1 - self.kernel_size
    }

    pub fn pooled_side(&self) -> usize {
        self.hidden_side() / self.pool
    }
}

/// Binary detection and pooling states.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState<T> {
    pub detection: Vec<Matrix2<T>>,
    pub pooling: Vec<Matrix2<T>>,
}

/// Block posteriors: `detection[k][i, j] = q(h^k_ij = 1)` and
/// `pool_off[k][a, b] = q(p^k_ab = 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorQ<T> {
    pub detection: Vec<Matrix2<T>>,
    pub pool_off: Vec<Matrix2<T>>,
    pub pool: usize,
}

impl<T: Scalar> PosteriorQ<T> {
    /// Per-block pooling-on probabilities, the representation passed to the
    /// next layer.
    pub fn pool_forward(&self) -> Vec<Matrix2<T>> {
        self.pool_off.iter().map(|m| m.map(|q| T::one() - q)).collect()
    }

    /// Mean detection probability of each group.
    pub fn mean_activation(&self) -> Vec<T> {
        self.detection
            .iter()
            .map(|q| q.sum() / T::lit((q.rows() * q.cols()) as f64))
            .collect()
    }
}

/// Pooling outputs `q(p = 1)` of a posterior.
pub fn pool_forward<T: Scalar>(q: &PosteriorQ<T>) -> Vec<Matrix2<T>> {
    q.pool_forward()
}

/// Probabilistic max-pooling posterior from bottom-up signals `I^k_ij`.
///
/// Within each `pool x pool` block the outcomes "unit (i, j) on" (logit
/// `I_ij`) and "all off" (logit 0) are normalized jointly.
pub fn block_posterior<T: Scalar>(signals: &[Matrix2<T>], pool: usize) -> PosteriorQ<T> {
    let mut detection = Vec::with_capacity(signals.len());
    let mut pool_off = Vec::with_capacity(signals.len());
    for sig in signals {
        let side = sig.rows();
        assert!(side % pool == 0 && sig.cols() == side, "detection side must be a multiple of the block");
        let blocks = side / pool;
        let mut q = Matrix2::zeros(side, side);
        let mut off = Matrix2::zeros(blocks, blocks);
        for a in 0..blocks {
            for b in 0..blocks {
                let mut max = T::zero();
                for i in a * pool..(a + 1) * pool {
                    for j in b * pool..(b + 1) * pool {
                        max = max.max(sig[(i, j)]);
                    }
                }
                let off_weight = (-max).exp();
                let mut den = off_weight;
                for i in a * pool..(a + 1) * pool {
                    for j in b * pool..(b + 1) * pool {
                        let e = (sig[(i, j)] - max).exp();
                        q[(i, j)] = e;
                        den += e;
                    }
                }
                for i in a * pool..(a + 1) * pool {
                    for j in b * pool..(b + 1) * pool {
                        q[(i, j)] /= den;
                    }
                }
                off[(a, b)] = off_weight / den;
            }
        }
        detection.push(q);
        pool_off.push(off);
    }
    PosteriorQ {
        detection,
        pool_off,
        pool,
    }
}

/// Draws one joint state per block: a single on-unit or all off.
pub fn sample_from_posterior<T: Scalar>(q: &PosteriorQ<T>, rng: &mut RngStream) -> HiddenState<T> {
    let pool = q.pool;
    let mut detection = Vec::with_capacity(q.detection.len());
    let mut pooling = Vec::with_capacity(q.detection.len());
    let mut weights = vec![T::zero(); pool * pool + 1];
    for (qk, offk) in q.detection.iter().zip(&q.pool_off) {
        let side = qk.rows();
        let blocks = side / pool;
        let mut h = Matrix2::zeros(side, side);
        let mut p = Matrix2::zeros(blocks, blocks);
        for a in 0..blocks {
            for b in 0..blocks {
                for di in 0..pool {
                    for dj in 0..pool {
                        weights[di * pool + dj] = qk[(a * pool + di, b * pool + dj)];
                    }
                }
                weights[pool * pool] = offk[(a, b)];
                let outcome = sample_categorical(&weights, rng).expect("block posterior is normalized");
                if outcome < pool * pool {
                    h[(a * pool + outcome / pool, b * pool + outcome % pool)] = T::one();
                    p[(a, b)] = T::one();
                }
            }
        }
        detection.push(h);
        pooling.push(p);
    }
    HiddenState { detection, pooling }
}

/// Hyper-parameters of one contrastive-divergence step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdParams<T> {
    pub n_steps: usize,
    pub learning_rate: T,
    pub target_sparsity: T,
    /// Rate of the sparsity bias correction; zero disables it.
    pub sparsity_rate: T,
}

/// Batch-averaged CD statistics before scaling by the learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbmGradients<T> {
    /// Indexed like [`Crbm::kernels`].
    pub kernels: Vec<Matrix2<T>>,
    pub hidden_bias: Vec<T>,
    pub visible_bias: Vec<T>,
    /// Mean detection probability per group under the data, `Q^(0)`.
    pub data_activation: Vec<T>,
}

impl<T: Scalar> CrbmGradients<T> {
    fn zeros(shape: &CrbmShape) -> Self {
        CrbmGradients {
            kernels: vec![Matrix2::zeros(shape.kernel_size, shape.kernel_size); shape.groups * shape.channels],
            hidden_bias: vec![T::zero(); shape.groups],
            visible_bias: vec![T::zero(); shape.channels],
            data_activation: vec![T::zero(); shape.groups],
        }
    }

    fn add(&mut self, other: &Self) {
        for (a, b) in self.kernels.iter_mut().zip(&other.kernels) {
            a.axpy(T::one(), b);
        }
        let pairs = [
            (&mut self.hidden_bias, &other.hidden_bias),
            (&mut self.visible_bias, &other.visible_bias),
            (&mut self.data_activation, &other.data_activation),
        ];
        for (a, b) in pairs {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, s: T) {
        self.kernels.iter_mut().for_each(|k| k.scale(s));
        for v in [&mut self.hidden_bias, &mut self.visible_bias, &mut self.data_activation] {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Kernels, hidden biases then visible biases, flattened.
    pub fn flatten(&self) -> Vec<T> {
        let mut out: Vec<T> = self.kernels.iter().flat_map(|k| k.as_slice().iter().copied()).collect();
        out.extend_from_slice(&self.hidden_bias);
        out.extend_from_slice(&self.visible_bias);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crbm<T> {
    shape: CrbmShape,
    /// `kernels[k * channels + c]` couples group `k` to visible channel `c`.
    kernels: Vec<Matrix2<T>>,
    hidden_bias: Vec<T>,
    /// One shared bias per visible channel.
    visible_bias: Vec<T>,
}

impl<T: Scalar> Crbm<T> {
    /// Zero parameters.
    pub fn zeros(shape: CrbmShape) -> Result<Self> {
        shape.validate()?;
        Ok(Crbm {
            kernels: vec![Matrix2::zeros(shape.kernel_size, shape.kernel_size); shape.groups * shape.channels],
            hidden_bias: vec![T::zero(); shape.groups],
            visible_bias: vec![T::zero(); shape.channels],
            shape,
        })
    }

    /// Small Gaussian kernels, zero biases.
    pub fn new(shape: CrbmShape, rng: &mut RngStream) -> Result<Self> {
        let mut m = Self::zeros(shape)?;
        for k in &mut m.kernels {
            k.map_inplace(|_| T::lit(INIT_WEIGHT_STD * rng.standard_normal()));
        }
        Ok(m)
    }

    /// Assembles a layer from explicit parameters.
    pub fn from_parts(
        shape: CrbmShape,
        kernels: Vec<Matrix2<T>>,
        hidden_bias: Vec<T>,
        visible_bias: Vec<T>,
    ) -> Result<Self> {
        shape.validate()?;
        let n = shape.kernel_size;
        if kernels.len() != shape.groups * shape.channels || kernels.iter().any(|k| k.shape() != (n, n)) {
            return Err(Error::shape(
                "Crbm::from_parts",
                format!("{} kernels of {n}x{n}", shape.groups * shape.channels),
                format!("{} kernels", kernels.len()),
            ));
        }
        if hidden_bias.len() != shape.groups || visible_bias.len() != shape.channels {
            return Err(Error::shape(
                "Crbm::from_parts",
                format!("{} hidden and {} visible biases", shape.groups, shape.channels),
                format!("{} and {}", hidden_bias.len(), visible_bias.len()),
            ));
        }
        Ok(Crbm {
            shape,
            kernels,
            hidden_bias,
            visible_bias,
        })
    }

    pub fn shape(&self) -> &CrbmShape {
        &self.shape
    }

    pub fn kernels(&self) -> &[Matrix2<T>] {
        &self.kernels
    }

    pub fn kernels_mut(&mut self) -> &mut [Matrix2<T>] {
        &mut self.kernels
    }

    pub fn kernel(&self, group: usize, channel: usize) -> &Matrix2<T> {
        &self.kernels[group * self.shape.channels + channel]
    }

    pub fn hidden_bias(&self) -> &[T] {
        &self.hidden_bias
    }

    pub fn hidden_bias_mut(&mut self) -> &mut [T] {
        &mut self.hidden_bias
    }

    pub fn visible_bias(&self) -> &[T] {
        &self.visible_bias
    }

    pub fn visible_bias_mut(&mut self) -> &mut [T] {
        &mut self.visible_bias
    }

    /// Zero-pads raw inputs to [`CrbmShape::visible_side`]; inputs already
    /// at that side pass through unchanged.
    pub fn prepare<'a>(&self, v: &'a [Matrix2<T>]) -> Result<Cow<'a, [Matrix2<T>]>> {
        let s = &self.shape;
        let side = s.visible_side();
        if v.len() != s.channels {
            return Err(Error::shape("Crbm visible channels", s.channels, v.len()));
        }
        if v.iter().all(|m| m.shape() == (side, side)) {
            return Ok(Cow::Borrowed(v));
        }
        if v.iter().all(|m| m.shape() == (s.input_side, s.input_side)) {
            return Ok(Cow::Owned(v.iter().map(|m| m.padded(side, side)).collect()));
        }
        Err(Error::shape(
            "Crbm visible maps",
            format!("{0}x{0} or {1}x{1}", s.input_side, side),
            format!("{}x{}", v[0].rows(), v[0].cols()),
        ))
    }

    fn check_detection(&self, h: &[Matrix2<T>]) -> Result<()> {
        let n = self.shape.hidden_side();
        if h.len() != self.shape.groups || h.iter().any(|m| m.shape() != (n, n)) {
            return Err(Error::shape(
                "Crbm detection maps",
                format!("{} maps of {n}x{n}", self.shape.groups),
                format!("{} maps", h.len()),
            ));
        }
        Ok(())
    }

    /// Bottom-up signals `I^k = Σ_c corr(v_c, W^{k,c}) + b_k`.
    pub fn bottom_up(&self, v: &[Matrix2<T>]) -> Result<Vec<Matrix2<T>>> {
        let v = self.prepare(v)?;
        Ok(self.bottom_up_prepared(&v))
    }

    fn bottom_up_prepared(&self, v: &[Matrix2<T>]) -> Vec<Matrix2<T>> {
        let n = self.shape.hidden_side();
        (0..self.shape.groups)
            .map(|k| {
                let mut out = Matrix2::filled(n, n, self.hidden_bias[k]);
                for (c, vc) in v.iter().enumerate() {
                    conv2d_valid_acc(vc, self.kernel(k, c), T::one(), &mut out);
                }
                out
            })
            .collect()
    }

    /// Top-down visible input `Σ_k conv_full(h^k, W^{k,c}) + c_c`.
    pub fn top_down(&self, h: &[Matrix2<T>]) -> Result<Vec<Matrix2<T>>> {
        self.check_detection(h)?;
        Ok(self.top_down_unchecked(h))
    }

    fn top_down_unchecked(&self, h: &[Matrix2<T>]) -> Vec<Matrix2<T>> {
        let side = self.shape.visible_side();
        (0..self.shape.channels)
            .map(|c| {
                let mut out = Matrix2::filled(side, side, self.visible_bias[c]);
                for (k, hk) in h.iter().enumerate() {
                    conv2d_full_acc(hk, self.kernel(k, c), T::one(), &mut out);
                }
                out
            })
            .collect()
    }

    /// `E(v, h)` for detection state `h` (the block constraint is not
    /// checked; pooling units are implied by `h`).
    pub fn energy(&self, v: &[Matrix2<T>], h: &[Matrix2<T>]) -> Result<T> {
        let v = self.prepare(v)?;
        self.check_detection(h)?;
        let signals = self.bottom_up_prepared(&v);
        // signals include b_k, which covers the hidden-bias term
        let coupling: T = signals.iter().zip(h).map(|(s, hk)| s.dot(hk)).sum();
        let visible: T = v.iter().zip(&self.visible_bias).map(|(vc, &c)| c * vc.sum()).sum();
        let quadratic = match self.shape.visible {
            VisibleKind::Binary => T::zero(),
            VisibleKind::Gaussian => T::half() * v.iter().map(|vc| vc.dot(vc)).sum::<T>(),
        };
        Ok(quadratic - coupling - visible)
    }

    pub fn pool_posterior(&self, v: &[Matrix2<T>]) -> Result<PosteriorQ<T>> {
        Ok(block_posterior(&self.bottom_up(v)?, self.shape.pool))
    }

    pub fn sample_hidden(&self, v: &[Matrix2<T>], rng: &mut RngStream) -> Result<HiddenState<T>> {
        Ok(sample_from_posterior(&self.pool_posterior(v)?, rng))
    }

    /// Binary visibles: `p(v = 1 | h)`. Gaussian visibles: the conditional
    /// mean (unit variance).
    pub fn visible_mean(&self, h: &[Matrix2<T>]) -> Result<Vec<Matrix2<T>>> {
        self.check_detection(h)?;
        Ok(self.visible_mean_unchecked(h))
    }

    fn visible_mean_unchecked(&self, h: &[Matrix2<T>]) -> Vec<Matrix2<T>> {
        let mut out = self.top_down_unchecked(h);
        if self.shape.visible == VisibleKind::Binary {
            out.iter_mut().for_each(|m| m.map_inplace(sigmoid));
        }
        out
    }

    pub fn sample_visible(&self, h: &[Matrix2<T>], rng: &mut RngStream) -> Result<Vec<Matrix2<T>>> {
        self.check_detection(h)?;
        Ok(self.sample_visible_unchecked(h, rng))
    }

    fn sample_visible_unchecked(&self, h: &[Matrix2<T>], rng: &mut RngStream) -> Vec<Matrix2<T>> {
        let mut out = self.visible_mean_unchecked(h);
        for m in &mut out {
            match self.shape.visible {
                VisibleKind::Binary => m.map_inplace(|p| {
                    if sample_bernoulli(p, rng).expect("sigmoid output") {
                        T::one()
                    } else {
                        T::zero()
                    }
                }),
                VisibleKind::Gaussian => m.map_inplace(|mu| mu + T::lit(rng.standard_normal())),
            }
        }
        out
    }

    /// Mean-field pooled representation of `v`.
    pub fn forward(&self, v: &[Matrix2<T>]) -> Result<Vec<Matrix2<T>>> {
        Ok(self.pool_posterior(v)?.pool_forward())
    }

    /// Mean squared error per visible site of the mean-field reconstruction
    /// `v -> Q -> E[v | Q]`.
    pub fn reconstruction_error(&self, v: &[Matrix2<T>]) -> Result<T> {
        let v = self.prepare(v)?;
        let q = block_posterior(&self.bottom_up_prepared(&v), self.shape.pool);
        let recon = self.visible_mean_unchecked(&q.detection);
        let side = self.shape.visible_side();
        let n = T::lit((self.shape.channels * side * side) as f64);
        Ok(v
            .iter()
            .zip(&recon)
            .map(|(a, b)| {
                a.as_slice()
                    .iter()
                    .zip(b.as_slice())
                    .map(|(&x, &y)| (x - y) * (x - y))
                    .sum::<T>()
            })
            .sum::<T>()
            / n)
    }

    /// CD-n statistics for one prepared sample.
    fn sample_gradients(&self, v0: &[Matrix2<T>], n_steps: usize, rng: &mut RngStream) -> CrbmGradients<T> {
        let s = &self.shape;
        let q0 = block_posterior(&self.bottom_up_prepared(v0), s.pool);
        let mut h = sample_from_posterior(&q0, rng).detection;
        let mut vn = Vec::new();
        let mut qn = q0.clone();
        for step in 1..=n_steps {
            let last = step == n_steps;
            vn = if last && s.visible == VisibleKind::Gaussian {
                self.visible_mean_unchecked(&h)
            } else {
                self.sample_visible_unchecked(&h, rng)
            };
            qn = block_posterior(&self.bottom_up_prepared(&vn), s.pool);
            if !last {
                h = sample_from_posterior(&qn, rng).detection;
            }
        }

        let nh2 = T::lit((s.hidden_side() * s.hidden_side()) as f64);
        let nv2 = T::lit((s.visible_side() * s.visible_side()) as f64);
        let mut g = CrbmGradients::zeros(s);
        for k in 0..s.groups {
            for c in 0..s.channels {
                let gk = &mut g.kernels[k * s.channels + c];
                conv2d_valid_acc(&v0[c], &q0.detection[k], T::one() / nh2, gk);
                conv2d_valid_acc(&vn[c], &qn.detection[k], -T::one() / nh2, gk);
            }
            let (s0, sn) = (q0.detection[k].sum(), qn.detection[k].sum());
            g.hidden_bias[k] = (s0 - sn) / nh2;
            g.data_activation[k] = s0 / nh2;
        }
        for c in 0..s.channels {
            g.visible_bias[c] = (v0[c].sum() - vn[c].sum()) / nv2;
        }
        g
    }

    /// Batch-averaged CD-n statistics (no learning rate, no sparsity term).
    ///
    /// Sample `i` of the batch draws from stream `i` of a seed taken from
    /// `rng`, and the per-sample terms are summed in batch order, so the
    /// result does not depend on thread scheduling.
    pub fn cd_gradients(
        &self,
        batch: &[Vec<Matrix2<T>>],
        n_steps: usize,
        rng: &mut RngStream,
    ) -> Result<CrbmGradients<T>> {
        if n_steps == 0 {
            return Err(Error::invalid("contrastive divergence needs at least one Gibbs step"));
        }
        if batch.is_empty() {
            return Err(Error::invalid("contrastive divergence needs a non-empty batch"));
        }
        let prepared = batch.iter().map(|v| self.prepare(v)).collect::<Result<Vec<_>>>()?;
        let base_seed = rng.next_seed();
        let per_sample: Vec<CrbmGradients<T>> = prepared
            .par_iter()
            .enumerate()
            .map(|(i, v0)| {
                let mut stream = RngStream::with_stream(base_seed, i as u64);
                self.sample_gradients(v0, n_steps, &mut stream)
            })
            .collect();
        let mut total = CrbmGradients::zeros(&self.shape);
        for g in &per_sample {
            total.add(g);
        }
        total.scale(T::one() / T::lit(batch.len() as f64));
        Ok(total)
    }

    /// One CD update with the sparsity bias correction. Returns the mean
    /// data-driven activation of each group before the update.
    pub fn cd_step(
        &mut self,
        batch: &[Vec<Matrix2<T>>],
        params: &CdParams<T>,
        rng: &mut RngStream,
    ) -> Result<Vec<T>> {
        let g = self.cd_gradients(batch, params.n_steps, rng)?;
        let lr = params.learning_rate;
        for (w, dw) in self.kernels.iter_mut().zip(&g.kernels) {
            w.axpy(lr, dw);
        }
        let sparsity = sparsity_correction(&g.data_activation, params.target_sparsity, params.sparsity_rate);
        for ((b, &db), &ds) in self.hidden_bias.iter_mut().zip(&g.hidden_bias).zip(&sparsity) {
            *b += lr * db + ds;
        }
        for (c, &dc) in self.visible_bias.iter_mut().zip(&g.visible_bias) {
            *c += lr * dc;
        }
        Ok(g.data_activation)
    }
}

fn sparsity_correction<T: Scalar>(mean_activation: &[T], target: T, rate: T) -> Vec<T> {
    mean_activation.iter().map(|&a| rate * (target - a)).collect()
}

/// Hidden-bias correction `rate · (target - mean_ij q^k_ij)` per group.
pub fn sparsity_delta<T: Scalar>(q: &PosteriorQ<T>, target_p: T, rate: T) -> Result<Vec<T>> {
    if !(target_p > T::zero() && target_p < T::one()) {
        return Err(Error::invalid(format!("target sparsity {target_p} must lie in (0, 1)")));
    }
    Ok(sparsity_correction(&q.mean_activation(), target_p, rate))
}
