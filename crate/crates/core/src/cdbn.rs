//! Stacked CRBMs trained greedily, one layer at a time.
//!
//! Layer 1 has Gaussian visibles and sees the standardized ΔRSS matrix.
//! Every later layer has binary visibles and sees the pooled probabilities
//! of the layer below, zero-padded as needed so its detection side is a
//! multiple of its pool block.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crbm::{CdParams, Crbm, CrbmShape};
use crate::error::{Error, Result};
use crate::gbrbm::VisibleKind;
use crate::numerics::{Matrix2, RngStream};
use crate::scalar::Scalar;

/// Samples used to monitor reconstruction error after each epoch.
const MONITOR_SAMPLES: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub groups: usize,
    pub kernel_size: usize,
    pub pool: usize,
    /// Overrides [`CdbnConfig::learning_rate`] for this layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
}

impl LayerSpec {
    pub fn new(groups: usize, kernel_size: usize, pool: usize) -> Self {
        LayerSpec {
            groups,
            kernel_size,
            pool,
            learning_rate: None,
        }
    }

    pub fn with_learning_rate(mut self, rate: f64) -> Self {
        self.learning_rate = Some(rate);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdbnConfig {
    pub layers: Vec<LayerSpec>,
    pub epochs_per_layer: usize,
    pub learning_rate: f64,
    pub cd_steps: usize,
    pub target_sparsity: f64,
    /// Sparsity correction rate; `None` means `0.1 *` the layer's learning rate.
    pub sparsity_rate: Option<f64>,
    pub batch_size: usize,
}

impl Default for CdbnConfig {
    /// Three layers of 28, 36 and 36 groups, 3x3 kernels, 2x2 pooling.
    fn default() -> Self {
        CdbnConfig {
            layers: vec![LayerSpec::new(28, 3, 2), LayerSpec::new(36, 3, 2), LayerSpec::new(36, 3, 2)],
            epochs_per_layer: 3,
            learning_rate: 0.2,
            cd_steps: 1,
            target_sparsity: 0.05,
            sparsity_rate: Some(2.0),
            batch_size: 20,
        }
    }
}

impl CdbnConfig {
    /// Learning rate of layer `l` (0-based).
    pub fn layer_learning_rate(&self, l: usize) -> f64 {
        self.layers
            .get(l)
            .and_then(|s| s.learning_rate)
            .unwrap_or(self.learning_rate)
    }

    /// Sparsity correction rate of layer `l` (0-based).
    pub fn sparsity_rate(&self, l: usize) -> f64 {
        self.sparsity_rate.unwrap_or(0.1 * self.layer_learning_rate(l))
    }

    /// Shapes of every layer for an `input_side x input_side` input, or a
    /// configuration error if the chain breaks.
    pub fn shapes(&self, input_side: usize) -> Result<Vec<CrbmShape>> {
        if self.layers.is_empty() {
            return Err(Error::Config("CDBN needs at least one layer".into()));
        }
        if self.cd_steps == 0 {
            return Err(Error::Config("CDBN needs at least one CD step".into()));
        }
        if !(self.target_sparsity > 0.0 && self.target_sparsity < 1.0) {
            return Err(Error::Config(format!(
                "target sparsity {} must lie in (0, 1)",
                self.target_sparsity
            )));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut side = input_side;
        let mut channels = 1;
        for (l, spec) in self.layers.iter().enumerate() {
            let shape = CrbmShape {
                input_side: side,
                channels,
                groups: spec.groups,
                kernel_size: spec.kernel_size,
                pool: spec.pool,
                visible: if l == 0 { VisibleKind::Gaussian } else { VisibleKind::Binary },
            };
            shape
                .validate()
                .map_err(|e| Error::Config(format!("layer {}: {e}", l + 1)))?;
            side = shape.pooled_side();
            channels = spec.groups;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    fn cd_params<T: Scalar>(&self, l: usize) -> CdParams<T> {
        CdParams {
            n_steps: self.cd_steps,
            learning_rate: T::lit(self.layer_learning_rate(l)),
            target_sparsity: T::lit(self.target_sparsity),
            sparsity_rate: T::lit(self.sparsity_rate(l)),
        }
    }
}

/// Per-layer training trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerReport {
    /// Reconstruction error before training, then after each epoch.
    pub reconstruction_error: Vec<f64>,
    /// Mean data-driven detection probability over the last epoch.
    pub mean_activation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdbnStack<T> {
    layers: Vec<Crbm<T>>,
    input_side: usize,
}

impl<T: Scalar> CdbnStack<T> {
    /// Randomly initialized stack.
    pub fn random(cfg: &CdbnConfig, input_side: usize, rng: &mut RngStream) -> Result<Self> {
        let layers = cfg
            .shapes(input_side)?
            .into_iter()
            .map(|s| Crbm::new(s, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(CdbnStack { layers, input_side })
    }

    /// Wraps already-built layers after checking that their shapes chain.
    pub fn from_layers(layers: Vec<Crbm<T>>, input_side: usize) -> Result<Self> {
        let mut side = input_side;
        let mut channels = 1;
        if layers.is_empty() {
            return Err(Error::Config("CDBN needs at least one layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            let s = layer.shape();
            if s.input_side != side || s.channels != channels {
                return Err(Error::Config(format!(
                    "layer {} expects {} maps of side {}, previous layer yields {channels} of side {side}",
                    l + 1,
                    s.channels,
                    s.input_side
                )));
            }
            side = s.pooled_side();
            channels = s.groups;
        }
        Ok(CdbnStack { layers, input_side })
    }

    pub fn layers(&self) -> &[Crbm<T>] {
        &self.layers
    }

    pub fn input_side(&self) -> usize {
        self.input_side
    }

    pub fn feature_len(&self) -> usize {
        let last = self.layers.last().expect("non-empty stack").shape();
        last.groups * last.pooled_side() * last.pooled_side()
    }

    /// Pooled maps after `depth` layers, mean-field throughout.
    fn forward_maps(&self, v: &Matrix2<T>, depth: usize) -> Result<Vec<Matrix2<T>>> {
        if v.shape() != (self.input_side, self.input_side) {
            return Err(Error::shape(
                "CdbnStack input",
                format!("{0}x{0}", self.input_side),
                format!("{}x{}", v.rows(), v.cols()),
            ));
        }
        let mut maps = vec![v.clone()];
        for layer in &self.layers[..depth] {
            maps = layer.forward(&maps)?;
        }
        Ok(maps)
    }

    /// Deterministic feature vector: the last layer's pooled maps,
    /// group-major then row-major.
    pub fn features(&self, v: &Matrix2<T>) -> Result<Vec<T>> {
        let maps = self.forward_maps(v, self.layers.len())?;
        Ok(maps.into_iter().flat_map(|m| m.into_vec()).collect())
    }

    pub fn features_batch(&self, data: &[Matrix2<T>]) -> Result<Vec<Vec<T>>> {
        data.par_iter().map(|v| self.features(v)).collect()
    }
}

/// Greedy layer-wise pretraining.
///
/// Each layer is initialized right before it is trained (random kernels,
/// biases fitted to its input means and the target sparsity), trained for
/// `epochs_per_layer` passes of shuffled mini-batch CD, and then frozen; its
/// pooled outputs become the next layer's data.
pub fn pretrain_greedy<T: Scalar>(
    cfg: &CdbnConfig,
    data: &[Matrix2<T>],
    rng: &mut RngStream,
) -> Result<(CdbnStack<T>, Vec<LayerReport>)> {
    let first = data
        .first()
        .ok_or_else(|| Error::invalid("pretraining needs at least one sample"))?;
    let input_side = first.rows();
    if data.iter().any(|m| m.shape() != (input_side, input_side)) {
        return Err(Error::invalid("pretraining samples must all be square with equal side"));
    }
    let shapes = cfg.shapes(input_side)?;
    let batch_size = cfg.batch_size.max(1);

    let mut inputs: Vec<Vec<Matrix2<T>>> = data.iter().map(|m| vec![m.clone()]).collect();
    let mut layers = Vec::with_capacity(shapes.len());
    let mut reports = Vec::with_capacity(shapes.len());
    for (l, shape) in shapes.into_iter().enumerate() {
        let params = cfg.cd_params::<T>(l);
        let mut layer = Crbm::new(shape, rng)?;
        inputs = inputs
            .into_iter()
            .map(|v| layer.prepare(&v).map(|p| p.into_owned()))
            .collect::<Result<_>>()?;
        init_biases(&mut layer, &inputs, cfg.target_sparsity);
        let stride = inputs.len().div_ceil(MONITOR_SAMPLES).max(1);
        let monitor: Vec<&Vec<Matrix2<T>>> = inputs.iter().step_by(stride).collect();
        let recon = |layer: &Crbm<T>| -> Result<f64> {
            let errs = monitor
                .par_iter()
                .map(|v| layer.reconstruction_error(v).map(|e| e.as_f64()))
                .collect::<Result<Vec<f64>>>()?;
            Ok(errs.iter().sum::<f64>() / errs.len() as f64)
        };

        let mut report = LayerReport {
            reconstruction_error: vec![recon(&layer)?],
            mean_activation: 0.0,
        };
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        for _ in 0..cfg.epochs_per_layer {
            rng.shuffle(&mut order);
            let mut activation = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(batch_size) {
                let batch: Vec<Vec<Matrix2<T>>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
                let act = layer.cd_step(&batch, &params, rng)?;
                activation += act.iter().map(|a| a.as_f64()).sum::<f64>() / act.len() as f64;
                batches += 1;
            }
            report.mean_activation = activation / batches.max(1) as f64;
            let err = recon(&layer)?;
            if !err.is_finite() {
                return Err(Error::NonFinite("CRBM reconstruction error diverged".into()));
            }
            report.reconstruction_error.push(err);
        }
        inputs = inputs.par_iter().map(|v| layer.forward(v)).collect::<Result<_>>()?;
        layers.push(layer);
        reports.push(report);
    }
    Ok((CdbnStack { layers, input_side }, reports))
}

/// Visible biases at the logit of each binary channel's mean input, hidden
/// biases where an input-free block would hit the target sparsity.
fn init_biases<T: Scalar>(layer: &mut Crbm<T>, inputs: &[Vec<Matrix2<T>>], target: f64) {
    let shape = *layer.shape();
    if shape.visible == VisibleKind::Binary && !inputs.is_empty() {
        for c in 0..shape.channels {
            let n = inputs.len() * inputs[0][c].as_slice().len();
            let mean = inputs.iter().map(|v| v[c].sum().as_f64()).sum::<f64>() / n as f64;
            let m = mean.clamp(1e-3, 1.0 - 1e-3);
            layer.visible_bias_mut()[c] = T::lit((m / (1.0 - m)).ln());
        }
    }
    let block = (shape.pool * shape.pool) as f64;
    let b = (target / (1.0 - block * target).max(1e-6)).ln();
    layer.hidden_bias_mut().iter_mut().for_each(|x| *x = T::lit(b));
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(layers: Vec<LayerSpec>, epochs: usize) -> CdbnConfig {
        CdbnConfig {
            layers,
            epochs_per_layer: epochs,
            batch_size: 4,
            ..CdbnConfig::default()
        }
    }

    fn data(n: usize, side: usize, seed: u64) -> Vec<Matrix2<f64>> {
        let mut rng = RngStream::new(seed);
        (0..n)
            .map(|_| Matrix2::from_fn(side, side, |_, _| rng.standard_normal()))
            .collect()
    }

    #[test]
    fn default_shape_chain() {
        let shapes = CdbnConfig::default().shapes(28).unwrap();
        let sides: Vec<(usize, usize, usize, usize)> = shapes
            .iter()
            .map(|s| (s.input_side, s.visible_side(), s.hidden_side(), s.pooled_side()))
            .collect();
        assert_eq!(sides, vec![(28, 28, 26, 13), (13, 14, 12, 6), (6, 6, 4, 2)]);
        assert_eq!(shapes[1].channels, 28);
        assert_eq!(shapes[2].channels, 36);
        let stack = CdbnStack::<f64>::random(&CdbnConfig::default(), 28, &mut RngStream::new(1)).unwrap();
        assert_eq!(stack.feature_len(), 144);
    }

    #[test]
    fn broken_chain_is_a_config_error() {
        let cfg = tiny_cfg(vec![LayerSpec::new(2, 3, 2), LayerSpec::new(2, 5, 2)], 1);
        assert!(matches!(cfg.shapes(8), Err(Error::Config(_))));
        let mut rng = RngStream::new(0);
        assert!(matches!(pretrain_greedy(&cfg, &data(2, 8, 0), &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn zero_epochs_gives_initialized_stack() {
        let cfg = tiny_cfg(vec![LayerSpec::new(2, 3, 2), LayerSpec::new(3, 2, 2)], 0);
        let (stack, reports) = pretrain_greedy(&cfg, &data(3, 8, 1), &mut RngStream::new(2)).unwrap();
        assert_eq!(stack.layers().len(), 2);
        assert_eq!(stack.feature_len(), 3);
        assert!(reports.iter().all(|r| r.reconstruction_error.len() == 1));
        let expected = CdbnStack::<f64>::random(&cfg, 8, &mut RngStream::new(2)).unwrap();
        let b = (0.05f64 / (1.0 - 4.0 * 0.05)).ln();
        for (got, want) in stack.layers().iter().zip(expected.layers()) {
            assert_eq!(got.kernels(), want.kernels());
            assert!(got.hidden_bias().iter().all(|&x| (x - b).abs() < 1e-12));
        }
    }

    #[test]
    fn single_layer_delegates_to_cd_step() {
        let cfg = tiny_cfg(vec![LayerSpec::new(2, 3, 2)], 2);
        let samples = data(6, 6, 3);
        let (stack, _) = pretrain_greedy(&cfg, &samples, &mut RngStream::new(4)).unwrap();

        let mut rng = RngStream::new(4);
        let shape = cfg.shapes(6).unwrap()[0];
        let mut layer = Crbm::<f64>::new(shape, &mut rng).unwrap();
        let inputs: Vec<Vec<Matrix2<f64>>> = samples.iter().map(|m| vec![m.clone()]).collect();
        init_biases(&mut layer, &inputs, cfg.target_sparsity);
        let mut order: Vec<usize> = (0..6).collect();
        for _ in 0..2 {
            rng.shuffle(&mut order);
            for chunk in order.chunks(4) {
                let batch: Vec<_> = chunk.iter().map(|&i| inputs[i].clone()).collect();
                layer.cd_step(&batch, &cfg.cd_params(0), &mut rng).unwrap();
            }
        }
        assert_eq!(stack.layers()[0], layer);
    }

    #[test]
    fn lower_layers_are_frozen() {
        let one = tiny_cfg(vec![LayerSpec::new(2, 3, 2)], 2);
        let two = tiny_cfg(vec![LayerSpec::new(2, 3, 2), LayerSpec::new(2, 2, 1)], 2);
        let samples = data(8, 8, 5);
        let (a, _) = pretrain_greedy(&one, &samples, &mut RngStream::new(6)).unwrap();
        let (b, _) = pretrain_greedy(&two, &samples, &mut RngStream::new(6)).unwrap();
        assert_eq!(a.layers()[0], b.layers()[0]);
    }

    #[test]
    fn zero_weight_features_closed_form() {
        let cfg = tiny_cfg(vec![LayerSpec::new(2, 3, 2), LayerSpec::new(3, 3, 2)], 0);
        let layers = cfg
            .shapes(10)
            .unwrap()
            .into_iter()
            .map(|s| Crbm::<f64>::zeros(s).unwrap())
            .collect();
        let stack = CdbnStack::from_layers(layers, 10).unwrap();
        let f = stack.features(&data(1, 10, 7)[0]).unwrap();
        assert_eq!(f.len(), stack.feature_len());
        assert!(f.iter().all(|&x| (x - 0.8).abs() < 1e-15));
    }

    #[test]
    fn features_are_deterministic_and_continuous() {
        let cfg = tiny_cfg(vec![LayerSpec::new(3, 3, 2), LayerSpec::new(2, 2, 2)], 1);
        let samples = data(6, 10, 8);
        let (stack, _) = pretrain_greedy(&cfg, &samples, &mut RngStream::new(9)).unwrap();
        let v = &samples[0];
        let f = stack.features(v).unwrap();
        assert_eq!(f, stack.features(v).unwrap());
        let mut nudged = v.clone();
        nudged[(3, 4)] += 1e-6;
        let g = stack.features(&nudged).unwrap();
        let diff = f.iter().zip(&g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-3);
        assert!(stack.features(&Matrix2::zeros(9, 9)).is_err());
    }
}
