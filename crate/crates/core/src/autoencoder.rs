//! Dense autoencoder over CDBN features and the softmax localization head.
//!
//! The first encoder layer sees `x_i / σ_i²`; the last decoder layer emits
//! `c_j + σ_j² Σ_i w_ij a_i` with no squashing. All other layers are
//! sigmoid affine maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gbrbm::{GbRbm, VisibleKind};
use crate::numerics::{log_sum_exp, sigmoid, softmax, Matrix2, RngStream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Sigmoid => sigmoid(z),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation value.
    fn derivative<T: Scalar>(self, a: T) -> T {
        match self {
            Activation::Sigmoid => a * (T::one() - a),
            Activation::Linear => T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    /// `in x out`.
    pub weights: Matrix2<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(n_in: usize, n_out: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Matrix2::zeros(n_in, n_out),
            bias: vec![T::zero(); n_out],
            activation,
        }
    }

    pub fn n_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_out(&self) -> usize {
        self.weights.cols()
    }

    fn n_params(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }

    /// `f(b + scale ⊙ (x W))`, with `scale` defaulting to ones.
    fn forward(&self, x: &[T], out_scale: Option<&[T]>) -> Vec<T> {
        let u = self.weights.vec_mul(x);
        u.into_iter()
            .enumerate()
            .map(|(j, u)| {
                let s = out_scale.map_or(T::one(), |s| s[j]);
                self.activation.apply(self.bias[j] + s * u)
            })
            .collect()
    }
}

/// Gradient of a loss with respect to every parameter, in the layout of
/// [`AutoencoderNet::parameters`].
pub type FlatGradient<T> = Vec<T>;

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderNet<T> {
    pub encoder: Vec<DenseLayer<T>>,
    pub decoder: Vec<DenseLayer<T>>,
    pub input_std: Vec<T>,
}

impl<T: Scalar> AutoencoderNet<T> {
    /// Checks that the layers chain and the decoder mirrors the encoder.
    pub fn new(encoder: Vec<DenseLayer<T>>, decoder: Vec<DenseLayer<T>>, input_std: Vec<T>) -> Result<Self> {
        if encoder.is_empty() || encoder.len() != decoder.len() {
            return Err(Error::Config(format!(
                "autoencoder needs matching non-empty encoder and decoder, got {} and {}",
                encoder.len(),
                decoder.len()
            )));
        }
        let depth = encoder.len();
        for (l, enc) in encoder.iter().enumerate() {
            let dec = &decoder[depth - 1 - l];
            if dec.n_in() != enc.n_out() || dec.n_out() != enc.n_in() {
                return Err(Error::shape(
                    "AutoencoderNet decoder layer",
                    format!("{}x{}", enc.n_out(), enc.n_in()),
                    format!("{}x{}", dec.n_in(), dec.n_out()),
                ));
            }
            if l > 0 && encoder[l - 1].n_out() != enc.n_in() {
                return Err(Error::shape("AutoencoderNet encoder chain", encoder[l - 1].n_out(), enc.n_in()));
            }
        }
        if input_std.len() != encoder[0].n_in() {
            return Err(Error::shape("AutoencoderNet input_std", encoder[0].n_in(), input_std.len()));
        }
        if input_std.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
            return Err(Error::invalid("input standard deviations must be positive and finite"));
        }
        Ok(AutoencoderNet {
            encoder,
            decoder,
            input_std,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].n_in()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder.last().expect("non-empty encoder").n_out()
    }

    fn layers(&self) -> impl Iterator<Item = &DenseLayer<T>> {
        self.encoder.iter().chain(&self.decoder)
    }

    fn variance(&self) -> Vec<T> {
        self.input_std.iter().map(|&s| s * s).collect()
    }

    pub fn encode(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("AutoencoderNet::encode", self.input_dim(), x.len()));
        }
        let mut a: Vec<T> = x.iter().zip(&self.input_std).map(|(&x, &s)| x / (s * s)).collect();
        for layer in &self.encoder {
            a = layer.forward(&a, None);
        }
        Ok(a)
    }

    pub fn decode(&self, code: &[T]) -> Result<Vec<T>> {
        if code.len() != self.code_dim() {
            return Err(Error::shape("AutoencoderNet::decode", self.code_dim(), code.len()));
        }
        let var = self.variance();
        let last = self.decoder.len() - 1;
        let mut a = code.to_vec();
        for (l, layer) in self.decoder.iter().enumerate() {
            a = layer.forward(&a, (l == last).then_some(var.as_slice()));
        }
        Ok(a)
    }

    pub fn reconstruct(&self, x: &[T]) -> Result<Vec<T>> {
        self.decode(&self.encode(x)?)
    }

    /// Squared reconstruction error averaged over samples and input
    /// dimensions.
    pub fn mse(&self, data: &[Vec<T>]) -> Result<T> {
        if data.is_empty() {
            return Err(Error::invalid("mse needs at least one sample"));
        }
        let mut total = T::zero();
        for x in data {
            let r = self.reconstruct(x)?;
            total += r.iter().zip(x).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();
        }
        Ok(total / T::lit((data.len() * self.input_dim()) as f64))
    }

    /// Every weight and bias, layer by layer (encoder then decoder), each
    /// layer's weights row-major followed by its bias.
    pub fn parameters(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.layers().map(DenseLayer::n_params).sum());
        for layer in self.layers() {
            out.extend_from_slice(layer.weights.as_slice());
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[T]) -> Result<()> {
        let expected: usize = self.layers().map(DenseLayer::n_params).sum();
        if params.len() != expected {
            return Err(Error::shape("AutoencoderNet::set_parameters", expected, params.len()));
        }
        let mut rest = params;
        for layer in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            let (nw, nb) = (layer.weights.as_slice().len(), layer.bias.len());
            layer.weights.as_mut_slice().copy_from_slice(&rest[..nw]);
            layer.bias.copy_from_slice(&rest[nw..nw + nb]);
            rest = &rest[nw + nb..];
        }
        Ok(())
    }

    /// Loss and its exact gradient by backpropagation, with the loss being
    /// [`AutoencoderNet::mse`] over `batch`.
    pub fn mse_gradient(&self, batch: &[Vec<T>]) -> Result<(T, FlatGradient<T>)> {
        if batch.is_empty() {
            return Err(Error::invalid("gradient needs at least one sample"));
        }
        let layers: Vec<&DenseLayer<T>> = self.layers().collect();
        let n_layers = layers.len();
        let var = self.variance();
        let scale = T::one() / T::lit((batch.len() * self.input_dim()) as f64);
        let mut grads: Vec<DenseLayer<T>> = layers
            .iter()
            .map(|l| DenseLayer::zeros(l.n_in(), l.n_out(), l.activation))
            .collect();
        let mut loss = T::zero();

        for x in batch {
            if x.len() != self.input_dim() {
                return Err(Error::shape("AutoencoderNet::mse_gradient", self.input_dim(), x.len()));
            }
            // inputs[l] feeds layer l; inputs[n_layers] is the reconstruction.
            let mut inputs = Vec::with_capacity(n_layers + 1);
            inputs.push(x.iter().zip(&var).map(|(&x, &v)| x / v).collect::<Vec<T>>());
            for (l, layer) in layers.iter().enumerate() {
                let out_scale = (l == n_layers - 1).then_some(var.as_slice());
                let next = layer.forward(&inputs[l], out_scale);
                inputs.push(next);
            }
            let out = &inputs[n_layers];
            loss += out.iter().zip(x).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>();

            let mut d_out: Vec<T> = out.iter().zip(x).map(|(&a, &b)| T::lit(2.0) * (a - b)).collect();
            for l in (0..n_layers).rev() {
                let layer = layers[l];
                let a_out = &inputs[l + 1];
                let dz: Vec<T> = d_out
                    .iter()
                    .zip(a_out)
                    .map(|(&g, &a)| g * layer.activation.derivative(a))
                    .collect();
                let du: Vec<T> = if l == n_layers - 1 {
                    dz.iter().zip(&var).map(|(&g, &v)| g * v).collect()
                } else {
                    dz.clone()
                };
                let input = &inputs[l];
                let g = &mut grads[l];
                for (i, &xi) in input.iter().enumerate() {
                    if xi == T::zero() {
                        continue;
                    }
                    let row = &mut g.weights.as_mut_slice()[i * du.len()..(i + 1) * du.len()];
                    for (w, &d) in row.iter_mut().zip(&du) {
                        *w += xi * d;
                    }
                }
                for (b, &d) in g.bias.iter_mut().zip(&dz) {
                    *b += d;
                }
                if l > 0 {
                    d_out = layer.weights.mul_vec(&du);
                }
            }
        }

        let mut flat = Vec::with_capacity(self.parameters().len());
        for g in &grads {
            flat.extend(g.weights.as_slice().iter().map(|&w| w * scale));
            flat.extend(g.bias.iter().map(|&b| b * scale));
        }
        Ok((loss * scale, flat))
    }

    /// Mini-batch gradient descent on [`AutoencoderNet::mse`]. Returns the
    /// MSE before training followed by the MSE after each epoch.
    pub fn finetune(
        &mut self,
        data: &[Vec<T>],
        epochs: usize,
        learning_rate: T,
        batch_size: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<T>> {
        let mut history = vec![self.mse(data)?];
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut params = self.parameters();
        for _ in 0..epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(batch_size.max(1)) {
                let batch: Vec<Vec<T>> = chunk.iter().map(|&i| data[i].clone()).collect();
                let (_, grad) = self.mse_gradient(&batch)?;
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= learning_rate * *g;
                }
                self.set_parameters(&params)?;
            }
            let loss = self.mse(data)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("autoencoder loss".into()));
            }
            history.push(loss);
        }
        Ok(history)
    }
}

/// Settings for the stacked-RBM initialization of the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RbmPretrain {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub cd_steps: usize,
}

impl Default for RbmPretrain {
    fn default() -> Self {
        RbmPretrain {
            epochs: 10,
            learning_rate: 0.01,
            batch_size: 20,
            cd_steps: 1,
        }
    }
}

/// Builds an encoder `input_dim -> hidden_sizes[0] -> ... -> d` and its
/// transposed decoder from a stack of RBMs.
///
/// The first RBM has Gaussian visibles, the rest binary. With `pretrain`
/// absent, or present with zero epochs, every RBM keeps its random
/// initialization.
pub fn init_from_pretraining<T: Scalar>(
    input_dim: usize,
    hidden_sizes: &[usize],
    pretrain: Option<&RbmPretrain>,
    data: &[Vec<T>],
    rng: &mut RngStream,
) -> Result<AutoencoderNet<T>> {
    if hidden_sizes.is_empty() || hidden_sizes.contains(&0) || input_dim == 0 {
        return Err(Error::Config("autoencoder layer sizes must be non-empty and positive".into()));
    }
    let mut sizes = vec![input_dim];
    sizes.extend_from_slice(hidden_sizes);
    let depth = hidden_sizes.len();
    let mut encoder = Vec::with_capacity(depth);
    let mut decoder = Vec::with_capacity(depth);
    let mut current: Vec<Vec<T>> = match pretrain {
        Some(p) if p.epochs > 0 => data.to_vec(),
        _ => Vec::new(),
    };
    for l in 0..depth {
        let kind = if l == 0 { VisibleKind::Gaussian } else { VisibleKind::Binary };
        let mut rbm = GbRbm::<T>::new(sizes[l], sizes[l + 1], kind, rng);
        if let Some(p) = pretrain.filter(|p| p.epochs > 0) {
            rbm.train(&current, p.epochs, p.batch_size, T::lit(p.learning_rate), p.cd_steps, rng)?;
            current = current
                .iter()
                .map(|v| rbm.prob_h_given_v(v))
                .collect::<Result<_>>()?;
        }
        decoder.push(DenseLayer {
            weights: rbm.weights.transpose(),
            bias: rbm.visible_bias.clone(),
            activation: if l == 0 { Activation::Linear } else { Activation::Sigmoid },
        });
        encoder.push(DenseLayer {
            weights: rbm.weights,
            bias: rbm.hidden_bias,
            activation: Activation::Sigmoid,
        });
    }
    decoder.reverse();
    AutoencoderNet::new(encoder, decoder, vec![T::one(); input_dim])
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxHead<T> {
    /// `d x L`.
    pub weights: Matrix2<T>,
    pub bias: Vec<T>,
}

/// Per-epoch trace of [`SoftmaxHead::train`]. Both vectors start with the
/// value before training.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxTrace<T> {
    pub loss: Vec<T>,
    pub train_accuracy: Vec<f64>,
}

impl<T: Scalar> SoftmaxHead<T> {
    pub fn zeros(dim: usize, n_classes: usize) -> Self {
        SoftmaxHead {
            weights: Matrix2::zeros(dim, n_classes),
            bias: vec![T::zero(); n_classes],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.weights.cols()
    }

    pub fn logits(&self, f: &[T]) -> Result<Vec<T>> {
        if f.len() != self.dim() {
            return Err(Error::shape("SoftmaxHead input", self.dim(), f.len()));
        }
        let mut z = self.weights.vec_mul(f);
        for (z, &b) in z.iter_mut().zip(&self.bias) {
            *z += b;
        }
        Ok(z)
    }

    pub fn probabilities(&self, f: &[T]) -> Result<Vec<T>> {
        Ok(softmax(&self.logits(f)?))
    }

    /// Most probable class; ties go to the lowest index.
    pub fn predict(&self, f: &[T]) -> Result<usize> {
        Ok(argmax(&self.logits(f)?))
    }

    pub fn accuracy(&self, features: &[Vec<T>], labels: &[usize]) -> Result<f64> {
        if features.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for (f, &y) in features.iter().zip(labels) {
            correct += usize::from(self.predict(f)? == y);
        }
        Ok(correct as f64 / features.len() as f64)
    }

    fn check_labels(&self, features: &[Vec<T>], labels: &[usize]) -> Result<()> {
        if features.len() != labels.len() {
            return Err(Error::shape("SoftmaxHead labels", features.len(), labels.len()));
        }
        if features.is_empty() {
            return Err(Error::invalid("softmax head needs at least one sample"));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= self.n_classes()) {
            return Err(Error::invalid(format!("label {y} outside 0..{}", self.n_classes())));
        }
        Ok(())
    }

    /// Mean cross-entropy `-(1/s) Σ log p(y_s | f_s)`.
    pub fn loss(&self, features: &[Vec<T>], labels: &[usize]) -> Result<T> {
        self.check_labels(features, labels)?;
        let mut total = T::zero();
        for (f, &y) in features.iter().zip(labels) {
            let z = self.logits(f)?;
            total += log_sum_exp(&z) - z[y];
        }
        Ok(total / T::lit(features.len() as f64))
    }

    /// Loss and gradient, weights row-major then bias.
    pub fn gradient(&self, features: &[Vec<T>], labels: &[usize]) -> Result<(T, Vec<T>)> {
        self.check_labels(features, labels)?;
        let (d, n) = (self.dim(), self.n_classes());
        let mut gw = vec![T::zero(); d * n];
        let mut gb = vec![T::zero(); n];
        let mut total = T::zero();
        for (f, &y) in features.iter().zip(labels) {
            let z = self.logits(f)?;
            total += log_sum_exp(&z) - z[y];
            let mut delta = softmax(&z);
            delta[y] -= T::one();
            for (i, &fi) in f.iter().enumerate() {
                for (w, &dc) in gw[i * n..(i + 1) * n].iter_mut().zip(&delta) {
                    *w += fi * dc;
                }
            }
            for (b, &dc) in gb.iter_mut().zip(&delta) {
                *b += dc;
            }
        }
        let scale = T::one() / T::lit(features.len() as f64);
        gw.extend(gb);
        gw.iter_mut().for_each(|g| *g *= scale);
        Ok((total * scale, gw))
    }

    pub fn parameters(&self) -> Vec<T> {
        let mut out = self.weights.as_slice().to_vec();
        out.extend_from_slice(&self.bias);
        out
    }

    pub fn set_parameters(&mut self, params: &[T]) -> Result<()> {
        let nw = self.weights.as_slice().len();
        if params.len() != nw + self.bias.len() {
            return Err(Error::shape("SoftmaxHead::set_parameters", nw + self.bias.len(), params.len()));
        }
        self.weights.as_mut_slice().copy_from_slice(&params[..nw]);
        self.bias.copy_from_slice(&params[nw..]);
        Ok(())
    }

    /// Mini-batch gradient descent on the cross-entropy.
    pub fn train(
        &mut self,
        features: &[Vec<T>],
        labels: &[usize],
        epochs: usize,
        learning_rate: T,
        batch_size: usize,
        rng: &mut RngStream,
    ) -> Result<SoftmaxTrace<T>> {
        let mut trace = SoftmaxTrace {
            loss: vec![self.loss(features, labels)?],
            train_accuracy: vec![self.accuracy(features, labels)?],
        };
        let mut order: Vec<usize> = (0..features.len()).collect();
        let mut params = self.parameters();
        for _ in 0..epochs {
            rng.shuffle(&mut order);
            for chunk in order.chunks(batch_size.max(1)) {
                let f: Vec<Vec<T>> = chunk.iter().map(|&i| features[i].clone()).collect();
                let y: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                let (_, grad) = self.gradient(&f, &y)?;
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= learning_rate * *g;
                }
                self.set_parameters(&params)?;
            }
            let loss = self.loss(features, labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite("softmax cross-entropy".into()));
            }
            trace.loss.push(loss);
            trace.train_accuracy.push(self.accuracy(features, labels)?);
        }
        Ok(trace)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<T: Scalar>(z: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_net(sizes: &[usize], seed: u64) -> AutoencoderNet<f64> {
        let mut rng = RngStream::new(seed);
        let mut net = init_from_pretraining::<f64>(sizes[0], &sizes[1..], None, &[], &mut rng).unwrap();
        let params: Vec<f64> = net.parameters().iter().map(|_| 0.5 * rng.standard_normal()).collect();
        net.set_parameters(&params).unwrap();
        net
    }

    #[test]
    fn zero_weights_give_half_codes_and_zero_output() {
        let mut net = random_net(&[4, 3, 2], 0);
        let zeros = vec![0.0; net.parameters().len()];
        net.set_parameters(&zeros).unwrap();
        assert_eq!(net.encode(&[1.0, -2.0, 3.0, 0.5]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(net.decode(&[0.3, 0.9]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn single_layer_reference_point() {
        let mut enc = DenseLayer::zeros(1, 1, Activation::Sigmoid);
        enc.weights[(0, 0)] = 3f64.ln();
        let net = AutoencoderNet::new(vec![enc], vec![DenseLayer::zeros(1, 1, Activation::Linear)], vec![1.0]).unwrap();
        assert!((net.encode(&[1.0]).unwrap()[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn input_std_scales_first_and_last_layers() {
        let mut enc = DenseLayer::zeros(1, 1, Activation::Sigmoid);
        enc.weights[(0, 0)] = 3f64.ln();
        let mut dec = DenseLayer::zeros(1, 1, Activation::Linear);
        dec.weights[(0, 0)] = 2.0;
        dec.bias[0] = 0.5;
        let net = AutoencoderNet::new(vec![enc], vec![dec], vec![2.0]).unwrap();
        // x / σ² = 1, so the code is sigmoid(ln 3).
        assert!((net.encode(&[4.0]).unwrap()[0] - 0.75).abs() < 1e-15);
        assert!((net.decode(&[0.75]).unwrap()[0] - (0.5 + 4.0 * 2.0 * 0.75)).abs() < 1e-15);
    }

    #[test]
    fn mse_reference() {
        let mut net = random_net(&[2, 1], 1);
        let zeros = vec![0.0; net.parameters().len()];
        net.set_parameters(&zeros).unwrap();
        assert_eq!(net.mse(&[vec![1.0, -1.0]]).unwrap(), 1.0);
        assert!(net.mse(&[]).is_err());
    }

    #[test]
    fn decoder_is_transpose_at_init() {
        let mut rng = RngStream::new(5);
        let net = init_from_pretraining::<f64>(144, &[64, 25], None, &[], &mut rng).unwrap();
        let enc: Vec<_> = net.encoder.iter().map(|l| l.weights.shape()).collect();
        let dec: Vec<_> = net.decoder.iter().map(|l| l.weights.shape()).collect();
        assert_eq!(enc, vec![(144, 64), (64, 25)]);
        assert_eq!(dec, vec![(25, 64), (64, 144)]);
        assert_eq!(net.decoder[0].weights, net.encoder[1].weights.transpose());
        assert_eq!(net.decoder[1].weights, net.encoder[0].weights.transpose());
        assert_eq!(net.decoder[1].activation, Activation::Linear);
    }

    #[test]
    fn zero_epoch_pretraining_matches_random_init() {
        let data: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64; 5]).collect();
        let cfg = RbmPretrain {
            epochs: 0,
            ..RbmPretrain::default()
        };
        let a = init_from_pretraining(5, &[4, 2], Some(&cfg), &data, &mut RngStream::new(3)).unwrap();
        let b = init_from_pretraining(5, &[4, 2], None, &data, &mut RngStream::new(3)).unwrap();
        assert_eq!(a, b);
        let w = a.encoder[0].weights.as_slice();
        let std = (w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64).sqrt();
        assert!(std < 0.03, "{std}");
    }

    #[test]
    fn finetune_lr_zero_is_a_no_op() {
        let mut net = random_net(&[3, 2], 2);
        let before = net.clone();
        let data = vec![vec![0.1, 0.2, 0.3]; 4];
        net.finetune(&data, 3, 0.0, 2, &mut RngStream::new(0)).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn softmax_uniform_loss_and_tie_break() {
        let head = SoftmaxHead::<f64>::zeros(3, 36);
        let f = vec![vec![0.2, -1.0, 4.0]; 5];
        let labels = vec![0, 7, 35, 3, 3];
        assert_eq!(head.loss(&f, &labels).unwrap(), 36f64.ln());
        assert_eq!(head.predict(&f[0]).unwrap(), 0);
        assert!(head.loss(&f, &[0, 0, 0, 0, 36]).is_err());
    }

    #[test]
    fn predict_large_margin_and_shift() {
        let mut head = SoftmaxHead::<f64>::zeros(2, 10);
        head.bias[7] = 50.0;
        assert_eq!(head.predict(&[0.3, 0.4]).unwrap(), 7);
        head.bias.iter_mut().for_each(|b| *b += 1000.0);
        assert_eq!(head.predict(&[0.3, 0.4]).unwrap(), 7);
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0f64; 4]), 0);
    }
}
