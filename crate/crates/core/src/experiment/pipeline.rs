use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::bundle::ModelBundle;
use super::config::{DataSource, ExperimentConfig, Method};
use super::{stage_seed, ExperimentError, Stage};
use crate::autoencoder::{init_from_pretraining, AutoencoderNet, SoftmaxHead, SoftmaxTrace};
use crate::cdbn::{pretrain_greedy, CdbnConfig, CdbnStack, LayerReport};
use crate::dataset::{load_dataset, split, synth_scenario, DflDataset, NormStats};
use crate::numerics::{Matrix2, RngStream};

type Res<T> = Result<T, ExperimentError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

fn timed<T>(times: &mut Vec<StageTime>, stage: &str, f: impl FnOnce() -> Res<T>) -> Res<T> {
    let start = Instant::now();
    let out = f()?;
    times.push(StageTime {
        stage: stage.to_string(),
        seconds: start.elapsed().as_secs_f64(),
    });
    Ok(out)
}

/// Generates or reads the configured dataset.
pub fn load_data(cfg: &ExperimentConfig) -> Res<DflDataset> {
    match &cfg.data {
        DataSource::Synthetic(s) => synth_scenario(s).map_err(|e| ExperimentError::Config(e.to_string())),
        DataSource::File { .. } => {
            let (path, format) = cfg.dataset_path().expect("file source");
            Ok(load_dataset(path, format)?)
        }
    }
}

/// The split and the training-set standardization.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: DflDataset,
    pub test: DflDataset,
    pub input_norm: NormStats,
    /// Standardized training features.
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<usize>,
}

pub fn prepare(cfg: &ExperimentConfig, ds: &DflDataset) -> Res<Prepared> {
    let (train, test) = split(ds, cfg.train_fraction, stage_seed(cfg.seed, Stage::Split))?;
    Ok(prepare_train(train, test))
}

fn prepare_train(train: DflDataset, test: DflDataset) -> Prepared {
    let input_norm = NormStats::fit(train.samples.iter().map(|s| s.features.as_slice()), train.feature_dim());
    let train_x = train.samples.iter().map(|s| input_norm.apply_to(&s.features)).collect();
    let train_y = train.labels();
    Prepared {
        train,
        test,
        input_norm,
        train_x,
        train_y,
    }
}

/// A pretrained CDBN with the statistics that standardize its features.
#[derive(Debug, Clone)]
pub struct CdbnStage {
    pub stack: CdbnStack<f64>,
    pub feature_norm: NormStats,
    /// Standardized features of the training set.
    pub train_features: Vec<Vec<f64>>,
    pub reports: Vec<LayerReport>,
    pub seconds: f64,
}

impl CdbnStage {
    /// Standardized CDBN features of already standardized inputs.
    pub fn transform(&self, xs: &[Vec<f64>]) -> Res<Vec<Vec<f64>>> {
        let feats = cdbn_features(&self.stack, xs)?;
        Ok(feats.iter().map(|f| self.feature_norm.apply_to(f)).collect())
    }
}

fn to_matrices(xs: &[Vec<f64>], side: usize) -> Res<Vec<Matrix2<f64>>> {
    xs.iter()
        .map(|x| Matrix2::from_vec(side, side, x.clone()).map_err(ExperimentError::from))
        .collect()
}

fn cdbn_features(stack: &CdbnStack<f64>, xs: &[Vec<f64>]) -> Res<Vec<Vec<f64>>> {
    let mats = to_matrices(xs, stack.input_side())?;
    Ok(stack.features_batch(&mats)?)
}

/// Greedy CDBN pretraining on standardized training inputs.
pub fn fit_cdbn(cdbn: &CdbnConfig, seed: u64, n_aps: usize, train_x: &[Vec<f64>]) -> Res<CdbnStage> {
    let start = Instant::now();
    let mats = to_matrices(train_x, n_aps)?;
    let mut rng = RngStream::new(stage_seed(seed, Stage::Cdbn));
    let (stack, reports) = pretrain_greedy(cdbn, &mats, &mut rng)?;
    let raw = stack.features_batch(&mats)?;
    let feature_norm = NormStats::fit(raw.iter().map(Vec::as_slice), stack.feature_len());
    let train_features = raw.iter().map(|f| feature_norm.apply_to(f)).collect();
    Ok(CdbnStage {
        stack,
        feature_norm,
        train_features,
        reports,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// The optional autoencoder and the softmax head on top of some features.
#[derive(Debug, Clone)]
pub struct HeadStage {
    pub autoencoder: Option<AutoencoderNet<f64>>,
    pub head: SoftmaxHead<f64>,
    /// Autoencoder MSE before fine-tuning, then after each epoch.
    pub autoencoder_mse: Vec<f64>,
    pub softmax: SoftmaxTrace<f64>,
    pub times: Vec<StageTime>,
}

impl HeadStage {
    fn codes(&self, inputs: &[Vec<f64>]) -> Res<Vec<Vec<f64>>> {
        match &self.autoencoder {
            Some(ae) => inputs
                .par_iter()
                .map(|x| ae.encode(x).map_err(ExperimentError::from))
                .collect(),
            None => Ok(inputs.to_vec()),
        }
    }

    pub fn predict(&self, inputs: &[Vec<f64>]) -> Res<Vec<usize>> {
        self.codes(inputs)?
            .iter()
            .map(|c| self.head.predict(c).map_err(ExperimentError::from))
            .collect()
    }
}

/// Trains the autoencoder (if `use_autoencoder`) and the softmax head.
pub fn fit_head(
    cfg: &ExperimentConfig,
    use_autoencoder: bool,
    inputs: &[Vec<f64>],
    labels: &[usize],
    n_cells: usize,
) -> Res<HeadStage> {
    let mut times = Vec::new();
    let ae_cfg = &cfg.autoencoder;
    let (autoencoder, autoencoder_mse) = if use_autoencoder {
        let dim = inputs.first().map_or(0, Vec::len);
        let mut net = timed(&mut times, "autoencoder-init", || {
            let mut rng = RngStream::new(stage_seed(cfg.seed, Stage::AutoencoderInit));
            Ok(init_from_pretraining(
                dim,
                &ae_cfg.layer_sizes(),
                ae_cfg.pretrain.as_ref(),
                inputs,
                &mut rng,
            )?)
        })?;
        let history = timed(&mut times, "finetune", || {
            let mut rng = RngStream::new(stage_seed(cfg.seed, Stage::Finetune));
            Ok(net.finetune(inputs, ae_cfg.epochs, ae_cfg.learning_rate, ae_cfg.batch_size, &mut rng)?)
        })?;
        (Some(net), history)
    } else {
        (None, Vec::new())
    };
    let mut stage = HeadStage {
        autoencoder,
        head: SoftmaxHead::zeros(0, n_cells),
        autoencoder_mse,
        softmax: SoftmaxTrace {
            loss: Vec::new(),
            train_accuracy: Vec::new(),
        },
        times,
    };
    let codes = stage.codes(inputs)?;
    let code_dim = codes.first().map_or(0, Vec::len);
    let sm = &cfg.softmax;
    let mut head = SoftmaxHead::zeros(code_dim, n_cells);
    let trace = timed(&mut stage.times, "softmax", || {
        let mut rng = RngStream::new(stage_seed(cfg.seed, Stage::Softmax));
        Ok(head.train(&codes, labels, sm.epochs, sm.learning_rate, sm.batch_size, &mut rng)?)
    })?;
    stage.head = head;
    stage.softmax = trace;
    Ok(stage)
}

/// Per-stage traces of one training run.
#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub cdbn: Vec<LayerReport>,
    pub autoencoder_mse: Vec<f64>,
    pub softmax: SoftmaxTrace<f64>,
    pub stage_seconds: Vec<StageTime>,
}

pub(crate) fn assemble(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    cdbn: Option<&CdbnStage>,
    head: HeadStage,
) -> ModelBundle {
    let train = &prepared.train;
    ModelBundle {
        method: cfg.method,
        n_aps: train.n_aps,
        n_cells: train.n_cells,
        input_norm: prepared.input_norm.clone(),
        cdbn: cdbn.map(|c| c.stack.clone()),
        feature_norm: cdbn.map(|c| c.feature_norm.clone()),
        autoencoder: head.autoencoder,
        head: head.head,
        config_json: cfg.to_json(),
        fingerprint: cfg.fingerprint(),
    }
}

/// Trains every stage of `cfg.method` on the prepared training split.
/// Nothing here reads the test split.
pub fn train_model(cfg: &ExperimentConfig, prepared: &Prepared) -> Res<(ModelBundle, TrainTrace)> {
    cfg.validate()?;
    let train = &prepared.train;
    let mut times = vec![];
    let cdbn = if cfg.method.uses_cdbn() {
        cfg.cdbn
            .shapes(train.n_aps)
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        let stage = fit_cdbn(&cfg.cdbn, cfg.seed, train.n_aps, &prepared.train_x)?;
        times.push(StageTime {
            stage: "cdbn".into(),
            seconds: stage.seconds,
        });
        Some(stage)
    } else {
        None
    };
    let inputs = cdbn.as_ref().map_or(&prepared.train_x, |c| &c.train_features);
    let head = fit_head(cfg, cfg.method.uses_autoencoder(), inputs, &prepared.train_y, train.n_cells)?;
    times.extend(head.times.iter().cloned());
    let trace = TrainTrace {
        cdbn: cdbn.as_ref().map(|c| c.reports.clone()).unwrap_or_default(),
        autoencoder_mse: head.autoencoder_mse.clone(),
        softmax: head.softmax.clone(),
        stage_seconds: times,
    };
    let bundle = assemble(cfg, prepared, cdbn.as_ref(), head);
    Ok((bundle, trace))
}

/// Output of [`run_train`]: the bundle plus the split it was trained on.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub bundle: ModelBundle,
    pub trace: TrainTrace,
    pub prepared: Prepared,
}

/// Load or generate, split, standardize, pretrain, fine-tune, fit the head.
pub fn run_train(cfg: &ExperimentConfig) -> Res<TrainRun> {
    cfg.validate()?;
    let ds = load_data(cfg)?;
    let prepared = prepare(cfg, &ds)?;
    let (bundle, trace) = train_model(cfg, &prepared)?;
    Ok(TrainRun {
        bundle,
        trace,
        prepared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub n_samples: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub stage_seconds: Vec<StageTime>,
}

impl EvalReport {
    pub fn from_predictions(predicted: &[usize], labels: &[usize], n_cells: usize, stage_seconds: Vec<StageTime>) -> Self {
        let mut confusion = vec![vec![0usize; n_cells]; n_cells];
        let mut correct = 0usize;
        for (&p, &y) in predicted.iter().zip(labels) {
            confusion[y][p] += 1;
            correct += usize::from(p == y);
        }
        let n = labels.len();
        EvalReport {
            accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
            n_samples: n,
            confusion,
            stage_seconds,
        }
    }

    /// One row per cell: `cell,n_samples,correct,accuracy`, then an `all` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell,n_samples,correct,accuracy\n");
        for (cell, row) in self.confusion.iter().enumerate() {
            let n: usize = row.iter().sum();
            let acc = if n == 0 { 0.0 } else { row[cell] as f64 / n as f64 };
            out.push_str(&format!("{cell},{n},{},{acc}\n", row[cell]));
        }
        let correct: usize = (0..self.confusion.len()).map(|c| self.confusion[c][c]).sum();
        out.push_str(&format!("all,{},{correct},{}\n", self.n_samples, self.accuracy));
        out
    }
}

impl ModelBundle {
    /// Inputs of the softmax head for raw (unstandardized) feature vectors.
    pub fn head_inputs(&self, raw: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ExperimentError> {
        let mut times = Vec::new();
        self.head_inputs_timed(raw, &mut times)
    }

    fn head_inputs_timed(&self, raw: &[Vec<f64>], times: &mut Vec<StageTime>) -> Res<Vec<Vec<f64>>> {
        if let Some(x) = raw.iter().find(|x| x.len() != self.input_dim()) {
            return Err(crate::Error::shape("ModelBundle input", self.input_dim(), x.len()).into());
        }
        let mut xs: Vec<Vec<f64>> = timed(times, "normalize", || {
            Ok(raw.iter().map(|x| self.input_norm.apply_to(x)).collect())
        })?;
        if let (Some(stack), Some(norm)) = (&self.cdbn, &self.feature_norm) {
            xs = timed(times, "cdbn-features", || {
                let feats = cdbn_features(stack, &xs)?;
                Ok(feats.iter().map(|f| norm.apply_to(f)).collect())
            })?;
        }
        if let Some(ae) = &self.autoencoder {
            xs = timed(times, "encode", || {
                xs.par_iter()
                    .map(|x| ae.encode(x).map_err(ExperimentError::from))
                    .collect()
            })?;
        }
        Ok(xs)
    }

    pub fn predict_batch(&self, raw: &[Vec<f64>]) -> Result<Vec<usize>, ExperimentError> {
        self.head_inputs(raw)?
            .iter()
            .map(|c| self.head.predict(c).map_err(ExperimentError::from))
            .collect()
    }
}

/// Applies the stored normalization, features, encoder and head to `ds`.
pub fn run_eval(bundle: &ModelBundle, ds: &DflDataset) -> Res<EvalReport> {
    if ds.n_aps != bundle.n_aps {
        return Err(crate::Error::shape("run_eval APs", bundle.n_aps, ds.n_aps).into());
    }
    if ds.n_cells > bundle.n_cells {
        return Err(crate::Error::shape("run_eval cells", bundle.n_cells, ds.n_cells).into());
    }
    let mut times = Vec::new();
    let raw: Vec<Vec<f64>> = ds.samples.iter().map(|s| s.features.clone()).collect();
    let codes = bundle.head_inputs_timed(&raw, &mut times)?;
    let predicted = timed(&mut times, "predict", || {
        codes
            .iter()
            .map(|c| bundle.head.predict(c).map_err(ExperimentError::from))
            .collect::<Res<Vec<usize>>>()
    })?;
    Ok(EvalReport::from_predictions(&predicted, &ds.labels(), bundle.n_cells, times))
}

/// Builds a method-specific config from a base one.
pub(crate) fn with_method(cfg: &ExperimentConfig, method: Method, code_dim: Option<usize>) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.method = method;
    if let Some(d) = code_dim {
        c.autoencoder.code_dim = d;
    }
    c
}
