use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::pipeline::{fit_cdbn, fit_head, load_data, prepare, with_method, CdbnStage, HeadStage, Prepared};
use super::{stage_seed, ExperimentError, Stage};
use crate::cdbn::CdbnStack;
use crate::dataset::{add_awgn, DflDataset, NormStats};

type Res<T> = Result<T, ExperimentError>;

/// A row type with a fixed CSV schema.
pub trait ToCsv {
    const HEADER: &'static str;
    fn csv_row(&self) -> String;

    fn to_csv(rows: &[Self]) -> String
    where
        Self: Sized,
    {
        let mut out = format!("{}\n", Self::HEADER);
        for r in rows {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRow {
    pub layers: usize,
    pub accuracy: f64,
}

impl ToCsv for LayerRow {
    const HEADER: &'static str = "layers,accuracy";
    fn csv_row(&self) -> String {
        format!("{},{}", self.layers, self.accuracy)
    }
}

/// Training accuracy of the softmax head after `epoch` passes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub dim: usize,
    pub epoch: usize,
    pub train_acc: f64,
}

impl ToCsv for CurveRow {
    const HEADER: &'static str = "dim,epoch,train_acc";
    fn csv_row(&self) -> String {
        format!("{},{},{}", self.dim, self.epoch, self.train_acc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimRow {
    pub method: Method,
    pub dim: usize,
    pub test_acc: f64,
}

impl ToCsv for DimRow {
    const HEADER: &'static str = "method,dim,test_acc";
    fn csv_row(&self) -> String {
        format!("{},{},{}", self.method, self.dim, self.test_acc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimsSweep {
    pub curves: Vec<CurveRow>,
    pub tests: Vec<DimRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrRow {
    pub method: Method,
    pub snr_db: f64,
    pub dim: usize,
    pub accuracy: f64,
}

impl ToCsv for SnrRow {
    const HEADER: &'static str = "method,snr_db,dim,accuracy";
    fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.method, self.snr_db, self.dim, self.accuracy)
    }
}

fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    correct as f64 / labels.len() as f64
}

fn standardized(ds: &DflDataset, norm: &NormStats) -> Vec<Vec<f64>> {
    ds.samples.iter().map(|s| norm.apply_to(&s.features)).collect()
}

fn setup(cfg: &ExperimentConfig) -> Res<Prepared> {
    cfg.validate()?;
    let ds = load_data(cfg)?;
    prepare(cfg, &ds)
}

fn check_cdbn(cfg: &ExperimentConfig, n_aps: usize) -> Res<()> {
    cfg.cdbn
        .shapes(n_aps)
        .map(|_| ())
        .map_err(|e| ExperimentError::Config(e.to_string()))
}

/// Test accuracy of the full pipeline for each CDBN depth.
///
/// Greedy pretraining makes a shallower stack exactly the prefix of a deeper
/// one trained with the same seed, so the deepest stack is trained once and
/// each depth uses its prefix with freshly fitted feature statistics.
pub fn sweep_layers(cfg: &ExperimentConfig, counts: &[usize]) -> Res<Vec<LayerRow>> {
    if counts.is_empty() || counts.contains(&0) {
        return Err(ExperimentError::Config("layer counts must be non-empty and at least 1".into()));
    }
    let prepared = setup(cfg)?;
    let n_aps = prepared.train.n_aps;
    let deepest = *counts.iter().max().expect("non-empty");
    let full_cfg = cfg.cdbn_with_layers(deepest);
    full_cfg
        .shapes(n_aps)
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let full = fit_cdbn(&full_cfg, cfg.seed, n_aps, &prepared.train_x)?;
    let test_x = standardized(&prepared.test, &prepared.input_norm);
    let test_y = prepared.test.labels();

    let mut rows = Vec::with_capacity(counts.len());
    for &n in counts {
        let stack = CdbnStack::from_layers(full.stack.layers()[..n].to_vec(), n_aps)?;
        let stage = stage_from_stack(stack, &prepared.train_x)?;
        let run_cfg = with_method(cfg, Method::CdbnAe, None);
        let head = fit_head(&run_cfg, true, &stage.train_features, &prepared.train_y, prepared.train.n_cells)?;
        let pred = head.predict(&stage.transform(&test_x)?)?;
        rows.push(LayerRow {
            layers: n,
            accuracy: accuracy(&pred, &test_y),
        });
    }
    Ok(rows)
}

fn stage_from_stack(stack: CdbnStack<f64>, train_x: &[Vec<f64>]) -> Res<CdbnStage> {
    let mut stage = CdbnStage {
        feature_norm: NormStats::identity(stack.feature_len()),
        stack,
        train_features: Vec::new(),
        reports: Vec::new(),
        seconds: 0.0,
    };
    let raw = stage.transform(train_x)?;
    stage.feature_norm = NormStats::fit(raw.iter().map(Vec::as_slice), stage.stack.feature_len());
    stage.train_features = raw.iter().map(|f| stage.feature_norm.apply_to(f)).collect();
    Ok(stage)
}

/// Bottleneck-width sweep with both baselines.
///
/// CDBN-only has no bottleneck; its single accuracy is repeated on every
/// `dim` row so each method has one row per requested width.
pub fn sweep_dims(cfg: &ExperimentConfig, dims: &[usize]) -> Res<DimsSweep> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(ExperimentError::Config("dims must be non-empty and at least 1".into()));
    }
    let prepared = setup(cfg)?;
    let n_aps = prepared.train.n_aps;
    let n_cells = prepared.train.n_cells;
    check_cdbn(cfg, n_aps)?;
    let cdbn = fit_cdbn(&cfg.cdbn, cfg.seed, n_aps, &prepared.train_x)?;
    let test_x = standardized(&prepared.test, &prepared.input_norm);
    let test_feats = cdbn.transform(&test_x)?;
    let test_y = prepared.test.labels();

    let cdbn_only = fit_head(&with_method(cfg, Method::CdbnOnly, None), false, &cdbn.train_features, &prepared.train_y, n_cells)?;
    let cdbn_only_acc = accuracy(&cdbn_only.predict(&test_feats)?, &test_y);

    let mut curves = Vec::new();
    let mut tests = Vec::new();
    for &d in dims {
        let full_cfg = with_method(cfg, Method::CdbnAe, Some(d));
        let full = fit_head(&full_cfg, true, &cdbn.train_features, &prepared.train_y, n_cells)?;
        curves.extend(full.softmax.train_accuracy.iter().enumerate().map(|(epoch, &a)| CurveRow {
            dim: d,
            epoch,
            train_acc: a,
        }));
        tests.push(DimRow {
            method: Method::CdbnAe,
            dim: d,
            test_acc: accuracy(&full.predict(&test_feats)?, &test_y),
        });

        let ae_cfg = with_method(cfg, Method::AutoencoderOnly, Some(d));
        let ae = fit_head(&ae_cfg, true, &prepared.train_x, &prepared.train_y, n_cells)?;
        tests.push(DimRow {
            method: Method::AutoencoderOnly,
            dim: d,
            test_acc: accuracy(&ae.predict(&test_x)?, &test_y),
        });
        tests.push(DimRow {
            method: Method::CdbnOnly,
            dim: d,
            test_acc: cdbn_only_acc,
        });
    }
    Ok(DimsSweep { curves, tests })
}

/// Trains on clean data once per width and evaluates on the test split
/// corrupted at each SNR, for CDBN-AE and the autoencoder-only baseline.
pub fn sweep_snr(cfg: &ExperimentConfig, snrs: &[f64], dims: &[usize]) -> Res<Vec<SnrRow>> {
    if dims.is_empty() || dims.contains(&0) || snrs.iter().any(|s| s.is_nan()) {
        return Err(ExperimentError::Config("SNR sweep needs widths ≥ 1 and numeric SNRs".into()));
    }
    let prepared = setup(cfg)?;
    let n_aps = prepared.train.n_aps;
    let n_cells = prepared.train.n_cells;
    check_cdbn(cfg, n_aps)?;
    let cdbn = fit_cdbn(&cfg.cdbn, cfg.seed, n_aps, &prepared.train_x)?;

    let mut heads: Vec<(Method, usize, HeadStage)> = Vec::new();
    for &d in dims {
        let full = fit_head(&with_method(cfg, Method::CdbnAe, Some(d)), true, &cdbn.train_features, &prepared.train_y, n_cells)?;
        heads.push((Method::CdbnAe, d, full));
        let ae = fit_head(&with_method(cfg, Method::AutoencoderOnly, Some(d)), true, &prepared.train_x, &prepared.train_y, n_cells)?;
        heads.push((Method::AutoencoderOnly, d, ae));
    }

    let test_y = prepared.test.labels();
    let noise_seed = stage_seed(cfg.seed, Stage::Noise);
    let mut rows = Vec::new();
    for (i, &snr) in snrs.iter().enumerate() {
        let (noisy, _) = add_awgn(&prepared.test, snr, noise_seed.wrapping_add(i as u64));
        let x = standardized(&noisy, &prepared.input_norm);
        let feats = cdbn.transform(&x)?;
        for (method, dim, head) in &heads {
            let input = if method.uses_cdbn() { &feats } else { &x };
            rows.push(SnrRow {
                method: *method,
                snr_db: snr,
                dim: *dim,
                accuracy: accuracy(&head.predict(input)?, &test_y),
            });
        }
    }
    Ok(rows)
}
