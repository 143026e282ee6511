use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::autoencoder::RbmPretrain;
use crate::cdbn::{CdbnConfig, LayerSpec};
use crate::dataset::{DatasetFormat, SynthConfig};

/// Where the samples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SynthConfig),
    File {
        path: PathBuf,
        /// Inferred from the extension when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        format: Option<DatasetFormat>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SynthConfig::default())
    }
}

/// Which stages feed the softmax head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// CDBN features, then the autoencoder code.
    CdbnAe,
    /// Autoencoder directly on the standardized ΔRSS vector.
    AutoencoderOnly,
    /// Softmax directly on the standardized CDBN features.
    CdbnOnly,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::CdbnAe, Method::AutoencoderOnly, Method::CdbnOnly];

    pub fn uses_cdbn(self) -> bool {
        matches!(self, Method::CdbnAe | Method::CdbnOnly)
    }

    pub fn uses_autoencoder(self) -> bool {
        matches!(self, Method::CdbnAe | Method::AutoencoderOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::CdbnAe => "cdbn-ae",
            Method::AutoencoderOnly => "autoencoder-only",
            Method::CdbnOnly => "cdbn-only",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Method::CdbnAe => 0,
            Method::AutoencoderOnly => 1,
            Method::CdbnOnly => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.code() == code)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method '{s}' (expected cdbn-ae, autoencoder-only or cdbn-only)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    /// Widths between the input and the code layer.
    pub hidden_sizes: Vec<usize>,
    /// Bottleneck width `d`.
    pub code_dim: usize,
    /// Stacked-RBM initialization; `None` keeps the random initialization.
    pub pretrain: Option<RbmPretrain>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            hidden_sizes: vec![64],
            code_dim: 25,
            pretrain: Some(RbmPretrain::default()),
            epochs: 100,
            learning_rate: 10.0,
            batch_size: 20,
        }
    }
}

impl AutoencoderConfig {
    /// `hidden_sizes` followed by `code_dim`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = self.hidden_sizes.clone();
        sizes.push(self.code_dim);
        sizes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftmaxConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        SoftmaxConfig {
            epochs: 300,
            learning_rate: 0.1,
            batch_size: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub layer_counts: Vec<usize>,
    pub dims: Vec<usize>,
    pub snr_db: Vec<f64>,
    /// Bottleneck widths evaluated by the SNR sweep.
    pub snr_dims: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            layer_counts: vec![1, 2, 3],
            dims: vec![3, 15, 25, 50, 150],
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            snr_dims: vec![25],
        }
    }
}

/// Everything one training run depends on.
///
/// `seed` is the only required key of the JSON form; every other key falls
/// back to its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub data: DataSource,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub cdbn: CdbnConfig,
    #[serde(default)]
    pub autoencoder: AutoencoderConfig,
    #[serde(default)]
    pub softmax: SoftmaxConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_train_fraction() -> f64 {
    25.0 / 30.0
}

fn default_method() -> Method {
    Method::CdbnAe
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 2024,
            data: DataSource::default(),
            train_fraction: default_train_fraction(),
            method: default_method(),
            cdbn: CdbnConfig::default(),
            autoencoder: AutoencoderConfig::default(),
            softmax: SoftmaxConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| ExperimentError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    /// SHA-256 of the compact JSON form.
    pub fn fingerprint(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config is always serializable");
        Sha256::digest(&bytes).into()
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |msg: String| Err(ExperimentError::Config(msg));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} must lie in (0, 1)", self.train_fraction));
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
            if self.method.uses_cdbn() {
                self.cdbn
                    .shapes(s.n_aps())
                    .map_err(|e| ExperimentError::Config(e.to_string()))?;
            }
        }
        if self.cdbn.batch_size == 0 || self.autoencoder.batch_size == 0 || self.softmax.batch_size == 0 {
            return bad("batch sizes must be positive".into());
        }
        let mut rates = vec![
            ("cdbn.learning_rate".to_string(), self.cdbn.learning_rate),
            ("autoencoder.learning_rate".to_string(), self.autoencoder.learning_rate),
            ("softmax.learning_rate".to_string(), self.softmax.learning_rate),
        ];
        rates.extend(self.cdbn.sparsity_rate.map(|r| ("cdbn.sparsity_rate".to_string(), r)));
        for (l, layer) in self.cdbn.layers.iter().enumerate() {
            rates.extend(layer.learning_rate.map(|r| (format!("cdbn.layers[{l}].learning_rate"), r)));
        }
        for (name, lr) in rates {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if self.autoencoder.code_dim == 0 || self.autoencoder.hidden_sizes.contains(&0) {
            return bad("autoencoder widths must be positive".into());
        }
        if let Some(p) = &self.autoencoder.pretrain {
            if p.batch_size == 0 || p.cd_steps == 0 || !(p.learning_rate.is_finite() && p.learning_rate >= 0.0) {
                return bad("autoencoder.pretrain needs positive batch size and CD steps and a finite rate".into());
            }
        }
        if self.sweep.layer_counts.contains(&0) || self.sweep.dims.contains(&0) || self.sweep.snr_dims.contains(&0) {
            return bad("sweep layer counts and dims must be at least 1".into());
        }
        Ok(())
    }

    /// The CDBN configuration truncated or extended to `n` layers. Extra
    /// layers repeat the last configured layer.
    pub fn cdbn_with_layers(&self, n: usize) -> CdbnConfig {
        let mut cdbn = self.cdbn.clone();
        let last = cdbn.layers.last().copied().unwrap_or(LayerSpec::new(36, 3, 2));
        cdbn.layers.resize(n, last);
        cdbn
    }

    pub(crate) fn dataset_path(&self) -> Option<(&Path, DatasetFormat)> {
        match &self.data {
            DataSource::File { path, format } => {
                Some((path.as_path(), format.unwrap_or_else(|| DatasetFormat::from_path(path))))
            }
            DataSource::Synthetic(_) => None,
        }
    }
}
