//! Trained pipeline and its binary file format.
//!
//! Layout: the 8 bytes `CDBN-DFL`, a format version byte, a little-endian
//! u64 payload length, the payload, then the SHA-256 of everything before
//! it. Every real number in the payload is a little-endian f64.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::config::Method;
use crate::autoencoder::{Activation, AutoencoderNet, DenseLayer, SoftmaxHead};
use crate::cdbn::CdbnStack;
use crate::crbm::{Crbm, CrbmShape};
use crate::dataset::NormStats;
use crate::gbrbm::VisibleKind;
use crate::numerics::Matrix2;

pub const BUNDLE_MAGIC: &[u8; 8] = b"CDBN-DFL";
pub const BUNDLE_VERSION: u8 = 1;
const HEADER_LEN: usize = 8 + 1 + 8;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("cannot access bundle {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model bundle (bad magic bytes)")]
    BadMagic,
    #[error("unsupported bundle version {found} (this build reads version {BUNDLE_VERSION})")]
    Version { found: u8 },
    #[error("bundle is truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("bundle checksum mismatch")]
    Checksum,
    #[error("malformed bundle payload: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub method: Method,
    pub n_aps: usize,
    pub n_cells: usize,
    pub input_norm: NormStats,
    pub cdbn: Option<CdbnStack<f64>>,
    /// Standardization of the CDBN features, fitted on the training set.
    pub feature_norm: Option<NormStats>,
    pub autoencoder: Option<AutoencoderNet<f64>>,
    pub head: SoftmaxHead<f64>,
    /// JSON of the configuration that produced this bundle.
    pub config_json: String,
    pub fingerprint: [u8; 32],
}

impl ModelBundle {
    pub fn input_dim(&self) -> usize {
        self.n_aps * self.n_aps
    }

    /// Checks that every stage's input width matches the previous output.
    pub fn validate(&self) -> Result<(), BundleError> {
        let bad = |m: String| Err(BundleError::Malformed(m));
        if self.input_norm.dim() != self.input_dim() {
            return bad(format!("input normalization has width {}", self.input_norm.dim()));
        }
        if self.method.uses_cdbn() != self.cdbn.is_some() || self.cdbn.is_some() != self.feature_norm.is_some() {
            return bad(format!("stages present do not match method {}", self.method));
        }
        if self.method.uses_autoencoder() != self.autoencoder.is_some() {
            return bad(format!("autoencoder presence does not match method {}", self.method));
        }
        let mut width = self.input_dim();
        if let (Some(stack), Some(norm)) = (&self.cdbn, &self.feature_norm) {
            if stack.input_side() != self.n_aps {
                return bad(format!("CDBN expects side {}, bundle has {} APs", stack.input_side(), self.n_aps));
            }
            width = stack.feature_len();
            if norm.dim() != width {
                return bad(format!("feature normalization width {} != {width}", norm.dim()));
            }
        }
        if let Some(ae) = &self.autoencoder {
            if ae.input_dim() != width {
                return bad(format!("autoencoder expects {} inputs, previous stage yields {width}", ae.input_dim()));
            }
            width = ae.code_dim();
        }
        if self.head.dim() != width || self.head.n_classes() != self.n_cells {
            return bad(format!(
                "softmax head is {}x{}, expected {width}x{}",
                self.head.dim(),
                self.head.n_classes(),
                self.n_cells
            ));
        }
        Ok(())
    }

    pub fn fingerprint_hex(&self) -> String {
        self.fingerprint.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(self.config_json.as_bytes());
        w.raw(&self.fingerprint);
        w.u8(self.method.code());
        w.len(self.n_aps);
        w.len(self.n_cells);
        w.norm(&self.input_norm);
        match &self.cdbn {
            Some(stack) => {
                w.u8(1);
                w.len(stack.input_side());
                w.len(stack.layers().len());
                for layer in stack.layers() {
                    w.crbm(layer);
                }
            }
            None => w.u8(0),
        }
        w.opt_norm(self.feature_norm.as_ref());
        match &self.autoencoder {
            Some(ae) => {
                w.u8(1);
                w.len(ae.encoder.len());
                for layer in ae.encoder.iter().chain(&ae.decoder) {
                    w.dense(layer);
                }
                w.reals(&ae.input_std);
            }
            None => w.u8(0),
        }
        w.matrix(&self.head.weights);
        w.reals(&self.head.bias);

        let payload = w.buf;
        let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + DIGEST_LEN);
        out.extend_from_slice(BUNDLE_MAGIC);
        out.push(BUNDLE_VERSION);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        if bytes.len() < BUNDLE_MAGIC.len() || &bytes[..BUNDLE_MAGIC.len()] != BUNDLE_MAGIC {
            return Err(BundleError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(BundleError::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        let version = bytes[8];
        if version != BUNDLE_VERSION {
            return Err(BundleError::Version { found: version });
        }
        let payload_len = u64::from_le_bytes(bytes[9..17].try_into().expect("8 bytes"));
        let expected = usize::try_from(payload_len)
            .ok()
            .and_then(|n| n.checked_add(HEADER_LEN + DIGEST_LEN))
            .ok_or(BundleError::Malformed("payload length overflows".into()))?;
        if bytes.len() < expected {
            return Err(BundleError::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(BundleError::Malformed(format!("{} trailing bytes", bytes.len() - expected)));
        }
        let body_end = expected - DIGEST_LEN;
        if Sha256::digest(&bytes[..body_end]).as_slice() != &bytes[body_end..] {
            return Err(BundleError::Checksum);
        }

        let mut r = Reader {
            buf: &bytes[HEADER_LEN..body_end],
        };
        let config_json =
            String::from_utf8(r.bytes()?.to_vec()).map_err(|_| BundleError::Malformed("config is not UTF-8".into()))?;
        let fingerprint: [u8; 32] = r.raw(32)?.try_into().expect("32 bytes");
        let method = Method::from_code(r.u8()?).ok_or(BundleError::Malformed("unknown method code".into()))?;
        let n_aps = r.len()?;
        let n_cells = r.len()?;
        let input_norm = r.norm()?;
        let cdbn = if r.flag()? {
            let side = r.len()?;
            let n = r.len()?;
            let layers = (0..n).map(|_| r.crbm()).collect::<Result<Vec<_>, _>>()?;
            Some(CdbnStack::from_layers(layers, side).map_err(|e| BundleError::Malformed(e.to_string()))?)
        } else {
            None
        };
        let feature_norm = if r.flag()? { Some(r.norm()?) } else { None };
        let autoencoder = if r.flag()? {
            let depth = r.len()?;
            let encoder = (0..depth).map(|_| r.dense()).collect::<Result<Vec<_>, _>>()?;
            let decoder = (0..depth).map(|_| r.dense()).collect::<Result<Vec<_>, _>>()?;
            let std = r.reals()?;
            Some(AutoencoderNet::new(encoder, decoder, std).map_err(|e| BundleError::Malformed(e.to_string()))?)
        } else {
            None
        };
        let weights = r.matrix()?;
        let bias = r.reals()?;
        if !r.buf.is_empty() {
            return Err(BundleError::Malformed(format!("{} unread payload bytes", r.buf.len())));
        }
        let bundle = ModelBundle {
            method,
            n_aps,
            n_cells,
            input_norm,
            cdbn,
            feature_norm,
            autoencoder,
            head: SoftmaxHead { weights, bias },
            config_json,
            fingerprint,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BundleError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|source| BundleError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BundleError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| BundleError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn len(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u64).to_le_bytes());
    }

    fn raw(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    fn bytes(&mut self, b: &[u8]) {
        self.len(b.len());
        self.raw(b);
    }

    fn reals(&mut self, v: &[f64]) {
        self.len(v.len());
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn matrix(&mut self, m: &Matrix2<f64>) {
        self.len(m.rows());
        self.len(m.cols());
        for x in m.as_slice() {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn norm(&mut self, n: &NormStats) {
        self.reals(&n.mean);
        self.reals(&n.std);
    }

    fn opt_norm(&mut self, n: Option<&NormStats>) {
        match n {
            Some(n) => {
                self.u8(1);
                self.norm(n);
            }
            None => self.u8(0),
        }
    }

    fn crbm(&mut self, layer: &Crbm<f64>) {
        let s = layer.shape();
        for v in [s.input_side, s.channels, s.groups, s.kernel_size, s.pool] {
            self.len(v);
        }
        self.u8(match s.visible {
            VisibleKind::Binary => 0,
            VisibleKind::Gaussian => 1,
        });
        for k in layer.kernels() {
            self.matrix(k);
        }
        self.reals(layer.hidden_bias());
        self.reals(layer.visible_bias());
    }

    fn dense(&mut self, layer: &DenseLayer<f64>) {
        self.u8(match layer.activation {
            Activation::Sigmoid => 0,
            Activation::Linear => 1,
        });
        self.matrix(&layer.weights);
        self.reals(&layer.bias);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn raw(&mut self, n: usize) -> Result<&'a [u8], BundleError> {
        if self.buf.len() < n {
            return Err(BundleError::Malformed(format!(
                "payload ends early: wanted {n} bytes, {} left",
                self.buf.len()
            )));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, BundleError> {
        Ok(self.raw(1)?[0])
    }

    fn flag(&mut self) -> Result<bool, BundleError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(BundleError::Malformed(format!("invalid presence flag {v}"))),
        }
    }

    fn len(&mut self) -> Result<usize, BundleError> {
        let v = u64::from_le_bytes(self.raw(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| BundleError::Malformed(format!("length {v} out of range")))
    }

    fn bytes(&mut self) -> Result<&'a [u8], BundleError> {
        let n = self.len()?;
        self.raw(n)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, BundleError> {
        let bytes = self.raw(n.checked_mul(8).ok_or(BundleError::Malformed("length overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn reals(&mut self) -> Result<Vec<f64>, BundleError> {
        let n = self.len()?;
        self.f64s(n)
    }

    fn matrix(&mut self) -> Result<Matrix2<f64>, BundleError> {
        let rows = self.len()?;
        let cols = self.len()?;
        let n = rows
            .checked_mul(cols)
            .ok_or(BundleError::Malformed("matrix size overflow".into()))?;
        Matrix2::from_vec(rows, cols, self.f64s(n)?).map_err(|e| BundleError::Malformed(e.to_string()))
    }

    fn norm(&mut self) -> Result<NormStats, BundleError> {
        let mean = self.reals()?;
        let std = self.reals()?;
        if mean.len() != std.len() {
            return Err(BundleError::Malformed("normalization mean/std widths differ".into()));
        }
        Ok(NormStats { mean, std })
    }

    fn crbm(&mut self) -> Result<Crbm<f64>, BundleError> {
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = self.len()?;
        }
        let visible = match self.u8()? {
            0 => VisibleKind::Binary,
            1 => VisibleKind::Gaussian,
            v => return Err(BundleError::Malformed(format!("unknown visible kind {v}"))),
        };
        let shape = CrbmShape {
            input_side: dims[0],
            channels: dims[1],
            groups: dims[2],
            kernel_size: dims[3],
            pool: dims[4],
            visible,
        };
        let n_kernels = shape
            .groups
            .checked_mul(shape.channels)
            .ok_or(BundleError::Malformed("kernel count overflow".into()))?;
        let kernels = (0..n_kernels).map(|_| self.matrix()).collect::<Result<Vec<_>, _>>()?;
        let hidden = self.reals()?;
        let visible_bias = self.reals()?;
        Crbm::from_parts(shape, kernels, hidden, visible_bias).map_err(|e| BundleError::Malformed(e.to_string()))
    }

    fn dense(&mut self) -> Result<DenseLayer<f64>, BundleError> {
        let activation = match self.u8()? {
            0 => Activation::Sigmoid,
            1 => Activation::Linear,
            v => return Err(BundleError::Malformed(format!("unknown activation {v}"))),
        };
        let weights = self.matrix()?;
        let bias = self.reals()?;
        if bias.len() != weights.cols() {
            return Err(BundleError::Malformed("dense bias width differs from weights".into()));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }
}
