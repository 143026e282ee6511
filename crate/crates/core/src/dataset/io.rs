//! Dataset files.
//!
//! CSV: a header line `#dfl,v1,n_aps=<N>,n_cells=<L>` followed by one row
//! per sample holding `N²` features and a trailing integer label.
//!
//! Binary: magic `DFL1`, little-endian `u32` N, L and sample count, then per
//! sample `N²` `f64` features and a `u32` label.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DflDataset, DflSample};

const BINARY_MAGIC: &[u8; 4] = b"DFL1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Csv,
    Binary,
}

impl DatasetFormat {
    /// Guesses the format from a file extension (`.csv` or anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::Binary,
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(DatasetFormat::Csv),
            "binary" | "bin" => Ok(DatasetFormat::Binary),
            other => Err(format!("unknown dataset format `{other}` (expected csv or binary)")),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Csv => "csv",
            DatasetFormat::Binary => "binary",
        })
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("read error: {0}")]
    Read(#[from] io::Error),
    #[error("missing or malformed header: {0}")]
    Header(String),
    #[error("row {row}: malformed value `{value}`")]
    MalformedRow { row: usize, value: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RowLength { row: usize, expected: usize, found: usize },
    #[error("row {row}: label {label} out of range for {n_cells} cells")]
    LabelOutOfRange { row: usize, label: u64, n_cells: usize },
    #[error("not a binary dataset file (bad magic)")]
    BadMagic,
    #[error("binary dataset truncated")]
    Truncated,
}

/// Reads a dataset file in the given format.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<DflDataset, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_dataset(BufReader::new(file), format)
}

pub fn read_dataset<R: BufRead>(reader: R, format: DatasetFormat) -> Result<DflDataset, DatasetError> {
    match format {
        DatasetFormat::Csv => read_csv(reader),
        DatasetFormat::Binary => read_binary(reader),
    }
}

/// Writes a dataset file; CSV values carry 17 significant digits.
pub fn write_dataset(ds: &DflDataset, path: impl AsRef<Path>, format: DatasetFormat) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_dataset_to(ds, &mut w, format).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_dataset_to<W: Write>(ds: &DflDataset, w: &mut W, format: DatasetFormat) -> io::Result<()> {
    match format {
        DatasetFormat::Csv => {
            writeln!(w, "#dfl,v1,n_aps={},n_cells={}", ds.n_aps, ds.n_cells)?;
            for s in &ds.samples {
                for x in &s.features {
                    write!(w, "{x:.16e},")?;
                }
                writeln!(w, "{}", s.label)?;
            }
        }
        DatasetFormat::Binary => {
            w.write_all(BINARY_MAGIC)?;
            w.write_all(&(ds.n_aps as u32).to_le_bytes())?;
            w.write_all(&(ds.n_cells as u32).to_le_bytes())?;
            w.write_all(&(ds.samples.len() as u32).to_le_bytes())?;
            for s in &ds.samples {
                for x in &s.features {
                    w.write_all(&x.to_le_bytes())?;
                }
                w.write_all(&(s.label as u32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn parse_header(line: &str) -> Result<(usize, usize), DatasetError> {
    let fields: Vec<&str> = line.trim_end().split(',').collect();
    let bad = || DatasetError::Header(line.trim_end().to_string());
    if fields.len() != 4 || fields[0] != "#dfl" || fields[1] != "v1" {
        return Err(bad());
    }
    let value = |field: &str, key: &str| -> Result<usize, DatasetError> {
        field
            .strip_prefix(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad)
    };
    Ok((value(fields[2], "n_aps=")?, value(fields[3], "n_cells=")?))
}

fn read_csv<R: BufRead>(reader: R) -> Result<DflDataset, DatasetError> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| DatasetError::Header("empty file".into()))?;
    let (n_aps, n_cells) = parse_header(&header)?;
    let dim = n_aps * n_aps;
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        // header is row 1
        let row = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(DatasetError::RowLength {
                row,
                expected: dim + 1,
                found: fields.len(),
            });
        }
        let features = fields[..dim]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| DatasetError::MalformedRow {
                        row,
                        value: f.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let label_field = fields[dim].trim();
        let label: u64 = label_field.parse().map_err(|_| DatasetError::MalformedRow {
            row,
            value: label_field.to_string(),
        })?;
        if label >= n_cells as u64 {
            return Err(DatasetError::LabelOutOfRange { row, label, n_cells });
        }
        samples.push(DflSample {
            features,
            label: label as usize,
        });
    }
    Ok(DflDataset::new(n_aps, n_cells, samples).expect("rows validated while parsing"))
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), DatasetError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => DatasetError::Truncated,
        _ => DatasetError::Read(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DatasetError> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_binary<R: BufRead>(mut reader: R) -> Result<DflDataset, DatasetError> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut reader, &mut magic).map_err(|_| DatasetError::BadMagic)?;
    if &magic != BINARY_MAGIC {
        return Err(DatasetError::BadMagic);
    }
    let n_aps = read_u32(&mut reader)? as usize;
    let n_cells = read_u32(&mut reader)? as usize;
    let count = read_u32(&mut reader)? as usize;
    let dim = n_aps * n_aps;
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    let mut buf = vec![0u8; dim * 8];
    for i in 0..count {
        read_exact_or_truncated(&mut reader, &mut buf)?;
        let features = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let label = read_u32(&mut reader)? as u64;
        if label >= n_cells as u64 {
            return Err(DatasetError::LabelOutOfRange {
                row: i + 1,
                label,
                n_cells,
            });
        }
        samples.push(DflSample {
            features,
            label: label as usize,
        });
    }
    Ok(DflDataset::new(n_aps, n_cells, samples).expect("records validated while parsing"))
}
