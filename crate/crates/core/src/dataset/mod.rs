//! Device-free localization data: RSS difference matrices, labeled
//! vectorized samples, normalization and stratified splitting.

mod io;
mod noise;
mod synth;

use serde::{Deserialize, Serialize};

pub use io::{load_dataset, read_dataset, write_dataset, write_dataset_to, DatasetError, DatasetFormat};
pub use noise::add_awgn;
pub use synth::{synth_scenario, Point, SynthConfig, SynthGeometry};

use crate::error::{Error, Result};
use crate::numerics::{Matrix2, RngStream};

/// Features whose fitted standard deviation falls below this carry no
/// information and standardize to 0 for every input.
pub const STD_FLOOR: f64 = 1e-8;

/// Square matrix of RSS differences (dB) between the target-present and
/// vacant scenes, indexed by receiving AP (row) and transmitting AP (column).
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRssMatrix {
    values: Matrix2<f64>,
}

impl DeltaRssMatrix {
    /// Wraps a square matrix of finite values.
    pub fn from_matrix(values: Matrix2<f64>) -> Result<Self> {
        if !values.is_square() {
            return Err(Error::shape(
                "DeltaRssMatrix",
                "square matrix",
                format!("{}x{}", values.rows(), values.cols()),
            ));
        }
        if !values.is_finite() {
            return Err(Error::invalid("RSS difference matrix has non-finite entries"));
        }
        Ok(DeltaRssMatrix { values })
    }

    pub fn n_aps(&self) -> usize {
        self.values.rows()
    }

    pub fn values(&self) -> &Matrix2<f64> {
        &self.values
    }

    pub fn into_matrix(self) -> Matrix2<f64> {
        self.values
    }
}

/// Elementwise `target - vacant` with the self-link diagonal set to zero.
pub fn delta_rss(target: &Matrix2<f64>, vacant: &Matrix2<f64>) -> Result<DeltaRssMatrix> {
    if target.shape() != vacant.shape() {
        return Err(Error::shape(
            "delta_rss",
            format!("{}x{}", target.rows(), target.cols()),
            format!("{}x{}", vacant.rows(), vacant.cols()),
        ));
    }
    let mut out = target.clone();
    out.axpy(-1.0, vacant);
    if out.is_square() {
        for i in 0..out.rows() {
            out[(i, i)] = 0.0;
        }
    }
    DeltaRssMatrix::from_matrix(out)
}

/// Row-major flattening into a length `N²` vector.
pub fn vectorize(m: &DeltaRssMatrix) -> Vec<f64> {
    m.values.as_slice().to_vec()
}

/// Inverse of [`vectorize`].
pub fn devectorize(v: &[f64], n: usize) -> Result<DeltaRssMatrix> {
    if v.len() != n * n {
        return Err(Error::shape("devectorize", n * n, v.len()));
    }
    DeltaRssMatrix::from_matrix(Matrix2::from_vec(n, n, v.to_vec())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DflSample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// Per-feature standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Identity transform of the given width.
    pub fn identity(dim: usize) -> Self {
        NormStats {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    /// Fits mean and (population) standard deviation column-wise.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Self {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in &rows {
            for (m, &x) in mean.iter_mut().zip(*row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in &rows {
            for ((v, &m), &x) in var.iter_mut().zip(&mean).zip(*row) {
                *v += (x - m) * (x - m);
            }
        }
        // constant columns get their exact value as mean so they map to 0
        if let Some(first) = rows.first() {
            for (j, m) in mean.iter_mut().enumerate() {
                if rows.iter().all(|r| r[j] == first[j]) {
                    *m = first[j];
                }
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        NormStats { mean, std }
    }

    pub fn apply_to(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| if s < STD_FLOOR { 0.0 } else { (v - m) / s })
            .collect()
    }
}

/// Labeled ΔRSS samples over `n_cells` grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DflDataset {
    pub samples: Vec<DflSample>,
    pub n_aps: usize,
    pub n_cells: usize,
    /// Trials per cell when every cell holds the same number of samples.
    pub trials_per_cell: Option<usize>,
    pub normalization: Option<NormStats>,
}

impl DflDataset {
    /// Validates feature widths (`n_aps²`) and labels (`< n_cells`).
    pub fn new(n_aps: usize, n_cells: usize, samples: Vec<DflSample>) -> Result<Self> {
        let dim = n_aps * n_aps;
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::shape(
                    "DflDataset::new",
                    format!("{dim} features"),
                    format!("{} features in sample {i}", s.features.len()),
                ));
            }
            if s.label >= n_cells {
                return Err(Error::invalid(format!(
                    "sample {i} has label {} but only {n_cells} cells",
                    s.label
                )));
            }
        }
        let trials_per_cell = uniform_count(&samples, n_cells);
        Ok(DflDataset {
            samples,
            n_aps,
            n_cells,
            trials_per_cell,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.n_aps * self.n_aps
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_cells];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Each sample's features as an `N x N` matrix.
    pub fn matrices(&self) -> Vec<Matrix2<f64>> {
        self.samples
            .iter()
            .map(|s| Matrix2::from_vec(self.n_aps, self.n_aps, s.features.clone()).expect("validated width"))
            .collect()
    }

    fn with_samples(&self, samples: Vec<DflSample>) -> DflDataset {
        DflDataset {
            trials_per_cell: uniform_count(&samples, self.n_cells),
            samples,
            n_aps: self.n_aps,
            n_cells: self.n_cells,
            normalization: self.normalization.clone(),
        }
    }
}

fn uniform_count(samples: &[DflSample], n_cells: usize) -> Option<usize> {
    if n_cells == 0 {
        return None;
    }
    let mut counts = vec![0usize; n_cells];
    for s in samples {
        counts[s.label] += 1;
    }
    let first = counts[0];
    (first > 0 && counts.iter().all(|&c| c == first)).then_some(first)
}

/// Standardizes every feature of `ds` to mean 0 and std 1, returning the
/// statistics for reuse on held-out data.
pub fn normalize_fit(ds: &DflDataset) -> (DflDataset, NormStats) {
    let stats = NormStats::fit(ds.samples.iter().map(|s| s.features.as_slice()), ds.feature_dim());
    let out = normalize_apply(ds, &stats).expect("stats fitted on this dataset");
    (out, stats)
}

/// Applies previously fitted statistics unchanged.
pub fn normalize_apply(ds: &DflDataset, stats: &NormStats) -> Result<DflDataset> {
    if stats.dim() != ds.feature_dim() {
        return Err(Error::shape("normalize_apply", stats.dim(), ds.feature_dim()));
    }
    let samples = ds
        .samples
        .iter()
        .map(|s| DflSample {
            features: stats.apply_to(&s.features),
            label: s.label,
        })
        .collect();
    let mut out = ds.with_samples(samples);
    out.normalization = Some(stats.clone());
    Ok(out)
}

/// Stratified split: each cell contributes `round(count * train_fraction)`
/// of its samples, chosen by a seeded shuffle, to the training side.
pub fn split(ds: &DflDataset, train_fraction: f64, seed: u64) -> Result<(DflDataset, DflDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); ds.n_cells];
    for (i, s) in ds.samples.iter().enumerate() {
        by_label[s.label].push(i);
    }
    let mut rng = RngStream::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for idx in by_label.iter_mut() {
        rng.shuffle(idx);
        let n_train = (idx.len() as f64 * train_fraction).round() as usize;
        let (a, b) = idx.split_at(n_train.min(idx.len()));
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        train.extend(a.into_iter().map(|i| ds.samples[i].clone()));
        test.extend(b.into_iter().map(|i| ds.samples[i].clone()));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid(format!(
            "train fraction {train_fraction} leaves {} train and {} test samples",
            train.len(),
            test.len()
        )));
    }
    Ok((ds.with_samples(train), ds.with_samples(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy(n_cells: usize, per_cell: usize, n_aps: usize) -> DflDataset {
        let mut rng = RngStream::new(5);
        let samples = (0..n_cells)
            .flat_map(|l| (0..per_cell).map(move |p| (l, p)))
            .map(|(l, _)| DflSample {
                features: (0..n_aps * n_aps).map(|_| rng.standard_normal() + l as f64).collect(),
                label: l,
            })
            .collect();
        DflDataset::new(n_aps, n_cells, samples).unwrap()
    }

    #[test]
    fn vacant_scene_is_zero() {
        let m = Matrix2::from_fn(4, 4, |r, c| -40.0 - (r * 4 + c) as f64);
        let d = delta_rss(&m, &m).unwrap();
        assert!(d.values().as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn delta_is_direct_subtraction() {
        let mut target = Matrix2::filled(3, 3, -45.0);
        let mut vacant = Matrix2::filled(3, 3, -45.0);
        target[(1, 2)] = -50.0;
        vacant[(1, 2)] = -47.0;
        let d = delta_rss(&target, &vacant).unwrap();
        assert_eq!(d.values()[(1, 2)], -3.0);
        let swapped = delta_rss(&vacant, &target).unwrap();
        for (a, b) in d.values().as_slice().iter().zip(swapped.values().as_slice()) {
            assert_eq!(*a, -*b);
        }
    }

    #[test]
    fn delta_forces_zero_diagonal_and_checks_shape() {
        let target = Matrix2::filled(2, 2, 1.0);
        let vacant = Matrix2::filled(2, 2, 0.0);
        let d = delta_rss(&target, &vacant).unwrap();
        assert_eq!(d.values().as_slice(), &[0.0, 1.0, 1.0, 0.0]);
        assert!(delta_rss(&target, &Matrix2::zeros(3, 3)).is_err());
    }

    #[test]
    fn vectorize_row_major() {
        let m = DeltaRssMatrix::from_matrix(Matrix2::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap()).unwrap();
        assert_eq!(vectorize(&m), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(devectorize(&[1.0, 2.0, 3.0, 4.0], 2).unwrap(), m);
        assert!(devectorize(&[0.0; 5], 2).is_err());
    }

    #[test]
    fn twenty_eight_aps_give_784_features() {
        let m = DeltaRssMatrix::from_matrix(Matrix2::zeros(28, 28)).unwrap();
        assert_eq!(vectorize(&m).len(), 784);
        assert_eq!(devectorize(&vec![0.0; 784], 28).unwrap().n_aps(), 28);
    }

    #[test]
    fn dataset_validation() {
        let bad_label = vec![DflSample { features: vec![0.0; 4], label: 3 }];
        assert!(DflDataset::new(2, 3, bad_label).is_err());
        let bad_width = vec![DflSample { features: vec![0.0; 3], label: 0 }];
        assert!(DflDataset::new(2, 3, bad_width).is_err());
        assert_eq!(toy(3, 4, 2).trials_per_cell, Some(4));
    }

    #[test]
    fn normalize_fit_standardizes() {
        let ds = toy(4, 10, 3);
        let (out, stats) = normalize_fit(&ds);
        let dim = ds.feature_dim();
        for j in 0..dim {
            let col: Vec<f64> = out.samples.iter().map(|s| s.features[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let std = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(mean.abs() < 1e-12, "mean {mean}");
            assert!((std - 1.0).abs() < 1e-9, "std {std}");
        }
        assert_eq!(normalize_apply(&out, &NormStats::identity(dim)).unwrap().samples, out.samples);
        assert_eq!(normalize_apply(&ds, &stats).unwrap(), out);
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let samples = (0..5)
            .map(|i| DflSample {
                features: vec![0.1, i as f64, 0.1, -3.3],
                label: 0,
            })
            .collect();
        let ds = DflDataset::new(2, 1, samples).unwrap();
        let (out, stats) = normalize_fit(&ds);
        for s in &out.samples {
            assert_eq!(s.features[0], 0.0);
            assert_eq!(s.features[2], 0.0);
            assert_eq!(s.features[3], 0.0);
        }
        let unseen = stats.apply_to(&[5.0, 2.0, -0.1, 1e6]);
        assert_eq!((unseen[0], unseen[2], unseen[3]), (0.0, 0.0, 0.0));
    }

    #[test]
    fn split_counts() {
        let ds = toy(36, 30, 2);
        let (train, test) = split(&ds, 25.0 / 30.0, 1).unwrap();
        assert_eq!((train.len(), test.len()), (900, 180));
        assert!(train.label_counts().iter().all(|&c| c == 25));
        let (a, b) = split(&ds, 0.5, 1).unwrap();
        assert!(a.label_counts().iter().all(|&c| c == 15));
        assert!(b.label_counts().iter().all(|&c| c == 15));
    }

    #[test]
    fn split_rejects_degenerate_fractions() {
        let ds = toy(2, 3, 2);
        assert!(split(&ds, 0.0, 1).is_err());
        assert!(split(&ds, 1.0, 1).is_err());
        assert!(split(&ds, 0.01, 1).is_err());
    }

    #[test]
    fn split_is_seeded() {
        let ds = toy(4, 10, 2);
        assert_eq!(split(&ds, 0.7, 9).unwrap(), split(&ds, 0.7, 9).unwrap());
        assert_ne!(split(&ds, 0.7, 9).unwrap().0, split(&ds, 0.7, 10).unwrap().0);
    }

    proptest! {
        #[test]
        fn vectorize_round_trip(n in 1usize..8, seed in any::<u64>()) {
            let mut rng = RngStream::new(seed);
            let m = Matrix2::from_fn(n, n, |_, _| rng.standard_normal());
            let d = DeltaRssMatrix::from_matrix(m).unwrap();
            prop_assert_eq!(devectorize(&vectorize(&d), n).unwrap(), d);
        }

        #[test]
        fn split_is_a_partition(fraction in 0.2_f64..0.8, seed in any::<u64>()) {
            let ds = toy(5, 6, 2);
            let (train, test) = split(&ds, fraction, seed).unwrap();
            let key = |s: &DflSample| (s.label, s.features.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
            let mut all: Vec<_> = train.samples.iter().chain(&test.samples).map(key).collect();
            let mut orig: Vec<_> = ds.samples.iter().map(key).collect();
            all.sort();
            orig.sort();
            prop_assert_eq!(all, orig);
        }
    }
}
