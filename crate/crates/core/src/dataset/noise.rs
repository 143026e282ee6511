use super::{DflDataset, DflSample};
use crate::numerics::RngStream;

/// Adds white Gaussian noise at `snr_db` relative to each sample's own mean
/// squared feature value.
///
/// Returns the noisy dataset and the number of all-zero samples that were
/// left untouched because they carry no signal power.
pub fn add_awgn(ds: &DflDataset, snr_db: f64, seed: u64) -> (DflDataset, usize) {
    let mut rng = RngStream::new(seed);
    let mut skipped = 0;
    let ratio = 10f64.powf(snr_db / 10.0);
    let samples = ds
        .samples
        .iter()
        .map(|s| {
            let n = s.features.len().max(1) as f64;
            let power = s.features.iter().map(|x| x * x).sum::<f64>() / n;
            if power == 0.0 {
                skipped += 1;
                return s.clone();
            }
            let std = (power / ratio).sqrt();
            DflSample {
                features: s.features.iter().map(|&x| x + std * rng.standard_normal()).collect(),
                label: s.label,
            }
        })
        .collect();
    let mut out = ds.clone();
    out.samples = samples;
    (out, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_scenario, SynthConfig};

    fn data() -> DflDataset {
        synth_scenario(&SynthConfig {
            trials_per_cell: 2,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn huge_snr_is_a_no_op() {
        let ds = data();
        let (noisy, skipped) = add_awgn(&ds, 300.0, 1);
        assert_eq!(skipped, 0);
        for (a, b) in ds.samples.iter().zip(&noisy.samples) {
            for (x, y) in a.features.iter().zip(&b.features) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_db_noise_matches_signal_power() {
        let ds = data();
        let (noisy, _) = add_awgn(&ds, 0.0, 3);
        let (mut sig, mut noise) = (0.0, 0.0);
        let mut count = 0;
        for (a, b) in ds.samples.iter().zip(&noisy.samples) {
            for (x, y) in a.features.iter().zip(&b.features) {
                sig += x * x;
                noise += (y - x) * (y - x);
                count += 1;
            }
        }
        assert!(count >= 10_000);
        let ratio = noise / sig;
        assert!((ratio - 1.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn seeded_and_skips_silent_samples() {
        let mut ds = data();
        ds.samples[0].features.iter_mut().for_each(|x| *x = 0.0);
        let (a, skipped) = add_awgn(&ds, 5.0, 9);
        let (b, _) = add_awgn(&ds, 5.0, 9);
        assert_eq!(a, b);
        assert_eq!(skipped, 1);
        assert_eq!(a.samples[0], ds.samples[0]);
    }
}
