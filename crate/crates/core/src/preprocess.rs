//! Per-sample, per-channel z-normalization followed by uniform subsampling.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledSeries;
use crate::error::{FetaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_length: usize,
    pub sigma_floor: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_length: 128,
            sigma_floor: 1e-8,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_length < 2 {
            return Err(FetaError::Config("target length must be at least 2".into()));
        }
        if !(self.sigma_floor > 0.0) {
            return Err(FetaError::Config("sigma floor must be positive".into()));
        }
        Ok(())
    }
}

/// Which split a sequence was read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSource {
    pub split: Split,
    pub series_id: usize,
    pub channel: usize,
}

/// A normalized, length-capped univariate sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSequence {
    pub values: Vec<f64>,
    pub source: SequenceSource,
}

impl AsRef<[f64]> for ChannelSequence {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn znormalize(raw: &[f64], sigma_floor: f64) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(FetaError::EmptySequence);
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(FetaError::NonFiniteInput);
    }
    if raw.iter().all(|&v| v == raw[0]) {
        return Ok(vec![0.0; raw.len()]);
    }
    let (mean, std) = mean_std(raw);
    let scale = std.max(sigma_floor);
    Ok(raw.iter().map(|x| (x - mean) / scale).collect())
}

/// Index of output position `j` when mapping `len` inputs onto `target`
/// outputs: `round_half_up(j * (len - 1) / (target - 1))`, in exact integer
/// arithmetic.
fn subsample_index(j: usize, len: usize, target: usize) -> usize {
    let num = 2 * j * (len - 1) + (target - 1);
    num / (2 * (target - 1))
}

pub fn subsample(seq: &[f64], target_length: usize) -> Result<Vec<f64>> {
    if seq.is_empty() {
        return Err(FetaError::EmptySequence);
    }
    if seq.len() <= target_length {
        return Ok(seq.to_vec());
    }
    if target_length < 2 {
        return Err(FetaError::Config("target length must be at least 2".into()));
    }
    Ok((0..target_length)
        .map(|j| seq[subsample_index(j, seq.len(), target_length)])
        .collect())
}

/// Normalize the full raw channel, then subsample it.
pub fn preprocess_channel(
    series: &LabeledSeries,
    channel: usize,
    split: Split,
    cfg: &PreprocessConfig,
) -> Result<ChannelSequence> {
    let raw = series.channel(channel)?;
    let normalized = znormalize(raw, cfg.sigma_floor)?;
    Ok(ChannelSequence {
        values: subsample(&normalized, cfg.target_length)?,
        source: SequenceSource {
            split,
            series_id: series.series_id,
            channel,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn constant_maps_to_zeros() {
        assert_eq!(znormalize(&[5.0; 4], 1e-8).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn already_standard() {
        assert!(close(&znormalize(&[-1.0, 1.0], 1e-8).unwrap(), &[-1.0, 1.0], 1e-12));
    }

    #[test]
    fn one_to_four() {
        // mean 2.5, population variance 1.25
        let s = 1.25f64.sqrt();
        let expect: Vec<f64> = [1.0, 2.0, 3.0, 4.0].iter().map(|x| (x - 2.5) / s).collect();
        let got = znormalize(&[1.0, 2.0, 3.0, 4.0], 1e-8).unwrap();
        assert!(close(&got, &expect, 1e-12));
        assert!(close(&got, &[-1.3416, -0.4472, 0.4472, 1.3416], 1e-4));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(znormalize(&[], 1e-8), Err(FetaError::EmptySequence)));
        assert!(matches!(
            znormalize(&[1.0, f64::NAN], 1e-8),
            Err(FetaError::NonFiniteInput)
        ));
        assert!(matches!(subsample(&[], 4), Err(FetaError::EmptySequence)));
    }

    #[test]
    fn subsample_cases() {
        let five: Vec<f64> = (0..5).map(f64::from).collect();
        assert_eq!(subsample(&five, 10).unwrap(), five);
        assert_eq!(subsample(&five, 5).unwrap(), five);
        let ten: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(subsample(&ten, 5).unwrap(), vec![0.0, 2.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn preprocess_composes() {
        let s = LabeledSeries {
            series_id: 3,
            label: None,
            values: vec![vec![1.0, 2.0, 3.0, 4.0], vec![7.0; 640]],
        };
        let cfg = PreprocessConfig {
            target_length: 4,
            ..Default::default()
        };
        let a = preprocess_channel(&s, 0, Split::Train, &cfg).unwrap();
        assert_eq!(a.values, znormalize(&[1.0, 2.0, 3.0, 4.0], 1e-8).unwrap());
        assert_eq!(a.source.series_id, 3);
        let b = preprocess_channel(&s, 1, Split::Train, &PreprocessConfig::default()).unwrap();
        assert_eq!(b.values, vec![0.0; 128]);
        assert!(matches!(
            preprocess_channel(&s, 2, Split::Train, &cfg),
            Err(FetaError::ChannelOutOfRange { .. })
        ));
    }

    proptest! {
        #[test]
        fn subsample_is_monotone_subsequence(len in 3usize..400, target in 2usize..200) {
            prop_assume!(len > target);
            let idx: Vec<usize> = (0..target).map(|j| subsample_index(j, len, target)).collect();
            prop_assert_eq!(idx[0], 0);
            prop_assert_eq!(*idx.last().unwrap(), len - 1);
            prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn normalized_moments(xs in prop::collection::vec(-1e3f64..1e3, 2..64)) {
            let z = znormalize(&xs, 1e-8).unwrap();
            let (m, s) = mean_std(&z);
            prop_assert!(m.abs() < 1e-9);
            prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-9);
        }
    }
}
