//! Seeded synthetic datasets with a known informative channel, used by the
//! offline end-to-end tests and the `--synthetic` CLI mode.

use std::f64::consts::PI;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, LabeledSeries, SeriesLength};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidSpec {
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub channels: usize,
    /// Index of the only channel whose shape depends on the class.
    pub informative: usize,
    pub length: usize,
    pub noise: f64,
    /// Width of the uniform phase offset on the informative channel, in
    /// radians. The full circle leaves class centroids near zero.
    pub phase_jitter: f64,
    pub seed: u64,
}

impl Default for SinusoidSpec {
    fn default() -> Self {
        Self {
            train_per_class: 20,
            test_per_class: 10,
            channels: 3,
            informative: 0,
            length: 200,
            noise: 0.2,
            phase_jitter: 1.0,
            seed: 42,
        }
    }
}

/// Class name and cycles-per-series of the informative channel.
pub const SINUSOID_CLASSES: [(&str, f64); 2] = [("fast", 6.0), ("slow", 2.0)];

fn series(spec: &SinusoidSpec, class: usize, id: usize, rng: &mut StdRng) -> LabeledSeries {
    let (name, cycles) = SINUSOID_CLASSES[class];
    let n = spec.length as f64;
    let values = (0..spec.channels)
        .map(|c| {
            let phase = rng.gen::<f64>() * spec.phase_jitter;
            let amp = rng.gen_range(0.5..2.0);
            let offset = rng.gen_range(-3.0..3.0);
            if c == spec.informative {
                (0..spec.length)
                    .map(|t| {
                        let x = 2.0 * PI * cycles * t as f64 / n + phase;
                        offset + amp * x.sin() + spec.noise * rng.gen_range(-1.0..1.0)
                    })
                    .collect()
            } else {
                // class-independent random walk
                let mut level = offset;
                (0..spec.length)
                    .map(|_| {
                        level += rng.gen_range(-1.0..1.0);
                        level
                    })
                    .collect()
            }
        })
        .collect();
    LabeledSeries {
        series_id: id,
        label: Some(name.to_string()),
        values,
    }
}

/// Two sinusoid classes that differ in frequency on one channel; the other
/// channels are class-independent random walks. Series alternate classes.
pub fn sinusoid_dataset(spec: &SinusoidSpec) -> Dataset {
    let mut rng = StdRng::seed_from_u64(spec.seed);
    let make = |per_class: usize, rng: &mut StdRng| -> Vec<LabeledSeries> {
        (0..per_class * 2).map(|i| series(spec, i % 2, i, rng)).collect()
    };
    let train = make(spec.train_per_class, &mut rng);
    let test = make(spec.test_per_class, &mut rng);
    let mut classes: Vec<String> = SINUSOID_CLASSES.iter().map(|(n, _)| n.to_string()).collect();
    classes.sort();
    Dataset {
        name: "SyntheticSinusoid".into(),
        classes,
        train,
        test,
        channel_count: spec.channels,
        declared_length: SeriesLength::Fixed(spec.length),
    }
}
