//! Seeded synthetic dataset generation in the datastore format.
//!
//! Regression rows follow a linear ground truth with correlated Gaussian
//! features and additive Gaussian noise; classification rows are Gaussian
//! class blobs with i.i.d. labels, so every id range holds a class mix.
//! Everything is drawn from one seeded stream: the same spec writes a
//! byte-identical file.

use crate::datastore::{DatasetMeta, DatasetWriter, TargetKind};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use std::path::Path;

/// Strength of the shared latent factor mixed into every feature.
const FEATURE_CORRELATION: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SynthKind {
    Regression {
        /// Standard deviation of the additive target noise.
        noise: f64,
    },
    Classification {
        classes: u32,
        /// Expected distance between class means is roughly
        /// `separation * sqrt(2)` against unit within-class spread.
        separation: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub n: u64,
    pub d: u32,
    pub seed: u64,
    pub kind: SynthKind,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.n < 1 || self.d < 1 {
            return Err(Error::InvalidArgument(
                "synthetic datasets need n >= 1 and d >= 1".into(),
            ));
        }
        if let SynthKind::Classification { classes, .. } = self.kind {
            if classes < 2 {
                return Err(Error::InvalidArgument(
                    "classification needs at least 2 classes".into(),
                ));
            }
        }
        Ok(())
    }
}

fn ground_truth(rng: &mut ChaCha20Rng, d: u32) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

/// The regression coefficients a spec generates, re-derived from the seed.
pub fn ground_truth_weights(spec: &SynthSpec) -> Option<Vec<f64>> {
    match spec.kind {
        SynthKind::Regression { .. } => {
            let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
            Some(ground_truth(&mut rng, spec.d))
        }
        SynthKind::Classification { .. } => None,
    }
}

pub fn synth_dataset(dir: &Path, spec: &SynthSpec) -> Result<DatasetMeta> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let d = spec.d as usize;
    let normal = |rng: &mut ChaCha20Rng| -> f64 { StandardNormal.sample(rng) };
    match spec.kind {
        SynthKind::Regression { noise } => {
            let weights = ground_truth(&mut rng, spec.d);
            let mut writer = DatasetWriter::create(
                dir,
                spec.d,
                TargetKind::Regression,
                0,
                &format!("synth:regression:seed={}", spec.seed),
            )?;
            let mut features = vec![0.0; d];
            for _ in 0..spec.n {
                let shared = normal(&mut rng);
                for f in features.iter_mut() {
                    *f = normal(&mut rng) + FEATURE_CORRELATION * shared;
                }
                let clean: f64 = weights.iter().zip(&features).map(|(w, x)| w * x).sum();
                let y = clean + noise * normal(&mut rng);
                writer.write_row(&features, y)?;
            }
            writer.finish()
        }
        SynthKind::Classification {
            classes,
            separation,
        } => {
            let scale = separation / (d as f64).sqrt();
            let means: Vec<Vec<f64>> = (0..classes)
                .map(|_| (0..d).map(|_| scale * normal(&mut rng)).collect())
                .collect();
            let mut writer = DatasetWriter::create(
                dir,
                spec.d,
                TargetKind::Classification,
                classes,
                &format!("synth:classification:seed={}", spec.seed),
            )?;
            let mut features = vec![0.0; d];
            for _ in 0..spec.n {
                let label = rng.gen_range(0..classes);
                for (f, m) in features.iter_mut().zip(&means[label as usize]) {
                    *f = m + normal(&mut rng);
                }
                writer.write_row(&features, f64::from(label))?;
            }
            writer.finish()
        }
    }
}
