use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed;

/// Positive-class share of the synthetic task (about 374 of 3,236 in the
/// clinical test set it stands in for).
pub const DEFAULT_PREVALENCE: f64 = 0.115;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_features: usize,
    /// Euclidean distance between the two class means, in units of the
    /// per-coordinate standard deviation.
    pub class_separation: f64,
    pub positive_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 4_000,
            n_features: 16,
            class_separation: 3.0,
            positive_fraction: DEFAULT_PREVALENCE,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn positive_count(&self) -> Result<usize> {
        if self.n_samples < 2 {
            return Err(Error::param("synthetic dataset needs at least 2 samples"));
        }
        if self.n_features == 0 {
            return Err(Error::param("synthetic dataset needs at least 1 feature"));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(Error::param("positive_fraction must lie in (0, 1)"));
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return Err(Error::param(
                "class_separation must be finite and nonnegative",
            ));
        }
        let n = (self.positive_fraction * self.n_samples as f64).round() as usize;
        Ok(n.clamp(1, self.n_samples - 1))
    }
}

/// Two isotropic unit-variance Gaussians whose means differ by
/// `class_separation` along the diagonal. Each coordinate is then squashed
/// through a logistic centred between the means, a fixed monotone map into
/// `[0, 1]` that does not depend on the sample, so train and test draws
/// share one feature space.
pub fn synth_binary<S: Scalar>(cfg: &SynthConfig) -> Result<Dataset<S>> {
    let n_pos = cfg.positive_count()?;
    let d = cfg.n_features;
    let shift = cfg.class_separation / (d as f64).sqrt();
    let centre = shift / 2.0;

    let mut labels: Vec<usize> = (0..cfg.n_samples).map(|i| usize::from(i < n_pos)).collect();
    labels.shuffle(&mut seed::stream(cfg.seed, 0));

    let mut rng = seed::stream(cfg.seed, 1);
    let mut features = Vec::with_capacity(cfg.n_samples * d);
    for &label in &labels {
        let mean = if label == 1 { shift } else { 0.0 };
        for _ in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            let x = mean + z - centre;
            features.push(S::lit(1.0 / (1.0 + (-x).exp())));
        }
    }
    Dataset::new(features, d, labels, 2)
}
