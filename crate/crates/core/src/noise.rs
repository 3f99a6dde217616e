//! Symmetric (completely-at-random) label noise with a per-batch fluctuating level.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Batch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StdDevMode {
    /// σ is used as given.
    Absolute,
    /// σ is a fraction of the mean level.
    Relative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub mean_level: f64,
    pub std_dev_mode: StdDevMode,
    pub std_dev: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            mean_level: 0.3,
            std_dev_mode: StdDevMode::Relative,
            std_dev: 0.2,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mean_level) {
            return Err(Error::validation(format!(
                "noise mean must lie in [0, 1], got {}",
                self.mean_level
            )));
        }
        if !self.std_dev.is_finite() || self.std_dev < 0.0 {
            return Err(Error::validation(format!(
                "noise std must be finite and >= 0, got {}",
                self.std_dev
            )));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        match self.std_dev_mode {
            StdDevMode::Absolute => self.std_dev,
            StdDevMode::Relative => self.std_dev * self.mean_level,
        }
    }
}

/// Draw this batch's noise level from N(mean, σ), clamped to [0, 1].
pub fn draw_batch_noise_level<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> f64 {
    let sigma = spec.sigma();
    if sigma == 0.0 {
        return spec.mean_level.clamp(0.0, 1.0);
    }
    let normal = Normal::new(spec.mean_level, sigma).expect("sigma is finite and positive");
    normal.sample(rng).clamp(0.0, 1.0)
}

/// Number of labels flipped at `level` in a batch of `len` instances.
pub fn flip_count(level: f64, len: usize) -> usize {
    ((level * len as f64).round() as usize).min(len)
}

/// Flip exactly `round(level * |batch|)` distinct, uniformly chosen labels. Each flipped
/// instance gets a class drawn uniformly from the K-1 classes other than its true one.
pub fn inject_symmetric_noise<R: Rng + ?Sized>(
    mut batch: Batch,
    level: f64,
    num_classes: usize,
    rng: &mut R,
) -> Result<Batch> {
    if num_classes < 2 {
        return Err(Error::validation(
            "symmetric noise needs at least 2 classes",
        ));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::validation(format!(
            "noise level must lie in [0, 1], got {level}"
        )));
    }
    let n = flip_count(level, batch.len());
    for i in index::sample(rng, batch.len(), n) {
        let x = &mut batch.instances[i];
        let truth = x.true_label();
        // uniform over {0..K-1} \ {truth}
        let mut label = rng.random_range(0..num_classes - 1);
        if label >= truth {
            label += 1;
        }
        x.set_given_label(label);
    }
    batch.drawn_noise_level = level;
    Ok(batch)
}

/// Draw a level from `spec` and inject it.
pub fn apply_noise<R: Rng + ?Sized>(
    batch: Batch,
    spec: &NoiseSpec,
    num_classes: usize,
    rng: &mut R,
) -> Result<Batch> {
    let level = draw_batch_noise_level(spec, rng);
    inject_symmetric_noise(batch, level, num_classes, rng)
}
