//! Training plumbing shared by the SAE and the NCL projector: configuration,
//! history, hold-out split, minibatch sampling and the plateau stop rule.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Steps between active-dimension checkpoints.
pub const CHECKPOINT_EVERY: usize = 100;
/// Fraction of samples held out for checkpoints.
pub const HOLDOUT_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Number of checkpoints the stop rule looks back over; 0 disables it.
    pub plateau_window: usize,
    /// Largest decrease in active dims (per modality) still counted as a plateau.
    pub plateau_tolerance: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            batch_size: 64,
            learning_rate: 0.01,
            seed: 0,
            plateau_window: 5,
            plateau_tolerance: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Usage("steps must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Usage(format!(
                "batch_size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Usage(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub loss: Vec<f64>,
    pub checkpoint_steps: Vec<usize>,
    pub active_dims_img: Vec<usize>,
    pub active_dims_txt: Vec<usize>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub(crate) fn record_checkpoint(&mut self, step: usize, img: usize, txt: usize) {
        self.checkpoint_steps.push(step);
        self.active_dims_img.push(img);
        self.active_dims_txt.push(txt);
    }

    /// True once neither modality's active-dimension count has dropped by
    /// more than `tolerance` across the last `window` checkpoints.
    pub fn plateau_reached(&self, window: usize, tolerance: usize) -> bool {
        if window == 0 || self.active_dims_img.len() <= window {
            return false;
        }
        let flat = |series: &[usize]| {
            let last = series.len() - 1;
            series[last - window].saturating_sub(series[last]) <= tolerance
        };
        flat(&self.active_dims_img) && flat(&self.active_dims_txt)
    }
}

/// Seeded train / hold-out split. Falls back to checkpointing on the
/// training rows when the hold-out share rounds to zero.
pub(crate) fn holdout_split(m: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(rng);
    let n_hold = (m as f64 * HOLDOUT_FRACTION).floor() as usize;
    if n_hold == 0 || m - n_hold < 2 {
        let all: Vec<usize> = (0..m).collect();
        return (all.clone(), all);
    }
    let hold = idx.split_off(m - n_hold);
    (idx, hold)
}

/// Epoch-shuffled minibatches over a fixed index pool.
pub(crate) struct BatchSampler {
    pool: Vec<usize>,
    cursor: usize,
    batch: usize,
}

impl BatchSampler {
    pub(crate) fn new(pool: Vec<usize>, batch: usize) -> Self {
        let batch = batch.min(pool.len());
        Self {
            cursor: pool.len(),
            pool,
            batch,
        }
    }

    pub(crate) fn next_batch(&mut self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if self.cursor + self.batch > self.pool.len() {
            self.pool.shuffle(rng);
            self.cursor = 0;
        }
        let out = self.pool[self.cursor..self.cursor + self.batch].to_vec();
        self.cursor += self.batch;
        out
    }
}

/// Number of columns with at least one entry whose magnitude exceeds `threshold`.
pub fn count_active_dims(latents: &Matrix, threshold: f64) -> usize {
    let mut active = vec![false; latents.cols()];
    for row in latents.iter_rows() {
        for (a, &v) in active.iter_mut().zip(row) {
            if v.abs() > threshold {
                *a = true;
            }
        }
    }
    active.into_iter().filter(|&a| a).count()
}

/// Model directory metadata (`model.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: String,
    pub version: u32,
    pub d: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

pub const MODEL_META_FILE: &str = "model.json";
