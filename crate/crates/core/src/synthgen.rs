//! Seeded synthetic paired embeddings with planted modality structure.
//!
//! Every latent dimension belongs to one of three groups: image-only,
//! text-only, or shared. Each cluster activates a fixed subset of every
//! group. A sample draws a cluster, then each of the cluster's active dims
//! gets a value uniform in `[1, 2]`: shared dims carry the same value in both
//! modalities, image-only dims are zero on the text side and vice versa.
//! Gaussian noise is added to every entry and, optionally, both modalities
//! are multiplied by one shared random rotation.
//!
//! RNG stream order (part of the output contract): cluster supports, then
//! per sample (cluster, image-only values, text-only values, shared values,
//! image noise, text noise), then the rotation.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::tensorio::{PairedEmbeddingDataset, SampleRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub m: usize,
    pub d: usize,
    pub n_img_only: usize,
    pub n_txt_only: usize,
    pub n_shared: usize,
    pub noise_sigma: f64,
    pub n_clusters: usize,
    pub mix: bool,
    /// Fraction of each group's dims a cluster activates (at least one per
    /// nonempty group).
    pub active_fraction: f64,
    /// When false, shared dims are drawn per sample instead of per cluster,
    /// so cluster identity lives only in the single-modality dims.
    pub shared_cluster_specific: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            m: 2000,
            d: 64,
            n_img_only: 10,
            n_txt_only: 10,
            n_shared: 44,
            noise_sigma: 0.0,
            n_clusters: 8,
            mix: false,
            active_fraction: 0.5,
            shared_cluster_specific: true,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.d == 0 {
            return Err(Error::Config("m and d must be positive".into()));
        }
        if self.n_img_only + self.n_txt_only + self.n_shared != self.d {
            return Err(Error::Config(format!(
                "n_img_only + n_txt_only + n_shared = {} but d = {}",
                self.n_img_only + self.n_txt_only + self.n_shared,
                self.d
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if self.n_clusters == 0 {
            return Err(Error::Config("n_clusters must be >= 1".into()));
        }
        if !(self.active_fraction > 0.0 && self.active_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "active_fraction must be in (0, 1], got {}",
                self.active_fraction
            )));
        }
        Ok(())
    }

    fn active_count(&self, group_size: usize) -> usize {
        if group_size == 0 {
            0
        } else {
            ((self.active_fraction * group_size as f64).round() as usize).clamp(1, group_size)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimModality {
    ImgOnly,
    TxtOnly,
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub dim_modality: Vec<DimModality>,
    pub cluster_of_sample: Vec<usize>,
}

/// Dims `[0, n_img_only)` are image-only, the next `n_txt_only` text-only,
/// the rest shared.
pub fn dim_layout(cfg: &SynthConfig) -> Vec<DimModality> {
    let mut v = vec![DimModality::ImgOnly; cfg.n_img_only];
    v.extend(std::iter::repeat_n(DimModality::TxtOnly, cfg.n_txt_only));
    v.extend(std::iter::repeat_n(DimModality::Shared, cfg.n_shared));
    v
}

/// Round-robin over a shuffled group so every dim is covered once
/// `n_clusters * count >= group size`.
fn cluster_supports(
    rng: &mut ChaCha8Rng,
    group: &[usize],
    count: usize,
    n_clusters: usize,
) -> Vec<Vec<usize>> {
    let mut order = group.to_vec();
    order.shuffle(rng);
    (0..n_clusters)
        .map(|c| {
            let mut s: Vec<usize> = (0..count).map(|j| order[(c * count + j) % order.len()]).collect();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect()
}

pub fn generate_synthetic(
    cfg: &SynthConfig,
    seed: u64,
) -> Result<(PairedEmbeddingDataset, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = cfg.d;
    let img_group: Vec<usize> = (0..cfg.n_img_only).collect();
    let txt_group: Vec<usize> = (cfg.n_img_only..cfg.n_img_only + cfg.n_txt_only).collect();
    let shared_group: Vec<usize> = (cfg.n_img_only + cfg.n_txt_only..d).collect();

    let empty = || vec![Vec::new(); cfg.n_clusters];
    let img_sup = if img_group.is_empty() {
        empty()
    } else {
        cluster_supports(&mut rng, &img_group, cfg.active_count(img_group.len()), cfg.n_clusters)
    };
    let txt_sup = if txt_group.is_empty() {
        empty()
    } else {
        cluster_supports(&mut rng, &txt_group, cfg.active_count(txt_group.len()), cfg.n_clusters)
    };
    let shared_count = cfg.active_count(shared_group.len());
    let shared_sup = if shared_group.is_empty() {
        empty()
    } else {
        cluster_supports(&mut rng, &shared_group, shared_count, cfg.n_clusters)
    };

    let mut img = Matrix::zeros(cfg.m, d);
    let mut txt = Matrix::zeros(cfg.m, d);
    let mut clusters = Vec::with_capacity(cfg.m);
    for s in 0..cfg.m {
        let c = rng.random_range(0..cfg.n_clusters);
        clusters.push(c);
        for &j in &img_sup[c] {
            img.set(s, j, rng.random_range(1.0..2.0));
        }
        for &j in &txt_sup[c] {
            txt.set(s, j, rng.random_range(1.0..2.0));
        }
        let shared: Vec<usize> = if cfg.shared_cluster_specific {
            shared_sup[c].clone()
        } else {
            let mut pick: Vec<usize> = shared_group
                .choose_multiple(&mut rng, shared_count)
                .copied()
                .collect();
            pick.sort_unstable();
            pick
        };
        for j in shared {
            let v = rng.random_range(1.0..2.0);
            img.set(s, j, v);
            txt.set(s, j, v);
        }
        if cfg.noise_sigma > 0.0 {
            for v in img.row_mut(s) {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v += cfg.noise_sigma * n;
            }
            for v in txt.row_mut(s) {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v += cfg.noise_sigma * n;
            }
        }
    }

    let (out_img, out_txt) = if cfg.mix {
        let q = random_orthogonal(d, &mut rng);
        (img.matmul(&q)?, txt.matmul(&q)?)
    } else {
        (img.clone(), txt.clone())
    };

    let samples: Vec<SampleRecord> = clusters
        .iter()
        .enumerate()
        .map(|(i, c)| SampleRecord {
            id: i as i64,
            text: format!("sample {i} (cluster {c})"),
        })
        .collect();
    let data = PairedEmbeddingDataset::new(out_img, out_txt, Some((img, txt)), Some(samples))?;
    let truth = GroundTruth {
        dim_modality: dim_layout(cfg),
        cluster_of_sample: clusters,
    };
    Ok((data, truth))
}

/// Orthogonal `n×n` matrix from the QR factorization of a Gaussian matrix
/// (modified Gram-Schmidt, two passes). Rows are orthonormal.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matrix {
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    for i in 0..n {
        for _pass in 0..2 {
            for j in 0..i {
                let (done, rest) = rows.split_at_mut(i);
                let proj = dot(&rest[0], &done[j]);
                axpy(-proj, &done[j], &mut rest[0]);
            }
        }
        let norm = dot(&rows[i], &rows[i]).sqrt();
        for v in &mut rows[i] {
            *v /= norm;
        }
    }
    Matrix::from_rows(&rows).expect("square finite rotation")
}
