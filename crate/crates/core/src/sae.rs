//! Multimodal TopK sparse autoencoder.
//!
//! One model reconstructs both image and text embeddings:
//!
//! ```text
//! latent = TopK(ReLU(W_enc (z - b_pre)))
//! z_hat  = W_dec latent + b_pre
//! loss   = mean over pairs of |z_img - z_hat_img|^2 + |z_txt - z_hat_txt|^2
//! ```
//!
//! TopK keeps the `k` largest strictly positive pre-activations, breaking
//! ties toward the lowest index. During training the selected support is
//! held fixed within a step, so gradients only reach the kept units.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::tensorio::{read_json, read_tensor, write_json, write_tensor, PairedEmbeddingDataset};
pub use crate::train::count_active_dims;
use crate::train::{
    holdout_split, BatchSampler, ModelMeta, TrainConfig, TrainHistory, CHECKPOINT_EVERY,
    MODEL_META_FILE,
};

/// Default number of kept units; the latent width defaults to the input width.
pub const DEFAULT_K: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel {
    w_enc: Matrix,
    w_dec: Matrix,
    b_pre: Vec<f64>,
    k: usize,
}

/// Gradients with the same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeGrads {
    pub w_enc: Matrix,
    pub w_dec: Matrix,
    pub b_pre: Vec<f64>,
}

/// Indices of the kept units, in selection order.
pub type Support = Vec<usize>;

/// Indices of the `k` largest strictly positive entries of `pre`, ordered by
/// value (descending) then index (ascending).
pub fn topk_support(pre: &[f64], k: usize) -> Support {
    let mut pos: Vec<usize> = (0..pre.len()).filter(|&i| pre[i] > 0.0).collect();
    if pos.len() > k {
        pos.sort_by(|&a, &b| pre[b].total_cmp(&pre[a]).then(a.cmp(&b)));
        pos.truncate(k);
    }
    pos
}

/// `TopK(ReLU(pre))` as a dense vector.
pub fn relu_topk(pre: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; pre.len()];
    for i in topk_support(pre, k) {
        out[i] = pre[i];
    }
    out
}

impl SaeModel {
    pub fn new(w_enc: Matrix, w_dec: Matrix, b_pre: Vec<f64>, k: usize) -> Result<Self> {
        let (n, d) = w_enc.shape();
        if w_dec.shape() != (d, n) {
            return Err(Error::Shape(format!(
                "decoder is {:?}, expected ({d}, {n})",
                w_dec.shape()
            )));
        }
        if b_pre.len() != d {
            return Err(Error::Shape(format!(
                "b_pre has length {}, expected {d}",
                b_pre.len()
            )));
        }
        if k == 0 || k > n {
            return Err(Error::Usage(format!("k must satisfy 1 <= k <= n = {n}, got {k}")));
        }
        if !(w_enc.all_finite() && w_dec.all_finite() && b_pre.iter().all(|v| v.is_finite())) {
            return Err(Error::Numeric {
                step: 0,
                message: "non-finite SAE weights".into(),
            });
        }
        Ok(Self { w_enc, w_dec, b_pre, k })
    }

    /// Gaussian encoder scaled by `1/sqrt(d)`, tied decoder `W_encᵀ`.
    pub fn init(d: usize, n: usize, k: usize, b_pre: Vec<f64>, seed: u64) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::Usage("SAE dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d as f64).sqrt();
        let data: Vec<f64> = (0..n * d)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g * scale
            })
            .collect();
        let w_enc = Matrix::new(n, d, data)?;
        let w_dec = w_enc.transpose();
        Self::new(w_enc, w_dec, b_pre, k)
    }

    pub fn k(&self) -> usize {
        self.k
    }
    pub fn n(&self) -> usize {
        self.w_enc.rows()
    }
    pub fn d(&self) -> usize {
        self.w_enc.cols()
    }
    pub fn w_enc(&self) -> &Matrix {
        &self.w_enc
    }
    pub fn w_dec(&self) -> &Matrix {
        &self.w_dec
    }
    pub fn b_pre(&self) -> &[f64] {
        &self.b_pre
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.d() {
            return Err(Error::Shape(format!(
                "input has length {}, model expects {}",
                z.len(),
                self.d()
            )));
        }
        Ok(())
    }

    /// `W_enc (z - b_pre)`.
    pub fn pre_activation(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_input(z)?;
        let centered: Vec<f64> = z.iter().zip(&self.b_pre).map(|(a, b)| a - b).collect();
        self.w_enc.matvec(&centered)
    }

    pub fn support(&self, z: &[f64]) -> Result<Support> {
        Ok(topk_support(&self.pre_activation(z)?, self.k))
    }

    pub fn encode(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(relu_topk(&self.pre_activation(z)?, self.k))
    }

    pub fn decode(&self, latent: &[f64]) -> Result<Vec<f64>> {
        if latent.len() != self.n() {
            return Err(Error::Shape(format!(
                "latent has length {}, model expects {}",
                latent.len(),
                self.n()
            )));
        }
        let mut out = self.w_dec.matvec(latent)?;
        for (o, b) in out.iter_mut().zip(&self.b_pre) {
            *o += b;
        }
        Ok(out)
    }

    fn decode_sparse(&self, support: &[usize], values: &[f64]) -> Vec<f64> {
        (0..self.d())
            .map(|i| {
                let row = self.w_dec.row(i);
                self.b_pre[i] + support.iter().zip(values).map(|(&j, &a)| row[j] * a).sum::<f64>()
            })
            .collect()
    }

    /// Encodes every row of `z`.
    pub fn encode_matrix(&self, z: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(z.rows(), self.n());
        for (r, row) in z.iter_rows().enumerate() {
            out.row_mut(r).copy_from_slice(&self.encode(row)?);
        }
        Ok(out)
    }

    pub fn reconstruct(&self, z: &[f64]) -> Result<Vec<f64>> {
        let pre = self.pre_activation(z)?;
        let s = topk_support(&pre, self.k);
        let vals: Vec<f64> = s.iter().map(|&j| pre[j]).collect();
        Ok(self.decode_sparse(&s, &vals))
    }

    /// Supports of every image row followed by every text row.
    pub fn batch_supports(&self, img: &Matrix, txt: &Matrix) -> Result<Vec<Support>> {
        img.iter_rows()
            .chain(txt.iter_rows())
            .map(|z| self.support(z))
            .collect()
    }

    fn check_batch(&self, img: &Matrix, txt: &Matrix) -> Result<()> {
        if img.rows() != txt.rows() {
            return Err(Error::Alignment(format!(
                "batch has {} image rows and {} text rows",
                img.rows(),
                txt.rows()
            )));
        }
        if img.cols() != self.d() || txt.cols() != self.d() {
            return Err(Error::Shape(format!(
                "batch width {}/{}, model expects {}",
                img.cols(),
                txt.cols(),
                self.d()
            )));
        }
        Ok(())
    }

    /// Mean paired reconstruction loss.
    pub fn loss(&self, img: &Matrix, txt: &Matrix) -> Result<f64> {
        self.check_batch(img, txt)?;
        let mut total = 0.0;
        for z in img.iter_rows().chain(txt.iter_rows()) {
            let zh = self.reconstruct(z)?;
            total += z.iter().zip(&zh).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total / img.rows() as f64)
    }

    /// Loss with the TopK selection frozen to `supports` (one per image row,
    /// then one per text row). Kept units pass their pre-activation through
    /// linearly.
    pub fn loss_with_supports(&self, img: &Matrix, txt: &Matrix, supports: &[Support]) -> Result<f64> {
        self.check_batch(img, txt)?;
        if supports.len() != 2 * img.rows() {
            return Err(Error::Shape(format!(
                "{} supports for {} rows",
                supports.len(),
                2 * img.rows()
            )));
        }
        let mut total = 0.0;
        for (z, s) in img.iter_rows().chain(txt.iter_rows()).zip(supports) {
            let pre = self.pre_activation(z)?;
            let vals: Vec<f64> = s.iter().map(|&j| pre[j]).collect();
            let zh = self.decode_sparse(s, &vals);
            total += z.iter().zip(&zh).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total / img.rows() as f64)
    }

    /// Loss and its gradient with respect to every parameter, treating the
    /// per-sample TopK selection as constant.
    pub fn loss_and_grad(&self, img: &Matrix, txt: &Matrix) -> Result<(f64, SaeGrads)> {
        self.check_batch(img, txt)?;
        if img.rows() == 0 {
            return Err(Error::Usage("empty batch".into()));
        }
        let (n, d) = (self.n(), self.d());
        let inv_b = 1.0 / img.rows() as f64;
        let mut g_enc = Matrix::zeros(n, d);
        let mut g_dec = Matrix::zeros(d, n);
        let mut g_b = vec![0.0; d];
        let mut total = 0.0;

        let mut u = vec![0.0; d];
        let mut r = vec![0.0; d];
        for z in img.iter_rows().chain(txt.iter_rows()) {
            for ((ui, zi), bi) in u.iter_mut().zip(z).zip(&self.b_pre) {
                *ui = zi - bi;
            }
            let pre = self.w_enc.matvec(&u)?;
            let s = topk_support(&pre, self.k);
            let vals: Vec<f64> = s.iter().map(|&j| pre[j]).collect();
            let zh = self.decode_sparse(&s, &vals);
            for ((ri, a), b) in r.iter_mut().zip(&zh).zip(z) {
                *ri = a - b;
            }
            total += dot(&r, &r);

            // dL/dz_hat = 2 r, scaled by 1/B.
            let scale = 2.0 * inv_b;
            for (i, &ri) in r.iter().enumerate() {
                let gr = scale * ri;
                g_b[i] += gr;
                let row = g_dec.row_mut(i);
                for (&j, &a) in s.iter().zip(&vals) {
                    row[j] += gr * a;
                }
            }
            for &j in &s {
                // d latent_j = sum_i W_dec[i, j] * 2 r_i / B
                let dh: f64 = (0..d).map(|i| self.w_dec.get(i, j) * r[i]).sum::<f64>() * scale;
                axpy(dh, &u, g_enc.row_mut(j));
                axpy(-dh, self.w_enc.row(j), &mut g_b);
            }
        }
        Ok((
            total * inv_b,
            SaeGrads {
                w_enc: g_enc,
                w_dec: g_dec,
                b_pre: g_b,
            },
        ))
    }

    pub(crate) fn apply_gradient(&mut self, g: &SaeGrads, lr: f64) {
        axpy(-lr, g.w_enc.data(), self.w_enc.data_mut());
        axpy(-lr, g.w_dec.data(), self.w_dec.data_mut());
        axpy(-lr, &g.b_pre, &mut self.b_pre);
    }

    /// Mutable access to every parameter as flat slices, in the order
    /// `W_enc`, `W_dec`, `b_pre`. Used for finite-difference checks.
    pub fn params_mut(&mut self) -> [&mut [f64]; 3] {
        [self.w_enc.data_mut(), self.w_dec.data_mut(), &mut self.b_pre]
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_tensor(&self.w_enc, dir.join("W_enc.mmtf"))?;
        write_tensor(&self.w_dec, dir.join("W_dec.mmtf"))?;
        write_tensor(&Matrix::row_vector(&self.b_pre)?, dir.join("b_pre.mmtf"))?;
        write_json(
            &ModelMeta {
                kind: "sae".into(),
                version: 1,
                d: self.d(),
                n: self.n(),
                k: Some(self.k),
                temperature: None,
            },
            dir.join(MODEL_META_FILE),
        )
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: ModelMeta = read_json(dir.join(MODEL_META_FILE))?;
        if meta.kind != "sae" {
            return Err(Error::Format(format!("model kind {:?} is not an SAE", meta.kind)));
        }
        let k = meta
            .k
            .ok_or_else(|| Error::Format("model.json is missing k".into()))?;
        let w_enc = read_tensor(dir.join("W_enc.mmtf"))?;
        let w_dec = read_tensor(dir.join("W_dec.mmtf"))?;
        let b_pre = read_tensor(dir.join("b_pre.mmtf"))?.into_data();
        let model = Self::new(w_enc, w_dec, b_pre, k)?;
        if model.n() != meta.n || model.d() != meta.d {
            return Err(Error::Format("model.json dimensions disagree with tensors".into()));
        }
        Ok(model)
    }
}

/// Mean of every image and text embedding.
pub fn pooled_mean(data: &PairedEmbeddingDataset) -> Vec<f64> {
    let d = data.dim();
    let mut mean = vec![0.0; d];
    for row in data.img.iter_rows().chain(data.txt.iter_rows()) {
        axpy(1.0, row, &mut mean);
    }
    let count = 2.0 * data.len() as f64;
    mean.iter_mut().for_each(|v| *v /= count);
    mean
}

/// Trains a shared SAE on both modalities with minibatch gradient descent.
pub fn sae_train(
    data: &PairedEmbeddingDataset,
    cfg: &TrainConfig,
    k: usize,
    n: usize,
) -> Result<(SaeModel, TrainHistory)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Usage("empty dataset".into()));
    }
    if k == 0 || k > n {
        return Err(Error::Usage(format!("k must satisfy 1 <= k <= n = {n}, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = SaeModel::init(data.dim(), n, k, pooled_mean(data), cfg.seed ^ 0x5ae)?;
    let (train_idx, hold_idx) = holdout_split(data.len(), &mut rng);
    let hold_img = data.img.select_rows(&hold_idx)?;
    let hold_txt = data.txt.select_rows(&hold_idx)?;
    let mut sampler = BatchSampler::new(train_idx, cfg.batch_size);
    let mut history = TrainHistory::default();

    for step in 0..cfg.steps {
        let batch = sampler.next_batch(&mut rng);
        let img = data.img.select_rows(&batch)?;
        let txt = data.txt.select_rows(&batch)?;
        let (loss, grads) = model.loss_and_grad(&img, &txt)?;
        if !loss.is_finite() {
            return Err(Error::Numeric {
                step,
                message: format!("SAE loss became {loss}"),
            });
        }
        history.loss.push(loss);
        model.apply_gradient(&grads, cfg.learning_rate);

        if (step + 1) % CHECKPOINT_EVERY == 0 {
            if !(model.w_enc.all_finite() && model.w_dec.all_finite()) {
                return Err(Error::Numeric {
                    step,
                    message: "non-finite SAE weights".into(),
                });
            }
            let a_img = count_active_dims(&model.encode_matrix(&hold_img)?, 0.0);
            let a_txt = count_active_dims(&model.encode_matrix(&hold_txt)?, 0.0);
            history.record_checkpoint(step + 1, a_img, a_txt);
            if history.plateau_reached(cfg.plateau_window, cfg.plateau_tolerance) {
                history.stopped_early = step + 1 < cfg.steps;
                break;
            }
        }
    }
    Ok((model, history))
}

/// Splits latent indices into (live, dead); a latent is dead when it is
/// zero for every sample of both modalities.
pub fn prune_dead_latents(model: &SaeModel, data: &PairedEmbeddingDataset) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut alive = vec![false; model.n()];
    for z in data.img.iter_rows().chain(data.txt.iter_rows()) {
        for j in model.support(z)? {
            alive[j] = true;
        }
    }
    Ok((0..model.n()).partition(|&j| alive[j]))
}

/// `‖Z - Ẑ‖_F / ‖Z‖_F` pooled over both modalities.
pub fn relative_reconstruction_error(model: &SaeModel, data: &PairedEmbeddingDataset) -> Result<f64> {
    let mut err = 0.0;
    let mut norm = 0.0;
    for z in data.img.iter_rows().chain(data.txt.iter_rows()) {
        let zh = model.reconstruct(z)?;
        err += z.iter().zip(&zh).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        norm += dot(z, z);
    }
    Ok((err / norm).sqrt())
}
