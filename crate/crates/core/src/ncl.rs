//! Non-negative contrastive projector.
//!
//! `g(z) = ReLU(W2 ReLU(W1 z + b1) + b2)` maps embeddings of both modalities
//! into a non-negative space of the same width. Training minimizes an
//! InfoNCE loss with image anchors and the batch's text projections as
//! candidates (the positive stays in the denominator):
//!
//! ```text
//! loss = mean_b [ logsumexp_b' (g(i_b)·g(t_b') / τ) - g(i_b)·g(t_b) / τ ]
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, Matrix};
use crate::tensorio::{read_json, read_tensor, write_json, write_tensor, PairedEmbeddingDataset};
use crate::train::{
    count_active_dims, holdout_split, BatchSampler, ModelMeta, TrainConfig, TrainHistory,
    CHECKPOINT_EVERY, MODEL_META_FILE,
};

pub const DEFAULT_TEMPERATURE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NclProjector {
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NclGrads {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

impl NclGrads {
    fn zeros(d: usize) -> Self {
        Self {
            w1: Matrix::zeros(d, d),
            b1: vec![0.0; d],
            w2: Matrix::zeros(d, d),
            b2: vec![0.0; d],
        }
    }
}

/// Which similarity directions enter the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    /// Image anchors against text candidates.
    #[default]
    ImageToText,
    /// Average of image→text and text→image.
    Symmetric,
}

/// Intermediate values kept for the backward pass.
struct Forward {
    p: Vec<f64>,
    h: Vec<f64>,
    o: Vec<f64>,
    out: Vec<f64>,
}

impl NclProjector {
    pub fn new(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Result<Self> {
        let d = w1.rows();
        if w1.shape() != (d, d) || w2.shape() != (d, d) || b1.len() != d || b2.len() != d {
            return Err(Error::Shape(format!(
                "projector expects square d x d weights and length-d biases, got W1 {:?}, W2 {:?}, b1 {}, b2 {}",
                w1.shape(),
                w2.shape(),
                b1.len(),
                b2.len()
            )));
        }
        if !b1.iter().chain(&b2).all(|v| v.is_finite()) {
            return Err(Error::Numeric {
                step: 0,
                message: "non-finite projector bias".into(),
            });
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    /// Gaussian weights scaled by `1/sqrt(d)`, zero biases.
    pub fn init(d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Usage("projector width must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (d as f64).sqrt();
        let mut gauss = |_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * scale
        };
        let w1 = Matrix::new(d, d, (0..d * d).map(&mut gauss).collect())?;
        let w2 = Matrix::new(d, d, (0..d * d).map(&mut gauss).collect())?;
        Self::new(w1, vec![0.0; d], w2, vec![0.0; d])
    }

    pub fn d(&self) -> usize {
        self.w1.rows()
    }

    fn forward(&self, z: &[f64]) -> Result<Forward> {
        if z.len() != self.d() {
            return Err(Error::Shape(format!(
                "input has length {}, projector expects {}",
                z.len(),
                self.d()
            )));
        }
        let mut p = self.w1.matvec(z)?;
        axpy(1.0, &self.b1, &mut p);
        let h: Vec<f64> = p.iter().map(|&v| v.max(0.0)).collect();
        let mut o = self.w2.matvec(&h)?;
        axpy(1.0, &self.b2, &mut o);
        let out = o.iter().map(|&v| v.max(0.0)).collect();
        Ok(Forward { p, h, o, out })
    }

    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(z)?.out)
    }

    pub fn project_matrix(&self, z: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(z.rows(), self.d());
        for (r, row) in z.iter_rows().enumerate() {
            out.row_mut(r).copy_from_slice(&self.project(row)?);
        }
        Ok(out)
    }

    /// Backpropagates `d_out` (gradient w.r.t. `g(z)`) into `grads`. The ReLU
    /// subgradient at zero is zero.
    fn backward(&self, z: &[f64], f: &Forward, d_out: &[f64], grads: &mut NclGrads) {
        let d = self.d();
        let d_o: Vec<f64> = d_out
            .iter()
            .zip(&f.o)
            .map(|(&g, &o)| if o > 0.0 { g } else { 0.0 })
            .collect();
        let mut d_h = vec![0.0; d];
        for (i, &g) in d_o.iter().enumerate() {
            if g != 0.0 {
                axpy(g, &f.h, grads.w2.row_mut(i));
                grads.b2[i] += g;
                axpy(g, self.w2.row(i), &mut d_h);
            }
        }
        for i in 0..d {
            if f.p[i] > 0.0 && d_h[i] != 0.0 {
                axpy(d_h[i], z, grads.w1.row_mut(i));
                grads.b1[i] += d_h[i];
            }
        }
    }

    fn check_batch(&self, img: &Matrix, txt: &Matrix) -> Result<()> {
        if img.rows() != txt.rows() {
            return Err(Error::Alignment(format!(
                "batch has {} image rows and {} text rows",
                img.rows(),
                txt.rows()
            )));
        }
        if img.rows() < 2 {
            return Err(Error::Usage(format!(
                "contrastive loss needs at least 2 pairs, got {}",
                img.rows()
            )));
        }
        Ok(())
    }

    pub fn loss(&self, img: &Matrix, txt: &Matrix, temperature: f64) -> Result<f64> {
        self.loss_directed(img, txt, temperature, Direction::ImageToText)
    }

    pub fn loss_directed(
        &self,
        img: &Matrix,
        txt: &Matrix,
        temperature: f64,
        direction: Direction,
    ) -> Result<f64> {
        Ok(self.loss_and_grad_inner(img, txt, temperature, direction, false)?.0)
    }

    pub fn loss_and_grad(
        &self,
        img: &Matrix,
        txt: &Matrix,
        temperature: f64,
        direction: Direction,
    ) -> Result<(f64, NclGrads)> {
        let (loss, grads) = self.loss_and_grad_inner(img, txt, temperature, direction, true)?;
        Ok((loss, grads.expect("gradients requested")))
    }

    fn loss_and_grad_inner(
        &self,
        img: &Matrix,
        txt: &Matrix,
        temperature: f64,
        direction: Direction,
        want_grad: bool,
    ) -> Result<(f64, Option<NclGrads>)> {
        self.check_batch(img, txt)?;
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Usage(format!("temperature must be positive, got {temperature}")));
        }
        let b = img.rows();
        let fi: Vec<Forward> = img.iter_rows().map(|z| self.forward(z)).collect::<Result<_>>()?;
        let ft: Vec<Forward> = txt.iter_rows().map(|z| self.forward(z)).collect::<Result<_>>()?;
        let logits: Vec<Vec<f64>> = fi
            .iter()
            .map(|a| ft.iter().map(|c| dot(&a.out, &c.out) / temperature).collect())
            .collect();

        // d loss / d logits, accumulated over the requested directions.
        let mut d_logits = vec![vec![0.0; b]; b];
        let mut loss = 0.0;
        let (weight, both) = match direction {
            Direction::ImageToText => (1.0, false),
            Direction::Symmetric => (0.5, true),
        };
        for r in 0..b {
            let row = &logits[r];
            let (lse, probs) = log_softmax_parts(row.iter().copied());
            loss += weight * (lse - row[r]) / b as f64;
            for c in 0..b {
                d_logits[r][c] += weight * (probs[c] - if c == r { 1.0 } else { 0.0 }) / b as f64;
            }
        }
        if both {
            for c in 0..b {
                let (lse, probs) = log_softmax_parts((0..b).map(|r| logits[r][c]));
                loss += weight * (lse - logits[c][c]) / b as f64;
                for r in 0..b {
                    d_logits[r][c] += weight * (probs[r] - if r == c { 1.0 } else { 0.0 }) / b as f64;
                }
            }
        }
        if !want_grad {
            return Ok((loss, None));
        }

        let d = self.d();
        let mut grads = NclGrads::zeros(d);
        for r in 0..b {
            let mut d_out = vec![0.0; d];
            for c in 0..b {
                axpy(d_logits[r][c] / temperature, &ft[c].out, &mut d_out);
            }
            self.backward(img.row(r), &fi[r], &d_out, &mut grads);
        }
        for c in 0..b {
            let mut d_out = vec![0.0; d];
            for r in 0..b {
                axpy(d_logits[r][c] / temperature, &fi[r].out, &mut d_out);
            }
            self.backward(txt.row(c), &ft[c], &d_out, &mut grads);
        }
        Ok((loss, Some(grads)))
    }

    pub(crate) fn apply_gradient(&mut self, g: &NclGrads, lr: f64) {
        axpy(-lr, g.w1.data(), self.w1.data_mut());
        axpy(-lr, &g.b1, &mut self.b1);
        axpy(-lr, g.w2.data(), self.w2.data_mut());
        axpy(-lr, &g.b2, &mut self.b2);
    }

    fn all_finite(&self) -> bool {
        self.w1.all_finite()
            && self.w2.all_finite()
            && self.b1.iter().chain(&self.b2).all(|v| v.is_finite())
    }

    /// Flat parameter slices in the order `W1`, `b1`, `W2`, `b2`.
    pub fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [self.w1.data_mut(), &mut self.b1, self.w2.data_mut(), &mut self.b2]
    }

    pub fn save(&self, dir: impl AsRef<Path>, temperature: f64) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_tensor(&self.w1, dir.join("W1.mmtf"))?;
        write_tensor(&Matrix::row_vector(&self.b1)?, dir.join("b1.mmtf"))?;
        write_tensor(&self.w2, dir.join("W2.mmtf"))?;
        write_tensor(&Matrix::row_vector(&self.b2)?, dir.join("b2.mmtf"))?;
        write_json(
            &ModelMeta {
                kind: "ncl".into(),
                version: 1,
                d: self.d(),
                n: self.d(),
                k: None,
                temperature: Some(temperature),
            },
            dir.join(MODEL_META_FILE),
        )
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: ModelMeta = read_json(dir.join(MODEL_META_FILE))?;
        if meta.kind != "ncl" {
            return Err(Error::Format(format!("model kind {:?} is not an NCL projector", meta.kind)));
        }
        let proj = Self::new(
            read_tensor(dir.join("W1.mmtf"))?,
            read_tensor(dir.join("b1.mmtf"))?.into_data(),
            read_tensor(dir.join("W2.mmtf"))?,
            read_tensor(dir.join("b2.mmtf"))?.into_data(),
        )?;
        if proj.d() != meta.d {
            return Err(Error::Format("model.json width disagrees with tensors".into()));
        }
        Ok(proj)
    }
}

/// `(logsumexp(x), softmax(x))` with max subtraction.
fn log_softmax_parts(x: impl Iterator<Item = f64> + Clone) -> (f64, Vec<f64>) {
    let max = x.clone().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (max + sum.ln(), exps.into_iter().map(|e| e / sum).collect())
}

/// Trains a projector with minibatch gradient descent on the contrastive
/// loss; uses the same plateau stop on active dimensions as the SAE.
pub fn ncl_train(
    data: &PairedEmbeddingDataset,
    cfg: &TrainConfig,
    temperature: f64,
    direction: Direction,
) -> Result<(NclProjector, TrainHistory)> {
    cfg.validate()?;
    if data.len() < 2 {
        return Err(Error::Usage("contrastive training needs at least 2 pairs".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut proj = NclProjector::init(data.dim(), cfg.seed ^ 0x9c1)?;
    let (train_idx, hold_idx) = holdout_split(data.len(), &mut rng);
    let hold_img = data.img.select_rows(&hold_idx)?;
    let hold_txt = data.txt.select_rows(&hold_idx)?;
    let mut sampler = BatchSampler::new(train_idx, cfg.batch_size);
    let mut history = TrainHistory::default();

    for step in 0..cfg.steps {
        let batch = sampler.next_batch(&mut rng);
        let img = data.img.select_rows(&batch)?;
        let txt = data.txt.select_rows(&batch)?;
        let (loss, grads) = proj.loss_and_grad(&img, &txt, temperature, direction)?;
        if !loss.is_finite() {
            return Err(Error::Numeric {
                step,
                message: format!("NCL loss became {loss}"),
            });
        }
        history.loss.push(loss);
        proj.apply_gradient(&grads, cfg.learning_rate);
        if !proj.all_finite() {
            return Err(Error::Numeric {
                step,
                message: "non-finite projector weights".into(),
            });
        }

        if (step + 1) % CHECKPOINT_EVERY == 0 {
            let a_img = count_active_dims(&proj.project_matrix(&hold_img)?, 0.0);
            let a_txt = count_active_dims(&proj.project_matrix(&hold_txt)?, 0.0);
            history.record_checkpoint(step + 1, a_img, a_txt);
            if history.plateau_reached(cfg.plateau_window, cfg.plateau_tolerance) {
                history.stopped_early = step + 1 < cfg.steps;
                break;
            }
        }
    }
    Ok((proj, history))
}

/// Fraction of anchors whose positive logit strictly beats every in-batch
/// negative, over consecutive batches of `batch_size` rows.
pub fn retrieval_top1(
    proj: &NclProjector,
    img: &Matrix,
    txt: &Matrix,
    batch_size: usize,
) -> Result<f64> {
    if batch_size < 2 || img.rows() < 2 {
        return Err(Error::Usage("retrieval needs batches of at least 2 pairs".into()));
    }
    let pi = proj.project_matrix(img)?;
    let pt = proj.project_matrix(txt)?;
    let mut hits = 0usize;
    let mut total = 0usize;
    let rows: Vec<usize> = (0..img.rows()).collect();
    for chunk in rows.chunks(batch_size).filter(|c| c.len() >= 2) {
        for &a in chunk {
            let pos = dot(pi.row(a), pt.row(a));
            if chunk
                .iter()
                .filter(|&&c| c != a)
                .all(|&c| pos > dot(pi.row(a), pt.row(c)))
            {
                hits += 1;
            }
            total += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

/// Mean fraction of nonzero coordinates per row.
pub fn nonzero_fraction(latents: &Matrix) -> f64 {
    let nz = latents.data().iter().filter(|&&v| v != 0.0).count();
    nz as f64 / latents.data().len() as f64
}
