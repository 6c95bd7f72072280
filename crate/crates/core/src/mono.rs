//! Monosemanticity scores from an external embedding space.
//!
//! For a feature, the `m` most-activated samples are embedded into `Z+` and
//! `m` random samples into `Z-`. With rows L2-normalized, `S± = Z± Z±ᵀ`:
//!
//! * EmbSim: mean over ordered pairs `i ≠ j` of `(S+_ij - S-_ij) / S-_ij`,
//!   skipping pairs with `|S-_ij| < 1e-6`.
//! * WinRate: fraction of ordered pairs `i ≠ j` with `S+_ij > S-_ij`.
//! * Mono: their average.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, l2_norm, Matrix};
use crate::mds::{Category, MdsReport};
use crate::seed::derive_seed;

pub const DEFAULT_M: usize = 20;
pub const EMBSIM_EPS: f64 = 1e-6;

/// Indices of the `m` largest entries of column `feature`, descending, ties
/// broken toward the lower sample index.
pub fn top_activated(latents: &Matrix, feature: usize, m: usize) -> Result<Vec<usize>> {
    if feature >= latents.cols() {
        return Err(Error::Usage(format!(
            "feature {feature} out of range for {} columns",
            latents.cols()
        )));
    }
    if m > latents.rows() {
        return Err(Error::Usage(format!(
            "requested {m} samples but only {} exist",
            latents.rows()
        )));
    }
    let col = latents.column(feature);
    let mut idx: Vec<usize> = (0..col.len()).collect();
    idx.sort_by(|&a, &b| col[b].total_cmp(&col[a]).then(a.cmp(&b)));
    idx.truncate(m);
    Ok(idx)
}

/// Cosine similarity matrix of the rows of `z`.
fn cosine_gram(z: &Matrix) -> Result<Vec<Vec<f64>>> {
    let rows: Vec<Vec<f64>> = z
        .iter_rows()
        .enumerate()
        .map(|(i, r)| {
            let n = l2_norm(r);
            if n == 0.0 {
                Err(Error::Normalization(format!("row {i} has zero norm")))
            } else {
                Ok(r.iter().map(|v| v / n).collect())
            }
        })
        .collect::<Result<_>>()?;
    Ok(rows
        .iter()
        .map(|a| rows.iter().map(|b| dot(a, b)).collect())
        .collect())
}

fn check_pair(z_pos: &Matrix, z_neg: &Matrix) -> Result<usize> {
    if z_pos.shape() != z_neg.shape() {
        return Err(Error::Shape(format!(
            "Z+ {:?} vs Z- {:?}",
            z_pos.shape(),
            z_neg.shape()
        )));
    }
    if z_pos.rows() < 2 {
        return Err(Error::Usage("similarity scores need m >= 2".into()));
    }
    Ok(z_pos.rows())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbSim {
    pub value: f64,
    /// Off-diagonal pairs dropped for a near-zero baseline similarity.
    pub excluded: usize,
}

pub fn embsim_detailed(z_pos: &Matrix, z_neg: &Matrix) -> Result<EmbSim> {
    let m = check_pair(z_pos, z_neg)?;
    let sp = cosine_gram(z_pos)?;
    let sn = cosine_gram(z_neg)?;
    let mut total = 0.0;
    let mut kept = 0usize;
    let mut excluded = 0usize;
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            if sn[i][j].abs() < EMBSIM_EPS {
                excluded += 1;
            } else {
                total += (sp[i][j] - sn[i][j]) / sn[i][j];
                kept += 1;
            }
        }
    }
    if kept == 0 {
        return Err(Error::UndefinedScore(
            "every baseline similarity is near zero".into(),
        ));
    }
    Ok(EmbSim {
        value: total / kept as f64,
        excluded,
    })
}

pub fn embsim(z_pos: &Matrix, z_neg: &Matrix) -> Result<f64> {
    Ok(embsim_detailed(z_pos, z_neg)?.value)
}

pub fn winrate(z_pos: &Matrix, z_neg: &Matrix) -> Result<f64> {
    let m = check_pair(z_pos, z_neg)?;
    let sp = cosine_gram(z_pos)?;
    let sn = cosine_gram(z_neg)?;
    let wins = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && sp[i][j] > sn[i][j])
        .count();
    Ok(wins as f64 / (m * (m - 1)) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Img,
    Txt,
}

impl Modality {
    fn tag(self) -> u64 {
        match self {
            Modality::Img => 0,
            Modality::Txt => 1,
        }
    }
}

/// Scores for one feature in one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityScore {
    pub embsim: Option<f64>,
    pub embsim_excluded: usize,
    pub winrate: f64,
    pub mono: Option<f64>,
    pub top: Vec<usize>,
}

/// Scores `feature` in one modality: top-`m` rows of `eval` by activation
/// against `m` rows drawn uniformly without replacement.
pub fn score_feature(
    latents: &Matrix,
    eval: &Matrix,
    feature: usize,
    m: usize,
    seed: u64,
    modality: Modality,
) -> Result<ModalityScore> {
    if latents.rows() != eval.rows() {
        return Err(Error::Alignment(format!(
            "{} latent rows vs {} evaluation rows",
            latents.rows(),
            eval.rows()
        )));
    }
    let top = top_activated(latents, feature, m)?;
    let z_pos = eval.select_rows(&top)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[feature as u64, modality.tag()]));
    let random = sample(&mut rng, eval.rows(), m).into_vec();
    let z_neg = eval.select_rows(&random)?;
    let (embsim, embsim_excluded) = match embsim_detailed(&z_pos, &z_neg) {
        Ok(e) => (Some(e.value), e.excluded),
        Err(Error::UndefinedScore(_)) => (None, m * (m - 1)),
        Err(e) => return Err(e),
    };
    let winrate = winrate(&z_pos, &z_neg)?;
    Ok(ModalityScore {
        embsim,
        embsim_excluded,
        winrate,
        mono: embsim.map(|e| (e + winrate) / 2.0),
        top,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScores {
    pub feature: usize,
    pub category: Category,
    pub img: ModalityScore,
    pub txt: ModalityScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityAggregate {
    pub mean_embsim: Option<f64>,
    pub mean_winrate: Option<f64>,
    pub mean_mono: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonoReport {
    pub features: Vec<FeatureScores>,
    pub img: ModalityAggregate,
    pub txt: ModalityAggregate,
    /// Mean image Mono over ImgD minus over TextD; `None` when either is empty.
    pub visual_mono: Option<f64>,
    /// Mean text Mono over TextD minus over ImgD; `None` when either is empty.
    pub textual_mono: Option<f64>,
    pub m: usize,
    pub seed: u64,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

fn aggregate<'a>(scores: impl Iterator<Item = &'a ModalityScore> + Clone) -> ModalityAggregate {
    ModalityAggregate {
        mean_embsim: mean_of(scores.clone().map(|s| s.embsim)),
        mean_winrate: mean_of(scores.clone().map(|s| Some(s.winrate))),
        mean_mono: mean_of(scores.map(|s| s.mono)),
    }
}

/// Scores every live feature in both modalities and aggregates by category.
#[allow(clippy::too_many_arguments)]
pub fn mono_report(
    latents_img: &Matrix,
    latents_txt: &Matrix,
    eval_img: &Matrix,
    eval_txt: &Matrix,
    categories: &MdsReport,
    m: usize,
    seed: u64,
) -> Result<MonoReport> {
    if latents_img.shape() != latents_txt.shape() {
        return Err(Error::Shape(format!(
            "image latents {:?} vs text latents {:?}",
            latents_img.shape(),
            latents_txt.shape()
        )));
    }
    if categories.len() != latents_img.cols() {
        return Err(Error::Shape(format!(
            "report covers {} features, latents have {}",
            categories.len(),
            latents_img.cols()
        )));
    }
    let features = categories
        .live_indices()
        .into_iter()
        .map(|k| {
            Ok(FeatureScores {
                feature: k,
                category: categories.category[k],
                img: score_feature(latents_img, eval_img, k, m, seed, Modality::Img)?,
                txt: score_feature(latents_txt, eval_txt, k, m, seed, Modality::Txt)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let cat_mean = |cat: Category, pick: fn(&FeatureScores) -> Option<f64>| {
        mean_of(features.iter().filter(|f| f.category == cat).map(pick))
    };
    let diff = |a: Option<f64>, b: Option<f64>| Some(a? - b?);
    let visual_mono = diff(
        cat_mean(Category::ImgD, |f| f.img.mono),
        cat_mean(Category::TextD, |f| f.img.mono),
    );
    let textual_mono = diff(
        cat_mean(Category::TextD, |f| f.txt.mono),
        cat_mean(Category::ImgD, |f| f.txt.mono),
    );
    Ok(MonoReport {
        img: aggregate(features.iter().map(|f| &f.img)),
        txt: aggregate(features.iter().map(|f| &f.txt)),
        features,
        visual_mono,
        textual_mono,
        m,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_activated_orders_descending() {
        let z = Matrix::new(3, 1, vec![0.1, 0.9, 0.5]).unwrap();
        assert_eq!(top_activated(&z, 0, 2).unwrap(), vec![1, 2]);
    }

    #[test]
    fn top_activated_ties_to_lowest_index() {
        let z = Matrix::new(3, 1, vec![0.4; 3]).unwrap();
        assert_eq!(top_activated(&z, 0, 2).unwrap(), vec![0, 1]);
        assert!(matches!(top_activated(&z, 0, 4), Err(Error::Usage(_))));
    }

    /// Unit rows with every pairwise cosine equal to `c` (m = 3, d = 3+1).
    fn equicorrelated(c: f64) -> Matrix {
        // rows sqrt(c) e0 + sqrt(1-c) e_{i+1}
        let a = c.sqrt();
        let b = (1.0 - c).sqrt();
        Matrix::new(3, 4, vec![a, b, 0.0, 0.0, a, 0.0, b, 0.0, a, 0.0, 0.0, b]).unwrap()
    }

    #[test]
    fn embsim_hand_value() {
        let e = embsim(&equicorrelated(0.8), &equicorrelated(0.4)).unwrap();
        assert!((e - 1.0).abs() < 1e-12, "{e}");
    }

    #[test]
    fn identical_sets_score_zero() {
        let z = equicorrelated(0.3);
        assert_eq!(embsim(&z, &z).unwrap(), 0.0);
        assert_eq!(winrate(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn embsim_can_be_negative() {
        assert!(embsim(&equicorrelated(0.2), &equicorrelated(0.6)).unwrap() < 0.0);
    }

    #[test]
    fn orthogonal_baseline_is_undefined() {
        let z_neg = Matrix::new(3, 4, vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let err = embsim(&equicorrelated(0.5), &z_neg).unwrap_err();
        assert!(matches!(err, Error::UndefinedScore(_)));
    }

    #[test]
    fn winrate_four_of_six() {
        // S- has all off-diagonals 0.5. S+ beats it on pairs (0,1) and (0,2)
        // only; counted in both orders that is 4 of 6.
        // Z+ rows: u0 = e0, u1 = 0.6 e0 + 0.8 e1, u2 = 0.6 e0 - 0.8 e1 -> cos(1,2) < 0.
        let z_pos = Matrix::new(3, 4, vec![1.0, 0.0, 0.0, 0.0, 0.6, 0.8, 0.0, 0.0, 0.6, -0.8, 0.0, 0.0])
            .unwrap();
        let w = winrate(&z_pos, &equicorrelated(0.5)).unwrap();
        assert!((w - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_row_cannot_be_normalized() {
        let z = Matrix::new(2, 2, vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(winrate(&z, &z), Err(Error::Normalization(_))));
    }
}
