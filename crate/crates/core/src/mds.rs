//! Modality Dominance Score and three-way feature categorization.
//!
//! For feature `k` over `M` paired samples,
//!
//! ```text
//! R(k) = 1/M_used Σ_m |img_mk| / (|img_mk| + |txt_mk|)
//! ```
//!
//! where samples with `|img_mk| + |txt_mk| < 1e-12` are skipped. Features
//! with no contributing sample are dead and carry the sentinel `R = 0.5`.
//! With `μ, σ` the mean and population standard deviation of `R` over live
//! features, a feature is text-dominant below `μ - σ`, image-dominant above
//! `μ + σ` and cross-modal otherwise (boundaries included).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const SKIP_EPS: f64 = 1e-12;
pub const DEAD_SENTINEL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    TextD,
    CrossD,
    ImgD,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::TextD => "TextD",
            Category::CrossD => "CrossD",
            Category::ImgD => "ImgD",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceScores {
    pub r: Vec<f64>,
    pub live: Vec<bool>,
    pub m_used: Vec<usize>,
}

pub fn modality_dominance_scores(z_img: &Matrix, z_txt: &Matrix) -> Result<DominanceScores> {
    if z_img.shape() != z_txt.shape() {
        return Err(Error::Shape(format!(
            "image latents {:?} vs text latents {:?}",
            z_img.shape(),
            z_txt.shape()
        )));
    }
    let n = z_img.cols();
    let mut sum = vec![0.0; n];
    let mut used = vec![0usize; n];
    for (ri, rt) in z_img.iter_rows().zip(z_txt.iter_rows()) {
        for k in 0..n {
            let a = ri[k].abs();
            let b = rt[k].abs();
            let denom = a + b;
            if denom >= SKIP_EPS {
                sum[k] += a / denom;
                used[k] += 1;
            }
        }
    }
    let r = sum
        .iter()
        .zip(&used)
        .map(|(&s, &u)| if u == 0 { DEAD_SENTINEL } else { s / u as f64 })
        .collect();
    let live = used.iter().map(|&u| u > 0).collect();
    Ok(DominanceScores { r, live, m_used: used })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdsReport {
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    pub category: Vec<Category>,
    pub live: Vec<bool>,
    pub mu: f64,
    pub sigma: f64,
    #[serde(rename = "M_used", default, skip_serializing_if = "Vec::is_empty")]
    pub m_used: Vec<usize>,
}

impl MdsReport {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// Live feature indices in the given category, ascending.
    pub fn indices_of(&self, cat: Category) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| self.live[k] && self.category[k] == cat)
            .collect()
    }

    pub fn live_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.live[k]).collect()
    }

    /// `(TextD, CrossD, ImgD)` counts over all features; dead ones count as CrossD.
    pub fn counts(&self) -> (usize, usize, usize) {
        self.category.iter().fold((0, 0, 0), |(t, c, i), cat| match cat {
            Category::TextD => (t + 1, c, i),
            Category::CrossD => (t, c + 1, i),
            Category::ImgD => (t, c, i + 1),
        })
    }
}

pub fn categorize_features(r: &[f64], live: &[bool]) -> Result<MdsReport> {
    if r.len() != live.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} liveness flags",
            r.len(),
            live.len()
        )));
    }
    let live_r: Vec<f64> = r.iter().zip(live).filter(|(_, &l)| l).map(|(&v, _)| v).collect();
    if live_r.len() < 2 {
        return Err(Error::DegenerateDistribution(format!(
            "need at least 2 live features, found {}",
            live_r.len()
        )));
    }
    let n = live_r.len() as f64;
    let mu = live_r.iter().sum::<f64>() / n;
    let sigma = (live_r.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt();
    let lo = mu - sigma;
    let hi = mu + sigma;
    let category = r
        .iter()
        .zip(live)
        .map(|(&v, &l)| {
            if !l {
                Category::CrossD
            } else if v < lo {
                Category::TextD
            } else if v > hi {
                Category::ImgD
            } else {
                Category::CrossD
            }
        })
        .collect();
    Ok(MdsReport {
        r: r.to_vec(),
        category,
        live: live.to_vec(),
        mu,
        sigma,
        m_used: Vec::new(),
    })
}

/// Scores and categorizes in one pass.
pub fn mds_report(z_img: &Matrix, z_txt: &Matrix) -> Result<MdsReport> {
    let scores = modality_dominance_scores(z_img, z_txt)?;
    let mut report = categorize_features(&scores.r, &scores.live)?;
    report.m_used = scores.m_used;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_left: f64,
    pub count_textd: usize,
    pub count_crossd: usize,
    pub count_imgd: usize,
}

/// Equal-width histogram of live `R` values over `[0, 1]`, split by
/// category. `R = 1` falls in the last bin.
pub fn histogram(report: &MdsReport, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 {
        return Err(Error::Usage("histogram needs at least one bin".into()));
    }
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            bin_left: b as f64 / bins as f64,
            count_textd: 0,
            count_crossd: 0,
            count_imgd: 0,
        })
        .collect();
    for k in report.live_indices() {
        let b = ((report.r[k] * bins as f64).floor() as usize).min(bins - 1);
        match report.category[k] {
            Category::TextD => out[b].count_textd += 1,
            Category::CrossD => out[b].count_crossd += 1,
            Category::ImgD => out[b].count_imgd += 1,
        }
    }
    Ok(out)
}

pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut s = String::from("bin_left,count_TextD,count_CrossD,count_ImgD\n");
    for b in bins {
        s.push_str(&format!(
            "{},{},{},{}\n",
            b.bin_left, b.count_textd, b.count_crossd, b.count_imgd
        ));
    }
    s
}
