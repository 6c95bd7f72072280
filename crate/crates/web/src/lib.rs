//! Browser bindings for three interactive views over synthetic data:
//! the modality dominance histogram, an interpolation sweep on image-dominant
//! features and the alignment loss curve. Every export returns a JSON string
//! that `www/index.html` draws on a canvas.

use mmfeat::intervene::{align_detox, interpolate_features, IndexLabel, IndexSet};
use mmfeat::mds::{histogram, mds_report, Category, MdsReport};
use mmfeat::synthgen::{generate_synthetic, DimModality, GroundTruth, SynthConfig};
use mmfeat::tensorio::PairedEmbeddingDataset;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Samples per generated dataset; small enough to regenerate on every slider move.
const DEMO_M: usize = 600;

fn demo_data(noise: f64, mix: bool, seed: u64) -> mmfeat::Result<(PairedEmbeddingDataset, GroundTruth)> {
    let cfg = SynthConfig {
        m: DEMO_M,
        noise_sigma: noise,
        mix,
        ..SynthConfig::default()
    };
    generate_synthetic(&cfg, seed)
}

fn planted(dm: DimModality) -> Category {
    match dm {
        DimModality::ImgOnly => Category::ImgD,
        DimModality::TxtOnly => Category::TextD,
        DimModality::Shared => Category::CrossD,
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Image-dominant features of the raw embeddings as an index set.
fn image_dominant(report: &MdsReport) -> mmfeat::Result<IndexSet> {
    IndexSet::new(report.indices_of(Category::ImgD), IndexLabel::ImgD)
}

/// First rows (in sample order) belonging to two different clusters.
fn two_cluster_rows(truth: &GroundTruth) -> (usize, usize) {
    let first = truth.cluster_of_sample[0];
    let other = truth
        .cluster_of_sample
        .iter()
        .position(|&c| c != first)
        .unwrap_or(1);
    (0, other)
}

pub fn mds_histogram_json(noise: f64, mix: bool, seed: u64, bins: usize) -> Result<String, String> {
    let (data, truth) = demo_data(noise, mix, seed).map_err(|e| e.to_string())?;
    let report = mds_report(&data.img, &data.txt).map_err(|e| e.to_string())?;
    let table = histogram(&report, bins).map_err(|e| e.to_string())?;
    let agree = truth
        .dim_modality
        .iter()
        .enumerate()
        .filter(|&(k, &dm)| report.category[k] == planted(dm))
        .count();
    let (t, c, i) = report.counts();
    Ok(json!({
        "bins": table,
        "r": report.r,
        "category": report.category,
        "mu": report.mu,
        "sigma": report.sigma,
        "counts": { "TextD": t, "CrossD": c, "ImgD": i },
        "agreement": agree as f64 / truth.dim_modality.len() as f64,
    })
    .to_string())
}

/// Blends the image-dominant features of one sample toward another at
/// every alpha on a 0..=1 grid of `points` values, reporting cosine
/// similarity to both endpoints and the full vector at `alpha`.
pub fn interpolation_json(seed: u64, alpha: f64, points: usize) -> Result<String, String> {
    if points < 2 {
        return Err("need at least two grid points".into());
    }
    let (data, truth) = demo_data(0.02, false, seed).map_err(|e| e.to_string())?;
    let report = mds_report(&data.img, &data.txt).map_err(|e| e.to_string())?;
    let set = image_dominant(&report).map_err(|e| e.to_string())?;
    let (ti, ri) = two_cluster_rows(&truth);
    let t = data.img.row(ti);
    let r = data.img.row(ri);
    let grid: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
    let mut to_target = Vec::with_capacity(points);
    let mut to_reference = Vec::with_capacity(points);
    for &a in &grid {
        let v = interpolate_features(t, r, &set, a).map_err(|e| e.to_string())?;
        to_target.push(cosine(&v, t));
        to_reference.push(cosine(&v, r));
    }
    let current = interpolate_features(t, r, &set, alpha).map_err(|e| e.to_string())?;
    Ok(json!({
        "indices": set.indices(),
        "alphas": grid,
        "cos_to_target": to_target,
        "cos_to_reference": to_reference,
        "vector": current,
        "target": t,
        "reference": r,
    })
    .to_string())
}

/// Alignment of an image embedding's image-dominant features onto its
/// paired text embedding.
pub fn detox_json(seed: u64, steps: usize, lr: f64) -> Result<String, String> {
    let (data, _) = demo_data(0.02, false, seed).map_err(|e| e.to_string())?;
    let report = mds_report(&data.img, &data.txt).map_err(|e| e.to_string())?;
    let set = image_dominant(&report).map_err(|e| e.to_string())?;
    let adv = data.img.row(0);
    let ben = data.txt.row(0);
    let res = align_detox(adv, ben, &set, steps, lr).map_err(|e| e.to_string())?;
    let off_index_unchanged = (0..adv.len())
        .filter(|&i| !set.contains(i))
        .all(|i| res.output[i].to_bits() == adv[i].to_bits());
    Ok(json!({
        "loss_curve": res.loss_curve,
        "indices": set.indices(),
        "off_index_unchanged": off_index_unchanged,
        "output": res.output,
    })
    .to_string())
}

#[wasm_bindgen]
pub fn mds_histogram(noise: f64, mix: bool, seed: u32, bins: u32) -> Result<String, JsError> {
    mds_histogram_json(noise, mix, seed as u64, bins as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn interpolation(seed: u32, alpha: f64, points: u32) -> Result<String, JsError> {
    interpolation_json(seed as u64, alpha, points as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn detox(seed: u32, steps: u32, lr: f64) -> Result<String, JsError> {
    detox_json(seed as u64, steps as usize, lr).map_err(|e| JsError::new(&e))
}
