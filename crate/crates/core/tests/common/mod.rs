//! Shared fixtures and the criterion checks used by the acceptance target.
#![allow(dead_code)]

use std::path::Path;
use std::time::{Duration, Instant};

use mmfeat::intervene::{
    align_detox, balanced_masks, interpolate_features, nearest_reference_classify, zero_mask,
    IndexLabel, IndexSet, Reference, ReferencePair,
};
use mmfeat::mds::{mds_report, Category};
use mmfeat::mono::{score_feature, Modality};
use mmfeat::ncl::{ncl_train, retrieval_top1, Direction, NclProjector};
use mmfeat::sae::{relative_reconstruction_error, sae_train, SaeModel};
use mmfeat::synthgen::{generate_synthetic, DimModality, SynthConfig};
use mmfeat::train::TrainConfig;
use mmfeat::Matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const FD_STEP: f64 = 1e-5;

pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * normal(rng))
        .collect::<Vec<f64>>();
    Matrix::new(rows, cols, data).unwrap()
}

pub fn gaussian_vec(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| scale * normal(rng)).collect()
}

/// `‖a - n‖ / max(‖a‖, ‖n‖)` over the concatenated parameter gradient.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let na = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / na.max(nn).max(f64::MIN_POSITIVE)
}

/// Central differences of `loss` with respect to every flat parameter
/// reachable through `params`, perturbing a fresh clone each time.
pub fn central_differences<M: Clone>(
    model: &M,
    n_groups: usize,
    params: impl Fn(&mut M, usize) -> &mut [f64],
    loss: impl Fn(&M) -> f64,
) -> Vec<f64> {
    let mut out = Vec::new();
    for g in 0..n_groups {
        let len = params(&mut model.clone(), g).len();
        for i in 0..len {
            let mut plus = model.clone();
            params(&mut plus, g)[i] += FD_STEP;
            let mut minus = model.clone();
            params(&mut minus, g)[i] -= FD_STEP;
            out.push((loss(&plus) - loss(&minus)) / (2.0 * FD_STEP));
        }
    }
    out
}

/// SAE gradient check at d=8, n=8, k=2, batch 4 with the support frozen at
/// the unperturbed parameters.
pub fn sae_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, n, k, b) = (8, 8, 2, 4);
    let img = gaussian_matrix(b, d, 1.0, &mut rng);
    let txt = gaussian_matrix(b, d, 1.0, &mut rng);
    let model = SaeModel::init(d, n, k, gaussian_vec(d, 0.1, &mut rng), seed).unwrap();
    let supports = model.batch_supports(&img, &txt).unwrap();
    let (_, g) = model.loss_and_grad(&img, &txt).unwrap();
    let analytic: Vec<f64> = [g.w_enc.data(), g.w_dec.data(), &g.b_pre[..]].concat();
    let numeric = central_differences(
        &model,
        3,
        |m: &mut SaeModel, i| {
            let [a, b, c] = m.params_mut();
            [a, b, c].into_iter().nth(i).unwrap()
        },
        |m| m.loss_with_supports(&img, &txt, &supports).unwrap(),
    );
    relative_error(&analytic, &numeric)
}

/// NCL gradient check at d=6, B=4 with random biases.
pub fn ncl_gradient_error(seed: u64, direction: Direction) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, b) = (6, 4);
    let img = gaussian_matrix(b, d, 1.0, &mut rng);
    let txt = gaussian_matrix(b, d, 1.0, &mut rng);
    let mut proj = NclProjector::init(d, seed).unwrap();
    {
        let [_, b1, _, b2] = proj.params_mut();
        for v in b1.iter_mut().chain(b2.iter_mut()) {
            *v = 0.3 * normal(&mut rng) + 0.2;
        }
    }
    let tau = 0.7;
    let (_, g) = proj.loss_and_grad(&img, &txt, tau, direction).unwrap();
    let analytic: Vec<f64> = [g.w1.data(), &g.b1[..], g.w2.data(), &g.b2[..]].concat();
    let numeric = central_differences(
        &proj,
        4,
        |p: &mut NclProjector, i| {
            let [a, b, c, e] = p.params_mut();
            [a, b, c, e].into_iter().nth(i).unwrap()
        },
        |p| p.loss_directed(&img, &txt, tau, direction).unwrap(),
    );
    relative_error(&analytic, &numeric)
}

pub fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let sae = (0..5).map(sae_gradient_error).fold(0.0, f64::max);
    let ncl = (0..5)
        .flat_map(|s| [ncl_gradient_error(s, Direction::ImageToText), ncl_gradient_error(s, Direction::Symmetric)])
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    Outcome {
        pass: sae < 1e-4 && ncl < 1e-4 && elapsed < Duration::from_secs(5),
        detail: format!("max rel err sae {sae:.2e}, ncl {ncl:.2e}; {elapsed:.2?}"),
    }
}

pub fn topk_sparsity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut violations = 0usize;
    let mut encodes = 0usize;
    for model_seed in 0..20u64 {
        let d = rng.random_range(2..24);
        let n = rng.random_range(d..3 * d);
        let k = rng.random_range(1..=n);
        let b_pre = gaussian_vec(d, 1.0, &mut rng);
        let model = SaeModel::init(d, n, k, b_pre, model_seed).unwrap();
        for _ in 0..500 {
            let z = gaussian_vec(d, 3.0, &mut rng);
            let latent = model.encode(&z).unwrap();
            let nnz = latent.iter().filter(|&&v| v != 0.0).count();
            if nnz > k || latent.iter().any(|v| !(*v >= 0.0)) {
                violations += 1;
            }
            encodes += 1;
        }
    }
    Outcome {
        pass: violations == 0 && encodes == 10_000,
        detail: format!("{encodes} encodes, {violations} violations"),
    }
}

/// Sparse-dictionary data for the recovery check: every cluster activates
/// one image-only, one text-only and two shared dims.
pub fn recovery_data() -> mmfeat::tensorio::PairedEmbeddingDataset {
    let cfg = SynthConfig {
        m: 2000,
        d: 32,
        n_img_only: 4,
        n_txt_only: 4,
        n_shared: 24,
        noise_sigma: 0.0,
        n_clusters: 8,
        mix: false,
        active_fraction: 0.1,
        shared_cluster_specific: true,
    };
    generate_synthetic(&cfg, 1).unwrap().0
}

pub fn recovery_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        steps: 5000,
        batch_size: 64,
        learning_rate: 0.2,
        seed,
        plateau_window: 0,
        plateau_tolerance: 0,
    }
}

pub fn sae_recovery() -> Outcome {
    let data = recovery_data();
    let start = Instant::now();
    let (model, history) = sae_train(&data, &recovery_train_config(0), 4, 32).unwrap();
    let elapsed = start.elapsed();
    let err = relative_reconstruction_error(&model, &data).unwrap();
    Outcome {
        pass: err < 0.05 && history.loss.len() <= 5000 && elapsed < Duration::from_secs(60),
        detail: format!("relative error {err:.4} after {} steps; {elapsed:.2?}", history.loss.len()),
    }
}

pub fn ncl_retrieval_setup() -> (mmfeat::tensorio::PairedEmbeddingDataset, mmfeat::tensorio::PairedEmbeddingDataset) {
    let cfg = SynthConfig {
        mix: true,
        ..SynthConfig::default()
    };
    let (data, _) = generate_synthetic(&cfg, 1).unwrap();
    let train: Vec<usize> = (0..1800).collect();
    let held: Vec<usize> = (1800..2000).collect();
    (data.subset(&train).unwrap(), data.subset(&held).unwrap())
}

pub fn ncl_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        steps: 3000,
        batch_size: 64,
        learning_rate: 0.05,
        seed,
        plateau_window: 0,
        plateau_tolerance: 0,
    }
}

pub fn ncl_nonneg_and_retrieval() -> Outcome {
    let (train, held) = ncl_retrieval_setup();
    let (proj, _) = ncl_train(&train, &ncl_train_config(0), 1.0, Direction::ImageToText).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let probes = gaussian_matrix(1000, train.dim(), 10.0, &mut rng);
    let mut negatives = 0usize;
    for m in [&train.img, &train.txt, &held.img, &held.txt, &probes] {
        let p = proj.project_matrix(m).unwrap();
        negatives += p.data().iter().filter(|v| !(**v >= 0.0)).count();
    }
    let top1 = retrieval_top1(&proj, &held.img, &held.txt, 64).unwrap();
    Outcome {
        pass: negatives == 0 && top1 >= 0.9,
        detail: format!("{negatives} negative outputs, held-out top-1 {:.1}%", 100.0 * top1),
    }
}

/// Per-dim expected category: planted image-only dims are ImgD, text-only
/// TextD, shared CrossD.
pub fn expected_category(m: DimModality) -> Category {
    match m {
        DimModality::ImgOnly => Category::ImgD,
        DimModality::TxtOnly => Category::TextD,
        DimModality::Shared => Category::CrossD,
    }
}

/// Fractions of (single-modality dims, all dims) whose raw-latent category
/// matches the planted label.
pub fn mds_agreement(noise: f64, seed: u64) -> (f64, f64) {
    let cfg = SynthConfig {
        noise_sigma: noise,
        ..SynthConfig::default()
    };
    let (data, truth) = generate_synthetic(&cfg, seed).unwrap();
    let rep = mds_report(&data.img, &data.txt).unwrap();
    let (mut single_hit, mut single_total, mut all_hit) = (0, 0, 0);
    for (k, &dm) in truth.dim_modality.iter().enumerate() {
        let ok = rep.category[k] == expected_category(dm);
        all_hit += ok as usize;
        if dm != DimModality::Shared {
            single_total += 1;
            single_hit += ok as usize;
        }
    }
    (
        single_hit as f64 / single_total as f64,
        all_hit as f64 / truth.dim_modality.len() as f64,
    )
}

pub fn mds_oracle() -> Outcome {
    let seeds = 0..5u64;
    let clean = seeds.clone().map(|s| mds_agreement(0.0, s)).fold((1.0f64, 1.0f64), |a, b| (a.0.min(b.0), a.1.min(b.1)));
    let noisy = seeds.map(|s| mds_agreement(0.05, s)).fold((1.0f64, 1.0f64), |a, b| (a.0.min(b.0), a.1.min(b.1)));
    Outcome {
        pass: clean.0 == 1.0 && noisy.0 >= 0.9,
        detail: format!(
            "worst of 5 seeds: noise 0 single-modality {:.0}% (all dims {:.0}%), noise 0.05 single-modality {:.0}% (all dims {:.0}%)",
            100.0 * clean.0,
            100.0 * clean.1,
            100.0 * noisy.0,
            100.0 * noisy.1
        ),
    }
}

/// Random latents with some exact zeros so skipped pairs and dead features
/// are exercised.
pub fn sparse_random_pair(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> (Matrix, Matrix) {
    let draw = |rng: &mut ChaCha8Rng| {
        let data = (0..rows * cols)
            .map(|_| if rng.random_bool(0.4) { 0.0 } else { normal(rng) })
            .collect();
        Matrix::new(rows, cols, data).unwrap()
    };
    let a = draw(rng);
    let b = draw(rng);
    (a, b)
}

pub fn mds_symmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut label_mismatch = 0;
    for _ in 0..200 {
        let rows = rng.random_range(1..40);
        let cols = rng.random_range(2..30);
        let (a, b) = sparse_random_pair(rows, cols, &mut rng);
        let (Ok(fwd), Ok(rev)) = (mds_report(&a, &b), mds_report(&b, &a)) else {
            continue;
        };
        for k in fwd.live_indices() {
            worst = worst.max((fwd.r[k] - (1.0 - rev.r[k])).abs());
            let flipped = match fwd.category[k] {
                Category::ImgD => Category::TextD,
                Category::TextD => Category::ImgD,
                Category::CrossD => Category::CrossD,
            };
            // labels on the band edge may legitimately differ by rounding
            let edge = (fwd.r[k] - (fwd.mu - fwd.sigma)).abs() < 1e-9 || (fwd.r[k] - (fwd.mu + fwd.sigma)).abs() < 1e-9;
            if rev.category[k] != flipped && !edge {
                label_mismatch += 1;
            }
        }
    }
    Outcome {
        pass: worst < 1e-12,
        detail: format!("max |R - (1 - R_swapped)| = {worst:.1e} over 200 cases; {label_mismatch} off-edge label mismatches"),
    }
}

/// Winrate of a feature that fires only on one planted cluster, scored on
/// the clean evaluation embeddings. Clusters use nearly disjoint supports so
/// that cluster membership, not chance overlap, drives similarity.
pub fn planted_cluster_winrates(seed: u64) -> Vec<f64> {
    let cfg = SynthConfig {
        noise_sigma: 0.01,
        active_fraction: 0.125,
        ..SynthConfig::default()
    };
    let (data, truth) = generate_synthetic(&cfg, seed).unwrap();
    let eval = data.eval_img.as_ref().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cfg.n_clusters)
        .map(|c| {
            let col: Vec<f64> = truth
                .cluster_of_sample
                .iter()
                .map(|&k| if k == c { 1.0 + rng.random::<f64>() } else { 0.0 })
                .collect();
            let latents = Matrix::new(col.len(), 1, col).unwrap();
            score_feature(&latents, eval, 0, 20, seed, Modality::Img).unwrap().winrate
        })
        .collect()
}

/// Winrate of a feature whose activations are a random permutation.
pub fn permutation_winrate(seed: u64, eval: &Matrix) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut col: Vec<f64> = (0..eval.rows()).map(|i| i as f64).collect();
    col.shuffle(&mut rng);
    let latents = Matrix::new(col.len(), 1, col).unwrap();
    score_feature(&latents, eval, 0, 20, seed, Modality::Img).unwrap().winrate
}

pub fn mono_sanity() -> Outcome {
    let planted = planted_cluster_winrates(0);
    let planted_min = planted.iter().copied().fold(1.0, f64::min);
    let (data, _) = generate_synthetic(
        &SynthConfig {
            noise_sigma: 0.01,
            ..SynthConfig::default()
        },
        1,
    )
    .unwrap();
    let eval = data.eval_img.as_ref().unwrap();
    let perm: Vec<f64> = (0..100).map(|s| permutation_winrate(s, eval)).collect();
    let mean = perm.iter().sum::<f64>() / perm.len() as f64;
    let within = perm.iter().filter(|w| (**w - 0.5).abs() <= 0.1).count();
    Outcome {
        pass: planted_min > 0.9 && (mean - 0.5).abs() <= 0.1,
        detail: format!(
            "planted-cluster winrate min {planted_min:.3} over {} clusters; permutation mean {mean:.3} over 100 seeds ({within}/100 individually within 0.5 +/- 0.1)",
            planted.len()
        ),
    }
}

pub fn intervention_endpoints() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut failures = Vec::new();
    let mut worst_dist: f64 = 0.0;
    for case in 0..200 {
        let d = rng.random_range(1..40);
        let t = gaussian_vec(d, 2.0, &mut rng);
        let r = gaussian_vec(d, 2.0, &mut rng);
        let picked: Vec<usize> = (0..d).filter(|_| rng.random_bool(0.4)).collect();
        let set = IndexSet::new(picked, IndexLabel::Random).unwrap();
        let off = |out: &[f64], base: &[f64]| (0..d).filter(|i| !set.contains(*i)).all(|i| out[i].to_bits() == base[i].to_bits());

        let a1 = interpolate_features(&t, &r, &set, 1.0).unwrap();
        let a0 = interpolate_features(&t, &r, &set, 0.0).unwrap();
        if a1.iter().zip(&t).any(|(x, y)| x.to_bits() != y.to_bits()) {
            failures.push(format!("case {case}: alpha=1 not exact"));
        }
        if set.indices().iter().any(|&i| a0[i].to_bits() != r[i].to_bits()) || !off(&a0, &t) {
            failures.push(format!("case {case}: alpha=0 not exact"));
        }
        let mid = interpolate_features(&t, &r, &set, rng.random()).unwrap();
        if !off(&mid, &t) {
            failures.push(format!("case {case}: interpolation touched off-index"));
        }

        let masked = zero_mask(&t, &set).unwrap();
        if !off(&masked, &t) || set.indices().iter().any(|&i| masked[i] != 0.0) {
            failures.push(format!("case {case}: mask"));
        }

        let lr = rng.random_range(0.05..0.95);
        let res = align_detox(&t, &r, &set, 200, lr).unwrap();
        if !off(&res.output, &t) {
            failures.push(format!("case {case}: detox touched off-index"));
        }
        if res.loss_curve.windows(2).any(|w| w[1] > w[0]) {
            failures.push(format!("case {case}: loss increased (lr {lr})"));
        }
        let dist = set.indices().iter().map(|&i| (res.output[i] - r[i]).powi(2)).sum::<f64>().sqrt();
        worst_dist = worst_dist.max(dist);
    }
    Outcome {
        pass: failures.is_empty() && worst_dist < 1e-6,
        detail: if failures.is_empty() {
            format!("200 random cases; worst final detox distance {worst_dist:.1e}")
        } else {
            format!("{} failures, first: {}", failures.len(), failures[0])
        },
    }
}

/// Accuracy drops from masking `I_img` and `I_rand` on image embeddings of
/// a two-class synthetic set whose class signal lives in image-only dims.
pub fn masking_drops(seed: u64) -> (f64, f64) {
    let cfg = SynthConfig {
        m: 400,
        n_clusters: 2,
        noise_sigma: 0.05,
        shared_cluster_specific: false,
        ..SynthConfig::default()
    };
    let (data, truth) = generate_synthetic(&cfg, seed).unwrap();
    let report = mds_report(&data.img, &data.txt).unwrap();
    let (i_img, _, i_rand) = balanced_masks(&report, seed).unwrap();

    let centroid = |class: usize| {
        let mut c = vec![0.0; data.dim()];
        let mut count = 0.0;
        for (row, &k) in data.img.iter_rows().zip(&truth.cluster_of_sample) {
            if k == class {
                for (a, b) in c.iter_mut().zip(row) {
                    *a += b;
                }
                count += 1.0;
            }
        }
        c.iter().map(|v| v / count).collect::<Vec<f64>>()
    };
    let refs = ReferencePair::new(
        Reference { vector: centroid(0), label: "0".into() },
        Reference { vector: centroid(1), label: "1".into() },
    )
    .unwrap();
    let accuracy = |set: Option<&IndexSet>| {
        let hits = data
            .img
            .iter_rows()
            .zip(&truth.cluster_of_sample)
            .filter(|(row, &k)| {
                let z = match set {
                    Some(s) => zero_mask(row, s).unwrap(),
                    None => row.to_vec(),
                };
                nearest_reference_classify(&z, &refs).unwrap() == k.to_string()
            })
            .count();
        hits as f64 / data.len() as f64
    };
    let base = accuracy(None);
    (base - accuracy(Some(&i_img)), base - accuracy(Some(&i_rand)))
}

pub fn directional_masking() -> Outcome {
    let drops: Vec<(f64, f64)> = (0..20).map(masking_drops).collect();
    let img = drops.iter().map(|d| d.0).sum::<f64>() / 20.0;
    let rand = drops.iter().map(|d| d.1).sum::<f64>() / 20.0;
    Outcome {
        pass: img > rand,
        detail: format!("mean accuracy drop over 20 seeds: I_img {:.1} pts, I_rand {:.1} pts", 100.0 * img, 100.0 * rand),
    }
}

/// Runs the full command-line pipeline into `dir`; returns the wall time.
pub fn run_pipeline(bin: &Path, dir: &Path) -> Duration {
    let start = Instant::now();
    let p = |s: &str| dir.join(s).to_string_lossy().into_owned();
    let run = |args: &[&str]| {
        let out = std::process::Command::new(bin).args(args).output().unwrap();
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["gen", "--seed", "7", "--out", &p("data")]);
    run(&["train", "sae", "--data", &p("data"), "--seed", "7", "--out", &p("sae")]);
    run(&["train", "ncl", "--data", &p("data"), "--seed", "7", "--out", &p("ncl")]);
    run(&["mds", "--data", &p("data"), "--model", &p("sae"), "--seed", "7", "--out", &p("mds")]);
    run(&["eval", "mono", "--data", &p("data"), "--model", &p("sae"), "--seed", "7", "--features", "0,1", "--out", &p("mono")]);
    run(&["report", "histogram", "--data", &p("mds/report.json"), "--out", &p("report")]);
    let img = p("data/img.mmtf");
    let mask = p("mds/mask_img.json");
    run(&["intervene", "mask", "--data", &img, "--model", &p("sae"), "--indices", &mask, "--out", &p("mask")]);
    run(&["intervene", "detox", "--data", &img, "--reference", &p("data/txt.mmtf"), "--model", &p("sae"), "--indices", &mask, "--out", &p("detox")]);
    run(&["intervene", "interp", "--data", &img, "--reference", &p("data/txt.mmtf"), "--model", &p("sae"), "--indices", &mask, "--out", &p("interp")]);
    start.elapsed()
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn tree_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out
}

pub fn pipeline_determinism(bin: &Path) -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let t1 = run_pipeline(bin, a.path());
    let t2 = run_pipeline(bin, b.path());
    let ta = tree_contents(a.path());
    let tb = tree_contents(b.path());
    let identical = ta == tb;
    let slowest = t1.max(t2);
    Outcome {
        pass: identical && slowest < Duration::from_secs(120),
        detail: format!(
            "{} files, trees {}; slowest run {slowest:.2?}",
            ta.len(),
            if identical { "byte-identical" } else { "differ" }
        ),
    }
}

