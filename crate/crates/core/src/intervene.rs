//! Local edits to embedding vectors restricted to a feature index set.
//!
//! Every operation leaves coordinates outside the index set bit-identical.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::l2_norm;
use crate::mds::{Category, MdsReport};
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IndexLabel {
    ImgD,
    TextD,
    CrossD,
    Random,
}

impl From<Category> for IndexLabel {
    fn from(c: Category) -> Self {
        match c {
            Category::ImgD => IndexLabel::ImgD,
            Category::TextD => IndexLabel::TextD,
            Category::CrossD => IndexLabel::CrossD,
        }
    }
}

/// Strictly increasing feature indices with a provenance label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawIndexSet")]
pub struct IndexSet {
    indices: Vec<usize>,
    label: IndexLabel,
}

#[derive(Deserialize)]
struct RawIndexSet {
    indices: Vec<usize>,
    label: IndexLabel,
}

impl TryFrom<RawIndexSet> for IndexSet {
    type Error = Error;

    fn try_from(raw: RawIndexSet) -> Result<Self> {
        Self::new(raw.indices, raw.label)
    }
}

impl IndexSet {
    /// Rejects indices that are not strictly increasing.
    pub fn new(indices: Vec<usize>, label: IndexLabel) -> Result<Self> {
        if let Some(w) = indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Usage(format!(
                "index set must be strictly increasing, found {} before {}",
                w[0], w[1]
            )));
        }
        Ok(Self { indices, label })
    }

    /// Sorts and deduplicates.
    pub fn from_unsorted(mut indices: Vec<usize>, label: IndexLabel) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices, label }
    }

    pub fn empty(label: IndexLabel) -> Self {
        Self {
            indices: Vec::new(),
            label,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn label(&self) -> IndexLabel {
        self.label
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn check_range(&self, dim: usize) -> Result<()> {
        match self.indices.last() {
            Some(&last) if last >= dim => Err(Error::Usage(format!(
                "index {last} out of range for dimension {dim}"
            ))),
            _ => Ok(()),
        }
    }
}

pub fn zero_mask(z: &[f64], set: &IndexSet) -> Result<Vec<f64>> {
    set.check_range(z.len())?;
    let mut out = z.to_vec();
    for &i in set.indices() {
        out[i] = 0.0;
    }
    Ok(out)
}

/// Equal-size ImgD, TextD and random index sets: `s = min(|ImgD|, |TextD|)`
/// draws without replacement from each category and from all live features.
pub fn balanced_masks(report: &MdsReport, seed: u64) -> Result<(IndexSet, IndexSet, IndexSet)> {
    let img = report.indices_of(Category::ImgD);
    let txt = report.indices_of(Category::TextD);
    if img.is_empty() || txt.is_empty() {
        return Err(Error::Usage(format!(
            "balanced masks need nonempty ImgD and TextD, found {} and {}",
            img.len(),
            txt.len()
        )));
    }
    let s = img.len().min(txt.len());
    let draw = |pool: &[usize], stream: u64, label: IndexLabel| {
        if pool.len() == s {
            return IndexSet::from_unsorted(pool.to_vec(), label);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream]));
        let picked = sample(&mut rng, pool.len(), s).into_iter().map(|i| pool[i]).collect();
        IndexSet::from_unsorted(picked, label)
    };
    let live = report.live_indices();
    Ok((
        draw(&img, 0, IndexLabel::ImgD),
        draw(&txt, 1, IndexLabel::TextD),
        draw(&live, 2, IndexLabel::Random),
    ))
}

/// A labeled embedding used as a classification anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub vector: Vec<f64>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePair {
    pub a: Reference,
    pub b: Reference,
}

impl ReferencePair {
    pub fn new(a: Reference, b: Reference) -> Result<Self> {
        if a.label == b.label {
            return Err(Error::Usage(format!(
                "reference labels must differ, both are {:?}",
                a.label
            )));
        }
        if a.vector.len() != b.vector.len() {
            return Err(Error::Shape(format!(
                "reference lengths {} and {}",
                a.vector.len(),
                b.vector.len()
            )));
        }
        Ok(Self { a, b })
    }
}

fn normalized(v: &[f64], what: &str) -> Result<Vec<f64>> {
    let n = l2_norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Normalization(format!("{what} has norm {n}")));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Label of the closer reference after L2-normalizing all three vectors;
/// an exact tie goes to `refs.a`.
pub fn nearest_reference_classify<'r>(z: &[f64], refs: &'r ReferencePair) -> Result<&'r str> {
    if z.len() != refs.a.vector.len() {
        return Err(Error::Shape(format!(
            "vector length {} vs reference length {}",
            z.len(),
            refs.a.vector.len()
        )));
    }
    let z = normalized(z, "input")?;
    let da = sq_dist(&z, &normalized(&refs.a.vector, "reference a")?);
    let db = sq_dist(&z, &normalized(&refs.b.vector, "reference b")?);
    Ok(if db < da { &refs.b.label } else { &refs.a.label })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetoxResult {
    pub output: Vec<f64>,
    /// `‖adv[I] - ben[I]‖₂` before the first step and after each step.
    pub loss_curve: Vec<f64>,
}

fn selected_distance(x: &[f64], target: &[f64], set: &IndexSet) -> f64 {
    set.indices()
        .iter()
        .map(|&i| (x[i] - target[i]) * (x[i] - target[i]))
        .sum::<f64>()
        .sqrt()
}

/// Gradient descent on `‖adv[I] - ben[I]‖²`, moving only the selected
/// coordinates of `adv`.
pub fn align_detox(
    adv: &[f64],
    ben: &[f64],
    set: &IndexSet,
    steps: usize,
    lr: f64,
) -> Result<DetoxResult> {
    if adv.len() != ben.len() {
        return Err(Error::Shape(format!(
            "adversarial length {} vs benign length {}",
            adv.len(),
            ben.len()
        )));
    }
    if !(lr > 0.0 && lr < 1.0) {
        return Err(Error::Usage(format!("learning rate must lie in (0, 1), got {lr}")));
    }
    set.check_range(adv.len())?;
    let mut x = adv.to_vec();
    let mut curve = Vec::with_capacity(steps + 1);
    curve.push(selected_distance(&x, ben, set));
    for _ in 0..steps {
        for &i in set.indices() {
            x[i] -= lr * 2.0 * (x[i] - ben[i]);
        }
        curve.push(selected_distance(&x, ben, set));
    }
    Ok(DetoxResult {
        output: x,
        loss_curve: curve,
    })
}

/// `T'[i] = α T[i] + (1 - α) R[i]` on the index set, `T` elsewhere.
pub fn interpolate_features(t: &[f64], r: &[f64], set: &IndexSet, alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Usage(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if t.len() != r.len() {
        return Err(Error::Shape(format!(
            "target length {} vs reference length {}",
            t.len(),
            r.len()
        )));
    }
    set.check_range(t.len())?;
    let mut out = t.to_vec();
    for &i in set.indices() {
        out[i] = alpha * t[i] + (1.0 - alpha) * r[i];
    }
    Ok(out)
}

/// `0.0, 0.1, …, 0.7`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=7).map(|i| i as f64 / 10.0).collect()
}

pub fn interpolation_sweep(
    t: &[f64],
    r: &[f64],
    set: &IndexSet,
    alphas: &[f64],
) -> Result<Vec<Vec<f64>>> {
    alphas
        .iter()
        .map(|&a| interpolate_features(t, r, set, a))
        .collect()
}
