//! The `mmfeat` command line.
//!
//! Every subcommand writes its artifacts under `--out` and prints a single
//! JSON summary line on stdout. Flags override `--config` entries, which
//! override built-in defaults. Exit codes follow [`Error::exit_code`]; a
//! malformed command line exits with 1.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::intervene::{
    align_detox, balanced_masks, default_alpha_grid, interpolate_features, nearest_reference_classify,
    zero_mask, IndexSet, ReferencePair,
};
use crate::matrix::Matrix;
use crate::mds::{histogram, histogram_csv, mds_report, Category, MdsReport};
use crate::mono::mono_report;
use crate::ncl::{ncl_train, nonzero_fraction, retrieval_top1, Direction, NclProjector, DEFAULT_TEMPERATURE};
use crate::sae::{prune_dead_latents, relative_reconstruction_error, sae_train, SaeModel, DEFAULT_K};
use crate::synthgen::{generate_synthetic, SynthConfig};
use crate::tensorio::{
    load_paired_dataset, read_json, read_tensor, save_paired_dataset, write_json, write_tensor,
    PairedEmbeddingDataset,
};
use crate::train::{ModelMeta, TrainConfig, TrainHistory, MODEL_META_FILE};

const DEFAULT_BINS: usize = 20;
const DEFAULT_DETOX_STEPS: usize = 200;
const DEFAULT_DETOX_LR: f64 = 0.4;

#[derive(Debug, Parser)]
#[command(name = "mmfeat", version, about = "Sparse modality-aware features for paired image/text embeddings")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic paired dataset with planted modality structure
    Gen(GenArgs),
    /// Train a feature model
    #[command(subcommand)]
    Train(TrainCommand),
    /// Score modality dominance per feature and write index sets
    Mds(MdsArgs),
    /// Evaluate feature quality
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Apply an intervention to feature vectors
    #[command(subcommand)]
    Intervene(InterveneCommand),
    /// Turn reports into tables
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Debug, Subcommand)]
enum TrainCommand {
    /// TopK sparse autoencoder
    Sae(SaeArgs),
    /// Non-negative contrastive projector
    Ncl(NclArgs),
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Per-feature monosemanticity scores
    Mono(MonoArgs),
}

#[derive(Debug, Subcommand)]
enum InterveneCommand {
    /// Zero the selected features
    Mask(MaskArgs),
    /// Pull selected features of adversarial vectors toward benign ones
    Detox(DetoxArgs),
    /// Blend selected features of targets toward references
    Interp(InterpArgs),
}

#[derive(Debug, Subcommand)]
enum ReportCommand {
    /// Histogram of dominance scores split by category
    Histogram(HistogramArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct TrainFlags {
    /// Dataset directory
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Debug, Args)]
struct SaeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long)]
    latent_dim: Option<usize>,
}

#[derive(Debug, Args)]
struct NclArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Debug, Args)]
struct MdsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    /// Trained model directory; raw embeddings are scored when omitted
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MonoArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Samples per feature in each comparison set
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated features whose top samples are listed
    #[arg(long, value_delimiter = ',')]
    features: Vec<usize>,
}

#[derive(Debug, Args)]
struct InterveneFlags {
    /// MMTF matrix of vectors, one per row
    #[arg(long)]
    data: PathBuf,
    /// IndexSet JSON
    #[arg(long)]
    indices: PathBuf,
    /// Encode inputs with this model before intervening
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MaskArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: InterveneFlags,
    /// ReferencePair JSON; classifies rows before and after masking
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetoxArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: InterveneFlags,
    /// MMTF matrix of benign vectors (one row, or one per input row)
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Debug, Args)]
struct InterpArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: InterveneFlags,
    /// MMTF matrix of reference vectors (one row, or one per input row)
    #[arg(long)]
    reference: PathBuf,
    /// Single blend weight; the default grid 0.0..=0.7 is swept when omitted
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Args)]
struct HistogramArgs {
    #[command(flatten)]
    common: Common,
    /// report.json written by `mds`
    #[arg(long)]
    data: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<Value> {
    match cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Train(TrainCommand::Sae(a)) => run_train_sae(a),
        Command::Train(TrainCommand::Ncl(a)) => run_train_ncl(a),
        Command::Mds(a) => run_mds(a),
        Command::Eval(EvalCommand::Mono(a)) => run_mono(a),
        Command::Intervene(InterveneCommand::Mask(a)) => run_mask(a),
        Command::Intervene(InterveneCommand::Detox(a)) => run_detox(a),
        Command::Intervene(InterveneCommand::Interp(a)) => run_interp(a),
        Command::Report(ReportCommand::Histogram(a)) => run_histogram(a),
    }
}

fn load_config(common: &Common, keys: &[&str]) -> Result<RunConfig> {
    match &common.config {
        Some(path) => RunConfig::load(path, keys),
        None => Ok(RunConfig::default()),
    }
}

/// Flag, then config entry, then default.
fn resolve<T: FromStr>(flag: Option<T>, cfg: &RunConfig, key: &str, default: T) -> Result<T> {
    match flag {
        Some(v) => Ok(v),
        None => cfg.get_or(key, default),
    }
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

const GEN_KEYS: &[&str] = &[
    "seed",
    "m",
    "d",
    "n_img_only",
    "n_txt_only",
    "n_shared",
    "noise_sigma",
    "n_clusters",
    "mix",
    "active_fraction",
    "shared_cluster_specific",
];

fn run_gen(a: GenArgs) -> Result<Value> {
    let cfg = load_config(&a.common, GEN_KEYS)?;
    let d = SynthConfig::default();
    let synth = SynthConfig {
        m: cfg.get_or("m", d.m)?,
        d: cfg.get_or("d", d.d)?,
        n_img_only: cfg.get_or("n_img_only", d.n_img_only)?,
        n_txt_only: cfg.get_or("n_txt_only", d.n_txt_only)?,
        n_shared: cfg.get_or("n_shared", d.n_shared)?,
        noise_sigma: cfg.get_or("noise_sigma", d.noise_sigma)?,
        n_clusters: cfg.get_or("n_clusters", d.n_clusters)?,
        mix: cfg.get_or("mix", d.mix)?,
        active_fraction: cfg.get_or("active_fraction", d.active_fraction)?,
        shared_cluster_specific: cfg.get_or("shared_cluster_specific", d.shared_cluster_specific)?,
    };
    let seed = resolve(a.common.seed, &cfg, "seed", 0)?;
    let (data, truth) = generate_synthetic(&synth, seed)?;
    let out = &a.common.out;
    save_paired_dataset(&data, out)?;
    write_json(&truth, out.join("ground_truth.json"))?;
    write_json(&json!({ "seed": seed, "synth": synth }), out.join("gen_config.json"))?;
    Ok(json!({
        "command": "gen",
        "out": out,
        "m": synth.m,
        "d": synth.d,
        "mix": synth.mix,
        "noise_sigma": synth.noise_sigma,
        "seed": seed,
    }))
}

const TRAIN_KEYS: &[&str] = &["seed", "steps", "lr", "batch", "plateau_window", "plateau_tolerance"];

fn train_config(common: &Common, flags: &TrainFlags, cfg: &RunConfig) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let tc = TrainConfig {
        steps: resolve(flags.steps, cfg, "steps", d.steps)?,
        batch_size: resolve(flags.batch, cfg, "batch", d.batch_size)?,
        learning_rate: resolve(flags.lr, cfg, "lr", d.learning_rate)?,
        seed: resolve(common.seed, cfg, "seed", d.seed)?,
        plateau_window: cfg.get_or("plateau_window", d.plateau_window)?,
        plateau_tolerance: cfg.get_or("plateau_tolerance", d.plateau_tolerance)?,
    };
    tc.validate()?;
    Ok(tc)
}

fn history_summary(h: &TrainHistory) -> Value {
    json!({
        "steps_run": h.loss.len(),
        "final_loss": h.loss.last(),
        "stopped_early": h.stopped_early,
        "active_dims_img": h.active_dims_img.last(),
        "active_dims_txt": h.active_dims_txt.last(),
    })
}

fn run_train_sae(a: SaeArgs) -> Result<Value> {
    let keys: Vec<&str> = TRAIN_KEYS.iter().copied().chain(["topk", "latent_dim"]).collect();
    let cfg = load_config(&a.common, &keys)?;
    let tc = train_config(&a.common, &a.train, &cfg)?;
    let data = load_paired_dataset(&a.train.data)?;
    let n = resolve(a.latent_dim, &cfg, "latent_dim", data.dim())?;
    let k = resolve(a.topk, &cfg, "topk", DEFAULT_K.min(n))?;
    if k == 0 || k > n {
        return Err(Error::Usage(format!("--topk must satisfy 1 <= k <= n = {n}, got {k}")));
    }
    let (model, history) = sae_train(&data, &tc, k, n)?;
    let out = &a.common.out;
    model.save(out)?;
    write_json(&history, out.join("history.json"))?;
    let (live, dead) = prune_dead_latents(&model, &data)?;
    let mut summary = json!({
        "command": "train sae",
        "out": out,
        "n": n,
        "k": k,
        "relative_error": relative_reconstruction_error(&model, &data)?,
        "live_latents": live.len(),
        "dead_latents": dead.len(),
    });
    merge(&mut summary, history_summary(&history));
    Ok(summary)
}

fn run_train_ncl(a: NclArgs) -> Result<Value> {
    let keys: Vec<&str> = TRAIN_KEYS.iter().copied().chain(["temperature", "direction"]).collect();
    let cfg = load_config(&a.common, &keys)?;
    let tc = train_config(&a.common, &a.train, &cfg)?;
    let temperature = resolve(a.temperature, &cfg, "temperature", DEFAULT_TEMPERATURE)?;
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Usage(format!("--temperature must be positive, got {temperature}")));
    }
    let direction = match cfg.get::<String>("direction")?.as_deref() {
        None | Some("image_to_text") => Direction::ImageToText,
        Some("symmetric") => Direction::Symmetric,
        Some(other) => {
            return Err(Error::Config(format!(
                "direction must be image_to_text or symmetric, got {other:?}"
            )))
        }
    };
    let data = load_paired_dataset(&a.train.data)?;
    let (proj, history) = ncl_train(&data, &tc, temperature, direction)?;
    let out = &a.common.out;
    proj.save(out, temperature)?;
    write_json(&history, out.join("history.json"))?;
    let mut summary = json!({
        "command": "train ncl",
        "out": out,
        "temperature": temperature,
        "retrieval_top1": retrieval_top1(&proj, &data.img, &data.txt, tc.batch_size)?,
        "nonzero_fraction": nonzero_fraction(&proj.project_matrix(&data.img)?),
    });
    merge(&mut summary, history_summary(&history));
    Ok(summary)
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        a.extend(b);
    }
}

/// A trained model read back from its directory.
enum Encoder {
    Sae(SaeModel),
    Ncl(NclProjector),
}

impl Encoder {
    fn load(dir: &Path) -> Result<Self> {
        let meta: ModelMeta = read_json(dir.join(MODEL_META_FILE))?;
        match meta.kind.as_str() {
            "sae" => Ok(Encoder::Sae(SaeModel::load(dir)?)),
            "ncl" => Ok(Encoder::Ncl(NclProjector::load(dir)?)),
            other => Err(Error::Format(format!("unknown model kind {other:?}"))),
        }
    }

    fn encode(&self, z: &Matrix) -> Result<Matrix> {
        match self {
            Encoder::Sae(m) => m.encode_matrix(z),
            Encoder::Ncl(p) => p.project_matrix(z),
        }
    }
}

/// Latents for both modalities: model outputs, or the raw embeddings.
fn latents(data: &PairedEmbeddingDataset, model: Option<&Path>) -> Result<(Matrix, Matrix)> {
    match model {
        None => Ok((data.img.clone(), data.txt.clone())),
        Some(dir) => {
            let enc = Encoder::load(dir)?;
            Ok((enc.encode(&data.img)?, enc.encode(&data.txt)?))
        }
    }
}

fn encode_rows(z: Matrix, model: Option<&Path>) -> Result<Matrix> {
    match model {
        None => Ok(z),
        Some(dir) => Encoder::load(dir)?.encode(&z),
    }
}

fn run_mds(a: MdsArgs) -> Result<Value> {
    let cfg = load_config(&a.common, &["seed", "bins"])?;
    let seed = resolve(a.common.seed, &cfg, "seed", 0)?;
    let bins = cfg.get_or("bins", DEFAULT_BINS)?;
    let data = load_paired_dataset(&a.data)?;
    let (li, lt) = latents(&data, a.model.as_deref())?;
    let report = mds_report(&li, &lt)?;
    let out = &a.common.out;
    create_out(out)?;
    write_json(&report, out.join("report.json"))?;
    write_text(&out.join("histogram.csv"), &histogram_csv(&histogram(&report, bins)?))?;
    for (cat, name) in [
        (Category::ImgD, "index_imgd.json"),
        (Category::TextD, "index_textd.json"),
        (Category::CrossD, "index_crossd.json"),
    ] {
        write_json(&IndexSet::new(report.indices_of(cat), cat.into())?, out.join(name))?;
    }
    let balanced = match balanced_masks(&report, seed) {
        Ok((i_img, i_txt, i_rand)) => {
            write_json(&i_img, out.join("mask_img.json"))?;
            write_json(&i_txt, out.join("mask_txt.json"))?;
            write_json(&i_rand, out.join("mask_rand.json"))?;
            Some(i_img.len())
        }
        Err(Error::Usage(_)) => None,
        Err(e) => return Err(e),
    };
    let (t, c, i) = report.counts();
    Ok(json!({
        "command": "mds",
        "out": out,
        "features": report.len(),
        "dead": report.live.iter().filter(|&&l| !l).count(),
        "text_d": t,
        "cross_d": c,
        "img_d": i,
        "mu": report.mu,
        "sigma": report.sigma,
        "balanced_mask_size": balanced,
    }))
}

fn run_mono(a: MonoArgs) -> Result<Value> {
    let cfg = load_config(&a.common, &["seed", "m"])?;
    let seed = resolve(a.common.seed, &cfg, "seed", 0)?;
    let m = resolve(a.m, &cfg, "m", crate::mono::DEFAULT_M)?;
    let data = load_paired_dataset(&a.data)?;
    let (Some(eval_img), Some(eval_txt)) = (&data.eval_img, &data.eval_txt) else {
        return Err(Error::Alignment(format!(
            "{} has no eval_img.mmtf / eval_txt.mmtf",
            a.data.display()
        )));
    };
    let (li, lt) = latents(&data, a.model.as_deref())?;
    let categories = mds_report(&li, &lt)?;
    let report = mono_report(&li, &lt, eval_img, eval_txt, &categories, m, seed)?;
    let out = &a.common.out;
    create_out(out)?;
    write_json(&report, out.join("mono_report.json"))?;
    if !a.features.is_empty() {
        let dir = out.join("features");
        create_out(&dir)?;
        for &k in &a.features {
            let Some(f) = report.features.iter().find(|f| f.feature == k) else {
                return Err(Error::Usage(format!("feature {k} is dead or out of range")));
            };
            let listing = |top: &[usize]| -> Vec<Value> {
                top.iter()
                    .map(|&r| {
                        json!({
                            "row": r,
                            "id": data.sample_ids[r],
                            "text": data.texts.as_ref().map(|t| t[r].as_str()),
                        })
                    })
                    .collect()
            };
            write_json(
                &json!({
                    "feature": k,
                    "category": f.category,
                    "top_img": listing(&f.img.top),
                    "top_txt": listing(&f.txt.top),
                }),
                dir.join(format!("feature_{k}.json")),
            )?;
        }
    }
    Ok(json!({
        "command": "eval mono",
        "out": out,
        "features_scored": report.features.len(),
        "m": m,
        "img_mean_mono": report.img.mean_mono,
        "txt_mean_mono": report.txt.mean_mono,
        "visual_mono": report.visual_mono,
        "textual_mono": report.textual_mono,
    }))
}

struct InterveneInputs {
    rows: Matrix,
    set: IndexSet,
}

fn intervene_inputs(flags: &InterveneFlags) -> Result<InterveneInputs> {
    let rows = encode_rows(read_tensor(&flags.data)?, flags.model.as_deref())?;
    let set: IndexSet = read_json(&flags.indices)?;
    set.check_range(rows.cols())?;
    Ok(InterveneInputs { rows, set })
}

/// Reference row `r`, broadcasting a single-row reference.
fn reference_row(refs: &Matrix, r: usize) -> &[f64] {
    if refs.rows() == 1 {
        refs.row(0)
    } else {
        refs.row(r)
    }
}

fn read_references(path: &Path, model: Option<&Path>, like: &Matrix) -> Result<Matrix> {
    let refs = encode_rows(read_tensor(path)?, model)?;
    if refs.cols() != like.cols() || (refs.rows() != 1 && refs.rows() != like.rows()) {
        return Err(Error::Shape(format!(
            "reference {:?} does not match inputs {:?} (need 1 row or one per input)",
            refs.shape(),
            like.shape()
        )));
    }
    Ok(refs)
}

fn run_mask(a: MaskArgs) -> Result<Value> {
    let inp = intervene_inputs(&a.flags)?;
    let masked = Matrix::from_rows(
        &inp.rows
            .iter_rows()
            .map(|z| zero_mask(z, &inp.set))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let out = &a.common.out;
    create_out(out)?;
    write_tensor(&masked, out.join("masked.mmtf"))?;
    let mut summary = json!({
        "command": "intervene mask",
        "out": out,
        "rows": masked.rows(),
        "indices": inp.set.len(),
    });
    if let Some(path) = &a.reference {
        let refs: ReferencePair = read_json(path)?;
        let refs = ReferencePair::new(refs.a, refs.b)?;
        let classify = |m: &Matrix| -> Result<Vec<String>> {
            m.iter_rows()
                .map(|z| nearest_reference_classify(z, &refs).map(str::to_string))
                .collect()
        };
        let before = classify(&inp.rows)?;
        let after = classify(&masked)?;
        let changed = before.iter().zip(&after).filter(|(b, a)| b != a).count();
        write_json(&json!({ "before": before, "after": after }), out.join("classify.json"))?;
        merge(&mut summary, json!({ "changed_labels": changed }));
    }
    Ok(summary)
}

fn run_detox(a: DetoxArgs) -> Result<Value> {
    let cfg = load_config(&a.common, &["steps", "lr"])?;
    let steps = resolve(a.steps, &cfg, "steps", DEFAULT_DETOX_STEPS)?;
    let lr = resolve(a.lr, &cfg, "lr", DEFAULT_DETOX_LR)?;
    let inp = intervene_inputs(&a.flags)?;
    let ben = read_references(&a.reference, a.flags.model.as_deref(), &inp.rows)?;
    let mut outputs = Vec::with_capacity(inp.rows.rows());
    let mut csv = String::from("step,row,loss\n");
    let mut final_max: f64 = 0.0;
    for (r, adv) in inp.rows.iter_rows().enumerate() {
        let res = align_detox(adv, reference_row(&ben, r), &inp.set, steps, lr)?;
        for (s, l) in res.loss_curve.iter().enumerate() {
            csv.push_str(&format!("{s},{r},{l}\n"));
        }
        final_max = final_max.max(*res.loss_curve.last().unwrap_or(&0.0));
        outputs.push(res.output);
    }
    let out = &a.common.out;
    create_out(out)?;
    write_tensor(&Matrix::from_rows(&outputs)?, out.join("detoxed.mmtf"))?;
    write_text(&out.join("loss_curve.csv"), &csv)?;
    Ok(json!({
        "command": "intervene detox",
        "out": out,
        "rows": outputs.len(),
        "indices": inp.set.len(),
        "steps": steps,
        "lr": lr,
        "max_final_loss": final_max,
    }))
}

fn run_interp(a: InterpArgs) -> Result<Value> {
    let cfg = load_config(&a.common, &["alpha"])?;
    let alphas = match a.alpha.map(Ok).or_else(|| cfg.get("alpha").transpose()) {
        Some(alpha) => vec![alpha?],
        None => default_alpha_grid(),
    };
    let inp = intervene_inputs(&a.flags)?;
    let refs = read_references(&a.reference, a.flags.model.as_deref(), &inp.rows)?;
    let out = &a.common.out;
    create_out(out)?;
    let mut files = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        let rows = inp
            .rows
            .iter_rows()
            .enumerate()
            .map(|(r, t)| interpolate_features(t, reference_row(&refs, r), &inp.set, alpha))
            .collect::<Result<Vec<_>>>()?;
        let name = format!("interp_alpha_{alpha:.2}.mmtf");
        write_tensor(&Matrix::from_rows(&rows)?, out.join(&name))?;
        files.push(name);
    }
    Ok(json!({
        "command": "intervene interp",
        "out": out,
        "rows": inp.rows.rows(),
        "indices": inp.set.len(),
        "alphas": alphas,
        "files": files,
    }))
}

fn run_histogram(a: HistogramArgs) -> Result<Value> {
    let cfg = load_config(&a.common, &["bins"])?;
    let bins = cfg.get_or("bins", DEFAULT_BINS)?;
    let report: MdsReport = read_json(&a.data)?;
    if report.category.len() != report.r.len() || report.live.len() != report.r.len() {
        return Err(Error::Format("report.json fields have different lengths".into()));
    }
    let table = histogram(&report, bins)?;
    let out = &a.common.out;
    create_out(out)?;
    write_text(&out.join("histogram.csv"), &histogram_csv(&table))?;
    Ok(json!({
        "command": "report histogram",
        "out": out,
        "bins": bins,
        "live_features": report.live_indices().len(),
    }))
}
