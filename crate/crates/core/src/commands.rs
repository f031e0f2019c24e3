//! Batch commands behind the `trunkgauge` binary.
//!
//! Each command returns a human-readable summary on success or a
//! [`CommandError`] carrying the process exit code.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::FormatError;
use crate::evaluation::{
    error_histogram, error_stats, round_summary, run_luminosity_experiment, synth_scene,
    LabeledScene, LuminosityConfig, SceneSpec,
};
use crate::formats::{
    load_mask, load_model, load_rgb, read_csv_file, read_reference, read_rounds, save_mask,
    save_model, save_png, write_csv_with_header, CampaignRow, ManifestRow, CAMPAIGN_HEADER,
};
use crate::geometry::{measure_diameter, MeasureConfig};
use crate::segmentation::{
    classify_image, train_classifier, BinaryMask, ClassifierModel, LabeledImagePair, TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TRAIN: i32 = 3;
pub const EXIT_MEASURE: i32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl CommandError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn with_code(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for CommandError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CommandError {}

impl From<FormatError> for CommandError {
    fn from(e: FormatError) -> Self {
        Self::usage(e.to_string())
    }
}

pub type CommandResult = Result<String, CommandError>;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn has_extension(path: &Path, allowed: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| allowed.iter().any(|a| a.eq_ignore_ascii_case(e)))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Image files in `dir`, sorted by file name.
fn list_images(dir: &Path, allowed: &[&str]) -> Result<Vec<PathBuf>, CommandError> {
    let entries = fs::read_dir(dir)
        .map_err(|e| CommandError::usage(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && has_extension(p, allowed))
        .collect();
    files.sort();
    Ok(files)
}

fn by_stem(files: Vec<PathBuf>) -> Result<BTreeMap<String, PathBuf>, CommandError> {
    let mut map = BTreeMap::new();
    for f in files {
        let key = stem(&f);
        if let Some(prev) = map.insert(key.clone(), f.clone()) {
            return Err(CommandError::usage(format!(
                "duplicate basename `{key}`: {} and {}",
                prev.display(),
                f.display()
            )));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub images: PathBuf,
    pub masks: PathBuf,
    pub out: PathBuf,
    pub config: TrainConfig,
}

pub fn cmd_train(args: &TrainArgs) -> CommandResult {
    let images = by_stem(list_images(&args.images, &IMAGE_EXTENSIONS)?)?;
    let masks = by_stem(list_images(&args.masks, &["png"])?)?;
    if images.is_empty() {
        return Err(CommandError::usage(format!(
            "no training images in {}",
            args.images.display()
        )));
    }
    let unmatched: Vec<String> = images
        .keys()
        .filter(|k| !masks.contains_key(*k))
        .map(|k| format!("image without mask: {k}"))
        .chain(
            masks
                .keys()
                .filter(|k| !images.contains_key(*k))
                .map(|k| format!("mask without image: {k}")),
        )
        .collect();
    if !unmatched.is_empty() {
        return Err(CommandError::usage(format!(
            "unmatched files:\n  {}",
            unmatched.join("\n  ")
        )));
    }
    let pairs = images
        .iter()
        .map(|(k, img_path)| {
            let image = load_rgb(img_path)?;
            let mask = load_mask(&masks[k])?;
            LabeledImagePair::new(image, mask)
                .map_err(|e| CommandError::usage(format!("{k}: {e}")))
        })
        .collect::<Result<Vec<_>, CommandError>>()?;
    let model = train_classifier(&pairs, &args.config)
        .map_err(|e| CommandError::with_code(EXIT_TRAIN, e.to_string()))?;
    save_model(&args.out, &model)?;

    let mut out = format!("trained on {} image(s)\n", pairs.len());
    if let Some(meta) = &model.metadata {
        for (name, k, pixels, fit) in [
            ("pads", model.pads.mode_count(), meta.pads_pixels, meta.pads_fit),
            (
                "background",
                model.background.mode_count(),
                meta.background_pixels,
                meta.background_fit,
            ),
        ] {
            let _ = writeln!(
                out,
                "{name}: K={k} pixels={pixels} iterations={} log_likelihood={:.6} converged={}",
                fit.iterations, fit.log_likelihood, fit.converged
            );
        }
    }
    Ok(out)
}

fn read_model(path: &Path) -> Result<ClassifierModel, CommandError> {
    load_model(path).map_err(|e| CommandError::usage(format!("cannot load model: {e}")))
}

fn segment(img: &image::RgbImage, model: &ClassifierModel, open: bool) -> Result<BinaryMask, String> {
    let mask = classify_image(img, model).map_err(|e| e.to_string())?;
    Ok(if open { mask.opened_3x3() } else { mask })
}

#[derive(Debug, Clone)]
pub struct SegmentArgs {
    pub model: PathBuf,
    pub image: PathBuf,
    pub out: PathBuf,
    pub open: bool,
}

pub fn cmd_segment(args: &SegmentArgs) -> CommandResult {
    let model = read_model(&args.model)?;
    let img = load_rgb(&args.image)?;
    let mask = segment(&img, &model, args.open).map_err(CommandError::usage)?;
    save_mask(&args.out, &mask)?;
    Ok(format!(
        "{}x{} mask, {} pads pixels\n",
        mask.width(),
        mask.height(),
        mask.count_pads()
    ))
}

#[derive(Debug, Clone)]
pub struct MeasureArgs {
    pub model: PathBuf,
    pub input: PathBuf,
    pub pad_height_mm: f64,
    pub out: PathBuf,
    pub config: MeasureConfig,
    pub open: bool,
}

fn measure_one(path: &Path, model: &ClassifierModel, args: &MeasureArgs) -> CampaignRow {
    let id = stem(path);
    let img = match load_rgb(path) {
        Ok(img) => img,
        Err(_) => return CampaignRow::failed(id, "unreadable-image"),
    };
    let mask = match segment(&img, model, args.open) {
        Ok(m) => m,
        Err(_) => return CampaignRow::failed(id, "empty-image"),
    };
    match measure_diameter(&mask, args.pad_height_mm, &args.config) {
        Ok(r) => CampaignRow::ok(id, &r),
        Err(e) => CampaignRow::failed(id, e.status()),
    }
}

pub fn cmd_measure(args: &MeasureArgs) -> CommandResult {
    if !(args.pad_height_mm > 0.0 && args.pad_height_mm.is_finite()) {
        return Err(CommandError::usage(format!(
            "pad height must be positive, got {}",
            args.pad_height_mm
        )));
    }
    let model = read_model(&args.model)?;
    let inputs = if args.input.is_dir() {
        list_images(&args.input, &IMAGE_EXTENSIONS)?
    } else if args.input.is_file() {
        vec![args.input.clone()]
    } else {
        return Err(CommandError::usage(format!(
            "input {} does not exist",
            args.input.display()
        )));
    };
    if inputs.is_empty() {
        return Err(CommandError::usage(format!(
            "no images in {}",
            args.input.display()
        )));
    }
    let rows: Vec<CampaignRow> = inputs
        .par_iter()
        .map(|p| measure_one(p, &model, args))
        .collect();
    write_csv_with_header(&args.out, &CAMPAIGN_HEADER, &rows)?;
    let ok = rows.iter().filter(|r| r.is_ok()).count();
    let summary = format!("measured {ok}/{} image(s)\n", rows.len());
    if ok == 0 {
        return Err(CommandError::with_code(
            EXIT_MEASURE,
            format!("{summary}all measurements failed"),
        ));
    }
    Ok(summary)
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub pred: PathBuf,
    pub reference: PathBuf,
    pub hist_bin: f64,
    pub rounds: Option<PathBuf>,
    pub thresholds: Vec<f64>,
    pub out: PathBuf,
}

/// Renders the evaluation report for matched `(id, measured, reference)`.
pub fn evaluation_report(
    matched: &[(String, f64, f64)],
    failed: &[String],
    hist_bin: f64,
    thresholds: &[f64],
    rounds: Option<&[(String, String)]>,
) -> CommandResult {
    let measured: Vec<f64> = matched.iter().map(|m| m.1).collect();
    let reference: Vec<f64> = matched.iter().map(|m| m.2).collect();
    let stats = error_stats(&measured, &reference)
        .map_err(|e| CommandError::with_code(EXIT_MEASURE, e.to_string()))?;
    let hist = error_histogram(stats.errors(), hist_bin)
        .map_err(|e| CommandError::usage(e.to_string()))?;

    let mut r = String::new();
    let _ = writeln!(r, "# absolute error (mm)");
    let _ = writeln!(r, "count,{}", stats.count);
    let _ = writeln!(r, "failed,{}", failed.len());
    let _ = writeln!(r, "mean_abs_error_mm,{:.6}", stats.mean_abs_error);
    let _ = writeln!(r, "std_abs_error_mm,{:.6}", stats.std_abs_error);
    let _ = writeln!(r, "max_abs_error_mm,{:.6}", stats.max_abs_error);
    for t in thresholds {
        let _ = writeln!(r, "fraction_below_{t}mm,{:.6}", stats.fraction_below(*t));
    }
    let _ = writeln!(r, "\n# histogram (bin width {hist_bin} mm)");
    let _ = writeln!(r, "bin_lo_mm,bin_hi_mm,count");
    let edges = hist.edges();
    for (k, c) in hist.counts.iter().enumerate() {
        let _ = writeln!(r, "{:.6},{:.6},{c}", edges[k], edges[k + 1]);
    }

    if let Some(assignments) = rounds {
        let lookup: HashMap<&str, (f64, f64)> = matched
            .iter()
            .map(|(id, m, re)| (id.as_str(), (*m, *re)))
            .collect();
        let mut names: Vec<String> = Vec::new();
        let mut grouped: HashMap<String, (Vec<f64>, Vec<f64>)> = HashMap::new();
        for (id, round) in assignments {
            let Some(&(m, re)) = lookup.get(id.as_str()) else {
                if failed.contains(id) {
                    continue;
                }
                return Err(CommandError::usage(format!(
                    "round file names unknown image `{id}`"
                )));
            };
            let entry = grouped.entry(round.clone()).or_insert_with(|| {
                names.push(round.clone());
                Default::default()
            });
            entry.0.push(m);
            entry.1.push(re);
        }
        let ordered: Vec<(Vec<f64>, Vec<f64>)> =
            names.iter().map(|n| grouped[n].clone()).collect();
        let summary = round_summary(&ordered).map_err(|e| CommandError::usage(e.to_string()))?;
        let _ = writeln!(r, "\n# rounds, highest mean error first");
        let _ = writeln!(r, "round,count,mean_abs_error_mm,std_abs_error_mm");
        for s in &summary.rounds {
            let _ = writeln!(
                r,
                "{},{},{:.6},{:.6}",
                names[s.round], s.stats.count, s.stats.mean_abs_error, s.stats.std_abs_error
            );
        }
    }
    Ok(r)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> CommandResult {
    let pred: Vec<CampaignRow> = read_csv_file(&args.pred)?;
    let reference = read_reference(&args.reference)?;
    let ref_map: HashMap<&str, f64> = reference.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let pred_ids: HashMap<&str, ()> = pred.iter().map(|r| (r.image_id.as_str(), ())).collect();
    let missing: Vec<&str> = pred
        .iter()
        .map(|r| r.image_id.as_str())
        .filter(|id| !ref_map.contains_key(id))
        .chain(
            reference
                .iter()
                .map(|(k, _)| k.as_str())
                .filter(|k| !pred_ids.contains_key(k)),
        )
        .collect();
    if !missing.is_empty() || pred.len() != reference.len() {
        return Err(CommandError::usage(format!(
            "identifier mismatch between {} and {}: {:?}",
            args.pred.display(),
            args.reference.display(),
            missing
        )));
    }
    let mut matched = Vec::new();
    let mut failed = Vec::new();
    for row in &pred {
        match (row.is_ok(), row.diameter_mm) {
            (true, Some(d)) => matched.push((row.image_id.clone(), d, ref_map[row.image_id.as_str()])),
            _ => failed.push(row.image_id.clone()),
        }
    }
    let rounds = args.rounds.as_deref().map(read_rounds).transpose()?;
    let report = evaluation_report(
        &matched,
        &failed,
        args.hist_bin,
        &args.thresholds,
        rounds.as_deref(),
    )?;
    fs::write(&args.out, &report).map_err(|e| {
        CommandError::usage(format!("cannot write {}: {e}", args.out.display()))
    })?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub count: usize,
    pub out: PathBuf,
    /// Template; per-scene seeds and tilts are drawn from `seed`.
    pub spec: SceneSpec,
    /// Each scene's tilt is `spec.tilt_deg` plus a uniform draw in `[-spread, spread]`.
    pub tilt_spread_deg: f64,
    pub pad_height_mm: f64,
    pub seed: u64,
}

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MANIFEST_HEADER: [&str; 8] = [
    "image_id",
    "seed",
    "gap_px",
    "pad_height_px",
    "pad_height_mm",
    "diameter_mm",
    "tilt_deg",
    "brightness",
];

/// Scene specs for a synthetic corpus, one per index, derived from `seed`.
pub fn corpus_specs(template: &SceneSpec, count: usize, tilt_spread_deg: f64, seed: u64) -> Vec<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let scene_seed = rng.next_u64();
            let tilt = if tilt_spread_deg > 0.0 {
                rng.random_range(-tilt_spread_deg..=tilt_spread_deg)
            } else {
                0.0
            };
            SceneSpec {
                seed: scene_seed,
                tilt_deg: template.tilt_deg + tilt,
                ..template.clone()
            }
        })
        .collect()
}

pub fn cmd_synth(args: &SynthArgs) -> CommandResult {
    if args.count == 0 {
        return Err(CommandError::usage("count must be positive"));
    }
    if !(args.pad_height_mm > 0.0) || !(args.tilt_spread_deg >= 0.0) {
        return Err(CommandError::usage(
            "pad height must be positive and tilt spread non-negative",
        ));
    }
    let specs = corpus_specs(&args.spec, args.count, args.tilt_spread_deg, args.seed);
    for s in &specs {
        s.validate().map_err(|e| CommandError::usage(e.to_string()))?;
    }
    let images_dir = args.out.join("images");
    let masks_dir = args.out.join("masks");
    for d in [&images_dir, &masks_dir] {
        fs::create_dir_all(d)
            .map_err(|e| CommandError::usage(format!("cannot create {}: {e}", d.display())))?;
    }
    let rows = specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let id = format!("scene_{i:04}");
            let (img, truth) = synth_scene(spec).map_err(|e| CommandError::usage(e.to_string()))?;
            save_png(&images_dir.join(format!("{id}.png")), &img)?;
            save_mask(&masks_dir.join(format!("{id}.png")), &truth.ideal_mask)?;
            Ok(ManifestRow {
                image_id: id,
                seed: spec.seed,
                gap_px: truth.gap_px,
                pad_height_px: truth.pad_height_px,
                pad_height_mm: args.pad_height_mm,
                diameter_mm: truth.diameter_mm(args.pad_height_mm),
                tilt_deg: spec.tilt_deg,
                brightness: spec.brightness,
            })
        })
        .collect::<Result<Vec<_>, CommandError>>()?;
    write_csv_with_header(&args.out.join(MANIFEST_FILE), &MANIFEST_HEADER, &rows)?;
    Ok(format!("wrote {} scene(s) to {}\n", rows.len(), args.out.display()))
}

/// Loads a corpus written by [`cmd_synth`] (or laid out the same way).
pub fn load_corpus(dir: &Path) -> Result<Vec<LabeledScene>, CommandError> {
    let manifest: Vec<ManifestRow> = read_csv_file(&dir.join(MANIFEST_FILE))?;
    manifest
        .par_iter()
        .map(|row| {
            let image = load_rgb(&dir.join("images").join(format!("{}.png", row.image_id)))?;
            let mask = load_mask(&dir.join("masks").join(format!("{}.png", row.image_id)))?;
            if image.dimensions() != mask.dimensions() {
                return Err(CommandError::usage(format!(
                    "{}: image and mask sizes differ",
                    row.image_id
                )));
            }
            Ok(LabeledScene {
                id: row.image_id.clone(),
                image,
                mask,
                pad_height_mm: row.pad_height_mm,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct LuminosityArgs {
    pub bright: PathBuf,
    pub dim: PathBuf,
    pub train_count: usize,
    pub out: PathBuf,
    pub config: LuminosityConfig,
}

pub const LUMINOSITY_HEADER: &str =
    "comparison,mean_abs_diff_mm,std_abs_diff_mm,mean_abs_diff_px,pairs,failures";

pub fn cmd_luminosity(args: &LuminosityArgs) -> CommandResult {
    let bright = load_corpus(&args.bright)?;
    let dim = load_corpus(&args.dim)?;
    let table = run_luminosity_experiment(&bright, &dim, args.train_count, &args.config)
        .map_err(|e| match e {
            crate::error::EvalError::InsufficientScenes { .. } => CommandError::usage(e.to_string()),
            crate::error::EvalError::Segmentation(_) => {
                CommandError::with_code(EXIT_TRAIN, e.to_string())
            }
            _ => CommandError::with_code(EXIT_MEASURE, e.to_string()),
        })?;
    let mut text = String::new();
    let _ = writeln!(text, "{LUMINOSITY_HEADER}");
    for row in &table.rows {
        let _ = writeln!(
            text,
            "{},{:.6},{:.6},{:.6},{},{}",
            row.label(),
            row.mean_abs_diff_mm,
            row.std_abs_diff_mm,
            row.mean_abs_diff_px(),
            row.pairs,
            row.failures
        );
    }
    fs::write(&args.out, &text)
        .map_err(|e| CommandError::usage(format!("cannot write {}: {e}", args.out.display())))?;
    Ok(text)
}
