//! Error statistics, report aggregates, the synthetic clamp-scene generator,
//! and the cross-luminosity experiment driver.

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color_space::{srgb_decode, srgb_encode, Rgb8};
use crate::error::EvalError;
use crate::geometry::{measure_diameter, MeasureConfig, Vec2};
use crate::segmentation::{
    classify_image, train_classifier, BinaryMask, ClassifierModel, Label, LabeledImagePair,
    TrainConfig,
};

/// Absolute-error summary of paired measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub mean_abs_error: f64,
    /// Sample standard deviation (n - 1); zero for a single pair.
    pub std_abs_error: f64,
    pub max_abs_error: f64,
    pub count: usize,
    errors: Vec<f64>,
}

impl ErrorStats {
    /// Fraction of absolute errors strictly below `threshold`.
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        self.errors.iter().filter(|&&e| e < threshold).count() as f64 / self.count as f64
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }
}

fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn abs_diffs(a: &[f64], b: &[f64]) -> Result<Vec<f64>, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect())
}

pub fn error_stats(measured: &[f64], reference: &[f64]) -> Result<ErrorStats, EvalError> {
    let errors = abs_diffs(measured, reference)?;
    if errors.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mean, std) = mean_and_sample_std(&errors);
    Ok(ErrorStats {
        mean_abs_error: mean,
        std_abs_error: std,
        max_abs_error: errors.iter().copied().fold(0.0, f64::max),
        count: errors.len(),
        errors,
    })
}

/// Error counts over half-open bins `[k w, (k + 1) w)` starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Lower edge of every bin plus the upper edge of the last.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.counts.len())
            .map(|k| k as f64 * self.bin_width)
            .collect()
    }
}

pub fn error_histogram(errors: &[f64], bin_width: f64) -> Result<Histogram, EvalError> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(EvalError::BinWidth(bin_width));
    }
    let mut counts: Vec<usize> = Vec::new();
    for &e in errors {
        if !(e >= 0.0 && e.is_finite()) {
            return Err(EvalError::InvalidValue(e));
        }
        let mut k = (e / bin_width).floor() as usize;
        // Align with the edges reported by `Histogram::edges`.
        while k > 0 && e < k as f64 * bin_width {
            k -= 1;
        }
        while e >= (k + 1) as f64 * bin_width {
            k += 1;
        }
        if counts.len() <= k {
            counts.resize(k + 1, 0);
        }
        counts[k] += 1;
    }
    Ok(Histogram { bin_width, counts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundStats {
    /// Position of the round in the input.
    pub round: usize,
    pub stats: ErrorStats,
}

/// Per-round statistics sorted from highest to lowest mean error.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundSummary {
    pub rounds: Vec<RoundStats>,
}

pub fn round_summary(rounds: &[(Vec<f64>, Vec<f64>)]) -> Result<RoundSummary, EvalError> {
    let mut out = Vec::with_capacity(rounds.len());
    for (i, (measured, reference)) in rounds.iter().enumerate() {
        if measured.is_empty() && reference.is_empty() {
            return Err(EvalError::EmptyRound(i));
        }
        out.push(RoundStats {
            round: i,
            stats: error_stats(measured, reference)?,
        });
    }
    out.sort_by(|a, b| {
        b.stats
            .mean_abs_error
            .total_cmp(&a.stats.mean_abs_error)
            .then(b.stats.std_abs_error.total_cmp(&a.stats.std_abs_error))
    });
    Ok(RoundSummary { rounds: out })
}

/// Mean and sample standard deviation of `|matched - crossed|`.
pub fn cross_condition_compare(
    diam_matched: &[f64],
    diam_crossed: &[f64],
) -> Result<(f64, f64), EvalError> {
    let diffs = abs_diffs(diam_matched, diam_crossed)?;
    if diffs.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(mean_and_sample_std(&diffs))
}

/// Colors used to paint the background of a synthetic scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundPalette {
    pub sky: Rgb8Def,
    pub foliage: Rgb8Def,
    pub soil: Rgb8Def,
    pub bark: Rgb8Def,
}

/// Serializable mirror of [`Rgb8`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rgb8Def(pub u8, pub u8, pub u8);

impl From<Rgb8Def> for Rgb8 {
    fn from(c: Rgb8Def) -> Self {
        Rgb8::new(c.0, c.1, c.2)
    }
}

impl Default for BackgroundPalette {
    fn default() -> Self {
        Self {
            sky: Rgb8Def(150, 185, 225),
            foliage: Rgb8Def(70, 115, 45),
            soil: Rgb8Def(140, 118, 92),
            bark: Rgb8Def(98, 84, 70),
        }
    }
}

/// Parameters of one synthetic clamp photograph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    /// Nominal distance between the pads' inner edges.
    pub gap_px: f64,
    pub pad_width_px: f64,
    pub pad_height_px: f64,
    /// Rotation of the whole clamp, degrees, positive clockwise on screen.
    pub tilt_deg: f64,
    pub pad_color: Rgb8Def,
    /// Specular highlight painted along the middle of each pad.
    pub highlight_color: Rgb8Def,
    /// Per-channel Gaussian noise sigma, in 8-bit units.
    pub color_noise: f64,
    pub palette: BackgroundPalette,
    /// Amplitude `a` of the per-row gap excursion: each inner edge moves by
    /// an independent uniform draw in `[-a/2, a/2]`, so the row gap stays
    /// within `a` of nominal.
    pub edge_jitter_px: f64,
    /// Multiplier on linear-light RGB.
    pub brightness: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
            gap_px: 300.0,
            pad_width_px: 40.0,
            pad_height_px: 200.0,
            tilt_deg: 0.0,
            pad_color: Rgb8Def(196, 32, 38),
            highlight_color: Rgb8Def(232, 104, 100),
            color_noise: 4.0,
            palette: BackgroundPalette::default(),
            edge_jitter_px: 0.0,
            brightness: 1.0,
            seed: 0,
        }
    }
}

/// Clamp pose derived from a spec: center and unit frame.
#[derive(Debug, Clone, Copy)]
struct ClampFrame {
    center: Vec2,
    /// Along the pads (CD direction).
    along: Vec2,
    /// Across the gap, left to right.
    across: Vec2,
}

impl ClampFrame {
    fn new(spec: &SceneSpec) -> Self {
        let cx = (spec.width as f64 / 2.0 - spec.gap_px / 2.0).round() + spec.gap_px / 2.0;
        let cy = (spec.height as f64 / 2.0 - spec.pad_height_px / 2.0).round()
            + spec.pad_height_px / 2.0;
        let th = spec.tilt_deg.to_radians();
        Self {
            center: [cx, cy],
            along: [-th.sin(), th.cos()],
            across: [th.cos(), th.sin()],
        }
    }

    /// `(s, t)`: across and along coordinates of a continuous image point.
    fn local(&self, p: Vec2) -> (f64, f64) {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        (
            d[0] * self.across[0] + d[1] * self.across[1],
            d[0] * self.along[0] + d[1] * self.along[1],
        )
    }

    fn image(&self, s: f64, t: f64) -> Vec2 {
        [
            self.center[0] + s * self.across[0] + t * self.along[0],
            self.center[1] + s * self.across[1] + t * self.along[1],
        ]
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidScene(m));
        if self.width == 0 || self.height == 0 {
            return bad("image dimensions must be positive".into());
        }
        for (name, v) in [
            ("gap", self.gap_px),
            ("pad width", self.pad_width_px),
            ("pad height", self.pad_height_px),
            ("brightness", self.brightness),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.edge_jitter_px >= 0.0) || self.edge_jitter_px >= self.pad_width_px {
            return bad(format!(
                "edge jitter {} must be in [0, pad width)",
                self.edge_jitter_px
            ));
        }
        if 2.0 * self.edge_jitter_px >= self.gap_px {
            return bad("edge jitter would close the gap".into());
        }
        if !(self.color_noise >= 0.0) || !self.tilt_deg.is_finite() {
            return bad("noise must be non-negative and tilt finite".into());
        }
        let frame = ClampFrame::new(self);
        let half_span = self.gap_px / 2.0 + self.pad_width_px;
        let half_h = self.pad_height_px / 2.0;
        for (s, t) in [
            (-half_span, -half_h),
            (-half_span, half_h),
            (half_span, -half_h),
            (half_span, half_h),
        ] {
            let p = frame.image(s, t);
            if p[0] < 1.0
                || p[1] < 1.0
                || p[0] > self.width as f64 - 1.0
                || p[1] > self.height as f64 - 1.0
            {
                return bad(format!("pad corner {p:?} is out of frame"));
            }
        }
        Ok(())
    }
}

/// Pixel-exact ground truth of a rendered scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub gap_px: f64,
    pub pad_height_px: f64,
    pub ideal_mask: BinaryMask,
    pub left_area: usize,
    pub right_area: usize,
    /// Inner-edge displacement per pad row (positive narrows the gap).
    pub left_jitter: Vec<f64>,
    pub right_jitter: Vec<f64>,
    /// Unit vector along the pads.
    pub axis: Vec2,
}

impl SceneTruth {
    /// Ground-truth diameter in millimeters for a pad of `pad_height_mm`.
    pub fn diameter_mm(&self, pad_height_mm: f64) -> f64 {
        self.gap_px * pad_height_mm / self.pad_height_px
    }

    /// Nominal gap at pad row `r` after jitter.
    pub fn row_gap(&self, r: usize) -> f64 {
        self.gap_px - self.left_jitter[r] - self.right_jitter[r]
    }
}

#[derive(Clone, Copy)]
enum Surface {
    Background(Rgb8),
    Pad { highlight: bool },
}

fn add_noise(c: u8, noise: f64) -> f64 {
    (c as f64 + noise).clamp(0.0, 255.0)
}

/// Renders a synthetic clamp photograph and its ground truth.
pub fn synth_scene(spec: &SceneSpec) -> Result<(RgbImage, SceneTruth), EvalError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let frame = ClampFrame::new(spec);
    let rows = spec.pad_height_px.ceil() as usize;
    let jitter = |rng: &mut ChaCha8Rng| {
        if spec.edge_jitter_px > 0.0 {
            let half = 0.5 * spec.edge_jitter_px;
            rng.random_range(-half..=half)
        } else {
            0.0
        }
    };
    let left_jitter: Vec<f64> = (0..rows).map(|_| jitter(&mut rng)).collect();
    let right_jitter: Vec<f64> = (0..rows).map(|_| jitter(&mut rng)).collect();

    // Mottled background: Voronoi cells colored by vertical band.
    let palette = &spec.palette;
    let cells: Vec<(Vec2, Rgb8)> = (0..16)
        .map(|_| {
            let p = [
                rng.random_range(0.0..spec.width as f64),
                rng.random_range(0.0..spec.height as f64),
            ];
            let rel = p[1] / spec.height as f64;
            let base: Rgb8 = if rel < 0.3 {
                palette.sky.into()
            } else if rel > 0.72 {
                palette.soil.into()
            } else {
                palette.foliage.into()
            };
            let mut shade = || rng.random_range(-12i16..=12);
            let tint = |c: u8, d: i16| (c as i16 + d).clamp(0, 255) as u8;
            (p, Rgb8::new(tint(base.r, shade()), tint(base.g, shade()), tint(base.b, shade())))
        })
        .collect();

    let half_gap = spec.gap_px / 2.0;
    let half_h = spec.pad_height_px / 2.0;
    let w = spec.pad_width_px;
    let trunk_half = half_gap + 0.5 * w;
    let bark: Rgb8 = palette.bark.into();

    let mut mask = BinaryMask::new(spec.width, spec.height);
    let mut surfaces = Vec::with_capacity(spec.width as usize * spec.height as usize);
    let (mut left_area, mut right_area) = (0, 0);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let p = [x as f64 + 0.5, y as f64 + 0.5];
            let (s, t) = frame.local(p);
            let mut surface = None;
            if t >= -half_h && t < half_h {
                let r = ((t + half_h).floor() as usize).min(rows - 1);
                let left_inner = -half_gap + left_jitter[r];
                let right_inner = half_gap - right_jitter[r];
                if s >= -half_gap - w && s < left_inner {
                    left_area += 1;
                    let mid = -half_gap - 0.5 * w;
                    surface = Some(Surface::Pad {
                        highlight: (s - mid).abs() < 0.15 * w,
                    });
                } else if s >= right_inner && s < half_gap + w {
                    right_area += 1;
                    let mid = half_gap + 0.5 * w;
                    surface = Some(Surface::Pad {
                        highlight: (s - mid).abs() < 0.15 * w,
                    });
                }
            }
            let surface = surface.unwrap_or_else(|| {
                if s.abs() < trunk_half {
                    Surface::Background(bark)
                } else {
                    let nearest = cells
                        .iter()
                        .min_by(|a, b| {
                            let da = (a.0[0] - p[0]).powi(2) + (a.0[1] - p[1]).powi(2);
                            let db = (b.0[0] - p[0]).powi(2) + (b.0[1] - p[1]).powi(2);
                            da.total_cmp(&db)
                        })
                        .map(|c| c.1)
                        .unwrap_or(bark);
                    Surface::Background(nearest)
                }
            });
            if matches!(surface, Surface::Pad { .. }) {
                mask.set(x, y, Label::Pads);
            }
            surfaces.push(surface);
        }
    }

    let normal = Normal::new(0.0, spec.color_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| EvalError::InvalidScene(e.to_string()))?;
    let pad: Rgb8 = spec.pad_color.into();
    let highlight: Rgb8 = spec.highlight_color.into();
    let mut img = RgbImage::new(spec.width, spec.height);
    for (px, surface) in img.pixels_mut().zip(&surfaces) {
        let base = match *surface {
            Surface::Background(c) => c,
            Surface::Pad { highlight: true } => highlight,
            Surface::Pad { highlight: false } => pad,
        };
        let mut out = [0u8; 3];
        for (o, c) in out.iter_mut().zip([base.r, base.g, base.b]) {
            let n = if spec.color_noise > 0.0 {
                normal.sample(&mut rng)
            } else {
                0.0
            };
            let lin = srgb_decode(add_noise(c, n) / 255.0) * spec.brightness;
            *o = (srgb_encode(lin.min(1.0)) * 255.0).round() as u8;
        }
        *px = image::Rgb(out);
    }

    Ok((
        img,
        SceneTruth {
            gap_px: spec.gap_px,
            pad_height_px: spec.pad_height_px,
            ideal_mask: mask,
            left_area,
            right_area,
            left_jitter,
            right_jitter,
            axis: frame.along,
        },
    ))
}

/// A rendered or loaded scene with its manual mask and pad calibration.
#[derive(Debug, Clone)]
pub struct LabeledScene {
    pub id: String,
    pub image: RgbImage,
    pub mask: BinaryMask,
    pub pad_height_mm: f64,
}

impl LabeledScene {
    fn pair(&self) -> LabeledImagePair {
        LabeledImagePair {
            image: self.image.clone(),
            mask: self.mask.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Bright,
    Dim,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::Bright => "bright",
            Condition::Dim => "dim",
        }
    }

    fn other(self) -> Self {
        match self {
            Condition::Bright => Condition::Dim,
            Condition::Dim => Condition::Bright,
        }
    }
}

/// One comparison row: test images of `condition` measured under the matched
/// model and under the other condition's model.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminosityRow {
    pub condition: Condition,
    pub mean_abs_diff_mm: f64,
    pub std_abs_diff_mm: f64,
    /// Test images measured successfully under both models.
    pub pairs: usize,
    pub failures: usize,
    /// Mean millimeters per pixel over the compared images.
    pub mean_scale_mm_per_px: f64,
}

impl LuminosityRow {
    pub fn label(&self) -> String {
        let c = self.condition.name();
        let o = self.condition.other().name();
        format!("test_{c}|gmm_{c} vs test_{c}|gmm_{o}")
    }

    /// Mean discrepancy expressed in pixels.
    pub fn mean_abs_diff_px(&self) -> f64 {
        self.mean_abs_diff_mm / self.mean_scale_mm_per_px
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LuminosityTable {
    /// Dim row first, then bright.
    pub rows: Vec<LuminosityRow>,
    pub bright_train: Vec<String>,
    pub dim_train: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LuminosityConfig {
    pub train: TrainConfig,
    pub measure: MeasureConfig,
    /// Seeds the random train/test split.
    pub seed: u64,
}

fn split(n: usize, train_count: usize, seed: u64, stream: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut train = order[..train_count].to_vec();
    let mut test = order[train_count..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn pick<'a>(set: &'a [LabeledScene], idx: &[usize]) -> Vec<&'a LabeledScene> {
    idx.iter().map(|&i| &set[i]).collect()
}

fn compare_row(
    condition: Condition,
    tests: &[&LabeledScene],
    matched: &ClassifierModel,
    crossed: &ClassifierModel,
    measure: &MeasureConfig,
) -> Result<LuminosityRow, EvalError> {
    let results: Vec<Option<(f64, f64, f64)>> = tests
        .par_iter()
        .map(|scene| {
            let run = |m: &ClassifierModel| {
                let mask = classify_image(&scene.image, m).ok()?;
                measure_diameter(&mask, scene.pad_height_mm, measure).ok()
            };
            let a = run(matched)?;
            let b = run(crossed)?;
            Some((a.diameter_mm, b.diameter_mm, a.scale_mm_per_px))
        })
        .collect();
    let ok: Vec<(f64, f64, f64)> = results.iter().flatten().copied().collect();
    let failures = results.len() - ok.len();
    let matched_d: Vec<f64> = ok.iter().map(|r| r.0).collect();
    let crossed_d: Vec<f64> = ok.iter().map(|r| r.1).collect();
    let (mean, std) = cross_condition_compare(&matched_d, &crossed_d)?;
    Ok(LuminosityRow {
        condition,
        mean_abs_diff_mm: mean,
        std_abs_diff_mm: std,
        pairs: ok.len(),
        failures,
        mean_scale_mm_per_px: ok.iter().map(|r| r.2).sum::<f64>() / ok.len() as f64,
    })
}

/// Trains one classifier per luminosity condition on `train_count` randomly
/// chosen scenes and compares matched against crossed measurements on the
/// remaining scenes of each condition.
pub fn run_luminosity_experiment(
    bright: &[LabeledScene],
    dim: &[LabeledScene],
    train_count: usize,
    cfg: &LuminosityConfig,
) -> Result<LuminosityTable, EvalError> {
    for set in [bright, dim] {
        if set.len() <= train_count || train_count == 0 {
            return Err(EvalError::InsufficientScenes {
                have: set.len(),
                train_count,
            });
        }
    }
    let (bright_train, bright_test) = split(bright.len(), train_count, cfg.seed, 0);
    let (dim_train, dim_test) = split(dim.len(), train_count, cfg.seed, 1);
    let pairs = |set: &[LabeledScene], idx: &[usize]| -> Vec<LabeledImagePair> {
        idx.iter().map(|&i| set[i].pair()).collect()
    };
    let bright_model = train_classifier(&pairs(bright, &bright_train), &cfg.train)?;
    let dim_model = train_classifier(&pairs(dim, &dim_train), &cfg.train)?;

    let dim_row = compare_row(
        Condition::Dim,
        &pick(dim, &dim_test),
        &dim_model,
        &bright_model,
        &cfg.measure,
    )?;
    let bright_row = compare_row(
        Condition::Bright,
        &pick(bright, &bright_test),
        &bright_model,
        &dim_model,
        &cfg.measure,
    )?;
    let ids = |set: &[LabeledScene], idx: &[usize]| idx.iter().map(|&i| set[i].id.clone()).collect();
    Ok(LuminosityTable {
        rows: vec![dim_row, bright_row],
        bright_train: ids(bright, &bright_train),
        dim_train: ids(dim, &dim_train),
    })
}

/// Renders every spec into a [`LabeledScene`] using its ideal mask.
pub fn render_scenes(
    specs: &[SceneSpec],
    pad_height_mm: f64,
    prefix: &str,
) -> Result<Vec<LabeledScene>, EvalError> {
    specs
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            let (image, truth) = synth_scene(spec)?;
            Ok(LabeledScene {
                id: format!("{prefix}{i:04}"),
                image,
                mask: truth.ideal_mask,
                pad_height_mm,
            })
        })
        .collect()
}

/// [`run_luminosity_experiment`] over freshly rendered scenes.
pub fn run_luminosity_from_specs(
    bright_specs: &[SceneSpec],
    dim_specs: &[SceneSpec],
    pad_height_mm: f64,
    train_count: usize,
    cfg: &LuminosityConfig,
) -> Result<LuminosityTable, EvalError> {
    let bright = render_scenes(bright_specs, pad_height_mm, "bright_")?;
    let dim = render_scenes(dim_specs, pad_height_mm, "dim_")?;
    run_luminosity_experiment(&bright, &dim, train_count, cfg)
}
