//! Two-class color segmentation: clamp pads versus everything else.
//!
//! Training routes labeled pixels into per-class chromaticity datasets and fits
//! one mixture per class. Classification compares the two class-conditional
//! log-densities pixel by pixel (equal priors, ties go to background).

use image::RgbImage;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color_space::{image_to_uv, UvPoint, COLORSPACE_TAG};
use crate::error::{ImageError, SegmentationError};
use crate::gmm::{em_fit, FitConfig, FitReport, GmmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Background,
    Pads,
}

impl Label {
    pub fn is_pads(self) -> bool {
        self == Label::Pads
    }
}

/// Per-pixel pads/background labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<Label>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![Label::Background; width as usize * height as usize],
        }
    }

    pub fn from_labels(width: u32, height: u32, data: Vec<Label>) -> Result<Self, ImageError> {
        if data.len() != width as usize * height as usize {
            return Err(ImageError::BufferSize {
                len: data.len(),
                width,
                height,
                channels: 1,
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds from a predicate over pixel coordinates.
    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| if f(x, y) { Label::Pads } else { Label::Background })
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> Label {
        self.data[self.index(x, y)]
    }

    pub fn is_pads(&self, x: u32, y: u32) -> bool {
        self.get(x, y).is_pads()
    }

    pub fn set(&mut self, x: u32, y: u32, label: Label) {
        let i = self.index(x, y);
        self.data[i] = label;
    }

    pub fn labels(&self) -> &[Label] {
        &self.data
    }

    pub fn count_pads(&self) -> usize {
        self.data.iter().filter(|l| l.is_pads()).count()
    }

    /// Copy translated by `(dx, dy)` into a canvas of the given size; pixels
    /// falling outside are dropped.
    pub fn translated(&self, width: u32, height: u32, dx: i64, dy: i64) -> Self {
        let mut out = Self::new(width, height);
        for y in 0..self.height {
            for x in 0..self.width {
                if !self.is_pads(x, y) {
                    continue;
                }
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx >= 0 && ny >= 0 && nx < width as i64 && ny < height as i64 {
                    out.set(nx as u32, ny as u32, Label::Pads);
                }
            }
        }
        out
    }

    /// Morphological opening with a 3x3 square structuring element.
    pub fn opened_3x3(&self) -> Self {
        self.erode_or_dilate(true).erode_or_dilate(false)
    }

    fn erode_or_dilate(&self, erode: bool) -> Self {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut out = self.clone();
        for y in 0..h {
            for x in 0..w {
                let mut hit = erode;
                'win: for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        let v = nx >= 0
                            && ny >= 0
                            && nx < w
                            && ny < h
                            && self.is_pads(nx as u32, ny as u32);
                        if erode && !v {
                            hit = false;
                            break 'win;
                        }
                        if !erode && v {
                            hit = true;
                            break 'win;
                        }
                    }
                }
                let label = if hit { Label::Pads } else { Label::Background };
                out.set(x as u32, y as u32, label);
            }
        }
        out
    }
}

/// An image with its manual pads/background segmentation.
#[derive(Debug, Clone)]
pub struct LabeledImagePair {
    pub image: RgbImage,
    pub mask: BinaryMask,
}

impl LabeledImagePair {
    pub fn new(image: RgbImage, mask: BinaryMask) -> Result<Self, ImageError> {
        if image.dimensions() != mask.dimensions() {
            return Err(ImageError::DimensionMismatch {
                image: image.dimensions(),
                mask: mask.dimensions(),
            });
        }
        Ok(Self { image, mask })
    }
}

/// Per-class chromaticity samples drawn from a labeled corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSets {
    pub pads: Vec<UvPoint>,
    pub background: Vec<UvPoint>,
    /// Pixel counts before subsampling.
    pub pads_total: usize,
    pub background_total: usize,
}

fn subsample(points: Vec<UvPoint>, cap: usize, seed: u64, stream: u64) -> Vec<UvPoint> {
    if points.len() <= cap {
        return points;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut picked = index::sample(&mut rng, points.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| points[i]).collect()
}

/// Splits every labeled pixel into the pads or background dataset, capping
/// each class at `cap_per_class` by seeded uniform subsampling.
pub fn build_training_sets(
    pairs: &[LabeledImagePair],
    cap_per_class: usize,
    seed: u64,
) -> Result<TrainingSets, SegmentationError> {
    if pairs.is_empty() {
        return Err(SegmentationError::NoTrainingImages);
    }
    let mut pads = Vec::new();
    let mut background = Vec::new();
    for pair in pairs {
        if pair.image.dimensions() != pair.mask.dimensions() {
            return Err(ImageError::DimensionMismatch {
                image: pair.image.dimensions(),
                mask: pair.mask.dimensions(),
            }
            .into());
        }
        let plane = image_to_uv(&pair.image)?;
        for (p, label) in plane.as_slice().iter().zip(pair.mask.labels()) {
            match label {
                Label::Pads => pads.push(*p),
                Label::Background => background.push(*p),
            }
        }
    }
    if pads.is_empty() {
        return Err(SegmentationError::InsufficientData { class: "pads" });
    }
    if background.is_empty() {
        return Err(SegmentationError::InsufficientData {
            class: "background",
        });
    }
    let (pads_total, background_total) = (pads.len(), background.len());
    Ok(TrainingSets {
        pads: subsample(pads, cap_per_class, seed, 0),
        background: subsample(background, cap_per_class, seed, 1),
        pads_total,
        background_total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub pads_modes: usize,
    pub background_modes: usize,
    pub cap_per_class: usize,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub reg_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            pads_modes: 2,
            background_modes: 3,
            cap_per_class: 200_000,
            rel_tol: 1e-6,
            max_iters: 500,
            reg_eps: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn fit_config(&self, modes: usize) -> FitConfig {
        FitConfig {
            modes,
            rel_tol: self.rel_tol,
            max_iters: self.max_iters,
            reg_eps: self.reg_eps,
            seed: self.seed,
        }
    }
}

/// Provenance recorded alongside a trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub image_count: usize,
    pub pads_pixels: usize,
    pub background_pixels: usize,
    pub cap_per_class: usize,
    pub seed: u64,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub reg_eps: f64,
    pub pads_fit: FitSummary,
    pub background_fit: FitSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub log_likelihood: f64,
    pub converged: bool,
    pub reinitializations: usize,
}

impl From<&FitReport> for FitSummary {
    fn from(r: &FitReport) -> Self {
        Self {
            iterations: r.iterations,
            log_likelihood: r.log_likelihood,
            converged: r.converged,
            reinitializations: r.reinitializations,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub pads: GmmModel,
    pub background: GmmModel,
    pub colorspace: String,
    pub metadata: Option<TrainingMetadata>,
}

impl ClassifierModel {
    /// Bundles two mixtures without training provenance.
    pub fn new(pads: GmmModel, background: GmmModel) -> Self {
        Self {
            pads,
            background,
            colorspace: COLORSPACE_TAG.to_string(),
            metadata: None,
        }
    }
}

/// Fits the pads and background mixtures from a labeled corpus.
pub fn train_classifier(
    pairs: &[LabeledImagePair],
    cfg: &TrainConfig,
) -> Result<ClassifierModel, SegmentationError> {
    let sets = build_training_sets(pairs, cfg.cap_per_class, cfg.seed)?;
    let (pads, pads_report) = em_fit(&sets.pads, &cfg.fit_config(cfg.pads_modes))
        .map_err(|source| SegmentationError::Fit {
            class: "pads",
            source,
        })?;
    let (background, bg_report) = em_fit(&sets.background, &cfg.fit_config(cfg.background_modes))
        .map_err(|source| SegmentationError::Fit {
            class: "background",
            source,
        })?;
    Ok(ClassifierModel {
        pads,
        background,
        colorspace: COLORSPACE_TAG.to_string(),
        metadata: Some(TrainingMetadata {
            image_count: pairs.len(),
            pads_pixels: sets.pads_total,
            background_pixels: sets.background_total,
            cap_per_class: cfg.cap_per_class,
            seed: cfg.seed,
            rel_tol: cfg.rel_tol,
            max_iters: cfg.max_iters,
            reg_eps: cfg.reg_eps,
            pads_fit: (&pads_report).into(),
            background_fit: (&bg_report).into(),
        }),
    })
}

/// Pads iff the pads log-density strictly exceeds the background one.
pub fn classify_pixel(x: UvPoint, m: &ClassifierModel) -> Label {
    if m.pads.log_density(x) > m.background.log_density(x) {
        Label::Pads
    } else {
        Label::Background
    }
}

pub fn classify_image(img: &RgbImage, m: &ClassifierModel) -> Result<BinaryMask, ImageError> {
    let plane = image_to_uv(img)?;
    let data = plane
        .as_slice()
        .par_iter()
        .map(|&x| classify_pixel(x, m))
        .collect();
    BinaryMask::from_labels(plane.width(), plane.height(), data)
}
