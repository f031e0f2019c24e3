//! On-disk formats: model JSON, mask PNG, image decoding, and the campaign,
//! manifest and reference CSVs.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::color_space::{UvPoint, COLORSPACE_TAG};
use crate::error::FormatError;
use crate::gmm::{Cov2, GaussianComponent, GmmModel};
use crate::segmentation::{BinaryMask, ClassifierModel, Label, TrainingMetadata};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    colorspace: String,
    classes: Vec<ClassBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainingMetadata>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassBlock {
    label: Label,
    modes: usize,
    components: Vec<ComponentBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ComponentBlock {
    weight: f64,
    mean: [f64; 2],
    /// Row-major 2x2.
    cov: [f64; 4],
}

fn class_block(label: Label, m: &GmmModel) -> ClassBlock {
    ClassBlock {
        label,
        modes: m.mode_count(),
        components: m
            .components()
            .iter()
            .map(|c| ComponentBlock {
                weight: c.weight,
                mean: [c.mean.u, c.mean.v],
                cov: c.cov.to_row_major(),
            })
            .collect(),
    }
}

fn class_model(block: &ClassBlock) -> Result<GmmModel, FormatError> {
    if block.modes != block.components.len() {
        return Err(FormatError::InvalidModel(format!(
            "class {:?} declares {} modes but lists {} components",
            block.label,
            block.modes,
            block.components.len()
        )));
    }
    let comps = block
        .components
        .iter()
        .map(|c| {
            if c.cov[1] != c.cov[2] {
                return Err(FormatError::InvalidModel(format!(
                    "asymmetric covariance {:?}",
                    c.cov
                )));
            }
            Ok(GaussianComponent::new(
                c.weight,
                UvPoint::new(c.mean[0], c.mean[1]),
                Cov2::new(c.cov[0], c.cov[1], c.cov[3]),
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    GmmModel::new(comps).map_err(|e| FormatError::InvalidModel(format!("{:?}: {e}", block.label)))
}

/// Serializes a classifier as pretty JSON with a trailing newline.
pub fn model_to_json(model: &ClassifierModel) -> Result<String, FormatError> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        colorspace: model.colorspace.clone(),
        classes: vec![
            class_block(Label::Pads, &model.pads),
            class_block(Label::Background, &model.background),
        ],
        training: model.metadata.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_json(text: &str) -> Result<ClassifierModel, FormatError> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(FormatError::InvalidModel(format!(
            "unsupported format version {}",
            file.format_version
        )));
    }
    if file.colorspace != COLORSPACE_TAG {
        return Err(FormatError::InvalidModel(format!(
            "unsupported colorspace `{}`",
            file.colorspace
        )));
    }
    let find = |label: Label| {
        let mut it = file.classes.iter().filter(|c| c.label == label);
        match (it.next(), it.next()) {
            (Some(b), None) => class_model(b),
            _ => Err(FormatError::InvalidModel(format!(
                "expected exactly one {label:?} class block"
            ))),
        }
    };
    Ok(ClassifierModel {
        pads: find(Label::Pads)?,
        background: find(Label::Background)?,
        colorspace: file.colorspace,
        metadata: file.training,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> FormatError + '_ {
    move |source| FormatError::Image {
        path: path.display().to_string(),
        source,
    }
}

pub fn save_model(path: &Path, model: &ClassifierModel) -> Result<(), FormatError> {
    fs::write(path, model_to_json(model)?).map_err(io_err(path))
}

pub fn load_model(path: &Path) -> Result<ClassifierModel, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    model_from_json(&text)
}

/// Decodes a PNG or JPEG into 8-bit RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage, FormatError> {
    Ok(image::open(path).map_err(image_err(path))?.to_rgb8())
}

pub fn save_png(path: &Path, img: &RgbImage) -> Result<(), FormatError> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(image_err(path))
}

/// Reads a mask image; luma >= 128 is pads.
pub fn load_mask(path: &Path) -> Result<BinaryMask, FormatError> {
    let gray = image::open(path).map_err(image_err(path))?.to_luma8();
    Ok(mask_from_gray(&gray))
}

pub fn mask_from_gray(gray: &GrayImage) -> BinaryMask {
    BinaryMask::from_fn(gray.width(), gray.height(), |x, y| gray.get_pixel(x, y)[0] >= 128)
}

/// 0 for background, 255 for pads.
pub fn mask_to_gray(mask: &BinaryMask) -> GrayImage {
    GrayImage::from_fn(mask.width(), mask.height(), |x, y| {
        image::Luma([if mask.is_pads(x, y) { 255 } else { 0 }])
    })
}

pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<(), FormatError> {
    mask_to_gray(mask)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(image_err(path))
}

/// One measured image in a campaign CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub image_id: String,
    pub status: String,
    pub gap_px: Option<f64>,
    pub pad_height_px: Option<f64>,
    pub pad_height_mm: Option<f64>,
    pub diameter_mm: Option<f64>,
    pub samples_used: Option<usize>,
    pub samples_trimmed: Option<usize>,
}

pub const STATUS_OK: &str = "ok";

impl CampaignRow {
    pub fn ok(image_id: impl Into<String>, r: &crate::geometry::MeasurementResult) -> Self {
        Self {
            image_id: image_id.into(),
            status: STATUS_OK.into(),
            gap_px: Some(r.gap_px),
            pad_height_px: Some(r.pad_height_px),
            pad_height_mm: Some(r.pad_height_mm),
            diameter_mm: Some(r.diameter_mm),
            samples_used: Some(r.samples_used),
            samples_trimmed: Some(r.samples_trimmed),
        }
    }

    pub fn failed(image_id: impl Into<String>, status: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            status: status.into(),
            gap_px: None,
            pad_height_px: None,
            pad_height_mm: None,
            diameter_mm: None,
            samples_used: None,
            samples_trimmed: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }
}

/// Ground-truth record written by the scene generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub image_id: String,
    pub seed: u64,
    pub gap_px: f64,
    pub pad_height_px: f64,
    pub pad_height_mm: f64,
    pub diameter_mm: f64,
    pub tilt_deg: f64,
    pub brightness: f64,
}

pub fn write_csv<T: Serialize, W: Write>(writer: W, rows: &[T]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|source| FormatError::Io {
        path: "<csv>".into(),
        source,
    })?;
    Ok(())
}

/// Writes rows, always emitting the header even for an empty slice.
pub fn write_csv_with_header<T: Serialize>(
    path: &Path,
    header: &[&str],
    rows: &[T],
) -> Result<(), FormatError> {
    let mut buf = Vec::new();
    if rows.is_empty() {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        w.flush().map_err(io_err(path))?;
    } else {
        write_csv(&mut buf, rows)?;
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(reader: R) -> Result<Vec<T>, FormatError> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub fn read_csv_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, FormatError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    read_csv(f)
}

pub const CAMPAIGN_HEADER: [&str; 8] = [
    "image_id",
    "status",
    "gap_px",
    "pad_height_px",
    "pad_height_mm",
    "diameter_mm",
    "samples_used",
    "samples_trimmed",
];

/// `(image_id, diameter_mm)` pairs from any CSV carrying those two columns.
pub fn read_reference(path: &Path) -> Result<Vec<(String, f64)>, FormatError> {
    #[derive(Deserialize)]
    struct Ref {
        image_id: String,
        diameter_mm: f64,
    }
    let rows: Vec<Ref> = read_csv_file(path)?;
    Ok(rows.into_iter().map(|r| (r.image_id, r.diameter_mm)).collect())
}

/// `(image_id, round)` assignments for round summaries.
pub fn read_rounds(path: &Path) -> Result<Vec<(String, String)>, FormatError> {
    #[derive(Deserialize)]
    struct RoundRow {
        image_id: String,
        round: String,
    }
    let rows: Vec<RoundRow> = read_csv_file(path)?;
    Ok(rows.into_iter().map(|r| (r.image_id, r.round)).collect())
}
