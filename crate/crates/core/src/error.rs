use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("image is empty ({width}x{height})")]
    Empty { width: u32, height: u32 },
    #[error("dimension mismatch: image {image:?} vs mask {mask:?}")]
    DimensionMismatch { image: (u32, u32), mask: (u32, u32) },
    #[error("raw buffer of {len} bytes does not match {width}x{height}x{channels}")]
    BufferSize {
        len: usize,
        width: u32,
        height: u32,
        channels: u32,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmmError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("degenerate data: need {needed} distinct points, found {found}")]
    DegenerateData { needed: usize, found: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("empty mixture components {0:?} (effective count below 1e-8)")]
    EmptyComponent(Vec<usize>),
    #[error("fit failed: empty components persisted after {retries} reinitializations")]
    FitFailure { retries: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("no labeled images supplied")]
    NoTrainingImages,
    #[error("insufficient training data: class `{class}` has no pixels")]
    InsufficientData { class: &'static str },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("fitting the {class} mixture: {source}")]
    Fit {
        class: &'static str,
        #[source]
        source: GmmError,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(
        "pads not found: {count} component(s) at or above min area {min_area}, areas {areas:?}"
    )]
    PadsNotFound {
        count: usize,
        min_area: usize,
        areas: Vec<usize>,
    },
    #[error("ambiguous axis: eigenvalue ratio {ratio:.3} below 1.5")]
    AmbiguousAxis { ratio: f64 },
    #[error("degenerate region: {0}")]
    DegenerateRegion(String),
    #[error("pads do not overlap along the measurement axis")]
    NoOverlap,
    #[error("no edge samples available")]
    NoSamples,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Pipeline stage in which a measurement failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Extraction,
    Axis,
    Sampling,
    Averaging,
    Calibration,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Extraction => "extraction",
            Stage::Axis => "axis",
            Stage::Sampling => "sampling",
            Stage::Averaging => "averaging",
            Stage::Calibration => "calibration",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{stage} stage: {source}")]
pub struct MeasureError {
    pub stage: Stage,
    #[source]
    pub source: GeometryError,
}

impl MeasureError {
    pub fn new(stage: Stage, source: GeometryError) -> Self {
        Self { stage, source }
    }

    /// Short status keyword used in campaign CSV rows.
    pub fn status(&self) -> &'static str {
        match self.source {
            GeometryError::PadsNotFound { .. } => "pads-not-found",
            GeometryError::AmbiguousAxis { .. } => "ambiguous-axis",
            _ => "geometry-error",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("bin width must be positive, got {0}")]
    BinWidth(f64),
    #[error("invalid error value {0}: must be finite and non-negative")]
    InvalidValue(f64),
    #[error("round {0} is empty")]
    EmptyRound(usize),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("insufficient scenes: {have} available, need more than {train_count}")]
    InsufficientScenes { have: usize, train_count: usize },
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid model file: {0}")]
    InvalidModel(String),
    #[error("invalid csv: {0}")]
    InvalidCsv(String),
}
