//! Grapevine trunk diameter from a single photograph of a clamp with red pads.
//!
//! The pipeline:
//!
//! 1. [`color_space`]: sRGB pixels to CIELUV chromaticity (u*, v*), lightness
//!    dropped.
//! 2. [`gmm`]: 2-D Gaussian mixtures fitted with Expectation-Maximization.
//! 3. [`segmentation`]: one mixture per class (pads, background) trained on
//!    hand-labeled images; pixels go to the class with the higher likelihood.
//! 4. [`geometry`]: the two pad blobs give the measurement axis, the averaged
//!    inner-edge gap in pixels, and the pad height used as the mm/pixel scale.
//! 5. [`evaluation`]: error statistics, synthetic ground-truth scenes and the
//!    cross-luminosity experiment.
//!
//! [`formats`] and [`commands`] hold the file formats and batch commands used
//! by the `trunkgauge` binary.

pub mod color_space;
pub mod commands;
pub mod error;
pub mod evaluation;
pub mod formats;
pub mod geometry;
pub mod gmm;
pub mod segmentation;

pub use color_space::{image_to_uv, srgb_to_uv, Rgb8, UvPlane, UvPoint};
pub use error::{
    EvalError, FormatError, GeometryError, GmmError, ImageError, MeasureError, SegmentationError,
    Stage,
};
pub use evaluation::{synth_scene, SceneSpec, SceneTruth};
pub use geometry::{measure_diameter, MeasureConfig, MeasurementResult, TrimPolicy};
pub use gmm::{em_fit, FitConfig, FitReport, GaussianComponent, GmmModel};
pub use segmentation::{
    classify_image, classify_pixel, train_classifier, BinaryMask, ClassifierModel, Label,
    LabeledImagePair, TrainConfig,
};

pub use image::RgbImage;
