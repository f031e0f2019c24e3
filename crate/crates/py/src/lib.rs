//! Python bindings.
//!
//! Images cross the boundary as `(width, height, bytes)` with row-major RGB8
//! pixels; masks as one byte per pixel, nonzero meaning pads.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use trunkgauge::formats::{model_from_json, model_to_json};
use trunkgauge::geometry::{HeightMethod, MinArea};
use trunkgauge::gmm::log_likelihood;
use trunkgauge::{
    BinaryMask, ClassifierModel, FitConfig, GmmModel, Label, LabeledImagePair, MeasureConfig,
    Rgb8, RgbImage, SceneSpec, TrainConfig, TrimPolicy, UvPoint,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Wraps raw RGB8 bytes as an image, checking the buffer size.
pub fn rgb_from_bytes(width: u32, height: u32, data: &[u8]) -> Result<RgbImage, String> {
    let expected = width as usize * height as usize * 3;
    if data.len() != expected {
        return Err(format!(
            "expected {expected} bytes for a {width}x{height} RGB image, got {}",
            data.len()
        ));
    }
    RgbImage::from_raw(width, height, data.to_vec()).ok_or_else(|| "bad image buffer".into())
}

pub fn mask_from_bytes(width: u32, height: u32, data: &[u8]) -> Result<BinaryMask, String> {
    let labels = data
        .iter()
        .map(|&b| if b != 0 { Label::Pads } else { Label::Background })
        .collect();
    BinaryMask::from_labels(width, height, labels).map_err(|e| e.to_string())
}

/// 255 for pads, 0 for background.
pub fn mask_to_bytes(mask: &BinaryMask) -> Vec<u8> {
    mask.labels()
        .iter()
        .map(|l| if l.is_pads() { 255 } else { 0 })
        .collect()
}

fn to_points(data: Vec<(f64, f64)>) -> Vec<UvPoint> {
    data.into_iter().map(|(u, v)| UvPoint::new(u, v)).collect()
}

#[pyfunction]
fn srgb_to_uv(r: u8, g: u8, b: u8) -> (f64, f64) {
    let p = trunkgauge::srgb_to_uv(Rgb8::new(r, g, b));
    (p.u, p.v)
}

/// Per-pixel `(u, v)` in row-major order.
#[pyfunction]
fn image_to_uv(width: u32, height: u32, data: &[u8]) -> PyResult<Vec<(f64, f64)>> {
    let img = rgb_from_bytes(width, height, data).map_err(value_err)?;
    let plane = trunkgauge::image_to_uv(&img).map_err(value_err)?;
    Ok(plane.as_slice().iter().map(|p| (p.u, p.v)).collect())
}

/// A fitted 2-D Gaussian mixture.
#[pyclass(name = "Gmm", frozen)]
struct PyGmm {
    model: GmmModel,
    iterations: usize,
    converged: bool,
}

#[pymethods]
impl PyGmm {
    #[staticmethod]
    #[pyo3(signature = (points, modes, seed = 0, rel_tol = 1e-6, max_iters = 500))]
    fn fit(points: Vec<(f64, f64)>, modes: usize, seed: u64, rel_tol: f64, max_iters: usize) -> PyResult<Self> {
        let cfg = FitConfig {
            modes,
            seed,
            rel_tol,
            max_iters,
            ..FitConfig::default()
        };
        let (model, report) = trunkgauge::em_fit(&to_points(points), &cfg).map_err(value_err)?;
        Ok(Self {
            model,
            iterations: report.iterations,
            converged: report.converged,
        })
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.iterations
    }

    #[getter]
    fn converged(&self) -> bool {
        self.converged
    }

    /// `(weight, (mean_u, mean_v), (cov_uu, cov_uv, cov_vv))` per component.
    fn components(&self) -> Vec<(f64, (f64, f64), (f64, f64, f64))> {
        self.model
            .components()
            .iter()
            .map(|c| (c.weight, (c.mean.u, c.mean.v), (c.cov.xx, c.cov.xy, c.cov.yy)))
            .collect()
    }

    fn log_density(&self, u: f64, v: f64) -> f64 {
        self.model.log_density(UvPoint::new(u, v))
    }

    fn log_likelihood(&self, points: Vec<(f64, f64)>) -> f64 {
        log_likelihood(&to_points(points), &self.model)
    }

    fn __len__(&self) -> usize {
        self.model.mode_count()
    }
}

/// Pads/background pixel classifier.
#[pyclass(name = "Classifier", frozen)]
struct PyClassifier {
    model: ClassifierModel,
}

#[pymethods]
impl PyClassifier {
    /// Trains on `(width, height, rgb_bytes, mask_bytes)` tuples.
    #[staticmethod]
    #[pyo3(signature = (images, pads_modes = 2, background_modes = 3, seed = 0, cap_per_class = 200_000))]
    fn train(
        py: Python<'_>,
        images: Vec<(u32, u32, Vec<u8>, Vec<u8>)>,
        pads_modes: usize,
        background_modes: usize,
        seed: u64,
        cap_per_class: usize,
    ) -> PyResult<Self> {
        let pairs = images
            .iter()
            .map(|(w, h, rgb, mask)| {
                let image = rgb_from_bytes(*w, *h, rgb)?;
                let mask = mask_from_bytes(*w, *h, mask)?;
                LabeledImagePair::new(image, mask).map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, String>>()
            .map_err(value_err)?;
        let cfg = TrainConfig {
            pads_modes,
            background_modes,
            seed,
            cap_per_class,
            ..TrainConfig::default()
        };
        let model = py
            .detach(|| trunkgauge::train_classifier(&pairs, &cfg))
            .map_err(value_err)?;
        Ok(Self { model })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            model: model_from_json(text).map_err(value_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        model_to_json(&self.model).map_err(value_err)
    }

    fn is_pads(&self, u: f64, v: f64) -> bool {
        trunkgauge::classify_pixel(UvPoint::new(u, v), &self.model).is_pads()
    }

    /// Mask bytes, 255 for pads.
    fn classify<'py>(&self, py: Python<'py>, width: u32, height: u32, data: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
        let img = rgb_from_bytes(width, height, data).map_err(value_err)?;
        let mask = py
            .detach(|| trunkgauge::classify_image(&img, &self.model))
            .map_err(value_err)?;
        Ok(PyBytes::new(py, &mask_to_bytes(&mask)))
    }
}

#[pyfunction]
#[pyo3(signature = (width, height, mask, pad_height_mm, scanlines = 50, trim = true, height_method = "moment"))]
#[allow(clippy::too_many_arguments)]
fn measure_diameter<'py>(
    py: Python<'py>,
    width: u32,
    height: u32,
    mask: &[u8],
    pad_height_mm: f64,
    scanlines: usize,
    trim: bool,
    height_method: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let mask = mask_from_bytes(width, height, mask).map_err(value_err)?;
    let height_method = match height_method {
        "moment" => HeightMethod::Moment,
        "extent" => HeightMethod::Extent,
        other => return Err(value_err(format!("unknown height method `{other}`"))),
    };
    let cfg = MeasureConfig {
        scanlines,
        trim: if trim { TrimPolicy::default() } else { TrimPolicy::Disabled },
        min_area: MinArea::Fraction(0.0005),
        height_method,
    };
    let r = trunkgauge::measure_diameter(&mask, pad_height_mm, &cfg)
        .map_err(|e| value_err(format!("{}: {e}", e.status())))?;
    let d = PyDict::new(py);
    d.set_item("gap_px", r.gap_px)?;
    d.set_item("pad_height_px", r.pad_height_px)?;
    d.set_item("pad_height_mm", r.pad_height_mm)?;
    d.set_item("scale_mm_per_px", r.scale_mm_per_px)?;
    d.set_item("diameter_mm", r.diameter_mm)?;
    d.set_item("samples_used", r.samples_used)?;
    d.set_item("samples_trimmed", r.samples_trimmed)?;
    d.set_item("axis", (r.axis[0], r.axis[1]))?;
    Ok(d)
}

/// Renders a synthetic clamp photo.
///
/// Returns `(width, height, rgb_bytes, mask_bytes, truth)` where `truth`
/// holds the painted gap and pad height in pixels.
#[pyfunction]
#[pyo3(signature = (seed = 0, tilt_deg = 0.0, edge_jitter_px = 0.0, brightness = 1.0, gap_px = 300.0, pad_height_px = 200.0, color_noise = 4.0))]
#[allow(clippy::too_many_arguments)]
fn synth_scene<'py>(
    py: Python<'py>,
    seed: u64,
    tilt_deg: f64,
    edge_jitter_px: f64,
    brightness: f64,
    gap_px: f64,
    pad_height_px: f64,
    color_noise: f64,
) -> PyResult<(u32, u32, Bound<'py, PyBytes>, Bound<'py, PyBytes>, Bound<'py, PyDict>)> {
    let spec = SceneSpec {
        seed,
        tilt_deg,
        edge_jitter_px,
        brightness,
        gap_px,
        pad_height_px,
        color_noise,
        ..SceneSpec::default()
    };
    let (img, truth) = trunkgauge::synth_scene(&spec).map_err(value_err)?;
    let t = PyDict::new(py);
    t.set_item("gap_px", truth.gap_px)?;
    t.set_item("pad_height_px", truth.pad_height_px)?;
    Ok((
        img.width(),
        img.height(),
        PyBytes::new(py, img.as_raw()),
        PyBytes::new(py, &mask_to_bytes(&truth.ideal_mask)),
        t,
    ))
}

/// `(mean, std, max)` of absolute errors.
#[pyfunction]
fn error_stats(measured: Vec<f64>, reference: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let s = trunkgauge::evaluation::error_stats(&measured, &reference).map_err(value_err)?;
    Ok((s.mean_abs_error, s.std_abs_error, s.max_abs_error))
}

#[pymodule]
pub fn trunkgauge_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(srgb_to_uv, m)?)?;
    m.add_function(wrap_pyfunction!(image_to_uv, m)?)?;
    m.add_function(wrap_pyfunction!(measure_diameter, m)?)?;
    m.add_function(wrap_pyfunction!(synth_scene, m)?)?;
    m.add_function(wrap_pyfunction!(error_stats, m)?)?;
    m.add_class::<PyGmm>()?;
    m.add_class::<PyClassifier>()?;
    Ok(())
}
