//! sRGB to CIE 1976 u*v* chromaticity.
//!
//! Pixels are gamma-decoded with the sRGB transfer curve, mapped to XYZ under
//! D65, and reduced to the (u*, v*) pair of CIELUV. Lightness L* is computed
//! on the way but dropped from the output: segmentation works on chroma only.

use std::sync::OnceLock;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ImageError;

/// Tag written into model files describing the feature space.
pub const COLORSPACE_TAG: &str = "cieluv-uv/srgb-d65";

/// An 8-bit sRGB pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rgb8 {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb8 {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Self { r, g, b }
    }
}

impl From<image::Rgb<u8>> for Rgb8 {
    fn from(p: image::Rgb<u8>) -> Self {
        Self::new(p[0], p[1], p[2])
    }
}

impl From<Rgb8> for image::Rgb<u8> {
    fn from(p: Rgb8) -> Self {
        image::Rgb([p.r, p.g, p.b])
    }
}

/// A point in the (u*, v*) chromaticity plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UvPoint {
    pub u: f64,
    pub v: f64,
}

impl UvPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// Row-major raster of chromaticity features.
#[derive(Debug, Clone, PartialEq)]
pub struct UvPlane {
    width: u32,
    height: u32,
    data: Vec<UvPoint>,
}

impl UvPlane {
    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> UvPoint {
        self.data[(y as usize) * (self.width as usize) + x as usize]
    }

    pub fn as_slice(&self) -> &[UvPoint] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<UvPoint> {
        self.data
    }
}

// sRGB primaries to XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

// CIE constants for the L* curve, kept as exact rationals.
const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

/// Inverse sRGB transfer function for a channel in [0, 1].
pub fn srgb_decode(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

/// Forward sRGB transfer function for linear light in [0, 1].
pub fn srgb_encode(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        c * 12.92
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn decode_lut() -> &'static [f64; 256] {
    static LUT: OnceLock<[f64; 256]> = OnceLock::new();
    LUT.get_or_init(|| {
        let mut lut = [0.0; 256];
        for (i, slot) in lut.iter_mut().enumerate() {
            *slot = srgb_decode(i as f64 / 255.0);
        }
        lut
    })
}

fn linear_to_xyz(rgb: [f64; 3]) -> [f64; 3] {
    let m = &RGB_TO_XYZ;
    [
        m[0][0] * rgb[0] + m[0][1] * rgb[1] + m[0][2] * rgb[2],
        m[1][0] * rgb[0] + m[1][1] * rgb[1] + m[1][2] * rgb[2],
        m[2][0] * rgb[0] + m[2][1] * rgb[1] + m[2][2] * rgb[2],
    ]
}

fn uv_prime(xyz: [f64; 3]) -> (f64, f64) {
    let denom = xyz[0] + 15.0 * xyz[1] + 3.0 * xyz[2];
    (4.0 * xyz[0] / denom, 9.0 * xyz[1] / denom)
}

/// White point chromaticity, taken from the matrix so that r=g=b maps to the
/// origin.
fn white_uv_prime() -> (f64, f64) {
    static WHITE: OnceLock<(f64, f64)> = OnceLock::new();
    *WHITE.get_or_init(|| uv_prime(linear_to_xyz([1.0, 1.0, 1.0])))
}

/// Converts one sRGB pixel to its (u*, v*) coordinates. Black maps to (0, 0).
pub fn srgb_to_uv(p: Rgb8) -> UvPoint {
    let lut = decode_lut();
    let linear = [lut[p.r as usize], lut[p.g as usize], lut[p.b as usize]];
    let xyz = linear_to_xyz(linear);
    // Y of the white point is 1 up to the 7th digit of the matrix; normalize
    // against the actual row sum so white lands on L* = 100.
    let white_y = RGB_TO_XYZ[1][0] + RGB_TO_XYZ[1][1] + RGB_TO_XYZ[1][2];
    let yr = xyz[1] / white_y;
    let lightness = if yr > EPSILON {
        116.0 * yr.cbrt() - 16.0
    } else {
        KAPPA * yr
    };
    if lightness <= 0.0 {
        return UvPoint::default();
    }
    let (up, vp) = uv_prime(xyz);
    let (un, vn) = white_uv_prime();
    UvPoint::new(13.0 * lightness * (up - un), 13.0 * lightness * (vp - vn))
}

/// Per-pixel [`srgb_to_uv`] over a whole image.
pub fn image_to_uv(img: &RgbImage) -> Result<UvPlane, ImageError> {
    let (width, height) = img.dimensions();
    if width == 0 || height == 0 {
        return Err(ImageError::Empty { width, height });
    }
    let data = img
        .as_raw()
        .par_chunks_exact(3)
        .map(|px| srgb_to_uv(Rgb8::new(px[0], px[1], px[2])))
        .collect();
    Ok(UvPlane {
        width,
        height,
        data,
    })
}
