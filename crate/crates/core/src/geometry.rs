//! Pad extraction and calibrated gap measurement on a segmented mask.
//!
//! Coordinates are pixel indices `(x, y)` with `y` growing downwards; a pixel
//! is represented by its center. The measurement axis runs along the pads'
//! long side (the CD segment), and gaps are measured across it.

use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, MeasureError, Stage};
use crate::segmentation::BinaryMask;

pub type Vec2 = [f64; 2];

/// Minimum eigenvalue ratio for a region to define an orientation.
pub const MIN_AXIS_RATIO: f64 = 1.5;

/// Lower bound applied to the MAD when trimming; half the pixel quantum.
pub const MAD_FLOOR_PX: f64 = 0.5;

fn dot(a: Vec2, b: Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Unit vector perpendicular to `axis`, pointing to increasing x for a
/// vertical axis.
pub fn perpendicular(axis: Vec2) -> Vec2 {
    [axis[1], -axis[0]]
}

/// One 8-connected component of pads pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PadRegion {
    pixels: Vec<(u32, u32)>,
    // Bounding-box corner; statistics are taken relative to it so that they
    // do not depend on where the region sits in the image.
    origin: (u32, u32),
    centroid: Vec2,
    // Population covariance of pixel centers: xx, xy, yy.
    scatter: [f64; 3],
    principal_axis: Vec2,
}

impl PadRegion {
    pub fn from_pixels(pixels: Vec<(u32, u32)>) -> Result<Self, GeometryError> {
        if pixels.is_empty() {
            return Err(GeometryError::DegenerateRegion("no pixels".into()));
        }
        let origin = pixels
            .iter()
            .fold((u32::MAX, u32::MAX), |(ox, oy), &(x, y)| (ox.min(x), oy.min(y)));
        // Integer moments are exact, which makes the axis translation invariant.
        let (mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0i128, 0i128, 0i128, 0i128, 0i128);
        for &(x, y) in &pixels {
            let (x, y) = ((x - origin.0) as i128, (y - origin.1) as i128);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            syy += y * y;
        }
        let n = pixels.len() as i128;
        let nn = (n * n) as f64;
        let scatter = [
            (n * sxx - sx * sx) as f64 / nn,
            (n * sxy - sx * sy) as f64 / nn,
            (n * syy - sy * sy) as f64 / nn,
        ];
        let centroid = [
            origin.0 as f64 + sx as f64 / n as f64,
            origin.1 as f64 + sy as f64 / n as f64,
        ];
        Ok(Self {
            principal_axis: principal_eigenvector(scatter),
            pixels,
            origin,
            centroid,
            scatter,
        })
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn centroid(&self) -> Vec2 {
        self.centroid
    }

    /// Eigenvector of the largest scatter eigenvalue, `y >= 0`.
    pub fn principal_axis(&self) -> Vec2 {
        self.principal_axis
    }

    /// Scatter eigenvalues, largest first.
    pub fn scatter_eigenvalues(&self) -> (f64, f64) {
        let [a, b, c] = self.scatter;
        let mid = 0.5 * (a + c);
        let r = (0.5 * (a - c)).hypot(b);
        (mid + r, (mid - r).max(0.0))
    }

    /// Pixel centers relative to `origin`.
    fn offsets(&self, origin: (u32, u32)) -> impl Iterator<Item = Vec2> + '_ {
        self.pixels.iter().map(move |&(x, y)| {
            [
                x as f64 - origin.0 as f64,
                y as f64 - origin.1 as f64,
            ]
        })
    }
}

fn shared_origin(a: &PadRegion, b: &PadRegion) -> (u32, u32) {
    (a.origin.0.min(b.origin.0), a.origin.1.min(b.origin.1))
}

fn normalize_sign(v: Vec2) -> Vec2 {
    if v[1] < 0.0 || (v[1] == 0.0 && v[0] < 0.0) {
        [-v[0], -v[1]]
    } else {
        v
    }
}

fn principal_eigenvector(s: [f64; 3]) -> Vec2 {
    let [a, b, c] = s;
    if b == 0.0 {
        return if a >= c { [1.0, 0.0] } else { [0.0, 1.0] };
    }
    let mid = 0.5 * (a + c);
    let lambda = mid + (0.5 * (a - c)).hypot(b);
    // Two algebraically equivalent candidates; keep the better conditioned.
    let v1 = [b, lambda - a];
    let v2 = [lambda - c, b];
    let v = if dot(v1, v1) >= dot(v2, v2) { v1 } else { v2 };
    let norm = dot(v, v).sqrt();
    normalize_sign([v[0] / norm, v[1] / norm])
}

/// 8-connected components of the pads label, largest first (ties by scan
/// order of their first pixel).
pub fn connected_components(mask: &BinaryMask) -> Vec<Vec<(u32, u32)>> {
    let (w, h) = mask.dimensions();
    let mut seen = vec![false; w as usize * h as usize];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for y0 in 0..h {
        for x0 in 0..w {
            let i0 = y0 as usize * w as usize + x0 as usize;
            if seen[i0] || !mask.is_pads(x0, y0) {
                continue;
            }
            seen[i0] = true;
            stack.push((x0, y0));
            let mut pixels = Vec::new();
            while let Some((x, y)) = stack.pop() {
                pixels.push((x, y));
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as u32, ny as u32);
                        let ni = ny as usize * w as usize + nx as usize;
                        if !seen[ni] && mask.is_pads(nx, ny) {
                            seen[ni] = true;
                            stack.push((nx, ny));
                        }
                    }
                }
            }
            pixels.sort_unstable_by_key(|&(x, y)| (y, x));
            components.push(pixels);
        }
    }
    // Stable sort keeps scan order among equal areas.
    components.sort_by_key(|c| std::cmp::Reverse(c.len()));
    components
}

/// The two largest pad components, ordered left then right across the
/// larger pad's principal axis.
pub fn extract_pad_regions(
    mask: &BinaryMask,
    min_area: usize,
) -> Result<(PadRegion, PadRegion), GeometryError> {
    let mut components = connected_components(mask);
    let big_enough = components.iter().filter(|c| c.len() >= min_area).count();
    if big_enough < 2 {
        return Err(GeometryError::PadsNotFound {
            count: big_enough,
            min_area,
            areas: components.iter().take(8).map(Vec::len).collect(),
        });
    }
    components.truncate(2);
    let mut it = components.into_iter();
    let larger = PadRegion::from_pixels(it.next().unwrap_or_default())?;
    let smaller = PadRegion::from_pixels(it.next().unwrap_or_default())?;
    let across = perpendicular(larger.principal_axis());
    if dot(larger.centroid(), across) <= dot(smaller.centroid(), across) {
        Ok((larger, smaller))
    } else {
        Ok((smaller, larger))
    }
}

/// Orientation of the pad's long side, rejecting near-isotropic regions.
pub fn estimate_axis(region: &PadRegion) -> Result<Vec2, GeometryError> {
    if region.area() < 2 {
        return Err(GeometryError::DegenerateRegion(format!(
            "area {} too small for an axis",
            region.area()
        )));
    }
    let (major, minor) = region.scatter_eigenvalues();
    if major <= 0.0 {
        return Err(GeometryError::DegenerateRegion("zero scatter".into()));
    }
    if minor > 0.0 && major / minor < MIN_AXIS_RATIO {
        return Err(GeometryError::AmbiguousAxis {
            ratio: major / minor,
        });
    }
    Ok(region.principal_axis())
}

/// One scanline crossing of the gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgePairSample {
    /// Inner edge of the left pad, image coordinates.
    pub a: Vec2,
    /// Inner edge of the right pad, image coordinates.
    pub b: Vec2,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSampling {
    pub samples: Vec<EdgePairSample>,
    pub requested: usize,
    /// Stations actually placed (at most `requested`).
    pub stations: usize,
    /// True when fewer samples than requested came back.
    pub reduced: bool,
}

fn axial_extent(r: &PadRegion, origin: (u32, u32), axis: Vec2) -> (f64, f64) {
    r.offsets(origin)
        .map(|p| dot(p, axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            (lo.min(t), hi.max(t))
        })
}

/// Closed interval of axial coordinates shared by both regions.
pub fn axial_overlap(left: &PadRegion, right: &PadRegion, axis: Vec2) -> Option<(f64, f64)> {
    let origin = shared_origin(left, right);
    let o = [origin.0 as f64, origin.1 as f64];
    overlap_from(left, right, origin, axis).map(|(t0, t1)| (t0 + dot(o, axis), t1 + dot(o, axis)))
}

fn overlap_from(
    left: &PadRegion,
    right: &PadRegion,
    origin: (u32, u32),
    axis: Vec2,
) -> Option<(f64, f64)> {
    let (l0, l1) = axial_extent(left, origin, axis);
    let (r0, r1) = axial_extent(right, origin, axis);
    let (t0, t1) = (l0.max(r0), l1.min(r1));
    (t1 >= t0).then_some((t0, t1))
}

/// Pixels sorted by axial coordinate, as `(t, s)` pairs relative to `origin`.
fn axial_table(region: &PadRegion, origin: (u32, u32), axis: Vec2) -> Vec<(f64, f64)> {
    let across = perpendicular(axis);
    let mut table: Vec<(f64, f64)> = region
        .offsets(origin)
        .map(|p| (dot(p, axis), dot(p, across)))
        .collect();
    table.sort_by(|a, b| a.0.total_cmp(&b.0));
    table
}

fn band(table: &[(f64, f64)], t: f64) -> &[(f64, f64)] {
    let lo = table.partition_point(|e| e.0 < t - 0.5);
    let hi = table.partition_point(|e| e.0 < t + 0.5);
    &table[lo..hi]
}

/// Inner face of a pad's slice of one scanline band. A full run of `n`
/// pixels centred on `m` spans `m +- n/2`; taking count and mean rather than
/// the outermost pixel averages ragged rows instead of picking their extreme.
fn band_face(band: &[(f64, f64)], dir: f64) -> f64 {
    let n = band.len() as f64;
    let mean = band.iter().map(|e| e.1).sum::<f64>() / n;
    mean + dir * 0.5 * n
}

/// Casts `count` scanlines across the gap at evenly spaced stations over the
/// pads' shared axial extent and records the inner-edge crossing of each.
pub fn sample_edge_pairs(
    left: &PadRegion,
    right: &PadRegion,
    axis: Vec2,
    count: usize,
) -> Result<EdgeSampling, GeometryError> {
    if count == 0 {
        return Err(GeometryError::InvalidParameter(
            "scanline count must be positive".into(),
        ));
    }
    let origin = shared_origin(left, right);
    let (t0, t1) = overlap_from(left, right, origin, axis).ok_or(GeometryError::NoOverlap)?;
    let available = (t1 - t0 + 1e-9).floor() as usize + 1;
    let stations = count.min(available);
    let across = perpendicular(axis);
    let left_table = axial_table(left, origin, axis);
    let right_table = axial_table(right, origin, axis);
    let o = [origin.0 as f64, origin.1 as f64];

    let mut samples = Vec::with_capacity(stations);
    for i in 0..stations {
        let t = if stations == 1 {
            0.5 * (t0 + t1)
        } else {
            t0 + (t1 - t0) * i as f64 / (stations - 1) as f64
        };
        let lb = band(&left_table, t);
        let rb = band(&right_table, t);
        if lb.is_empty() || rb.is_empty() {
            continue;
        }
        let sa = band_face(lb, 1.0);
        let sb = band_face(rb, -1.0);
        let gap = sb - sa;
        if gap <= 0.0 {
            continue;
        }
        let point = |s: f64| {
            [
                o[0] + t * axis[0] + s * across[0],
                o[1] + t * axis[1] + s * across[1],
            ]
        };
        samples.push(EdgePairSample {
            a: point(sa),
            b: point(sb),
            gap,
        });
    }
    Ok(EdgeSampling {
        reduced: samples.len() < count,
        samples,
        requested: count,
        stations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TrimPolicy {
    /// Plain arithmetic mean of every sample.
    Disabled,
    /// Drop samples farther than `k * max(MAD, 0.5 px)` from the median.
    Mad { k: f64 },
}

impl Default for TrimPolicy {
    fn default() -> Self {
        TrimPolicy::Mad { k: 3.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEstimate {
    pub gap_px: f64,
    pub used: usize,
    pub trimmed: usize,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Averaged gap over scanline samples, optionally after MAD trimming.
pub fn mean_gap_pixels(gaps: &[f64], trim: TrimPolicy) -> Result<GapEstimate, GeometryError> {
    if gaps.is_empty() {
        return Err(GeometryError::NoSamples);
    }
    let keep: Vec<f64> = match trim {
        TrimPolicy::Disabled => gaps.to_vec(),
        TrimPolicy::Mad { k } => {
            let mut sorted = gaps.to_vec();
            sorted.sort_by(f64::total_cmp);
            let med = median(&sorted);
            let mut dev: Vec<f64> = sorted.iter().map(|g| (g - med).abs()).collect();
            dev.sort_by(f64::total_cmp);
            let limit = k * median(&dev).max(MAD_FLOOR_PX);
            gaps.iter().copied().filter(|g| (g - med).abs() <= limit).collect()
        }
    };
    let gap_px = keep.iter().sum::<f64>() / keep.len() as f64;
    Ok(GapEstimate {
        gap_px,
        used: keep.len(),
        trimmed: gaps.len() - keep.len(),
    })
}

/// Extent of the region along `axis`, counting whole pixels.
pub fn pad_height_pixels(region: &PadRegion, axis: Vec2) -> f64 {
    let (lo, hi) = axial_extent(region, region.origin, axis);
    hi - lo + 1.0
}

/// Length along `axis` of the uniform strip with the same second moment,
/// `sqrt(12 var + 1)`; the `+1` restores the variance of the pixel footprint.
/// Only the interquartile slab across the axis is used, which keeps ragged
/// side edges from reweighting the rows.
pub fn pad_height_moment(region: &PadRegion, axis: Vec2) -> f64 {
    let table = axial_table(region, region.origin, axis);
    let mut side: Vec<f64> = table.iter().map(|e| e.1).collect();
    side.sort_by(f64::total_cmp);
    let n = side.len();
    // Half-pixel inset keeps the cut between pixel columns on near-square grids.
    let (q1, q3) = (side[n / 4] + 0.5, side[(3 * n) / 4] - 0.5);
    let mut along: Vec<f64> = table
        .iter()
        .filter(|e| (q1..=q3).contains(&e.1))
        .map(|e| e.0)
        .collect();
    if along.len() < 2 {
        along = table.iter().map(|e| e.0).collect();
    }
    let m = along.len() as f64;
    let mean = along.iter().sum::<f64>() / m;
    let var = along.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / m;
    (12.0 * var + 1.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeightMethod {
    /// `max - min + 1` of the axial projections.
    Extent,
    /// Second-moment estimate, see [`pad_height_moment`].
    Moment,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MinArea {
    Pixels(usize),
    /// Fraction of the image's pixel count.
    Fraction(f64),
}

impl MinArea {
    pub fn resolve(self, width: u32, height: u32) -> usize {
        match self {
            MinArea::Pixels(n) => n,
            MinArea::Fraction(f) => ((width as f64 * height as f64) * f).ceil() as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureConfig {
    /// Upper bound on scanline stations.
    pub scanlines: usize,
    pub trim: TrimPolicy,
    pub min_area: MinArea,
    pub height_method: HeightMethod,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            scanlines: 50,
            trim: TrimPolicy::default(),
            min_area: MinArea::Fraction(0.0005),
            height_method: HeightMethod::Moment,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementResult {
    pub gap_px: f64,
    pub pad_height_px: f64,
    pub pad_height_mm: f64,
    pub scale_mm_per_px: f64,
    pub diameter_mm: f64,
    pub samples_used: usize,
    pub samples_trimmed: usize,
    /// Stations requested after the overlap cap.
    pub stations_requested: usize,
    pub reduced: bool,
    pub axis: Vec2,
}

/// Full mask-to-millimeters measurement.
pub fn measure_diameter(
    mask: &BinaryMask,
    pad_height_mm: f64,
    cfg: &MeasureConfig,
) -> Result<MeasurementResult, MeasureError> {
    if !(pad_height_mm > 0.0 && pad_height_mm.is_finite()) {
        return Err(MeasureError::new(
            Stage::Calibration,
            GeometryError::InvalidParameter(format!("pad height {pad_height_mm} mm")),
        ));
    }
    let min_area = cfg.min_area.resolve(mask.width(), mask.height());
    let (left, right) = extract_pad_regions(mask, min_area)
        .map_err(|e| MeasureError::new(Stage::Extraction, e))?;
    let reference = if left.area() >= right.area() {
        &left
    } else {
        &right
    };
    let axis = estimate_axis(reference).map_err(|e| MeasureError::new(Stage::Axis, e))?;

    let (t0, t1) = overlap_from(&left, &right, shared_origin(&left, &right), axis)
        .ok_or_else(|| MeasureError::new(Stage::Sampling, GeometryError::NoOverlap))?;
    let dense = (0.8 * (t1 - t0 + 1.0)).floor() as usize;
    let stations = cfg.scanlines.min(dense).max(1);
    let sampling = sample_edge_pairs(&left, &right, axis, stations)
        .map_err(|e| MeasureError::new(Stage::Sampling, e))?;
    let gaps: Vec<f64> = sampling.samples.iter().map(|s| s.gap).collect();
    let estimate =
        mean_gap_pixels(&gaps, cfg.trim).map_err(|e| MeasureError::new(Stage::Averaging, e))?;

    let pad_height_px = match cfg.height_method {
        HeightMethod::Extent => pad_height_pixels(reference, axis),
        HeightMethod::Moment => pad_height_moment(reference, axis),
    };
    Ok(MeasurementResult {
        gap_px: estimate.gap_px,
        pad_height_px,
        pad_height_mm,
        scale_mm_per_px: pad_height_mm / pad_height_px,
        diameter_mm: estimate.gap_px * pad_height_mm / pad_height_px,
        samples_used: estimate.used,
        samples_trimmed: estimate.trimmed,
        stations_requested: stations,
        reduced: sampling.reduced,
        axis,
    })
}
