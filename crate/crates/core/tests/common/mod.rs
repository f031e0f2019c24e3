//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use trunkgauge::gmm::{Cov2, GaussianComponent, GmmModel};
use trunkgauge::segmentation::{ClassifierModel, Label};
use trunkgauge::UvPoint;

/// Textbook sRGB -> CIE 1976 u*v* with the tabulated D65 white.
pub fn colorimetry_uv(r: u8, g: u8, b: u8) -> (f64, f64) {
    fn lin(c: u8) -> f64 {
        let c = c as f64 / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    }
    let (r, g, b) = (lin(r), lin(g), lin(b));
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let (xn, yn, zn) = (0.95047, 1.0, 1.08883);
    let yr = y / yn;
    let l = if yr > 0.008856 {
        116.0 * yr.cbrt() - 16.0
    } else {
        903.3 * yr
    };
    let d = x + 15.0 * y + 3.0 * z;
    if l <= 0.0 || d <= 0.0 {
        return (0.0, 0.0);
    }
    let dn = xn + 15.0 * yn + 3.0 * zn;
    let (up, vp) = (4.0 * x / d, 9.0 * y / d);
    let (upn, vpn) = (4.0 * xn / dn, 9.0 * yn / dn);
    (13.0 * l * (up - upn), 13.0 * l * (vp - vpn))
}

/// Bivariate normal density straight from the closed form.
pub fn direct_pdf(x: UvPoint, c: &GaussianComponent) -> f64 {
    let (a, b, d) = (c.cov.xx, c.cov.xy, c.cov.yy);
    let det = a * d - b * b;
    let (dx, dy) = (x.u - c.mean.u, x.v - c.mean.v);
    let q = (d * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
    (-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt())
}

/// `sum_k w_k N(x)` without any log-space tricks.
pub fn naive_density(x: UvPoint, m: &GmmModel) -> f64 {
    m.components()
        .iter()
        .map(|c| c.weight * direct_pdf(x, c))
        .sum()
}

pub fn brute_force_classify(x: UvPoint, m: &ClassifierModel) -> Label {
    if naive_density(x, &m.pads) > naive_density(x, &m.background) {
        Label::Pads
    } else {
        Label::Background
    }
}

/// Random positive-definite covariance with standard deviations in `[lo, hi]`.
pub fn random_cov(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Cov2 {
    let s1: f64 = rng.random_range(lo..hi);
    let s2: f64 = rng.random_range(lo..hi);
    let th: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let (c, s) = (th.cos(), th.sin());
    Cov2::new(
        s1 * s1 * c * c + s2 * s2 * s * s,
        (s1 * s1 - s2 * s2) * c * s,
        s1 * s1 * s * s + s2 * s2 * c * c,
    )
}

pub fn random_model(rng: &mut ChaCha8Rng, k: usize, spread: f64, lo: f64, hi: f64) -> GmmModel {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let comps = raw
        .iter()
        .map(|w| {
            let mean = UvPoint::new(
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
            );
            GaussianComponent::new(w / total, mean, random_cov(rng, lo, hi))
        })
        .collect();
    GmmModel::new(comps).unwrap()
}

/// Draws `n` points from `m` through a Cholesky factor of each covariance.
pub fn sample_mixture(m: &GmmModel, n: usize, seed: u64) -> Vec<UvPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut pick: f64 = rng.random();
            let mut comp = &m.components()[m.mode_count() - 1];
            for c in m.components() {
                if pick < c.weight {
                    comp = c;
                    break;
                }
                pick -= c.weight;
            }
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let l11 = comp.cov.xx.sqrt();
            let l21 = comp.cov.xy / l11;
            let l22 = (comp.cov.yy - l21 * l21).sqrt();
            UvPoint::new(comp.mean.u + l11 * z1, comp.mean.v + l21 * z1 + l22 * z2)
        })
        .collect()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
