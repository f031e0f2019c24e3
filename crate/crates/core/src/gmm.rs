//! Two-dimensional Gaussian mixture models fitted by Expectation-Maximization.
//!
//! All density work happens in log space; mixtures are combined with a
//! max-shifted log-sum-exp so that far-away points never underflow to zero.

use std::collections::HashSet;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::color_space::UvPoint;
use crate::error::GmmError;

/// Effective component mass below which a component is treated as empty.
pub const EMPTY_COMPONENT_MASS: f64 = 1e-8;

/// Number of empty-component reinitializations before a fit gives up.
pub const MAX_REINITIALIZATIONS: usize = 5;

/// Returned by [`gmm_log_density`] when every component term is `-inf`.
pub const LOG_DENSITY_FLOOR: f64 = f64::MIN;

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Symmetric 2x2 covariance matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 1.0)
    }

    pub fn scaled_identity(s: f64) -> Self {
        Self::new(s, 0.0, s)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mid = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let r = half_diff.hypot(self.xy);
        (mid + r, mid - r)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.xx.is_finite()
            && self.xy.is_finite()
            && self.yy.is_finite()
            && self.xx > 0.0
            && self.det() > 0.0
    }

    pub fn add_diagonal(self, eps: f64) -> Self {
        Self::new(self.xx + eps, self.xy, self.yy + eps)
    }

    /// Row-major `[xx, xy, xy, yy]`.
    pub fn to_row_major(&self) -> [f64; 4] {
        [self.xx, self.xy, self.xy, self.yy]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: UvPoint,
    pub cov: Cov2,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: UvPoint, cov: Cov2) -> Self {
        Self { weight, mean, cov }
    }
}

/// Cached inverse and normalizer for fast log-density evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Prepared {
    log_weight: f64,
    log_norm: f64,
    mean: UvPoint,
    // Inverse covariance entries.
    ixx: f64,
    ixy: f64,
    iyy: f64,
}

impl Prepared {
    fn new(c: &GaussianComponent) -> Self {
        let det = c.cov.det();
        Self {
            log_weight: c.weight.ln(),
            log_norm: -(2.0 * PI).ln() - 0.5 * det.ln(),
            mean: c.mean,
            ixx: c.cov.yy / det,
            ixy: -c.cov.xy / det,
            iyy: c.cov.xx / det,
        }
    }

    #[inline]
    fn log_pdf(&self, x: UvPoint) -> f64 {
        let du = x.u - self.mean.u;
        let dv = x.v - self.mean.v;
        let q = self.ixx * du * du + 2.0 * self.ixy * du * dv + self.iyy * dv * dv;
        self.log_norm - 0.5 * q
    }

    #[inline]
    fn weighted_log_pdf(&self, x: UvPoint) -> f64 {
        self.log_weight + self.log_pdf(x)
    }
}

fn check_component(c: &GaussianComponent) -> Result<(), GmmError> {
    if !c.cov.is_positive_definite() {
        return Err(GmmError::InvalidModel(format!(
            "covariance {:?} is not positive-definite",
            c.cov
        )));
    }
    if !c.mean.u.is_finite() || !c.mean.v.is_finite() {
        return Err(GmmError::InvalidModel(format!("non-finite mean {:?}", c.mean)));
    }
    Ok(())
}

/// Log of the bivariate normal density of `c` at `x`, ignoring the weight.
pub fn gaussian_log_pdf(x: UvPoint, c: &GaussianComponent) -> Result<f64, GmmError> {
    check_component(c)?;
    Ok(Prepared::new(c).log_pdf(x))
}

/// Bivariate normal density of `c` at `x`, ignoring the weight.
pub fn gaussian_pdf(x: UvPoint, c: &GaussianComponent) -> Result<f64, GmmError> {
    gaussian_log_pdf(x, c).map(f64::exp)
}

/// A validated mixture: weights in (0, 1] summing to one, positive-definite
/// covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    components: Vec<GaussianComponent>,
    prepared: Vec<Prepared>,
}

impl GmmModel {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self, GmmError> {
        if components.is_empty() {
            return Err(GmmError::InvalidModel("no components".into()));
        }
        let mut sum = 0.0;
        for c in &components {
            check_component(c)?;
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(GmmError::InvalidModel(format!(
                    "weight {} outside (0, 1]",
                    c.weight
                )));
            }
            sum += c.weight;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(GmmError::InvalidModel(format!("weights sum to {sum}")));
        }
        let prepared = components.iter().map(Prepared::new).collect();
        Ok(Self {
            components,
            prepared,
        })
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    /// Number of mixture modes.
    pub fn mode_count(&self) -> usize {
        self.components.len()
    }

    pub fn log_density(&self, x: UvPoint) -> f64 {
        log_sum_exp(self.prepared.iter().map(|p| p.weighted_log_pdf(x)))
    }

    fn fill_log_terms(&self, x: UvPoint, out: &mut [f64]) -> f64 {
        for (slot, p) in out.iter_mut().zip(&self.prepared) {
            *slot = p.weighted_log_pdf(x);
        }
        log_sum_exp(out.iter().copied())
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return if max == f64::INFINITY {
            f64::INFINITY
        } else {
            LOG_DENSITY_FLOOR
        };
    }
    let s: f64 = terms.map(|t| (t - max).exp()).sum();
    max + s.ln()
}

/// Mixture log-density `log sum_k w_k N(x | mean_k, cov_k)`.
pub fn gmm_log_density(x: UvPoint, m: &GmmModel) -> f64 {
    m.log_density(x)
}

/// Posterior membership matrix, `rows x modes`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    modes: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    /// Builds from rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, GmmError> {
        let modes = rows.first().map_or(0, Vec::len);
        if modes == 0 || rows.iter().any(|r| r.len() != modes) {
            return Err(GmmError::Shape("ragged or empty responsibility rows".into()));
        }
        Ok(Self {
            modes,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.modes
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.data[n * self.modes..(n + 1) * self.modes]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.modes)
    }
}

/// E-step: responsibilities plus the total log-likelihood of `data`.
fn e_step(data: &[UvPoint], m: &GmmModel) -> (Responsibilities, f64) {
    let k = m.mode_count();
    let mut gamma = vec![0.0; data.len() * k];
    let mut point_ll = vec![0.0; data.len()];
    gamma
        .par_chunks_mut(k)
        .zip(point_ll.par_iter_mut())
        .zip(data.par_iter())
        .for_each(|((row, ll), &x)| {
            let lse = m.fill_log_terms(x, row);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max.is_finite() {
                // Normalising by the shifted sum keeps symmetric rows exact.
                for g in row.iter_mut() {
                    *g = (*g - max).exp();
                }
                let sum: f64 = row.iter().sum();
                for g in row.iter_mut() {
                    *g /= sum;
                }
            } else {
                row.fill(1.0 / row.len() as f64);
            }
            *ll = lse;
        });
    // Sequential reduction keeps the total independent of thread scheduling.
    let total = point_ll.iter().sum();
    (
        Responsibilities {
            modes: k,
            data: gamma,
        },
        total,
    )
}

/// Posterior probabilities of each component for each point.
pub fn responsibilities(data: &[UvPoint], m: &GmmModel) -> Result<Responsibilities, GmmError> {
    if data.is_empty() {
        return Err(GmmError::Shape("no data points".into()));
    }
    Ok(e_step(data, m).0)
}

/// Total log-likelihood of `data` under `m`.
pub fn log_likelihood(data: &[UvPoint], m: &GmmModel) -> f64 {
    data.iter().map(|&x| m.log_density(x)).sum()
}

/// Weighted MLE per component; `None` where the component mass is empty.
fn m_step_partial(
    data: &[UvPoint],
    gamma: &Responsibilities,
    reg_eps: f64,
) -> Result<Vec<Option<GaussianComponent>>, GmmError> {
    if data.is_empty() || gamma.rows() != data.len() {
        return Err(GmmError::Shape(format!(
            "{} data points vs {} responsibility rows",
            data.len(),
            gamma.rows()
        )));
    }
    let n = data.len() as f64;
    let k = gamma.modes();
    let mut mass = vec![0.0; k];
    let mut su = vec![0.0; k];
    let mut sv = vec![0.0; k];
    for (x, row) in data.iter().zip(gamma.iter_rows()) {
        for j in 0..k {
            mass[j] += row[j];
            su[j] += row[j] * x.u;
            sv[j] += row[j] * x.v;
        }
    }
    let means: Vec<UvPoint> = (0..k)
        .map(|j| UvPoint::new(su[j] / mass[j], sv[j] / mass[j]))
        .collect();
    let mut cxx = vec![0.0; k];
    let mut cxy = vec![0.0; k];
    let mut cyy = vec![0.0; k];
    for (x, row) in data.iter().zip(gamma.iter_rows()) {
        for j in 0..k {
            let du = x.u - means[j].u;
            let dv = x.v - means[j].v;
            cxx[j] += row[j] * du * du;
            cxy[j] += row[j] * du * dv;
            cyy[j] += row[j] * dv * dv;
        }
    }
    Ok((0..k)
        .map(|j| {
            if mass[j] < EMPTY_COMPONENT_MASS {
                return None;
            }
            let cov = Cov2::new(cxx[j] / mass[j], cxy[j] / mass[j], cyy[j] / mass[j])
                .add_diagonal(reg_eps);
            Some(GaussianComponent::new(mass[j] / n, means[j], cov))
        })
        .collect())
}

/// M-step: re-estimates weights, means and regularized covariances.
pub fn m_step(
    data: &[UvPoint],
    gamma: &Responsibilities,
    reg_eps: f64,
) -> Result<GmmModel, GmmError> {
    let parts = m_step_partial(data, gamma, reg_eps)?;
    let empty: Vec<usize> = parts
        .iter()
        .enumerate()
        .filter_map(|(j, c)| c.is_none().then_some(j))
        .collect();
    if !empty.is_empty() {
        return Err(GmmError::EmptyComponent(empty));
    }
    GmmModel::new(parts.into_iter().flatten().collect())
}

fn sample_mean(data: &[UvPoint]) -> UvPoint {
    let n = data.len() as f64;
    let (su, sv) = data
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.u, b + p.v));
    UvPoint::new(su / n, sv / n)
}

/// Population covariance of `data` (divides by n).
pub fn sample_covariance(data: &[UvPoint]) -> Cov2 {
    let mean = sample_mean(data);
    let n = data.len() as f64;
    let (xx, xy, yy) = data.iter().fold((0.0, 0.0, 0.0), |(a, b, c), p| {
        let du = p.u - mean.u;
        let dv = p.v - mean.v;
        (a + du * du, b + du * dv, c + dv * dv)
    });
    Cov2::new(xx / n, xy / n, yy / n)
}

fn count_distinct_up_to(data: &[UvPoint], limit: usize) -> usize {
    let mut seen = HashSet::new();
    for p in data {
        // +0.0 folds -0.0 onto 0.0.
        seen.insert(((p.u + 0.0).to_bits(), (p.v + 0.0).to_bits()));
        if seen.len() >= limit {
            break;
        }
    }
    seen.len()
}

fn squared_distance(a: UvPoint, b: UvPoint) -> f64 {
    let du = a.u - b.u;
    let dv = a.v - b.v;
    du * du + dv * dv
}

fn kmeans_pp_seeds(data: &[UvPoint], modes: usize, rng: &mut ChaCha8Rng) -> Vec<UvPoint> {
    let mut seeds = Vec::with_capacity(modes);
    seeds.push(data[rng.random_range(0..data.len())]);
    let mut dist: Vec<f64> = data.iter().map(|&p| squared_distance(p, seeds[0])).collect();
    while seeds.len() < modes {
        let total: f64 = dist.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in dist.iter().enumerate() {
            acc += d;
            if d > 0.0 && acc > target {
                pick = Some(i);
                break;
            }
        }
        // Rounding can leave the cumulative sum just short of the target.
        let pick = pick.unwrap_or_else(|| dist.iter().rposition(|&d| d > 0.0).unwrap_or(0));
        let next = data[pick];
        seeds.push(next);
        for (d, &p) in dist.iter_mut().zip(data) {
            *d = d.min(squared_distance(p, next));
        }
    }
    seeds
}

/// Starting model: k-means++ means, shared global covariance, uniform weights.
pub fn init_model(
    data: &[UvPoint],
    modes: usize,
    reg_eps: f64,
    seed: u64,
) -> Result<GmmModel, GmmError> {
    if modes == 0 {
        return Err(GmmError::InvalidConfig("mode count must be positive".into()));
    }
    let found = count_distinct_up_to(data, modes);
    if found < modes {
        return Err(GmmError::DegenerateData {
            needed: modes,
            found,
        });
    }
    let cov = sample_covariance(data).add_diagonal(reg_eps);
    let means = if modes == 1 {
        vec![sample_mean(data)]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        kmeans_pp_seeds(data, modes, &mut rng)
    };
    let w = 1.0 / modes as f64;
    GmmModel::new(
        means
            .into_iter()
            .map(|mean| GaussianComponent::new(w, mean, cov))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub modes: usize,
    pub rel_tol: f64,
    pub max_iters: usize,
    pub reg_eps: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            modes: 1,
            rel_tol: 1e-6,
            max_iters: 500,
            reg_eps: 1e-6,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn with_modes(modes: usize) -> Self {
        Self {
            modes,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), GmmError> {
        if self.modes == 0 {
            return Err(GmmError::InvalidConfig("modes must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(GmmError::InvalidConfig("rel_tol must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(GmmError::InvalidConfig("max_iters must be >= 1".into()));
        }
        if !(self.reg_eps > 0.0) {
            return Err(GmmError::InvalidConfig("reg_eps must be > 0".into()));
        }
        Ok(())
    }
}

/// Diagnostics from [`em_fit`].
///
/// `trace` holds the log-likelihood of every model visited since the last
/// empty-component reinitialization, starting with the initial model; a
/// reinitialization restarts it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations: usize,
    pub log_likelihood: f64,
    pub converged: bool,
    pub reinitializations: usize,
    pub trace: Vec<f64>,
}

fn reseed_empty(
    parts: Vec<Option<GaussianComponent>>,
    data: &[UvPoint],
    global_cov: Cov2,
    rng: &mut ChaCha8Rng,
) -> Result<GmmModel, GmmError> {
    let fresh_weight = 1.0 / parts.len() as f64;
    let mut comps: Vec<GaussianComponent> = parts
        .into_iter()
        .map(|c| {
            c.unwrap_or_else(|| {
                let mean = data[rng.random_range(0..data.len())];
                GaussianComponent::new(fresh_weight, mean, global_cov)
            })
        })
        .collect();
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in &mut comps {
        c.weight /= total;
    }
    GmmModel::new(comps)
}

/// Fits a `cfg.modes`-component mixture to `data` with EM.
///
/// Stops once `|dL| / |L|` drops below `cfg.rel_tol` or after `cfg.max_iters`
/// M-steps. Deterministic for a fixed `(data, cfg)`.
pub fn em_fit(data: &[UvPoint], cfg: &FitConfig) -> Result<(GmmModel, FitReport), GmmError> {
    cfg.validate()?;
    let mut model = init_model(data, cfg.modes, cfg.reg_eps, cfg.seed)?;
    let global_cov = sample_covariance(data).add_diagonal(cfg.reg_eps);
    let mut reseed_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    reseed_rng.set_stream(1);

    let (mut gamma, mut ll) = e_step(data, &model);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    let mut reinitializations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        let parts = m_step_partial(data, &gamma, cfg.reg_eps)?;
        if parts.iter().any(Option::is_none) {
            reinitializations += 1;
            if reinitializations > MAX_REINITIALIZATIONS {
                return Err(GmmError::FitFailure {
                    retries: MAX_REINITIALIZATIONS,
                });
            }
            model = reseed_empty(parts, data, global_cov, &mut reseed_rng)?;
            (gamma, ll) = e_step(data, &model);
            trace.clear();
            trace.push(ll);
            continue;
        }
        model = GmmModel::new(parts.into_iter().flatten().collect())?;
        let prev = ll;
        (gamma, ll) = e_step(data, &model);
        trace.push(ll);
        if (ll - prev).abs() <= cfg.rel_tol * ll.abs() {
            converged = true;
            break;
        }
    }

    Ok((
        model,
        FitReport {
            iterations,
            log_likelihood: ll,
            converged,
            reinitializations,
            trace,
        },
    ))
}
