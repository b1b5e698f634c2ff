//! Regional discriminability and the decomposition gap bound.
//!
//! For a log-domain component `X` observed on a foreground/background
//! partition, the discriminability is the trace-ratio Fisher surrogate
//!
//! ```text
//! D(X) = ||mu_f - mu_b||^2 / (tr Sigma_f + tr Sigma_b + eps_R)
//! ```
//!
//! When the composite is the sum of an illumination and a reflectance
//! component with no within-region cross-covariance, the component
//! discriminabilities satisfy
//!
//! ```text
//! D(R) + D(L) >= D(I) (1 + 2 xi) / (1 + 2 rho xi)
//! ```
//!
//! where `rho` is the cosine between the two mean differences and `xi` their
//! norm balance. This module computes every quantity in that statement, both
//! from pixel samples and in closed form from population parameters.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::image::{BinaryMask, ImageGrid};
use crate::math;

pub const DEFAULT_EPS_R: f64 = 1e-8;
/// Threshold of the visual-entanglement diagnostic `D(I) <= eps`.
pub const DEFAULT_ENTANGLEMENT_EPS: f64 = 0.05;
/// `1 + 2 rho xi` at or below this value makes the factor unbounded.
pub const FACTOR_POLE_TOL: f64 = 1e-12;
/// Relative slack tolerated before the inequality is declared violated.
pub const HOLDS_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Region {
    Foreground,
    Background,
}

impl Region {
    fn name(self) -> &'static str {
        match self {
            Region::Foreground => "foreground",
            Region::Background => "background",
        }
    }
}

/// Mean vector and covariance trace of a component over one region.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegionStats {
    pub mean: Vec<f64>,
    pub scatter_trace: f64,
    pub pixel_count: usize,
}

/// Population statistics (1/n normalization) of `x` over `region` of `mask`.
pub fn region_stats(x: &ImageGrid, mask: &BinaryMask, region: Region) -> Result<RegionStats> {
    mask.check_grid(x)?;
    let want = region == Region::Foreground;
    let c = x.channels();
    let mut mean = vec![0.0; c];
    let mut count = 0usize;
    for (px, &m) in x.data().chunks_exact(c).zip(mask.values()) {
        if m == want {
            count += 1;
            mean.iter_mut().zip(px).for_each(|(a, v)| *a += v);
        }
    }
    if count < 2 {
        return Err(Error::RegionTooSmall { region: region.name(), pixels: count });
    }
    mean.iter_mut().for_each(|a| *a /= count as f64);
    let mut trace = 0.0;
    for (px, &m) in x.data().chunks_exact(c).zip(mask.values()) {
        if m == want {
            trace += px.iter().zip(&mean).map(|(v, mu)| (v - mu) * (v - mu)).sum::<f64>();
        }
    }
    Ok(RegionStats { mean, scatter_trace: trace / count as f64, pixel_count: count })
}

/// Trace-ratio discriminability of a foreground/background pair.
pub fn discriminability(fg: &RegionStats, bg: &RegionStats, eps_r: f64) -> Result<f64> {
    if !(eps_r > 0.0) {
        return Err(invalid("eps_r", "must be positive"));
    }
    if fg.mean.len() != bg.mean.len() {
        return Err(invalid("stats", "foreground and background dimensions differ"));
    }
    let num = sq_dist(&fg.mean, &bg.mean);
    Ok(ratio(num, fg.scatter_trace + bg.scatter_trace, eps_r))
}

fn ratio(num: f64, traces: f64, eps_r: f64) -> f64 {
    num / (traces + eps_r)
}

/// Discriminability gap `D(X) - D(I)`.
pub fn gap(d_x: f64, d_i: f64) -> f64 {
    d_x - d_i
}

/// Which mean difference vanished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Degenerate {
    Illumination,
    Reflectance,
    Both,
}

/// Angle and balance between the two mean-difference vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Geometry {
    pub rho: f64,
    pub xi: f64,
}

/// `rho = cos(delta_l, delta_r)` and `xi = |dl||dr| / (|dl|^2 + |dr|^2)`.
pub fn correlation_geometry(delta_l: &[f64], delta_r: &[f64]) -> core::result::Result<Geometry, Degenerate> {
    assert_eq!(delta_l.len(), delta_r.len(), "delta vectors must share a dimension");
    let nl = norm(delta_l);
    let nr = norm(delta_r);
    match (nl == 0.0, nr == 0.0) {
        (true, true) => return Err(Degenerate::Both),
        (true, false) => return Err(Degenerate::Illumination),
        (false, true) => return Err(Degenerate::Reflectance),
        _ => {}
    }
    let dot: f64 = delta_l.iter().zip(delta_r).map(|(a, b)| a * b).sum();
    let rho = (dot / (nl * nr)).clamp(-1.0, 1.0);
    // Scale-free form avoids overflow for extreme norms.
    let t = nl / nr;
    let xi = (t / (1.0 + t * t)).min(0.5);
    Ok(Geometry { rho, xi })
}

/// Multiplier of `D(I)` in the gap bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundFactor {
    Finite(f64),
    /// `1 + 2 rho xi` vanishes: the composite carries no mean difference.
    Infinite,
}

impl BoundFactor {
    pub fn value(self) -> f64 {
        match self {
            BoundFactor::Finite(v) => v,
            BoundFactor::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, BoundFactor::Infinite)
    }
}

/// `(1 + 2 xi) / (1 + 2 rho xi)`.
pub fn bound_factor(rho: f64, xi: f64) -> BoundFactor {
    let den = 1.0 + 2.0 * rho * xi;
    if den <= FACTOR_POLE_TOL {
        BoundFactor::Infinite
    } else {
        BoundFactor::Finite((1.0 + 2.0 * xi) / den)
    }
}

/// Every quantity of the bound for one configuration, with the verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoremReport {
    pub d_i: f64,
    pub d_l: f64,
    pub d_r: f64,
    /// Illumination mean difference, lifted to the composite's dimension.
    pub delta_l: Vec<f64>,
    pub delta_r: Vec<f64>,
    /// True when `delta_l` was replicated from a single-channel illumination.
    pub delta_l_lifted: bool,
    pub rho: Option<f64>,
    pub xi: Option<f64>,
    pub degenerate: Option<Degenerate>,
    pub bound_factor: BoundFactor,
    pub lhs: f64,
    /// `D(I) * factor`; `None` when the factor is unbounded.
    pub rhs: Option<f64>,
    pub holds: bool,
    pub slack: Option<f64>,
    pub eps_r: f64,
    pub entanglement_eps: f64,
    /// `D(I) <= entanglement_eps`.
    pub entangled: bool,
    /// Largest within-region `|Cov(L, R)|` entry; zero in population mode.
    pub max_cross_cov: f64,
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    d_i: f64,
    d_l: f64,
    d_r: f64,
    delta_l: Vec<f64>,
    delta_r: Vec<f64>,
    delta_l_lifted: bool,
    eps_r: f64,
    max_cross_cov: f64,
) -> TheoremReport {
    let (rho, xi, degenerate, factor) = match correlation_geometry(&delta_l, &delta_r) {
        Ok(g) => (Some(g.rho), Some(g.xi), None, bound_factor(g.rho, g.xi)),
        // A vanishing side is the xi -> 0 limit, where the factor is one.
        Err(d) => (None, None, Some(d), BoundFactor::Finite(1.0)),
    };
    let lhs = d_l + d_r;
    let (rhs, holds, slack) = match factor {
        BoundFactor::Finite(f) => {
            let rhs = d_i * f;
            (Some(rhs), lhs >= rhs - HOLDS_REL_TOL * rhs.max(1.0), Some(lhs - rhs))
        }
        BoundFactor::Infinite => (None, true, None),
    };
    TheoremReport {
        d_i,
        d_l,
        d_r,
        delta_l,
        delta_r,
        delta_l_lifted,
        rho,
        xi,
        degenerate,
        bound_factor: factor,
        lhs,
        rhs,
        holds,
        slack,
        eps_r,
        entanglement_eps: DEFAULT_ENTANGLEMENT_EPS,
        entangled: d_i <= DEFAULT_ENTANGLEMENT_EPS,
        max_cross_cov,
    }
}

/// Checks the bound on sampled log-domain components, forming the composite
/// as `L + R` (a single-channel `L` is replicated across `R`'s channels).
pub fn verify_theorem(l_log: &ImageGrid, r_log: &ImageGrid, mask: &BinaryMask, eps_r: f64) -> Result<TheoremReport> {
    if l_log.height() != r_log.height() || l_log.width() != r_log.width() {
        return Err(Error::ShapeMismatch { expected: r_log.shape(), found: l_log.shape() });
    }
    let c = r_log.channels();
    let l_lift = l_log.lift(c)?;
    let composite_data: Vec<f64> = l_lift.data().iter().zip(r_log.data()).map(|(a, b)| a + b).collect();
    let composite = ImageGrid::new(r_log.height(), r_log.width(), c, composite_data, crate::image::Domain::Log)?;

    let stats = |g: &ImageGrid| -> Result<(RegionStats, RegionStats)> {
        Ok((region_stats(g, mask, Region::Foreground)?, region_stats(g, mask, Region::Background)?))
    };
    let (lf, lb) = stats(l_log)?;
    let (rf, rb) = stats(r_log)?;
    let (i_f, i_b) = stats(&composite)?;
    let d_l = discriminability(&lf, &lb, eps_r)?;
    let d_r = discriminability(&rf, &rb, eps_r)?;
    let d_i = discriminability(&i_f, &i_b, eps_r)?;

    let mut delta_l: Vec<f64> = lf.mean.iter().zip(&lb.mean).map(|(a, b)| a - b).collect();
    let lifted = delta_l.len() != c;
    if lifted {
        delta_l = vec![delta_l[0]; c];
    }
    let delta_r = rf.mean.iter().zip(&rb.mean).map(|(a, b)| a - b).collect();

    let cross = max_cross_covariance(l_log, r_log, mask, [(&lf, &rf), (&lb, &rb)]);
    Ok(assemble(d_i, d_l, d_r, delta_l, delta_r, lifted, eps_r, cross))
}

fn max_cross_covariance(
    l: &ImageGrid,
    r: &ImageGrid,
    mask: &BinaryMask,
    stats: [(&RegionStats, &RegionStats); 2],
) -> f64 {
    let (cl, cr) = (l.channels(), r.channels());
    let mut worst = 0.0f64;
    for (want, (ls, rs)) in [true, false].into_iter().zip(stats) {
        let mut acc = vec![0.0; cl * cr];
        for (p, &m) in mask.values().iter().enumerate() {
            if m != want {
                continue;
            }
            for i in 0..cl {
                let dl = l.data()[p * cl + i] - ls.mean[i];
                for j in 0..cr {
                    acc[i * cr + j] += dl * (r.data()[p * cr + j] - rs.mean[j]);
                }
            }
        }
        let n = ls.pixel_count as f64;
        worst = acc.iter().fold(worst, |m, v| m.max((v / n).abs()));
    }
    worst
}

/// Closed-form configuration satisfying additivity and zero cross-covariance
/// exactly. Traces are of the components as they enter the composite.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PopulationConfig {
    pub delta_l: Vec<f64>,
    pub delta_r: Vec<f64>,
    /// `[foreground, background]` covariance traces of the illumination.
    pub trace_l: [f64; 2],
    pub trace_r: [f64; 2],
}

impl PopulationConfig {
    /// Three-dimensional mean differences with standard-normal entries and
    /// traces uniform in `(0, 10]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let draw_vec = |rng: &mut R| -> Vec<f64> { (0..3).map(|_| StandardNormal.sample(rng)).collect() };
        let delta_l = draw_vec(rng);
        let delta_r = draw_vec(rng);
        let trace = |rng: &mut R| 10.0 * (1.0 - rng.random::<f64>());
        Self { delta_l, delta_r, trace_l: [trace(rng), trace(rng)], trace_r: [trace(rng), trace(rng)] }
    }
}

/// The bound evaluated from population parameters: the composite's mean
/// difference is `delta_l + delta_r` and its traces are the sums of the
/// component traces.
pub fn verify_population(cfg: &PopulationConfig, eps_r: f64) -> Result<TheoremReport> {
    if !(eps_r > 0.0) {
        return Err(invalid("eps_r", "must be positive"));
    }
    if cfg.delta_r.is_empty() {
        return Err(invalid("delta_r", "must be non-empty"));
    }
    if cfg.trace_l.iter().chain(&cfg.trace_r).any(|t| !(*t >= 0.0)) {
        return Err(invalid("trace", "traces must be >= 0"));
    }
    let dim = cfg.delta_r.len();
    let (delta_l, lifted) = match cfg.delta_l.len() {
        n if n == dim => (cfg.delta_l.clone(), false),
        1 => (vec![cfg.delta_l[0]; dim], true),
        _ => return Err(invalid("delta_l", "dimension must be 1 or match delta_r")),
    };
    let delta_i: Vec<f64> = delta_l.iter().zip(&cfg.delta_r).map(|(a, b)| a + b).collect();
    let w_l = cfg.trace_l[0] + cfg.trace_l[1];
    let w_r = cfg.trace_r[0] + cfg.trace_r[1];
    let d_l = ratio(norm2(&delta_l), w_l, eps_r);
    let d_r = ratio(norm2(&cfg.delta_r), w_r, eps_r);
    let d_i = ratio(norm2(&delta_i), w_l + w_r, eps_r);
    Ok(assemble(d_i, d_l, d_r, delta_l, cfg.delta_r.clone(), lifted, eps_r, 0.0))
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

fn norm(v: &[f64]) -> f64 {
    math::sqrt(norm2(v))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
