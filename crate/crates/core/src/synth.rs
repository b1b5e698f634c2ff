//! Two-region synthetic images with prescribed component geometry.
//!
//! Log illumination and log reflectance are drawn independently as per-region
//! Gaussians, so additivity holds exactly and the two components have no
//! population cross-covariance. The illumination mean step and noise are
//! spatially smoothed; the reflectance keeps sharp material edges.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::disc::{verify_theorem, TheoremReport, DEFAULT_EPS_R};
use crate::error::{invalid, Error, Result};
use crate::image::{gaussian_blur, gaussian_kernel, BinaryMask, Domain, ImageGrid};
use crate::math;

/// Foreground shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case", tag = "kind"))]
pub enum MaskShape {
    /// Disk of radius `min(H, W) / 4` at the centre.
    CenteredDisk,
    /// Right half of the canvas.
    HalfPlane,
    /// Star-shaped blob whose outline is drawn from `seed`.
    Blob { seed: u64 },
}

/// Parameters of one synthetic sample. All levels are natural-log values.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub mask_shape: MaskShape,
    /// Foreground-minus-background step of the single-channel log illumination.
    pub delta_l: f64,
    pub delta_r: [f64; 3],
    /// Within-region std of log illumination, after smoothing.
    pub sigma_l: f64,
    pub sigma_r: f64,
    pub base_l: f64,
    pub base_r: [f64; 3],
    /// Gaussian smoothing (px) of the illumination step and noise.
    pub smooth_sigma_l: f64,
    pub seed: u64,
}

/// Per-channel log step of the default camouflage sample.
pub const DEFAULT_STEP: f64 = 0.4;

/// Number of samples in [`default_suite`].
pub const DEFAULT_SUITE_LEN: usize = 20;

/// The default sample is camouflaged: the reflectance step cancels the
/// illumination step in every channel.
impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            height: 128,
            width: 128,
            mask_shape: MaskShape::CenteredDisk,
            delta_l: DEFAULT_STEP,
            delta_r: [-DEFAULT_STEP; 3],
            sigma_l: 0.2,
            sigma_r: 0.02,
            base_l: -1.9,
            base_r: [-0.8; 3],
            smooth_sigma_l: 8.0,
            seed: 0,
        }
    }
}

/// Unit vector along the lifted illumination direction.
const ONES: [f64; 3] = [0.577_350_269_189_625_8; 3];

impl SynthSpec {
    /// Default canvas with mean differences of the given (lifted) norms at
    /// cosine `rho`.
    pub fn with_geometry(norm_l: f64, norm_r: f64, rho: f64) -> Self {
        let mut spec = Self { delta_l: norm_l / math::sqrt(3.0), delta_r: [1.0, -1.0, 0.0], ..Self::default() };
        spec.delta_r = spec.rotated_delta_r(norm_r, rho);
        spec
    }

    /// Foreground and background in exact log-domain cancellation: the
    /// reflectance step is the negated, replicated illumination step.
    pub fn exact_cancellation(delta: f64) -> Self {
        Self { delta_l: delta, delta_r: [-delta; 3], ..Self::default() }
    }

    /// Norm of the illumination step once replicated to three channels.
    pub fn lifted_norm_l(&self) -> f64 {
        self.delta_l.abs() * math::sqrt(3.0)
    }

    pub fn norm_r(&self) -> f64 {
        math::sqrt(self.delta_r.iter().map(|v| v * v).sum())
    }

    /// The same spec with `delta_r` rotated to cosine `rho` against the lifted
    /// illumination step, keeping both norms.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(invalid("rho", "target must lie in [-1, 1]"));
        }
        if self.delta_l == 0.0 {
            return Err(invalid("delta_l", "rho is undefined without an illumination step"));
        }
        Ok(Self { delta_r: self.rotated_delta_r(self.norm_r(), rho), ..self.clone() })
    }

    /// Gram-Schmidt: split off the component of the current `delta_r` along
    /// the illumination axis and recombine at the requested angle.
    fn rotated_delta_r(&self, norm_r: f64, rho: f64) -> [f64; 3] {
        let sign = if self.delta_l < 0.0 { -1.0 } else { 1.0 };
        let axis = ONES.map(|v| sign * v);
        let ortho = orthonormal_against(&self.delta_r, &axis)
            .or_else(|| orthonormal_against(&[1.0, -1.0, 0.0], &axis))
            .expect("fallback direction is not parallel to the axis");
        let s = math::sqrt((1.0 - rho * rho).max(0.0));
        core::array::from_fn(|i| norm_r * (rho * axis[i] + s * ortho[i]))
    }

    pub fn validate(&self) -> Result<()> {
        if self.height < 8 || self.width < 8 {
            return Err(invalid("shape", "canvas must be at least 8x8"));
        }
        if !(self.sigma_l >= 0.0) || !(self.sigma_r >= 0.0) {
            return Err(invalid("sigma", "standard deviations must be >= 0"));
        }
        if !(self.smooth_sigma_l >= 0.0) {
            return Err(invalid("smooth_sigma_l", "must be >= 0"));
        }
        let finite = [self.delta_l, self.base_l, self.sigma_l, self.sigma_r, self.smooth_sigma_l]
            .iter()
            .chain(&self.delta_r)
            .chain(&self.base_r)
            .all(|v| v.is_finite());
        if !finite {
            return Err(invalid("spec", "all parameters must be finite"));
        }
        Ok(())
    }
}

fn orthonormal_against(v: &[f64; 3], axis: &[f64; 3]) -> Option<[f64; 3]> {
    let dot: f64 = v.iter().zip(axis).map(|(a, b)| a * b).sum();
    let o: [f64; 3] = core::array::from_fn(|i| v[i] - dot * axis[i]);
    let n = math::sqrt(o.iter().map(|a| a * a).sum());
    (n > 1e-9).then(|| o.map(|a| a / n))
}

/// Geometry and discriminabilities measured on the ground-truth components.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AchievedStats {
    pub rho: Option<f64>,
    pub xi: Option<f64>,
    pub d_i: f64,
    pub d_l: f64,
    pub d_r: f64,
    /// Largest within-region correlation between log illumination and any
    /// log reflectance channel.
    pub max_cross_corr: f64,
}

/// Generated image with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub image: ImageGrid,
    pub l_gt: ImageGrid,
    pub r_gt: ImageGrid,
    /// Exact log components (`image = exp(l_log + r_log)`).
    pub l_log: ImageGrid,
    pub r_log: ImageGrid,
    pub mask: BinaryMask,
    pub spec: SynthSpec,
    pub achieved: AchievedStats,
    pub report: TheoremReport,
}

/// Draws the foreground mask of a spec.
pub fn make_mask(spec: &SynthSpec) -> BinaryMask {
    let (h, w) = (spec.height, spec.width);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let radius = h.min(w) as f64 / 4.0;
    match spec.mask_shape {
        MaskShape::CenteredDisk => BinaryMask::from_fn(h, w, |y, x| {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            dy * dy + dx * dx <= radius * radius
        }),
        MaskShape::HalfPlane => BinaryMask::from_fn(h, w, |_, x| x >= w / 2),
        MaskShape::Blob { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let oy = (rng.random::<f64>() - 0.5) * 0.2 * h as f64;
            let ox = (rng.random::<f64>() - 0.5) * 0.2 * w as f64;
            let harmonics: Vec<(f64, f64, f64)> = (2..=4)
                .map(|k| (k as f64, 0.12 * rng.random::<f64>(), core::f64::consts::TAU * rng.random::<f64>()))
                .collect();
            BinaryMask::from_fn(h, w, |y, x| {
                let (dy, dx) = (y as f64 - cy - oy, x as f64 - cx - ox);
                let theta = math::atan2(dy, dx);
                let scale: f64 = 1.0 + harmonics.iter().map(|(k, a, p)| a * math::cos(k * theta + p)).sum::<f64>();
                math::sqrt(dy * dy + dx * dx) <= radius * scale
            })
        }
    }
}

/// Realizes a spec. Fails instead of clamping when a composite or
/// reflectance value would leave `[0, 1]`.
pub fn generate(spec: &SynthSpec) -> Result<SynthSample> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let n = h * w;
    let mask = make_mask(spec);
    if mask.foreground_count() < 2 || mask.background_count() < 2 {
        return Err(invalid("mask_shape", "both regions need at least two pixels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };

    // Smoothed illumination step and noise; noise rescaled to unit std.
    // The noise is drawn on a margin-padded canvas so the border padding of
    // the blur does not inflate its variance near the edges.
    let step = mask.to_grid();
    let (step, noise_l) = if spec.smooth_sigma_l > 0.0 {
        let taps = gaussian_kernel(spec.smooth_sigma_l);
        let gain: f64 = taps.iter().map(|t| t * t).sum();
        let m = taps.len() / 2;
        let (ph, pw) = (h + 2 * m, w + 2 * m);
        let white = ImageGrid::from_raw(ph, pw, 1, (0..ph * pw).map(|_| normal()).collect(), Domain::Feature);
        let smooth = gaussian_blur(&white, spec.smooth_sigma_l);
        let noise: Vec<f64> = (0..n).map(|p| smooth.data()[(p / w + m) * pw + p % w + m] / gain).collect();
        (gaussian_blur(&step, spec.smooth_sigma_l), noise)
    } else {
        (step, (0..n).map(|_| normal()).collect())
    };
    let white_r: Vec<f64> = (0..3 * n).map(|_| normal()).collect();
    let l_log: Vec<f64> =
        step.data().iter().zip(&noise_l).map(|(s, z)| spec.base_l + spec.delta_l * s + spec.sigma_l * z).collect();
    let mut r_log = Vec::with_capacity(3 * n);
    for (p, &fg) in mask.values().iter().enumerate() {
        for c in 0..3 {
            let mean = spec.base_r[c] + if fg { spec.delta_r[c] } else { 0.0 };
            r_log.push(mean + spec.sigma_r * white_r[3 * p + c]);
        }
    }

    let max_r = r_log.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max_r > 0.0 {
        return Err(Error::SpecOutOfRange { component: "reflectance", value: math::exp(max_r) });
    }
    let max_i = (0..3 * n).map(|i| l_log[i / 3] + r_log[i]).fold(f64::NEG_INFINITY, f64::max);
    if max_i > 0.0 {
        return Err(Error::SpecOutOfRange { component: "composite", value: math::exp(max_i) });
    }

    let l: Vec<f64> = l_log.iter().map(|&v| math::exp(v)).collect();
    let r: Vec<f64> = r_log.iter().map(|&v| math::exp(v)).collect();
    let image: Vec<f64> = r.iter().enumerate().map(|(i, &rv)| l[i / 3] * rv).collect();

    let l_log = ImageGrid::new(h, w, 1, l_log, Domain::Log)?;
    let r_log = ImageGrid::new(h, w, 3, r_log, Domain::Log)?;
    let report = verify_theorem(&l_log, &r_log, &mask, DEFAULT_EPS_R)?;
    let achieved = AchievedStats {
        rho: report.rho,
        xi: report.xi,
        d_i: report.d_i,
        d_l: report.d_l,
        d_r: report.d_r,
        max_cross_corr: max_cross_correlation(&l_log, &r_log, &mask),
    };
    Ok(SynthSample {
        image: ImageGrid::new(h, w, 3, image, Domain::Composite)?,
        l_gt: ImageGrid::new(h, w, 1, l, Domain::Illumination)?,
        r_gt: ImageGrid::new(h, w, 3, r, Domain::Reflectance)?,
        l_log,
        r_log,
        mask,
        spec: spec.clone(),
        achieved,
        report,
    })
}

/// Largest within-region |Pearson correlation| between the single-channel
/// `l` and any channel of `r`.
pub fn max_cross_correlation(l: &ImageGrid, r: &ImageGrid, mask: &BinaryMask) -> f64 {
    let c = r.channels();
    let mut worst = 0.0f64;
    for want in [true, false] {
        let idx: Vec<usize> = (0..mask.values().len()).filter(|&p| mask.values()[p] == want).collect();
        let n = idx.len() as f64;
        let ml = idx.iter().map(|&p| l.data()[p]).sum::<f64>() / n;
        let vl = idx
            .iter()
            .map(|&p| {
                let d = l.data()[p] - ml;
                d * d
            })
            .sum::<f64>();
        for ch in 0..c {
            let mr = idx.iter().map(|&p| r.data()[p * c + ch]).sum::<f64>() / n;
            let vr = idx
                .iter()
                .map(|&p| {
                    let d = r.data()[p * c + ch] - mr;
                    d * d
                })
                .sum::<f64>();
            let cov = idx.iter().map(|&p| (l.data()[p] - ml) * (r.data()[p * c + ch] - mr)).sum::<f64>();
            if vl > 0.0 && vr > 0.0 {
                worst = worst.max((cov / math::sqrt(vl * vr)).abs());
            }
        }
    }
    worst
}

/// [`DEFAULT_SUITE_LEN`] samples of the default spec with consecutive seeds.
pub fn default_suite(base_seed: u64) -> Result<Vec<SynthSample>> {
    (0..DEFAULT_SUITE_LEN)
        .map(|j| generate(&SynthSpec { seed: sample_seed(base_seed, j), ..SynthSpec::default() }))
        .collect()
}

/// Seed of the `index`-th sample drawn for any target of a sweep.
pub fn sample_seed(base_seed: u64, index: usize) -> u64 {
    base_seed.wrapping_add(index as u64)
}

/// `per_target` samples per target cosine, ordered by target. Sample `j` of
/// every target shares its noise seed, so only the geometry changes.
pub fn sweep_rho(base: &SynthSpec, rho_targets: &[f64], per_target: usize) -> Result<Vec<SynthSample>> {
    let mut out = Vec::with_capacity(rho_targets.len() * per_target);
    for &rho in rho_targets {
        let spec = base.with_rho(rho)?;
        for j in 0..per_target {
            out.push(generate(&SynthSpec { seed: sample_seed(base.seed, j), ..spec.clone() })?);
        }
    }
    Ok(out)
}
