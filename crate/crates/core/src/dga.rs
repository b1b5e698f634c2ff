//! Discriminability-gap attention on a single feature level.
//!
//! Each view is standardized per channel, its local contrast is the windowed
//! variance, and the gap of a component view is the positive part of its
//! contrast minus the composite's. Gaps drive sigmoid attention weights that
//! gate the component views into the composite features; with no gap the
//! weights collapse and the fusion returns (almost exactly) the composite.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::image::{box3, local_moments, Domain, ImageGrid};
use crate::math::{self, sigmoid};

/// Variance floor used by [`normalize_features`].
pub const VARIANCE_FLOOR: f64 = 1e-8;
pub const DEFAULT_WINDOW: usize = 7;

/// The three views at one level, sharing a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub f_i: ImageGrid,
    pub f_l: ImageGrid,
    pub f_r: ImageGrid,
    pub level: usize,
}

impl FeatureStack {
    pub fn new(f_i: ImageGrid, f_l: ImageGrid, f_r: ImageGrid, level: usize) -> Result<Self> {
        f_i.check_same_shape(&f_l)?;
        f_i.check_same_shape(&f_r)?;
        Ok(Self { f_i, f_l, f_r, level })
    }

    /// Views built from log-domain grids, replicating single-channel inputs
    /// to the widest channel count.
    pub fn from_log(i_log: &ImageGrid, l_log: &ImageGrid, r_log: &ImageGrid) -> Result<Self> {
        let c = i_log.channels().max(l_log.channels()).max(r_log.channels());
        let lift = |g: &ImageGrid| -> Result<ImageGrid> { g.lift(c)?.with_domain(Domain::Feature) };
        Self::new(lift(i_log)?, lift(l_log)?, lift(r_log)?, 1)
    }
}

/// Zero-mean, unit-variance per channel over the whole grid.
pub fn normalize_features(f: &ImageGrid) -> ImageGrid {
    let (h, w, c) = f.shape();
    let n = (h * w) as f64;
    let mut mean = vec![0.0; c];
    for px in f.data().chunks_exact(c) {
        mean.iter_mut().zip(px).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; c];
    for px in f.data().chunks_exact(c) {
        for ch in 0..c {
            var[ch] += (px[ch] - mean[ch]) * (px[ch] - mean[ch]);
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt((v / n).max(VARIANCE_FLOOR))).collect();
    let data = f.data().iter().enumerate().map(|(i, &v)| (v - mean[i % c]) * inv_std[i % c]).collect();
    ImageGrid::from_raw(h, w, c, data, Domain::Feature)
}

/// Windowed variance `1/|W| sum ||F(q) - mean_W||^2` over a `k x k` window.
pub fn local_contrast(f: &ImageGrid, k: usize) -> Result<ImageGrid> {
    Ok(local_moments(f, k)?.1)
}

/// `(relu(d_l - d_i), relu(d_r - d_i))`.
pub fn gap_maps(d_i: &ImageGrid, d_l: &ImageGrid, d_r: &ImageGrid) -> Result<(ImageGrid, ImageGrid)> {
    d_i.check_same_shape(d_l)?;
    d_i.check_same_shape(d_r)?;
    let relu_diff = |d: &ImageGrid| {
        let data = d.data().iter().zip(d_i.data()).map(|(a, b)| (a - b).max(0.0)).collect();
        ImageGrid::from_raw(d_i.height(), d_i.width(), d_i.channels(), data, Domain::Feature)
    };
    Ok((relu_diff(d_l), relu_diff(d_r)))
}

/// Learned-weight replacement: a `3 -> 1` convolution over the stacked
/// `(gap, component contrast, composite contrast)` maps.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvKernel {
    /// Odd spatial size.
    pub size: usize,
    /// `weights[input][row * size + col]`.
    pub weights: [Vec<f64>; 3],
    pub bias: f64,
}

impl ConvKernel {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 || self.size % 2 == 0 {
            return Err(invalid("kernel.size", "must be odd"));
        }
        for w in &self.weights {
            if w.len() != self.size * self.size {
                return Err(invalid("kernel.weights", "each input needs size*size taps"));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(invalid("kernel.weights", "taps must be finite"));
            }
        }
        if !self.bias.is_finite() {
            return Err(invalid("kernel.bias", "must be finite"));
        }
        Ok(())
    }
}

/// Parameters of the attention surrogate
/// `sigmoid(box3(w0 * gap + w1 * d_comp + w2 * d_i + b))`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct AlphaParams {
    pub weights: [f64; 3],
    pub bias: f64,
    pub blur: bool,
    /// Replaces the affine surrogate entirely when present.
    pub kernel: Option<ConvKernel>,
}

impl Default for AlphaParams {
    /// Zero gap maps to `sigmoid(-4) ~ 0.018`, a unit gap to one half.
    fn default() -> Self {
        Self { weights: [4.0, 0.0, 0.0], bias: -4.0, blur: true, kernel: None }
    }
}

/// Attention weights in `(0, 1)` from a gap map and the two contrast maps.
pub fn attention_weights(
    delta: &ImageGrid,
    d_comp: &ImageGrid,
    d_i: &ImageGrid,
    params: &AlphaParams,
) -> Result<ImageGrid> {
    delta.check_same_shape(d_comp)?;
    delta.check_same_shape(d_i)?;
    if delta.channels() != 1 {
        return Err(invalid("delta", "gap maps are single-channel"));
    }
    let (h, w) = (delta.height(), delta.width());
    let inputs = [delta.data(), d_comp.data(), d_i.data()];
    let logits = match &params.kernel {
        Some(kernel) => {
            kernel.validate()?;
            convolve3(&inputs, h, w, kernel)
        }
        None => {
            let [a, b, c] = params.weights;
            let mut z: Vec<f64> =
                (0..h * w).map(|p| a * inputs[0][p] + b * inputs[1][p] + c * inputs[2][p] + params.bias).collect();
            if params.blur {
                z = box3(&z, h, w);
            }
            z
        }
    };
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("attention logits are not finite".into()));
    }
    let data = logits.into_iter().map(|z| sigmoid(z).clamp(f64::EPSILON, 1.0 - f64::EPSILON)).collect();
    Ok(ImageGrid::from_raw(h, w, 1, data, Domain::Feature))
}

fn convolve3(inputs: &[&[f64]; 3], h: usize, w: usize, kernel: &ConvKernel) -> Vec<f64> {
    let r = (kernel.size / 2) as isize;
    let mut out = vec![kernel.bias; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (input, taps) in inputs.iter().zip(&kernel.weights) {
                for ky in 0..kernel.size {
                    let yy = (y as isize + ky as isize - r).clamp(0, h as isize - 1) as usize;
                    for kx in 0..kernel.size {
                        let xx = (x as isize + kx as isize - r).clamp(0, w as isize - 1) as usize;
                        acc += taps[ky * kernel.size + kx] * input[yy * w + xx];
                    }
                }
            }
            out[y * w + x] += acc;
        }
    }
    out
}

/// `F_I + alpha_R * F_R + alpha_L * F_L`, alphas broadcast over channels.
pub fn fuse(
    f_i: &ImageGrid,
    f_l: &ImageGrid,
    f_r: &ImageGrid,
    alpha_l: &ImageGrid,
    alpha_r: &ImageGrid,
) -> Result<ImageGrid> {
    f_i.check_same_shape(f_l)?;
    f_i.check_same_shape(f_r)?;
    let (h, w, c) = f_i.shape();
    for a in [alpha_l, alpha_r] {
        if a.shape() != (h, w, 1) {
            return Err(Error::ShapeMismatch { expected: (h, w, 1), found: a.shape() });
        }
    }
    let data = (0..h * w * c)
        .map(|i| {
            let p = i / c;
            f_i.data()[i] + alpha_r.data()[p] * f_r.data()[i] + alpha_l.data()[p] * f_l.data()[i]
        })
        .collect();
    Ok(ImageGrid::from_raw(h, w, c, data, Domain::Feature))
}

/// Contrast, gap and attention maps of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct GapMaps {
    pub d_i: ImageGrid,
    pub d_l: ImageGrid,
    pub d_r: ImageGrid,
    pub delta_l: ImageGrid,
    pub delta_r: ImageGrid,
    pub alpha_l: ImageGrid,
    pub alpha_r: ImageGrid,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DgaConfig {
    pub window: usize,
    pub alpha: AlphaParams,
}

impl Default for DgaConfig {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, alpha: AlphaParams::default() }
    }
}

/// Full level pass: normalize, contrast, gaps, attention and fusion of the
/// normalized views.
pub fn run_level(stack: &FeatureStack, cfg: &DgaConfig) -> Result<(GapMaps, ImageGrid)> {
    let f_i = normalize_features(&stack.f_i);
    let f_l = normalize_features(&stack.f_l);
    let f_r = normalize_features(&stack.f_r);
    let d_i = local_contrast(&f_i, cfg.window)?;
    let d_l = local_contrast(&f_l, cfg.window)?;
    let d_r = local_contrast(&f_r, cfg.window)?;
    let (delta_l, delta_r) = gap_maps(&d_i, &d_l, &d_r)?;
    let alpha_l = attention_weights(&delta_l, &d_l, &d_i, &cfg.alpha)?;
    let alpha_r = attention_weights(&delta_r, &d_r, &d_i, &cfg.alpha)?;
    let fused = fuse(&f_i, &f_l, &f_r, &alpha_l, &alpha_r)?;
    Ok((GapMaps { d_i, d_l, d_r, delta_l, delta_r, alpha_l, alpha_r }, fused))
}
