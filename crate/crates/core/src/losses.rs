//! Reference evaluators for the segmentation, boundary and contrastive
//! training losses.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::image::{BinaryMask, ImageGrid};
use crate::math::{self, log, log1p};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before logarithms.
pub const BCE_CLAMP: f64 = 1e-7;
/// Additive smoothing of the soft IoU.
pub const IOU_SMOOTH: f64 = 1.0;
/// Guard added to the mask sum in [`masked_pool`].
pub const POOL_EPS: f64 = 1e-6;
/// Number of deep-supervision levels.
pub const LEVELS: usize = 4;
/// Tolerance on the unit norm of contrastive features.
pub const UNIT_NORM_TOL: f64 = 1e-9;
pub const DEFAULT_NEGATIVES: usize = 8;

fn check_pair(pred: &ImageGrid, target: &ImageGrid) -> Result<()> {
    pred.check_same_shape(target)?;
    if pred.channels() != 1 {
        return Err(invalid("pred", "loss maps are single-channel"));
    }
    Ok(())
}

/// Mean binary cross-entropy.
pub fn bce(pred: &ImageGrid, target: &ImageGrid) -> Result<f64> {
    check_pair(pred, target)?;
    let n = pred.data().len() as f64;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(t * log(p) + (1.0 - t) * log1p(-p))
        })
        .sum();
    Ok(sum / n)
}

/// `1 - (sum pt + s) / (sum p + sum t - sum pt + s)`.
pub fn iou_loss(pred: &ImageGrid, target: &ImageGrid) -> Result<f64> {
    check_pair(pred, target)?;
    let (mut inter, mut sp, mut st) = (0.0, 0.0, 0.0);
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        inter += p * t;
        sp += p;
        st += t;
    }
    Ok(1.0 - (inter + IOU_SMOOTH) / (sp + st - inter + IOU_SMOOTH))
}

/// Halves a mask by 2x2 majority vote; ties and partial border blocks with
/// at least half foreground become foreground.
pub fn downsample_majority(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    BinaryMask::from_fn(oh, ow, |y, x| {
        let (mut fg, mut total) = (0, 0);
        for yy in 2 * y..(2 * y + 2).min(h) {
            for xx in 2 * x..(2 * x + 2).min(w) {
                total += 1;
                fg += mask.get(yy, xx) as usize;
            }
        }
        2 * fg >= total
    })
}

/// Ground truth at every supervision level, finest first.
pub fn mask_pyramid(mask: &BinaryMask, levels: usize) -> Vec<BinaryMask> {
    let mut out = vec![mask.clone()];
    while out.len() < levels {
        let next = downsample_majority(out.last().expect("non-empty"));
        out.push(next);
    }
    out
}

/// Multi-scale predictions of the three heads.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    /// Mask predictions, finest level first.
    pub masks: Vec<ImageGrid>,
    pub boundary: ImageGrid,
    pub refl_boundary: ImageGrid,
}

impl PredictionSet {
    pub fn validate(&self) -> Result<()> {
        if self.masks.len() != LEVELS {
            return Err(invalid("masks", alloc::format!("expected {LEVELS} levels, got {}", self.masks.len())));
        }
        for g in self.masks.iter().chain([&self.boundary, &self.refl_boundary]) {
            if g.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Contract("predictions must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// `sum_l 2^-(l-1) [BCE(M_l, G_l) + IoU(M_l, G_l)]`.
pub fn deep_seg_loss(preds: &[ImageGrid], gts: &[ImageGrid]) -> Result<f64> {
    if preds.len() != gts.len() || preds.is_empty() {
        return Err(invalid("levels", "need one ground truth per prediction level"));
    }
    let mut total = 0.0;
    let mut weight = 1.0;
    for (p, g) in preds.iter().zip(gts) {
        total += weight * (bce(p, g)? + iou_loss(p, g)?);
        weight *= 0.5;
    }
    Ok(total)
}

/// `BCE(B, B_gt) + BCE(B_R, B_gt)`.
pub fn boundary_loss(boundary: &ImageGrid, refl_boundary: &ImageGrid, gt: &ImageGrid) -> Result<f64> {
    Ok(bce(boundary, gt)? + bce(refl_boundary, gt)?)
}

/// Output of [`masked_pool`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    /// L2-normalized masked mean; all zeros when `empty`.
    pub vector: Vec<f64>,
    /// The mask had no weight.
    pub empty: bool,
}

/// `sum F M / (sum M + eps)` per channel, then L2-normalized.
pub fn masked_pool(features: &ImageGrid, mask: &ImageGrid) -> Result<Pooled> {
    if mask.channels() != 1 || mask.height() != features.height() || mask.width() != features.width() {
        return Err(Error::ShapeMismatch { expected: (features.height(), features.width(), 1), found: mask.shape() });
    }
    if mask.data().iter().any(|v| *v < 0.0) {
        return Err(Error::Contract("pooling weights must be >= 0".into()));
    }
    let c = features.channels();
    let mut acc = vec![0.0; c];
    let mut weight = 0.0;
    for (px, &m) in features.data().chunks_exact(c).zip(mask.data()) {
        weight += m;
        acc.iter_mut().zip(px).for_each(|(a, v)| *a += m * v);
    }
    acc.iter_mut().for_each(|a| *a /= weight + POOL_EPS);
    let norm = math::sqrt(acc.iter().map(|a| a * a).sum());
    if weight == 0.0 || norm == 0.0 {
        return Ok(Pooled { vector: vec![0.0; c], empty: true });
    }
    acc.iter_mut().for_each(|a| *a /= norm);
    Ok(Pooled { vector: acc, empty: false })
}

/// Positive pair and negatives for the contrastive loss.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContrastBatch {
    pub f_pos_a: Vec<f64>,
    pub f_pos_b: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
    pub tau: f64,
}

impl ContrastBatch {
    pub fn validate(&self) -> Result<()> {
        if self.negatives.is_empty() {
            return Err(invalid("negatives", "need at least one negative"));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(invalid("tau", "temperature must be positive"));
        }
        let d = self.f_pos_a.len();
        for v in [&self.f_pos_a, &self.f_pos_b].into_iter().chain(&self.negatives) {
            if v.len() != d {
                return Err(invalid("features", "all vectors must share a dimension"));
            }
            let n = math::sqrt(v.iter().map(|a| a * a).sum());
            if (n - 1.0).abs() > UNIT_NORM_TOL {
                return Err(invalid("features", alloc::format!("vector norm {n} is not 1")));
            }
        }
        Ok(())
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = math::sqrt(a.iter().map(|x| x * x).sum());
    let nb = math::sqrt(b.iter().map(|x| x * x).sum());
    dot / (na * nb)
}

/// InfoNCE with cosine similarity, evaluated as a log-sum-exp around the
/// largest logit.
pub fn infonce(batch: &ContrastBatch) -> Result<f64> {
    batch.validate()?;
    let pos = cosine(&batch.f_pos_a, &batch.f_pos_b) / batch.tau;
    let logits: Vec<f64> =
        core::iter::once(pos).chain(batch.negatives.iter().map(|n| cosine(&batch.f_pos_a, n) / batch.tau)).collect();
    Ok(logsumexp(&logits) - pos)
}

fn logsumexp(z: &[f64]) -> f64 {
    let (arg, m) = z.iter().copied().enumerate().fold(
        (0, f64::NEG_INFINITY),
        |best, (i, v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        },
    );
    let rest: f64 = z.iter().enumerate().filter(|(i, _)| *i != arg).map(|(_, v)| math::exp(v - m)).sum();
    m + log1p(rest)
}

/// The four loss components of the full objective.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossParts {
    pub seg: f64,
    pub ret: f64,
    pub bnd: f64,
    pub con: f64,
}

/// Unweighted sum of the parts.
pub fn total_loss(parts: &LossParts) -> f64 {
    parts.seg + parts.ret + parts.bnd + parts.con
}
