//! Threshold segmentation on the composite or on the reflectance gap map,
//! mask metrics, and the cosine sweep that relates decomposition gain to the
//! component geometry.

use alloc::collections::VecDeque;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::dga::{run_level, DgaConfig, FeatureStack, GapMaps};
use crate::error::{invalid, Error, Result};
use crate::image::{to_log_domain, BinaryMask, Domain, ImageGrid, DEFAULT_EPS_LOG};
use crate::math;
use crate::retinex::{decompose, RetinexPair, RetinexWeights, SolverConfig};
use crate::synth::{sweep_rho, SynthSample, SynthSpec};

/// `beta^2` of the F-measure.
pub const BETA_SQ: f64 = 0.3;
const OTSU_BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum SegMode {
    /// Otsu on the grayscale composite; the smaller class is foreground.
    CompositeThreshold,
    /// Otsu on the reflectance gap map, largest component, holes filled.
    GapThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    pub mae: f64,
    pub f_beta: f64,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegResult {
    pub predicted: BinaryMask,
    pub method: SegMode,
    pub metrics: Option<Metrics>,
    pub threshold_used: f64,
}

/// Iteration cap of the decomposition inside the gap-threshold path.
pub const SEG_MAX_ITERS: usize = 150;

/// Everything the gap-threshold path needs besides the image.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SegConfig {
    pub weights: RetinexWeights,
    pub solver: SolverConfig,
    pub dga: DgaConfig,
    pub eps_log: EpsLog,
}

impl Default for SegConfig {
    fn default() -> Self {
        Self {
            weights: RetinexWeights::high_pass(),
            solver: SolverConfig { max_iters: SEG_MAX_ITERS, ..SolverConfig::default() },
            dga: DgaConfig::default(),
            eps_log: EpsLog::default(),
        }
    }
}

/// Offset used before taking logarithms of the components.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct EpsLog(pub f64);

impl Default for EpsLog {
    fn default() -> Self {
        EpsLog(DEFAULT_EPS_LOG)
    }
}

/// Otsu threshold of `values` over a 256-bin histogram spanning their range.
/// Values strictly above the threshold form the upper class.
pub fn otsu_threshold(values: &[f64]) -> Result<f64> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() || !(hi - lo > 1e-12 * hi.abs().max(lo.abs()).max(1e-300)) {
        return Err(Error::FlatInput);
    }
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut hist = [0usize; OTSU_BINS];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(OTSU_BINS - 1);
        hist[b] += 1;
    }
    let total = values.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_bin) = (-1.0, 0);
    for (i, &c) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += c as f64;
        sum0 += i as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * diff * diff;
        if between > best {
            best = between;
            best_bin = i;
        }
    }
    Ok(lo + (best_bin + 1) as f64 * width)
}

/// Largest 4-connected foreground component; empty input stays empty.
pub fn largest_component(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let mut label = vec![0u32; h * w];
    let mut best = (0u32, 0usize);
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.values()[start] || label[start] != 0 {
            continue;
        }
        next += 1;
        label[start] = next;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            for q in neighbours(p, h, w) {
                if mask.values()[q] && label[q] == 0 {
                    label[q] = next;
                    queue.push_back(q);
                }
            }
        }
        if size > best.1 {
            best = (next, size);
        }
    }
    let keep = best.0;
    BinaryMask::new(h, w, label.iter().map(|&l| l != 0 && l == keep).collect()).expect("shape preserved")
}

/// Background pixels not 4-connected to the border become foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let mut outside = vec![false; h * w];
    let mut queue = VecDeque::new();
    for (p, &fg) in mask.values().iter().enumerate() {
        let (y, x) = (p / w, p % w);
        if (y == 0 || x == 0 || y + 1 == h || x + 1 == w) && !fg {
            outside[p] = true;
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        for q in neighbours(p, h, w) {
            if !mask.values()[q] && !outside[q] {
                outside[q] = true;
                queue.push_back(q);
            }
        }
    }
    BinaryMask::new(h, w, outside.iter().map(|o| !o).collect()).expect("shape preserved")
}

fn neighbours(p: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (p / w, p % w);
    [(y > 0).then(|| p - w), (y + 1 < h).then(|| p + w), (x > 0).then(|| p - 1), (x + 1 < w).then(|| p + 1)]
        .into_iter()
        .flatten()
}

/// Mean absolute error, F-measure with `beta^2 = 0.3`, and IoU.
pub fn metrics(pred: &BinaryMask, gt: &BinaryMask) -> Result<Metrics> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::ShapeMismatch {
            expected: (gt.height(), gt.width(), 1),
            found: (pred.height(), pred.width(), 1),
        });
    }
    let (mut tp, mut fp, mut fnn) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            _ => {}
        }
    }
    let n = pred.values().len() as f64;
    let (tp, fp, fnn) = (tp as f64, fp as f64, fnn as f64);
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
    let f_beta = if precision + recall > 0.0 {
        (1.0 + BETA_SQ) * precision * recall / (BETA_SQ * precision + recall)
    } else if tp + fp + fnn == 0.0 {
        1.0
    } else {
        0.0
    };
    let union = tp + fp + fnn;
    let iou = if union > 0.0 { tp / union } else { 1.0 };
    Ok(Metrics { mae: (fp + fnn) / n, f_beta, iou })
}

/// Otsu split of the grayscale composite, taking the smaller class as the object.
pub fn segment_composite(img: &ImageGrid, gt: Option<&BinaryMask>) -> Result<SegResult> {
    let gray = img.channel_mean();
    let t = otsu_threshold(gray.data())?;
    let mut mask = BinaryMask::from_threshold(&gray, t)?;
    if mask.foreground_count() > mask.background_count() {
        mask = mask.complement();
    }
    finish(mask, SegMode::CompositeThreshold, t, gt)
}

/// Gap maps of a decomposition, computed on log-domain views.
pub fn gap_maps_for(img: &ImageGrid, pair: &RetinexPair, cfg: &SegConfig) -> Result<GapMaps> {
    let eps = cfg.eps_log.0;
    let stack = FeatureStack::from_log(
        &to_log_domain(img, eps)?,
        &to_log_domain(&pair.l, eps)?,
        &to_log_domain(&pair.r, eps)?,
    )?;
    Ok(run_level(&stack, &cfg.dga)?.0)
}

/// Otsu on the amplitude `sqrt(delta_r)` of a reflectance gap map, then the
/// largest component with holes filled, shrunk by `margin` pixels to undo the
/// spread of the contrast window. The reported threshold is in gap units.
pub fn segment_gap_map(delta_r: &ImageGrid, margin: usize, gt: Option<&BinaryMask>) -> Result<SegResult> {
    let amp = delta_r.map(Domain::Feature, |v| math::sqrt(v.max(0.0)))?;
    let t = otsu_threshold(amp.data())?;
    let filled = fill_holes(&largest_component(&BinaryMask::from_threshold(&amp, t)?));
    let shrunk = erode(&filled, margin);
    let mask = if shrunk.foreground_count() > 0 { shrunk } else { filled };
    finish(mask, SegMode::GapThreshold, t * t, gt)
}

/// Erosion by a `(2r+1)`-square; pixels beyond the canvas count as foreground.
pub fn erode(mask: &BinaryMask, r: usize) -> BinaryMask {
    if r == 0 {
        return mask.clone();
    }
    let (h, w) = (mask.height(), mask.width());
    // Separable: a pixel survives when its whole row window, then column window, is set.
    let mut rows = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let (a, b) = (x.saturating_sub(r), (x + r).min(w - 1));
            rows[y * w + x] = (a..=b).all(|xx| mask.get(y, xx));
        }
    }
    BinaryMask::from_fn(h, w, |y, x| {
        let (a, b) = (y.saturating_sub(r), (y + r).min(h - 1));
        (a..=b).all(|yy| rows[yy * w + x])
    })
}

fn finish(predicted: BinaryMask, method: SegMode, threshold_used: f64, gt: Option<&BinaryMask>) -> Result<SegResult> {
    let metrics = gt.map(|g| metrics(&predicted, g)).transpose()?;
    Ok(SegResult { predicted, method, metrics, threshold_used })
}

/// Segments `img`; the gap path decomposes it first.
pub fn segment(img: &ImageGrid, mode: SegMode, cfg: &SegConfig, gt: Option<&BinaryMask>) -> Result<SegResult> {
    match mode {
        SegMode::CompositeThreshold => segment_composite(img, gt),
        SegMode::GapThreshold => {
            flat_guard(img)?;
            let pair = decompose(img, &cfg.weights, &cfg.solver)?;
            segment_with_pair(img, &pair, cfg, gt)
        }
    }
}

/// Gap-threshold segmentation from an existing decomposition.
pub fn segment_with_pair(
    img: &ImageGrid,
    pair: &RetinexPair,
    cfg: &SegConfig,
    gt: Option<&BinaryMask>,
) -> Result<SegResult> {
    let maps = gap_maps_for(img, pair, cfg)?;
    segment_gap_map(&maps.delta_r, cfg.dga.window / 2, gt)
}

fn flat_guard(img: &ImageGrid) -> Result<()> {
    let first = img.data()[0];
    if img.data().iter().all(|&v| v == first) {
        return Err(Error::FlatInput);
    }
    Ok(())
}

/// One sample of a cosine sweep.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub target_rho: f64,
    pub achieved_rho: f64,
    pub iou_gap_method: f64,
    pub iou_composite_method: f64,
    pub delta_iou: f64,
    /// Error text when the row could not be evaluated; the numbers are then NaN.
    pub failed: Option<String>,
}

/// Mean gain per target cosine.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TargetSummary {
    pub target_rho: f64,
    pub mean_delta_iou: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub per_target: Vec<TargetSummary>,
    /// Pearson correlation of achieved cosine and IoU gain over all rows.
    pub pearson_r: f64,
    /// Spearman correlation of target cosine and mean gain per target.
    pub spearman_r: f64,
}

/// Both segmentations of one synthetic sample. Never fails: errors are
/// recorded in the row.
pub fn sweep_row(target_rho: f64, sample: &SynthSample, cfg: &SegConfig) -> SweepRow {
    let achieved = sample.achieved.rho.unwrap_or(f64::NAN);
    let eval = || -> Result<(f64, f64)> {
        let comp = segment_composite(&sample.image, Some(&sample.mask))?;
        let gap = segment(&sample.image, SegMode::GapThreshold, cfg, Some(&sample.mask))?;
        let iou = |r: &SegResult| r.metrics.map(|m| m.iou).unwrap_or(f64::NAN);
        Ok((iou(&gap), iou(&comp)))
    };
    match eval() {
        Ok((g, c)) => SweepRow {
            target_rho,
            achieved_rho: achieved,
            iou_gap_method: g,
            iou_composite_method: c,
            delta_iou: g - c,
            failed: None,
        },
        Err(e) => SweepRow {
            target_rho,
            achieved_rho: achieved,
            iou_gap_method: f64::NAN,
            iou_composite_method: f64::NAN,
            delta_iou: f64::NAN,
            failed: Some(e.to_string()),
        },
    }
}

/// Generates and evaluates a sweep sequentially, in target order.
pub fn run_rho_sweep(base: &SynthSpec, targets: &[f64], per_target: usize, cfg: &SegConfig) -> Result<SweepResult> {
    check_targets(targets)?;
    let samples = sweep_rho(base, targets, per_target)?;
    let rows = samples.iter().enumerate().map(|(i, s)| sweep_row(targets[i / per_target.max(1)], s, cfg)).collect();
    summarize(rows)
}

pub fn check_targets(targets: &[f64]) -> Result<()> {
    if targets.is_empty() {
        return Err(invalid("targets", "need at least one target"));
    }
    if targets.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("targets", "targets must be strictly increasing"));
    }
    if targets.iter().any(|t| !(-1.0..=1.0).contains(t)) {
        return Err(invalid("targets", "targets must lie in [-1, 1]"));
    }
    Ok(())
}

/// Aggregates rows (already ordered by target) into per-target means and
/// correlations. Failed rows are kept but excluded from the statistics.
pub fn summarize(rows: Vec<SweepRow>) -> Result<SweepResult> {
    let mut per_target: Vec<TargetSummary> = Vec::new();
    for row in rows.iter().filter(|r| r.failed.is_none()) {
        match per_target.last_mut() {
            Some(t) if t.target_rho == row.target_rho => {
                t.mean_delta_iou += row.delta_iou;
                t.samples += 1;
            }
            _ => {
                per_target.push(TargetSummary { target_rho: row.target_rho, mean_delta_iou: row.delta_iou, samples: 1 })
            }
        }
    }
    per_target.iter_mut().for_each(|t| t.mean_delta_iou /= t.samples as f64);
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.failed.is_none()).collect();
    let xs: Vec<f64> = ok.iter().map(|r| r.achieved_rho).collect();
    let ys: Vec<f64> = ok.iter().map(|r| r.delta_iou).collect();
    let pearson_r = pearson(&xs, &ys);
    let tx: Vec<f64> = per_target.iter().map(|t| t.target_rho).collect();
    let ty: Vec<f64> = per_target.iter().map(|t| t.mean_delta_iou).collect();
    let spearman_r = spearman(&tx, &ty);
    Ok(SweepResult { rows, per_target, pearson_r, spearman_r })
}

/// Sample Pearson correlation; NaN when either side has no spread.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    (sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0)
}

/// Average ranks, ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&ranks(x), &ranks(y))
}
