//! Extended-precision reference evaluators for the loss functions.
//!
//! Inputs are converted exactly from `f64`; every intermediate is carried at
//! [`PREC`] bits and rounded once at the end.

#![allow(dead_code)]

use dashu_float::ops::SquareRoot;
use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

pub type Big = FBig<HalfEven, 2>;

pub const PREC: usize = 128;

pub fn big(x: f64) -> Big {
    Big::try_from(x).expect("finite input").with_precision(PREC).value()
}

pub fn f64_of(x: &Big) -> f64 {
    x.to_f64().value()
}

fn sum(xs: impl IntoIterator<Item = Big>) -> Big {
    xs.into_iter().fold(big(0.0), |a, b| a + b)
}

fn clamp(p: f64, c: f64) -> f64 {
    p.clamp(c, 1.0 - c)
}

pub fn bce(pred: &[f64], target: &[f64], clamp_at: f64) -> Big {
    let one = big(1.0);
    let n = big(pred.len() as f64);
    let total = sum(pred.iter().zip(target).map(|(&p, &t)| {
        let p = big(clamp(p, clamp_at));
        // Skip logarithms whose weight is exactly zero.
        let pos = if t == 0.0 { big(0.0) } else { big(t) * p.ln() };
        let neg = if t == 1.0 { big(0.0) } else { (one.clone() - big(t)) * (one.clone() - p).ln() };
        -(pos + neg)
    }));
    total / n
}

pub fn iou(pred: &[f64], target: &[f64], smooth: f64) -> Big {
    let inter = sum(pred.iter().zip(target).map(|(&p, &t)| big(p) * big(t)));
    let sp = sum(pred.iter().map(|&p| big(p)));
    let st = sum(target.iter().map(|&t| big(t)));
    let s = big(smooth);
    big(1.0) - (inter.clone() + s.clone()) / (sp + st - inter + s)
}

pub fn deep_seg(preds: &[Vec<f64>], gts: &[Vec<f64>], clamp_at: f64, smooth: f64) -> Big {
    let mut weight = big(1.0);
    let mut total = big(0.0);
    for (p, g) in preds.iter().zip(gts) {
        total += weight.clone() * (bce(p, g, clamp_at) + iou(p, g, smooth));
        weight /= big(2.0);
    }
    total
}

pub fn boundary(b: &[f64], b_r: &[f64], gt: &[f64], clamp_at: f64) -> Big {
    bce(b, gt, clamp_at) + bce(b_r, gt, clamp_at)
}

/// Channel-interleaved `features` with `c` channels.
pub fn masked_pool(features: &[f64], c: usize, mask: &[f64], eps: f64) -> Vec<Big> {
    let weight = sum(mask.iter().map(|&m| big(m))) + big(eps);
    let mean: Vec<Big> = (0..c)
        .map(|ch| sum(mask.iter().enumerate().map(|(p, &m)| big(m) * big(features[p * c + ch]))) / weight.clone())
        .collect();
    let norm = sum(mean.iter().map(|v| v.clone() * v.clone())).sqrt();
    mean.into_iter().map(|v| v / norm.clone()).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> Big {
    let dot = sum(a.iter().zip(b).map(|(&x, &y)| big(x) * big(y)));
    let na = sum(a.iter().map(|&x| big(x) * big(x))).sqrt();
    let nb = sum(b.iter().map(|&x| big(x) * big(x))).sqrt();
    dot / (na * nb)
}

pub fn infonce(a: &[f64], b: &[f64], negatives: &[Vec<f64>], tau: f64) -> Big {
    let t = big(tau);
    let pos = (cosine(a, b) / t.clone()).exp();
    let neg = sum(negatives.iter().map(|n| (cosine(a, n) / t.clone()).exp()));
    -(pos.clone() / (pos + neg)).ln()
}

/// Terms `(rec, smooth_l, tv_r, me)` of the decomposition objective for
/// channel-interleaved `img` and `r` and single-channel `l`.
pub fn retinex_terms(img: &[f64], l: &[f64], r: &[f64], h: usize, w: usize, c: usize, eps: f64) -> [Big; 4] {
    let e = big(eps);
    let phi = |x: Big| (x.clone() * x + e.clone() * e.clone()).sqrt() - e.clone();
    let n = big((h * w) as f64);
    let (mut rec, mut smooth, mut tv, mut me) = (big(0.0), big(0.0), big(0.0), big(0.0));
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let dlh = if x + 1 < w { big(l[p + 1]) - big(l[p]) } else { big(0.0) };
            let dlv = if y + 1 < h { big(l[p + w]) - big(l[p]) } else { big(0.0) };
            smooth += dlh.clone() * dlh.clone() + dlv.clone() * dlv.clone();
            for ch in 0..c {
                let q = p * c + ch;
                rec += phi(big(img[q]) - big(l[p]) * big(r[q]));
                let drh = if x + 1 < w { big(r[q + c]) - big(r[q]) } else { big(0.0) };
                let drv = if y + 1 < h { big(r[q + w * c]) - big(r[q]) } else { big(0.0) };
                let (prh, prv) = (phi(drh), phi(drv));
                tv += prh.clone() + prv.clone();
                me += phi(dlh.clone()) * prh + phi(dlv.clone()) * prv;
            }
        }
    }
    [rec / n.clone(), smooth / n.clone(), tv / n.clone(), me / n]
}
