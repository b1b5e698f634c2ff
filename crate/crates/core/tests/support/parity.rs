//! Random loss instances checked against the extended-precision oracle.
//! Each runner returns the largest relative error seen per evaluator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridekit_core::losses::{
    bce, boundary_loss, deep_seg_loss, infonce, iou_loss, masked_pool, total_loss, ContrastBatch, LossParts, BCE_CLAMP,
    IOU_SMOOTH, POOL_EPS,
};
use ridekit_core::retinex::{retinex_loss, RetinexWeights};
use ridekit_core::{Domain, ImageGrid};

use super::oracle::{self, f64_of, Big};

pub const INSTANCES: usize = 50;
pub const REL: f64 = 1e-10;

#[derive(Debug, Default)]
pub struct Worst(pub Vec<(&'static str, f64)>);

impl Worst {
    fn record(&mut self, what: &'static str, err: f64) {
        match self.0.iter_mut().find(|(n, _)| *n == what) {
            Some((_, e)) => *e = e.max(err),
            None => self.0.push((what, err)),
        }
    }

    fn rel(&mut self, what: &'static str, got: f64, want: &Big) {
        let want = f64_of(want);
        let err = (got - want).abs() / want.abs().max(f64::MIN_POSITIVE);
        self.record(what, if err.is_nan() { f64::INFINITY } else { err });
    }

    fn abs(&mut self, what: &'static str, got: f64, want: &Big) {
        let err = (got - f64_of(want)).abs();
        self.record(what, if err.is_nan() { f64::INFINITY } else { err });
    }
}

fn grid(h: usize, w: usize, c: usize, data: &[f64], domain: Domain) -> ImageGrid {
    ImageGrid::new(h, w, c, data.to_vec(), domain).unwrap()
}

fn probs(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.random_bool(0.05) { 0.0 } else { rng.random::<f64>() }).collect()
}

fn labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| if rng.random_bool(0.4) { 1.0 } else { 0.0 }).collect()
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn segmentation(seed: u64) -> Worst {
    let mut worst = Worst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..INSTANCES {
        let (h, w) = (rng.random_range(2..12), rng.random_range(2..12));
        let n = h * w;
        let p = probs(&mut rng, n);
        let t = labels(&mut rng, n);
        let (pg, tg) = (grid(h, w, 1, &p, Domain::Feature), grid(h, w, 1, &t, Domain::Feature));
        worst.rel("bce", bce(&pg, &tg).unwrap(), &oracle::bce(&p, &t, BCE_CLAMP));
        worst.rel("iou", iou_loss(&pg, &tg).unwrap(), &oracle::iou(&p, &t, IOU_SMOOTH));

        let b_r = probs(&mut rng, n);
        let got = boundary_loss(&pg, &grid(h, w, 1, &b_r, Domain::Feature), &tg).unwrap();
        worst.rel("boundary", got, &oracle::boundary(&p, &b_r, &t, BCE_CLAMP));

        let mut preds = Vec::new();
        let mut gts = Vec::new();
        let mut pg = Vec::new();
        let mut gg = Vec::new();
        let (mut lh, mut lw) = (h * 2, w * 2);
        for _ in 0..4 {
            let (p, g) = (probs(&mut rng, lh * lw), labels(&mut rng, lh * lw));
            pg.push(grid(lh, lw, 1, &p, Domain::Feature));
            gg.push(grid(lh, lw, 1, &g, Domain::Feature));
            preds.push(p);
            gts.push(g);
            (lh, lw) = (lh.div_ceil(2), lw.div_ceil(2));
        }
        let got = deep_seg_loss(&pg, &gg).unwrap();
        worst.rel("deep_seg", got, &oracle::deep_seg(&preds, &gts, BCE_CLAMP, IOU_SMOOTH));
    }
    worst
}

/// Pooled vectors are unit-norm, so their entries are compared absolutely.
pub fn contrastive(seed: u64) -> Worst {
    let mut worst = Worst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..INSTANCES {
        let (h, w, c) = (rng.random_range(2..10), rng.random_range(2..10), rng.random_range(1..6));
        let f: Vec<f64> = (0..h * w * c).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m: Vec<f64> = (0..h * w).map(|_| rng.random::<f64>()).collect();
        let got = masked_pool(&grid(h, w, c, &f, Domain::Feature), &grid(h, w, 1, &m, Domain::Feature)).unwrap();
        let want = oracle::masked_pool(&f, c, &m, POOL_EPS);
        for (g, o) in got.vector.iter().zip(&want) {
            worst.abs("masked_pool", *g, o);
        }

        let d = rng.random_range(2..16);
        let a = unit(&mut rng, d);
        let b = unit(&mut rng, d);
        let negatives: Vec<Vec<f64>> = (0..rng.random_range(1..10)).map(|_| unit(&mut rng, d)).collect();
        let tau = rng.random_range(0.05..2.0);
        let batch = ContrastBatch { f_pos_a: a.clone(), f_pos_b: b.clone(), negatives: negatives.clone(), tau };
        worst.rel("infonce", infonce(&batch).unwrap(), &oracle::infonce(&a, &b, &negatives, tau));

        let parts = LossParts { seg: rng.random(), ret: rng.random(), bnd: rng.random(), con: rng.random() };
        let want =
            [parts.seg, parts.ret, parts.bnd, parts.con].iter().fold(oracle::big(0.0), |s, &v| s + oracle::big(v));
        worst.rel("total", total_loss(&parts), &want);
    }
    worst
}

pub fn retinex(seed: u64) -> Worst {
    let mut worst = Worst::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..INSTANCES {
        let (h, w) = (rng.random_range(2..9), rng.random_range(2..9));
        let c = if rng.random_bool(0.5) { 3 } else { 1 };
        let img: Vec<f64> = (0..h * w * c).map(|_| rng.random::<f64>()).collect();
        let l: Vec<f64> = (0..h * w).map(|_| rng.random_range(0.05..2.0)).collect();
        let r: Vec<f64> = (0..h * w * c).map(|_| rng.random::<f64>()).collect();
        let weights = RetinexWeights::default();
        let got = retinex_loss(
            &grid(h, w, c, &img, Domain::Composite),
            &grid(h, w, 1, &l, Domain::Illumination),
            &grid(h, w, c, &r, Domain::Reflectance),
            &weights,
        )
        .unwrap();
        let [rec, smooth, tv, me] = oracle::retinex_terms(&img, &l, &r, h, w, c, weights.charbonnier_eps);
        worst.rel("rec", got.rec, &rec);
        worst.rel("smooth_l", got.smooth_l, &smooth);
        worst.rel("tv_r", got.tv_r, &tv);
        worst.rel("me", got.me, &me);
        worst.rel("retinex_total", got.total, &(rec + smooth + tv + me));
    }
    worst
}
