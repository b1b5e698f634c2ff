//! Variational illumination/reflectance decomposition.
//!
//! The objective couples a reconstruction term with smoothness priors on the
//! two components and a mutual-exclusivity penalty on shared edges:
//!
//! ```text
//! rec     = 1/N sum_p sum_c  phi(I_c - L R_c)
//! smoothL = 1/N sum_p        (dh L)^2 + (dv L)^2
//! tvR     = 1/N sum_p sum_c  phi(dh R_c) + phi(dv R_c)
//! me      = 1/N sum_p sum_c  phi(dh L) phi(dh R_c) + phi(dv L) phi(dv R_c)
//! ```
//!
//! with `phi` the Charbonnier function and forward differences that vanish on
//! the last column/row. The solver works on unconstrained parameters
//! `L = softplus(u)`, `R = sigmoid(v)`, so every iterate stays in range.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::image::{gaussian_blur, BinaryMask, Domain, ImageGrid};
use crate::math::{self, charbonnier, logit, sigmoid, softplus_and_slope, softplus_inv};

/// Weights of the four objective terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct RetinexWeights {
    pub w_rec: f64,
    pub w_smooth_l: f64,
    pub w_tv_r: f64,
    pub w_me: f64,
    pub charbonnier_eps: f64,
}

impl Default for RetinexWeights {
    fn default() -> Self {
        Self { w_rec: 1.0, w_smooth_l: 1.0, w_tv_r: 1.0, w_me: 1.0, charbonnier_eps: 1e-3 }
    }
}

impl RetinexWeights {
    /// Stiff illumination and a tight reconstruction term, so that `R` keeps
    /// every edge a smooth envelope cannot explain. The segmentation pipeline
    /// runs with these weights.
    pub fn high_pass() -> Self {
        Self { w_rec: 1e3, w_smooth_l: 1e4, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in
            [("w_rec", self.w_rec), ("w_smooth_l", self.w_smooth_l), ("w_tv_r", self.w_tv_r), ("w_me", self.w_me)]
        {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(invalid(name, "weights must be finite and >= 0"));
            }
        }
        if !(self.charbonnier_eps > 0.0) || !self.charbonnier_eps.is_finite() {
            return Err(invalid("charbonnier_eps", "must be positive"));
        }
        Ok(())
    }
}

/// Stopping and step parameters for [`decompose`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_size: f64,
    pub tol_rel: f64,
    /// Seeds the optional jitter of the initial parameters.
    pub seed: u64,
    /// Amplitude of a uniform perturbation added to the initial parameters; zero disables it.
    pub init_jitter: f64,
    /// Curvature pairs kept for limited-memory quasi-Newton directions; zero
    /// gives plain gradient descent.
    pub history: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { max_iters: 2000, step_size: 0.05, tol_rel: 1e-7, seed: 0, init_jitter: 0.0, history: 8 }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(invalid("max_iters", "must be >= 1"));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(invalid("step_size", "must be positive"));
        }
        if !(self.tol_rel >= 0.0) {
            return Err(invalid("tol_rel", "must be >= 0"));
        }
        if !(self.init_jitter >= 0.0) || !self.init_jitter.is_finite() {
            return Err(invalid("init_jitter", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Per-term objective values (already weighted in `total`, unweighted in the terms).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossBreakdown {
    pub rec: f64,
    pub smooth_l: f64,
    pub tv_r: f64,
    pub me: f64,
    pub total: f64,
}

/// A decomposition `I ~ L * R` with its objective values and solver history.
#[derive(Debug, Clone, PartialEq)]
pub struct RetinexPair {
    /// Single-channel, strictly positive illumination.
    pub l: ImageGrid,
    /// Reflectance in `[0, 1]` with the composite's channel count.
    pub r: ImageGrid,
    pub loss: LossBreakdown,
    /// Total loss at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Objective evaluations, line-search trials included.
    pub evaluations: usize,
    pub converged: bool,
}

impl RetinexPair {
    /// `L * R` broadcast over reflectance channels.
    pub fn reconstruction(&self) -> ImageGrid {
        let c = self.r.channels();
        let data = self.r.data().iter().enumerate().map(|(i, &r)| self.l.data()[i / c] * r).collect();
        ImageGrid::from_raw(self.r.height(), self.r.width(), c, data, Domain::Feature)
    }

    /// Mean absolute reconstruction error over every value of `img`.
    pub fn mean_abs_reconstruction_error(&self, img: &ImageGrid) -> f64 {
        let rec = self.reconstruction();
        let n = img.data().len() as f64;
        img.data().iter().zip(rec.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n
    }
}

/// Reflectance values are kept this far from 0 and 1 when mapped to logits.
const LOGIT_MARGIN: f64 = 1e-3;
const ILLUMINATION_FLOOR: f64 = 0.01;
const INIT_BLUR_SIGMA: f64 = 3.0;
const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// Deterministic starting point: a blurred max-channel illumination and the
/// reflectance that reproduces `I` wherever `I <= L0`.
pub fn init_decomposition(img: &ImageGrid) -> Result<RetinexPair> {
    check_composite(img)?;
    let lum = gaussian_blur(&img.channel_max(), INIT_BLUR_SIGMA);
    let l_data: Vec<f64> = lum.data().iter().map(|&v| v.max(ILLUMINATION_FLOOR)).collect();
    let c = img.channels();
    let r_data = img.data().iter().enumerate().map(|(i, &v)| (v / l_data[i / c]).clamp(0.0, 1.0)).collect();
    let l = ImageGrid::new(img.height(), img.width(), 1, l_data, Domain::Illumination)?;
    let r = ImageGrid::new(img.height(), img.width(), c, r_data, Domain::Reflectance)?;
    let loss = retinex_loss(img, &l, &r, &RetinexWeights::default())?;
    Ok(RetinexPair { l, r, loss, trace: Vec::new(), iterations: 0, evaluations: 0, converged: false })
}

fn check_composite(img: &ImageGrid) -> Result<()> {
    if img.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Contract("composite values must lie in [0, 1]".into()));
    }
    Ok(())
}

fn check_components(img: &ImageGrid, l: &ImageGrid, r: &ImageGrid) -> Result<()> {
    img.check_same_shape(r)?;
    if l.channels() != 1 || l.height() != img.height() || l.width() != img.width() {
        return Err(Error::ShapeMismatch { expected: (img.height(), img.width(), 1), found: l.shape() });
    }
    Ok(())
}

/// Objective terms at `(L, R)`.
pub fn retinex_loss(img: &ImageGrid, l: &ImageGrid, r: &ImageGrid, w: &RetinexWeights) -> Result<LossBreakdown> {
    check_components(img, l, r)?;
    w.validate()?;
    let problem = Problem::new(img, *w);
    let r_planar = to_planar(r);
    Ok(problem.evaluate(l.data(), &r_planar, None))
}

/// Mutual-exclusivity term alone, with the default Charbonnier smoothing.
pub fn me_loss(l: &ImageGrid, r: &ImageGrid) -> Result<f64> {
    me_loss_with_eps(l, r, RetinexWeights::default().charbonnier_eps)
}

pub fn me_loss_with_eps(l: &ImageGrid, r: &ImageGrid, eps: f64) -> Result<f64> {
    if l.channels() != 1 || l.height() != r.height() || l.width() != r.width() {
        return Err(Error::ShapeMismatch { expected: (r.height(), r.width(), 1), found: l.shape() });
    }
    let (h, w, c) = r.shape();
    let mut acc = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let lh = if x + 1 < w { charbonnier(l.data()[p + 1] - l.data()[p], eps) } else { 0.0 };
            let lv = if y + 1 < h { charbonnier(l.data()[p + w] - l.data()[p], eps) } else { 0.0 };
            for ch in 0..c {
                let at = |q: usize| r.data()[q * c + ch];
                let rh = if x + 1 < w { charbonnier(at(p + 1) - at(p), eps) } else { 0.0 };
                let rv = if y + 1 < h { charbonnier(at(p + w) - at(p), eps) } else { 0.0 };
                acc += lh * rh + lv * rv;
            }
        }
    }
    Ok(acc / (h * w) as f64)
}

/// Gradient of the objective with respect to the unconstrained parameters
/// `u = softplus^-1(L)` and `v = logit(R)`, evaluated at `(L, R)`.
///
/// Returned grids hold `dJ/du` (one channel) and `dJ/dv` (interleaved like `R`).
pub fn retinex_loss_gradients(
    img: &ImageGrid,
    l: &ImageGrid,
    r: &ImageGrid,
    w: &RetinexWeights,
) -> Result<(ImageGrid, ImageGrid)> {
    check_components(img, l, r)?;
    w.validate()?;
    let problem = Problem::new(img, *w);
    let n = img.pixels();
    let c = img.channels();
    let r_planar = to_planar(r);
    let mut gl = vec![0.0; n];
    let mut gr = vec![0.0; n * c];
    problem.evaluate(l.data(), &r_planar, Some((&mut gl, &mut gr)));
    // Chain rule through softplus / sigmoid.
    for (g, &lv) in gl.iter_mut().zip(l.data()) {
        *g *= 1.0 - math::exp(-lv);
    }
    for ch in 0..c {
        for p in 0..n {
            let rv = r_planar[ch * n + p];
            gr[ch * n + p] *= rv * (1.0 - rv);
        }
    }
    let du = ImageGrid::from_raw(img.height(), img.width(), 1, gl, Domain::Feature);
    let dv = ImageGrid::from_raw(img.height(), img.width(), c, from_planar(&gr, n, c), Domain::Feature);
    Ok((du, dv))
}

/// Minimizes the objective by gradient descent with Armijo backtracking on
/// the unconstrained parameters, starting from [`init_decomposition`].
///
/// The descent direction is the gradient scaled by the pixel count, so
/// `step_size` is expressed per pixel rather than per mean.
pub fn decompose(img: &ImageGrid, w: &RetinexWeights, cfg: &SolverConfig) -> Result<RetinexPair> {
    let init = init_decomposition(img)?;
    decompose_from(img, &init.l, &init.r, w, cfg)
}

/// Same as [`decompose`] but from a caller-provided starting point.
pub fn decompose_from(
    img: &ImageGrid,
    l0: &ImageGrid,
    r0: &ImageGrid,
    w: &RetinexWeights,
    cfg: &SolverConfig,
) -> Result<RetinexPair> {
    check_composite(img)?;
    check_components(img, l0, r0)?;
    w.validate()?;
    cfg.validate()?;
    let problem = Problem::new(img, *w);
    let n = img.pixels();
    let c = img.channels();
    let dim = n * (1 + c);

    // Parameter vector: [u (n) | v planar (c * n)].
    let mut x = Vec::with_capacity(dim);
    x.extend(l0.data().iter().map(|&v| softplus_inv(v.max(f64::MIN_POSITIVE))));
    x.extend(to_planar(r0).iter().map(|&v| logit(v.clamp(LOGIT_MARGIN, 1.0 - LOGIT_MARGIN))));
    if cfg.init_jitter > 0.0 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        for v in &mut x {
            *v += cfg.init_jitter * (2.0 * rng.random::<f64>() - 1.0);
        }
    }

    let mut ws = Workspace::new(n, c);
    let mut grad = vec![0.0; dim];
    let mut f = problem.eval_params(&x, &mut ws, Some(&mut grad)).total;
    if !f.is_finite() {
        return Err(Error::Divergence { iteration: 0 });
    }
    let mut trace = vec![f];
    let mut trial = vec![0.0; dim];
    let mut prev_grad = vec![0.0; dim];
    let mut dir = vec![0.0; dim];
    let mut memory = History::new(cfg.history);
    let scale = n as f64;
    let mut alpha = cfg.step_size;
    let mut converged = false;
    let mut iterations = 0;
    let mut evaluations = 1;

    for it in 1..=cfg.max_iters {
        iterations = it;
        if grad.iter().all(|&g| g == 0.0) {
            converged = true;
            break;
        }
        let mut quasi = memory.direction(&grad, &mut dir);
        let mut slope = dot(&grad, &dir);
        if !quasi || !(slope < 0.0) {
            memory.clear();
            quasi = false;
            for (d, &g) in dir.iter_mut().zip(&grad) {
                *d = -scale * g;
            }
            slope = dot(&grad, &dir);
        }
        let mut t = if quasi { 1.0 } else { alpha };
        let mut accepted = None;
        let mut saw_finite = false;
        for k in 0..MAX_BACKTRACKS {
            for ((tr, &xi), &di) in trial.iter_mut().zip(&x).zip(&dir) {
                *tr = xi + t * di;
            }
            // The first trial usually succeeds, so it carries the gradient along.
            let ft = problem.eval_params(&trial, &mut ws, (k == 0).then_some(&mut prev_grad[..])).total;
            evaluations += 1;
            if ft.is_finite() {
                saw_finite = true;
                if ft <= f + ARMIJO_C * t * slope {
                    accepted = Some((ft, k == 0));
                    break;
                }
            }
            t *= SHRINK;
        }
        let Some((ft, has_grad)) = accepted else {
            if !saw_finite {
                return Err(Error::Divergence { iteration: it });
            }
            if quasi {
                // Retry along the plain gradient before giving up.
                memory.clear();
                continue;
            }
            // No representable descent step remains.
            converged = true;
            break;
        };
        core::mem::swap(&mut x, &mut trial);
        core::mem::swap(&mut grad, &mut prev_grad);
        let f_new = if has_grad {
            ft
        } else {
            evaluations += 1;
            problem.eval_params(&x, &mut ws, Some(&mut grad)).total
        };
        if !f_new.is_finite() {
            return Err(Error::Divergence { iteration: it });
        }
        memory.push(&x, &trial, &grad, &prev_grad);
        let rel = (f - f_new) / f.abs().max(f64::MIN_POSITIVE);
        f = f_new;
        trace.push(f);
        if rel < cfg.tol_rel {
            converged = true;
            break;
        }
        if !quasi {
            alpha = (t * 2.0).min(cfg.step_size);
        }
    }

    problem.eval_params(&x, &mut ws, None);
    let loss = problem.evaluate(&ws.l, &ws.r, None);
    let l = ImageGrid::new(img.height(), img.width(), 1, ws.l.clone(), Domain::Illumination)?;
    let r = ImageGrid::new(img.height(), img.width(), c, from_planar(&ws.r, n, c), Domain::Reflectance)?;
    Ok(RetinexPair { l, r, loss, trace, iterations, evaluations, converged })
}

/// Limited-memory curvature pairs for quasi-Newton directions, stored in a
/// ring of reusable buffers.
struct History {
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: Vec<f64>,
    coef: Vec<f64>,
    /// Slot of the oldest pair.
    head: usize,
    len: usize,
}

impl History {
    fn new(cap: usize) -> Self {
        Self { s: Vec::new(), y: Vec::new(), rho: vec![0.0; cap], coef: vec![0.0; cap], head: 0, len: 0 }
    }

    fn cap(&self) -> usize {
        self.rho.len()
    }

    fn clear(&mut self) {
        self.head = 0;
        self.len = 0;
    }

    /// Stores the step `x - x_prev` and gradient change when curvature is positive.
    fn push(&mut self, x: &[f64], x_prev: &[f64], g: &[f64], g_prev: &[f64]) {
        let cap = self.cap();
        if cap == 0 {
            return;
        }
        let slot = (self.head + self.len) % cap;
        if self.s.len() <= slot {
            self.s.push(vec![0.0; x.len()]);
            self.y.push(vec![0.0; x.len()]);
        }
        let (sv, yv) = (&mut self.s[slot], &mut self.y[slot]);
        for i in 0..x.len() {
            sv[i] = x[i] - x_prev[i];
            yv[i] = g[i] - g_prev[i];
        }
        let sy = dot(sv, yv);
        if !(sy > 1e-12 * dot(yv, yv)) {
            return;
        }
        self.rho[slot] = 1.0 / sy;
        if self.len == cap {
            self.head = (self.head + 1) % cap;
        } else {
            self.len += 1;
        }
    }

    /// Two-loop recursion into `out`; false when no pairs are stored.
    fn direction(&mut self, g: &[f64], out: &mut [f64]) -> bool {
        if self.len == 0 {
            return false;
        }
        let cap = self.cap();
        let slot = |k: usize| (self.head + k) % cap;
        out.copy_from_slice(g);
        for k in (0..self.len).rev() {
            let i = slot(k);
            let a = self.rho[i] * dot(&self.s[i], out);
            self.coef[i] = a;
            axpy(-a, &self.y[i], out);
        }
        let last = slot(self.len - 1);
        let gamma = 1.0 / (self.rho[last] * dot(&self.y[last], &self.y[last]));
        out.iter_mut().for_each(|o| *o *= -gamma);
        // `out` now holds the negated scaled vector; keep the sign through the second loop.
        for k in 0..self.len {
            let i = slot(k);
            let b = self.rho[i] * dot(&self.y[i], out);
            axpy(-self.coef[i] - b, &self.s[i], out);
        }
        true
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Share of log-domain edge magnitude carried by the reflectance on `edges`.
///
/// For each edge pixel the forward-difference magnitudes of `ln R_c` are
/// summed over channels and compared with those of `ln L` counted once per
/// channel, since `ln I_c = ln L + ln R_c`.
pub fn edge_attribution(pair: &RetinexPair, edges: &BinaryMask) -> Result<f64> {
    edges.check_grid(&pair.r)?;
    let (h, w, c) = pair.r.shape();
    let ln_l: Vec<f64> = pair.l.data().iter().map(|&v| math::log(v)).collect();
    let ln_r: Vec<f64> = pair.r.data().iter().map(|&v| math::log(v.max(1e-12))).collect();
    let (mut a_l, mut a_r) = (0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if !edges.get(y, x) {
                continue;
            }
            let p = y * w + x;
            if x + 1 < w {
                a_l += c as f64 * (ln_l[p + 1] - ln_l[p]).abs();
                a_r += (0..c).map(|ch| (ln_r[(p + 1) * c + ch] - ln_r[p * c + ch]).abs()).sum::<f64>();
            }
            if y + 1 < h {
                a_l += c as f64 * (ln_l[p + w] - ln_l[p]).abs();
                a_r += (0..c).map(|ch| (ln_r[(p + w) * c + ch] - ln_r[p * c + ch]).abs()).sum::<f64>();
            }
        }
    }
    if a_l + a_r == 0.0 {
        return Err(Error::Contract("no edge magnitude on the given pixels".into()));
    }
    Ok(a_r / (a_l + a_r))
}

fn to_planar(r: &ImageGrid) -> Vec<f64> {
    let (n, c) = (r.pixels(), r.channels());
    let mut out = vec![0.0; n * c];
    for (i, &v) in r.data().iter().enumerate() {
        out[(i % c) * n + i / c] = v;
    }
    out
}

fn from_planar(p: &[f64], n: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * c];
    for ch in 0..c {
        for i in 0..n {
            out[i * c + ch] = p[ch * n + i];
        }
    }
    out
}

struct Workspace {
    l: Vec<f64>,
    r: Vec<f64>,
    gl: Vec<f64>,
    gr: Vec<f64>,
    /// `dL/du` at the current parameters.
    dl: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, c: usize) -> Self {
        Self { l: vec![0.0; n], r: vec![0.0; n * c], gl: vec![0.0; n], gr: vec![0.0; n * c], dl: vec![0.0; n] }
    }
}

struct Problem {
    h: usize,
    w: usize,
    c: usize,
    /// Composite, planar.
    img: Vec<f64>,
    wt: RetinexWeights,
}

impl Problem {
    fn new(img: &ImageGrid, wt: RetinexWeights) -> Self {
        Self { h: img.height(), w: img.width(), c: img.channels(), img: to_planar(img), wt }
    }

    /// Maps parameters to `(L, R)` in `ws` and evaluates; with `grad` it also
    /// writes the parameter-space gradient.
    fn eval_params(&self, x: &[f64], ws: &mut Workspace, grad: Option<&mut [f64]>) -> LossBreakdown {
        let n = self.h * self.w;
        let (u, v) = x.split_at(n);
        for ((l, dl), &ui) in ws.l.iter_mut().zip(&mut ws.dl).zip(u) {
            let (value, slope) = softplus_and_slope(ui);
            *l = value.max(f64::MIN_POSITIVE);
            *dl = slope;
        }
        for (r, &vi) in ws.r.iter_mut().zip(v) {
            *r = sigmoid(vi);
        }
        let Workspace { l, r, gl, gr, dl } = ws;
        match grad {
            None => self.evaluate(l, r, None),
            Some(g) => {
                let loss = self.evaluate(l, r, Some((gl, gr)));
                let (gu, gv) = g.split_at_mut(n);
                for i in 0..n {
                    gu[i] = gl[i] * dl[i];
                }
                for i in 0..gv.len() {
                    gv[i] = gr[i] * r[i] * (1.0 - r[i]);
                }
                loss
            }
        }
    }

    /// Objective at planar `(l, r)`; accumulates `dJ/dL`, `dJ/dR` when asked.
    fn evaluate(&self, l: &[f64], r: &[f64], grad: Option<(&mut [f64], &mut [f64])>) -> LossBreakdown {
        let (h, w, c) = (self.h, self.w, self.c);
        let n = h * w;
        let eps = self.wt.charbonnier_eps;
        let inv_n = 1.0 / n as f64;
        let (mut rec, mut smooth, mut tv, mut me) = (0.0, 0.0, 0.0, 0.0);

        let mut grads = grad;
        if let Some((gl, gr)) = grads.as_mut() {
            gl.iter_mut().for_each(|g| *g = 0.0);
            gr.iter_mut().for_each(|g| *g = 0.0);
        }
        let k_rec = self.wt.w_rec * inv_n;
        let k_smooth = self.wt.w_smooth_l * inv_n;
        let k_tv = self.wt.w_tv_r * inv_n;
        let k_me = self.wt.w_me * inv_n;

        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let lp = l[p];
                let has_h = x + 1 < w;
                let has_v = y + 1 < h;
                let dlh = if has_h { l[p + 1] - lp } else { 0.0 };
                let dlv = if has_v { l[p + w] - lp } else { 0.0 };
                smooth += dlh * dlh + dlv * dlv;
                let sh = math::sqrt(dlh * dlh + eps * eps);
                let sv = math::sqrt(dlv * dlv + eps * eps);
                let (plh, plv) = (sh - eps, sv - eps);
                let mut sum_rh = 0.0;
                let mut sum_rv = 0.0;
                let mut g_lp = 0.0;
                for ch in 0..c {
                    let q = ch * n + p;
                    let rq = r[q];
                    let res = self.img[q] - lp * rq;
                    let sres = math::sqrt(res * res + eps * eps);
                    rec += sres - eps;
                    let drh = if has_h { r[q + 1] - rq } else { 0.0 };
                    let drv = if has_v { r[q + w] - rq } else { 0.0 };
                    let srh = math::sqrt(drh * drh + eps * eps);
                    let srv = math::sqrt(drv * drv + eps * eps);
                    let (prh, prv) = (srh - eps, srv - eps);
                    tv += prh + prv;
                    me += plh * prh + plv * prv;
                    sum_rh += prh;
                    sum_rv += prv;
                    if let Some((_, gr)) = grads.as_mut() {
                        let dres = res / sres;
                        g_lp -= k_rec * dres * rq;
                        gr[q] -= k_rec * dres * lp;
                        // Coefficients on dh R_c and dv R_c.
                        let ah = k_tv * drh / srh + k_me * plh * drh / srh;
                        let av = k_tv * drv / srv + k_me * plv * drv / srv;
                        if has_h {
                            gr[q + 1] += ah;
                            gr[q] -= ah;
                        }
                        if has_v {
                            gr[q + w] += av;
                            gr[q] -= av;
                        }
                    }
                }
                if let Some((gl, _)) = grads.as_mut() {
                    gl[p] += g_lp;
                    let ah = k_smooth * 2.0 * dlh + k_me * sum_rh * dlh / sh;
                    let av = k_smooth * 2.0 * dlv + k_me * sum_rv * dlv / sv;
                    if has_h {
                        gl[p + 1] += ah;
                        gl[p] -= ah;
                    }
                    if has_v {
                        gl[p + w] += av;
                        gl[p] -= av;
                    }
                }
            }
        }
        let rec = rec * inv_n;
        let smooth_l = smooth * inv_n;
        let tv_r = tv * inv_n;
        let me = me * inv_n;
        let total = self.wt.w_rec * rec + self.wt.w_smooth_l * smooth_l + self.wt.w_tv_r * tv_r + self.wt.w_me * me;
        LossBreakdown { rec, smooth_l, tv_r, me, total }
    }
}
