//! Dense rasters, masks and the gradient / windowed-moment primitives every
//! other module builds on.
//!
//! Grids are stored row-major with channels interleaved (`HWC`). All windowed
//! operations use replicate padding: an index outside the grid is clamped to
//! the nearest border pixel.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math;

/// What a grid's values mean, which also decides their admissible range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Domain {
    /// Observed image, values in `[0, 1]`.
    Composite,
    /// Illumination, strictly positive.
    Illumination,
    /// Reflectance, values in `[0, 1]`.
    Reflectance,
    /// Natural-log image, any finite value.
    Log,
    /// Derived feature or score map, any finite value.
    Feature,
}

impl Domain {
    pub fn admits(self, v: f64) -> bool {
        if !v.is_finite() {
            return false;
        }
        match self {
            Domain::Composite | Domain::Reflectance => (0.0..=1.0).contains(&v),
            Domain::Illumination => v > 0.0,
            Domain::Log | Domain::Feature => true,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Domain::Composite => 0,
            Domain::Illumination => 1,
            Domain::Reflectance => 2,
            Domain::Log => 3,
            Domain::Feature => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Domain> {
        Some(match code {
            0 => Domain::Composite,
            1 => Domain::Illumination,
            2 => Domain::Reflectance,
            3 => Domain::Log,
            4 => Domain::Feature,
            _ => return None,
        })
    }
}

/// `height x width x channels` raster of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
    domain: Domain,
}

impl ImageGrid {
    /// Builds a grid, checking length, finiteness and the domain's value range.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>, domain: Domain) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(invalid("shape", "height and width must be positive"));
        }
        if channels == 0 {
            return Err(invalid("channels", "at least one channel required"));
        }
        if data.len() != height * width * channels {
            return Err(Error::Contract(alloc::format!("data length {} != {height}x{width}x{channels}", data.len())));
        }
        if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !domain.admits(**v)) {
            return Err(Error::Contract(alloc::format!("value {v} at index {i} not admissible for {domain:?}")));
        }
        Ok(Self { height, width, channels, data, domain })
    }

    /// Grid with every value set to `value`.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64, domain: Domain) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels], domain)
    }

    /// Builds a grid from a per-pixel function `f(y, x, c)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        domain: Domain,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data, domain)
    }

    /// Internal constructor for results whose range is guaranteed by construction.
    pub(crate) fn from_raw(height: usize, width: usize, channels: usize, data: Vec<f64>, domain: Domain) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { height, width, channels, data, domain }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Re-tags the grid, validating the values against the new domain.
    pub fn with_domain(self, domain: Domain) -> Result<Self> {
        Self::new(self.height, self.width, self.channels, self.data, domain)
    }

    /// Copy of channel `c` as a single-channel grid.
    pub fn channel(&self, c: usize) -> ImageGrid {
        assert!(c < self.channels, "channel {c} out of range");
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Self::from_raw(self.height, self.width, 1, data, self.domain)
    }

    /// Interleaves single-channel grids of identical shape.
    pub fn from_channels(planes: &[ImageGrid], domain: Domain) -> Result<Self> {
        let first = planes.first().ok_or_else(|| invalid("planes", "need at least one plane"))?;
        for p in planes {
            if p.channels != 1 || p.height != first.height || p.width != first.width {
                return Err(Error::ShapeMismatch { expected: (first.height, first.width, 1), found: p.shape() });
            }
        }
        let n = first.pixels();
        let mut data = Vec::with_capacity(n * planes.len());
        for i in 0..n {
            for p in planes {
                data.push(p.data[i]);
            }
        }
        Self::new(first.height, first.width, planes.len(), data, domain)
    }

    /// Replicates a single-channel grid across `channels`; other grids pass
    /// through when they already have that many channels.
    pub fn lift(&self, channels: usize) -> Result<ImageGrid> {
        if self.channels == channels {
            return Ok(self.clone());
        }
        if self.channels != 1 {
            return Err(Error::ShapeMismatch { expected: (self.height, self.width, channels), found: self.shape() });
        }
        let data = self.data.iter().flat_map(|&v| core::iter::repeat(v).take(channels)).collect();
        Ok(Self::from_raw(self.height, self.width, channels, data, self.domain))
    }

    /// Mean over channels at every pixel.
    pub fn channel_mean(&self) -> ImageGrid {
        let c = self.channels as f64;
        let data = self.data.chunks_exact(self.channels).map(|px| px.iter().sum::<f64>() / c).collect();
        Self::from_raw(self.height, self.width, 1, data, self.domain)
    }

    /// Maximum over channels at every pixel.
    pub fn channel_max(&self) -> ImageGrid {
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|px| px.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Self::from_raw(self.height, self.width, 1, data, self.domain)
    }

    /// Elementwise map; the result is validated against `domain`.
    pub fn map(&self, domain: Domain, f: impl Fn(f64) -> f64) -> Result<ImageGrid> {
        Self::new(self.height, self.width, self.channels, self.data.iter().map(|&v| f(v)).collect(), domain)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn check_same_shape(&self, other: &ImageGrid) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch { expected: self.shape(), found: other.shape() });
        }
        Ok(())
    }
}

/// Forward differences of a grid along width (`grad_h`) and height (`grad_v`).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub grad_h: ImageGrid,
    pub grad_v: ImageGrid,
}

/// Foreground/background partition of a grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    values: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, values: Vec<bool>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Contract(alloc::format!("mask length {} != {height}x{width}", values.len())));
        }
        Ok(Self { height, width, values })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(f(y, x));
            }
        }
        Self { height, width, values }
    }

    /// Thresholds a single-channel grid: `value > threshold` is foreground.
    pub fn from_threshold(grid: &ImageGrid, threshold: f64) -> Result<Self> {
        if grid.channels() != 1 {
            return Err(invalid("grid", "mask source must be single-channel"));
        }
        Ok(Self {
            height: grid.height(),
            width: grid.width(),
            values: grid.data().iter().map(|&v| v > threshold).collect(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.values[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn background_count(&self) -> usize {
        self.values.len() - self.foreground_count()
    }

    pub fn complement(&self) -> BinaryMask {
        Self { height: self.height, width: self.width, values: self.values.iter().map(|v| !v).collect() }
    }

    /// 0/1 single-channel feature grid.
    pub fn to_grid(&self) -> ImageGrid {
        let data = self.values.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        ImageGrid::from_raw(self.height, self.width, 1, data, Domain::Composite)
    }

    /// Pixels that are foreground and have a 4-neighbour in the background.
    pub fn boundary(&self) -> BinaryMask {
        let (h, w) = (self.height, self.width);
        Self::from_fn(h, w, |y, x| {
            if !self.get(y, x) {
                return false;
            }
            (y > 0 && !self.get(y - 1, x))
                || (y + 1 < h && !self.get(y + 1, x))
                || (x > 0 && !self.get(y, x - 1))
                || (x + 1 < w && !self.get(y, x + 1))
        })
    }

    pub(crate) fn check_grid(&self, grid: &ImageGrid) -> Result<()> {
        if grid.height() != self.height || grid.width() != self.width {
            return Err(Error::ShapeMismatch {
                expected: (self.height, self.width, grid.channels()),
                found: grid.shape(),
            });
        }
        Ok(())
    }
}

/// Default offset added before taking logarithms.
pub const DEFAULT_EPS_LOG: f64 = 1e-6;

/// `ln(img + eps_log)` per value.
pub fn to_log_domain(img: &ImageGrid, eps_log: f64) -> Result<ImageGrid> {
    if !(eps_log > 0.0) || !eps_log.is_finite() {
        return Err(invalid("eps_log", "must be positive and finite"));
    }
    if let Some(v) = img.data().iter().find(|&&v| v < 0.0) {
        return Err(Error::Contract(alloc::format!("negative value {v} has no logarithm")));
    }
    let data = img.data().iter().map(|&v| math::log(v + eps_log)).collect();
    Ok(ImageGrid::from_raw(img.height(), img.width(), img.channels(), data, Domain::Log))
}

/// Forward differences with a replicated border, so the last column of
/// `grad_h` and the last row of `grad_v` are zero. Multi-channel grids are
/// differenced per channel.
pub fn spatial_gradients(img: &ImageGrid) -> GradientPair {
    let (h, w, c) = img.shape();
    let src = img.data();
    let mut gh = vec![0.0; src.len()];
    let mut gv = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) * c;
            for k in 0..c {
                if x + 1 < w {
                    gh[i + k] = src[i + c + k] - src[i + k];
                }
                if y + 1 < h {
                    gv[i + k] = src[i + w * c + k] - src[i + k];
                }
            }
        }
    }
    GradientPair {
        grad_h: ImageGrid::from_raw(h, w, c, gh, Domain::Feature),
        grad_v: ImageGrid::from_raw(h, w, c, gv, Domain::Feature),
    }
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Windowed mean (per channel) and variance (`E||x - mean||^2`, summed across
/// channels into one plane) over a `k x k` replicate-padded window.
pub fn local_moments(img: &ImageGrid, k: usize) -> Result<(ImageGrid, ImageGrid)> {
    if k < 3 || k % 2 == 0 {
        return Err(invalid("k", alloc::format!("window must be odd and >= 3, got {k}")));
    }
    let (h, w, c) = img.shape();
    let r = (k / 2) as isize;
    let n = (k * k) as f64;
    let src = img.data();
    let mut mean = vec![0.0; src.len()];

    // Separable box sums for the mean.
    let mut rows = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for dx in -r..=r {
                let xx = clamp_index(x as isize + dx, w);
                for ch in 0..c {
                    rows[(y * w + x) * c + ch] += src[(y * w + xx) * c + ch];
                }
            }
        }
    }
    for y in 0..h {
        for dy in -r..=r {
            let yy = clamp_index(y as isize + dy, h);
            for x in 0..w {
                for ch in 0..c {
                    mean[(y * w + x) * c + ch] += rows[(yy * w + x) * c + ch];
                }
            }
        }
    }
    for m in &mut mean {
        *m /= n;
    }

    // Second pass around the window mean.
    let mut var = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mu = &mean[(y * w + x) * c..(y * w + x + 1) * c];
            let mut acc = 0.0;
            for dy in -r..=r {
                let yy = clamp_index(y as isize + dy, h);
                for dx in -r..=r {
                    let xx = clamp_index(x as isize + dx, w);
                    let px = &src[(yy * w + xx) * c..(yy * w + xx + 1) * c];
                    for (v, m) in px.iter().zip(mu) {
                        let d = v - m;
                        acc += d * d;
                    }
                }
            }
            var[y * w + x] = acc / n;
        }
    }
    Ok((ImageGrid::from_raw(h, w, c, mean, img.domain()), ImageGrid::from_raw(h, w, 1, var, Domain::Feature)))
}

/// Normalized 1-D Gaussian taps with radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = math::ceil(3.0 * sigma).max(1.0) as usize;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            math::exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable Gaussian blur with replicate padding. `sigma <= 0` is the identity.
pub fn gaussian_blur(img: &ImageGrid, sigma: f64) -> ImageGrid {
    if !(sigma > 0.0) {
        return img.clone();
    }
    let taps = gaussian_kernel(sigma);
    let (h, w, c) = img.shape();
    let out = separable_filter(img.data(), h, w, c, &taps);
    ImageGrid::from_raw(h, w, c, out, img.domain())
}

pub(crate) fn separable_filter(src: &[f64], h: usize, w: usize, c: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; src.len()];
    for y in 0..h {
        for x in 0..w {
            for (t, &wt) in taps.iter().enumerate() {
                let xx = clamp_index(x as isize + t as isize - r, w);
                for ch in 0..c {
                    tmp[(y * w + x) * c + ch] += wt * src[(y * w + xx) * c + ch];
                }
            }
        }
    }
    let mut out = vec![0.0; src.len()];
    for y in 0..h {
        for (t, &wt) in taps.iter().enumerate() {
            let yy = clamp_index(y as isize + t as isize - r, h);
            for x in 0..w {
                for ch in 0..c {
                    out[(y * w + x) * c + ch] += wt * tmp[(yy * w + x) * c + ch];
                }
            }
        }
    }
    out
}

/// Mean over a replicate-padded 3x3 neighbourhood of a single-channel plane.
pub(crate) fn box3(src: &[f64], h: usize, w: usize) -> Vec<f64> {
    separable_filter(src, h, w, 1, &[1.0 / 3.0; 3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid1(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> ImageGrid {
        ImageGrid::from_fn(h, w, 1, Domain::Feature, |y, x, _| f(y, x)).unwrap()
    }

    fn brute_variance(img: &ImageGrid, k: usize, y: usize, x: usize) -> f64 {
        let r = (k / 2) as isize;
        let (h, w, c) = img.shape();
        let mut samples = Vec::new();
        for dy in -r..=r {
            for dx in -r..=r {
                let yy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                let xx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                samples.push((0..c).map(|ch| img.get(yy, xx, ch)).collect::<Vec<_>>());
            }
        }
        let n = samples.len() as f64;
        let mean: Vec<f64> = (0..c).map(|ch| samples.iter().map(|s| s[ch]).sum::<f64>() / n).collect();
        samples.iter().map(|s| s.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>()).sum::<f64>() / n
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        assert!(ImageGrid::new(2, 2, 1, vec![0.0; 3], Domain::Feature).is_err());
        assert!(ImageGrid::new(1, 1, 1, vec![f64::NAN], Domain::Log).is_err());
        assert!(ImageGrid::new(1, 1, 1, vec![1.5], Domain::Reflectance).is_err());
        assert!(ImageGrid::new(1, 1, 1, vec![0.0], Domain::Illumination).is_err());
        assert!(ImageGrid::new(1, 1, 1, vec![-3.0], Domain::Log).is_ok());
    }

    #[test]
    fn log_of_constant_one() {
        let g = ImageGrid::filled(4, 4, 1, 1.0, Domain::Composite).unwrap();
        let l = to_log_domain(&g, 1e-6).unwrap();
        assert_eq!(l.domain(), Domain::Log);
        for &v in l.data() {
            assert!((v - 9.999995e-7).abs() < 1e-12);
        }
        assert!(to_log_domain(&g, 0.0).is_err());
    }

    #[test]
    fn log_of_e_minus_eps_is_one() {
        let eps = 1e-6;
        let g = ImageGrid::filled(3, 5, 3, core::f64::consts::E - eps, Domain::Feature).unwrap();
        let l = to_log_domain(&g, eps).unwrap();
        assert!(l.data().iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn log_rejects_negative() {
        let g = ImageGrid::filled(2, 2, 1, -0.1, Domain::Feature).unwrap();
        assert!(matches!(to_log_domain(&g, 1e-6), Err(Error::Contract(_))));
    }

    #[test]
    fn log_round_trip_on_random_grid() {
        let mut s = 12345u64;
        let g = ImageGrid::from_fn(16, 16, 3, Domain::Composite, |_, _, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
        .unwrap();
        let l = to_log_domain(&g, 1e-6).unwrap();
        for (a, b) in g.data().iter().zip(l.data()) {
            let back = b.exp() - 1e-6;
            assert!((back - a).abs() <= 1e-12 * a.max(1e-6), "{a} vs {back}");
        }
    }

    #[test]
    fn gradients_of_constant_vanish() {
        let g = ImageGrid::filled(5, 7, 1, 0.4, Domain::Composite).unwrap();
        let gp = spatial_gradients(&g);
        assert!(gp.grad_h.data().iter().chain(gp.grad_v.data()).all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_of_vertical_step() {
        let (h, w) = (6, 8);
        let g = grid1(h, w, |_, x| if x >= w / 2 { 1.0 } else { 0.0 });
        let gp = spatial_gradients(&g);
        for y in 0..h {
            for x in 0..w {
                let want = if x == w / 2 - 1 { 1.0 } else { 0.0 };
                assert_eq!(gp.grad_h.get(y, x, 0), want);
                assert_eq!(gp.grad_v.get(y, x, 0), 0.0);
            }
        }
    }

    #[test]
    fn gradients_of_ramp() {
        let (h, w) = (4, 9);
        let g = grid1(h, w, |_, x| x as f64 / (w - 1) as f64);
        let gp = spatial_gradients(&g);
        for y in 0..h {
            for x in 0..w - 1 {
                assert!((gp.grad_h.get(y, x, 0) - 1.0 / 8.0).abs() < 1e-15);
            }
            assert_eq!(gp.grad_h.get(y, w - 1, 0), 0.0);
        }
    }

    #[test]
    fn moments_of_constant() {
        let g = ImageGrid::filled(6, 6, 3, 0.3, Domain::Composite).unwrap();
        for k in [3, 5, 7] {
            let (_, v) = local_moments(&g, k).unwrap();
            assert!(v.data().iter().all(|&x| x.abs() < 1e-30));
        }
        assert!(local_moments(&g, 4).is_err());
        assert!(local_moments(&g, 1).is_err());
    }

    #[test]
    fn moments_of_single_white_pixel() {
        let g = grid1(9, 9, |y, x| if y == 4 && x == 4 { 1.0 } else { 0.0 });
        let (m, v) = local_moments(&g, 3).unwrap();
        assert!((m.get(4, 4, 0) - 1.0 / 9.0).abs() < 1e-15);
        assert!((v.get(4, 4, 0) - 8.0 / 81.0).abs() < 1e-15);
    }

    #[test]
    fn moments_near_step_edge() {
        // Step between columns 15 and 16.
        let g = grid1(8, 32, |_, x| if x >= 16 { 1.0 } else { 0.0 });
        let (_, v) = local_moments(&g, 7).unwrap();
        let peak = (0..32).map(|x| v.get(4, x, 0)).fold(0.0, f64::max);
        for x in 0..32 {
            let dist = if x >= 16 { x - 16 } else { 15 - x };
            let val = v.get(4, x, 0);
            if dist >= 3 {
                assert_eq!(val, 0.0, "x={x}");
            } else {
                assert!(val > 0.0);
            }
            if dist == 0 {
                assert!((val - peak).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moments_match_brute_force() {
        let mut s = 7u64;
        let g = ImageGrid::from_fn(16, 16, 3, Domain::Feature, |_, _, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
        })
        .unwrap();
        for k in [3, 5, 7] {
            let (_, v) = local_moments(&g, k).unwrap();
            for y in 0..16 {
                for x in 0..16 {
                    assert!((v.get(y, x, 0) - brute_variance(&g, k, y, x)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn blur_preserves_constants_and_mass_scale() {
        let g = ImageGrid::filled(10, 12, 2, 0.7, Domain::Composite).unwrap();
        let b = gaussian_blur(&g, 3.0);
        assert!(b.data().iter().all(|&v| (v - 0.7).abs() < 1e-14));
        let k = gaussian_kernel(2.0);
        assert_eq!(k.len(), 13);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mask_boundary_and_counts() {
        let m = BinaryMask::from_fn(5, 5, |y, x| (1..4).contains(&y) && (1..4).contains(&x));
        assert_eq!(m.foreground_count(), 9);
        assert_eq!(m.background_count(), 16);
        let b = m.boundary();
        assert_eq!(b.foreground_count(), 8);
        assert!(!b.get(2, 2));
    }

    proptest! {
        #[test]
        fn gradients_are_linear(
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            xs in proptest::collection::vec(-1.0f64..1.0, 20),
            ys in proptest::collection::vec(-1.0f64..1.0, 20),
        ) {
            let gx = ImageGrid::new(4, 5, 1, xs.clone(), Domain::Feature).unwrap();
            let gy = ImageGrid::new(4, 5, 1, ys.clone(), Domain::Feature).unwrap();
            let mix = ImageGrid::new(4, 5, 1, xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect(), Domain::Feature).unwrap();
            let (px, py, pm) = (spatial_gradients(&gx), spatial_gradients(&gy), spatial_gradients(&mix));
            for i in 0..20 {
                let want_h = a * px.grad_h.data()[i] + b * py.grad_h.data()[i];
                let want_v = a * px.grad_v.data()[i] + b * py.grad_v.data()[i];
                prop_assert!((pm.grad_h.data()[i] - want_h).abs() < 1e-12);
                prop_assert!((pm.grad_v.data()[i] - want_v).abs() < 1e-12);
            }
        }

        #[test]
        fn log_is_strictly_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            prop_assume!(a != b);
            let g = ImageGrid::new(1, 2, 1, vec![a, b], Domain::Composite).unwrap();
            let l = to_log_domain(&g, 1e-6).unwrap();
            prop_assert_eq!(a < b, l.data()[0] < l.data()[1]);
        }
    }
}
