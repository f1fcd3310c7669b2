//! Image-space augmentations applied to occupancy-grid sequences.
//!
//! Geometric parameters are drawn once per call and shared by every channel,
//! so the temporal frames of one view stay aligned.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::raster::GridSequence;
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseAugConfig {
    /// `(height, width)` of the random crop before resizing back.
    pub crop: (usize, usize),
    /// Rotation range in degrees.
    pub rotation_deg: (f64, f64),
    pub noise_sigma: f64,
    /// Range of the Gaussian blur standard deviation in pixels.
    pub blur_sigma: (f64, f64),
}

impl Default for BaseAugConfig {
    fn default() -> Self {
        Self {
            crop: (80, 80),
            rotation_deg: (-10.0, 10.0),
            noise_sigma: 0.02,
            blur_sigma: (0.1, 1.0),
        }
    }
}

impl BaseAugConfig {
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        let (ch, cw) = self.crop;
        if ch == 0 || cw == 0 || ch > height || cw > width {
            return Err(Error::Config(format!(
                "crop {ch}x{cw} does not fit a {height}x{width} grid"
            )));
        }
        let (r0, r1) = self.rotation_deg;
        if !(r0 <= r1) {
            return Err(Error::Config("rotation range is empty".into()));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise sigma must be non-negative".into()));
        }
        let (b0, b1) = self.blur_sigma;
        if !(b0 >= 0.0 && b0 <= b1) {
            return Err(Error::Config("blur sigma range must be non-negative and ordered".into()));
        }
        Ok(())
    }
}

/// Four-tap bilinear sampling plan shared by every channel: output pixel
/// `i` reads `Σ_t weights[i][t] · src[taps[i][t]]`. Taps outside the source
/// carry zero weight.
struct SamplePlan {
    taps: Vec<[u32; 4]>,
    weights: Vec<[f32; 4]>,
}

impl SamplePlan {
    fn with_capacity(n: usize) -> Self {
        Self {
            taps: Vec::with_capacity(n),
            weights: Vec::with_capacity(n),
        }
    }

    fn apply(&self, grid: &GridSequence, clamp: bool) -> GridSequence {
        let mut out = grid.clone();
        for k in 0..grid.config.channels {
            let src = grid.frame(k);
            let dst = out.frame_mut(k);
            for ((d, t), w) in dst.iter_mut().zip(&self.taps).zip(&self.weights) {
                let v = w[0] * src[t[0] as usize]
                    + w[1] * src[t[1] as usize]
                    + w[2] * src[t[2] as usize]
                    + w[3] * src[t[3] as usize];
                *d = if clamp { v.clamp(0.0, 1.0) } else { v };
            }
        }
        out
    }
}

/// Source index and fraction along one axis with edge clamping.
fn clamped_axis(pos: f64, len: usize) -> (usize, usize, f32) {
    let p = pos.clamp(0.0, (len - 1) as f64);
    let i0 = p.floor() as usize;
    (i0, (i0 + 1).min(len - 1), (p - i0 as f64) as f32)
}

/// Crops `(top, left, crop_h, crop_w)` from every channel and resizes the
/// crop back to the full grid with bilinear interpolation.
pub fn crop_resize(grid: &GridSequence, top: usize, left: usize, crop: (usize, usize)) -> GridSequence {
    let (_, h, w) = grid.shape();
    let (ch, cw) = crop;
    let sy = ch as f64 / h as f64;
    let sx = cw as f64 / w as f64;
    let rows: Vec<_> = (0..h).map(|r| clamped_axis((r as f64 + 0.5) * sy - 0.5, ch)).collect();
    let cols: Vec<_> = (0..w).map(|c| clamped_axis((c as f64 + 0.5) * sx - 0.5, cw)).collect();
    let mut plan = SamplePlan::with_capacity(h * w);
    for &(r0, r1, fr) in &rows {
        let (r0, r1) = ((top + r0) * w, (top + r1) * w);
        for &(c0, c1, fc) in &cols {
            let (c0, c1) = (left + c0, left + c1);
            plan.taps.push([(r0 + c0) as u32, (r0 + c1) as u32, (r1 + c0) as u32, (r1 + c1) as u32]);
            plan.weights.push([(1.0 - fr) * (1.0 - fc), (1.0 - fr) * fc, fr * (1.0 - fc), fr * fc]);
        }
    }
    plan.apply(grid, false)
}

pub fn random_crop(grid: &GridSequence, crop: (usize, usize), rng: &mut Rng) -> Result<GridSequence> {
    let (_, h, w) = grid.shape();
    let (ch, cw) = crop;
    if ch == 0 || cw == 0 || ch > h || cw > w {
        return Err(Error::Config(format!("crop {ch}x{cw} does not fit a {h}x{w} grid")));
    }
    let top = rng.random_range(0..=h - ch);
    let left = rng.random_range(0..=w - cw);
    Ok(crop_resize(grid, top, left, crop))
}

/// Rotates every channel by `angle_deg` about the grid center; samples that
/// fall outside the grid are zero.
pub fn rotate(grid: &GridSequence, angle_deg: f64) -> GridSequence {
    let (_, h, w) = grid.shape();
    let (s, co) = angle_deg.to_radians().sin_cos();
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    let mut plan = SamplePlan::with_capacity(h * w);
    for r in 0..h {
        let dy = r as f64 + 0.5 - cy;
        for col in 0..w {
            let dx = col as f64 + 0.5 - cx;
            // Inverse rotation maps each output pixel to its source.
            let sy = co * dy - s * dx + cy - 0.5;
            let sx = s * dy + co * dx + cx - 0.5;
            let (r0, c0) = (sy.floor(), sx.floor());
            let (fr, fc) = ((sy - r0) as f32, (sx - c0) as f32);
            let mut taps = [0u32; 4];
            let mut weights = [(1.0 - fr) * (1.0 - fc), (1.0 - fr) * fc, fr * (1.0 - fc), fr * fc];
            for (t, (dr, dc)) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)].into_iter().enumerate() {
                let (rr, cc) = (r0 + dr, c0 + dc);
                if rr < 0.0 || cc < 0.0 || rr >= h as f64 || cc >= w as f64 {
                    weights[t] = 0.0;
                } else {
                    taps[t] = (rr as usize * w + cc as usize) as u32;
                }
            }
            plan.taps.push(taps);
            plan.weights.push(weights);
        }
    }
    plan.apply(grid, true)
}

pub fn random_rotate(grid: &GridSequence, range_deg: (f64, f64), rng: &mut Rng) -> GridSequence {
    let (lo, hi) = range_deg;
    let angle = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    rotate(grid, angle)
}

/// Adds i.i.d. Gaussian noise and clamps to `[0, 1]`.
pub fn add_noise(grid: &GridSequence, sigma: f64, rng: &mut Rng) -> GridSequence {
    let mut out = grid.clone();
    if sigma == 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    for v in &mut out.data {
        *v = (*v + normal.sample(rng) as f32).clamp(0.0, 1.0);
    }
    out
}

/// Mirror index without repeating the edge sample: `-1 → 1`, `n → n-2`.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| (w / total) as f32).collect()
}

/// Separable Gaussian blur with kernel radius `⌈3σ⌉` and reflected edges.
/// `sigma == 0` leaves the grid unchanged.
pub fn blur(grid: &GridSequence, sigma: f64) -> GridSequence {
    if sigma <= 0.0 {
        return grid.clone();
    }
    let (c, h, w) = grid.shape();
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let col_src: Vec<usize> = (-radius..w as isize + radius).map(|i| reflect(i, w)).collect();
    let row_src: Vec<usize> = (-radius..h as isize + radius).map(|i| reflect(i, h)).collect();
    let mut out = grid.clone();
    let mut tmp = vec![0.0f32; h * w];
    let mut padded = vec![0.0f32; col_src.len()];
    for k in 0..c {
        let src = grid.frame(k);
        for r in 0..h {
            let row = &src[r * w..(r + 1) * w];
            for (p, &i) in padded.iter_mut().zip(&col_src) {
                *p = row[i];
            }
            let dst = &mut tmp[r * w..(r + 1) * w];
            for (col, d) in dst.iter_mut().enumerate() {
                *d = kernel.iter().zip(&padded[col..]).map(|(kv, v)| kv * v).sum();
            }
        }
        let dst = out.frame_mut(k);
        dst.fill(0.0);
        for r in 0..h {
            let out_row = &mut dst[r * w..(r + 1) * w];
            for (j, kv) in kernel.iter().enumerate() {
                let sr = row_src[r + j];
                for (o, v) in out_row.iter_mut().zip(&tmp[sr * w..(sr + 1) * w]) {
                    *o += kv * v;
                }
            }
        }
    }
    out
}

pub fn gaussian_blur(grid: &GridSequence, sigma_range: (f64, f64), rng: &mut Rng) -> GridSequence {
    let (lo, hi) = sigma_range;
    let sigma = if lo < hi { rng.random_range(lo..=hi) } else { lo };
    blur(grid, sigma)
}

/// Crop → rotate → noise → blur.
pub fn base_pipeline(grid: &GridSequence, config: &BaseAugConfig, rng: &mut Rng) -> Result<GridSequence> {
    let (_, h, w) = grid.shape();
    config.validate(h, w)?;
    let g = random_crop(grid, config.crop, rng)?;
    let g = random_rotate(&g, config.rotation_deg, rng);
    let g = add_noise(&g, config.noise_sigma, rng);
    Ok(gaussian_blur(&g, config.blur_sigma, rng))
}
