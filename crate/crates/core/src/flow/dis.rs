//! Dense Inverse Search optical flow (fast variant, no variational refinement).
//!
//! Coarse to fine over a factor-2 pyramid. At every level each overlapping
//! patch of the first image is aligned to the second image by inverse
//! compositional Gauss-Newton on a pure translation, starting from the
//! upsampled flow of the coarser level. Patch flows are then densified by
//! averaging the flows of all patches covering a pixel, weighted by the
//! inverse of their photometric residual at that pixel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisParams {
    pub patch_size: usize,
    pub stride: usize,
    pub max_iters: usize,
    /// Early exit once the Gauss-Newton update norm drops below this (px).
    pub min_update: f32,
    /// Coarsest pyramid level keeps both dimensions at least this large.
    pub min_coarse_dim: usize,
}

impl Default for DisParams {
    fn default() -> Self {
        DisParams {
            patch_size: 8,
            stride: 4,
            max_iters: 12,
            min_update: 0.01,
            min_coarse_dim: 16,
        }
    }
}

/// Per-pixel displacement from the first to the second frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<f32>,
    pub dy: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            dx: vec![0.0; width * height],
            dy: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.dx[i], self.dy[i])
    }

    pub fn magnitude(&self) -> Vec<f32> {
        self.dx
            .iter()
            .zip(&self.dy)
            .map(|(a, b)| (a * a + b * b).sqrt())
            .collect()
    }

    pub fn max_magnitude(&self) -> f32 {
        self.magnitude().into_iter().fold(0.0, f32::max)
    }

    /// Factor-2 upsampling to `(width, height)`, scaling vectors by 2.
    fn upscale(&self, width: usize, height: usize) -> FlowField {
        let mut out = FlowField::zeros(width, height);
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        let dx = GrayImage {
            width: self.width,
            height: self.height,
            data: self.dx.clone(),
        };
        let dy = GrayImage {
            width: self.width,
            height: self.height,
            data: self.dy.clone(),
        };
        for y in 0..height {
            let cy = (y as f32 + 0.5) * sy - 0.5;
            for x in 0..width {
                let cx = (x as f32 + 0.5) * sx - 0.5;
                let i = y * width + x;
                out.dx[i] = 2.0 * dx.sample_clamped(cx, cy);
                out.dy[i] = 2.0 * dy.sample_clamped(cx, cy);
            }
        }
        out
    }
}

fn pyramid(img: &GrayImage, levels: usize) -> Vec<GrayImage> {
    let mut pyr = vec![img.clone()];
    for _ in 1..levels {
        let next = pyr.last().unwrap().half();
        pyr.push(next);
    }
    pyr
}

fn n_levels(width: usize, height: usize, min_dim: usize) -> usize {
    let mut levels = 1;
    let (mut w, mut h) = (width, height);
    while w / 2 >= min_dim && h / 2 >= min_dim {
        w /= 2;
        h /= 2;
        levels += 1;
    }
    levels
}

/// Central-difference gradients, one-sided at the border.
fn gradients(img: &GrayImage) -> (Vec<f32>, Vec<f32>) {
    let (w, h) = (img.width, img.height);
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            gx[y * w + x] = (img.get(xr, y) - img.get(xl, y)) / (xr - xl).max(1) as f32;
            gy[y * w + x] = (img.get(x, yd) - img.get(x, yu)) / (yd - yu).max(1) as f32;
        }
    }
    (gx, gy)
}

fn grid(len: usize, patch: usize, stride: usize) -> Vec<usize> {
    let last = len - patch;
    let mut v: Vec<usize> = (0..=last).step_by(stride).collect();
    if *v.last().unwrap() != last {
        v.push(last);
    }
    v
}

/// Whether `(x, y)` lies inside an image of `w x h` pixels.
#[inline]
fn inside(x: f32, y: f32, w: usize, h: usize) -> bool {
    x >= 0.0 && y >= 0.0 && x <= (w - 1) as f32 && y <= (h - 1) as f32
}

/// Gauss-Newton translation search for one patch. Pixels displaced outside
/// the target frame are left out of the normal equations.
#[allow(clippy::too_many_arguments)]
fn search_patch(
    tmpl: &GrayImage,
    gx: &[f32],
    gy: &[f32],
    target: &GrayImage,
    px: usize,
    py: usize,
    init: (f32, f32),
    params: &DisParams,
) -> (f32, f32) {
    let p = params.patch_size;
    let (w, h) = (tmpl.width, tmpl.height);
    let (mut u, mut v) = init;
    for _ in 0..params.max_iters {
        let (mut hxx, mut hxy, mut hyy) = (0.0f64, 0.0f64, 0.0f64);
        let (mut bx, mut by) = (0.0f64, 0.0f64);
        let mut used = 0;
        for y in py..py + p {
            for x in px..px + p {
                let (tx, ty) = (x as f32 + u, y as f32 + v);
                if !inside(tx, ty, w, h) {
                    continue;
                }
                let i = y * w + x;
                let (a, b) = (gx[i] as f64, gy[i] as f64);
                let r = (target.sample_clamped(tx, ty) - tmpl.data[i]) as f64;
                hxx += a * a;
                hxy += a * b;
                hyy += b * b;
                bx += a * r;
                by += b * r;
                used += 1;
            }
        }
        let det = hxx * hyy - hxy * hxy;
        if used * 4 < p * p || det <= 1e-6 * (hxx + hyy).powi(2).max(1e-12) {
            break;
        }
        let du = ((hyy * bx - hxy * by) / det) as f32;
        let dv = ((hxx * by - hxy * bx) / det) as f32;
        u -= du;
        v -= dv;
        if (du * du + dv * dv).sqrt() < params.min_update {
            break;
        }
    }
    let limit = p as f32;
    if !(u.is_finite() && v.is_finite()) || ((u - init.0).powi(2) + (v - init.1).powi(2)).sqrt() > limit {
        return init;
    }
    (u, v)
}

fn refine_level(tmpl: &GrayImage, target: &GrayImage, init: &FlowField, params: &DisParams) -> FlowField {
    let (w, h) = (tmpl.width, tmpl.height);
    let p = params.patch_size.min(w).min(h);
    let params = DisParams { patch_size: p, ..*params };
    let (gx, gy) = gradients(tmpl);
    let xs = grid(w, p, params.stride);
    let ys = grid(h, p, params.stride);

    let mut sum_w = vec![0.0f32; w * h];
    let mut sum_u = vec![0.0f32; w * h];
    let mut sum_v = vec![0.0f32; w * h];
    // Plain mean of covering patches, for pixels that leave the frame under
    // every covering patch's displacement.
    let mut cover = vec![(0u32, 0.0f32, 0.0f32); w * h];
    for &py in &ys {
        for &px in &xs {
            let c = init.get(px + p / 2, py + p / 2);
            let (u, v) = search_patch(tmpl, &gx, &gy, target, px, py, c, &params);
            for y in py..py + p {
                for x in px..px + p {
                    let i = y * w + x;
                    cover[i].0 += 1;
                    cover[i].1 += u;
                    cover[i].2 += v;
                    let (tx, ty) = (x as f32 + u, y as f32 + v);
                    if !inside(tx, ty, w, h) {
                        continue;
                    }
                    let r = (target.sample_clamped(tx, ty) - tmpl.data[i]).abs();
                    let wt = 1.0 / r.max(1.0);
                    sum_w[i] += wt;
                    sum_u[i] += wt * u;
                    sum_v[i] += wt * v;
                }
            }
        }
    }
    let mut out = init.clone();
    for i in 0..w * h {
        if sum_w[i] > 0.0 {
            out.dx[i] = sum_u[i] / sum_w[i];
            out.dy[i] = sum_v[i] / sum_w[i];
        } else if cover[i].0 > 0 {
            let n = cover[i].0 as f32;
            out.dx[i] = cover[i].1 / n;
            out.dy[i] = cover[i].2 / n;
        }
    }
    out
}

/// Dense flow from `prev` to `next`; both frames must share dimensions of at
/// least 32x32.
pub fn dis_flow(prev: &GrayImage, next: &GrayImage, params: &DisParams) -> Result<FlowField> {
    if prev.width != next.width || prev.height != next.height {
        return Err(Error::DimMismatch(format!(
            "{}x{} vs {}x{}",
            prev.width, prev.height, next.width, next.height
        )));
    }
    if prev.width < 32 || prev.height < 32 {
        return Err(Error::DimMismatch(format!(
            "frames are {}x{}, need at least 32x32",
            prev.width, prev.height
        )));
    }
    // Zero residual everywhere: every update is zero, so the result is exact.
    if prev.data == next.data {
        return Ok(FlowField::zeros(prev.width, prev.height));
    }
    let levels = n_levels(prev.width, prev.height, params.min_coarse_dim.max(1));
    let pa = pyramid(prev, levels);
    let pb = pyramid(next, levels);

    let coarsest = &pa[levels - 1];
    let mut flow = FlowField::zeros(coarsest.width, coarsest.height);
    for lvl in (0..levels).rev() {
        let (a, b) = (&pa[lvl], &pb[lvl]);
        if flow.width != a.width || flow.height != a.height {
            flow = flow.upscale(a.width, a.height);
        }
        flow = refine_level(a, b, &flow, params);
    }
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_count() {
        assert_eq!(n_levels(64, 64, 16), 3);
        assert_eq!(n_levels(32, 48, 16), 2);
        assert_eq!(n_levels(128, 192, 16), 4);
        assert_eq!(n_levels(40, 40, 16), 2);
    }

    #[test]
    fn patch_grid_covers_border() {
        assert_eq!(grid(16, 8, 4), vec![0, 4, 8]);
        assert_eq!(grid(18, 8, 4), vec![0, 4, 8, 10]);
    }

    #[test]
    fn rejects_mismatched_or_small() {
        let a = GrayImage::new(32, 32);
        let b = GrayImage::new(33, 32);
        assert!(matches!(dis_flow(&a, &b, &DisParams::default()), Err(Error::DimMismatch(_))));
        let c = GrayImage::new(16, 16);
        assert!(dis_flow(&c, &c, &DisParams::default()).is_err());
    }

    #[test]
    fn flat_images_give_zero_flow() {
        let a = GrayImage::from_fn(40, 40, |_, _| 100.0);
        let f = dis_flow(&a, &a, &DisParams::default()).unwrap();
        assert_eq!(f.max_magnitude(), 0.0);
    }
}
