use crate::error::{Error, Result};

use super::homography::Homography;

/// Single-channel image with `f32` intensities (0..=255 for 8-bit sources).
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        GrayImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage { width, height, data }
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height {
            return Err(Error::DimMismatch(format!(
                "{} bytes for a {width}x{height} image",
                bytes.len()
            )));
        }
        Ok(GrayImage {
            width,
            height,
            data: bytes.iter().map(|&b| b as f32).collect(),
        })
    }

    /// Round and clamp to 8-bit.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear sample; `None` outside `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f32> {
        if !(x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64) {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width - 1);
        let y0 = (y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = (x - x0 as f64) as f32;
        let fy = (y - y0 as f64) as f32;
        let top = (1.0 - fx) * self.get(x0, y0) + fx * self.get(x1, y0);
        let bot = (1.0 - fx) * self.get(x0, y1) + fx * self.get(x1, y1);
        Some((1.0 - fy) * top + fy * bot)
    }

    /// Bilinear sample with coordinates clamped to the image.
    #[inline]
    pub(crate) fn sample_clamped(&self, x: f32, y: f32) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f32);
        let y = y.clamp(0.0, (self.height - 1) as f32);
        let x0 = (x as usize).min(self.width - 1);
        let y0 = (y as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f32;
        let fy = y - y0 as f32;
        let r0 = &self.data[y0 * self.width..];
        let r1 = &self.data[y1 * self.width..];
        let top = r0[x0] + fx * (r0[x1] - r0[x0]);
        let bot = r1[x0] + fx * (r1[x1] - r1[x0]);
        top + fy * (bot - top)
    }

    /// 2x2 box downsample (floor dimensions).
    pub(crate) fn half(&self) -> GrayImage {
        let w = self.width / 2;
        let h = self.height / 2;
        GrayImage::from_fn(w, h, |x, y| {
            0.25 * (self.get(2 * x, 2 * y)
                + self.get(2 * x + 1, 2 * y)
                + self.get(2 * x, 2 * y + 1)
                + self.get(2 * x + 1, 2 * y + 1))
        })
    }
}

/// Inverse-mapped bilinear warp. `h` maps source pixels to output pixels;
/// output pixels whose preimage falls outside the source are 0.
pub fn warp_frame(frame: &GrayImage, h: &Homography, out_width: usize, out_height: usize) -> GrayImage {
    let inv = h.inverse();
    let m = inv.matrix();
    let mut out = GrayImage::new(out_width, out_height);
    for v in 0..out_height {
        for u in 0..out_width {
            let (uf, vf) = (u as f64, v as f64);
            let w = m[(2, 0)] * uf + m[(2, 1)] * vf + m[(2, 2)];
            if w.abs() < 1e-12 {
                continue;
            }
            let x = (m[(0, 0)] * uf + m[(0, 1)] * vf + m[(0, 2)]) / w;
            let y = (m[(1, 0)] * uf + m[(1, 1)] * vf + m[(1, 2)]) / w;
            if let Some(s) = frame.sample(x, y) {
                out.set(u, v, s);
            }
        }
    }
    out
}

/// Random-access frame stream.
pub trait FrameSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn frame(&self, index: usize) -> Result<GrayImage>;
}

/// In-memory frames.
pub struct VecFrames(pub Vec<GrayImage>);

impl FrameSource for VecFrames {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn frame(&self, index: usize) -> Result<GrayImage> {
        self.0.get(index).cloned().ok_or(Error::IndexOutOfRange {
            index,
            len: self.0.len(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Matrix3;

    fn ramp(w: usize, h: usize) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| (x * 7 + y * 13 % 255) as f32 % 251.0)
    }

    #[test]
    fn identity_warp_is_exact() {
        let img = ramp(20, 15);
        let out = warp_frame(&img, &Homography::identity(), 20, 15);
        assert_eq!(out, img);
    }

    #[test]
    fn integer_translation_is_bit_equal_inside() {
        let img = ramp(30, 20);
        let h = Homography::from_matrix(Matrix3::new(1.0, 0.0, 5.0, 0.0, 1.0, -2.0, 0.0, 0.0, 1.0)).unwrap();
        let out = warp_frame(&img, &h, 30, 20);
        for v in 0..20 {
            for u in 0..30 {
                let (x, y) = (u as i64 - 5, v as i64 + 2);
                if (0..30).contains(&x) && (0..20).contains(&y) {
                    assert_eq!(out.get(u, v), img.get(x as usize, y as usize));
                } else {
                    assert_eq!(out.get(u, v), 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_frame_warps_to_zero() {
        let img = GrayImage::new(16, 16);
        let h = Homography::from_matrix(Matrix3::new(1.2, 0.1, 3.0, -0.05, 0.9, 1.0, 0.001, 0.0, 1.0)).unwrap();
        let out = warp_frame(&img, &h, 24, 24);
        assert!(out.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bilinear_midpoint() {
        let img = GrayImage::from_fn(2, 2, |x, y| (x * 10 + y * 100) as f32);
        assert_eq!(img.sample(0.5, 0.5), Some(55.0));
        assert_eq!(img.sample(1.0, 1.0), Some(110.0));
        assert_eq!(img.sample(1.01, 0.0), None);
    }
}
