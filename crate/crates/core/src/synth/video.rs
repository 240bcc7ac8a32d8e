//! Synthetic NIR video of a bed seen through a configurable camera pose.
//!
//! The scene lives in canonical bed coordinates (the rectified crop): a
//! textured mattress with a head disc in the upper third and a body ellipse in
//! the lower two thirds. Subject movement is horizontal back-and-forth
//! translation of the discs in bouts whose probability and speed depend on the
//! sleep stage. Frames are rendered on demand by mapping each camera pixel into
//! canonical coordinates, so any pose sees the same scene and motion.

use std::sync::Mutex;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{BedGeometry, FrameSource, GrayImage, Homography};
use crate::rng;
use crate::stage::Hypnogram;

use super::SynthConfig;

pub const FPS: usize = 20;
const FRAMES_PER_STEP: usize = 5;
const STEPS_PER_SECOND: usize = FPS / FRAMES_PER_STEP;

/// Fixed camera placements, expressed for a 160x160 sensor and scaled to the
/// configured frame size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CameraPose {
    /// Camera at the foot end, bed running top to bottom.
    RoomA,
    /// Camera at the side, bed running left to right with the head on the left.
    RoomB,
}

impl CameraPose {
    /// Source pixels of the canonical TL, TR, BR, BL corners.
    pub fn corners(self, width: usize, height: usize) -> [[f64; 2]; 4] {
        let base = match self {
            CameraPose::RoomA => [[35.0, 10.0], [125.0, 10.0], [150.0, 152.0], [10.0, 152.0]],
            CameraPose::RoomB => [[10.0, 135.0], [10.0, 25.0], [152.0, 10.0], [152.0, 150.0]],
        };
        let (sx, sy) = (width as f64 / 160.0, height as f64 / 160.0);
        base.map(|p| [p[0] * sx, p[1] * sy])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VideoConfig {
    pub width: usize,
    pub height: usize,
    pub fps: usize,
    pub canonical_width: usize,
    pub canonical_height: usize,
    pub camera: CameraPose,
    /// Explicit corner placement; overrides `camera` when set.
    pub bed_corners: Option<[[f64; 2]; 4]>,
    /// Movement speed per stage, canonical px per frame step (5 frames).
    pub amplitude: [f64; 5],
    /// Probability that an epoch of each stage contains a movement bout.
    pub bout_prob: [f64; 5],
    pub bout_min_s: usize,
    pub bout_max_s: usize,
    /// Frame steps between direction reversals within a bout.
    pub flip_steps: usize,
    /// Texture lattice spacing, canonical px.
    pub texture_scale: f64,
}

impl Default for VideoConfig {
    fn default() -> Self {
        VideoConfig {
            width: 160,
            height: 160,
            fps: FPS,
            canonical_width: 128,
            canonical_height: 192,
            camera: CameraPose::RoomA,
            bed_corners: None,
            amplitude: [3.0, 1.5, 1.0, 0.0, 0.5],
            bout_prob: [0.7, 0.35, 0.12, 0.0, 0.3],
            bout_min_s: 2,
            bout_max_s: 8,
            flip_steps: 8,
            texture_scale: 6.0,
        }
    }
}

impl VideoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fps != FPS {
            return Err(Error::Config(format!("video fps must be {FPS}, got {}", self.fps)));
        }
        if self.canonical_width < 32 || self.canonical_height < 32 || self.width < 8 || self.height < 8 {
            return Err(Error::Config("video dimensions too small (canonical crop needs >= 32x32)".into()));
        }
        if self.bout_min_s == 0 || self.bout_min_s > self.bout_max_s || self.bout_max_s > 30 {
            return Err(Error::Config("bout duration range must satisfy 1 <= min <= max <= 30".into()));
        }
        if self.amplitude.iter().any(|&a| !(a >= 0.0)) || self.bout_prob.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(Error::Config("amplitudes must be >= 0 and bout probabilities in [0, 1]".into()));
        }
        if self.flip_steps == 0 || !(self.texture_scale > 0.0) {
            return Err(Error::Config("flip_steps and texture_scale must be positive".into()));
        }
        Ok(())
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        self.bed_corners.unwrap_or_else(|| self.camera.corners(self.width, self.height))
    }

    pub fn geometry(&self) -> Result<BedGeometry> {
        BedGeometry::from_corners(self.corners(), self.canonical_width, self.canonical_height)
    }
}

fn hash2(seed: u64, i: i64, j: i64) -> f32 {
    let h = rng::derive_index(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15), j as u64);
    (h >> 40) as f32 / (1u64 << 24) as f32
}

fn smooth(t: f32) -> f32 {
    t * t * (3.0 - 2.0 * t)
}

fn value_noise(seed: u64, x: f32, y: f32, scale: f32) -> f32 {
    let (gx, gy) = (x / scale, y / scale);
    let (i, j) = (gx.floor(), gy.floor());
    let (fx, fy) = (smooth(gx - i), smooth(gy - j));
    let (i, j) = (i as i64, j as i64);
    let a = hash2(seed, i, j);
    let b = hash2(seed, i + 1, j);
    let c = hash2(seed, i, j + 1);
    let d = hash2(seed, i + 1, j + 1);
    let top = a + fx * (b - a);
    let bot = c + fx * (d - c);
    top + fy * (bot - top)
}

fn texture(seed: u64, x: f32, y: f32, scale: f32, lo: f32, hi: f32) -> f32 {
    let n = 0.65 * value_noise(seed, x, y, scale) + 0.35 * value_noise(seed ^ 0x55, x, y, scale / 2.2);
    lo + (hi - lo) * n
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    cx: f32,
    cy: f32,
    rx: f32,
    ry: f32,
}

impl Blob {
    /// Soft membership in [0, 1] with a ~1.5 px edge ramp.
    fn alpha(&self, u: f32, v: f32, offset: f32) -> f32 {
        let dx = (u - self.cx - offset) / self.rx;
        let dy = (v - self.cy) / self.ry;
        let r = (dx * dx + dy * dy).sqrt();
        let edge = 1.5 / self.rx.min(self.ry);
        ((1.0 - r) / edge + 0.5).clamp(0.0, 1.0)
    }
}

/// On-demand renderer for one synthetic night.
pub struct SynthVideo {
    cfg: VideoConfig,
    seed: u64,
    to_canonical: Homography,
    geometry: BedGeometry,
    blobs: [Blob; 2],
    /// Per-step horizontal blob position (head, body) at step boundaries.
    positions: Vec<[f32; 2]>,
    n_frames: usize,
    background: GrayImage,
    /// Source-pixel boxes that blobs may touch: (x0, y0, x1, y1), exclusive end.
    boxes: [(usize, usize, usize, usize); 2],
    /// Most recent render keyed by blob offsets; the subject is still in most frames.
    last: Mutex<Option<([u32; 2], GrayImage)>>,
}

impl SynthVideo {
    pub fn geometry(&self) -> &BedGeometry {
        &self.geometry
    }

    pub fn config(&self) -> &VideoConfig {
        &self.cfg
    }

    /// Ground-truth blob displacement (head, body) between frames `5k` and `5k+5`.
    pub fn step_displacement(&self, step: usize) -> [f32; 2] {
        let a = self.positions[step];
        let b = self.positions[(step + 1).min(self.positions.len() - 1)];
        [b[0] - a[0], b[1] - a[1]]
    }

    fn offsets(&self, frame: usize) -> [f32; 2] {
        let k = frame / FRAMES_PER_STEP;
        let f = (frame % FRAMES_PER_STEP) as f32 / FRAMES_PER_STEP as f32;
        let a = self.positions[k.min(self.positions.len() - 1)];
        let b = self.positions[(k + 1).min(self.positions.len() - 1)];
        [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
    }

    fn shade(&self, x: usize, y: usize, offsets: [f32; 2]) -> f32 {
        let [u, v] = self.to_canonical.apply([x as f64, y as f64]);
        let (u, v) = (u as f32, v as f32);
        let s = self.cfg.texture_scale as f32;
        let (cw, ch) = (self.cfg.canonical_width as f32, self.cfg.canonical_height as f32);
        let mut val = if u >= -0.5 && v >= -0.5 && u <= cw - 0.5 && v <= ch - 0.5 {
            texture(self.seed ^ 1, u, v, s, 70.0, 190.0)
        } else {
            texture(self.seed ^ 2, u, v, s * 1.5, 15.0, 70.0)
        };
        for (b, (blob, off)) in self.blobs.iter().zip(offsets).enumerate() {
            let a = blob.alpha(u, v, off);
            if a > 0.0 {
                let t = texture(self.seed ^ (3 + b as u64), u - off, v, s, 30.0, 230.0);
                val = (1.0 - a) * val + a * t;
            }
        }
        val.round().clamp(0.0, 255.0)
    }
}

impl FrameSource for SynthVideo {
    fn len(&self) -> usize {
        self.n_frames
    }

    fn frame(&self, index: usize) -> Result<GrayImage> {
        if index >= self.n_frames {
            return Err(Error::IndexOutOfRange { index, len: self.n_frames });
        }
        let off = self.offsets(index);
        let key = off.map(f32::to_bits);
        if let Some((k, img)) = self.last.lock().expect("cache lock").as_ref() {
            if *k == key {
                return Ok(img.clone());
            }
        }
        let mut img = self.background.clone();
        for &(x0, y0, x1, y1) in &self.boxes {
            for y in y0..y1 {
                for x in x0..x1 {
                    img.set(x, y, self.shade(x, y, off));
                }
            }
        }
        *self.last.lock().expect("cache lock") = Some((key, img.clone()));
        Ok(img)
    }
}

fn gen_positions(h: &Hypnogram, cfg: &VideoConfig, max_offset: f32, seed: u64) -> Vec<[f32; 2]> {
    let steps_per_epoch = h.epoch_duration_s() * STEPS_PER_SECOND;
    let n_steps = h.len() * steps_per_epoch;
    let mut velocity = vec![[0.0f32; 2]; n_steps];
    let mut r = rng::stream(seed, "synth/video/motion");
    for (e, &stage) in h.stages().iter().enumerate() {
        // Fixed number of draws per epoch keeps epochs independent of each other.
        let happens = r.random::<f64>() < cfg.bout_prob[stage.index()];
        let dur = r.random_range(cfg.bout_min_s..=cfg.bout_max_s);
        let start = r.random_range(0..=h.epoch_duration_s() - dur);
        let kind = r.random::<f64>();
        let dir0 = if r.random::<bool>() { 1.0f32 } else { -1.0 };
        let amp = cfg.amplitude[stage.index()] as f32;
        if !happens || amp == 0.0 {
            continue;
        }
        let parts = if kind < 0.5 {
            [true, true]
        } else if kind < 0.75 {
            [true, false]
        } else {
            [false, true]
        };
        let s0 = e * steps_per_epoch + start * STEPS_PER_SECOND;
        let mut dir = dir0;
        for i in 0..dur * STEPS_PER_SECOND {
            if i > 0 && i % cfg.flip_steps == 0 {
                dir = -dir;
            }
            for (b, &on) in parts.iter().enumerate() {
                if on {
                    velocity[s0 + i][b] = dir * amp;
                }
            }
        }
    }
    // Integrate, reflecting the direction of a step that would leave the range.
    let mut pos = vec![[0.0f32; 2]; n_steps + 1];
    for k in 0..n_steps {
        for b in 0..2 {
            let mut v = velocity[k][b];
            if (pos[k][b] + v).abs() > max_offset {
                v = -v;
            }
            pos[k + 1][b] = pos[k][b] + v;
        }
    }
    pos
}

/// Render-on-demand video for `h` under `cfg.video` (20 FPS, 600 frames per epoch).
pub fn gen_video(h: &Hypnogram, cfg: &SynthConfig) -> Result<SynthVideo> {
    let vc = cfg.video.clone();
    vc.validate()?;
    let geometry = vc.geometry()?;
    let to_canonical = geometry.homography()?;
    let (cw, ch) = (vc.canonical_width as f32, vc.canonical_height as f32);
    let blobs = [
        Blob { cx: 0.5 * cw, cy: 0.17 * ch, rx: 0.13 * ch.min(1.5 * cw), ry: 0.13 * ch.min(1.5 * cw) },
        Blob { cx: 0.5 * cw, cy: 0.64 * ch, rx: 0.28 * cw, ry: 0.27 * ch },
    ];
    let max_offset = 0.12 * cw;
    let positions = gen_positions(h, &vc, max_offset, cfg.seed);
    let n_frames = h.duration_s() * FPS;

    let to_source = to_canonical.inverse();
    let margin = max_offset + 3.0;
    let boxes = blobs.map(|b| {
        let rect = [
            [b.cx - b.rx - margin, b.cy - b.ry - 3.0],
            [b.cx + b.rx + margin, b.cy - b.ry - 3.0],
            [b.cx + b.rx + margin, b.cy + b.ry + 3.0],
            [b.cx - b.rx - margin, b.cy + b.ry + 3.0],
        ];
        let pts = rect.map(|p| to_source.apply([p[0] as f64, p[1] as f64]));
        let clamp_x = |v: f64| (v.max(0.0) as usize).min(vc.width);
        let clamp_y = |v: f64| (v.max(0.0) as usize).min(vc.height);
        let x0 = clamp_x(pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor() - 1.0);
        let x1 = clamp_x(pts.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil() + 2.0);
        let y0 = clamp_y(pts.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor() - 1.0);
        let y1 = clamp_y(pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil() + 2.0);
        (x0, y0, x1, y1)
    });

    let mut video = SynthVideo {
        seed: rng::derive(cfg.seed, "synth/video/texture"),
        cfg: vc,
        to_canonical,
        geometry,
        blobs,
        positions,
        n_frames,
        background: GrayImage::new(0, 0),
        boxes,
        last: Mutex::new(None),
    };
    let (w, hgt) = (video.cfg.width, video.cfg.height);
    let rest = [0.0f32; 2];
    video.background = GrayImage::from_fn(w, hgt, |x, y| video.shade(x, y, rest));
    Ok(video)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stage::SleepStage::*;

    fn small() -> SynthConfig {
        SynthConfig {
            video: VideoConfig {
                width: 80,
                height: 80,
                canonical_width: 48,
                canonical_height: 72,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn frame_count() {
        let h = Hypnogram::new(vec![Wake, N2]).unwrap();
        assert_eq!(gen_video(&h, &small()).unwrap().len(), 1200);
    }

    #[test]
    fn deep_sleep_is_static() {
        let h = Hypnogram::new(vec![N3; 3]).unwrap();
        let v = gen_video(&h, &small()).unwrap();
        let f0 = v.frame(0).unwrap();
        for i in [1, 5, 599, 1799] {
            assert_eq!(v.frame(i).unwrap(), f0);
        }
    }

    #[test]
    fn boxes_cover_every_changing_pixel() {
        let h = Hypnogram::new(vec![Wake; 4]).unwrap();
        let mut cfg = small();
        cfg.video.bout_prob = [1.0; 5];
        let v = gen_video(&h, &cfg).unwrap();
        let moving = (0..v.len()).step_by(5).find(|&i| v.offsets(i) != [0.0, 0.0]).unwrap();
        let off = v.offsets(moving);
        let fast = v.frame(moving).unwrap();
        let full = GrayImage::from_fn(80, 80, |x, y| v.shade(x, y, off));
        assert_eq!(fast, full);
    }

    #[test]
    fn wake_bout_speed_matches_amplitude() {
        let h = Hypnogram::new(vec![Wake; 2]).unwrap();
        let mut cfg = small();
        cfg.video.bout_prob = [1.0; 5];
        let v = gen_video(&h, &cfg).unwrap();
        let moving: Vec<f32> = (0..240)
            .map(|k| v.step_displacement(k))
            .flat_map(|d| d.into_iter())
            .filter(|d| *d != 0.0)
            .collect();
        assert!(!moving.is_empty());
        assert!(moving.iter().all(|d| (d.abs() - 3.0).abs() < 1e-5));
    }

    #[test]
    fn out_of_range_frame() {
        let h = Hypnogram::new(vec![Wake]).unwrap();
        let v = gen_video(&h, &small()).unwrap();
        assert!(v.frame(600).is_err());
    }
}
