use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

use super::dis::{dis_flow, DisParams, FlowField};
use super::homography::{BedGeometry, Homography};
use super::image::{warp_frame, FrameSource, GrayImage};

/// Frames between the two images of a flow pair (20 FPS -> 4 Hz fields).
pub const FRAME_STEP: usize = 5;
/// Fields averaged per output sample.
pub const FIELDS_PER_SAMPLE: usize = 4;

/// Two-region activity at 4 Hz (mean flow magnitude, px per frame step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySeries {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

impl ActivitySeries {
    pub const RATE_HZ: f64 = 4.0;

    pub fn new(upper: Vec<f64>, lower: Vec<f64>) -> Result<Self> {
        if upper.len() != lower.len() {
            return Err(Error::LengthMismatch(format!(
                "upper has {} samples, lower {}",
                upper.len(),
                lower.len()
            )));
        }
        if upper.iter().chain(&lower).any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::DegenerateSeries("activity must be finite and non-negative".into()));
        }
        Ok(ActivitySeries { upper, lower })
    }

    pub fn zeros(n: usize) -> Self {
        ActivitySeries {
            upper: vec![0.0; n],
            lower: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActivityParams {
    pub dis: DisParams,
    /// Fields computed per parallel batch (bounds memory, not results).
    #[serde(skip)]
    pub batch: usize,
}

/// Number of flow fields for `n_frames` (pairs `(5j, 5j+5)` within range).
pub fn n_flow_fields(n_frames: usize) -> usize {
    n_frames.saturating_sub(1) / FRAME_STEP
}

/// Number of 4 Hz output samples for `n_frames`.
pub fn n_activity_samples(n_frames: usize) -> usize {
    n_frames / FRAME_STEP
}

fn region_means(sum_dx: &[f32], sum_dy: &[f32], count: usize, width: usize, boundary: usize) -> (f64, f64) {
    let inv = 1.0 / count as f32;
    let (mut up, mut lo) = (0.0f64, 0.0f64);
    for (i, (a, b)) in sum_dx.iter().zip(sum_dy).enumerate() {
        let (a, b) = (a * inv, b * inv);
        let m = (a * a + b * b).sqrt() as f64;
        if i / width < boundary {
            up += m;
        } else {
            lo += m;
        }
    }
    let height = sum_dx.len() / width;
    let n_up = (boundary * width).max(1) as f64;
    let n_lo = ((height - boundary) * width).max(1) as f64;
    (up / n_up, lo / n_lo)
}

/// Rectify, compute flow between frames `(5j, 5j+5)`, and reduce to 4 Hz.
///
/// Output sample `k` (time `k / 4` s) is the mean magnitude, over each bed
/// region, of the per-pixel mean of fields `k-3 ..= k`; fields that do not
/// exist (before the start or past the end of the video) are left out.
pub fn activity_from_frames(
    frames: &dyn FrameSource,
    geom: &BedGeometry,
    h: &Homography,
    params: &ActivityParams,
) -> Result<ActivitySeries> {
    let n = frames.len();
    let need = FIELDS_PER_SAMPLE * FRAME_STEP + 1;
    if n < need {
        return Err(Error::TooFewFrames { got: n, need });
    }
    let (cw, ch) = (geom.canonical_width, geom.canonical_height);
    let boundary = geom.upper_boundary();
    let n_fields = n_flow_fields(n);
    let n_out = n_activity_samples(n);
    let batch = if params.batch == 0 { 64 } else { params.batch };

    let rectify = |frame_index: usize| -> Result<GrayImage> {
        Ok(warp_frame(&frames.frame(frame_index)?, h, cw, ch))
    };

    let mut upper = Vec::with_capacity(n_out);
    let mut lower = Vec::with_capacity(n_out);
    // Fields kk-3..=kk, carried across batches.
    let mut window: VecDeque<(usize, FlowField)> = VecDeque::new();
    let mut k = 0;
    while k < n_out {
        let k_end = (k + batch).min(n_out);
        let f_end = k_end.min(n_fields);
        let fields: Vec<FlowField> = if k < f_end {
            let rectified = par::try_map_range(f_end - k + 1, |i| rectify((k + i) * FRAME_STEP))?;
            par::try_map_range(f_end - k, |i| dis_flow(&rectified[i], &rectified[i + 1], &params.dis))?
        } else {
            Vec::new()
        };
        let mut fields = fields.into_iter();
        for kk in k..k_end {
            if kk < n_fields {
                window.push_back((kk, fields.next().expect("field computed for this batch")));
            }
            while window.front().is_some_and(|(j, _)| j + FIELDS_PER_SAMPLE <= kk) {
                window.pop_front();
            }
            let mut sx = vec![0.0f32; cw * ch];
            let mut sy = vec![0.0f32; cw * ch];
            for (_, f) in &window {
                for (acc, v) in sx.iter_mut().zip(&f.dx) {
                    *acc += v;
                }
                for (acc, v) in sy.iter_mut().zip(&f.dy) {
                    *acc += v;
                }
            }
            let (u, l) = region_means(&sx, &sy, window.len(), cw, boundary);
            upper.push(u);
            lower.push(l);
        }
        k = k_end;
    }
    ActivitySeries::new(upper, lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::image::VecFrames;

    #[test]
    fn length_formula() {
        assert_eq!(n_activity_samples(1200), 240);
        assert_eq!(n_flow_fields(1200), 239);
        assert_eq!(n_activity_samples(21), 4);
        assert_eq!(n_flow_fields(21), 4);
        assert_eq!(n_activity_samples(24), 4);
        assert_eq!(n_flow_fields(26), 5);
    }

    #[test]
    fn too_few_frames() {
        let frames = VecFrames(vec![GrayImage::new(40, 40); 20]);
        let geom = BedGeometry::from_corners([[0.0, 0.0], [39.0, 0.0], [39.0, 39.0], [0.0, 39.0]], 40, 40).unwrap();
        let err = activity_from_frames(&frames, &geom, &Homography::identity(), &ActivityParams::default());
        assert!(matches!(err, Err(Error::TooFewFrames { got: 20, need: 21 })));
    }

    #[test]
    fn region_split() {
        // 3 rows, width 1: row 0 upper, rows 1..3 lower.
        let (u, l) = region_means(&[3.0, 0.0, 4.0], &[4.0, 0.0, 0.0], 1, 1, 1);
        assert_eq!(u, 5.0);
        assert_eq!(l, 2.0);
    }
}
