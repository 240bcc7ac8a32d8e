use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Source pixel -> canonical pixel correspondence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub src: [f64; 2],
    pub dst: [f64; 2],
}

/// Projective 3x3 transform, scaled so that `h[2][2] = 1` whenever it is nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let mut m = m;
        if m[(2, 2)].abs() > 1e-12 {
            m /= m[(2, 2)];
        }
        if !m.iter().all(|v| v.is_finite()) || m.determinant().abs() <= 1e-9 {
            return Err(Error::Degenerate(format!("homography is not invertible: {m}")));
        }
        Ok(Homography(m))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Homography {
        let inv = self.0.try_inverse().expect("invertibility checked at construction");
        let mut m = inv;
        if m[(2, 2)].abs() > 1e-12 {
            m /= m[(2, 2)];
        }
        Homography(m)
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let v = self.0 * Vector3::new(p[0], p[1], 1.0);
        [v[0] / v[2], v[1] / v[2]]
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

fn collinear(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let scale = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2))
        .max((c[0] - a[0]).powi(2) + (c[1] - a[1]).powi(2))
        .max(1e-300);
    cross.abs() <= 1e-9 * scale
}

fn check_no_collinear(points: &[[f64; 2]]) -> Result<()> {
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if collinear(points[i], points[j], points[k]) {
                    return Err(Error::Degenerate(format!(
                        "source points {i}, {j}, {k} are collinear"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Similarity that moves the centroid to the origin and scales the mean
/// distance to sqrt(2).
fn normalizer(points: &[[f64; 2]]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = points.iter().map(|p| p[1]).sum::<f64>() / n;
    let mean_d = points
        .iter()
        .map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let s = if mean_d > 0.0 { std::f64::consts::SQRT_2 / mean_d } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Normalized direct linear transform over `>= 4` correspondences.
pub fn estimate_homography(corr: &[Correspondence]) -> Result<Homography> {
    if corr.len() < 4 {
        return Err(Error::Degenerate(format!(
            "{} correspondences, need at least 4",
            corr.len()
        )));
    }
    let src: Vec<[f64; 2]> = corr.iter().map(|c| c.src).collect();
    let dst: Vec<[f64; 2]> = corr.iter().map(|c| c.dst).collect();
    if src.iter().chain(&dst).any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Degenerate("non-finite coordinate".into()));
    }
    check_no_collinear(&src)?;

    let ts = normalizer(&src);
    let td = normalizer(&dst);
    let rows = (2 * corr.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (s, d)) in src.iter().zip(&dst).enumerate() {
        let sp = ts * Vector3::new(s[0], s[1], 1.0);
        let dp = td * Vector3::new(d[0], d[1], 1.0);
        let (x, y) = (sp[0] / sp[2], sp[1] / sp[2]);
        let (u, v) = (dp[0] / dp[2], dp[1] / dp[2]);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(2 * i, c)] = r0[c];
            a[(2 * i + 1, c)] = r1[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let sv = &svd.singular_values;
    let largest = sv[order[order.len() - 1]];
    if largest <= 0.0 || sv[order[1]] / largest < 1e-10 {
        return Err(Error::Degenerate("DLT system is rank-deficient".into()));
    }
    let h = v_t.row(order[0]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td.try_inverse().expect("similarity is invertible");
    Homography::from_matrix(td_inv * hn * ts)
}

/// Bed-plane correspondences plus the canonical crop they map into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BedGeometry {
    pub correspondences: Vec<Correspondence>,
    pub canonical_width: usize,
    pub canonical_height: usize,
}

impl BedGeometry {
    pub fn new(correspondences: Vec<Correspondence>, canonical_width: usize, canonical_height: usize) -> Result<Self> {
        if correspondences.len() < 4 {
            return Err(Error::Degenerate(format!(
                "{} correspondences, need at least 4",
                correspondences.len()
            )));
        }
        let src: Vec<_> = correspondences.iter().map(|c| c.src).collect();
        check_no_collinear(&src)?;
        Ok(BedGeometry {
            correspondences,
            canonical_width,
            canonical_height,
        })
    }

    /// Geometry mapping four source corners (TL, TR, BR, BL) onto the
    /// corners of the canonical crop.
    pub fn from_corners(corners: [[f64; 2]; 4], canonical_width: usize, canonical_height: usize) -> Result<Self> {
        let (w, h) = ((canonical_width - 1) as f64, (canonical_height - 1) as f64);
        let dst = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
        let corr = corners
            .iter()
            .zip(dst)
            .map(|(&src, dst)| Correspondence { src, dst })
            .collect();
        BedGeometry::new(corr, canonical_width, canonical_height)
    }

    /// First row of the lower region; rows `[0, boundary)` are the upper third.
    pub fn upper_boundary(&self) -> usize {
        self.canonical_height / 3
    }

    pub fn homography(&self) -> Result<Homography> {
        estimate_homography(&self.correspondences)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(pairs: &[([f64; 2], [f64; 2])]) -> Vec<Correspondence> {
        pairs.iter().map(|&(src, dst)| Correspondence { src, dst }).collect()
    }

    fn max_err(h: &Homography, expect: Matrix3<f64>) -> f64 {
        (h.matrix() - expect).abs().max()
    }

    #[test]
    fn identity_from_square() {
        let sq = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]];
        let h = estimate_homography(&corr(&sq.map(|p| (p, p)))).unwrap();
        assert!(max_err(&h, Matrix3::identity()) < 1e-9);
    }

    #[test]
    fn translation() {
        let sq = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]];
        let h = estimate_homography(&corr(&sq.map(|p| (p, [p[0] + 5.0, p[1]])))).unwrap();
        let expect = Matrix3::new(1.0, 0.0, 5.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(max_err(&h, expect) < 1e-9);
    }

    #[test]
    fn unit_square_to_rectangle() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let h = estimate_homography(&corr(&sq.map(|p| (p, [2.0 * p[0], p[1]])))).unwrap();
        assert!(max_err(&h, Matrix3::new(2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)) < 1e-9);
    }

    #[test]
    fn perspective_reprojection() {
        let truth = Homography::from_matrix(Matrix3::new(
            0.8, 0.15, 12.0, -0.1, 1.1, 7.5, 0.0009, -0.0004, 1.0,
        ))
        .unwrap();
        let src = [[3.0, 4.0], [120.0, 10.0], [110.0, 90.0], [8.0, 95.0], [60.0, 40.0], [30.0, 70.0]];
        let c: Vec<_> = src.iter().map(|&s| Correspondence { src: s, dst: truth.apply(s) }).collect();
        let h = estimate_homography(&c).unwrap();
        let rms = (c
            .iter()
            .map(|c| {
                let p = h.apply(c.src);
                (p[0] - c.dst[0]).powi(2) + (p[1] - c.dst[1]).powi(2)
            })
            .sum::<f64>()
            / c.len() as f64)
            .sqrt();
        assert!(rms < 1e-6, "rms {rms}");
    }

    #[test]
    fn collinear_rejected() {
        let c = corr(&[
            ([0.0, 0.0], [0.0, 0.0]),
            ([1.0, 1.0], [1.0, 0.0]),
            ([2.0, 2.0], [1.0, 1.0]),
            ([0.0, 5.0], [0.0, 1.0]),
        ]);
        assert!(matches!(estimate_homography(&c), Err(Error::Degenerate(_))));
    }

    #[test]
    fn too_few_rejected() {
        let c = corr(&[([0.0, 0.0], [0.0, 0.0]), ([1.0, 0.0], [1.0, 0.0]), ([0.0, 1.0], [0.0, 1.0])]);
        assert!(estimate_homography(&c).is_err());
    }

    #[test]
    fn inverse_roundtrip() {
        let h = Homography::from_matrix(Matrix3::new(1.1, 0.2, 3.0, 0.05, 0.95, -4.0, 0.001, 0.002, 1.0)).unwrap();
        let p = [17.0, 23.0];
        let q = h.inverse().apply(h.apply(p));
        assert!((q[0] - p[0]).abs() < 1e-9 && (q[1] - p[1]).abs() < 1e-9);
    }
}
