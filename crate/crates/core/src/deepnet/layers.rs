//! Layer primitives with hand-written backward passes.
//!
//! Activations are `(n, c, l)` row-major tensors of f64. Every forward
//! function returns what its backward needs; backward functions accumulate
//! parameter gradients into the caller's slices (`+=`).

/// Batch of 1-D feature maps, shape `(n, c, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub l: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, l: usize) -> Self {
        Tensor { n, c, l, data: vec![0.0; n * c * l] }
    }

    pub fn from_vec(n: usize, c: usize, l: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * l, "tensor data length");
        Tensor { n, c, l, data }
    }

    pub fn same_shape(&self) -> Self {
        Tensor::zeros(self.n, self.c, self.l)
    }
}

/// `c = a * b + beta * c` for strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
    rsc: usize,
    csc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                c[i * rsc + j * csc] *= beta;
            }
        }
        return;
    }
    // Bounds are checked here so the unsafe call below only sees valid strides.
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn pad(&self) -> usize {
        self.k / 2
    }

    pub fn out_len(&self, l_in: usize) -> usize {
        (l_in + 2 * self.pad() - self.k) / self.stride + 1
    }

    pub fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.k
    }
}

pub struct ConvCache {
    /// Per-sample im2col matrices, `(c_in * k, l_out)` each.
    cols: Vec<f64>,
    l_in: usize,
    l_out: usize,
}

/// Bias-free 1-D convolution with "same" zero padding, weights `(c_out, c_in, k)`.
pub fn conv_forward(x: &Tensor, s: ConvShape, w: &[f64]) -> (Tensor, ConvCache) {
    debug_assert_eq!(x.c, s.c_in);
    let l_out = s.out_len(x.l);
    let rows = s.c_in * s.k;
    let pad = s.pad() as isize;
    let mut cols = vec![0.0; x.n * rows * l_out];
    for n in 0..x.n {
        let xs = &x.data[n * x.c * x.l..(n + 1) * x.c * x.l];
        let cn = &mut cols[n * rows * l_out..(n + 1) * rows * l_out];
        for ci in 0..s.c_in {
            for j in 0..s.k {
                let row = &mut cn[(ci * s.k + j) * l_out..(ci * s.k + j + 1) * l_out];
                for (t, v) in row.iter_mut().enumerate() {
                    let src = (t * s.stride) as isize + j as isize - pad;
                    if src >= 0 && (src as usize) < x.l {
                        *v = xs[ci * x.l + src as usize];
                    }
                }
            }
        }
    }
    let mut y = Tensor::zeros(x.n, s.c_out, l_out);
    for n in 0..x.n {
        let cn = &cols[n * rows * l_out..(n + 1) * rows * l_out];
        let yn = &mut y.data[n * s.c_out * l_out..(n + 1) * s.c_out * l_out];
        gemm(s.c_out, rows, l_out, w, rows, 1, cn, l_out, 1, 0.0, yn, l_out, 1);
    }
    (y, ConvCache { cols, l_in: x.l, l_out })
}

/// Returns the input gradient when `need_dx`; accumulates into `dw`.
pub fn conv_backward(dy: &Tensor, s: ConvShape, w: &[f64], cache: &ConvCache, dw: &mut [f64], need_dx: bool) -> Option<Tensor> {
    let rows = s.c_in * s.k;
    let l_out = cache.l_out;
    for n in 0..dy.n {
        let cn = &cache.cols[n * rows * l_out..(n + 1) * rows * l_out];
        let dyn_ = &dy.data[n * s.c_out * l_out..(n + 1) * s.c_out * l_out];
        gemm(s.c_out, l_out, rows, dyn_, l_out, 1, cn, 1, l_out, 1.0, dw, rows, 1);
    }
    if !need_dx {
        return None;
    }
    let mut dx = Tensor::zeros(dy.n, s.c_in, cache.l_in);
    let pad = s.pad() as isize;
    let mut dcols = vec![0.0; rows * l_out];
    for n in 0..dy.n {
        let dyn_ = &dy.data[n * s.c_out * l_out..(n + 1) * s.c_out * l_out];
        gemm(rows, s.c_out, l_out, w, 1, rows, dyn_, l_out, 1, 0.0, &mut dcols, l_out, 1);
        let dxn = &mut dx.data[n * s.c_in * cache.l_in..(n + 1) * s.c_in * cache.l_in];
        for ci in 0..s.c_in {
            for j in 0..s.k {
                let row = &dcols[(ci * s.k + j) * l_out..(ci * s.k + j + 1) * l_out];
                for (t, v) in row.iter().enumerate() {
                    let src = (t * s.stride) as isize + j as isize - pad;
                    if src >= 0 && (src as usize) < cache.l_in {
                        dxn[ci * cache.l_in + src as usize] += v;
                    }
                }
            }
        }
    }
    Some(dx)
}

pub const BN_EPS: f64 = 1e-5;

pub struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    /// Batch mean and unbiased variance, for the running averages.
    pub mean: Vec<f64>,
    pub var_unbiased: Vec<f64>,
}

/// Batch normalisation over `(n, l)` per channel using batch statistics.
pub fn bn_forward_train(x: &Tensor, gamma: &[f64], beta: &[f64]) -> (Tensor, BnCache) {
    let (n, c, l) = (x.n, x.c, x.l);
    let m = (n * l) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for i in 0..n {
            s += x.data[(i * c + ch) * l..(i * c + ch + 1) * l].iter().sum::<f64>();
        }
        let mu = s / m;
        let mut v = 0.0;
        for i in 0..n {
            v += x.data[(i * c + ch) * l..(i * c + ch + 1) * l]
                .iter()
                .map(|a| (a - mu) * (a - mu))
                .sum::<f64>();
        }
        mean[ch] = mu;
        var[ch] = v / m;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.data.len()];
    let mut y = x.same_shape();
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * l;
            for t in 0..l {
                let h = (x.data[base + t] - mean[ch]) * inv_std[ch];
                xhat[base + t] = h;
                y.data[base + t] = gamma[ch] * h + beta[ch];
            }
        }
    }
    let var_unbiased = if m > 1.0 {
        var.iter().map(|v| v * m / (m - 1.0)).collect()
    } else {
        var.clone()
    };
    (y, BnCache { xhat, inv_std, mean, var_unbiased })
}

/// Batch normalisation with fixed statistics.
pub fn bn_forward_eval(x: &Tensor, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64]) -> Tensor {
    let mut y = x.same_shape();
    for i in 0..x.n {
        for ch in 0..x.c {
            let scale = gamma[ch] / (var[ch] + BN_EPS).sqrt();
            let shift = beta[ch] - mean[ch] * scale;
            let base = (i * x.c + ch) * x.l;
            for t in 0..x.l {
                y.data[base + t] = x.data[base + t] * scale + shift;
            }
        }
    }
    y
}

pub fn bn_backward(dy: &Tensor, gamma: &[f64], cache: &BnCache, dgamma: &mut [f64], dbeta: &mut [f64]) -> Tensor {
    let (n, c, l) = (dy.n, dy.c, dy.l);
    let m = (n * l) as f64;
    let mut dx = dy.same_shape();
    for ch in 0..c {
        let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
        for i in 0..n {
            let base = (i * c + ch) * l;
            for t in 0..l {
                sum_dy += dy.data[base + t];
                sum_dy_xhat += dy.data[base + t] * cache.xhat[base + t];
            }
        }
        dgamma[ch] += sum_dy_xhat;
        dbeta[ch] += sum_dy;
        let k = gamma[ch] * cache.inv_std[ch] / m;
        for i in 0..n {
            let base = (i * c + ch) * l;
            for t in 0..l {
                dx.data[base + t] = k * (m * dy.data[base + t] - sum_dy - cache.xhat[base + t] * sum_dy_xhat);
            }
        }
    }
    dx
}

pub fn relu_inplace(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes `dy` where the ReLU output was not positive.
pub fn relu_backward_inplace(dy: &mut [f64], out: &[f64]) {
    for (d, o) in dy.iter_mut().zip(out) {
        if *o <= 0.0 {
            *d = 0.0;
        }
    }
}

fn pool_bin(i: usize, l: usize, p: usize) -> (usize, usize) {
    ((i * l) / p, ((i + 1) * l).div_ceil(p))
}

/// Adaptive average pooling to `p` bins along length.
pub fn pool_forward(x: &Tensor, p: usize) -> Tensor {
    let mut y = Tensor::zeros(x.n, x.c, p);
    for row in 0..x.n * x.c {
        let src = &x.data[row * x.l..(row + 1) * x.l];
        for i in 0..p {
            let (a, b) = pool_bin(i, x.l, p);
            y.data[row * p + i] = src[a..b].iter().sum::<f64>() / (b - a) as f64;
        }
    }
    y
}

pub fn pool_backward(dy: &Tensor, l_in: usize) -> Tensor {
    let p = dy.l;
    let mut dx = Tensor::zeros(dy.n, dy.c, l_in);
    for row in 0..dy.n * dy.c {
        for i in 0..p {
            let (a, b) = pool_bin(i, l_in, p);
            let g = dy.data[row * p + i] / (b - a) as f64;
            for v in &mut dx.data[row * l_in + a..row * l_in + b] {
                *v += g;
            }
        }
    }
    dx
}

/// `y = x W^T + b` for `x` of shape `(n, n_in)` and `W` of shape `(n_out, n_in)`.
pub fn linear_forward(x: &[f64], n: usize, n_in: usize, w: &[f64], b: &[f64], n_out: usize) -> Vec<f64> {
    let mut y = vec![0.0; n * n_out];
    for row in y.chunks_mut(n_out) {
        row.copy_from_slice(b);
    }
    gemm(n, n_in, n_out, x, n_in, 1, w, 1, n_in, 1.0, &mut y, n_out, 1);
    y
}

/// Accumulates into `dw`, `db`; returns `dx`.
#[allow(clippy::too_many_arguments)]
pub fn linear_backward(
    dy: &[f64],
    x: &[f64],
    n: usize,
    n_in: usize,
    w: &[f64],
    n_out: usize,
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    gemm(n_out, n, n_in, dy, 1, n_out, x, n_in, 1, 1.0, dw, n_in, 1);
    for row in dy.chunks(n_out) {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dx = vec![0.0; n * n_in];
    gemm(n, n_out, n_in, dy, n_out, 1, w, n_in, 1, 0.0, &mut dx, n_in, 1);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &Tensor, s: ConvShape, w: &[f64]) -> Tensor {
        let lo = s.out_len(x.l);
        let mut y = Tensor::zeros(x.n, s.c_out, lo);
        for n in 0..x.n {
            for co in 0..s.c_out {
                for t in 0..lo {
                    let mut acc = 0.0;
                    for ci in 0..s.c_in {
                        for j in 0..s.k {
                            let src = (t * s.stride + j) as isize - s.pad() as isize;
                            if src >= 0 && (src as usize) < x.l {
                                acc += w[(co * s.c_in + ci) * s.k + j] * x.data[(n * x.c + ci) * x.l + src as usize];
                            }
                        }
                    }
                    y.data[(n * s.c_out + co) * lo + t] = acc;
                }
            }
        }
        y
    }

    fn ramp(len: usize, scale: f64) -> Vec<f64> {
        (0..len).map(|i| ((i * 7919) % 23) as f64 * scale - 1.0).collect()
    }

    #[test]
    fn conv_matches_naive() {
        for (k, stride, l) in [(3, 1, 9), (3, 2, 10), (7, 2, 15), (1, 2, 9)] {
            let s = ConvShape { c_in: 3, c_out: 4, k, stride };
            let x = Tensor::from_vec(2, 3, l, ramp(2 * 3 * l, 0.1));
            let w = ramp(s.weight_len(), 0.05);
            let (y, _) = conv_forward(&x, s, &w);
            let expect = naive_conv(&x, s, &w);
            for (a, b) in y.data.iter().zip(&expect.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_lengths() {
        let s = |k, stride| ConvShape { c_in: 1, c_out: 1, k, stride };
        assert_eq!(s(7, 2).out_len(300), 150);
        assert_eq!(s(3, 2).out_len(150), 75);
        assert_eq!(s(3, 2).out_len(75), 38);
        assert_eq!(s(1, 2).out_len(75), 38);
        assert_eq!(s(3, 1).out_len(19), 19);
    }

    #[test]
    fn pool_bins_cover_input() {
        let x = Tensor::from_vec(1, 1, 10, (0..10).map(|v| v as f64).collect());
        let y = pool_forward(&x, 8);
        assert_eq!(y.l, 8);
        assert_eq!(y.data[0], 0.5);
        let y = pool_forward(&x, 5);
        assert_eq!(y.data, vec![0.5, 2.5, 4.5, 6.5, 8.5]);
    }

    #[test]
    fn linear_matches_manual() {
        let x = [1.0, 2.0, 3.0, 4.0];
        // Weights are (out, in) row-major.
        let w = [1.0, 0.0, 0.5, -1.0, 2.0, 1.0];
        let y = linear_forward(&x, 2, 2, &w, &[0.0, 1.0, -1.0], 3);
        assert_eq!(y, vec![1.0, -0.5, 3.0, 3.0, -1.5, 9.0]);
    }

    #[test]
    fn bn_output_is_standardised() {
        let x = Tensor::from_vec(2, 2, 5, ramp(20, 0.3));
        let (y, _) = bn_forward_train(&x, &[1.0, 1.0], &[0.0, 0.0]);
        for ch in 0..2 {
            let vals: Vec<f64> = (0..2).flat_map(|n| y.data[(n * 2 + ch) * 5..(n * 2 + ch + 1) * 5].to_vec()).collect();
            let m: f64 = vals.iter().sum::<f64>() / 10.0;
            let v: f64 = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 10.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-3);
        }
    }
}
