//! Dual-window 1-D ResNet + MLP stager.
//!
//! Each window (short and long) runs through its own ResNet: a strided stem
//! convolution, residual stages of basic blocks, and adaptive average pooling
//! to a fixed length so the flattened output has `flat_dim` values whatever
//! the input length. The two flattened vectors are concatenated and fed to a
//! two-layer MLP whose output is the deep feature vector; a linear head maps
//! it to class logits.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

use super::layers::{
    bn_backward, bn_forward_eval, bn_forward_train, conv_backward, conv_forward, linear_backward, linear_forward,
    pool_backward, pool_forward, relu_backward_inplace, relu_inplace, BnCache, ConvCache, ConvShape, Tensor,
};

pub const INPUT_CHANNELS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Samples per channel in each input window.
    pub window_len: usize,
    pub stem_channels: usize,
    pub stem_kernel: usize,
    pub stem_stride: usize,
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: usize,
    pub kernel: usize,
    /// Flattened ResNet output per window; must equal last stage channels x pooled length.
    pub flat_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub n_classes: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            window_len: 300,
            stem_channels: 32,
            stem_kernel: 7,
            stem_stride: 2,
            stage_channels: vec![32, 64, 128, 256],
            blocks_per_stage: 2,
            kernel: 3,
            flat_dim: 2048,
            hidden_dim: 100,
            feature_dim: 32,
            n_classes: 5,
        }
    }
}

impl NetConfig {
    /// Narrower network with the same interface dimensions (2048 per window,
    /// 4096 -> 100 -> 32 -> 5); used where training time is tight.
    pub fn compact() -> Self {
        NetConfig {
            stem_channels: 16,
            stage_channels: vec![32, 64, 128],
            blocks_per_stage: 1,
            ..Default::default()
        }
    }

    pub fn pooled_len(&self) -> usize {
        let last = *self.stage_channels.last().unwrap_or(&self.stem_channels);
        self.flat_dim / last.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let last = *self.stage_channels.last().unwrap_or(&self.stem_channels);
        if self.window_len == 0 || self.stem_channels == 0 || self.kernel == 0 || self.stem_kernel == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        if self.stage_channels.contains(&0) || self.stem_stride == 0 {
            return Err(Error::Config("stage channels and stem stride must be positive".into()));
        }
        if !self.flat_dim.is_multiple_of(last) || self.flat_dim == 0 {
            return Err(Error::Config(format!(
                "flat_dim {} is not a multiple of the last stage width {last}",
                self.flat_dim
            )));
        }
        if self.hidden_dim == 0 || self.feature_dim == 0 || self.n_classes < 2 {
            return Err(Error::Config("MLP dimensions must be positive and classes >= 2".into()));
        }
        Ok(())
    }
}

/// Name, shape and position of one tensor in a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    /// He-normal with the given fan-in.
    He(usize),
    /// Glorot-normal with fan-in and fan-out.
    Glorot(usize, usize),
    Zeros,
    Ones,
}

#[derive(Default)]
struct LayoutBuilder {
    params: Vec<TensorSpec>,
    inits: Vec<Init>,
    buffers: Vec<TensorSpec>,
    buffer_inits: Vec<Init>,
    n_params: usize,
    n_buffers: usize,
}

impl LayoutBuilder {
    fn param(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let offset = self.n_params;
        let spec = TensorSpec { name, shape, offset };
        self.n_params += spec.len();
        self.params.push(spec);
        self.inits.push(init);
        offset
    }

    fn buffer(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let offset = self.n_buffers;
        let spec = TensorSpec { name, shape, offset };
        self.n_buffers += spec.len();
        self.buffers.push(spec);
        self.buffer_inits.push(init);
        offset
    }

    fn conv(&mut self, name: &str, s: ConvShape) -> Conv {
        let w = self.param(format!("{name}.weight"), vec![s.c_out, s.c_in, s.k], Init::He(s.c_in * s.k));
        Conv { s, w }
    }

    fn bn(&mut self, name: &str, c: usize) -> Bn {
        Bn {
            c,
            gamma: self.param(format!("{name}.gamma"), vec![c], Init::Ones),
            beta: self.param(format!("{name}.beta"), vec![c], Init::Zeros),
            mean: self.buffer(format!("{name}.running_mean"), vec![c], Init::Zeros),
            var: self.buffer(format!("{name}.running_var"), vec![c], Init::Ones),
        }
    }

    fn linear(&mut self, name: &str, n_in: usize, n_out: usize, glorot: bool) -> Linear {
        let init = if glorot { Init::Glorot(n_in, n_out) } else { Init::He(n_in) };
        Linear {
            n_in,
            n_out,
            w: self.param(format!("{name}.weight"), vec![n_out, n_in], init),
            b: self.param(format!("{name}.bias"), vec![n_out], Init::Zeros),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    s: ConvShape,
    w: usize,
}

#[derive(Debug, Clone, Copy)]
struct Bn {
    c: usize,
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    n_in: usize,
    n_out: usize,
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Block {
    conv1: Conv,
    bn1: Bn,
    conv2: Conv,
    bn2: Bn,
    shortcut: Option<(Conv, Bn)>,
}

#[derive(Debug, Clone)]
struct ResNet {
    stem: Conv,
    stem_bn: Bn,
    blocks: Vec<Block>,
    pool: usize,
}

#[derive(Debug, Clone)]
struct Arch {
    short: ResNet,
    long: ResNet,
    fc1: Linear,
    fc2: Linear,
    head: Linear,
}

fn build(cfg: &NetConfig) -> (Arch, LayoutBuilder) {
    let mut b = LayoutBuilder::default();
    let resnet = |b: &mut LayoutBuilder, prefix: &str| {
        let stem = b.conv(
            &format!("{prefix}.stem.conv"),
            ConvShape { c_in: INPUT_CHANNELS, c_out: cfg.stem_channels, k: cfg.stem_kernel, stride: cfg.stem_stride },
        );
        let stem_bn = b.bn(&format!("{prefix}.stem.bn"), cfg.stem_channels);
        let mut blocks = Vec::new();
        let mut c_in = cfg.stem_channels;
        for (si, &c) in cfg.stage_channels.iter().enumerate() {
            for bi in 0..cfg.blocks_per_stage {
                let stride = if bi == 0 { 2 } else { 1 };
                let name = format!("{prefix}.stage{si}.block{bi}");
                let conv1 = b.conv(&format!("{name}.conv1"), ConvShape { c_in, c_out: c, k: cfg.kernel, stride });
                let bn1 = b.bn(&format!("{name}.bn1"), c);
                let conv2 = b.conv(&format!("{name}.conv2"), ConvShape { c_in: c, c_out: c, k: cfg.kernel, stride: 1 });
                let bn2 = b.bn(&format!("{name}.bn2"), c);
                let shortcut = (stride != 1 || c_in != c).then(|| {
                    (
                        b.conv(&format!("{name}.shortcut.conv"), ConvShape { c_in, c_out: c, k: 1, stride }),
                        b.bn(&format!("{name}.shortcut.bn"), c),
                    )
                });
                blocks.push(Block { conv1, bn1, conv2, bn2, shortcut });
                c_in = c;
            }
        }
        ResNet { stem, stem_bn, blocks, pool: cfg.pooled_len() }
    };
    let short = resnet(&mut b, "short");
    let long = resnet(&mut b, "long");
    let fc1 = b.linear("mlp.fc1", 2 * cfg.flat_dim, cfg.hidden_dim, false);
    let fc2 = b.linear("mlp.fc2", cfg.hidden_dim, cfg.feature_dim, false);
    let head = b.linear("head", cfg.feature_dim, cfg.n_classes, true);
    (Arch { short, long, fc1, fc2, head }, b)
}

/// Network weights plus batch-norm running statistics.
#[derive(Debug, Clone)]
pub struct ModelParams {
    config: NetConfig,
    arch: Arch,
    pub param_specs: Vec<TensorSpec>,
    pub buffer_specs: Vec<TensorSpec>,
    pub params: Vec<f64>,
    pub buffers: Vec<f64>,
}

/// Network inputs for a batch: both windows, each `(n, 2, window_len)`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub short: Tensor,
    pub long: Tensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm (training).
    Train,
    /// Running statistics in batch norm (inference).
    Eval,
}

struct BnStep {
    cache: Option<BnCache>,
}

struct BlockCache {
    l_in: usize,
    c1: ConvCache,
    b1: BnStep,
    a1: Tensor,
    c2: ConvCache,
    b2: BnStep,
    sc: Option<(ConvCache, BnStep)>,
    out: Tensor,
}

struct ResNetCache {
    stem: ConvCache,
    stem_bn: BnStep,
    stem_out: Tensor,
    blocks: Vec<BlockCache>,
    pooled_from: usize,
}

/// Intermediate values of a forward pass, consumed by [`ModelParams::backward`].
pub struct ForwardCache {
    short: ResNetCache,
    long: ResNetCache,
    concat: Vec<f64>,
    h1: Vec<f64>,
    pub features: Vec<f64>,
    pub probs: Vec<f64>,
    n: usize,
}

impl ForwardCache {
    /// Hash of which ReLU units are active. Two passes with equal signatures
    /// lie on the same linear piece of every rectifier.
    pub fn relu_signature(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        let mut feed = |xs: &[f64]| {
            for &x in xs {
                h = (h ^ u64::from(x > 0.0)).wrapping_mul(0x0100_0000_01b3);
            }
        };
        for r in [&self.short, &self.long] {
            feed(&r.stem_out.data);
            for b in &r.blocks {
                feed(&b.a1.data);
                feed(&b.out.data);
            }
        }
        feed(&self.h1);
        h
    }
}

/// Batch-norm batch statistics from a training pass, in layout order.
pub struct BnStats(Vec<(usize, Vec<f64>, Vec<f64>)>);

impl ModelParams {
    /// Freshly initialised network.
    pub fn init(cfg: &NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (arch, b) = build(cfg);
        let mut r = rng::stream(seed, "deepnet/init");
        let mut params = vec![0.0; b.n_params];
        for (spec, init) in b.params.iter().zip(&b.inits) {
            let dst = &mut params[spec.range()];
            fill(dst, *init, &mut r);
        }
        let mut buffers = vec![0.0; b.n_buffers];
        for (spec, init) in b.buffers.iter().zip(&b.buffer_inits) {
            fill(&mut buffers[spec.range()], *init, &mut r);
        }
        Ok(ModelParams {
            config: cfg.clone(),
            arch,
            param_specs: b.params,
            buffer_specs: b.buffers,
            params,
            buffers,
        })
    }

    /// Rebuilds a model from stored tensors; shapes must match `cfg`.
    pub fn from_parts(cfg: &NetConfig, params: Vec<f64>, buffers: Vec<f64>) -> Result<Self> {
        let mut m = Self::init(cfg, 0)?;
        if params.len() != m.params.len() || buffers.len() != m.buffers.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters and {} buffers, got {} and {}",
                m.params.len(),
                m.buffers.len(),
                params.len(),
                buffers.len()
            )));
        }
        m.params = params;
        m.buffers = buffers;
        Ok(m)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Flattened output length of one window's ResNet.
    pub fn resnet_output_len(&self) -> usize {
        let last = self.arch.short.blocks.last().map_or(self.arch.short.stem.s.c_out, |b| b.conv2.s.c_out);
        last * self.arch.short.pool
    }

    pub fn mlp_dims(&self) -> (usize, usize, usize) {
        (self.arch.fc1.n_in, self.arch.fc1.n_out, self.arch.fc2.n_out)
    }

    pub fn n_classes(&self) -> usize {
        self.arch.head.n_out
    }

    fn check(&self, batch: &Batch) -> Result<()> {
        let l = self.config.window_len;
        for (name, t) in [("short", &batch.short), ("long", &batch.long)] {
            if t.c != INPUT_CHANNELS || t.l != l || t.n != batch.short.n {
                return Err(Error::ShapeMismatch(format!(
                    "{name} window is {}x{}x{}, expected {}x{INPUT_CHANNELS}x{l}",
                    t.n, t.c, t.l, batch.short.n
                )));
            }
        }
        if batch.short.n == 0 {
            return Err(Error::EmptyInput("empty batch".into()));
        }
        Ok(())
    }

    fn bn_apply(&self, x: &Tensor, bn: &Bn, mode: Mode) -> (Tensor, BnStep) {
        let p = &self.params;
        let gamma = &p[bn.gamma..bn.gamma + bn.c];
        let beta = &p[bn.beta..bn.beta + bn.c];
        match mode {
            Mode::Train => {
                let (y, c) = bn_forward_train(x, gamma, beta);
                (y, BnStep { cache: Some(c) })
            }
            Mode::Eval => {
                let b = &self.buffers;
                let y = bn_forward_eval(x, gamma, beta, &b[bn.mean..bn.mean + bn.c], &b[bn.var..bn.var + bn.c]);
                (y, BnStep { cache: None })
            }
        }
    }

    fn conv_apply(&self, x: &Tensor, c: &Conv) -> (Tensor, ConvCache) {
        conv_forward(x, c.s, &self.params[c.w..c.w + c.s.weight_len()])
    }

    fn resnet_forward(&self, r: &ResNet, x: &Tensor, mode: Mode) -> (Vec<f64>, ResNetCache) {
        let (y, stem) = self.conv_apply(x, &r.stem);
        let (mut y, stem_bn) = self.bn_apply(&y, &r.stem_bn, mode);
        relu_inplace(&mut y.data);
        let stem_out = y;
        let mut cur = stem_out.clone();
        let mut blocks = Vec::with_capacity(r.blocks.len());
        for b in &r.blocks {
            let (h, c1) = self.conv_apply(&cur, &b.conv1);
            let (mut a1, b1) = self.bn_apply(&h, &b.bn1, mode);
            relu_inplace(&mut a1.data);
            let (h2, c2) = self.conv_apply(&a1, &b.conv2);
            let (mut out, b2) = self.bn_apply(&h2, &b.bn2, mode);
            let sc = match &b.shortcut {
                Some((conv, bn)) => {
                    let (s, cc) = self.conv_apply(&cur, conv);
                    let (s, bs) = self.bn_apply(&s, bn, mode);
                    for (o, v) in out.data.iter_mut().zip(&s.data) {
                        *o += v;
                    }
                    Some((cc, bs))
                }
                None => {
                    for (o, v) in out.data.iter_mut().zip(&cur.data) {
                        *o += v;
                    }
                    None
                }
            };
            relu_inplace(&mut out.data);
            let l_in = cur.l;
            cur = out.clone();
            blocks.push(BlockCache { l_in, c1, b1, a1, c2, b2, sc, out });
        }
        let pooled_from = cur.l;
        let pooled = pool_forward(&cur, r.pool);
        (pooled.data, ResNetCache { stem, stem_bn, stem_out, blocks, pooled_from })
    }

    /// Forward pass over a batch; returns per-sample features `(n, feature_dim)`
    /// and class probabilities `(n, n_classes)` in the cache.
    pub fn forward_batch(&self, batch: &Batch, mode: Mode) -> Result<ForwardCache> {
        self.check(batch)?;
        let n = batch.short.n;
        let a = &self.arch;
        let (fs, short) = self.resnet_forward(&a.short, &batch.short, mode);
        let (fl, long) = self.resnet_forward(&a.long, &batch.long, mode);
        let flat = self.config.flat_dim;
        let mut concat = vec![0.0; n * 2 * flat];
        for i in 0..n {
            concat[i * 2 * flat..i * 2 * flat + flat].copy_from_slice(&fs[i * flat..(i + 1) * flat]);
            concat[i * 2 * flat + flat..(i + 1) * 2 * flat].copy_from_slice(&fl[i * flat..(i + 1) * flat]);
        }
        let p = &self.params;
        let lin = |l: &Linear, x: &[f64]| {
            linear_forward(x, n, l.n_in, &p[l.w..l.w + l.n_in * l.n_out], &p[l.b..l.b + l.n_out], l.n_out)
        };
        let mut h1 = lin(&a.fc1, &concat);
        relu_inplace(&mut h1);
        let features = lin(&a.fc2, &h1);
        let logits = lin(&a.head, &features);
        let probs = softmax_rows(&logits, a.head.n_out);
        Ok(ForwardCache { short, long, concat, h1, features, probs, n })
    }

    /// Feature vector and class probabilities for one window pair (inference mode).
    pub fn forward(&self, short: &[f64], long: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let l = self.config.window_len;
        if short.len() != INPUT_CHANNELS * l || long.len() != INPUT_CHANNELS * l {
            return Err(Error::ShapeMismatch(format!(
                "windows have {} and {} values, expected {}",
                short.len(),
                long.len(),
                INPUT_CHANNELS * l
            )));
        }
        let batch = Batch {
            short: Tensor::from_vec(1, INPUT_CHANNELS, l, short.to_vec()),
            long: Tensor::from_vec(1, INPUT_CHANNELS, l, long.to_vec()),
        };
        let c = self.forward_batch(&batch, Mode::Eval)?;
        Ok((c.features, c.probs))
    }

    /// Mean cross-entropy of cached probabilities against `labels`.
    pub fn loss(cache: &ForwardCache, labels: &[usize]) -> f64 {
        let k = cache.probs.len() / cache.n;
        labels
            .iter()
            .enumerate()
            .map(|(i, &y)| -cache.probs[i * k + y].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / cache.n as f64
    }

    /// Gradient of the mean cross-entropy w.r.t. every parameter, and the
    /// batch-norm statistics seen in this pass (training mode only).
    pub fn backward(&self, cache: &ForwardCache, labels: &[usize]) -> (Vec<f64>, BnStats) {
        let n = cache.n;
        let a = &self.arch;
        let p = &self.params;
        let mut g = vec![0.0; p.len()];
        let k = a.head.n_out;
        let mut dlogits = cache.probs.clone();
        for (i, &y) in labels.iter().enumerate() {
            dlogits[i * k + y] -= 1.0;
        }
        for v in &mut dlogits {
            *v /= n as f64;
        }
        let lin_back = |l: &Linear, dy: &[f64], x: &[f64], g: &mut [f64]| {
            let (gw, gb) = split_two(g, l.w, l.n_in * l.n_out, l.b, l.n_out);
            linear_backward(dy, x, n, l.n_in, &p[l.w..l.w + l.n_in * l.n_out], l.n_out, gw, gb)
        };
        let dfeat = lin_back(&a.head, &dlogits, &cache.features, &mut g);
        let mut dh1 = lin_back(&a.fc2, &dfeat, &cache.h1, &mut g);
        relu_backward_inplace(&mut dh1, &cache.h1);
        let dconcat = lin_back(&a.fc1, &dh1, &cache.concat, &mut g);

        let flat = self.config.flat_dim;
        let mut ds = vec![0.0; n * flat];
        let mut dl = vec![0.0; n * flat];
        for i in 0..n {
            ds[i * flat..(i + 1) * flat].copy_from_slice(&dconcat[i * 2 * flat..i * 2 * flat + flat]);
            dl[i * flat..(i + 1) * flat].copy_from_slice(&dconcat[i * 2 * flat + flat..(i + 1) * 2 * flat]);
        }
        let mut stats = Vec::new();
        self.resnet_backward(&a.short, &cache.short, ds, &mut g, &mut stats);
        self.resnet_backward(&a.long, &cache.long, dl, &mut g, &mut stats);
        (g, BnStats(stats))
    }

    fn bn_back(&self, bn: &Bn, step: &BnStep, dy: &Tensor, g: &mut [f64], stats: &mut Vec<(usize, Vec<f64>, Vec<f64>)>) -> Tensor {
        let c = step.cache.as_ref().expect("backward requires a training-mode forward pass");
        stats.push((bn.mean, c.mean.clone(), c.var_unbiased.clone()));
        let (dgamma, dbeta) = split_two(g, bn.gamma, bn.c, bn.beta, bn.c);
        bn_backward(dy, &self.params[bn.gamma..bn.gamma + bn.c], c, dgamma, dbeta)
    }

    fn conv_back(&self, conv: &Conv, cache: &ConvCache, dy: &Tensor, g: &mut [f64], need_dx: bool) -> Option<Tensor> {
        let len = conv.s.weight_len();
        conv_backward(dy, conv.s, &self.params[conv.w..conv.w + len], cache, &mut g[conv.w..conv.w + len], need_dx)
    }

    fn resnet_backward(
        &self,
        r: &ResNet,
        cache: &ResNetCache,
        dpooled: Vec<f64>,
        g: &mut [f64],
        stats: &mut Vec<(usize, Vec<f64>, Vec<f64>)>,
    ) {
        let last_c = r.blocks.last().map_or(r.stem.s.c_out, |b| b.conv2.s.c_out);
        let n = dpooled.len() / (last_c * r.pool);
        let dp = Tensor::from_vec(n, last_c, r.pool, dpooled);
        let mut d = pool_backward(&dp, cache.pooled_from);
        for (b, bc) in r.blocks.iter().zip(&cache.blocks).rev() {
            relu_backward_inplace(&mut d.data, &bc.out.data);
            // Residual branch.
            let dh2 = self.bn_back(&b.bn2, &bc.b2, &d, g, stats);
            let mut da1 = self.conv_back(&b.conv2, &bc.c2, &dh2, g, true).expect("dx requested");
            relu_backward_inplace(&mut da1.data, &bc.a1.data);
            let dh1 = self.bn_back(&b.bn1, &bc.b1, &da1, g, stats);
            let mut dx = self.conv_back(&b.conv1, &bc.c1, &dh1, g, true).expect("dx requested");
            // Shortcut branch.
            match (&b.shortcut, &bc.sc) {
                (Some((conv, bn)), Some((cc, bs))) => {
                    let ds = self.bn_back(bn, bs, &d, g, stats);
                    let dsx = self.conv_back(conv, cc, &ds, g, true).expect("dx requested");
                    for (a, v) in dx.data.iter_mut().zip(&dsx.data) {
                        *a += v;
                    }
                }
                _ => {
                    for (a, v) in dx.data.iter_mut().zip(&d.data) {
                        *a += v;
                    }
                }
            }
            debug_assert_eq!(dx.l, bc.l_in);
            d = dx;
        }
        relu_backward_inplace(&mut d.data, &cache.stem_out.data);
        let dstem = self.bn_back(&r.stem_bn, &cache.stem_bn, &d, g, stats);
        self.conv_back(&r.stem, &cache.stem, &dstem, g, false);
    }

    /// Exponential moving average of batch statistics into the running buffers.
    pub fn update_running_stats(&mut self, stats: &BnStats, momentum: f64) {
        for (mean_off, mean, var) in &stats.0 {
            let c = mean.len();
            // Variance buffers are laid out directly after their mean buffers.
            let var_off = mean_off + c;
            for i in 0..c {
                let m = &mut self.buffers[mean_off + i];
                *m = (1.0 - momentum) * *m + momentum * mean[i];
                let v = &mut self.buffers[var_off + i];
                *v = (1.0 - momentum) * *v + momentum * var[i];
            }
        }
    }

    /// Rounds every stored value to f32 precision so that a saved model
    /// reloads bit-identically.
    pub fn round_to_f32(&mut self) {
        for v in self.params.iter_mut().chain(self.buffers.iter_mut()) {
            *v = *v as f32 as f64;
        }
    }
}

fn split_two(g: &mut [f64], a: usize, alen: usize, b: usize, blen: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a + alen <= b);
    let (lo, hi) = g.split_at_mut(b);
    (&mut lo[a..a + alen], &mut hi[..blen])
}

fn fill(dst: &mut [f64], init: Init, r: &mut rng::Rng) {
    match init {
        Init::Zeros => dst.fill(0.0),
        Init::Ones => dst.fill(1.0),
        Init::He(fan_in) => {
            let d = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            dst.iter_mut().for_each(|v| *v = d.sample(r));
        }
        Init::Glorot(fan_in, fan_out) => {
            let d = Normal::new(0.0, (2.0 / (fan_in + fan_out) as f64).sqrt()).expect("finite std");
            dst.iter_mut().for_each(|v| *v = d.sample(r));
        }
    }
}

pub fn softmax_rows(logits: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (row, o) in logits.chunks(k).zip(out.chunks_mut(k)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (a, b) in row.iter().zip(o.iter_mut()) {
            *b = (a - m).exp();
            s += *b;
        }
        o.iter_mut().for_each(|v| *v /= s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dimensions() {
        let m = ModelParams::init(&NetConfig::default(), 0).unwrap();
        assert_eq!(m.resnet_output_len(), 2048);
        assert_eq!(m.mlp_dims(), (4096, 100, 32));
        assert_eq!(m.n_classes(), 5);
        let c = ModelParams::init(&NetConfig::compact(), 0).unwrap();
        assert_eq!(c.resnet_output_len(), 2048);
        assert_eq!(c.mlp_dims(), (4096, 100, 32));
    }

    #[test]
    fn rejects_bad_flat_dim() {
        let cfg = NetConfig { flat_dim: 2000, ..Default::default() };
        assert!(ModelParams::init(&cfg, 0).is_err());
    }

    #[test]
    fn buffer_pairs_are_adjacent() {
        let m = ModelParams::init(&NetConfig::compact(), 0).unwrap();
        for pair in m.buffer_specs.chunks(2) {
            assert!(pair[0].name.ends_with("running_mean"));
            assert!(pair[1].name.ends_with("running_var"));
            assert_eq!(pair[1].offset, pair[0].offset + pair[0].len());
        }
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax_rows(&[0.0; 10], 5);
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-15));
    }
}
