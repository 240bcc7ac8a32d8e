use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng;
use crate::series::{Recording, VitalSeries};

use super::layers::Tensor;
use super::model::{Batch, ModelParams, Mode, NetConfig, INPUT_CHANNELS};
use super::windows::{make_windows_sized, prepare_channels, NormStats, WindowPair, LONG_DECIMATION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub net: NetConfig,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Epochs without a validation-accuracy improvement before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Fraction of recordings held out for validation.
    pub val_fraction: f64,
    pub bn_momentum: f64,
    /// Zero low-quality samples after normalisation (off for the unfiltered arm).
    pub zero_fill: bool,
    /// Training windows drawn per epoch; 0 uses all of them.
    pub samples_per_epoch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            net: NetConfig::default(),
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 3,
            batch_size: 32,
            max_epochs: 30,
            val_fraction: 0.2,
            bn_momentum: 0.1,
            zero_fill: true,
            samples_per_epoch: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("invalid Adam hyper-parameters".into()));
        }
        if self.patience == 0 || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("patience, batch_size and max_epochs must be positive".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::Config("val_fraction must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Adam optimiser state.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    NoImprovement,
    Stop,
}

/// Patience-based early stopping on a score where larger is better.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    epoch: usize,
    bad: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: None, best_epoch: 0, epoch: 0, bad: 0 }
    }

    pub fn update(&mut self, score: f64) -> StopDecision {
        self.epoch += 1;
        if self.best.is_none_or(|b| score > b) {
            self.best = Some(score);
            self.best_epoch = self.epoch;
            self.bad = 0;
            return StopDecision::Improved;
        }
        self.bad += 1;
        if self.bad >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::NoImprovement
        }
    }

    /// 1-based epoch of the best score so far.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: ModelParams,
    pub stats: NormStats,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
}

/// Inference is chunked at this size whatever the thread count, so results
/// never depend on how work is split.
const EVAL_CHUNK: usize = 32;

pub fn batch_from(windows: &[WindowPair], len: usize) -> Batch {
    let n = windows.len();
    let mut short = Vec::with_capacity(n * INPUT_CHANNELS * len);
    let mut long = Vec::with_capacity(n * INPUT_CHANNELS * len);
    for w in windows {
        short.extend_from_slice(&w.short);
        long.extend_from_slice(&w.long);
    }
    Batch {
        short: Tensor::from_vec(n, INPUT_CHANNELS, len, short),
        long: Tensor::from_vec(n, INPUT_CHANNELS, len, long),
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Inference over `n` windows produced by `get`; returns (features, predicted class).
pub fn infer<F>(model: &ModelParams, n: usize, get: F) -> Result<Vec<(Vec<f64>, usize)>>
where
    F: Fn(usize) -> WindowPair + Sync,
{
    let len = model.config().window_len;
    let fd = model.config().feature_dim;
    let k = model.n_classes();
    let chunks = par::try_map_range(n.div_ceil(EVAL_CHUNK), |c| {
        let idx: Vec<usize> = (c * EVAL_CHUNK..((c + 1) * EVAL_CHUNK).min(n)).collect();
        let windows: Vec<WindowPair> = idx.iter().map(|&i| get(i)).collect();
        let out = model.forward_batch(&batch_from(&windows, len), Mode::Eval)?;
        Ok::<_, Error>(
            (0..idx.len())
                .map(|i| (out.features[i * fd..(i + 1) * fd].to_vec(), argmax(&out.probs[i * k..(i + 1) * k])))
                .collect::<Vec<_>>(),
        )
    })?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Mini-batch training with early stopping on validation accuracy. `train`
/// and `val` return the window pair and class label of sample `i`.
pub fn fit<T, V>(n_train: usize, train: T, n_val: usize, val: V, cfg: &TrainConfig) -> Result<(ModelParams, Vec<EpochLog>, usize)>
where
    T: Fn(usize) -> (WindowPair, usize) + Sync,
    V: Fn(usize) -> (WindowPair, usize) + Sync,
{
    cfg.validate()?;
    if n_train == 0 || n_val == 0 {
        return Err(Error::InsufficientData("training and validation sets must be non-empty".into()));
    }
    let len = cfg.net.window_len;
    let mut model = ModelParams::init(&cfg.net, rng::derive(cfg.seed, "deepnet/init"))?;
    let mut adam = Adam::new(model.n_params(), cfg);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut history = Vec::new();
    let val_labels: Vec<usize> = (0..n_val).map(|i| val(i).1).collect();
    let shuffle_seed = rng::derive(cfg.seed, "deepnet/shuffle");

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut rng::stream_index(shuffle_seed, epoch as u64));
        if cfg.samples_per_epoch > 0 {
            order.truncate(cfg.samples_per_epoch);
        }
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let (windows, labels): (Vec<WindowPair>, Vec<usize>) = chunk.iter().map(|&i| train(i)).unzip();
            let cache = model.forward_batch(&batch_from(&windows, len), Mode::Train)?;
            let k = model.n_classes();
            for (i, &y) in labels.iter().enumerate() {
                correct += usize::from(argmax(&cache.probs[i * k..(i + 1) * k]) == y);
            }
            loss_sum += ModelParams::loss(&cache, &labels) * labels.len() as f64;
            let (grads, stats) = model.backward(&cache, &labels);
            adam.step(&mut model.params, &grads);
            model.update_running_stats(&stats, cfg.bn_momentum);
        }
        let preds = infer(&model, n_val, |i| val(i).0)?;
        let val_acc = preds.iter().zip(&val_labels).filter(|((_, p), y)| p == *y).count() as f64 / n_val as f64;
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_accuracy: correct as f64 / order.len() as f64,
            val_accuracy: val_acc,
        };
        log::info!(
            "extractor epoch {epoch}: loss {:.4}, train acc {:.3}, val acc {:.3}",
            log.train_loss,
            log.train_accuracy,
            log.val_accuracy
        );
        history.push(log);
        match stopper.update(val_acc) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::NoImprovement => {}
            StopDecision::Stop => break,
        }
    }
    best.round_to_f32();
    Ok((best, history, stopper.best_epoch()))
}

/// Network-ready channels of every recording.
fn channels(recs: &[Recording], stats: &NormStats, zero_fill: bool) -> Vec<(Vec<f64>, Vec<f64>)> {
    par::map(recs, |r| prepare_channels(&r.hr, &r.br, stats, zero_fill))
}

/// Trains the extractor on labelled recordings with an 80/20 split by recording.
pub fn train(recs: &[Recording], cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    if recs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 recordings for a train/validation split, got {}",
            recs.len()
        )));
    }
    let mut ids: Vec<usize> = (0..recs.len()).collect();
    ids.shuffle(&mut rng::stream(cfg.seed, "deepnet/split"));
    let n_val = ((recs.len() as f64 * cfg.val_fraction).round() as usize).clamp(1, recs.len() - 1);
    let (val_ids, train_ids) = ids.split_at(n_val);
    let mut train_ids = train_ids.to_vec();
    let mut val_ids = val_ids.to_vec();
    train_ids.sort_unstable();
    val_ids.sort_unstable();

    let stats = NormStats::fit(train_ids.iter().map(|&i| (&recs[i].hr, &recs[i].br)), cfg.zero_fill)?;
    let ch = channels(recs, &stats, cfg.zero_fill);
    let samples = |ids: &[usize]| -> Vec<(usize, usize)> {
        ids.iter().flat_map(|&r| (0..recs[r].hypnogram.len()).map(move |e| (r, e))).collect()
    };
    let tr = samples(&train_ids);
    let va = samples(&val_ids);
    let len = cfg.net.window_len;
    let get = |s: &[(usize, usize)], i: usize| {
        let (r, e) = s[i];
        let w = make_windows_sized(&ch[r].0, &ch[r].1, e, len, LONG_DECIMATION);
        (w, recs[r].hypnogram.stages()[e].index())
    };
    log::info!(
        "training extractor on {} windows ({} recordings), validating on {} ({} recordings)",
        tr.len(),
        train_ids.len(),
        va.len(),
        val_ids.len()
    );
    let (model, history, best_epoch) = fit(tr.len(), |i| get(&tr, i), va.len(), |i| get(&va, i), cfg)?;
    Ok(TrainOutput { model, stats, history, best_epoch })
}

/// Deep features (one row per epoch) for a recording's vitals.
pub fn extract_deep_features(
    model: &ModelParams,
    stats: &NormStats,
    hr: &VitalSeries,
    br: &VitalSeries,
    n_epochs: usize,
    zero_fill: bool,
) -> Result<Vec<Vec<f64>>> {
    let (h, b) = prepare_channels(hr, br, stats, zero_fill);
    let len = model.config().window_len;
    let out = infer(model, n_epochs, |e| make_windows_sized(&h, &b, e, len, LONG_DECIMATION))?;
    Ok(out.into_iter().map(|(f, _)| f).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patience_sequence() {
        let mut s = EarlyStopping::new(3);
        let d: Vec<StopDecision> = [0.5, 0.6, 0.6, 0.6, 0.6].iter().map(|&a| s.update(a)).collect();
        assert_eq!(
            d,
            vec![
                StopDecision::Improved,
                StopDecision::Improved,
                StopDecision::NoImprovement,
                StopDecision::NoImprovement,
                StopDecision::Stop
            ]
        );
        assert_eq!(s.best_epoch(), 2);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let cfg = TrainConfig::default();
        let mut adam = Adam::new(2, &cfg);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[0.5, -3.0]);
        assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 1e-3)).abs() < 1e-9);
    }
}
