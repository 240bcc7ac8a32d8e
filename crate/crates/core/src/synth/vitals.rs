use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng;
use crate::series::{VitalKind, VitalSeries};
use crate::stage::{Hypnogram, SleepStage};

use super::{SynthConfig, BR_BAND, HR_BAND};

/// Generated vitals together with the artifact-free rates they were derived from.
#[derive(Debug, Clone)]
pub struct SynthVitals {
    pub hr: VitalSeries,
    pub br: VitalSeries,
    pub hr_clean: Vec<f64>,
    pub br_clean: Vec<f64>,
    /// Per-second in-bed flag.
    pub occupancy: Vec<bool>,
}

struct RateModel<'a> {
    mean: &'a [f64; 5],
    std: [f64; 5],
    offset: f64,
    band: (f64, f64),
}

fn gen_rate(h: &Hypnogram, m: &RateModel, cfg: &SynthConfig, r: &mut rng::Rng) -> Vec<f64> {
    let n = h.duration_s();
    let rho = (-1.0 / cfg.noise_corr_s).exp();
    let innov = (1.0 - rho * rho).sqrt();
    let alpha = 1.0 - (-1.0 / cfg.mean_time_constant_s).exp();
    let mut level = m.mean[h.stages()[0].index()] + m.offset;
    let mut e: f64 = r.sample(StandardNormal);
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let s = h.stage_at_second(t).index();
        level += alpha * (m.mean[s] + m.offset - level);
        let z: f64 = r.sample(StandardNormal);
        e = rho * e + innov * z;
        out.push((level + m.std[s] * e).clamp(m.band.0, m.band.1));
    }
    out
}

/// Block-wise quality flags: a block drop is decided by one uniform draw per
/// block compared with the stage-dependent rate of each second.
fn gen_sqi(h: &Hypnogram, cfg: &SynthConfig, occupancy: &[bool], r: &mut rng::Rng) -> Vec<bool> {
    let n = h.duration_s();
    let mut sqi = Vec::with_capacity(n);
    let mut u = 0.0;
    for (t, &in_bed) in occupancy.iter().enumerate().take(n) {
        if t.is_multiple_of(cfg.dropout_block_s) {
            u = r.random::<f64>();
        }
        let rate = if h.stage_at_second(t) == SleepStage::Wake {
            cfg.dropout_rate_wake
        } else {
            cfg.dropout_rate_sleep
        };
        sqi.push(in_bed && u >= rate);
    }
    sqi
}

fn corrupt(clean: &[f64], sqi: &[bool], std: f64, band: (f64, f64), r: &mut rng::Rng) -> Vec<f64> {
    // Slowly wandering error so low-quality stretches look like plausible but wrong rates.
    let mut e = 0.0f64;
    clean
        .iter()
        .zip(sqi)
        .map(|(&c, &ok)| {
            let z: f64 = r.sample(StandardNormal);
            e = 0.9 * e + 0.4359 * z;
            if ok {
                c
            } else {
                (c + std * e).clamp(band.0, band.1)
            }
        })
        .collect()
}

/// 1 Hz heart and breathing rate with stage-dependent means, noise, REM
/// breathing variability and Wake-weighted quality dropouts.
pub fn gen_vitals_detailed(h: &Hypnogram, cfg: &SynthConfig) -> SynthVitals {
    let seed = cfg.seed;
    let mut r_subject = rng::stream(seed, "synth/vitals/subject");
    let hr_offset = cfg.subject_hr_offset_std * r_subject.sample::<f64, _>(StandardNormal);
    let br_offset = cfg.subject_br_offset_std * r_subject.sample::<f64, _>(StandardNormal);

    let mut br_std = cfg.br_std;
    br_std[SleepStage::Rem.index()] *= cfg.rem_br_var_boost.sqrt();
    let hr_clean = gen_rate(
        h,
        &RateModel { mean: &cfg.hr_mean, std: cfg.hr_std, offset: hr_offset, band: HR_BAND },
        cfg,
        &mut rng::stream(seed, "synth/vitals/hr"),
    );
    let br_clean = gen_rate(
        h,
        &RateModel { mean: &cfg.br_mean, std: br_std, offset: br_offset, band: BR_BAND },
        cfg,
        &mut rng::stream(seed, "synth/vitals/br"),
    );

    let mut r_bed = rng::stream(seed, "synth/vitals/occupancy");
    let mut occupancy = Vec::with_capacity(h.duration_s());
    for &s in h.stages() {
        let out = s == SleepStage::Wake && r_bed.random::<f64>() < cfg.out_of_bed_rate;
        occupancy.extend(std::iter::repeat_n(!out, h.epoch_duration_s()));
    }

    let hr_sqi = gen_sqi(h, cfg, &occupancy, &mut rng::stream(seed, "synth/vitals/hr_sqi"));
    let br_sqi = gen_sqi(h, cfg, &occupancy, &mut rng::stream(seed, "synth/vitals/br_sqi"));
    let hr_vals = corrupt(&hr_clean, &hr_sqi, cfg.hr_artifact_std, HR_BAND, &mut rng::stream(seed, "synth/vitals/hr_art"));
    let br_vals = corrupt(&br_clean, &br_sqi, cfg.br_artifact_std, BR_BAND, &mut rng::stream(seed, "synth/vitals/br_art"));

    SynthVitals {
        hr: VitalSeries::new(VitalKind::HeartRate, hr_vals, hr_sqi).expect("lengths agree"),
        br: VitalSeries::new(VitalKind::BreathingRate, br_vals, br_sqi).expect("lengths agree"),
        hr_clean,
        br_clean,
        occupancy,
    }
}

pub fn gen_vitals(h: &Hypnogram, cfg: &SynthConfig) -> (VitalSeries, VitalSeries) {
    let v = gen_vitals_detailed(h, cfg);
    (v.hr, v.br)
}
