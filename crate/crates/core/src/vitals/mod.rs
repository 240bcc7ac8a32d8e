//! Vital-sign estimation from contact waveforms.
//!
//! Heart rate comes from Pan-Tompkins QRS detections turned into a rolling
//! dominant frequency; breathing rate from peak intervals of the RIP bands.
//! Each series carries a binary quality flag from agreement with a second
//! sensor (PPG for heart rate, abdomen band for the thorax breathing rate).

mod pan_tompkins;
mod rates;

pub use pan_tompkins::{pan_tompkins, QrsSeries};
pub use rates::{
    br_from_rip, br_from_rip_with, br_with_sqi, hr_from_qrs, hr_from_qrs_with, hr_with_sqi, sqi_br, sqi_hr,
    BrParams, HrParams, SqiRule,
};
