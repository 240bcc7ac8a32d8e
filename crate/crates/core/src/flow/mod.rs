//! Video actigraphy: rectify frames onto a canonical bed view, estimate dense
//! optical flow between frames five apart, and reduce the flow to two 4 Hz
//! activity signals (upper third and lower two thirds of the bed).

mod activity;
mod dis;
mod homography;
mod image;

pub use activity::{activity_from_frames, n_activity_samples, n_flow_fields, ActivityParams, ActivitySeries};
pub use dis::{dis_flow, DisParams, FlowField};
pub use homography::{estimate_homography, BedGeometry, Correspondence, Homography};
pub use image::{warp_frame, FrameSource, GrayImage, VecFrames};
