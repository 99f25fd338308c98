//! Everything between sensor frames and keypoint results that is not the
//! network: amplitude synthesis, input normalisation, heatmap decoding,
//! visibility gating and depth lifting.

mod decode;
mod input;
mod lift;
pub mod pgm;

pub use decode::{decode_heatmaps, gate_visibility, DecodedKeypoint, FrameResult, HandResult, KeypointResult};
pub use input::{amplitude_from_phases, denormalize, normalize_input, FrameTransform, Image, PhaseFrame};
pub use lift::lift_to_2_5d;
pub use pgm::Gray16;

use crate::config::PostprocessConfig;
use crate::error::{Error, Result};
use crate::graph::HeadsOutput;

/// Decode, gate and lift one frame. Keypoints are reported in source-image
/// pixels, which must also be the pixels of `depth`.
pub fn finish_frame(out: &HeadsOutput, transform: &FrameTransform, depth: &Gray16, cfg: &PostprocessConfig) -> Result<FrameResult> {
    if depth.width < transform.crop_x + transform.crop_w || depth.height < transform.crop_y + transform.crop_h {
        return Err(Error::Input(format!(
            "depth image {}x{} does not cover the network input crop",
            depth.width, depth.height
        )));
    }
    let kps = decode_heatmaps(&out.primary, (transform.out_h, transform.out_w), cfg.conf_threshold)?;
    let mut frame = gate_visibility(&kps, &out.visibility, cfg.keypoint_threshold, cfg.hand_threshold)?;
    for kp in frame.keypoints_mut() {
        (kp.u, kp.v) = transform.to_source(kp.u, kp.v);
    }
    lift_to_2_5d(&mut frame, depth, cfg.depth_window, cfg.z_range)?;
    Ok(frame)
}
