use crate::error::{Error, Result};
use crate::postprocess::decode::FrameResult;
use crate::postprocess::pgm::Gray16;

/// Attaches a depth in millimetres to every visible keypoint. Keypoint
/// coordinates must be pixels of `depth`. The depth under the keypoint is
/// used when it lies in `z_range`; otherwise the lower median of the
/// in-range samples in a `window x window` neighbourhood. Keypoints outside
/// the image, or without any in-range sample nearby, get no depth.
pub fn lift_to_2_5d(frame: &mut FrameResult, depth: &Gray16, window: usize, z_range: [f32; 2]) -> Result<()> {
    if window % 2 == 0 {
        return Err(Error::Config(format!("depth window {window} must be odd")));
    }
    if !(z_range[0] <= z_range[1]) {
        return Err(Error::Config(format!("depth range {z_range:?} is empty")));
    }
    let in_range = |z: u16| (z as f32) >= z_range[0] && (z as f32) <= z_range[1];
    let r = (window / 2) as isize;
    let mut samples = Vec::with_capacity(window * window);
    for kp in frame.keypoints_mut() {
        kp.z = None;
        kp.depth_valid = false;
        if !kp.visible || !(kp.u >= 0.0 && kp.v >= 0.0) {
            continue;
        }
        let (x, y) = (kp.u.floor() as usize, kp.v.floor() as usize);
        if x >= depth.width || y >= depth.height {
            continue;
        }
        let centre = depth.at(x, y);
        let z = if in_range(centre) {
            Some(centre)
        } else {
            samples.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = (x as isize + dx, y as isize + dy);
                    if sx < 0 || sy < 0 || sx as usize >= depth.width || sy as usize >= depth.height {
                        continue;
                    }
                    let s = depth.at(sx as usize, sy as usize);
                    if in_range(s) {
                        samples.push(s);
                    }
                }
            }
            samples.sort_unstable();
            (!samples.is_empty()).then(|| samples[(samples.len() - 1) / 2])
        };
        if let Some(z) = z {
            kp.z = Some(z as f32);
            kp.depth_valid = true;
        }
    }
    Ok(())
}
