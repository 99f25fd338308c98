use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HANDS, KEYPOINTS_PER_HAND, NUM_KEYPOINTS, NUM_VISIBILITY};
use crate::tensor::{Layout, Tensor};

/// Argmax location of one heatmap, in network-input pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedKeypoint {
    pub u: f32,
    pub v: f32,
    /// Softmax probability of the winning cell.
    pub confidence: f32,
    pub above_threshold: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointResult {
    pub u: f32,
    pub v: f32,
    pub confidence: f32,
    pub visible: bool,
    pub z: Option<f32>,
    pub depth_valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandResult {
    pub present: bool,
    pub keypoints: Vec<KeypointResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub hands: Vec<HandResult>,
    pub early_out: bool,
}

impl FrameResult {
    pub fn keypoints(&self) -> impl Iterator<Item = &KeypointResult> {
        self.hands.iter().flat_map(|h| &h.keypoints)
    }

    pub fn keypoints_mut(&mut self) -> impl Iterator<Item = &mut KeypointResult> {
        self.hands.iter_mut().flat_map(|h| &mut h.keypoints)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// Decodes each `h x w` map of a planar `1 x K x h x w` tensor to the centre
/// of its most likely cell, scaled to `input_hw`. Ties go to the first cell
/// in row-major order.
pub fn decode_heatmaps(maps: &Tensor, input_hw: (usize, usize), conf_threshold: f32) -> Result<Vec<DecodedKeypoint>> {
    maps.expect_layout(Layout::ChannelPlanar)?;
    let d = maps.dims();
    if d.n != 1 || d.h == 0 || d.w == 0 {
        return Err(Error::Shape(format!("cannot decode heatmaps of shape {d}")));
    }
    let (sy, sx) = (input_hw.0 as f32 / d.h as f32, input_hw.1 as f32 / d.w as f32);
    Ok(maps
        .data()
        .chunks_exact(d.plane())
        .map(|z| {
            let mut best = 0;
            for (i, &v) in z.iter().enumerate() {
                if v > z[best] {
                    best = i;
                }
            }
            let m = z[best] as f64;
            let denom: f64 = z.iter().map(|&v| (v as f64 - m).exp()).sum();
            let confidence = (1.0 / denom) as f32;
            let (row, col) = (best / d.w, best % d.w);
            DecodedKeypoint {
                u: (col as f32 + 0.5) * sx,
                v: (row as f32 + 0.5) * sy,
                confidence,
                above_threshold: confidence >= conf_threshold,
            }
        })
        .collect())
}

fn sigmoid(z: f32) -> f64 {
    let z = z as f64;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_threshold(name: &str, t: f32) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} threshold {t} outside (0, 1)")))
    }
}

/// Applies keypoint and hand visibility. Logits 0..16 are keypoints
/// (left hand first), 16 and 17 the left and right hand. A keypoint stays
/// visible only if it was decoded above the confidence threshold, its own
/// visibility passes, and its hand is present.
pub fn gate_visibility(kps: &[DecodedKeypoint], vis_logits: &[f32], kp_threshold: f32, hand_threshold: f32) -> Result<FrameResult> {
    check_threshold("keypoint", kp_threshold)?;
    check_threshold("hand", hand_threshold)?;
    if kps.len() != NUM_KEYPOINTS || vis_logits.len() != NUM_VISIBILITY {
        return Err(Error::Shape(format!(
            "{} keypoints and {} visibility logits, expected {NUM_KEYPOINTS} and {NUM_VISIBILITY}",
            kps.len(),
            vis_logits.len()
        )));
    }
    let hands: Vec<HandResult> = (0..HANDS)
        .map(|hand| {
            let present = sigmoid(vis_logits[NUM_KEYPOINTS + hand]) >= hand_threshold as f64;
            let keypoints = (hand * KEYPOINTS_PER_HAND..(hand + 1) * KEYPOINTS_PER_HAND)
                .map(|k| {
                    let kp = &kps[k];
                    KeypointResult {
                        u: kp.u,
                        v: kp.v,
                        confidence: kp.confidence,
                        visible: present && kp.above_threshold && sigmoid(vis_logits[k]) >= kp_threshold as f64,
                        z: None,
                        depth_valid: false,
                    }
                })
                .collect();
            HandResult { present, keypoints }
        })
        .collect();
    let early_out = hands.iter().all(|h| !h.present);
    Ok(FrameResult { hands, early_out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;
    use proptest::prelude::*;

    fn single(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> Tensor {
        Tensor::from_fn(Dims::chw(1, h, w), Layout::ChannelPlanar, |_, _, y, x| f(y, x))
    }

    #[test]
    fn peak_decodes_to_cell_centre() {
        let m = single(48, 48, |y, x| if (y, x) == (5, 7) { 100.0 } else { 0.0 });
        let k = decode_heatmaps(&m, (96, 96), 0.05).unwrap()[0];
        assert_eq!((k.u, k.v), (15.0, 11.0));
        assert!(k.confidence > 0.999 && k.above_threshold);
    }

    #[test]
    fn uniform_map_confidence() {
        let m = single(48, 48, |_, _| 3.0);
        let k = decode_heatmaps(&m, (96, 96), 0.05).unwrap()[0];
        assert!((k.confidence - 1.0 / 2304.0).abs() < 1e-9);
        assert!(!k.above_threshold);
        assert_eq!((k.u, k.v), (1.0, 1.0));
    }

    #[test]
    fn ties_break_row_major() {
        let m = single(3, 4, |y, x| if (y, x) == (0, 3) || (y, x) == (2, 1) { 5.0 } else { 0.0 });
        let k = decode_heatmaps(&m, (3, 4), 0.0).unwrap()[0];
        // exhaustive scan for the first maximum
        let data = m.data();
        let first = (0..12).find(|&i| data[i] == 5.0).unwrap();
        assert_eq!(first, 3);
        assert_eq!((k.u, k.v), (3.5, 0.5));
    }

    #[test]
    fn decode_rejects_batches() {
        let m = Tensor::zeros(Dims::nchw(2, 1, 2, 2), Layout::ChannelPlanar);
        assert!(decode_heatmaps(&m, (4, 4), 0.1).is_err());
    }

    fn confident() -> Vec<DecodedKeypoint> {
        vec![
            DecodedKeypoint {
                u: 1.0,
                v: 2.0,
                confidence: 0.9,
                above_threshold: true,
            };
            16
        ]
    }

    #[test]
    fn both_hands_absent() {
        let mut logits = vec![1000.0; 18];
        logits[16] = -1000.0;
        logits[17] = -1000.0;
        let r = gate_visibility(&confident(), &logits, 0.5, 0.5).unwrap();
        assert!(r.early_out);
        assert_eq!(r.keypoints().filter(|k| k.visible).count(), 0);
    }

    #[test]
    fn all_pass() {
        let r = gate_visibility(&confident(), &[1000.0; 18], 0.5, 0.5).unwrap();
        assert!(!r.early_out);
        assert!(r.keypoints().all(|k| k.visible && k.u == 1.0 && k.v == 2.0 && k.confidence == 0.9));
    }

    #[test]
    fn left_hand_suppressed() {
        let mut logits = vec![1000.0; 18];
        logits[16] = -1000.0;
        let r = gate_visibility(&confident(), &logits, 0.5, 0.5).unwrap();
        assert!(!r.early_out);
        assert!(!r.hands[0].present && r.hands[1].present);
        let vis: Vec<bool> = r.keypoints().map(|k| k.visible).collect();
        assert_eq!(vis, [[false; 8], [true; 8]].concat());
    }

    #[test]
    fn gate_errors() {
        assert!(gate_visibility(&confident(), &[0.0; 17], 0.5, 0.5).is_err());
        assert!(gate_visibility(&confident()[..15], &[0.0; 18], 0.5, 0.5).is_err());
        assert!(gate_visibility(&confident(), &[0.0; 18], 0.0, 0.5).is_err());
        assert!(gate_visibility(&confident(), &[0.0; 18], 0.5, 1.0).is_err());
    }

    #[test]
    fn json_schema() {
        let r = gate_visibility(&confident(), &[1000.0; 18], 0.5, 0.5).unwrap();
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(v["early_out"], false);
        assert_eq!(v["hands"].as_array().unwrap().len(), 2);
        let k = &v["hands"][0]["keypoints"][0];
        for key in ["u", "v", "confidence", "visible", "z", "depth_valid"] {
            assert!(k.get(key).is_some(), "{key}");
        }
        assert!(k["z"].is_null());
    }

    proptest! {
        #[test]
        fn decoded_inside_input(h in 1usize..9, w in 1usize..9, ih in 1usize..200, iw in 1usize..200, seed in any::<u64>()) {
            let m = Tensor::from_fn(Dims::chw(2, h, w), Layout::ChannelPlanar, |_, c, y, x| {
                ((seed ^ (c * 131 + y * 17 + x) as u64).wrapping_mul(0x9e3779b97f4a7c15) >> 40) as f32
            });
            for k in decode_heatmaps(&m, (ih, iw), 0.05).unwrap() {
                prop_assert!(k.u >= 0.0 && k.u < iw as f32);
                prop_assert!(k.v >= 0.0 && k.v < ih as f32);
                prop_assert!(k.confidence > 0.0 && k.confidence <= 1.0);
            }
        }

        #[test]
        fn gating_is_monotone(
            logits in proptest::collection::vec(-6.0f32..6.0, 18),
            above in proptest::collection::vec(any::<bool>(), 16),
            t1 in 0.01f32..0.99, t2 in 0.01f32..0.99,
            h1 in 0.01f32..0.99, h2 in 0.01f32..0.99,
        ) {
            let kps: Vec<DecodedKeypoint> = above.iter().map(|&a| DecodedKeypoint { u: 0.0, v: 0.0, confidence: 0.5, above_threshold: a }).collect();
            let (lo, hi) = (t1.min(t2), t1.max(t2));
            let (hlo, hhi) = (h1.min(h2), h1.max(h2));
            let loose = gate_visibility(&kps, &logits, lo, hlo).unwrap();
            let strict = gate_visibility(&kps, &logits, hi, hhi).unwrap();
            for ((a, b), k) in loose.keypoints().zip(strict.keypoints()).zip(&kps) {
                // never turns a rejected keypoint visible
                prop_assert!(!a.visible || k.above_threshold);
                prop_assert!(!b.visible || a.visible);
            }
        }
    }
}
