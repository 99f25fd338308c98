//! Multi-task training losses with analytic gradients.
//!
//! All losses are evaluated in `f64` on logits and return the gradient of
//! the loss with respect to those logits. Softmaxes subtract the maximum
//! before exponentiating.

mod classify;
pub mod gradcheck;
mod heatmap;
mod targets;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use classify::{handpose_ce, orientation_ce_soft, seg_ce, visibility_bce, SegLabels};
pub use heatmap::{aux_keypoint_ce, deep_supervision_loss, keypoint_ce, HeatmapLogits, KeypointTarget};
pub use targets::{multitask_loss, FrameAnnotation, FrameTargets, HandAnnotation, HeadGradients, HeadLogits};

/// A loss value and its gradient with respect to the logits it was given.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

impl LossGrad {
    pub(crate) fn zero(n: usize) -> Self {
        Self {
            loss: 0.0,
            grad: vec![0.0; n],
        }
    }
}

/// Task weights of the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub kp: f64,
    pub akp: f64,
    pub kphv: f64,
    pub cho: f64,
    pub dhp: f64,
    pub seg: f64,
    pub ds: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            kp: 1.0,
            akp: 1.0,
            kphv: 20.0,
            cho: 20.0,
            dhp: 10.0,
            seg: 50.0,
            ds: 1.0,
        }
    }
}

/// Per-task losses: primary keypoints, auxiliary keypoints, keypoint and
/// hand visibility, hand orientation, hand pose, segmentation, deep
/// supervision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBundle {
    pub l_kp: f64,
    pub l_akp: f64,
    pub l_kphv: f64,
    pub l_cho: f64,
    pub l_dhp: f64,
    pub l_seg: f64,
    pub l_ds: f64,
    pub weights: LossWeights,
}

impl LossBundle {
    pub fn uniform(value: f64) -> Self {
        Self {
            l_kp: value,
            l_akp: value,
            l_kphv: value,
            l_cho: value,
            l_dhp: value,
            l_seg: value,
            l_ds: value,
            weights: LossWeights::default(),
        }
    }

    fn terms(&self) -> [(f64, f64); 7] {
        let w = &self.weights;
        [
            (w.kp, self.l_kp),
            (w.akp, self.l_akp),
            (w.kphv, self.l_kphv),
            (w.cho, self.l_cho),
            (w.dhp, self.l_dhp),
            (w.seg, self.l_seg),
            (w.ds, self.l_ds),
        ]
    }
}

/// Weighted sum of the task losses.
pub fn total_loss(b: &LossBundle) -> Result<f64> {
    let terms = b.terms();
    if terms.iter().any(|(w, l)| !w.is_finite() || !l.is_finite()) {
        return Err(Error::NonFinite("loss bundle"));
    }
    Ok(terms.iter().map(|(w, l)| w * l).sum())
}

/// Writes `softmax(z)` into `out`; returns `log_sum_exp(z)`.
pub(crate) fn softmax_into(z: &[f64], out: &mut [f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, v) in out.iter_mut().zip(z) {
        *o = (v - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_bundle_sums_weights() {
        assert_eq!(total_loss(&LossBundle::uniform(1.0)).unwrap(), 103.0);
        assert_eq!(total_loss(&LossBundle::uniform(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn segmentation_weight() {
        let b = LossBundle {
            l_seg: 1.0,
            ..Default::default()
        };
        assert_eq!(total_loss(&b).unwrap(), 50.0);
    }

    #[test]
    fn default_weights() {
        let w = LossWeights::default();
        assert_eq!([w.kp, w.akp, w.kphv, w.cho, w.dhp, w.seg, w.ds], [1., 1., 20., 20., 10., 50., 1.]);
    }

    #[test]
    fn non_finite_rejected() {
        let b = LossBundle {
            l_cho: f64::NAN,
            ..Default::default()
        };
        assert!(total_loss(&b).is_err());
        let b = LossBundle {
            l_kp: f64::INFINITY,
            ..Default::default()
        };
        assert!(total_loss(&b).is_err());
    }

    #[test]
    fn stable_softmax() {
        let z = [1000.0, 0.0, -1000.0];
        let mut p = [0.0; 3];
        let lse = softmax_into(&z, &mut p);
        assert!((lse - 1000.0).abs() < 1e-12);
        assert!((p[0] - 1.0).abs() < 1e-12);
    }
}
