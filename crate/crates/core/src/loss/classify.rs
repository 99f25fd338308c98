use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ORIENTATION_CLASSES, POSE_CLASSES, SEG_CLASSES};
use crate::loss::{softmax_into, LossGrad};

/// Per-pixel class labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegLabels {
    pub h: usize,
    pub w: usize,
    pub labels: Vec<u8>,
}

/// Mean binary cross-entropy over independent logits.
pub fn visibility_bce(logits: &[f64], labels: &[bool]) -> Result<LossGrad> {
    if logits.len() != labels.len() || logits.is_empty() {
        return Err(Error::Shape(format!("{} visibility logits for {} labels", logits.len(), labels.len())));
    }
    let n = logits.len() as f64;
    let mut out = LossGrad::zero(logits.len());
    for ((g, &z), &y) in out.grad.iter_mut().zip(logits).zip(labels) {
        let y = y as u8 as f64;
        // log(1 + e^z) - y z, written to avoid overflow
        out.loss += (z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()) / n;
        let sig = if z >= 0.0 {
            1.0 / (1.0 + (-z).exp())
        } else {
            let e = z.exp();
            e / (1.0 + e)
        };
        *g = (sig - y) / n;
    }
    Ok(out)
}

/// Softmax cross-entropy per hand against a target that puts `1 - eps` on
/// the label and spreads `eps` uniformly. Hands labelled `None` are skipped;
/// the loss is the mean over labelled hands.
fn soft_class_ce(logits: &[f64], classes: usize, labels: &[Option<usize>], eps: f64) -> Result<LossGrad> {
    if logits.len() != labels.len() * classes {
        return Err(Error::Shape(format!(
            "{} logits for {} hands of {classes} classes",
            logits.len(),
            labels.len()
        )));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::InvalidTarget(format!("label smoothing {eps} outside [0, 1)")));
    }
    let mut out = LossGrad::zero(logits.len());
    let present = labels.iter().flatten().count();
    if present == 0 {
        return Ok(out);
    }
    let norm = 1.0 / present as f64;
    let off = eps / classes as f64;
    for (hand, label) in labels.iter().enumerate() {
        let Some(label) = *label else { continue };
        if label >= classes {
            return Err(Error::InvalidTarget(format!("class {label} of {classes}")));
        }
        let z = &logits[hand * classes..(hand + 1) * classes];
        let g = &mut out.grad[hand * classes..(hand + 1) * classes];
        let lse = softmax_into(z, g);
        for (c, (gc, zc)) in g.iter_mut().zip(z).enumerate() {
            let q = off + if c == label { 1.0 - eps } else { 0.0 };
            out.loss += norm * q * (lse - zc);
            *gc = norm * (*gc - q);
        }
    }
    Ok(out)
}

/// Hand orientation: label-smoothed cross-entropy over 8 classes per hand.
pub fn orientation_ce_soft(logits: &[f64], labels: &[Option<usize>], eps: f64) -> Result<LossGrad> {
    soft_class_ce(logits, ORIENTATION_CLASSES, labels, eps)
}

/// Hand pose: cross-entropy over 9 classes per hand.
pub fn handpose_ce(logits: &[f64], labels: &[Option<usize>]) -> Result<LossGrad> {
    soft_class_ce(logits, POSE_CLASSES, labels, 0.0)
}

/// Mean per-pixel cross-entropy over background / left / right.
/// `logits` is planar `3 x h x w`.
pub fn seg_ce(logits: &[f64], target: &SegLabels) -> Result<LossGrad> {
    let plane = target.h * target.w;
    if target.labels.len() != plane || logits.len() != SEG_CLASSES * plane || plane == 0 {
        return Err(Error::Shape(format!(
            "{} segmentation logits for a {}x{} map with {} labels",
            logits.len(),
            target.h,
            target.w,
            target.labels.len()
        )));
    }
    let mut out = LossGrad::zero(logits.len());
    let norm = 1.0 / plane as f64;
    let mut z = [0.0; SEG_CLASSES];
    let mut p = [0.0; SEG_CLASSES];
    for (i, &label) in target.labels.iter().enumerate() {
        let label = label as usize;
        if label >= SEG_CLASSES {
            return Err(Error::InvalidTarget(format!("segmentation label {label} at pixel {i}")));
        }
        for c in 0..SEG_CLASSES {
            z[c] = logits[c * plane + i];
        }
        let lse = softmax_into(&z, &mut p);
        out.loss += norm * (lse - z[label]);
        for c in 0..SEG_CLASSES {
            out.grad[c * plane + i] = norm * (p[c] - (c == label) as u8 as f64);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::gradcheck::{central_difference, relative_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn visibility_at_zero_is_ln2() {
        let l = visibility_bce(&[0.0; 18], &[true; 18]).unwrap();
        assert!(close(l.loss, 2f64.ln()));
        let l = visibility_bce(&[0.0; 18], &[false; 18]).unwrap();
        assert!(close(l.loss, 2f64.ln()));
    }

    #[test]
    fn visibility_extremes_are_stable() {
        let l = visibility_bce(&[800.0, -800.0], &[true, false]).unwrap();
        assert!(l.loss.abs() < 1e-12);
        let l = visibility_bce(&[800.0], &[false]).unwrap();
        assert!(close(l.loss, 800.0));
        assert!(l.grad[0].is_finite());
        assert!(visibility_bce(&[0.0; 3], &[true; 2]).is_err());
    }

    #[test]
    fn orientation_uniform_is_ln8() {
        let l = orientation_ce_soft(&[0.0; 16], &[Some(3), Some(7)], 0.1).unwrap();
        assert!(close(l.loss, 8f64.ln()));
        let l = orientation_ce_soft(&[0.0; 16], &[Some(0), None], 0.0).unwrap();
        assert!(close(l.loss, 8f64.ln()));
    }

    #[test]
    fn orientation_soft_target() {
        let mut z = [0.0; 8];
        z[0] = 1.0;
        let l = orientation_ce_soft(&z, &[Some(0)], 0.1).unwrap();
        // independent evaluation: -sum q log p
        let e = 1f64.exp();
        let denom = e + 7.0;
        let q0 = 0.9 + 0.1 / 8.0;
        let qo = 0.1 / 8.0;
        let expect = -(q0 * (e / denom).ln() + 7.0 * qo * (1.0 / denom).ln());
        assert!(close(l.loss, expect));
        assert!(close(l.loss, (e + 7.0).ln() - 0.9125));
    }

    #[test]
    fn orientation_label_range() {
        assert!(matches!(
            orientation_ce_soft(&[0.0; 8], &[Some(8)], 0.1),
            Err(Error::InvalidTarget(_))
        ));
        assert!(orientation_ce_soft(&[0.0; 8], &[Some(1)], 1.0).is_err());
        assert!(orientation_ce_soft(&[0.0; 9], &[Some(1)], 0.1).is_err());
        let l = orientation_ce_soft(&[0.5; 16], &[None, None], 0.1).unwrap();
        assert_eq!(l.loss, 0.0);
    }

    #[test]
    fn pose_uniform_is_ln9() {
        let l = handpose_ce(&[0.0; 18], &[Some(8), Some(0)]).unwrap();
        assert!(close(l.loss, 9f64.ln()));
        assert!(handpose_ce(&[0.0; 18], &[Some(9), None]).is_err());
    }

    #[test]
    fn seg_uniform_is_ln3() {
        let t = SegLabels {
            h: 4,
            w: 5,
            labels: (0..20).map(|i| (i % 3) as u8).collect(),
        };
        let l = seg_ce(&[0.0; 60], &t).unwrap();
        assert!(close(l.loss, 3f64.ln()));
        let bad = SegLabels {
            labels: vec![3; 20],
            ..t.clone()
        };
        assert!(matches!(seg_ce(&[0.0; 60], &bad), Err(Error::InvalidTarget(_))));
        assert!(seg_ce(&[0.0; 59], &t).is_err());
    }

    #[test]
    fn shift_invariance_and_non_negativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let z: Vec<f64> = (0..16).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let c = rng.gen_range(-50.0..50.0);
            // shift each hand's logits by the same constant
            let zs: Vec<f64> = z.iter().map(|v| v + c).collect();
            let labels = [Some(rng.gen_range(0..8)), Some(rng.gen_range(0..8))];
            let a = orientation_ce_soft(&z, &labels, 0.1).unwrap();
            let b = orientation_ce_soft(&zs, &labels, 0.1).unwrap();
            assert!((a.loss - b.loss).abs() <= 1e-9);
            assert!(a.loss >= 0.0);
            let v = visibility_bce(&z, &z.iter().map(|v| *v > 0.0).collect::<Vec<_>>()).unwrap();
            assert!(v.loss >= 0.0);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..10 {
            let z: Vec<f64> = (0..18).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y: Vec<bool> = (0..18).map(|_| rng.gen_bool(0.5)).collect();
            let a = visibility_bce(&z, &y).unwrap().grad;
            let n = central_difference(|v| visibility_bce(v, &y).unwrap().loss, &z, 1e-4);
            assert!(relative_error(&a, &n) <= 1e-4);

            let zo = &z[..16];
            let lo = [Some(rng.gen_range(0..8)), if rng.gen_bool(0.3) { None } else { Some(rng.gen_range(0..8)) }];
            let a = orientation_ce_soft(zo, &lo, 0.1).unwrap().grad;
            let n = central_difference(|v| orientation_ce_soft(v, &lo, 0.1).unwrap().loss, zo, 1e-4);
            assert!(relative_error(&a, &n) <= 1e-4);

            let lp = [Some(rng.gen_range(0..9)), Some(rng.gen_range(0..9))];
            let a = handpose_ce(&z, &lp).unwrap().grad;
            let n = central_difference(|v| handpose_ce(v, &lp).unwrap().loss, &z, 1e-4);
            assert!(relative_error(&a, &n) <= 1e-4);

            let t = SegLabels {
                h: 3,
                w: 4,
                labels: (0..12).map(|_| rng.gen_range(0..3)).collect(),
            };
            let zs: Vec<f64> = (0..36).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let a = seg_ce(&zs, &t).unwrap().grad;
            let n = central_difference(|v| seg_ce(v, &t).unwrap().loss, &zs, 1e-4);
            assert!(relative_error(&a, &n) <= 1e-4);
        }
    }
}
