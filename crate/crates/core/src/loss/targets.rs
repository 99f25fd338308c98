//! Per-frame supervision: JSON annotations, decoded targets, and the
//! combined multi-task loss over every head.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::LossConfig;
use crate::error::{Error, Result};
use crate::graph::{
    HeadsOutput, AUX_KEYPOINTS_PER_HAND, HANDS, KEYPOINTS_PER_HAND, NUM_AUX_KEYPOINTS, NUM_KEYPOINTS,
    NUM_VISIBILITY, ORIENTATION_CLASSES, POSE_CLASSES, SEG_CLASSES,
};
use crate::loss::{
    aux_keypoint_ce, deep_supervision_loss, handpose_ce, keypoint_ce, orientation_ce_soft, seg_ce, total_loss,
    visibility_bce, HeatmapLogits, KeypointTarget, LossBundle, LossWeights, SegLabels,
};
use crate::postprocess::pgm;
use crate::tensor::Tensor;

/// One hand in an annotation file. Coordinates are `[x, y]` input-image
/// pixels; `null` marks an unlabelled or occluded keypoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandAnnotation {
    pub present: bool,
    #[serde(default)]
    pub keypoints: Vec<Option<[f64; 2]>>,
    #[serde(default)]
    pub aux_keypoints: Vec<Option<[f64; 2]>>,
    /// Overrides the configured fingertip set for this hand.
    #[serde(default)]
    pub fingertips: Option<Vec<bool>>,
    #[serde(default)]
    pub aux_fingertips: Option<Vec<bool>>,
    #[serde(default)]
    pub orientation: Option<usize>,
    #[serde(default)]
    pub pose: Option<usize>,
}

/// Annotation of a single frame: left hand first, then right.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameAnnotation {
    pub hands: Vec<HandAnnotation>,
    /// Label map (0 background, 1 left, 2 right) as a PGM file, relative to
    /// the annotation file.
    #[serde(default)]
    pub segmentation: Option<String>,
}

/// Targets in heatmap coordinates, ready for the loss functions.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTargets {
    pub keypoints: Vec<KeypointTarget>,
    pub aux_keypoints: Vec<KeypointTarget>,
    pub hand_present: [bool; HANDS],
    pub orientation: [Option<usize>; HANDS],
    pub pose: [Option<usize>; HANDS],
    pub segmentation: Option<SegLabels>,
}

impl FrameTargets {
    /// Both hands absent, nothing labelled.
    pub fn empty() -> Self {
        Self {
            keypoints: vec![KeypointTarget::default(); NUM_KEYPOINTS],
            aux_keypoints: vec![KeypointTarget::default(); NUM_AUX_KEYPOINTS],
            hand_present: [false; HANDS],
            orientation: [None; HANDS],
            pose: [None; HANDS],
            segmentation: None,
        }
    }

    /// Keypoint visibility for the 16 keypoints followed by hand presence.
    pub fn visibility_labels(&self) -> Vec<bool> {
        let mut v: Vec<bool> = self.keypoints.iter().map(|k| k.position.is_some()).collect();
        v.extend(self.hand_present);
        v
    }
}

impl FrameAnnotation {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Input(format!("annotation: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Converts to heatmap-space targets. Heatmaps are half the input
    /// resolution; a segmentation file may be given at either resolution.
    pub fn to_targets(&self, input_hw: (usize, usize), cfg: &LossConfig, base_dir: Option<&Path>) -> Result<FrameTargets> {
        if self.hands.len() != HANDS {
            return Err(Error::InvalidTarget(format!("{} hands annotated, expected {HANDS}", self.hands.len())));
        }
        let (ih, iw) = input_hw;
        let heat_hw = (ih / 2, iw / 2);
        let mut t = FrameTargets::empty();
        for (hand, a) in self.hands.iter().enumerate() {
            t.hand_present[hand] = a.present;
            if !a.present {
                continue;
            }
            let kp = map_hand(&a.keypoints, a.fingertips.as_deref(), &cfg.fingertips, KEYPOINTS_PER_HAND, input_hw, heat_hw)?;
            t.keypoints[hand * KEYPOINTS_PER_HAND..(hand + 1) * KEYPOINTS_PER_HAND].copy_from_slice(&kp);
            let aux = map_hand(
                &a.aux_keypoints,
                a.aux_fingertips.as_deref(),
                &cfg.aux_fingertips,
                AUX_KEYPOINTS_PER_HAND,
                input_hw,
                heat_hw,
            )?;
            t.aux_keypoints[hand * AUX_KEYPOINTS_PER_HAND..(hand + 1) * AUX_KEYPOINTS_PER_HAND].copy_from_slice(&aux);
            if let Some(o) = a.orientation {
                if o >= ORIENTATION_CLASSES {
                    return Err(Error::InvalidTarget(format!("orientation class {o}")));
                }
            }
            if let Some(p) = a.pose {
                if p >= POSE_CLASSES {
                    return Err(Error::InvalidTarget(format!("pose class {p}")));
                }
            }
            t.orientation[hand] = a.orientation;
            t.pose[hand] = a.pose;
        }
        if let Some(rel) = &self.segmentation {
            let path = match base_dir {
                Some(d) => d.join(rel),
                None => rel.into(),
            };
            let img = pgm::read_pgm(&path)?;
            t.segmentation = Some(seg_labels(&img, input_hw, heat_hw)?);
        }
        Ok(t)
    }
}

fn map_hand(
    coords: &[Option<[f64; 2]>],
    tips: Option<&[bool]>,
    default_tips: &[usize],
    per_hand: usize,
    input_hw: (usize, usize),
    heat_hw: (usize, usize),
) -> Result<Vec<KeypointTarget>> {
    if !coords.is_empty() && coords.len() != per_hand {
        return Err(Error::InvalidTarget(format!("{} keypoints for a hand, expected {per_hand}", coords.len())));
    }
    if let Some(t) = tips {
        if t.len() != per_hand {
            return Err(Error::InvalidTarget(format!("{} fingertip flags, expected {per_hand}", t.len())));
        }
    }
    (0..per_hand)
        .map(|k| {
            let fingertip = match tips {
                Some(t) => t[k],
                None => default_tips.contains(&k),
            };
            let position = match coords.get(k).copied().flatten() {
                None => None,
                Some([x, y]) => {
                    if !(x >= 0.0 && y >= 0.0 && x < input_hw.1 as f64 && y < input_hw.0 as f64) {
                        return Err(Error::InvalidTarget(format!("keypoint {k} at ({x}, {y}) outside the image")));
                    }
                    let row = (y * heat_hw.0 as f64 / input_hw.0 as f64) as usize;
                    let col = (x * heat_hw.1 as f64 / input_hw.1 as f64) as usize;
                    Some((row.min(heat_hw.0 - 1), col.min(heat_hw.1 - 1)))
                }
            };
            Ok(KeypointTarget { position, fingertip })
        })
        .collect()
}

fn seg_labels(img: &pgm::Gray16, input_hw: (usize, usize), heat_hw: (usize, usize)) -> Result<SegLabels> {
    let (h, w) = heat_hw;
    let step = if (img.height, img.width) == heat_hw {
        1
    } else if (img.height, img.width) == input_hw {
        input_hw.0 / heat_hw.0
    } else {
        return Err(Error::InvalidTarget(format!(
            "segmentation map is {}x{}, expected {}x{} or {}x{}",
            img.height, img.width, h, w, input_hw.0, input_hw.1
        )));
    };
    let mut labels = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let v = img.data[r * step * img.width + c * step];
            if v as usize >= SEG_CLASSES {
                return Err(Error::InvalidTarget(format!("segmentation label {v}")));
            }
            labels.push(v as u8);
        }
    }
    Ok(SegLabels { h, w, labels })
}

/// Logits of every head in `f64`, planar; also used for their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadLogits {
    pub input_hw: (usize, usize),
    pub primary: Vec<f64>,
    pub aux: Vec<f64>,
    pub visibility: Vec<f64>,
    pub orientation: Vec<f64>,
    pub pose: Vec<f64>,
    pub segmentation: Vec<f64>,
    pub deep_supervision: [Vec<f64>; 3],
}

/// Gradient of the total loss, laid out like the logits.
pub type HeadGradients = HeadLogits;

fn widen(t: &Tensor) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

fn widen_vec(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

impl HeadLogits {
    /// Requires a pass over all heads.
    pub fn from_outputs(out: &HeadsOutput, input_hw: (usize, usize)) -> Result<Self> {
        let missing = || Error::Shape("loss needs every head; run the forward pass with all heads".into());
        let ds = out.deep_supervision.as_ref().ok_or_else(missing)?;
        let h = Self {
            input_hw,
            primary: widen(&out.primary),
            aux: widen(out.aux.as_ref().ok_or_else(missing)?),
            visibility: widen_vec(&out.visibility),
            orientation: widen_vec(out.orientation.as_ref().ok_or_else(missing)?),
            pose: widen_vec(out.pose.as_ref().ok_or_else(missing)?),
            segmentation: widen(out.segmentation.as_ref().ok_or_else(missing)?),
            deep_supervision: [widen(&ds[0]), widen(&ds[1]), widen(&ds[2])],
        };
        h.check()?;
        Ok(h)
    }

    fn zeros_like(&self) -> Self {
        let z = |v: &Vec<f64>| vec![0.0; v.len()];
        Self {
            input_hw: self.input_hw,
            primary: z(&self.primary),
            aux: z(&self.aux),
            visibility: z(&self.visibility),
            orientation: z(&self.orientation),
            pose: z(&self.pose),
            segmentation: z(&self.segmentation),
            deep_supervision: [
                z(&self.deep_supervision[0]),
                z(&self.deep_supervision[1]),
                z(&self.deep_supervision[2]),
            ],
        }
    }

    fn heat_hw(&self) -> (usize, usize) {
        (self.input_hw.0 / 2, self.input_hw.1 / 2)
    }

    fn check(&self) -> Result<()> {
        let (h, w) = self.heat_hw();
        let (ih, iw) = self.input_hw;
        let expect = [
            ("primary", self.primary.len(), NUM_KEYPOINTS * h * w),
            ("aux", self.aux.len(), NUM_AUX_KEYPOINTS * h * w),
            ("visibility", self.visibility.len(), NUM_VISIBILITY),
            ("orientation", self.orientation.len(), HANDS * ORIENTATION_CLASSES),
            ("pose", self.pose.len(), HANDS * POSE_CLASSES),
            ("segmentation", self.segmentation.len(), SEG_CLASSES * h * w),
            ("ds 1/8", self.deep_supervision[0].len(), NUM_KEYPOINTS * (ih / 8) * (iw / 8)),
            ("ds 1/4", self.deep_supervision[1].len(), NUM_KEYPOINTS * (ih / 4) * (iw / 4)),
            ("ds 1/2", self.deep_supervision[2].len(), NUM_KEYPOINTS * (ih / 2) * (iw / 2)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Shape(format!("{name} head has {got} logits, expected {want}")));
            }
        }
        Ok(())
    }
}

fn axpy(dst: &mut [f64], a: f64, src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += a * s);
}

/// Every task loss for one frame, and the gradient of their weighted sum
/// with respect to each head's logits. Segmentation contributes zero when
/// the frame has no label map.
pub fn multitask_loss(
    logits: &HeadLogits,
    t: &FrameTargets,
    cfg: &LossConfig,
    weights: LossWeights,
) -> Result<(LossBundle, f64, HeadGradients)> {
    logits.check()?;
    let (h, w) = logits.heat_hw();
    let (ih, iw) = logits.input_hw;
    let mut g = logits.zeros_like();
    let mut b = LossBundle {
        weights,
        ..Default::default()
    };

    let kp = keypoint_ce(HeatmapLogits::new(&logits.primary, NUM_KEYPOINTS, h, w)?, &t.keypoints)?;
    b.l_kp = kp.loss;
    axpy(&mut g.primary, weights.kp, &kp.grad);

    let akp = aux_keypoint_ce(HeatmapLogits::new(&logits.aux, NUM_AUX_KEYPOINTS, h, w)?, &t.aux_keypoints)?;
    b.l_akp = akp.loss;
    axpy(&mut g.aux, weights.akp, &akp.grad);

    let vis = visibility_bce(&logits.visibility, &t.visibility_labels())?;
    b.l_kphv = vis.loss;
    axpy(&mut g.visibility, weights.kphv, &vis.grad);

    let present = |labels: &[Option<usize>; HANDS]| -> Vec<Option<usize>> {
        labels.iter().zip(t.hand_present).map(|(l, p)| l.filter(|_| p)).collect()
    };
    let cho = orientation_ce_soft(&logits.orientation, &present(&t.orientation), cfg.orientation_eps)?;
    b.l_cho = cho.loss;
    axpy(&mut g.orientation, weights.cho, &cho.grad);

    let dhp = handpose_ce(&logits.pose, &present(&t.pose))?;
    b.l_dhp = dhp.loss;
    axpy(&mut g.pose, weights.dhp, &dhp.grad);

    if let Some(seg) = &t.segmentation {
        let s = seg_ce(&logits.segmentation, seg)?;
        b.l_seg = s.loss;
        axpy(&mut g.segmentation, weights.seg, &s.grad);
    }

    let ds = &logits.deep_supervision;
    let maps = [
        HeatmapLogits::new(&ds[0], NUM_KEYPOINTS, ih / 8, iw / 8)?,
        HeatmapLogits::new(&ds[1], NUM_KEYPOINTS, ih / 4, iw / 4)?,
        HeatmapLogits::new(&ds[2], NUM_KEYPOINTS, ih / 2, iw / 2)?,
    ];
    for (i, part) in deep_supervision_loss(&maps, &t.keypoints, logits.input_hw)?.into_iter().enumerate() {
        b.l_ds += part.loss;
        axpy(&mut g.deep_supervision[i], weights.ds, &part.grad);
    }

    let total = total_loss(&b)?;
    Ok((b, total, g))
}
