use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NUM_AUX_KEYPOINTS;
use crate::loss::{softmax_into, LossGrad};

/// Borrowed `k x h x w` heatmap logits, planar.
#[derive(Debug, Clone, Copy)]
pub struct HeatmapLogits<'a> {
    pub data: &'a [f64],
    pub k: usize,
    pub h: usize,
    pub w: usize,
}

impl<'a> HeatmapLogits<'a> {
    pub fn new(data: &'a [f64], k: usize, h: usize, w: usize) -> Result<Self> {
        if data.len() != k * h * w || h == 0 || w == 0 {
            return Err(Error::Shape(format!("{} logits for {k}x{h}x{w} heatmaps", data.len())));
        }
        Ok(Self { data, k, h, w })
    }
}

/// One keypoint's supervision: a heatmap cell `(row, col)` or absent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeypointTarget {
    pub position: Option<(usize, usize)>,
    pub fingertip: bool,
}

impl KeypointTarget {
    pub fn at(row: usize, col: usize) -> Self {
        Self {
            position: Some((row, col)),
            fingertip: false,
        }
    }

    pub fn fingertip(mut self, f: bool) -> Self {
        self.fingertip = f;
        self
    }
}

/// Spatial-softmax cross-entropy against a one-hot cell, per visible
/// keypoint. Fingertip keypoints count double; the result is the mean over
/// visible keypoints, and invisible ones contribute neither loss nor gradient.
pub fn keypoint_ce(maps: HeatmapLogits<'_>, targets: &[KeypointTarget]) -> Result<LossGrad> {
    if targets.len() != maps.k {
        return Err(Error::InvalidTarget(format!("{} targets for {} heatmaps", targets.len(), maps.k)));
    }
    let plane = maps.h * maps.w;
    let mut out = LossGrad::zero(maps.data.len());
    let visible = targets.iter().filter(|t| t.position.is_some()).count();
    if visible == 0 {
        return Ok(out);
    }
    let norm = 1.0 / visible as f64;
    for (k, t) in targets.iter().enumerate() {
        let Some((r, c)) = t.position else { continue };
        if r >= maps.h || c >= maps.w {
            return Err(Error::InvalidTarget(format!(
                "keypoint {k} at ({r}, {c}) outside {}x{} heatmap",
                maps.h, maps.w
            )));
        }
        let weight = if t.fingertip { 2.0 } else { 1.0 };
        let z = &maps.data[k * plane..(k + 1) * plane];
        let g = &mut out.grad[k * plane..(k + 1) * plane];
        let lse = softmax_into(z, g);
        let idx = r * maps.w + c;
        out.loss += weight * norm * (lse - z[idx]);
        g[idx] -= 1.0;
        g.iter_mut().for_each(|v| *v *= weight * norm);
    }
    Ok(out)
}

/// [`keypoint_ce`] over the 18 auxiliary keypoint maps.
pub fn aux_keypoint_ce(maps: HeatmapLogits<'_>, targets: &[KeypointTarget]) -> Result<LossGrad> {
    if maps.k != NUM_AUX_KEYPOINTS {
        return Err(Error::Shape(format!("{} auxiliary maps, expected {NUM_AUX_KEYPOINTS}", maps.k)));
    }
    keypoint_ce(maps, targets)
}

/// Sum of [`keypoint_ce`] over heatmaps at 1/8, 1/4 and 1/2 of the input
/// resolution. `targets` are cells of the 1/2-resolution map and are
/// mapped to coarser scales by integer division.
pub fn deep_supervision_loss(
    maps: &[HeatmapLogits<'_>],
    targets: &[KeypointTarget],
    input_hw: (usize, usize),
) -> Result<Vec<LossGrad>> {
    if maps.len() != 3 {
        return Err(Error::Shape(format!("deep supervision needs 3 scales, got {}", maps.len())));
    }
    let (ih, iw) = input_hw;
    let mut outs = Vec::with_capacity(3);
    for (m, div) in maps.iter().zip([8usize, 4, 2]) {
        if (m.h, m.w) != (ih / div, iw / div) {
            return Err(Error::Shape(format!(
                "scale 1/{div} map is {}x{}, expected {}x{}",
                m.h,
                m.w,
                ih / div,
                iw / div
            )));
        }
        let f = div / 2;
        let scaled: Vec<KeypointTarget> = targets
            .iter()
            .map(|t| KeypointTarget {
                position: t.position.map(|(r, c)| (r / f, c / f)),
                fingertip: t.fingertip,
            })
            .collect();
        outs.push(keypoint_ce(*m, &scaled)?);
    }
    Ok(outs)
}
