use serde::{Deserialize, Serialize};

use crate::conv::spec::OpCounter;
use crate::error::{shape_err, Error, Result};
use crate::tensor::{ConvWeights, Tensor};

pub const BN_EPSILON: f32 = 1e-5;

/// Inference-time batch-norm statistics for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub epsilon: f32,
}

impl BnParams {
    pub fn identity(ch: usize) -> Self {
        Self {
            gamma: vec![1.0; ch],
            beta: vec![0.0; ch],
            running_mean: vec![0.0; ch],
            running_var: vec![1.0; ch],
            epsilon: BN_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self, ch: usize) -> Result<()> {
        let lens = [self.gamma.len(), self.beta.len(), self.running_mean.len(), self.running_var.len()];
        if lens.iter().any(|&l| l != ch) {
            return shape_err(format!("batch-norm arrays have lengths {lens:?}, expected {ch}"));
        }
        if self.epsilon < 0.0 || self.running_var.iter().any(|&v| v < 0.0 || v + self.epsilon <= 0.0) {
            return Err(Error::Config("batch-norm variance must be >= 0 with var + eps > 0".into()));
        }
        Ok(())
    }

    /// Per-channel `(scale, shift)` so that `bn(x) = x * scale + shift`.
    pub fn scale_shift(&self) -> (Vec<f32>, Vec<f32>) {
        let scale: Vec<f32> = self
            .gamma
            .iter()
            .zip(&self.running_var)
            .map(|(g, v)| g / (v + self.epsilon).sqrt())
            .collect();
        let shift = self
            .beta
            .iter()
            .zip(&self.running_mean)
            .zip(&scale)
            .map(|((b, m), s)| b - m * s)
            .collect();
        (scale, shift)
    }
}

/// Applies batch norm channel by channel, any layout.
pub fn batchnorm(x: &Tensor, bn: &BnParams, counter: &mut OpCounter) -> Result<Tensor> {
    let d = x.dims();
    bn.validate(d.c)?;
    let (scale, shift) = bn.scale_shift();
    let mut out = x.clone();
    for n in 0..d.n {
        for c in 0..d.c {
            for y in 0..d.h {
                for xx in 0..d.w {
                    let v = x.at(n, c, y, xx);
                    out.set(n, c, y, xx, v * scale[c] + shift[c]);
                }
            }
        }
    }
    counter.other += 2 * d.len() as u64;
    Ok(out)
}

/// Folds batch norm into the preceding convolution:
/// `w' = w * g / sqrt(var + eps)`, `b' = (b - mean) * g / sqrt(var + eps) + beta`.
pub fn fold_batchnorm(w: &ConvWeights, bias: Option<&[f32]>, bn: &BnParams) -> Result<(ConvWeights, Vec<f32>)> {
    bn.validate(w.out_ch)?;
    if let Some(b) = bias {
        if b.len() != w.out_ch {
            return shape_err(format!("bias has {} values for {} channels", b.len(), w.out_ch));
        }
    }
    let (scale, _) = bn.scale_shift();
    let per = w.filter_len();
    let mut folded = w.clone();
    for (o, chunk) in folded.data.chunks_mut(per).enumerate() {
        chunk.iter_mut().for_each(|v| *v *= scale[o]);
    }
    let b: Vec<f32> = (0..w.out_ch)
        .map(|o| {
            let b0 = bias.map_or(0.0, |b| b[o]);
            (b0 - bn.running_mean[o]) * scale[o] + bn.beta[o]
        })
        .collect();
    Ok((folded, b))
}
