use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Padding {
    /// Symmetric zero padding of `floor(d*(k-1)/2)` per axis.
    Same,
    Valid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: Padding,
    pub dilation: usize,
    pub groups: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// Square kernel, stride 1, Same padding, no dilation, no groups, with bias.
    pub fn new(in_ch: usize, out_ch: usize, k: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel: (k, k),
            stride: 1,
            padding: Padding::Same,
            dilation: 1,
            groups: 1,
            has_bias: true,
        }
    }

    pub fn stride(mut self, s: usize) -> Self {
        self.stride = s;
        self
    }

    pub fn groups(mut self, g: usize) -> Self {
        self.groups = g;
        self
    }

    pub fn dilation(mut self, d: usize) -> Self {
        self.dilation = d;
        self
    }

    pub fn padding(mut self, p: Padding) -> Self {
        self.padding = p;
        self
    }

    pub fn bias(mut self, b: bool) -> Self {
        self.has_bias = b;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (kh, kw) = self.kernel;
        if self.in_ch == 0 || self.out_ch == 0 || kh == 0 || kw == 0 {
            return config_err(format!("channels and kernel dims must be positive: {self:?}"));
        }
        if self.stride == 0 || self.dilation == 0 || self.groups == 0 {
            return config_err(format!("stride, dilation and groups must be >= 1: {self:?}"));
        }
        if self.in_ch % self.groups != 0 || self.out_ch % self.groups != 0 {
            return config_err(format!(
                "groups={} must divide in_ch={} and out_ch={}",
                self.groups, self.in_ch, self.out_ch
            ));
        }
        Ok(())
    }

    pub fn in_per_group(&self) -> usize {
        self.in_ch / self.groups
    }

    pub fn out_per_group(&self) -> usize {
        self.out_ch / self.groups
    }

    /// Padding applied on each side, `(rows, cols)`.
    pub fn pad(&self) -> (usize, usize) {
        match self.padding {
            Padding::Valid => (0, 0),
            Padding::Same => (
                self.dilation * (self.kernel.0 - 1) / 2,
                self.dilation * (self.kernel.1 - 1) / 2,
            ),
        }
    }

    /// Spatial extent covered by one dilated kernel.
    pub fn effective_kernel(&self) -> (usize, usize) {
        (
            self.dilation * (self.kernel.0 - 1) + 1,
            self.dilation * (self.kernel.1 - 1) + 1,
        )
    }

    pub fn output_hw(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let (ph, pw) = self.pad();
        let (eh, ew) = self.effective_kernel();
        if in_h + 2 * ph < eh || in_w + 2 * pw < ew {
            return config_err(format!(
                "input {in_h}x{in_w} is smaller than the effective kernel {eh}x{ew}"
            ));
        }
        Ok((
            (in_h + 2 * ph - eh) / self.stride + 1,
            (in_w + 2 * pw - ew) / self.stride + 1,
        ))
    }

    pub fn weight_len(&self) -> usize {
        self.out_ch * self.in_per_group() * self.kernel.0 * self.kernel.1
    }

    pub fn param_count(&self) -> usize {
        self.weight_len() + if self.has_bias { self.out_ch } else { 0 }
    }
}

/// Multiply-accumulates of one convolution: `out_h*out_w*out_ch*(in_ch/groups)*kh*kw`.
///
/// Taps that land on zero padding are counted: every kernel in this crate
/// executes them against an explicitly padded buffer.
pub fn mac_count(spec: &ConvSpec, in_h: usize, in_w: usize) -> Result<u64> {
    let (oh, ow) = spec.output_hw(in_h, in_w)?;
    Ok((oh * ow * spec.out_ch * spec.in_per_group() * spec.kernel.0 * spec.kernel.1) as u64)
}

/// Arithmetic actually executed by the kernels, tallied as they run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    /// Multiplies inside convolution / linear inner products.
    pub macs: u64,
    /// Every other scalar multiply or add (bias, batch norm, residual, pooling).
    pub other: u64,
}

impl OpCounter {
    /// One MAC is one multiply plus one add.
    pub fn flops(&self) -> u64 {
        2 * self.macs + self.other
    }
}

impl std::ops::AddAssign for OpCounter {
    fn add_assign(&mut self, rhs: Self) {
        self.macs += rhs.macs;
        self.other += rhs.other;
    }
}
