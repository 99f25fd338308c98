//! Dense `f32` tensors in two memory layouts, plus kernel-stack packing.
//!
//! A [`Tensor`] is always stored as `n x c x h x w` logically. The layout
//! decides the physical order:
//!
//! * [`Layout::ChannelPlanar`]: `((n*C + c)*H + y)*W + x` (NCHW)
//! * [`Layout::ChannelInterleaved`]: `((n*H + y)*W + x)*C + c` (NHWC)
//!
//! The interleaved form keeps all channels of one pixel adjacent, so a
//! convolution tap becomes a contiguous dot product over input channels.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layout {
    ChannelPlanar,
    ChannelInterleaved,
}

/// Logical extent of a tensor. Rank-3 tensors use `n == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn chw(c: usize, h: usize, w: usize) -> Self {
        Self { n: 1, c, h, w }
    }

    pub const fn nchw(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn offset(&self, layout: Layout, n: usize, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(n < self.n && c < self.c && y < self.h && x < self.w);
        match layout {
            Layout::ChannelPlanar => ((n * self.c + c) * self.h + y) * self.w + x,
            Layout::ChannelInterleaved => ((n * self.h + y) * self.w + x) * self.c + c,
        }
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.n == 1 {
            write!(f, "{}x{}x{}", self.c, self.h, self.w)
        } else {
            write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Dims,
    layout: Layout,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(dims: Dims, layout: Layout) -> Self {
        Self {
            dims,
            layout,
            data: vec![0.0; dims.len()],
        }
    }

    pub fn full(dims: Dims, layout: Layout, value: f32) -> Self {
        Self {
            dims,
            layout,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: Dims, layout: Layout, data: Vec<f32>) -> Result<Self> {
        if data.len() != dims.len() {
            return shape_err(format!(
                "{} elements supplied for dims {dims} ({} expected)",
                data.len(),
                dims.len()
            ));
        }
        Ok(Self { dims, layout, data })
    }

    /// Builds a planar tensor by evaluating `f(n, c, y, x)` for every element.
    pub fn from_fn(dims: Dims, layout: Layout, mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let mut t = Self::zeros(dims, layout);
        for n in 0..dims.n {
            for c in 0..dims.c {
                for y in 0..dims.h {
                    for x in 0..dims.w {
                        let off = dims.offset(layout, n, c, y, x);
                        t.data[off] = f(n, c, y, x);
                    }
                }
            }
        }
        t
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.dims.offset(self.layout, n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f32) {
        let off = self.dims.offset(self.layout, n, c, y, x);
        self.data[off] = v;
    }

    pub fn expect_layout(&self, expected: Layout) -> Result<()> {
        if self.layout != expected {
            return Err(Error::LayoutMismatch {
                expected,
                found: self.layout,
            });
        }
        Ok(())
    }

    /// Returns a copy in `layout`, converting if needed.
    pub fn to_layout(&self, layout: Layout) -> Tensor {
        if layout == self.layout {
            return self.clone();
        }
        relayout(self, layout)
    }

    /// Copies channel plane `c` of batch item `n` into a planar `h*w` vector.
    pub fn channel(&self, n: usize, c: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.dims.plane());
        for y in 0..self.dims.h {
            for x in 0..self.dims.w {
                out.push(self.at(n, c, y, x));
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        if self.dims != other.dims {
            return shape_err(format!("cannot compare {} with {}", self.dims, other.dims));
        }
        let other = other.to_layout(self.layout);
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max))
    }
}

fn relayout(t: &Tensor, layout: Layout) -> Tensor {
    let d = t.dims;
    let mut out = vec![0.0f32; d.len()];
    for n in 0..d.n {
        for c in 0..d.c {
            for y in 0..d.h {
                for x in 0..d.w {
                    out[d.offset(layout, n, c, y, x)] = t.data[d.offset(t.layout, n, c, y, x)];
                }
            }
        }
    }
    Tensor {
        dims: d,
        layout,
        data: out,
    }
}

/// Converts a channel-planar tensor to channel-interleaved order.
pub fn to_interleaved(t: &Tensor) -> Result<Tensor> {
    t.expect_layout(Layout::ChannelPlanar)?;
    Ok(relayout(t, Layout::ChannelInterleaved))
}

/// Inverse of [`to_interleaved`].
pub fn to_planar(t: &Tensor) -> Result<Tensor> {
    t.expect_layout(Layout::ChannelInterleaved)?;
    Ok(relayout(t, Layout::ChannelPlanar))
}

/// Convolution kernel stack in `out_ch x in_per_group x kh x kw` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvWeights {
    pub out_ch: usize,
    pub in_per_group: usize,
    pub kh: usize,
    pub kw: usize,
    pub data: Vec<f32>,
}

impl ConvWeights {
    pub fn new(out_ch: usize, in_per_group: usize, kh: usize, kw: usize, data: Vec<f32>) -> Result<Self> {
        if out_ch == 0 || in_per_group == 0 || kh == 0 || kw == 0 {
            return config_err("weight dims must be positive");
        }
        if data.len() != out_ch * in_per_group * kh * kw {
            return shape_err(format!(
                "weight data has {} values, dims {out_ch}x{in_per_group}x{kh}x{kw} need {}",
                data.len(),
                out_ch * in_per_group * kh * kw
            ));
        }
        Ok(Self {
            out_ch,
            in_per_group,
            kh,
            kw,
            data,
        })
    }

    pub fn zeros(out_ch: usize, in_per_group: usize, kh: usize, kw: usize) -> Self {
        Self {
            out_ch,
            in_per_group,
            kh,
            kw,
            data: vec![0.0; out_ch * in_per_group * kh * kw],
        }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.out_ch, self.in_per_group, self.kh, self.kw]
    }

    #[inline]
    pub fn at(&self, o: usize, i: usize, ky: usize, kx: usize) -> f32 {
        self.data[((o * self.in_per_group + i) * self.kh + ky) * self.kw + kx]
    }

    pub fn filter_len(&self) -> usize {
        self.in_per_group * self.kh * self.kw
    }
}

/// Kernel stack reordered for the interleaved convolution.
///
/// Order: group, block of `lane_width` output channels (the last block of a
/// group may be narrower), `ky`, `kx`, input channel, lane. With an
/// interleaved input the innermost two loops of the convolution read both
/// the activations and these weights sequentially.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedWeights {
    pub out_ch: usize,
    pub in_per_group: usize,
    pub kh: usize,
    pub kw: usize,
    pub groups: usize,
    pub lane_width: usize,
    /// Set when filters per group is not a multiple of `lane_width`.
    pub misaligned: bool,
    pub data: Vec<f32>,
}

impl PackedWeights {
    pub fn out_per_group(&self) -> usize {
        self.out_ch / self.groups
    }

    /// Output-channel blocks of one group as `(first channel in group, width)`.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let opg = self.out_per_group();
        let lw = self.lane_width;
        (0..opg.div_ceil(lw)).map(move |b| (b * lw, lw.min(opg - b * lw)))
    }

    /// Recovers the `out x in_per_group x kh x kw` kernel stack.
    pub fn unpack(&self) -> ConvWeights {
        let mut out = ConvWeights::zeros(self.out_ch, self.in_per_group, self.kh, self.kw);
        for (src, dst) in packing_order(self).enumerate() {
            out.data[dst] = self.data[src];
        }
        out
    }
}

/// Yields, for each position of the packed buffer, the matching index in the
/// unpacked `OIHW` buffer.
fn packing_order(p: &PackedWeights) -> impl Iterator<Item = usize> + '_ {
    let (ipg, kh, kw) = (p.in_per_group, p.kh, p.kw);
    let opg = p.out_per_group();
    (0..p.groups).flat_map(move |g| {
        p.blocks().flat_map(move |(b0, bw)| {
            (0..kh).flat_map(move |ky| {
                (0..kw).flat_map(move |kx| {
                    (0..ipg).flat_map(move |ci| {
                        (0..bw).map(move |l| {
                            let o = g * opg + b0 + l;
                            ((o * ipg + ci) * kh + ky) * kw + kx
                        })
                    })
                })
            })
        })
    })
}

/// Reorders a kernel stack for [`crate::conv::conv2d_packed`].
pub fn pack_kernels(w: &ConvWeights, groups: usize, lane_width: usize) -> Result<PackedWeights> {
    if groups == 0 || lane_width == 0 {
        return config_err("groups and lane_width must be positive");
    }
    if w.out_ch % groups != 0 {
        return config_err(format!("groups={groups} does not divide out_ch={}", w.out_ch));
    }
    let mut packed = PackedWeights {
        out_ch: w.out_ch,
        in_per_group: w.in_per_group,
        kh: w.kh,
        kw: w.kw,
        groups,
        lane_width,
        misaligned: (w.out_ch / groups) % lane_width != 0,
        data: Vec::new(),
    };
    let order: Vec<usize> = packing_order(&packed).collect();
    packed.data = order.into_iter().map(|i| w.data[i]).collect();
    Ok(packed)
}
