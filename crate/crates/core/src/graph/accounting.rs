//! Parameter and FLOP accounting by symbolic execution.
//!
//! Conventions, matched exactly by the reference backend's op counter:
//!
//! * convolution / linear: 2 FLOPs per MAC (zero-padding taps included)
//! * bias: 1 add per output element
//! * batch norm: 1 multiply + 1 add per element (per-channel scale and
//!   shift precomputed)
//! * residual add: 1 per element
//! * global average pool: `h*w` adds + 1 multiply per channel
//! * ReLU, concat, upsampling: no arithmetic
//!
//! Parameters count kernels, biases and the trainable batch-norm affine
//! pair. Running statistics are stored but not trained, so they appear
//! only in `stored_scalars`.

use crate::conv::mac_count;
use crate::error::{shape_err, Result};
use crate::graph::exec::{walk, Exec, HeadSet};
use crate::graph::spec::{ConvLayer, GraphSpec, LinearLayer};
use crate::tensor::Dims;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Conv,
    Residual,
    Pool,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRow {
    pub name: String,
    pub kind: RowKind,
    pub output: Dims,
    pub params: u64,
    pub stored_scalars: u64,
    pub macs: u64,
    /// Arithmetic outside multiply-accumulates.
    pub other_flops: u64,
}

impl LayerRow {
    pub fn flops(&self) -> u64 {
        2 * self.macs + self.other_flops
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Accounting {
    pub heads: HeadSet,
    pub rows: Vec<LayerRow>,
}

impl Accounting {
    pub fn params(&self) -> u64 {
        self.rows.iter().map(|r| r.params).sum()
    }

    pub fn stored_scalars(&self) -> u64 {
        self.rows.iter().map(|r| r.stored_scalars).sum()
    }

    pub fn macs(&self) -> u64 {
        self.rows.iter().map(|r| r.macs).sum()
    }

    pub fn flops(&self) -> u64 {
        self.rows.iter().map(|r| r.flops()).sum()
    }

    pub fn other_flops(&self) -> u64 {
        self.rows.iter().map(|r| r.other_flops).sum()
    }
}

/// Shape-only executor; also the source of the per-layer breakdown.
#[derive(Default)]
pub(crate) struct Symbolic {
    pub rows: Vec<LayerRow>,
    pub trace: Vec<(String, Dims)>,
}

impl Exec for Symbolic {
    type Map = Dims;
    type Vector = usize;

    fn conv(&mut self, layer: &ConvLayer, x: &Dims) -> Result<Dims> {
        let s = &layer.spec;
        if x.c != s.in_ch {
            return shape_err(format!("{}: input has {} channels, expects {}", layer.name, x.c, s.in_ch));
        }
        let (oh, ow) = s.output_hw(x.h, x.w)?;
        let out = Dims::nchw(x.n, s.out_ch, oh, ow);
        let elems = out.len() as u64;
        let bn = layer.bn as u64;
        let bias = s.has_bias as u64;
        self.rows.push(LayerRow {
            name: layer.name.clone(),
            kind: RowKind::Conv,
            output: out,
            params: (s.param_count() + 2 * bn as usize * s.out_ch) as u64,
            stored_scalars: (s.param_count() + 4 * bn as usize * s.out_ch) as u64,
            macs: x.n as u64 * mac_count(s, x.h, x.w)?,
            other_flops: bias * elems + 2 * bn * elems,
        });
        self.trace.push((layer.name.clone(), out));
        Ok(out)
    }

    fn residual(&mut self, name: &str, skip: &Dims, x: &Dims) -> Result<Dims> {
        if skip != x {
            return shape_err(format!("{name}: residual {skip} vs {x}"));
        }
        self.rows.push(LayerRow {
            name: name.to_string(),
            kind: RowKind::Residual,
            output: *x,
            params: 0,
            stored_scalars: 0,
            macs: 0,
            other_flops: x.len() as u64,
        });
        Ok(*x)
    }

    fn concat(&mut self, name: &str, parts: &[&Dims]) -> Result<Dims> {
        let first = parts[0];
        if parts.iter().any(|p| (p.n, p.h, p.w) != (first.n, first.h, first.w)) {
            return shape_err(format!("{name}: spatial sizes differ"));
        }
        Ok(Dims::nchw(first.n, parts.iter().map(|p| p.c).sum(), first.h, first.w))
    }

    fn upsample(&mut self, _name: &str, x: &Dims) -> Result<Dims> {
        Ok(Dims::nchw(x.n, x.c, x.h * 2, x.w * 2))
    }

    fn pool(&mut self, name: &str, x: &Dims) -> Result<usize> {
        self.rows.push(LayerRow {
            name: name.to_string(),
            kind: RowKind::Pool,
            output: Dims::nchw(x.n, x.c, 1, 1),
            params: 0,
            stored_scalars: 0,
            macs: 0,
            other_flops: (x.n * x.c * (x.plane() + 1)) as u64,
        });
        Ok(x.c)
    }

    fn linear(&mut self, layer: &LinearLayer, v: &usize) -> Result<usize> {
        if *v != layer.in_features {
            return shape_err(format!("{}: {} features, expects {}", layer.name, v, layer.in_features));
        }
        let p = (layer.in_features * layer.out_features + layer.out_features) as u64;
        self.rows.push(LayerRow {
            name: layer.name.clone(),
            kind: RowKind::Linear,
            output: Dims::nchw(1, layer.out_features, 1, 1),
            params: p,
            stored_scalars: p,
            macs: (layer.in_features * layer.out_features) as u64,
            other_flops: layer.out_features as u64,
        });
        Ok(layer.out_features)
    }
}

pub(crate) fn input_dims(g: &GraphSpec) -> Dims {
    Dims::chw(1, g.input_hw.0, g.input_hw.1)
}

/// Per-layer parameter and FLOP breakdown for one forward pass.
pub fn account(g: &GraphSpec, heads: HeadSet) -> Result<Accounting> {
    let mut s = Symbolic::default();
    walk(g, &mut s, &input_dims(g), heads)?;
    Ok(Accounting { heads, rows: s.rows })
}

/// Trainable parameters of the deployed network.
pub fn count_params(g: &GraphSpec) -> Result<u64> {
    Ok(account(g, HeadSet::InferenceHeads)?.params())
}

/// FLOPs of one deployed forward pass at the configured resolution.
pub fn count_flops(g: &GraphSpec) -> Result<u64> {
    Ok(account(g, HeadSet::InferenceHeads)?.flops())
}

/// Output shape of every convolution, in execution order.
pub fn symbolic_shapes(g: &GraphSpec, heads: HeadSet) -> Result<Vec<(String, Dims)>> {
    let mut s = Symbolic::default();
    walk(g, &mut s, &input_dims(g), heads)?;
    Ok(s.trace)
}
