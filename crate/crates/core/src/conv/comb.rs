//! Comb decomposition of dilated convolution.
//!
//! With stride 1 and dilation `d`, an output pixel at `(y, x)` only reads
//! input pixels congruent to `(y mod d, x mod d)`. Splitting the input into
//! the `d*d` residue fields turns the dilated convolution into `d*d`
//! independent dense convolutions with the original kernel, so no
//! multiplies are spent on the holes of a zero-stuffed kernel.

use crate::conv::packed::conv2d_packed_counted;
use crate::conv::reference::{check_weights, conv2d_ref_counted};
use crate::conv::spec::{ConvSpec, OpCounter, Padding};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{ConvWeights, Dims, Layout, PackedWeights, Tensor};

fn field_len(extent: usize, residue: usize, d: usize) -> usize {
    if residue >= extent {
        0
    } else {
        (extent - residue).div_ceil(d)
    }
}

/// Splits `x` into `d*d` fields, ordered row-major by residue `(i, j)`.
/// Field `(i, j)` holds the pixels with `row % d == i` and `col % d == j`.
pub fn split_fields(x: &Tensor, d: usize) -> Result<Vec<Tensor>> {
    if d == 0 {
        return Err(Error::Config("field factor must be >= 1".into()));
    }
    let dims = x.dims();
    let mut fields = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let fd = Dims::nchw(dims.n, dims.c, field_len(dims.h, i, d), field_len(dims.w, j, d));
            let f = Tensor::from_fn(fd, x.layout(), |n, c, y, xx| x.at(n, c, i + y * d, j + xx * d));
            fields.push(f);
        }
    }
    Ok(fields)
}

/// Inverse of [`split_fields`].
pub fn merge_fields(fields: &[Tensor], d: usize) -> Result<Tensor> {
    if d == 0 {
        return Err(Error::Config("field factor must be >= 1".into()));
    }
    if fields.len() != d * d {
        return shape_err(format!("expected {} fields, got {}", d * d, fields.len()));
    }
    let first = fields[0].dims();
    let layout = fields[0].layout();
    let h: usize = (0..d).map(|i| fields[i * d].dims().h).sum();
    let w: usize = (0..d).map(|j| fields[j].dims().w).sum();
    let out_dims = Dims::nchw(first.n, first.c, h, w);
    let mut out = Tensor::zeros(out_dims, layout);
    for i in 0..d {
        for j in 0..d {
            let f = &fields[i * d + j];
            let fd = f.dims();
            let expect = Dims::nchw(first.n, first.c, field_len(h, i, d), field_len(w, j, d));
            if fd != expect || f.layout() != layout {
                return shape_err(format!("field ({i},{j}) is {fd}, expected {expect}"));
            }
            for n in 0..fd.n {
                for c in 0..fd.c {
                    for y in 0..fd.h {
                        for x in 0..fd.w {
                            out.set(n, c, i + y * d, j + x * d, f.at(n, c, y, x));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn dense_spec(spec: &ConvSpec) -> Result<ConvSpec> {
    spec.validate()?;
    if spec.stride != 1 {
        return Err(Error::Unsupported(format!("comb path needs stride 1, got {}", spec.stride)));
    }
    if spec.padding != Padding::Same {
        return Err(Error::Unsupported("comb path needs Same padding".into()));
    }
    if spec.kernel.0 % 2 == 0 || spec.kernel.1 % 2 == 0 {
        return Err(Error::Unsupported(format!("comb path needs odd kernels, got {:?}", spec.kernel)));
    }
    Ok(ConvSpec { dilation: 1, ..*spec })
}

fn run_fields(
    x: &Tensor,
    spec: &ConvSpec,
    mut dense: impl FnMut(&Tensor, &ConvSpec) -> Result<Tensor>,
) -> Result<Tensor> {
    let inner = dense_spec(spec)?;
    let d = spec.dilation;
    let mut outs = Vec::with_capacity(d * d);
    for f in split_fields(x, d)? {
        let fd = f.dims();
        if fd.h == 0 || fd.w == 0 {
            outs.push(Tensor::zeros(Dims::nchw(fd.n, spec.out_ch, fd.h, fd.w), f.layout()));
        } else {
            outs.push(dense(&f, &inner)?);
        }
    }
    merge_fields(&outs, d)
}

/// Dilated convolution computed field-wise with the reference dense kernel.
/// Bit-identical to [`crate::conv::conv2d_ref`] for `d == 1`.
pub fn comb_dilated_conv(x: &Tensor, w: &ConvWeights, bias: Option<&[f32]>, spec: &ConvSpec) -> Result<Tensor> {
    comb_dilated_conv_counted(x, w, bias, spec, &mut OpCounter::default())
}

pub fn comb_dilated_conv_counted(
    x: &Tensor,
    w: &ConvWeights,
    bias: Option<&[f32]>,
    spec: &ConvSpec,
    counter: &mut OpCounter,
) -> Result<Tensor> {
    x.expect_layout(Layout::ChannelPlanar)?;
    check_weights(w, spec)?;
    run_fields(x, spec, |f, s| conv2d_ref_counted(f, w, bias, s, counter))
}

/// Field-wise dilated convolution on interleaved tensors with packed kernels.
pub fn comb_dilated_conv_packed(
    x: &Tensor,
    w: &PackedWeights,
    bias: Option<&[f32]>,
    spec: &ConvSpec,
    counter: &mut OpCounter,
    parallel: bool,
) -> Result<Tensor> {
    x.expect_layout(Layout::ChannelInterleaved)?;
    run_fields(x, spec, |f, s| conv2d_packed_counted(f, w, bias, s, counter, parallel))
}

/// Expands a kernel to its dilated footprint, zeros in the holes.
pub fn zero_stuff_kernel(w: &ConvWeights, d: usize) -> ConvWeights {
    let (eh, ew) = (d * (w.kh - 1) + 1, d * (w.kw - 1) + 1);
    let mut out = ConvWeights::zeros(w.out_ch, w.in_per_group, eh, ew);
    for o in 0..w.out_ch {
        for i in 0..w.in_per_group {
            for ky in 0..w.kh {
                for kx in 0..w.kw {
                    out.data[((o * w.in_per_group + i) * eh + ky * d) * ew + kx * d] = w.at(o, i, ky, kx);
                }
            }
        }
    }
    out
}

/// Naive baseline: dense convolution with the zero-stuffed kernel.
pub fn zero_stuffed_dilated_conv_counted(
    x: &Tensor,
    w: &ConvWeights,
    bias: Option<&[f32]>,
    spec: &ConvSpec,
    counter: &mut OpCounter,
) -> Result<Tensor> {
    check_weights(w, spec)?;
    let stuffed = zero_stuff_kernel(w, spec.dilation);
    let dense = ConvSpec {
        kernel: (stuffed.kh, stuffed.kw),
        dilation: 1,
        ..*spec
    };
    conv2d_ref_counted(x, &stuffed, bias, &dense, counter)
}
