use crate::conv::spec::{ConvSpec, OpCounter};
use crate::error::{shape_err, Result};
use crate::tensor::{ConvWeights, Dims, Layout, Tensor};

pub(crate) fn check_weights(w: &ConvWeights, spec: &ConvSpec) -> Result<()> {
    spec.validate()?;
    if w.shape() != [spec.out_ch, spec.in_per_group(), spec.kernel.0, spec.kernel.1] {
        return shape_err(format!(
            "weights {:?} do not match spec {}->{} k{:?} groups {}",
            w.shape(),
            spec.in_ch,
            spec.out_ch,
            spec.kernel,
            spec.groups
        ));
    }
    Ok(())
}

pub(crate) fn check_bias<'a>(bias: Option<&'a [f32]>, spec: &ConvSpec) -> Result<Option<&'a [f32]>> {
    match (spec.has_bias, bias) {
        (true, Some(b)) if b.len() == spec.out_ch => Ok(Some(b)),
        (true, Some(b)) => shape_err(format!("bias has {} values for {} channels", b.len(), spec.out_ch)),
        (true, None) => shape_err("spec has_bias but no bias given"),
        (false, None) => Ok(None),
        (false, Some(_)) => shape_err("bias given for a spec without bias"),
    }
}

/// Zero-pads every channel plane of a planar tensor; returns `(buffer, hp, wp)`.
pub(crate) fn pad_planar(x: &Tensor, ph: usize, pw: usize) -> (Vec<f32>, usize, usize) {
    let d = x.dims();
    let (hp, wp) = (d.h + 2 * ph, d.w + 2 * pw);
    let mut buf = vec![0.0f32; d.n * d.c * hp * wp];
    let src = x.data();
    for plane in 0..d.n * d.c {
        for y in 0..d.h {
            let s = (plane * d.h + y) * d.w;
            let t = (plane * hp + y + ph) * wp + pw;
            buf[t..t + d.w].copy_from_slice(&src[s..s + d.w]);
        }
    }
    (buf, hp, wp)
}

/// Direct grouped/dilated/strided cross-correlation on planar tensors.
///
/// Each output value is accumulated from zero in `(input channel, ky, kx)`
/// order, then the bias is added.
pub fn conv2d_ref(x: &Tensor, w: &ConvWeights, bias: Option<&[f32]>, spec: &ConvSpec) -> Result<Tensor> {
    conv2d_ref_counted(x, w, bias, spec, &mut OpCounter::default())
}

pub fn conv2d_ref_counted(
    x: &Tensor,
    w: &ConvWeights,
    bias: Option<&[f32]>,
    spec: &ConvSpec,
    counter: &mut OpCounter,
) -> Result<Tensor> {
    x.expect_layout(Layout::ChannelPlanar)?;
    check_weights(w, spec)?;
    let bias = check_bias(bias, spec)?;
    let d = x.dims();
    if d.c != spec.in_ch {
        return shape_err(format!("input has {} channels, spec expects {}", d.c, spec.in_ch));
    }
    let (oh, ow) = spec.output_hw(d.h, d.w)?;
    let (ph, pw) = spec.pad();
    let (buf, hp, wp) = pad_planar(x, ph, pw);
    let (kh, kw) = spec.kernel;
    let (s, dil) = (spec.stride, spec.dilation);
    let (ipg, opg) = (spec.in_per_group(), spec.out_per_group());
    let out_dims = Dims::nchw(d.n, spec.out_ch, oh, ow);
    let mut out = vec![0.0f32; out_dims.len()];
    let mut macs = 0u64;
    let mut other = 0u64;

    for n in 0..d.n {
        for o in 0..spec.out_ch {
            let g = o / opg;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0f32;
                    for ci in 0..ipg {
                        let plane = (n * d.c + g * ipg + ci) * hp * wp;
                        for ky in 0..kh {
                            let row = plane + (oy * s + ky * dil) * wp + ox * s;
                            for kx in 0..kw {
                                acc += buf[row + kx * dil] * w.at(o, ci, ky, kx);
                            }
                            macs += kw as u64;
                        }
                    }
                    if let Some(b) = bias {
                        acc += b[o];
                        other += 1;
                    }
                    out[((n * spec.out_ch + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    counter.macs += macs;
    counter.other += other;
    Tensor::from_vec(out_dims, Layout::ChannelPlanar, out)
}
