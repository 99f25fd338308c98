use rayon::prelude::*;

use crate::conv::reference::check_bias;
use crate::conv::spec::{ConvSpec, OpCounter};
use crate::error::{shape_err, Result};
use crate::tensor::{Dims, Layout, PackedWeights, Tensor};

fn check_packed(w: &PackedWeights, spec: &ConvSpec) -> Result<()> {
    spec.validate()?;
    if w.groups != spec.groups
        || w.out_ch != spec.out_ch
        || w.in_per_group != spec.in_per_group()
        || (w.kh, w.kw) != spec.kernel
    {
        return shape_err(format!(
            "packed weights ({}x{}x{}x{}, groups {}) inconsistent with spec {}->{} k{:?} groups {}",
            w.out_ch, w.in_per_group, w.kh, w.kw, w.groups, spec.in_ch, spec.out_ch, spec.kernel, spec.groups
        ));
    }
    Ok(())
}

/// Zero-pads an interleaved tensor; returns `(buffer, hp, wp)`.
pub(crate) fn pad_interleaved(x: &Tensor, ph: usize, pw: usize) -> (Vec<f32>, usize, usize) {
    let d = x.dims();
    let (hp, wp) = (d.h + 2 * ph, d.w + 2 * pw);
    let row = d.w * d.c;
    let mut buf = vec![0.0f32; d.n * hp * wp * d.c];
    let src = x.data();
    for n in 0..d.n {
        for y in 0..d.h {
            let s = (n * d.h + y) * row;
            let t = ((n * hp + y + ph) * wp + pw) * d.c;
            buf[t..t + row].copy_from_slice(&src[s..s + row]);
        }
    }
    (buf, hp, wp)
}

struct Plan<'a> {
    buf: &'a [f32],
    w: &'a PackedWeights,
    bias: Option<&'a [f32]>,
    spec: &'a ConvSpec,
    in_c: usize,
    hp: usize,
    wp: usize,
    oh: usize,
    ow: usize,
}

impl Plan<'_> {
    /// Fills one output row `(n, oy)` of the interleaved output.
    fn row(&self, n: usize, oy: usize, out: &mut [f32], acc: &mut [f32]) -> (u64, u64) {
        let spec = self.spec;
        let (kh, kw) = spec.kernel;
        let (s, dil) = (spec.stride, spec.dilation);
        let ipg = spec.in_per_group();
        let opg = spec.out_per_group();
        let taps = kh * kw * ipg;
        let wd = &self.w.data;
        let mut macs = 0u64;
        let mut other = 0u64;
        for ox in 0..self.ow {
            let out_px = &mut out[ox * spec.out_ch..(ox + 1) * spec.out_ch];
            let mut wi = 0usize;
            for g in 0..spec.groups {
                for (b0, bw) in self.w.blocks() {
                    let acc = &mut acc[..bw];
                    acc.fill(0.0);
                    let wblock = &wd[wi..wi + taps * bw];
                    let mut k = 0usize;
                    for ky in 0..kh {
                        let iy = oy * s + ky * dil;
                        for kx in 0..kw {
                            let ix = ox * s + kx * dil;
                            let pix = ((n * self.hp + iy) * self.wp + ix) * self.in_c + g * ipg;
                            let xs = &self.buf[pix..pix + ipg];
                            for &xv in xs {
                                let ws = &wblock[k..k + bw];
                                for (a, &wv) in acc.iter_mut().zip(ws) {
                                    *a += xv * wv;
                                }
                                k += bw;
                            }
                            macs += (ipg * bw) as u64;
                        }
                    }
                    wi += taps * bw;
                    let dst = &mut out_px[g * opg + b0..g * opg + b0 + bw];
                    match self.bias {
                        Some(b) => {
                            let bs = &b[g * opg + b0..g * opg + b0 + bw];
                            for ((o, a), bv) in dst.iter_mut().zip(acc.iter()).zip(bs) {
                                *o = a + bv;
                            }
                            other += bw as u64;
                        }
                        None => dst.copy_from_slice(acc),
                    }
                }
            }
        }
        (macs, other)
    }
}

/// Grouped convolution over channel-interleaved tensors with packed kernels.
///
/// Every tap reduces to a dot product over the group's contiguous input
/// channels, broadcast into `lane_width` output accumulators; outputs are
/// written interleaved, ready for the next layer.
pub fn conv2d_packed(x: &Tensor, w: &PackedWeights, bias: Option<&[f32]>, spec: &ConvSpec) -> Result<Tensor> {
    conv2d_packed_counted(x, w, bias, spec, &mut OpCounter::default(), false)
}

/// As [`conv2d_packed`], optionally splitting output rows across the rayon
/// pool. Per-pixel accumulation order is the same either way.
pub fn conv2d_packed_counted(
    x: &Tensor,
    w: &PackedWeights,
    bias: Option<&[f32]>,
    spec: &ConvSpec,
    counter: &mut OpCounter,
    parallel: bool,
) -> Result<Tensor> {
    x.expect_layout(Layout::ChannelInterleaved)?;
    check_packed(w, spec)?;
    let bias = check_bias(bias, spec)?;
    let d = x.dims();
    if d.c != spec.in_ch {
        return shape_err(format!("input has {} channels, spec expects {}", d.c, spec.in_ch));
    }
    let (oh, ow) = spec.output_hw(d.h, d.w)?;
    let (ph, pw) = spec.pad();
    let (buf, hp, wp) = pad_interleaved(x, ph, pw);
    let plan = Plan {
        buf: &buf,
        w,
        bias,
        spec,
        in_c: d.c,
        hp,
        wp,
        oh,
        ow,
    };
    let out_dims = Dims::nchw(d.n, spec.out_ch, oh, ow);
    let mut out = vec![0.0f32; out_dims.len()];
    let row_len = ow * spec.out_ch;
    let lanes = w.lane_width;

    let (macs, other) = if parallel {
        out.par_chunks_mut(row_len)
            .enumerate()
            .map_init(
                || vec![0.0f32; lanes],
                |acc, (r, chunk)| plan.row(r / plan.oh, r % plan.oh, chunk, acc),
            )
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
    } else {
        let mut acc = vec![0.0f32; lanes];
        out.chunks_mut(row_len)
            .enumerate()
            .map(|(r, chunk)| plan.row(r / plan.oh, r % plan.oh, chunk, &mut acc))
            .fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
    };
    counter.macs += macs;
    counter.other += other;
    Tensor::from_vec(out_dims, Layout::ChannelInterleaved, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv::reference::conv2d_ref;
    use crate::conv::spec::mac_count;
    use crate::tensor::{pack_kernels, to_interleaved, to_planar, ConvWeights};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn case(rng: &mut ChaCha8Rng, spec: ConvSpec, h: usize, w: usize, lanes: usize) -> f32 {
        let d = Dims::chw(spec.in_ch, h, w);
        let x = Tensor::from_vec(d, Layout::ChannelPlanar, (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let wt = ConvWeights::new(
            spec.out_ch,
            spec.in_per_group(),
            spec.kernel.0,
            spec.kernel.1,
            (0..spec.weight_len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let b: Vec<f32> = (0..spec.out_ch).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = spec.has_bias.then_some(b.as_slice());
        let r = conv2d_ref(&x, &wt, b, &spec).unwrap();
        let p = pack_kernels(&wt, spec.groups, lanes).unwrap();
        let o = conv2d_packed(&to_interleaved(&x).unwrap(), &p, b, &spec).unwrap();
        assert_eq!(o.layout(), Layout::ChannelInterleaved);
        to_planar(&o).unwrap().max_abs_diff(&r).unwrap()
    }

    #[test]
    fn matches_reference_across_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (cin, cout, g) in [(8, 8, 1), (16, 32, 4), (32, 64, 8), (16, 16, 16), (12, 6, 3)] {
            for stride in [1, 2] {
                for dil in [1, 2, 3] {
                    let spec = ConvSpec::new(cin, cout, 3).groups(g).stride(stride).dilation(dil);
                    for lanes in [1, 4, 5] {
                        assert!(case(&mut rng, spec, 9, 10, lanes) <= 1e-5);
                    }
                }
            }
        }
        let spec = ConvSpec::new(8, 8, 1).groups(2).bias(false);
        assert!(case(&mut rng, spec, 5, 5, 4) <= 1e-5);
    }

    #[test]
    fn channelwise_is_per_channel_filtering() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = 16;
        let spec = ConvSpec::new(c, c, 3).groups(c).bias(false);
        let d = Dims::chw(c, 8, 8);
        let x = Tensor::from_vec(d, Layout::ChannelPlanar, (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let wt = ConvWeights::new(c, 1, 3, 3, (0..c * 9).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = conv2d_packed(&to_interleaved(&x).unwrap(), &pack_kernels(&wt, c, 4).unwrap(), None, &spec).unwrap();
        for ch in 0..c {
            let single = Tensor::from_vec(Dims::chw(1, 8, 8), Layout::ChannelPlanar, x.channel(0, ch)).unwrap();
            let k = ConvWeights::new(1, 1, 3, 3, wt.data[ch * 9..ch * 9 + 9].to_vec()).unwrap();
            let r = conv2d_ref(&single, &k, None, &ConvSpec::new(1, 1, 3).bias(false)).unwrap();
            for (a, b) in y.channel(0, ch).iter().zip(r.data()) {
                assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn zero_input_gives_bias() {
        let spec = ConvSpec::new(8, 8, 3).groups(2);
        let x = Tensor::zeros(Dims::chw(8, 4, 5), Layout::ChannelInterleaved);
        let wt = ConvWeights::new(8, 4, 3, 3, vec![0.3; 8 * 36]).unwrap();
        let b: Vec<f32> = (0..8).map(|i| i as f32 - 2.5).collect();
        let y = conv2d_packed(&x, &pack_kernels(&wt, 2, 4).unwrap(), Some(&b), &spec).unwrap();
        for px in y.data().chunks(8) {
            assert_eq!(px, b.as_slice());
        }
    }

    #[test]
    fn parallel_is_bit_identical_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let spec = ConvSpec::new(32, 32, 3).groups(8).dilation(2);
        let d = Dims::nchw(2, 32, 12, 12);
        let x = Tensor::from_vec(d, Layout::ChannelInterleaved, (0..d.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let wt = ConvWeights::new(32, 4, 3, 3, (0..32 * 36).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let p = pack_kernels(&wt, 8, 4).unwrap();
        let b = vec![0.1; 32];
        let mut c1 = OpCounter::default();
        let mut c2 = OpCounter::default();
        let a = conv2d_packed_counted(&x, &p, Some(&b), &spec, &mut c1, false).unwrap();
        let z = conv2d_packed_counted(&x, &p, Some(&b), &spec, &mut c2, true).unwrap();
        assert_eq!(a, z);
        assert_eq!(c1, c2);
        assert_eq!(c1.macs, 2 * mac_count(&spec, 12, 12).unwrap());
    }

    #[test]
    fn rejects_planar_and_inconsistent_packing() {
        let spec = ConvSpec::new(8, 8, 3).groups(2).bias(false);
        let p = pack_kernels(&ConvWeights::zeros(8, 4, 3, 3), 2, 4).unwrap();
        let planar = Tensor::zeros(Dims::chw(8, 4, 4), Layout::ChannelPlanar);
        assert!(conv2d_packed(&planar, &p, None, &spec).is_err());
        let x = Tensor::zeros(Dims::chw(8, 4, 4), Layout::ChannelInterleaved);
        let other = pack_kernels(&ConvWeights::zeros(8, 2, 3, 3), 4, 4).unwrap();
        assert!(conv2d_packed(&x, &other, None, &spec).is_err());
    }
}
