use crate::conv::spec::OpCounter;
use crate::error::{shape_err, Result};
use crate::tensor::{Dims, Tensor};

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    relu_inplace(&mut out);
    out
}

pub fn relu_inplace(x: &mut Tensor) {
    x.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Nearest-neighbour 2x spatial upsampling, layout preserved.
pub fn upsample_nearest_2x(x: &Tensor) -> Tensor {
    let d = x.dims();
    let od = Dims::nchw(d.n, d.c, d.h * 2, d.w * 2);
    Tensor::from_fn(od, x.layout(), |n, c, y, xx| x.at(n, c, y / 2, xx / 2))
}

/// Elementwise sum, e.g. a residual connection.
pub fn add(a: &Tensor, b: &Tensor, counter: &mut OpCounter) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return shape_err(format!("cannot add {} and {}", a.dims(), b.dims()));
    }
    let b = b.to_layout(a.layout());
    let mut out = a.clone();
    out.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
    counter.other += a.dims().len() as u64;
    Ok(out)
}

/// Concatenates along channels; output takes the first input's layout.
pub fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let Some(first) = parts.first() else {
        return shape_err("nothing to concatenate");
    };
    let d0 = first.dims();
    if parts.iter().any(|p| {
        let d = p.dims();
        (d.n, d.h, d.w) != (d0.n, d0.h, d0.w)
    }) {
        return shape_err("concatenated tensors differ in batch or spatial size");
    }
    let c: usize = parts.iter().map(|p| p.dims().c).sum();
    let mut offsets = Vec::with_capacity(c);
    for (i, p) in parts.iter().enumerate() {
        offsets.extend((0..p.dims().c).map(|cc| (i, cc)));
    }
    let od = Dims::nchw(d0.n, c, d0.h, d0.w);
    Ok(Tensor::from_fn(od, first.layout(), |n, ch, y, x| {
        let (i, cc) = offsets[ch];
        parts[i].at(n, cc, y, x)
    }))
}

/// Mean over each channel plane; returns `n x c` values.
pub fn global_avg_pool(x: &Tensor, counter: &mut OpCounter) -> Vec<f32> {
    let d = x.dims();
    let inv = 1.0 / d.plane() as f32;
    let mut out = Vec::with_capacity(d.n * d.c);
    for n in 0..d.n {
        for c in 0..d.c {
            let mut acc = 0.0f32;
            for y in 0..d.h {
                for xx in 0..d.w {
                    acc += x.at(n, c, y, xx);
                }
            }
            out.push(acc * inv);
        }
    }
    counter.other += (d.n * d.c * (d.plane() + 1)) as u64;
    out
}

/// Dense layer, `weights` row-major `out x in`.
pub fn linear(x: &[f32], weights: &[f32], bias: &[f32], counter: &mut OpCounter) -> Result<Vec<f32>> {
    let out_n = bias.len();
    if out_n == 0 || weights.len() != out_n * x.len() {
        return shape_err(format!(
            "linear: {} weights for {} inputs and {} outputs",
            weights.len(),
            x.len(),
            out_n
        ));
    }
    let out = weights
        .chunks(x.len())
        .zip(bias)
        .map(|(row, b)| row.iter().zip(x).fold(0.0f32, |acc, (w, v)| acc + w * v) + b)
        .collect();
    counter.macs += (out_n * x.len()) as u64;
    counter.other += out_n as u64;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Layout;

    #[test]
    fn relu_values() {
        let t = Tensor::from_vec(Dims::chw(1, 1, 3), Layout::ChannelPlanar, vec![-1., 0., 2.]).unwrap();
        assert_eq!(relu(&t).data(), &[0., 0., 2.]);
    }

    #[test]
    fn upsample_single_value() {
        let t = Tensor::full(Dims::chw(1, 1, 1), Layout::ChannelPlanar, 3.5);
        let u = upsample_nearest_2x(&t);
        assert_eq!(u.dims(), Dims::chw(1, 2, 2));
        assert_eq!(u.data(), &[3.5; 4]);
    }

    #[test]
    fn upsample_shapes_and_layouts() {
        for (c, h, w) in [(3, 2, 5), (1, 4, 4), (7, 1, 3)] {
            let d = Dims::chw(c, h, w);
            let p = Tensor::from_vec(d, Layout::ChannelPlanar, (0..d.len()).map(|v| v as f32).collect()).unwrap();
            let up = upsample_nearest_2x(&p);
            assert_eq!(up.dims().c, c);
            assert_eq!(up.dims().plane(), 4 * d.plane());
            let ui = upsample_nearest_2x(&p.to_layout(Layout::ChannelInterleaved));
            assert_eq!(ui.to_layout(Layout::ChannelPlanar), up);
        }
    }

    #[test]
    fn concat_and_add() {
        let a = Tensor::full(Dims::chw(1, 2, 2), Layout::ChannelInterleaved, 1.0);
        let b = Tensor::full(Dims::chw(2, 2, 2), Layout::ChannelPlanar, 2.0);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.dims(), Dims::chw(3, 2, 2));
        assert_eq!(c.data()[..3], [1., 2., 2.]);
        let mut k = OpCounter::default();
        assert!(add(&a, &b, &mut k).is_err());
        let s = add(&b, &b, &mut k).unwrap();
        assert_eq!(s.data(), &[4.0; 8]);
        assert_eq!(k.other, 8);
    }

    #[test]
    fn pool_and_linear() {
        let t = Tensor::from_vec(Dims::chw(2, 1, 2), Layout::ChannelPlanar, vec![1., 3., -2., 4.]).unwrap();
        let mut k = OpCounter::default();
        let p = global_avg_pool(&t, &mut k);
        assert_eq!(p, vec![2.0, 1.0]);
        assert_eq!(k.other, 6);
        let y = linear(&p, &[1., 1., 2., -1.], &[0.5, 0.0], &mut k).unwrap();
        assert_eq!(y, vec![3.5, 3.0]);
        assert_eq!(k.macs, 4);
        assert!(linear(&p, &[1.0; 3], &[0.0; 2], &mut k).is_err());
    }
}
