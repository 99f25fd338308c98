use crate::error::{Error, Result};
use crate::postprocess::pgm::Gray16;
use crate::tensor::{Dims, Layout, Tensor};

const FULL_SCALE: f32 = 65535.0;

/// A real-valued single-channel image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

impl From<&Gray16> for Image {
    fn from(g: &Gray16) -> Self {
        Self {
            width: g.width,
            height: g.height,
            data: g.data.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Four raw phase captures of one time-of-flight frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFrame {
    pub phases: [Gray16; 4],
    /// Usable depth range of the sensor, millimetres.
    pub z_range: [f32; 2],
}

impl PhaseFrame {
    pub fn new(phases: [Gray16; 4], z_range: [f32; 2]) -> Result<Self> {
        let f = Self { phases, z_range };
        f.check()?;
        Ok(f)
    }

    fn check(&self) -> Result<()> {
        let (w, h) = (self.phases[0].width, self.phases[0].height);
        if let Some(p) = self.phases.iter().find(|p| (p.width, p.height) != (w, h)) {
            return Err(Error::Input(format!(
                "phase images differ in size: {w}x{h} and {}x{}",
                p.width, p.height
            )));
        }
        Ok(())
    }
}

/// Pixelwise weighted sum of the four phases, clamped at zero.
pub fn amplitude_from_phases(f: &PhaseFrame, coeffs: [f32; 4]) -> Result<Image> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Config(format!("amplitude coefficients {coeffs:?} are not finite")));
    }
    f.check()?;
    let [a, b, c, d] = &f.phases;
    let data = (0..a.data.len())
        .map(|i| {
            let s = coeffs[0] * a.data[i] as f32
                + coeffs[1] * b.data[i] as f32
                + coeffs[2] * c.data[i] as f32
                + coeffs[3] * d.data[i] as f32;
            s.max(0.0)
        })
        .collect();
    Ok(Image {
        width: a.width,
        height: a.height,
        data,
    })
}

/// Maps network-input pixels back to the source image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTransform {
    pub crop_x: usize,
    pub crop_y: usize,
    pub crop_w: usize,
    pub crop_h: usize,
    pub out_w: usize,
    pub out_h: usize,
}

impl FrameTransform {
    /// Largest centred crop with the output's aspect ratio.
    pub fn center_crop(src_w: usize, src_h: usize, out_w: usize, out_h: usize) -> Result<Self> {
        if src_w == 0 || src_h == 0 {
            return Err(Error::Input("empty image".into()));
        }
        if out_w == 0 || out_h == 0 {
            return Err(Error::Config("zero network resolution".into()));
        }
        let (crop_w, crop_h) = if src_w * out_h > src_h * out_w {
            ((src_h * out_w / out_h).max(1), src_h)
        } else {
            (src_w, (src_w * out_h / out_w).max(1))
        };
        Ok(Self {
            crop_x: (src_w - crop_w) / 2,
            crop_y: (src_h - crop_h) / 2,
            crop_w,
            crop_h,
            out_w,
            out_h,
        })
    }

    /// Source pixel sampled for output pixel `(x, y)` (nearest neighbour).
    pub fn source_pixel(&self, x: usize, y: usize) -> (usize, usize) {
        (
            self.crop_x + (x * self.crop_w + self.crop_w / 2) / self.out_w,
            self.crop_y + (y * self.crop_h + self.crop_h / 2) / self.out_h,
        )
    }

    /// Continuous network-input coordinates to source coordinates.
    pub fn to_source(&self, u: f32, v: f32) -> (f32, f32) {
        (
            self.crop_x as f32 + u * self.crop_w as f32 / self.out_w as f32,
            self.crop_y as f32 + v * self.crop_h as f32 / self.out_h as f32,
        )
    }
}

/// Centre-crops and resizes `img` to `(h, w)` and scales 16-bit full range
/// to `[0, 1]`. Values above full range saturate.
pub fn normalize_input(img: &Image, hw: (usize, usize)) -> Result<(Tensor, FrameTransform)> {
    if img.data.len() != img.width * img.height {
        return Err(Error::Input("image buffer does not match its size".into()));
    }
    let t = FrameTransform::center_crop(img.width, img.height, hw.1, hw.0)?;
    let x = Tensor::from_fn(Dims::chw(1, hw.0, hw.1), Layout::ChannelPlanar, |_, _, y, x| {
        let (sx, sy) = t.source_pixel(x, y);
        img.at(sx, sy).min(FULL_SCALE) / FULL_SCALE
    });
    Ok((x, t))
}

/// Inverse of the intensity scaling of [`normalize_input`].
pub fn denormalize(x: &Tensor) -> Result<Image> {
    let d = x.dims();
    if d.n != 1 || d.c != 1 {
        return Err(Error::Shape(format!("expected a single-channel image, got {d}")));
    }
    Ok(Image {
        width: d.w,
        height: d.h,
        data: x.data().iter().map(|v| v * FULL_SCALE).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gray(w: usize, h: usize, f: impl Fn(usize) -> u16) -> Gray16 {
        Gray16::new(w, h, (0..w * h).map(f).collect()).unwrap()
    }

    #[test]
    fn constant_phases() {
        let p = Gray16::filled(5, 3, 100);
        let f = PhaseFrame::new([p.clone(), p.clone(), p.clone(), p], [100.0, 1000.0]).unwrap();
        let a = amplitude_from_phases(&f, [0.25; 4]).unwrap();
        assert!(a.data.iter().all(|&v| v == 100.0));
    }

    #[test]
    fn selects_single_phase() {
        let ps = [0, 1, 2, 3].map(|k| gray(4, 4, move |i| (i * 7 + k * 1000) as u16));
        let f = PhaseFrame::new(ps.clone(), [0.0, 1.0]).unwrap();
        let a = amplitude_from_phases(&f, [1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(a, Image::from(&ps[0]));
    }

    #[test]
    fn clamps_negative_and_checks_inputs() {
        let p = Gray16::filled(2, 2, 10);
        let f = PhaseFrame::new([p.clone(), p.clone(), p.clone(), p.clone()], [0.0, 1.0]).unwrap();
        let a = amplitude_from_phases(&f, [-1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(a.data.iter().all(|&v| v == 0.0));
        assert!(amplitude_from_phases(&f, [f32::NAN, 0.0, 0.0, 0.0]).is_err());
        let q = Gray16::filled(3, 2, 10);
        assert!(PhaseFrame::new([p.clone(), p.clone(), q, p], [0.0, 1.0]).is_err());
    }

    #[test]
    fn random_phases_match_pixel_loop() {
        let ps = [11u64, 12, 13, 14].map(|s| gray(7, 5, move |i| ((i as u64 * 2654435761 ^ s * 97) % 65536) as u16));
        let coeffs = [0.3, -0.2, 0.7, 0.15];
        let f = PhaseFrame::new(ps.clone(), [0.0, 1.0]).unwrap();
        let a = amplitude_from_phases(&f, coeffs).unwrap();
        for y in 0..5 {
            for x in 0..7 {
                let mut s = 0.0f64;
                for k in 0..4 {
                    s += coeffs[k] as f64 * ps[k].at(x, y) as f64;
                }
                let expect = s.max(0.0);
                assert!((a.at(x, y) as f64 - expect).abs() <= 1e-6 * expect.max(1.0) * 10.0);
            }
        }
    }

    #[test]
    fn normalize_constants() {
        let img = Image::from(&Gray16::filled(8, 8, 65535));
        let (x, _) = normalize_input(&img, (4, 4)).unwrap();
        assert!(x.data().iter().all(|&v| v == 1.0));
        let img = Image::from(&Gray16::filled(8, 6, 0));
        let (x, _) = normalize_input(&img, (4, 4)).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.0));
        let empty = Image {
            width: 0,
            height: 0,
            data: vec![],
        };
        assert!(normalize_input(&empty, (4, 4)).is_err());
    }

    #[test]
    fn center_crop_geometry() {
        let t = FrameTransform::center_crop(160, 120, 96, 96).unwrap();
        assert_eq!((t.crop_x, t.crop_y, t.crop_w, t.crop_h), (20, 0, 120, 120));
        let t = FrameTransform::center_crop(100, 200, 50, 50).unwrap();
        assert_eq!((t.crop_x, t.crop_y, t.crop_w, t.crop_h), (0, 50, 100, 100));
        // identity when sizes agree
        let t = FrameTransform::center_crop(6, 4, 6, 4).unwrap();
        for y in 0..4 {
            for x in 0..6 {
                assert_eq!(t.source_pixel(x, y), (x, y));
            }
        }
        assert_eq!(t.to_source(2.5, 1.5), (2.5, 1.5));
    }

    #[test]
    fn downscale_picks_block_centres() {
        let img = Image::from(&gray(4, 4, |i| i as u16));
        let (x, t) = normalize_input(&img, (2, 2)).unwrap();
        assert_eq!(t.source_pixel(0, 0), (1, 1));
        assert_eq!(x.at(0, 0, 1, 1) * 65535.0, 15.0);
    }

    proptest! {
        #[test]
        fn normalize_denormalize_roundtrip(w in 1usize..10, h in 1usize..10, seed in any::<u32>()) {
            let g = gray(w, h, |i| ((i as u64 * 40503 + seed as u64) % 65536) as u16);
            let img = Image::from(&g);
            let (x, _) = normalize_input(&img, (h, w)).unwrap();
            let back = denormalize(&x).unwrap();
            for (a, b) in back.data.iter().zip(&img.data) {
                prop_assert!((a - b).abs() <= 0.5);
            }
            let (again, _) = normalize_input(&back, (h, w)).unwrap();
            prop_assert!(again.max_abs_diff(&x).unwrap() <= 0.5 / 65535.0);
        }
    }
}
