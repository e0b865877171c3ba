use rand::{Rng, RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::rng::{mix, stream, SplitMix64, Stream};
use crate::tensor::Tensor4;

/// Which augmentations to draw and from what ranges. `None` disables an op.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentPolicy {
    pub hflip: bool,
    pub vflip: bool,
    pub brightness: Option<(f32, f32)>,
    pub contrast: Option<(f32, f32)>,
    /// Rotation angle range in degrees.
    pub rotation: Option<(f32, f32)>,
    pub seed: u64,
}

impl AugmentPolicy {
    pub fn none(seed: u64) -> Self {
        Self {
            hflip: false,
            vflip: false,
            brightness: None,
            contrast: None,
            rotation: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, range) in [
            ("brightness", self.brightness),
            ("contrast", self.contrast),
            ("rotation", self.rotation),
        ] {
            if let Some((lo, hi)) = range {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::Config(format!("{name} range [{lo}, {hi}] is empty")));
                }
            }
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        !self.hflip && !self.vflip && self.brightness.is_none() && self.contrast.is_none() && self.rotation.is_none()
    }

    /// Generator for one sample in one epoch, independent of processing order.
    pub fn sample_rng(&self, epoch: usize, index: usize) -> SplitMix64 {
        let base = stream(self.seed, Stream::Augment).next_u64();
        SplitMix64::seed_from_u64(mix(base ^ mix(epoch as u64) ^ mix(mix(index as u64))))
    }
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            hflip: true,
            vflip: true,
            brightness: Some((-0.2, 0.2)),
            contrast: Some((0.8, 1.2)),
            rotation: Some((1.0, 360.0)),
            seed: 0,
        }
    }
}

pub fn hflip(t: &Tensor4) -> Tensor4 {
    let w = t.dims().w;
    Tensor4::from_fn(t.dims(), |n, c, y, x| t.get(n, c, y, w - 1 - x))
}

pub fn vflip(t: &Tensor4) -> Tensor4 {
    let h = t.dims().h;
    Tensor4::from_fn(t.dims(), |n, c, y, x| t.get(n, c, h - 1 - y, x))
}

pub fn hflip_mask(m: &Mask) -> Mask {
    Mask::from_fn(m.height(), m.width(), |y, x| m.get(y, m.width() - 1 - x))
}

pub fn vflip_mask(m: &Mask) -> Mask {
    Mask::from_fn(m.height(), m.width(), |y, x| m.get(m.height() - 1 - y, x))
}

/// Inverse map from an output pixel to its source coordinate for a rotation
/// by `degrees` counter-clockwise about the image centre.
fn rotation_source(h: usize, w: usize, degrees: f32) -> impl Fn(usize, usize) -> (f64, f64) {
    let theta = (degrees as f64).to_radians();
    let (s, c) = theta.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    move |y, x| {
        let dy = y as f64 - cy;
        let dx = x as f64 - cx;
        (cy + c * dy - s * dx, cx + s * dy + c * dx)
    }
}

/// Bilinear rotation; samples outside the source read as zero.
pub fn rotate(t: &Tensor4, degrees: f32) -> Tensor4 {
    let d = t.dims();
    let src = rotation_source(d.h, d.w, degrees);
    let at = |n, c, y: i64, x: i64| {
        if y < 0 || x < 0 || y >= d.h as i64 || x >= d.w as i64 {
            0.0
        } else {
            t.get(n, c, y as usize, x as usize) as f64
        }
    };
    Tensor4::from_fn(d, |n, c, y, x| {
        let (sy, sx) = src(y, x);
        let (y0, x0) = (sy.floor(), sx.floor());
        let (fy, fx) = (sy - y0, sx - x0);
        let (y0, x0) = (y0 as i64, x0 as i64);
        let v = at(n, c, y0, x0) * (1.0 - fy) * (1.0 - fx)
            + at(n, c, y0, x0 + 1) * (1.0 - fy) * fx
            + at(n, c, y0 + 1, x0) * fy * (1.0 - fx)
            + at(n, c, y0 + 1, x0 + 1) * fy * fx;
        v as f32
    })
}

/// Nearest-neighbour rotation; outside pixels become background.
pub fn rotate_mask(m: &Mask, degrees: f32) -> Mask {
    let src = rotation_source(m.height(), m.width(), degrees);
    Mask::from_fn(m.height(), m.width(), |y, x| {
        let (sy, sx) = src(y, x);
        let (ry, rx) = (sy.round(), sx.round());
        ry >= 0.0 && rx >= 0.0 && (ry as usize) < m.height() && (rx as usize) < m.width() && m.get(ry as usize, rx as usize)
    })
}

/// Adds `delta` to every pixel.
pub fn adjust_brightness(t: &Tensor4, delta: f32) -> Tensor4 {
    let mut out = t.clone();
    out.data_mut().iter_mut().for_each(|v| *v += delta);
    out
}

/// Scales each channel about its own mean.
pub fn adjust_contrast(t: &Tensor4, factor: f32) -> Tensor4 {
    let d = t.dims();
    let mut out = t.clone();
    for n in 0..d.n {
        for c in 0..d.c {
            let plane = out.plane_mut(n, c);
            let mean = (plane.iter().map(|&v| v as f64).sum::<f64>() / plane.len().max(1) as f64) as f32;
            plane.iter_mut().for_each(|v| *v = mean + (*v - mean) * factor);
        }
    }
    out
}

/// Draws and applies one augmentation. Geometry is shared by image and mask;
/// photometric changes touch the image only.
pub fn augment<R: Rng + ?Sized>(
    image: &Tensor4,
    mask: &Mask,
    policy: &AugmentPolicy,
    rng: &mut R,
) -> Result<(Tensor4, Mask)> {
    let d = image.dims();
    if d.n != 1 || d.h != mask.height() || d.w != mask.width() {
        return Err(Error::Shape(format!(
            "augment expects one image aligned with its mask, got image {d} and mask {}x{}",
            mask.height(),
            mask.width()
        )));
    }
    let mut img = image.clone();
    let mut m = mask.clone();
    // Draws happen in a fixed order whether or not an op fires.
    let do_h = rng.random_bool(0.5);
    let do_v = rng.random_bool(0.5);
    let angle = policy.rotation.map(|(lo, hi)| rng.random_range(lo..=hi));
    let delta = policy.brightness.map(|(lo, hi)| rng.random_range(lo..=hi));
    let factor = policy.contrast.map(|(lo, hi)| rng.random_range(lo..=hi));

    if policy.hflip && do_h {
        img = hflip(&img);
        m = hflip_mask(&m);
    }
    if policy.vflip && do_v {
        img = vflip(&img);
        m = vflip_mask(&m);
    }
    if let Some(a) = angle {
        img = rotate(&img, a);
        m = rotate_mask(&m, a);
    }
    if let Some(f) = factor {
        img = adjust_contrast(&img, f);
    }
    if let Some(b) = delta {
        img = adjust_brightness(&img, b);
    }
    Ok((img, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor4 {
        Tensor4::from_fn([1, 2, h, w], |_, c, y, x| (c as f32 + 1.0) * (y as f32 * 0.3 - x as f32 * 0.17))
    }

    #[test]
    fn flips_are_involutions() {
        let t = ramp(5, 8);
        assert_eq!(hflip(&hflip(&t)), t);
        assert_eq!(vflip(&vflip(&t)), t);
        assert_ne!(hflip(&t), t);
    }

    #[test]
    fn full_turn_is_identity() {
        let t = ramp(9, 12);
        assert!(rotate(&t, 360.0).max_abs_diff(&t) <= 1e-3);
        let m = Mask::from_fn(9, 12, |y, x| (y * x) % 4 == 1);
        assert_eq!(rotate_mask(&m, 360.0), m);
    }

    #[test]
    fn quarter_turn_of_square_is_exact_permutation() {
        let t = ramp(6, 6);
        let r = rotate(&t, 90.0);
        let back = rotate(&rotate(&rotate(&r, 90.0), 90.0), 90.0);
        assert!(back.max_abs_diff(&t) < 1e-4);
    }

    #[test]
    fn masks_stay_binary_and_aligned_under_flips() {
        let img = Tensor4::from_fn([1, 1, 8, 8], |_, _, y, x| if y < 3 && x > 4 { 1.0 } else { 0.0 });
        let mask = Mask::from_tensor(&img);
        let policy = AugmentPolicy {
            rotation: None,
            brightness: None,
            contrast: None,
            ..AugmentPolicy::default()
        };
        for i in 0..16 {
            let (a, m) = augment(&img, &mask, &policy, &mut policy.sample_rng(0, i)).unwrap();
            assert_eq!(Mask::from_tensor(&a), m);
        }
    }

    #[test]
    fn contrast_keeps_channel_mean() {
        let t = ramp(4, 4);
        let c = adjust_contrast(&t, 1.2);
        for ch in 0..2 {
            let ma: f32 = t.plane(0, ch).iter().sum();
            let mb: f32 = c.plane(0, ch).iter().sum();
            assert!((ma - mb).abs() < 1e-4);
        }
    }

    #[test]
    fn sample_rng_depends_on_epoch_and_index() {
        let p = AugmentPolicy::default();
        let a = p.sample_rng(0, 0).next_u64();
        assert_eq!(a, p.sample_rng(0, 0).next_u64());
        assert_ne!(a, p.sample_rng(1, 0).next_u64());
        assert_ne!(a, p.sample_rng(0, 1).next_u64());
    }

    #[test]
    fn empty_range_rejected() {
        let p = AugmentPolicy {
            contrast: Some((1.2, 0.8)),
            ..AugmentPolicy::default()
        };
        assert!(p.validate().is_err());
    }
}
