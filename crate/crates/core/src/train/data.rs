use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::rng::{stream, Stream};
use crate::tensor::{Dims, Tensor4};

/// Added to the standard deviation before dividing.
pub const ZSCORE_EPS: f64 = 1e-8;

/// Per sample and per channel `(x − mean) / (std + 1e-8)` with the biased std.
pub fn zscore_normalize(image: &Tensor4) -> Tensor4 {
    let d = image.dims();
    let mut out = image.clone();
    for n in 0..d.n {
        for c in 0..d.c {
            let plane = out.plane_mut(n, c);
            let len = plane.len().max(1) as f64;
            let mean = plane.iter().map(|&v| v as f64).sum::<f64>() / len;
            let var = plane.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / len;
            let scale = 1.0 / (var.sqrt() + ZSCORE_EPS);
            for v in plane.iter_mut() {
                *v = ((*v as f64 - mean) * scale) as f32;
            }
        }
    }
    out
}

/// Bilinear resize with pixel-centre alignment, edges clamped.
pub fn resize_bilinear(image: &Tensor4, height: usize, width: usize) -> Result<Tensor4> {
    let d = image.dims();
    check_target(d, height, width)?;
    let sy = d.h as f64 / height as f64;
    let sx = d.w as f64 / width as f64;
    let taps = |out: usize, scale: f64, len: usize| {
        let src = ((out as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(len - 1);
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, (src - i0 as f64) as f32)
    };
    let ys: Vec<_> = (0..height).map(|y| taps(y, sy, d.h)).collect();
    let xs: Vec<_> = (0..width).map(|x| taps(x, sx, d.w)).collect();
    let mut out = Tensor4::zeros([d.n, d.c, height, width]);
    for n in 0..d.n {
        for c in 0..d.c {
            let src = image.plane(n, c);
            let dst = out.plane_mut(n, c);
            for (y, &(y0, y1, fy)) in ys.iter().enumerate() {
                for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                    let top = src[y0 * d.w + x0] * (1.0 - fx) + src[y0 * d.w + x1] * fx;
                    let bot = src[y1 * d.w + x0] * (1.0 - fx) + src[y1 * d.w + x1] * fx;
                    dst[y * width + x] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
    }
    Ok(out)
}

/// Nearest-neighbour resize of a mask; values stay binary.
pub fn resize_nearest(mask: &Mask, height: usize, width: usize) -> Result<Mask> {
    check_target(Dims::new(1, 1, mask.height(), mask.width()), height, width)?;
    let pick = |out: usize, src_len: usize, dst_len: usize| ((out * 2 + 1) * src_len / (dst_len * 2)).min(src_len - 1);
    Ok(Mask::from_fn(height, width, |y, x| {
        mask.get(pick(y, mask.height(), height), pick(x, mask.width(), width))
    }))
}

fn check_target(d: Dims, height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 || d.h == 0 || d.w == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot resize {}x{} to {height}x{width}",
            d.h, d.w
        )));
    }
    Ok(())
}

/// A tile cut from a larger image, with its top-left corner `(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub data: Tensor4,
    pub origin: (usize, usize),
}

/// Zero-pads up to the next multiple of `size` and tiles row-major.
pub fn extract_patches(image: &Tensor4, size: usize) -> Result<Vec<Patch>> {
    if size == 0 || size % 8 != 0 {
        return Err(Error::InvalidArgument(format!("patch size must be a positive multiple of 8, got {size}")));
    }
    let d = image.dims();
    let rows = d.h.div_ceil(size);
    let cols = d.w.div_ceil(size);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (oy, ox) = (r * size, c * size);
            let data = Tensor4::from_fn([d.n, d.c, size, size], |n, ch, y, x| {
                let (sy, sx) = (oy + y, ox + x);
                if sy < d.h && sx < d.w {
                    image.get(n, ch, sy, sx)
                } else {
                    0.0
                }
            });
            out.push(Patch { data, origin: (oy, ox) });
        }
    }
    Ok(out)
}

/// Writes each patch back at its origin and crops to `height × width`.
pub fn stitch_patches(patches: &[Patch], height: usize, width: usize) -> Result<Tensor4> {
    let first = patches
        .first()
        .ok_or_else(|| Error::InvalidArgument("no patches to stitch".into()))?;
    let pd = first.data.dims();
    let mut out = Tensor4::zeros([pd.n, pd.c, height, width]);
    for p in patches {
        p.data.ensure_dims(pd, "patch")?;
        let (oy, ox) = p.origin;
        for n in 0..pd.n {
            for c in 0..pd.c {
                for y in 0..pd.h {
                    let ty = oy + y;
                    if ty >= height {
                        break;
                    }
                    for x in 0..pd.w.min(width.saturating_sub(ox)) {
                        out.set(n, c, ty, ox + x, p.data.get(n, c, y, x));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Seeded shuffle, then the first `round(ratio · N)` items train and the rest validate.
pub fn split_dataset<T>(items: Vec<T>, ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty dataset".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let mut items = items;
    items.shuffle(&mut stream(seed, Stream::Split));
    let n_train = (ratio * items.len() as f64).round() as usize;
    let validation = items.split_off(n_train.min(items.len()));
    Ok((items, validation))
}
