//! Stride-1, same-padded 2-D convolution.
//!
//! Every kernel here is written as shifted row-wise multiply-adds over whole
//! (h, w) planes. Zero padding is never materialized: each tap only touches the
//! rows and columns where the shifted source pixel is in bounds.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{Dims, Tensor4};

/// Weights (c_out, c_in, k, k) and an optional per-output-channel bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor4,
    pub bias: Option<Vec<f32>>,
}

impl ConvParams {
    pub fn new(weight: Tensor4) -> Result<Self> {
        let d = weight.dims();
        check_kernel(d)?;
        Ok(Self { weight, bias: None })
    }

    pub fn with_bias(weight: Tensor4, bias: Vec<f32>) -> Result<Self> {
        let d = weight.dims();
        check_kernel(d)?;
        if bias.len() != d.n {
            return Err(Error::Shape(format!(
                "bias length {} does not match {} output channels",
                bias.len(),
                d.n
            )));
        }
        Ok(Self {
            weight,
            bias: Some(bias),
        })
    }

    pub fn c_out(&self) -> usize {
        self.weight.dims().n
    }

    pub fn c_in(&self) -> usize {
        self.weight.dims().c
    }

    pub fn kernel(&self) -> usize {
        self.weight.dims().h
    }
}

/// Gradients produced by [`conv2d_backward`].
#[derive(Debug, Clone)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub weight: Tensor4,
    pub bias: Option<Vec<f32>>,
}

fn check_kernel(d: Dims) -> Result<()> {
    if d.h != d.w || !(1..=3).contains(&d.h) {
        return Err(Error::Shape(format!(
            "convolution kernel must be square with size 1, 2 or 3, got {}x{}",
            d.h, d.w
        )));
    }
    if d.n == 0 || d.c == 0 {
        return Err(Error::Shape(format!("convolution weight has empty dims {d}")));
    }
    Ok(())
}

fn check_input(input: &Tensor4, weight: &Tensor4) -> Result<()> {
    check_kernel(weight.dims())?;
    if input.dims().c != weight.dims().c {
        return Err(Error::Shape(format!(
            "convolution expects {} input channels, got {}",
            weight.dims().c,
            input.dims().c
        )));
    }
    Ok(())
}

/// `out[y, x] += scale * src[y + sy, x + sx]` for every in-bounds source pixel.
#[inline]
fn shifted_axpy(out: &mut [f32], src: &[f32], h: usize, w: usize, scale: f32, sy: isize, sx: isize) {
    let y0 = (-sy).max(0) as usize;
    let y1 = (h as isize - sy).min(h as isize).max(0) as usize;
    let x0 = (-sx).max(0) as usize;
    let x1 = (w as isize - sx).min(w as isize).max(0) as usize;
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy_row = (y as isize + sy) as usize * w;
        let o = &mut out[y * w + x0..y * w + x1];
        let s = &src[(sy_row as isize + x0 as isize + sx) as usize..][..x1 - x0];
        for (a, &b) in o.iter_mut().zip(s) {
            *a += scale * b;
        }
    }
}

/// `Σ a[y, x] * b[y + sy, x + sx]` over in-bounds pixels, f32 per row and f64 across rows.
#[inline]
fn shifted_dot(a: &[f32], b: &[f32], h: usize, w: usize, sy: isize, sx: isize) -> f64 {
    let y0 = (-sy).max(0) as usize;
    let y1 = (h as isize - sy).min(h as isize).max(0) as usize;
    let x0 = (-sx).max(0) as usize;
    let x1 = (w as isize - sx).min(w as isize).max(0) as usize;
    if x0 >= x1 {
        return 0.0;
    }
    let mut total = 0.0f64;
    for y in y0..y1 {
        let sy_row = (y as isize + sy) as usize * w;
        let ar = &a[y * w + x0..y * w + x1];
        let br = &b[(sy_row as isize + x0 as isize + sx) as usize..][..x1 - x0];
        let row: f32 = ar.iter().zip(br).map(|(&p, &q)| p * q).sum();
        total += row as f64;
    }
    total
}

/// Offset of kernel tap `d` relative to the output pixel; taps are centred at `⌊k/2⌋`.
#[inline]
fn tap_offset(d: usize, k: usize) -> isize {
    d as isize - (k / 2) as isize
}

/// Raw-slice forward used by both the public API and the network layers.
pub(crate) fn conv2d_forward(input: &Tensor4, weight: &Tensor4, bias: Option<&[f32]>) -> Tensor4 {
    let d = input.dims();
    let wd = weight.dims();
    let (c_out, c_in, k) = (wd.n, wd.c, wd.h);
    let (h, w) = (d.h, d.w);
    let plane = d.plane();
    let mut out = Tensor4::zeros([d.n, c_out, h, w]);
    let wdata = weight.data();

    par::for_each_chunk(out.data_mut(), plane, |idx, dst| {
        let (n, o) = (idx / c_out, idx % c_out);
        if let Some(b) = bias {
            dst.fill(b[o]);
        }
        for i in 0..c_in {
            let src = input.plane(n, i);
            let taps = &wdata[(o * c_in + i) * k * k..][..k * k];
            for dy in 0..k {
                for dx in 0..k {
                    let wv = taps[dy * k + dx];
                    if wv != 0.0 {
                        shifted_axpy(dst, src, h, w, wv, tap_offset(dy, k), tap_offset(dx, k));
                    }
                }
            }
        }
    });
    out
}

pub(crate) fn conv2d_backward_raw(
    input: &Tensor4,
    weight: &Tensor4,
    grad_out: &Tensor4,
    want_bias: bool,
) -> ConvGrads {
    let d = input.dims();
    let wd = weight.dims();
    let (c_out, c_in, k) = (wd.n, wd.c, wd.h);
    let (h, w) = (d.h, d.w);
    let wdata = weight.data();

    // d/dx: out[y,x] taps src[y+s]; the adjoint scatters grad back with shift -s.
    let mut grad_in = Tensor4::zeros(d);
    par::for_each_chunk(grad_in.data_mut(), d.plane(), |idx, dst| {
        let (n, i) = (idx / c_in, idx % c_in);
        for o in 0..c_out {
            let g = grad_out.plane(n, o);
            let taps = &wdata[(o * c_in + i) * k * k..][..k * k];
            for dy in 0..k {
                for dx in 0..k {
                    let wv = taps[dy * k + dx];
                    if wv != 0.0 {
                        shifted_axpy(dst, g, h, w, wv, -tap_offset(dy, k), -tap_offset(dx, k));
                    }
                }
            }
        }
    });

    let mut grad_w = Tensor4::zeros(wd);
    par::for_each_chunk(grad_w.data_mut(), c_in * k * k, |o, dst| {
        for i in 0..c_in {
            for dy in 0..k {
                for dx in 0..k {
                    let mut acc = 0.0f64;
                    for n in 0..d.n {
                        acc += shifted_dot(
                            grad_out.plane(n, o),
                            input.plane(n, i),
                            h,
                            w,
                            tap_offset(dy, k),
                            tap_offset(dx, k),
                        );
                    }
                    dst[(i * k + dy) * k + dx] = acc as f32;
                }
            }
        }
    });

    let grad_b = want_bias.then(|| {
        (0..c_out)
            .map(|o| {
                (0..d.n)
                    .map(|n| grad_out.plane(n, o).iter().map(|&v| v as f64).sum::<f64>())
                    .sum::<f64>() as f32
            })
            .collect()
    });

    ConvGrads {
        input: grad_in,
        weight: grad_w,
        bias: grad_b,
    }
}

/// Same-padded, stride-1 convolution.
pub fn conv2d(input: &Tensor4, params: &ConvParams) -> Result<Tensor4> {
    check_input(input, &params.weight)?;
    input.ensure_finite("convolution input")?;
    Ok(conv2d_forward(input, &params.weight, params.bias.as_deref()))
}

/// Exact adjoint of [`conv2d`] with respect to its input, weights and bias.
pub fn conv2d_backward(input: &Tensor4, params: &ConvParams, grad_out: &Tensor4) -> Result<ConvGrads> {
    check_input(input, &params.weight)?;
    let d = input.dims();
    grad_out.ensure_dims(Dims::new(d.n, params.c_out(), d.h, d.w), "convolution upstream gradient")?;
    grad_out.ensure_finite("convolution upstream gradient")?;
    Ok(conv2d_backward_raw(input, &params.weight, grad_out, params.bias.is_some()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_grad_close, central_difference, conv_ref, dot64, random_tensor};

    /// Direct nested-loop definition of the same-padded convolution.
    fn naive_conv(input: &Tensor4, weight: &Tensor4) -> Tensor4 {
        let d = input.dims();
        let wd = weight.dims();
        let r = (wd.h / 2) as isize;
        Tensor4::from_fn([d.n, wd.n, d.h, d.w], |n, o, y, x| {
            let mut s = 0.0f64;
            for i in 0..wd.c {
                for dy in 0..wd.h {
                    for dx in 0..wd.w {
                        let sy = y as isize + dy as isize - r;
                        let sx = x as isize + dx as isize - r;
                        if sy >= 0 && sx >= 0 && (sy as usize) < d.h && (sx as usize) < d.w {
                            s += weight.get(o, i, dy, dx) as f64 * input.get(n, i, sy as usize, sx as usize) as f64;
                        }
                    }
                }
            }
            s as f32
        })
    }

    #[test]
    fn unit_1x1_kernel_is_identity() {
        let x = random_tensor([1, 1, 4, 5], 3);
        let p = ConvParams::new(Tensor4::full([1, 1, 1, 1], 1.0)).unwrap();
        assert_eq!(conv2d(&x, &p).unwrap(), x);
    }

    #[test]
    fn ones_3x3_on_2x2_sums_whole_image() {
        let x = Tensor4::full([1, 1, 2, 2], 1.0);
        let p = ConvParams::new(Tensor4::full([1, 1, 3, 3], 1.0)).unwrap();
        assert_eq!(conv2d(&x, &p).unwrap().data(), &[4.0; 4]);
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let x = Tensor4::zeros([2, 3, 5, 4]);
        let p = ConvParams::new(random_tensor([2, 3, 3, 3], 9)).unwrap();
        let y = conv2d(&x, &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_nested_loop_definition() {
        for (k, seed) in [(1, 1), (2, 2), (3, 3)] {
            let x = random_tensor([2, 3, 6, 7], seed);
            let wt = random_tensor([4, 3, k, k], seed + 10);
            let y = conv2d(&x, &ConvParams::new(wt.clone()).unwrap()).unwrap();
            assert!(y.max_abs_diff(&naive_conv(&x, &wt)) < 1e-5, "k={k}");
        }
    }

    #[test]
    fn bias_is_added_per_output_channel() {
        let x = Tensor4::zeros([1, 1, 2, 2]);
        let p = ConvParams::with_bias(Tensor4::full([2, 1, 1, 1], 1.0), vec![0.5, -1.0]).unwrap();
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.plane(0, 0), &[0.5; 4]);
        assert_eq!(y.plane(0, 1), &[-1.0; 4]);
    }

    #[test]
    fn channel_mismatch_is_a_shape_error() {
        let x = Tensor4::zeros([1, 2, 4, 4]);
        let p = ConvParams::new(Tensor4::zeros([1, 3, 3, 3])).unwrap();
        assert!(matches!(conv2d(&x, &p), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_input_is_a_numeric_error() {
        let mut x = Tensor4::zeros([1, 1, 2, 2]);
        x.data_mut()[1] = f32::NAN;
        let p = ConvParams::new(Tensor4::full([1, 1, 1, 1], 1.0)).unwrap();
        assert!(matches!(conv2d(&x, &p), Err(Error::Numeric(_))));
    }

    #[test]
    fn unsupported_kernel_rejected() {
        assert!(ConvParams::new(Tensor4::zeros([1, 1, 5, 5])).is_err());
        assert!(ConvParams::new(Tensor4::zeros([1, 1, 3, 1])).is_err());
    }

    #[test]
    fn gradients_match_central_differences() {
        let x = random_tensor([1, 2, 5, 5], 21);
        let p = ConvParams::with_bias(random_tensor([3, 2, 3, 3], 22), vec![0.1, -0.2, 0.3]).unwrap();
        let u = random_tensor([1, 3, 5, 5], 23);
        // finite differences are taken on the f64 reference, not on the kernel under test
        let loss = |x: &Tensor4, p: &ConvParams| dot64(&conv_ref(x, &p.weight, p.bias.as_deref()), &u);
        let g = conv2d_backward(&x, &p, &u).unwrap();

        let num_x = central_difference(&x, 1e-3, |xp| loss(xp, &p));
        assert_grad_close(g.input.data(), &num_x, 1e-3);
        let num_w = central_difference(&p.weight, 1e-3, |wp| {
            loss(&x, &ConvParams { weight: wp.clone(), bias: p.bias.clone() })
        });
        assert_grad_close(g.weight.data(), &num_w, 1e-3);
        let b = p.bias.clone().unwrap();
        let bt = Tensor4::from_vec([1, 3, 1, 1], b).unwrap();
        let num_b = central_difference(&bt, 1e-3, |bp| {
            loss(&x, &ConvParams { weight: p.weight.clone(), bias: Some(bp.data().to_vec()) })
        });
        assert_grad_close(g.bias.as_deref().unwrap(), &num_b, 1e-3);
    }

    #[test]
    fn backward_is_adjoint_of_forward() {
        for k in 1..=3 {
            let x = random_tensor([2, 3, 6, 5], 30 + k as u64);
            let dx = random_tensor([2, 3, 6, 5], 40 + k as u64);
            let u = random_tensor([2, 4, 6, 5], 50 + k as u64);
            let p = ConvParams::new(random_tensor([4, 3, k, k], 60 + k as u64)).unwrap();
            // Linear in x: <conv(dx), u> == <dx, conv^T(u)>.
            let lhs = conv2d(&dx, &p).unwrap().dot(&u);
            let rhs = dx.dot(&conv2d_backward(&x, &p, &u).unwrap().input);
            assert!((lhs - rhs).abs() <= 1e-4 * lhs.abs().max(1.0), "k={k}: {lhs} vs {rhs}");
        }
    }
}
