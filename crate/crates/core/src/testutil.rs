//! Oracles shared by the unit tests.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::tensor::{Dims, Tensor4};

pub(crate) fn random_tensor(dims: impl Into<Dims>, seed: u64) -> Tensor4 {
    let dims = dims.into();
    let mut rng = SplitMix64::seed_from_u64(seed);
    let data = (0..dims.len()).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Tensor4::from_vec(dims, data).unwrap()
}

/// Central finite differences of a scalar function over every element of `at`.
/// The step actually taken is measured in f32 so rounding of `x ± h` does not bias the quotient.
pub(crate) fn central_difference(at: &Tensor4, step: f32, f: impl Fn(&Tensor4) -> f64) -> Vec<f64> {
    let mut probe = at.clone();
    (0..at.len())
        .map(|i| {
            let x = at.data()[i];
            let (hi, lo) = (x + step, x - step);
            probe.data_mut()[i] = hi;
            let fp = f(&probe);
            probe.data_mut()[i] = lo;
            let fm = f(&probe);
            probe.data_mut()[i] = x;
            (fp - fm) / (hi as f64 - lo as f64)
        })
        .collect()
}

pub(crate) fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[track_caller]
pub(crate) fn assert_grad_close(analytic: &[f32], numeric: &[f64], tol: f64) {
    assert_eq!(analytic.len(), numeric.len());
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let e = rel_err(a as f64, n);
        assert!(e <= tol, "coordinate {i}: analytic {a} vs numeric {n} (rel err {e:.2e})");
    }
}

/// `Σ a_i · u_i` with `a` already in f64.
pub(crate) fn dot64(a: &[f64], u: &Tensor4) -> f64 {
    a.iter().zip(u.data()).map(|(&x, &y)| x * y as f64).sum()
}

/// f64 nested-loop same-padded convolution.
pub(crate) fn conv_ref(x: &Tensor4, w: &Tensor4, bias: Option<&[f32]>) -> Vec<f64> {
    let d = x.dims();
    let wd = w.dims();
    let r = (wd.h / 2) as isize;
    let mut out = Vec::with_capacity(d.n * wd.n * d.plane());
    for n in 0..d.n {
        for o in 0..wd.n {
            for y in 0..d.h {
                for xx in 0..d.w {
                    let mut s = bias.map_or(0.0, |b| b[o] as f64);
                    for i in 0..wd.c {
                        for dy in 0..wd.h {
                            for dx in 0..wd.w {
                                let sy = y as isize + dy as isize - r;
                                let sx = xx as isize + dx as isize - r;
                                if sy >= 0 && sx >= 0 && (sy as usize) < d.h && (sx as usize) < d.w {
                                    s += w.get(o, i, dy, dx) as f64 * x.get(n, i, sy as usize, sx as usize) as f64;
                                }
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
    }
    out
}

/// f64 training-mode batch norm with biased batch variance.
pub(crate) fn bn_train_ref(x: &Tensor4, gamma: &[f32], beta: &[f32], eps: f64) -> Vec<f64> {
    let d = x.dims();
    let m = (d.n * d.plane()) as f64;
    let mut out = vec![0.0; d.len()];
    for c in 0..d.c {
        let vals: Vec<f64> = (0..d.n).flat_map(|n| x.plane(n, c).iter().map(|&v| v as f64)).collect();
        let mean = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
        let inv = 1.0 / (var + eps).sqrt();
        for n in 0..d.n {
            for p in 0..d.plane() {
                let i = d.index(n, c, 0, 0) + p;
                out[i] = gamma[c] as f64 * (x.data()[i] as f64 - mean) * inv + beta[c] as f64;
            }
        }
    }
    out
}

/// f64 channel softmax.
pub(crate) fn softmax_ref(x: &Tensor4) -> Vec<f64> {
    let d = x.dims();
    let mut out = vec![0.0; d.len()];
    for n in 0..d.n {
        for p in 0..d.plane() {
            let idx: Vec<usize> = (0..d.c).map(|c| d.index(n, c, 0, 0) + p).collect();
            let max = idx.iter().map(|&i| x.data()[i] as f64).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = idx.iter().map(|&i| (x.data()[i] as f64 - max).exp()).sum();
            for &i in &idx {
                out[i] = (x.data()[i] as f64 - max).exp() / z;
            }
        }
    }
    out
}
