use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Additive smoothing in numerator and denominator of the soft dice ratio.
pub const DICE_SMOOTH: f64 = 1.0;

/// Class channel scored by the dice loss and by every binary metric.
pub const FOREGROUND: usize = 1;

/// Soft dice loss on the foreground channel over the whole batch:
/// `1 − (2·Σ p·g + ε) / (Σ p + Σ g + ε)`. Returns the loss and its gradient
/// with respect to `probs` (zero on the other channels).
pub fn dice_loss(probs: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4)> {
    target.ensure_dims(probs.dims(), "dice target")?;
    let d = probs.dims();
    if d.c <= FOREGROUND {
        return Err(Error::Shape(format!("dice loss needs at least 2 channels, got {}", d.c)));
    }
    for n in 0..d.n {
        for p in 0..d.plane() {
            let s: f32 = (0..d.c).map(|c| target.plane(n, c)[p]).sum();
            let binary = (0..d.c).all(|c| matches!(target.plane(n, c)[p], 0.0 | 1.0));
            if s != 1.0 || !binary {
                return Err(Error::InvalidArgument(format!(
                    "dice target is not one-hot at sample {n}, pixel {p}"
                )));
            }
        }
    }

    let (mut inter, mut sum_p, mut sum_g) = (0.0f64, 0.0f64, 0.0f64);
    for n in 0..d.n {
        for (&p, &g) in probs.plane(n, FOREGROUND).iter().zip(target.plane(n, FOREGROUND)) {
            inter += p as f64 * g as f64;
            sum_p += p as f64;
            sum_g += g as f64;
        }
    }
    let num = 2.0 * inter + DICE_SMOOTH;
    let den = sum_p + sum_g + DICE_SMOOTH;
    let loss = 1.0 - num / den;

    // d/dp_i = −(2 g_i · den − num) / den²
    let mut grad = Tensor4::zeros(d);
    let den2 = den * den;
    for n in 0..d.n {
        let g_plane = target.plane(n, FOREGROUND).to_vec();
        for (o, g) in grad.plane_mut(n, FOREGROUND).iter_mut().zip(g_plane) {
            *o = (-(2.0 * g as f64 * den - num) / den2) as f32;
        }
    }
    Ok((loss, grad))
}
