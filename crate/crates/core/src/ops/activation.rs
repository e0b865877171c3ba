use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Elementwise `max(0, x)`.
pub fn relu(input: &Tensor4) -> Tensor4 {
    let mut out = input.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// Passes `grad_out` through where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor4, grad_out: &Tensor4) -> Result<Tensor4> {
    grad_out.ensure_dims(input.dims(), "relu upstream gradient")?;
    let mut g = grad_out.clone();
    for (gv, &x) in g.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *gv = 0.0;
        }
    }
    Ok(g)
}

/// Softmax over the channel axis at every pixel, shifted by the channel max.
pub fn softmax_channel(input: &Tensor4) -> Result<Tensor4> {
    let d = input.dims();
    if d.c < 2 {
        return Err(Error::Shape(format!("softmax needs at least 2 channels, got {}", d.c)));
    }
    let plane = d.plane();
    let mut out = Tensor4::zeros(d);
    let mut logits = vec![0.0f64; d.c];
    for n in 0..d.n {
        let base = n * d.c * plane;
        for p in 0..plane {
            let mut max = f64::NEG_INFINITY;
            for (c, l) in logits.iter_mut().enumerate() {
                *l = input.data()[base + c * plane + p] as f64;
                max = max.max(*l);
            }
            let mut sum = 0.0;
            for l in logits.iter_mut() {
                *l = (*l - max).exp();
                sum += *l;
            }
            for (c, l) in logits.iter().enumerate() {
                out.data_mut()[base + c * plane + p] = (l / sum) as f32;
            }
        }
    }
    Ok(out)
}

/// Backward of [`softmax_channel`] given its output `probs`:
/// `dx_c = y_c (dy_c − Σ_k y_k dy_k)`.
pub fn softmax_backward(probs: &Tensor4, grad_out: &Tensor4) -> Result<Tensor4> {
    grad_out.ensure_dims(probs.dims(), "softmax upstream gradient")?;
    let d = probs.dims();
    let plane = d.plane();
    let mut g = Tensor4::zeros(d);
    for n in 0..d.n {
        let base = n * d.c * plane;
        for p in 0..plane {
            let dot: f64 = (0..d.c)
                .map(|c| probs.data()[base + c * plane + p] as f64 * grad_out.data()[base + c * plane + p] as f64)
                .sum();
            for c in 0..d.c {
                let i = base + c * plane + p;
                g.data_mut()[i] = (probs.data()[i] as f64 * (grad_out.data()[i] as f64 - dot)) as f32;
            }
        }
    }
    Ok(g)
}

/// Elementwise sum of two equally shaped tensors.
pub fn add(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    b.ensure_dims(a.dims(), "add operand")?;
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// The upstream gradient reaches both operands unchanged.
pub fn add_backward(grad_out: &Tensor4) -> (Tensor4, Tensor4) {
    (grad_out.clone(), grad_out.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{assert_grad_close, central_difference, dot64, random_tensor, softmax_ref};

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor4::from_vec([1, 1, 1, 2], vec![-2.5, 3.1]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 3.1]);
        let g = relu_backward(
            &Tensor4::from_vec([1, 1, 1, 1], vec![-0.5]).unwrap(),
            &Tensor4::full([1, 1, 1, 1], 1.0),
        )
        .unwrap();
        assert_eq!(g.data(), &[0.0]);
    }

    #[test]
    fn softmax_closed_forms() {
        let eq = softmax_channel(&Tensor4::full([1, 2, 1, 1], 0.3)).unwrap();
        assert_eq!(eq.data(), &[0.5, 0.5]);
        let x = Tensor4::from_vec([1, 2, 1, 1], vec![0.0, 3.0f32.ln()]).unwrap();
        let y = softmax_channel(&x).unwrap();
        assert!((y.data()[0] - 0.25).abs() < 1e-7);
        assert!((y.data()[1] - 0.75).abs() < 1e-7);
    }

    #[test]
    fn softmax_sums_to_one_even_for_large_logits() {
        let mut x = random_tensor([2, 3, 4, 4], 4);
        x.data_mut()[0] = 500.0;
        x.data_mut()[17] = -800.0;
        let y = softmax_channel(&x).unwrap();
        let d = y.dims();
        for n in 0..d.n {
            for p in 0..d.plane() {
                let s: f32 = (0..d.c).map(|c| y.plane(n, c)[p]).sum();
                assert!((s - 1.0).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn softmax_rejects_single_channel() {
        assert!(softmax_channel(&Tensor4::zeros([1, 1, 2, 2])).is_err());
    }

    #[test]
    fn softmax_gradient_matches_central_differences() {
        let x = random_tensor([1, 3, 3, 3], 11);
        let u = random_tensor([1, 3, 3, 3], 12);
        let y = softmax_channel(&x).unwrap();
        let g = softmax_backward(&y, &u).unwrap();
        let num = central_difference(&x, 1e-3, |xp| dot64(&softmax_ref(xp), &u));
        assert_grad_close(g.data(), &num, 1e-3);
    }

    #[test]
    fn add_identities() {
        let a = random_tensor([1, 2, 3, 3], 2);
        assert_eq!(add(&a, &Tensor4::zeros(a.dims())).unwrap(), a);
        let s = add(&Tensor4::full([1, 1, 1, 1], 1.5), &Tensor4::full([1, 1, 1, 1], -1.5)).unwrap();
        assert_eq!(s.data(), &[0.0]);
        let (ga, gb) = add_backward(&a);
        assert_eq!((ga, gb), (a.clone(), a));
        assert!(add(&Tensor4::zeros([1, 1, 2, 2]), &Tensor4::zeros([1, 1, 2, 3])).is_err());
    }
}
