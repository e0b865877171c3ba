use crate::arch::{Gradients, ParamStore};
use crate::error::{Error, Result};

/// ADAM hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamConfig {
    pub fn with_lr(lr: f32) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every trainable tensor of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub hyper: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, hyper: AdamConfig) -> Self {
        let zeros = |p: &crate::arch::Param| if p.trainable() { vec![0.0; p.value.len()] } else { Vec::new() };
        Self {
            hyper,
            step: 0,
            m: store.iter().map(zeros).collect(),
            v: store.iter().map(zeros).collect(),
        }
    }

    pub fn first_moment(&self, index: usize) -> &[f32] {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &[f32] {
        &self.v[index]
    }
}

/// One bias-corrected ADAM update of every trainable tensor in `store`.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::Shape(format!(
            "optimizer tracks {} tensors, gradients {}, store {}",
            state.m.len(),
            grads.len(),
            store.len()
        )));
    }
    for (i, p) in store.iter().enumerate() {
        if p.trainable() && (grads.by_index(i).dims() != p.value.dims() || state.m[i].len() != p.value.len()) {
            return Err(Error::Shape(format!("gradient for {} does not match its parameter", p.name)));
        }
    }

    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.hyper;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (i, p) in store.iter_mut().enumerate() {
        if !p.trainable() {
            continue;
        }
        let g = grads.by_index(i).data();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (((w, &g), m), v) in p.value.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::ParamKind;
    use crate::tensor::Tensor4;

    fn scalar_store(v: f32) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", ParamKind::ConvWeight, Tensor4::full([1, 1, 1, 1], v)).unwrap();
        s
    }

    fn grad(store: &ParamStore, g: f32) -> Gradients {
        let mut gr = Gradients::zeros_like(store);
        gr.accumulate(store.id_of("w").unwrap(), &[g]);
        gr
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut s = scalar_store(0.3);
        let mut st = AdamState::new(&s, AdamConfig::default());
        let g = grad(&s, 0.0);
        adam_step(&mut s, &g, &mut st).unwrap();
        assert_eq!(s.get(s.id_of("w").unwrap()).data(), &[0.3]);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        for g in [2.5f32, -0.003] {
            let mut s = scalar_store(1.0);
            let mut st = AdamState::new(&s, AdamConfig::with_lr(0.01));
            let gr = grad(&s, g);
            adam_step(&mut s, &gr, &mut st).unwrap();
            let moved = s.get(s.id_of("w").unwrap()).data()[0] - 1.0;
            // m̂ = g, v̂ = g² → Δ = −lr·g/(|g| + eps)
            assert!((moved as f64 + 0.01 * g.signum() as f64).abs() < 1e-6, "{moved}");
        }
    }

    #[test]
    fn two_steps_follow_hand_computed_moments() {
        let mut s = scalar_store(0.0);
        let mut st = AdamState::new(&s, AdamConfig::with_lr(0.1));
        // Hand recurrence evaluated in f32, mirroring the update's working precision.
        let (b1, b2, lr, eps) = (0.9f32, 0.999f32, 0.1f32, 1e-8f32);
        let (mut m, mut v, mut w) = (0.0f32, 0.0f32, 0.0f32);
        let expected_m = [0.1f64, 0.19];
        let expected_v = [0.001f64, 0.001999];
        for t in 1..=2 {
            let g = grad(&s, 1.0);
            adam_step(&mut s, &g, &mut st).unwrap();
            m = b1 * m + (1.0 - b1);
            v = b2 * v + (1.0 - b2);
            w -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            let i = t as usize - 1;
            assert!((st.first_moment(0)[0] as f64 - m as f64).abs() <= 1e-9);
            assert!((st.second_moment(0)[0] as f64 - v as f64).abs() <= 1e-9);
            assert!((s.get(s.id_of("w").unwrap()).data()[0] as f64 - w as f64).abs() <= 1e-9);
            // and the same moments in exact decimal arithmetic, to f32 resolution
            assert!((m as f64 - expected_m[i]).abs() < 1e-7);
            assert!((v as f64 - expected_v[i]).abs() < 1e-7);
        }
        // constant unit gradient: bias-corrected ratio stays 1, so w ≈ −0.2 after two steps
        assert!((w as f64 + 0.2).abs() < 1e-6);
    }

    #[test]
    fn mismatched_gradients_rejected() {
        let mut s = scalar_store(0.0);
        let other = ParamStore::new();
        let mut st = AdamState::new(&s, AdamConfig::default());
        assert!(adam_step(&mut s, &Gradients::zeros_like(&other), &mut st).is_err());
    }

    #[test]
    fn running_statistics_are_not_optimized() {
        let mut s = ParamStore::new();
        let id = s.add("rm", ParamKind::BnRunningMean, Tensor4::full([1, 1, 1, 1], 0.5)).unwrap();
        let mut g = Gradients::zeros_like(&s);
        g.accumulate(id, &[3.0]);
        let mut st = AdamState::new(&s, AdamConfig::with_lr(1.0));
        adam_step(&mut s, &g, &mut st).unwrap();
        assert_eq!(s.get(id).data(), &[0.5]);
    }
}
