//! Per-channel batch normalization.

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::Tensor4;

pub const BN_EPS: f32 = 1e-5;
pub const BN_MOMENTUM: f32 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Learnable scale/shift plus running statistics for `c` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub running_mean: Vec<f32>,
    pub running_var: Vec<f32>,
    pub eps: f32,
    /// Weight kept by the running statistics on each update.
    pub momentum: f32,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// `running ← momentum·running + (1 − momentum)·batch`.
    pub fn update_running(&mut self, saved: &BnSaved) {
        update_running_stats(
            &mut self.running_mean,
            &mut self.running_var,
            &saved.mean,
            &saved.var,
            self.momentum,
        );
    }
}

/// Activations saved by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnSaved {
    pub xhat: Tensor4,
    pub inv_std: Vec<f32>,
    /// Batch mean and biased batch variance per channel.
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct BnGrads {
    pub input: Tensor4,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

pub(crate) fn update_running_stats(
    running_mean: &mut [f32],
    running_var: &mut [f32],
    mean: &[f32],
    var: &[f32],
    momentum: f32,
) {
    for (r, &m) in running_mean.iter_mut().zip(mean) {
        *r = momentum * *r + (1.0 - momentum) * m;
    }
    for (r, &v) in running_var.iter_mut().zip(var) {
        *r = momentum * *r + (1.0 - momentum) * v;
    }
}

fn check_channels(input: &Tensor4, len: usize, what: &str) -> Result<()> {
    if input.dims().c != len {
        return Err(Error::Shape(format!(
            "batch norm {what} has {len} channels, input has {}",
            input.dims().c
        )));
    }
    Ok(())
}

/// Training-mode normalization with batch statistics (biased variance).
pub(crate) fn bn_train_forward(input: &Tensor4, gamma: &[f32], beta: &[f32], eps: f32) -> (Tensor4, BnSaved) {
    let d = input.dims();
    let count = (d.n * d.plane()) as f64;
    let stats: Vec<(f32, f32)> = par::map_range(d.c, |c| {
        let mut sum = 0.0f64;
        for n in 0..d.n {
            sum += input.plane(n, c).iter().map(|&v| v as f64).sum::<f64>();
        }
        let mean = sum / count;
        let mut sq = 0.0f64;
        for n in 0..d.n {
            sq += input
                .plane(n, c)
                .iter()
                .map(|&v| {
                    let e = v as f64 - mean;
                    e * e
                })
                .sum::<f64>();
        }
        (mean as f32, (sq / count) as f32)
    });
    let mean: Vec<f32> = stats.iter().map(|s| s.0).collect();
    let var: Vec<f32> = stats.iter().map(|s| s.1).collect();
    let inv_std: Vec<f32> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();

    let mut xhat = Tensor4::zeros(d);
    par::for_each_chunk(xhat.data_mut(), d.plane(), |idx, dst| {
        let (n, c) = (idx / d.c, idx % d.c);
        let (m, s) = (mean[c], inv_std[c]);
        for (o, &v) in dst.iter_mut().zip(input.plane(n, c)) {
            *o = (v - m) * s;
        }
    });
    let out = scale_shift(&xhat, gamma, beta);
    (
        out,
        BnSaved {
            xhat,
            inv_std,
            mean,
            var,
        },
    )
}

pub(crate) fn bn_infer_forward(
    input: &Tensor4,
    gamma: &[f32],
    beta: &[f32],
    running_mean: &[f32],
    running_var: &[f32],
    eps: f32,
) -> Tensor4 {
    let d = input.dims();
    let mut out = Tensor4::zeros(d);
    par::for_each_chunk(out.data_mut(), d.plane(), |idx, dst| {
        let c = idx % d.c;
        let s = gamma[c] / (running_var[c] + eps).sqrt();
        let (m, b) = (running_mean[c], beta[c]);
        for (o, &v) in dst.iter_mut().zip(input.plane(idx / d.c, c)) {
            *o = (v - m) * s + b;
        }
    });
    out
}

fn scale_shift(xhat: &Tensor4, gamma: &[f32], beta: &[f32]) -> Tensor4 {
    let d = xhat.dims();
    let mut out = Tensor4::zeros(d);
    par::for_each_chunk(out.data_mut(), d.plane(), |idx, dst| {
        let c = idx % d.c;
        let (g, b) = (gamma[c], beta[c]);
        for (o, &v) in dst.iter_mut().zip(xhat.plane(idx / d.c, c)) {
            *o = g * v + b;
        }
    });
    out
}

/// Backward of the training-mode transform, including the dependence of the
/// batch statistics on the input.
pub(crate) fn bn_train_backward(saved: &BnSaved, gamma: &[f32], grad_out: &Tensor4) -> BnGrads {
    let d = grad_out.dims();
    let count = (d.n * d.plane()) as f64;
    let sums: Vec<(f64, f64)> = par::map_range(d.c, |c| {
        let (mut s_dy, mut s_dy_xhat) = (0.0f64, 0.0f64);
        for n in 0..d.n {
            for (&g, &xh) in grad_out.plane(n, c).iter().zip(saved.xhat.plane(n, c)) {
                s_dy += g as f64;
                s_dy_xhat += g as f64 * xh as f64;
            }
        }
        (s_dy, s_dy_xhat)
    });

    let mut grad_in = Tensor4::zeros(d);
    par::for_each_chunk(grad_in.data_mut(), d.plane(), |idx, dst| {
        let (n, c) = (idx / d.c, idx % d.c);
        let (s_dy, s_dy_xhat) = sums[c];
        let mean_dy = (s_dy / count) as f32;
        let mean_dy_xhat = (s_dy_xhat / count) as f32;
        let k = gamma[c] * saved.inv_std[c];
        for ((o, &g), &xh) in dst.iter_mut().zip(grad_out.plane(n, c)).zip(saved.xhat.plane(n, c)) {
            *o = k * (g - mean_dy - xh * mean_dy_xhat);
        }
    });

    BnGrads {
        input: grad_in,
        gamma: sums.iter().map(|s| s.1 as f32).collect(),
        beta: sums.iter().map(|s| s.0 as f32).collect(),
    }
}

/// Normalizes `input` per channel. In `Train` mode batch statistics are used and
/// the running statistics are updated; in `Infer` mode only running statistics are read.
pub fn batchnorm(input: &Tensor4, params: &mut BatchNormParams, mode: Mode) -> Result<(Tensor4, Option<BnSaved>)> {
    check_channels(input, params.gamma.len(), "gamma")?;
    check_channels(input, params.beta.len(), "beta")?;
    check_channels(input, params.running_mean.len(), "running mean")?;
    check_channels(input, params.running_var.len(), "running variance")?;
    match mode {
        Mode::Train => {
            let (out, saved) = bn_train_forward(input, &params.gamma, &params.beta, params.eps);
            params.update_running(&saved);
            Ok((out, Some(saved)))
        }
        Mode::Infer => Ok((
            bn_infer_forward(
                input,
                &params.gamma,
                &params.beta,
                &params.running_mean,
                &params.running_var,
                params.eps,
            ),
            None,
        )),
    }
}

/// Backward of a training-mode [`batchnorm`] call.
pub fn batchnorm_backward(saved: &BnSaved, params: &BatchNormParams, grad_out: &Tensor4) -> Result<BnGrads> {
    grad_out.ensure_dims(saved.xhat.dims(), "batch norm upstream gradient")?;
    check_channels(grad_out, params.gamma.len(), "gamma")?;
    Ok(bn_train_backward(saved, &params.gamma, grad_out))
}

/// Backward of an inference-mode [`batchnorm`] call (fixed statistics).
pub fn batchnorm_infer_backward(input: &Tensor4, params: &BatchNormParams, grad_out: &Tensor4) -> Result<BnGrads> {
    grad_out.ensure_dims(input.dims(), "batch norm upstream gradient")?;
    check_channels(input, params.gamma.len(), "gamma")?;
    let d = input.dims();
    let mut grad_in = Tensor4::zeros(d);
    let mut g_gamma = vec![0.0f64; d.c];
    let mut g_beta = vec![0.0f64; d.c];
    for n in 0..d.n {
        for c in 0..d.c {
            let inv = 1.0 / (params.running_var[c] + params.eps).sqrt();
            let m = params.running_mean[c];
            let dst = grad_in.plane_mut(n, c);
            for ((o, &g), &x) in dst.iter_mut().zip(grad_out.plane(n, c)).zip(input.plane(n, c)) {
                *o = g * params.gamma[c] * inv;
                g_gamma[c] += g as f64 * ((x - m) * inv) as f64;
                g_beta[c] += g as f64;
            }
        }
    }
    Ok(BnGrads {
        input: grad_in,
        gamma: g_gamma.into_iter().map(|v| v as f32).collect(),
        beta: g_beta.into_iter().map(|v| v as f32).collect(),
    })
}
