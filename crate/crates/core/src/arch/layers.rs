use crate::arch::params::{Gradients, ParamId, ParamKind, ParamStore};
use crate::error::{Error, Result};
use crate::ops::{
    bn_infer_forward, bn_train_backward, bn_train_forward, conv2d_backward_raw, conv2d_forward, BatchNormParams,
    BnSaved, ConvParams, Mode, BN_EPS, BN_MOMENTUM,
};
use crate::tensor::Tensor4;

/// Batch-norm running-statistic update produced by a training-mode pass.
#[derive(Debug, Clone)]
pub(crate) struct StatUpdate {
    mean_id: ParamId,
    var_id: ParamId,
    mean: Vec<f32>,
    var: Vec<f32>,
}

/// Forward-pass context: inference, or training with pending statistic updates.
#[derive(Debug)]
pub(crate) enum Pass {
    Infer,
    Train(Vec<StatUpdate>),
}

impl Pass {
    pub(crate) fn new(mode: Mode) -> Self {
        match mode {
            Mode::Infer => Pass::Infer,
            Mode::Train => Pass::Train(Vec::new()),
        }
    }

    pub(crate) fn is_train(&self) -> bool {
        matches!(self, Pass::Train(_))
    }

    pub(crate) fn apply(self, store: &mut ParamStore) {
        if let Pass::Train(updates) = self {
            for u in updates {
                let (mean_id, var_id) = (u.mean_id, u.var_id);
                let mut rm = store.get(mean_id).data().to_vec();
                let mut rv = store.get(var_id).data().to_vec();
                crate::ops::update_running_stats(&mut rm, &mut rv, &u.mean, &u.var, BN_MOMENTUM);
                store.get_mut(mean_id).data_mut().copy_from_slice(&rm);
                store.get_mut(var_id).data_mut().copy_from_slice(&rv);
            }
        }
    }
}

/// Saved state of one conv+BN application (training mode only).
#[derive(Debug, Clone)]
pub(crate) struct ConvBnCache(Option<(Tensor4, BnSaved)>);

impl ConvBnCache {
    fn take(self) -> Result<(Tensor4, BnSaved)> {
        self.0
            .ok_or_else(|| Error::InvalidArgument("backward requires a tape recorded in training mode".into()))
    }
}

/// Convolution (no bias) followed by batch normalization: the `l^{k×k}` unit.
#[derive(Debug, Clone)]
pub struct ConvBn {
    pub name: String,
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub weight: ParamId,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
}

impl ConvBn {
    pub fn register(store: &mut ParamStore, name: &str, kernel: usize, c_in: usize, c_out: usize) -> Result<Self> {
        if c_in == 0 || c_out == 0 {
            return Err(Error::Config(format!("layer {name}: channel counts must be at least 1")));
        }
        let vec = |v: f32| Tensor4::full([c_out, 1, 1, 1], v);
        Ok(Self {
            name: name.to_string(),
            kernel,
            c_in,
            c_out,
            weight: store.add(
                format!("{name}.conv.weight"),
                ParamKind::ConvWeight,
                Tensor4::zeros([c_out, c_in, kernel, kernel]),
            )?,
            gamma: store.add(format!("{name}.bn.gamma"), ParamKind::BnGamma, vec(1.0))?,
            beta: store.add(format!("{name}.bn.beta"), ParamKind::BnBeta, vec(0.0))?,
            running_mean: store.add(format!("{name}.bn.running_mean"), ParamKind::BnRunningMean, vec(0.0))?,
            running_var: store.add(format!("{name}.bn.running_var"), ParamKind::BnRunningVar, vec(1.0))?,
        })
    }

    pub fn trainable_count(&self) -> usize {
        self.kernel * self.kernel * self.c_in * self.c_out + 2 * self.c_out
    }

    /// Copy of the convolution parameters.
    pub fn conv_params(&self, store: &ParamStore) -> ConvParams {
        ConvParams {
            weight: store.get(self.weight).clone(),
            bias: None,
        }
    }

    /// Copy of the batch-norm parameters.
    pub fn bn_params(&self, store: &ParamStore) -> BatchNormParams {
        BatchNormParams {
            gamma: store.get(self.gamma).data().to_vec(),
            beta: store.get(self.beta).data().to_vec(),
            running_mean: store.get(self.running_mean).data().to_vec(),
            running_var: store.get(self.running_var).data().to_vec(),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub(crate) fn forward(&self, store: &ParamStore, x: &Tensor4, pass: &mut Pass) -> Result<(Tensor4, ConvBnCache)> {
        if x.dims().c != self.c_in {
            return Err(Error::Shape(format!(
                "layer {} expects {} channels, got {}",
                self.name,
                self.c_in,
                x.dims().c
            )));
        }
        let z = conv2d_forward(x, store.get(self.weight), None);
        let gamma = store.get(self.gamma).data();
        let beta = store.get(self.beta).data();
        match pass {
            Pass::Infer => {
                let y = bn_infer_forward(
                    &z,
                    gamma,
                    beta,
                    store.get(self.running_mean).data(),
                    store.get(self.running_var).data(),
                    BN_EPS,
                );
                Ok((y, ConvBnCache(None)))
            }
            Pass::Train(updates) => {
                let (y, saved) = bn_train_forward(&z, gamma, beta, BN_EPS);
                updates.push(StatUpdate {
                    mean_id: self.running_mean,
                    var_id: self.running_var,
                    mean: saved.mean.clone(),
                    var: saved.var.clone(),
                });
                Ok((y, ConvBnCache(Some((x.clone(), saved)))))
            }
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub(crate) fn backward(
        &self,
        store: &ParamStore,
        cache: ConvBnCache,
        grad_out: &Tensor4,
        grads: &mut Gradients,
    ) -> Result<Tensor4> {
        let (x, saved) = cache.take()?;
        let bn = bn_train_backward(&saved, store.get(self.gamma).data(), grad_out);
        grads.accumulate(self.gamma, &bn.gamma);
        grads.accumulate(self.beta, &bn.beta);
        let conv = conv2d_backward_raw(&x, store.get(self.weight), &bn.input, false);
        grads.accumulate(self.weight, conv.weight.data());
        Ok(conv.input)
    }
}
