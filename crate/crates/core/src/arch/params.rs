use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Role of a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    ConvWeight,
    BnGamma,
    BnBeta,
    BnRunningMean,
    BnRunningVar,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        matches!(self, ParamKind::ConvWeight | ParamKind::BnGamma | ParamKind::BnBeta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    /// Conv weights are (c_out, c_in, k, k); per-channel vectors are stored as (c, 1, 1, 1).
    pub value: Tensor4,
}

impl Param {
    pub fn trainable(&self) -> bool {
        self.kind.trainable()
    }

    /// Logical shape: rank 4 for convolution weights, rank 1 for channel vectors.
    pub fn shape(&self) -> Vec<usize> {
        match self.kind {
            ParamKind::ConvWeight => self.value.dims().as_array().to_vec(),
            _ => vec![self.value.dims().n],
        }
    }
}

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// Named tensors in registration order. Names are unique.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor4) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, kind, value });
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Tensor4 {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor4 {
        &mut self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param> {
        self.by_name.get(name).map(|&i| &self.params[i])
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Number of trainable scalars (conv weights, BN scale and shift).
    pub fn trainable_count(&self) -> usize {
        self.params.iter().filter(|p| p.trainable()).map(|p| p.value.len()).sum()
    }

    /// Number of stored scalars, including BN running statistics.
    pub fn total_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Gradient buffers aligned with a [`ParamStore`]. Entries for non-trainable
/// tensors stay zero.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Tensor4>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store.iter().map(|p| Tensor4::zeros(p.value.dims())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor4 {
        &self.grads[id.0]
    }

    pub fn by_index(&self, index: usize) -> &Tensor4 {
        &self.grads[index]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub(crate) fn accumulate(&mut self, id: ParamId, g: &[f32]) {
        for (a, &b) in self.grads[id.0].data_mut().iter_mut().zip(g) {
            *a += b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_split_trainable_and_running_stats() {
        let mut s = ParamStore::new();
        s.add("conv", ParamKind::ConvWeight, Tensor4::zeros([4, 2, 3, 3])).unwrap();
        for (n, k) in [
            ("g", ParamKind::BnGamma),
            ("b", ParamKind::BnBeta),
            ("m", ParamKind::BnRunningMean),
            ("v", ParamKind::BnRunningVar),
        ] {
            s.add(n, k, Tensor4::zeros([4, 1, 1, 1])).unwrap();
        }
        // k²·Cin·Cout + 2C trainable, 2C running
        assert_eq!(s.trainable_count(), 9 * 2 * 4 + 2 * 4);
        assert_eq!(s.total_count(), 9 * 2 * 4 + 4 * 4);
        assert_eq!(s.by_name("conv").unwrap().shape(), vec![4, 2, 3, 3]);
        assert_eq!(s.by_name("m").unwrap().shape(), vec![4]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new();
        s.add("a", ParamKind::BnBeta, Tensor4::zeros([1, 1, 1, 1])).unwrap();
        assert!(s.add("a", ParamKind::BnBeta, Tensor4::zeros([1, 1, 1, 1])).is_err());
    }
}
