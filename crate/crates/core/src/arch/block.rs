//! Dual multiscale residual block.
//!
//! ```text
//! S1  = ReLU(l1(x) + l3(x) [+ skip])
//! S2  = ReLU(l1'(S1) + S1)
//! out = l1''(x) + l1'''(S2) + l3'(S2)
//! ```
//!
//! where `lk` is a k×k convolution followed by batch norm. Every convolution
//! maps `width` channels to `width` channels. `S1` is returned alongside the
//! output so an encoder block can hand it to its decoder twin as a skip input.

use crate::arch::layers::{ConvBn, ConvBnCache, Pass};
use crate::arch::params::{Gradients, ParamStore};
use crate::error::{Error, Result};
use crate::ops::{add, relu, relu_backward, Mode};
use crate::tensor::Tensor4;

#[derive(Debug, Clone)]
pub struct DualMrb {
    pub width: usize,
    /// 1×1 projection of the block input added to the output.
    pub shortcut: ConvBn,
    /// {1×1, 3×3} branches producing S1.
    pub s1_convs: [ConvBn; 2],
    /// 1×1 refinement of S1 producing S2.
    pub s2_proj: ConvBn,
    /// {1×1, 3×3} branches applied to S2.
    pub out_convs: [ConvBn; 2],
}

#[derive(Debug)]
pub(crate) struct BlockCache {
    shortcut: ConvBnCache,
    s1: [ConvBnCache; 2],
    s1_pre: Tensor4,
    s2_proj: ConvBnCache,
    s2_pre: Tensor4,
    out: [ConvBnCache; 2],
    has_skip: bool,
}

impl DualMrb {
    pub fn register(store: &mut ParamStore, prefix: &str, width: usize) -> Result<Self> {
        let l = |store: &mut ParamStore, name: &str, k: usize| ConvBn::register(store, &format!("{prefix}.{name}"), k, width, width);
        Ok(Self {
            width,
            shortcut: l(store, "shortcut", 1)?,
            s1_convs: [l(store, "s1_k1", 1)?, l(store, "s1_k3", 3)?],
            s2_proj: l(store, "s2_k1", 1)?,
            out_convs: [l(store, "out_k1", 1)?, l(store, "out_k3", 3)?],
        })
    }

    pub fn layers(&self) -> [&ConvBn; 6] {
        [
            &self.shortcut,
            &self.s1_convs[0],
            &self.s1_convs[1],
            &self.s2_proj,
            &self.out_convs[0],
            &self.out_convs[1],
        ]
    }

    pub fn trainable_count(&self) -> usize {
        self.layers().iter().map(|l| l.trainable_count()).sum()
    }

    /// Runs the block and returns `(out, S1)`. In `Train` mode the BN running
    /// statistics in `store` are updated.
    pub fn forward(
        &self,
        store: &mut ParamStore,
        x: &Tensor4,
        skip: Option<&Tensor4>,
        mode: Mode,
    ) -> Result<(Tensor4, Tensor4)> {
        let mut pass = Pass::new(mode);
        let (out, s1, _) = self.forward_pass(store, x, skip, &mut pass)?;
        pass.apply(store);
        Ok((out, s1))
    }

    pub(crate) fn forward_pass(
        &self,
        store: &ParamStore,
        x: &Tensor4,
        skip: Option<&Tensor4>,
        pass: &mut Pass,
    ) -> Result<(Tensor4, Tensor4, Option<BlockCache>)> {
        if x.dims().c != self.width {
            return Err(Error::Shape(format!(
                "dual residual block of width {} got {} channels",
                self.width,
                x.dims().c
            )));
        }
        let (a1, c_a1) = self.s1_convs[0].forward(store, x, pass)?;
        let (a3, c_a3) = self.s1_convs[1].forward(store, x, pass)?;
        let mut s1_pre = add(&a1, &a3)?;
        if let Some(s) = skip {
            s.ensure_dims(s1_pre.dims(), "dual residual block skip input")?;
            s1_pre.add_assign(s);
        }
        let s1 = relu(&s1_pre);

        let (b, c_b) = self.s2_proj.forward(store, &s1, pass)?;
        let s2_pre = add(&b, &s1)?;
        let s2 = relu(&s2_pre);

        let (mut out, c_sc) = self.shortcut.forward(store, x, pass)?;
        let (o1, c_o1) = self.out_convs[0].forward(store, &s2, pass)?;
        let (o3, c_o3) = self.out_convs[1].forward(store, &s2, pass)?;
        out.add_assign(&o1);
        out.add_assign(&o3);

        let cache = pass.is_train().then(|| BlockCache {
            shortcut: c_sc,
            s1: [c_a1, c_a3],
            s1_pre,
            s2_proj: c_b,
            s2_pre,
            out: [c_o1, c_o3],
            has_skip: skip.is_some(),
        });
        Ok((out, s1, cache))
    }

    /// Returns `(d x, d skip)`. `grad_s1` is the gradient arriving at S1 from
    /// its use outside the block (zero when S1 was not consumed).
    pub(crate) fn backward(
        &self,
        store: &ParamStore,
        cache: BlockCache,
        grad_out: &Tensor4,
        grad_s1: Option<&Tensor4>,
        grads: &mut Gradients,
    ) -> Result<(Tensor4, Option<Tensor4>)> {
        let BlockCache {
            shortcut,
            s1: [c_a1, c_a3],
            s1_pre,
            s2_proj,
            s2_pre,
            out: [c_o1, c_o3],
            has_skip,
        } = cache;

        let mut d_s2 = self.out_convs[0].backward(store, c_o1, grad_out, grads)?;
        d_s2.add_assign(&self.out_convs[1].backward(store, c_o3, grad_out, grads)?);
        let mut d_x = self.shortcut.backward(store, shortcut, grad_out, grads)?;

        let d_b = relu_backward(&s2_pre, &d_s2)?;
        let mut d_s1 = self.s2_proj.backward(store, s2_proj, &d_b, grads)?;
        d_s1.add_assign(&d_b);
        if let Some(g) = grad_s1 {
            d_s1.add_assign(g);
        }

        let d_a = relu_backward(&s1_pre, &d_s1)?;
        d_x.add_assign(&self.s1_convs[0].backward(store, c_a1, &d_a, grads)?);
        d_x.add_assign(&self.s1_convs[1].backward(store, c_a3, &d_a, grads)?);
        Ok((d_x, has_skip.then_some(d_a)))
    }
}
