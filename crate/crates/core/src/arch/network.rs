//! Full encoder/decoder graph.
//!
//! ```text
//! f1      = ReLU(l1(x))                                   stem, full resolution
//! enc_i   : h = MaxPool(ReLU(l3(l1(h)))); (h, S1_i) = block_i(h)     i = 1..3
//! dec_i   : (o, _) = block'_i(h, skip = S1_i); h = ReLU(l3(l1(Up(o))))  i = 3..1
//! probs   = Softmax(ReLU(l3(f1 + l3(h))))
//! ```
//!
//! Encoder stage `i` runs at `1/2^i` of the input resolution. Decoder stage
//! `i` runs its block at the same resolution as encoder stage `i` so that
//! `S1_i` is added exactly once, then upsamples and narrows to the next width.

use rand_distr::{Distribution, Normal};

use crate::arch::block::{BlockCache, DualMrb};
use crate::arch::layers::{ConvBn, ConvBnCache, Pass};
use crate::arch::params::{Gradients, ParamKind, ParamStore};
use crate::error::{Error, Result};
use crate::ops::{
    maxpool2x2, maxpool2x2_backward, relu, relu_backward, softmax_backward, softmax_channel, upsample2x_backward,
    upsample2x_nearest, Mode, PoolIndices,
};
use crate::rng::{stream, Stream};
use crate::tensor::{Dims, Tensor4};

/// Trainable parameter count of [`NetworkConfig::reference`], from the per-layer closed forms.
pub const REFERENCE_TRAINABLE_PARAMS: usize = 78_572;
/// Trainable plus BN running statistics for [`NetworkConfig::reference`].
pub const REFERENCE_TOTAL_PARAMS: usize = 80_304;

/// Input height and width must be multiples of this (three 2×2 poolings).
pub const SPATIAL_DIVISOR: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    pub stem_width: usize,
    pub stage_widths: [usize; 3],
    pub seed: u64,
}

impl NetworkConfig {
    /// RGB input, two classes, stem 8 and stages (8, 16, 32).
    pub const fn reference() -> Self {
        Self {
            in_channels: 3,
            num_classes: 2,
            stem_width: 8,
            stage_widths: [8, 16, 32],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::Config("in_channels must be at least 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.stem_width == 0 || self.stage_widths.contains(&0) {
            return Err(Error::Config(format!(
                "widths must be at least 1 (stem {}, stages {:?})",
                self.stem_width, self.stage_widths
            )));
        }
        Ok(())
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::reference()
    }
}

/// 1×1 then 3×3 conv+BN; channel width changes in the 1×1 projection.
#[derive(Debug, Clone)]
pub struct Transition {
    pub proj: ConvBn,
    pub conv: ConvBn,
}

impl Transition {
    fn register(store: &mut ParamStore, prefix: &str, c_in: usize, c_out: usize) -> Result<Self> {
        Ok(Self {
            proj: ConvBn::register(store, &format!("{prefix}.proj"), 1, c_in, c_out)?,
            conv: ConvBn::register(store, &format!("{prefix}.conv"), 3, c_out, c_out)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EncoderStage {
    pub down: Transition,
    pub block: DualMrb,
}

#[derive(Debug, Clone)]
pub struct DecoderStage {
    pub block: DualMrb,
    pub up: Transition,
}

/// One row of [`Network::summary`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSummary {
    pub name: String,
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub params: usize,
}

#[derive(Debug, Clone)]
pub struct Network {
    config: NetworkConfig,
    store: ParamStore,
    stem: ConvBn,
    encoder: [EncoderStage; 3],
    decoder: [DecoderStage; 3],
    head: [ConvBn; 2],
}

#[derive(Debug)]
struct EncoderTape {
    proj: ConvBnCache,
    conv: ConvBnCache,
    pre_relu: Tensor4,
    pool: PoolIndices,
    block: Option<BlockCache>,
}

#[derive(Debug)]
struct DecoderTape {
    block: Option<BlockCache>,
    proj: ConvBnCache,
    conv: ConvBnCache,
    pre_relu: Tensor4,
}

/// Everything the backward pass needs from one training-mode forward pass.
/// Consumed by [`Network::backward`].
#[derive(Debug)]
pub struct Tape {
    input_dims: Dims,
    stem: ConvBnCache,
    stem_pre: Tensor4,
    encoder: Vec<EncoderTape>,
    decoder: Vec<DecoderTape>,
    head_mid: ConvBnCache,
    head_out: ConvBnCache,
    logits_pre: Tensor4,
    probs: Tensor4,
}

/// Spatial dims observed during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trace {
    pub stem: Dims,
    pub encoder: [Dims; 3],
    pub decoder: [Dims; 3],
}

fn need<T>(v: Option<T>) -> Result<T> {
    v.ok_or_else(|| Error::InvalidArgument("backward requires a tape recorded in training mode".into()))
}

/// Builds and initializes a network from `config` (weights drawn from `config.seed`).
pub fn build_network(config: NetworkConfig) -> Result<Network> {
    Network::new(config)
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let [c1, c2, c3] = config.stage_widths;
        let widths = [c1, c2, c3];
        let stem = ConvBn::register(&mut store, "stem", 1, config.in_channels, config.stem_width)?;

        let mut prev = config.stem_width;
        let mut enc = Vec::with_capacity(3);
        for (i, &c) in widths.iter().enumerate() {
            let down = Transition::register(&mut store, &format!("enc{}.down", i + 1), prev, c)?;
            let block = DualMrb::register(&mut store, &format!("enc{}.block", i + 1), c)?;
            enc.push(EncoderStage { down, block });
            prev = c;
        }

        let mut dec: Vec<Option<DecoderStage>> = vec![None, None, None];
        for i in (0..3).rev() {
            let next = if i == 0 { config.stem_width } else { widths[i - 1] };
            let block = DualMrb::register(&mut store, &format!("dec{}.block", i + 1), widths[i])?;
            let up = Transition::register(&mut store, &format!("dec{}.up", i + 1), widths[i], next)?;
            dec[i] = Some(DecoderStage { block, up });
        }

        let head = [
            ConvBn::register(&mut store, "head.mid", 3, config.stem_width, config.stem_width)?,
            ConvBn::register(&mut store, "head.out", 3, config.stem_width, config.num_classes)?,
        ];

        let encoder: [EncoderStage; 3] = enc.try_into().expect("three encoder stages");
        let decoder: [DecoderStage; 3] = dec
            .into_iter()
            .map(|d| d.expect("decoder stage registered"))
            .collect::<Vec<_>>()
            .try_into()
            .expect("three decoder stages");

        let mut net = Self {
            config,
            store,
            stem,
            encoder,
            decoder,
            head,
        };
        net.init_weights(config.seed);
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder(&self) -> &[EncoderStage; 3] {
        &self.encoder
    }

    pub fn decoder(&self) -> &[DecoderStage; 3] {
        &self.decoder
    }

    /// He-normal conv weights, `N(0, 2/fan_in)`, drawn in registration order;
    /// BN scale 1, shift 0, running mean 0, running variance 1.
    pub fn init_weights(&mut self, seed: u64) {
        let mut rng = stream(seed, Stream::Init);
        for p in self.store.iter_mut() {
            match p.kind {
                ParamKind::ConvWeight => {
                    let d = p.value.dims();
                    let std = (2.0 / (d.c * d.h * d.w) as f64).sqrt();
                    let normal = Normal::new(0.0, std).expect("finite std");
                    for v in p.value.data_mut() {
                        *v = normal.sample(&mut rng) as f32;
                    }
                }
                ParamKind::BnGamma | ParamKind::BnRunningVar => p.value.data_mut().fill(1.0),
                ParamKind::BnBeta | ParamKind::BnRunningMean => p.value.data_mut().fill(0.0),
            }
        }
        self.config.seed = seed;
    }

    /// `(trainable, total)`; total includes BN running statistics.
    pub fn count_params(&self) -> (usize, usize) {
        (self.store.trainable_count(), self.store.total_count())
    }

    fn conv_layers(&self) -> Vec<&ConvBn> {
        let mut v = vec![&self.stem];
        for s in &self.encoder {
            v.extend([&s.down.proj, &s.down.conv]);
            v.extend(s.block.layers());
        }
        for s in self.decoder.iter().rev() {
            v.extend(s.block.layers());
            v.extend([&s.up.proj, &s.up.conv]);
        }
        v.extend(self.head.iter());
        v
    }

    /// Per-layer table in execution order.
    pub fn summary(&self) -> Vec<LayerSummary> {
        self.conv_layers()
            .into_iter()
            .map(|l| LayerSummary {
                name: l.name.clone(),
                kernel: l.kernel,
                c_in: l.c_in,
                c_out: l.c_out,
                params: l.trainable_count(),
            })
            .collect()
    }

    fn check_input(&self, x: &Tensor4) -> Result<()> {
        let d = x.dims();
        if d.n == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if d.c != self.config.in_channels {
            return Err(Error::Shape(format!(
                "network expects {} input channels, got {}",
                self.config.in_channels, d.c
            )));
        }
        if d.h == 0 || d.w == 0 || d.h % SPATIAL_DIVISOR != 0 || d.w % SPATIAL_DIVISOR != 0 {
            return Err(Error::Shape(format!(
                "spatial dims must be divisible by {SPATIAL_DIVISOR} (got {}x{})",
                d.h, d.w
            )));
        }
        x.ensure_finite("network input")
    }

    /// Inference-mode forward pass; returns per-pixel class probabilities.
    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check_input(x)?;
        let (probs, _, _) = self.run(x, &mut Pass::Infer)?;
        Ok(probs)
    }

    /// Inference-mode forward pass that also reports intermediate dims.
    pub fn trace(&self, x: &Tensor4) -> Result<(Tensor4, Trace)> {
        self.check_input(x)?;
        let (probs, trace, _) = self.run(x, &mut Pass::Infer)?;
        Ok((probs, trace))
    }

    /// Training-mode forward pass: batch statistics are used and folded into
    /// the running statistics; the returned tape feeds [`Network::backward`].
    pub fn forward_train(&mut self, x: &Tensor4) -> Result<(Tensor4, Tape)> {
        self.check_input(x)?;
        let mut pass = Pass::new(Mode::Train);
        let (probs, _, tape) = self.run(x, &mut pass)?;
        pass.apply(&mut self.store);
        Ok((probs, need(tape)?))
    }

    fn run(&self, x: &Tensor4, pass: &mut Pass) -> Result<(Tensor4, Trace, Option<Tape>)> {
        let store = &self.store;
        let train = pass.is_train();

        let (stem_pre, stem_cache) = self.stem.forward(store, x, pass)?;
        let f1 = relu(&stem_pre);

        let mut h = f1.clone();
        let mut skips = Vec::with_capacity(3);
        let mut enc_tapes = Vec::with_capacity(3);
        let mut enc_dims = [Dims::default(); 3];
        for (i, stage) in self.encoder.iter().enumerate() {
            let (a, c_proj) = stage.down.proj.forward(store, &h, pass)?;
            let (b, c_conv) = stage.down.conv.forward(store, &a, pass)?;
            let (pooled, idx) = maxpool2x2(&relu(&b))?;
            let (out, s1, c_block) = stage.block.forward_pass(store, &pooled, None, pass)?;
            enc_dims[i] = out.dims();
            skips.push(s1);
            if train {
                enc_tapes.push(EncoderTape {
                    proj: c_proj,
                    conv: c_conv,
                    pre_relu: b,
                    pool: idx,
                    block: c_block,
                });
            }
            h = out;
        }

        let mut dec_tapes = Vec::with_capacity(3);
        let mut dec_dims = [Dims::default(); 3];
        for i in (0..3).rev() {
            let stage = &self.decoder[i];
            let skip = skips.pop().expect("one skip per encoder stage");
            let (o, _, c_block) = stage.block.forward_pass(store, &h, Some(&skip), pass)?;
            let (a, c_proj) = stage.up.proj.forward(store, &upsample2x_nearest(&o), pass)?;
            let (b, c_conv) = stage.up.conv.forward(store, &a, pass)?;
            h = relu(&b);
            dec_dims[i] = h.dims();
            if train {
                dec_tapes.push(DecoderTape {
                    block: c_block,
                    proj: c_proj,
                    conv: c_conv,
                    pre_relu: b,
                });
            }
        }

        let (mut g, c_mid) = self.head[0].forward(store, &h, pass)?;
        g.add_assign(&f1);
        let (z, c_out) = self.head[1].forward(store, &g, pass)?;
        let probs = softmax_channel(&relu(&z))?;

        let trace = Trace {
            stem: f1.dims(),
            encoder: enc_dims,
            decoder: dec_dims,
        };
        let tape = train.then(|| Tape {
            input_dims: x.dims(),
            stem: stem_cache,
            stem_pre,
            encoder: enc_tapes,
            decoder: dec_tapes,
            head_mid: c_mid,
            head_out: c_out,
            logits_pre: z,
            probs: probs.clone(),
        });
        Ok((probs, trace, tape))
    }

    /// Gradients of a scalar loss with respect to every trainable parameter,
    /// given the loss gradient with respect to the output probabilities.
    pub fn backward(&self, tape: Tape, grad_probs: &Tensor4) -> Result<Gradients> {
        grad_probs.ensure_dims(tape.probs.dims(), "loss gradient")?;
        let store = &self.store;
        let mut grads = Gradients::zeros_like(store);

        let d_r = softmax_backward(&tape.probs, grad_probs)?;
        let d_z = relu_backward(&tape.logits_pre, &d_r)?;
        let d_g = self.head[1].backward(store, tape.head_out, &d_z, &mut grads)?;
        let mut d_f1 = d_g.clone();
        let mut d_h = self.head[0].backward(store, tape.head_mid, &d_g, &mut grads)?;

        // Decoder tapes were pushed deepest first; walk them in reverse execution order.
        let mut d_skips: Vec<Option<Tensor4>> = vec![None, None, None];
        for (i, t) in (0..3).zip(tape.decoder.into_iter().rev()) {
            let stage = &self.decoder[i];
            let d_b = relu_backward(&t.pre_relu, &d_h)?;
            let d_a = stage.up.conv.backward(store, t.conv, &d_b, &mut grads)?;
            let d_u = stage.up.proj.backward(store, t.proj, &d_a, &mut grads)?;
            let d_o = upsample2x_backward(&d_u)?;
            let (d_x, d_skip) = stage.block.backward(store, need(t.block)?, &d_o, None, &mut grads)?;
            d_skips[i] = d_skip;
            d_h = d_x;
        }

        for (i, t) in tape.encoder.into_iter().enumerate().rev() {
            let stage = &self.encoder[i];
            let (d_pooled, _) = stage
                .block
                .backward(store, need(t.block)?, &d_h, d_skips[i].as_ref(), &mut grads)?;
            let d_r = maxpool2x2_backward(&t.pool, &d_pooled)?;
            let d_b = relu_backward(&t.pre_relu, &d_r)?;
            let d_a = stage.down.conv.backward(store, t.conv, &d_b, &mut grads)?;
            d_h = stage.down.proj.backward(store, t.proj, &d_a, &mut grads)?;
        }

        d_f1.add_assign(&d_h);
        let d_stem = relu_backward(&tape.stem_pre, &d_f1)?;
        let d_x = self.stem.backward(store, tape.stem, &d_stem, &mut grads)?;
        debug_assert_eq!(d_x.dims(), tape.input_dims);
        Ok(grads)
    }
}
