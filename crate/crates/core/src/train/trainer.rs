use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::arch::Network;
use crate::error::{Error, Result};
use crate::infer::predict_probs;
use crate::mask::{one_hot, Mask};
use crate::metrics::{compute_metrics, confusion, ConfusionCounts};
use crate::par::map_range;
use crate::rng::{stream, Stream};
use crate::tensor::Tensor4;
use crate::train::{
    adam_step, augment, dice_loss, extract_patches, resize_bilinear, resize_nearest, split_dataset, zscore_normalize,
    AdamConfig, AdamState, AugmentPolicy,
};

/// One image with its ground truth, optional field of view, and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// (1, c, h, w) with values in [0, 1].
    pub image: Tensor4,
    pub mask: Mask,
    pub fov: Option<Mask>,
    pub source: PathBuf,
}

impl Sample {
    pub fn new(image: Tensor4, mask: Mask, fov: Option<Mask>, source: impl Into<PathBuf>) -> Result<Self> {
        let source = source.into();
        let d = image.dims();
        let aligned = |m: &Mask| m.height() == d.h && m.width() == d.w;
        if d.n != 1 || !aligned(&mask) || !fov.as_ref().is_none_or(aligned) {
            return Err(Error::Sample {
                path: source,
                source: Box::new(Error::Shape(format!("image {d} is not aligned with its mask or fov"))),
            });
        }
        Ok(Self { image, mask, fov, source })
    }

    pub(crate) fn wrap(&self, e: Error) -> Error {
        match e {
            Error::Sample { .. } => e,
            e => Error::Sample {
                path: self.source.clone(),
                source: Box::new(e),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    /// Multiplies the learning rate after every epoch.
    pub lr_decay: f32,
    pub seed: u64,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
    pub augment: Option<AugmentPolicy>,
    /// Fraction of samples kept for training by [`fit`].
    pub split_ratio: f64,
    /// Resize every sample to (height, width) before tiling.
    pub input_size: Option<(usize, usize)>,
    pub patch_size: Option<usize>,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_iterations: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 2,
            lr: 2e-5,
            lr_decay: 0.9,
            seed: 0,
            checkpoint_every: 0,
            checkpoint_dir: None,
            augment: None,
            split_ratio: 0.8,
            input_size: None,
            patch_size: None,
            max_iterations: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        // lr = 0 is allowed so that a run can record losses with frozen weights.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad(format!("lr_decay must be in (0, 1], got {}", self.lr_decay));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split_ratio must be in (0, 1), got {}", self.split_ratio));
        }
        if self.checkpoint_every > 0 && self.checkpoint_dir.is_none() {
            return bad("checkpoint_every is set but checkpoint_dir is not".into());
        }
        if let Some((h, w)) = self.input_size {
            if h == 0 || w == 0 {
                return bad(format!("input_size {h}x{w} is empty"));
            }
        }
        if let Some(p) = &self.augment {
            p.validate()?;
        }
        Ok(())
    }
}

/// Learning rate, mean losses and validation F1 for one epoch. Validation
/// fields are `None` when there is no validation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f32,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_f1: Option<f64>,
    pub iterations: usize,
}

pub fn write_history_csv<W: Write>(mut w: W, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(w, "epoch,lr,train_loss,val_loss,val_f1")?;
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| v.to_string());
    for r in history {
        writeln!(w, "{},{},{},{},{}", r.epoch, r.lr, r.train_loss, opt(r.val_loss), opt(r.val_f1))?;
    }
    Ok(())
}

/// Resizes to `input_size` and then tiles into `patch_size` squares, as configured.
pub fn prepare_samples(samples: &[Sample], config: &TrainConfig) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let s = match config.input_size {
            Some((h, w)) => Sample {
                image: resize_bilinear(&s.image, h, w).map_err(|e| s.wrap(e))?,
                mask: resize_nearest(&s.mask, h, w)?,
                fov: s.fov.as_ref().map(|f| resize_nearest(f, h, w)).transpose()?,
                source: s.source.clone(),
            },
            None => s.clone(),
        };
        match config.patch_size {
            None => out.push(s),
            Some(size) => {
                let images = extract_patches(&s.image, size)?;
                let masks = extract_patches(&s.mask.to_tensor(), size)?;
                let fovs = s.fov.as_ref().map(|f| extract_patches(&f.to_tensor(), size)).transpose()?;
                for (k, (img, m)) in images.into_iter().zip(masks).enumerate() {
                    out.push(Sample {
                        image: img.data,
                        mask: Mask::from_tensor(&m.data),
                        fov: fovs.as_ref().map(|f| Mask::from_tensor(&f[k].data)),
                        source: s.source.clone(),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Splits `samples` by `config.split_ratio` and trains on the first part.
pub fn fit(net: &mut Network, samples: &[Sample], config: &TrainConfig) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    let (tr, va) = split_dataset((0..samples.len()).collect(), config.split_ratio, config.seed)?;
    let pick = |idx: Vec<usize>| idx.into_iter().map(|i| samples[i].clone()).collect::<Vec<_>>();
    let (tr, va) = (pick(tr), pick(va));
    log::info!("training on {} samples, validating on {}", tr.len(), va.len());
    train(net, &tr, &va, config)
}

/// Runs the optimisation loop: per epoch shuffle, normalise, augment,
/// forward, dice loss, backward and one ADAM step per batch, then validate
/// and decay the learning rate.
pub fn train(
    net: &mut Network,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    config.validate()?;
    let first = train_set
        .first()
        .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
    let d0 = first.image.dims();
    for s in train_set {
        if s.image.dims() != d0 {
            return Err(s.wrap(Error::Shape(format!(
                "training images must share one size ({} vs {d0}); set input_size or patch_size",
                s.image.dims()
            ))));
        }
    }

    let mut adam = AdamState::new(net.store(), AdamConfig::with_lr(config.lr));
    let mut order_rng = stream(config.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut iterations = 0usize;
    let mut history = Vec::with_capacity(config.epochs);
    let budget_left = |it: usize| config.max_iterations.is_none_or(|m| it < m);

    for epoch in 1..=config.epochs {
        if !budget_left(iterations) {
            break;
        }
        order.shuffle(&mut order_rng);
        let lr = adam.hyper.lr;
        let (mut loss_sum, mut batches) = (0.0f64, 0usize);
        for batch in order.chunks(config.batch_size) {
            if !budget_left(iterations) {
                break;
            }
            let prepared = map_range(batch.len(), |k| {
                let s = &train_set[batch[k]];
                let x = zscore_normalize(&s.image);
                match &config.augment {
                    Some(p) => augment(&x, &s.mask, p, &mut p.sample_rng(epoch, batch[k])).map_err(|e| s.wrap(e)),
                    None => Ok((x, s.mask.clone())),
                }
            });
            let prepared = prepared.into_iter().collect::<Result<Vec<_>>>()?;
            let images: Vec<Tensor4> = prepared.iter().map(|(x, _)| x.clone()).collect();
            let masks: Vec<&Mask> = prepared.iter().map(|(_, m)| m).collect();
            let x = Tensor4::stack(&images)?;
            let target = one_hot(&masks)?;

            let (probs, tape) = net.forward_train(&x)?;
            let (loss, grad) = dice_loss(&probs, &target)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}, iteration {iterations}")));
            }
            let grads = net.backward(tape, &grad)?;
            adam_step(net.store_mut(), &grads, &mut adam)?;
            loss_sum += loss;
            batches += 1;
            iterations += 1;
            log::debug!("epoch {epoch} iteration {iterations} loss {loss:.6}");
        }

        let (val_loss, val_f1) = validate(net, val_set)?;
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / batches.max(1) as f64,
            val_loss,
            val_f1,
            iterations,
        };
        log::info!(
            "epoch {epoch}: lr {lr:.3e} train_loss {:.5} val_loss {} val_f1 {}",
            record.train_loss,
            val_loss.map_or("-".into(), |v| format!("{v:.5}")),
            val_f1.map_or("-".into(), |v| format!("{v:.4}")),
        );
        history.push(record);

        if config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 {
            if let Some(dir) = &config.checkpoint_dir {
                save_checkpoint(net, dir, epoch)?;
            }
        }
        adam.hyper.lr *= config.lr_decay;
    }
    Ok(history)
}

fn save_checkpoint(net: &Network, dir: &Path, epoch: usize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("epoch_{epoch:04}.ldmr"));
    crate::io::save_model(net, &path)?;
    log::info!("wrote checkpoint {}", path.display());
    Ok(())
}

/// Mean per-image dice loss and micro-averaged F1 over the validation set.
fn validate(net: &Network, val_set: &[Sample]) -> Result<(Option<f64>, Option<f64>)> {
    if val_set.is_empty() {
        return Ok((None, None));
    }
    let mut loss = 0.0;
    let mut counts = ConfusionCounts::default();
    for s in val_set {
        let probs = predict_probs(net, &s.image).map_err(|e| s.wrap(e))?;
        loss += dice_loss(&probs, &one_hot(&[&s.mask])?)?.0;
        counts += confusion(&Mask::from_probs(&probs, 0)?, &s.mask, s.fov.as_ref())?;
    }
    let f1 = if counts.total() > 0 { Some(compute_metrics(&counts)?.f1) } else { None };
    Ok((Some(loss / val_set.len() as f64), f1))
}
