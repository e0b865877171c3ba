//! Whole-image prediction and dataset evaluation.

use crate::arch::{Network, SPATIAL_DIVISOR};
use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::metrics::{auc_formula, compute_metrics, confusion, ConfusionCounts, Metrics, RocAccumulator, RocCurve};
use crate::tensor::Tensor4;
use crate::train::{zscore_normalize, Sample, FOREGROUND};

/// Zero-pads bottom and right so height and width are multiples of `m`.
pub fn pad_to_multiple(t: &Tensor4, m: usize) -> Tensor4 {
    let d = t.dims();
    let (h, w) = (d.h.div_ceil(m) * m, d.w.div_ceil(m) * m);
    if (h, w) == (d.h, d.w) {
        return t.clone();
    }
    Tensor4::from_fn([d.n, d.c, h, w], |n, c, y, x| if y < d.h && x < d.w { t.get(n, c, y, x) } else { 0.0 })
}

/// Top-left `height × width` window.
pub fn crop(t: &Tensor4, height: usize, width: usize) -> Tensor4 {
    let d = t.dims();
    Tensor4::from_fn([d.n, d.c, height.min(d.h), width.min(d.w)], |n, c, y, x| t.get(n, c, y, x))
}

/// Class probabilities for a raw image: z-score, pad to the spatial divisor,
/// infer-mode forward, crop back.
pub fn predict_probs(net: &Network, image: &Tensor4) -> Result<Tensor4> {
    let d = image.dims();
    if d.h == 0 || d.w == 0 {
        return Err(Error::Shape(format!("cannot predict on empty image {d}")));
    }
    let x = pad_to_multiple(&zscore_normalize(image), SPATIAL_DIVISOR);
    let probs = net.forward(&x)?;
    Ok(crop(&probs, d.h, d.w))
}

pub fn predict_mask(net: &Network, image: &Tensor4) -> Result<Mask> {
    Mask::from_probs(&predict_probs(net, image)?, 0)
}

/// Dataset-level results with counts summed over every image before taking ratios.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub auc_formula: f64,
    pub roc: RocCurve,
    pub auc_roc: f64,
}

pub fn evaluate(net: &Network, samples: &[Sample], thresholds: usize) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("nothing to evaluate".into()));
    }
    let mut counts = ConfusionCounts::default();
    let mut roc = RocAccumulator::new(thresholds)?;
    for s in samples {
        let probs = predict_probs(net, &s.image).map_err(|e| s.wrap(e))?;
        let pred = Mask::from_probs(&probs, 0)?;
        counts += confusion(&pred, &s.mask, s.fov.as_ref()).map_err(|e| s.wrap(e))?;
        roc.add(probs.plane(0, FOREGROUND), &s.mask, s.fov.as_ref())?;
    }
    let (roc, auc_roc) = roc.finish()?;
    Ok(Evaluation {
        metrics: compute_metrics(&counts)?,
        auc_formula: auc_formula(&counts)?,
        counts,
        roc,
        auc_roc,
    })
}
