//! ROC sweep over uniformly spaced thresholds `1, (T−2)/(T−1), …, 0`.
//!
//! A pixel with score `s` is predicted positive at threshold `t` iff `s ≥ t`.
//! Scores are binned once by the first threshold at which they turn positive,
//! so a sweep costs one pass over the pixels plus `O(T)`.

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::metrics::check_fov;
use crate::tensor::Tensor4;

pub const DEFAULT_ROC_THRESHOLDS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// Points ordered by strictly decreasing threshold, starting at (0, 0) with an
/// infinite threshold and ending at (1, 1) with threshold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    /// Trapezoidal area under TPR(FPR).
    pub fn auc(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) * 0.5)
            .sum()
    }
}

/// Score histograms accumulated over any number of images.
#[derive(Debug, Clone)]
pub struct RocAccumulator {
    thresholds: usize,
    pos: Vec<u64>,
    neg: Vec<u64>,
}

impl RocAccumulator {
    pub fn new(thresholds: usize) -> Result<Self> {
        if thresholds < 2 {
            return Err(Error::InvalidArgument(format!(
                "ROC needs at least 2 thresholds, got {thresholds}"
            )));
        }
        Ok(Self {
            thresholds,
            pos: vec![0; thresholds],
            neg: vec![0; thresholds],
        })
    }

    fn threshold(&self, k: usize) -> f64 {
        let last = (self.thresholds - 1) as f64;
        (last - k as f64) / last
    }

    /// Smallest threshold index whose threshold is `≤ s`.
    fn first_positive(&self, s: f64) -> usize {
        let last = self.thresholds - 1;
        let mut k = (((1.0 - s) * last as f64).ceil().max(0.0) as usize).min(last);
        while k > 0 && self.threshold(k - 1) <= s {
            k -= 1;
        }
        while self.threshold(k) > s {
            k += 1;
        }
        k
    }

    /// Adds one image's foreground scores (row-major, same length as `gt`).
    pub fn add(&mut self, scores: &[f32], gt: &Mask, fov: Option<&Mask>) -> Result<()> {
        if scores.len() != gt.len() {
            return Err(Error::Shape(format!(
                "{} scores for a mask of {} pixels",
                scores.len(),
                gt.len()
            )));
        }
        check_fov(gt, fov)?;
        for (i, (&s, &g)) in scores.iter().zip(gt.data()).enumerate() {
            if fov.is_some_and(|f| f.data()[i] == 0) {
                continue;
            }
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidArgument(format!("score {s} outside [0, 1]")));
            }
            let k = self.first_positive(s as f64);
            if g != 0 {
                self.pos[k] += 1;
            } else {
                self.neg[k] += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &RocAccumulator) -> Result<()> {
        if other.thresholds != self.thresholds {
            return Err(Error::InvalidArgument("ROC accumulators use different thresholds".into()));
        }
        for (a, b) in self.pos.iter_mut().zip(&other.pos) {
            *a += b;
        }
        for (a, b) in self.neg.iter_mut().zip(&other.neg) {
            *a += b;
        }
        Ok(())
    }

    pub fn finish(&self) -> Result<(RocCurve, f64)> {
        let p: u64 = self.pos.iter().sum();
        let n: u64 = self.neg.iter().sum();
        if p == 0 || n == 0 {
            return Err(Error::InvalidArgument(
                "ROC needs both foreground and background pixels".into(),
            ));
        }
        let mut points = Vec::with_capacity(self.thresholds + 1);
        points.push(RocPoint {
            threshold: f64::INFINITY,
            fpr: 0.0,
            tpr: 0.0,
        });
        let (mut tp, mut fp) = (0u64, 0u64);
        for k in 0..self.thresholds {
            tp += self.pos[k];
            fp += self.neg[k];
            points.push(RocPoint {
                threshold: self.threshold(k),
                fpr: fp as f64 / n as f64,
                tpr: tp as f64 / p as f64,
            });
        }
        let curve = RocCurve { points };
        let auc = curve.auc();
        Ok((curve, auc))
    }
}

/// ROC curve and trapezoidal AUC of foreground probabilities against `gt`.
pub fn roc_auc(fg_probs: &Tensor4, gt: &Mask, fov: Option<&Mask>, thresholds: usize) -> Result<(RocCurve, f64)> {
    let mut acc = RocAccumulator::new(thresholds)?;
    acc.add(fg_probs.data(), gt, fov)?;
    acc.finish()
}
