//! Pixel-level evaluation: confusion counts, Se/Sp/Acc/F1, the closed-form
//! single-threshold AUC, and threshold-swept ROC curves.

mod report;
mod roc;

pub use report::{write_eval_csv, write_roc_csv, EvalRow};
pub use roc::{roc_auc, RocAccumulator, RocCurve, RocPoint, DEFAULT_ROC_THRESHOLDS};

use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::mask::Mask;

/// Pixel tallies over the evaluated region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

impl Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            fn_: self.fn_ + o.fn_,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

pub(crate) fn check_fov(gt: &Mask, fov: Option<&Mask>) -> Result<()> {
    match fov {
        Some(f) if !f.same_dims(gt) => Err(Error::Shape(format!(
            "FOV mask is {}x{}, ground truth is {}x{}",
            f.height(),
            f.width(),
            gt.height(),
            gt.width()
        ))),
        _ => Ok(()),
    }
}

/// Counts TP/FP/TN/FN over pixels inside `fov` (all pixels when `None`).
pub fn confusion(pred: &Mask, gt: &Mask, fov: Option<&Mask>) -> Result<ConfusionCounts> {
    if !pred.same_dims(gt) {
        return Err(Error::Shape(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    check_fov(gt, fov)?;
    let mut c = ConfusionCounts::default();
    let inside = |i: usize| fov.is_none_or(|f| f.data()[i] != 0);
    for (i, (&p, &g)) in pred.data().iter().zip(gt.data()).enumerate() {
        if !inside(i) {
            continue;
        }
        match (p != 0, g != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Flags for ratios whose denominator was zero and were reported as 1.0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MetricWarnings {
    pub se_undefined: bool,
    pub sp_undefined: bool,
    pub f1_undefined: bool,
}

impl MetricWarnings {
    pub fn any(&self) -> bool {
        self.se_undefined || self.sp_undefined || self.f1_undefined
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub se: f64,
    pub sp: f64,
    pub acc: f64,
    pub f1: f64,
    pub warnings: MetricWarnings,
}

fn ratio(num: u64, den: u64, undefined: &mut bool) -> f64 {
    if den == 0 {
        *undefined = true;
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Se = TP/(TP+FN), Sp = TN/(TN+FP), Acc = (TP+TN)/total, F1 = 2TP/(2TP+FP+FN).
/// A 0/0 ratio is reported as 1.0 and flagged in `warnings`.
pub fn compute_metrics(c: &ConfusionCounts) -> Result<Metrics> {
    if c.total() == 0 {
        return Err(Error::InvalidArgument("no pixels were counted".into()));
    }
    let mut w = MetricWarnings::default();
    let se = ratio(c.tp, c.tp + c.fn_, &mut w.se_undefined);
    let sp = ratio(c.tn, c.tn + c.fp, &mut w.sp_undefined);
    let f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_, &mut w.f1_undefined);
    let acc = (c.tp + c.tn) as f64 / c.total() as f64;
    if w.any() {
        log::warn!("undefined metric ratio reported as 1.0: {w:?} for {c:?}");
    }
    Ok(Metrics {
        se,
        sp,
        acc,
        f1,
        warnings: w,
    })
}

/// Single-operating-point AUC: `1 − ½(FP/(FP+TN) + FN/(FN+TP))`.
pub fn auc_formula(c: &ConfusionCounts) -> Result<f64> {
    if c.positives() == 0 || c.negatives() == 0 {
        return Err(Error::InvalidArgument(
            "AUC needs both foreground and background pixels".into(),
        ));
    }
    let fpr = c.fp as f64 / (c.fp + c.tn) as f64;
    let fnr = c.fn_ as f64 / (c.fn_ + c.tp) as f64;
    Ok(1.0 - 0.5 * (fpr + fnr))
}
