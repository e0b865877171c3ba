use std::io::Write;

use crate::metrics::{Metrics, RocCurve};

/// One line of the dataset evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub dataset: String,
    pub metrics: Metrics,
    pub auc_roc: f64,
    pub auc_formula: f64,
}

pub fn write_eval_csv<W: Write>(mut w: W, rows: &[EvalRow]) -> std::io::Result<()> {
    writeln!(w, "dataset,se,sp,acc,f1,auc_roc,auc_formula")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.dataset, r.metrics.se, r.metrics.sp, r.metrics.acc, r.metrics.f1, r.auc_roc, r.auc_formula
        )?;
    }
    Ok(())
}

pub fn write_roc_csv<W: Write>(mut w: W, curve: &RocCurve) -> std::io::Result<()> {
    writeln!(w, "threshold,fpr,tpr")?;
    for p in &curve.points {
        writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    Ok(())
}
