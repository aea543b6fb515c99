//! Scene-flow evaluation: end-point error, strict/relaxed accuracy, and
//! outlier fraction, computed over a caller-supplied index mask.

use crate::error::{Error, Result};
use crate::flowinit::{FlowField, LabelSet};

/// Aggregated flow-error statistics over the evaluated points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMetrics {
    pub epe: f64,
    pub acc_strict: f64,
    pub acc_relax: f64,
    pub outliers: f64,
    pub n_evaluated: usize,
}

impl FlowMetrics {
    /// Single-line record: `epe=<f> as=<f> ar=<f> out=<f> n=<d>`.
    pub fn to_line(&self) -> String {
        format!(
            "epe={:.6} as={:.6} ar={:.6} out={:.6} n={}",
            self.epe, self.acc_strict, self.acc_relax, self.outliers, self.n_evaluated
        )
    }

    /// Machine-readable key-value block.
    pub fn to_kv_block(&self) -> String {
        format!(
            "epe={}\nacc_strict={}\nacc_relax={}\noutliers={}\nn_evaluated={}\n",
            self.epe, self.acc_strict, self.acc_relax, self.outliers, self.n_evaluated
        )
    }
}

/// Per-point error norm and relative error. Relative error is 0 when both
/// the error and the ground-truth norm are 0, infinite when only the
/// ground-truth norm is 0.
fn point_errors(pred: [f64; 3], gt: [f64; 3]) -> (f64, f64) {
    let e = ((pred[0] - gt[0]).powi(2) + (pred[1] - gt[1]).powi(2) + (pred[2] - gt[2]).powi(2)).sqrt();
    let gt_norm = (gt[0] * gt[0] + gt[1] * gt[1] + gt[2] * gt[2]).sqrt();
    let rel = if gt_norm > 0.0 {
        e / gt_norm
    } else if e == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    (e, rel)
}

/// Evaluate predicted flow against ground truth over `mask`. Thresholds are
/// strict inequalities: strict accuracy (< 0.05 m or < 5%), relaxed accuracy
/// (< 0.1 m or < 10%), outliers (> 0.3 m or > 10%).
pub fn evaluate(pred: &FlowField, gt: &FlowField, mask: &[usize]) -> Result<FlowMetrics> {
    if pred.len() != gt.len() {
        return Err(Error::Contract(format!(
            "evaluate: predicted {} flows vs {} ground truth",
            pred.len(),
            gt.len()
        )));
    }
    if mask.is_empty() {
        return Err(Error::Contract("evaluate: empty evaluation mask".into()));
    }
    let mut sum_e = 0.0;
    let mut n_as = 0usize;
    let mut n_ar = 0usize;
    let mut n_out = 0usize;
    for &i in mask {
        if i >= pred.len() {
            return Err(Error::Contract(format!("evaluate: mask index {i} out of range")));
        }
        let (e, rel) = point_errors(pred[i], gt[i]);
        sum_e += e;
        if e < 0.05 || rel < 0.05 {
            n_as += 1;
        }
        if e < 0.1 || rel < 0.1 {
            n_ar += 1;
        }
        if e > 0.3 || rel > 0.1 {
            n_out += 1;
        }
    }
    let n = mask.len() as f64;
    Ok(FlowMetrics {
        epe: sum_e / n,
        acc_strict: n_as as f64 / n,
        acc_relax: n_ar as f64 / n,
        outliers: n_out as f64 / n,
        n_evaluated: mask.len(),
    })
}

/// Complement of the labeled indices: the evaluation protocol excludes known
/// labels from the metrics.
pub fn exclude_labels_mask(n: usize, labels: &LabelSet) -> Result<Vec<usize>> {
    let mask = labels.unlabeled_indices(n);
    if mask.is_empty() {
        return Err(Error::Contract("all points are labeled; nothing to evaluate".into()));
    }
    Ok(mask)
}
