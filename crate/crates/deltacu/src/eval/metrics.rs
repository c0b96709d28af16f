//! Estimator error metrics: bias/MSE/Std over replicate ensembles, threshold
//! classification rates, and ROC/AUC.
//!
//! A replicate is a (estimate, truth) pair of condom-use changes. Truths are
//! classified positive when `truth > T` (strict); estimates flag positive
//! when `estimate > t` (strict).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub n: usize,
    pub bias: f64,
    pub mse: f64,
    /// `sqrt(mse - bias^2)`: the standard deviation of the estimation error.
    pub std: f64,
}

/// Mean error, mean squared error, and residual standard deviation of
/// paired estimates and truths.
pub fn error_metrics(estimates: &[f64], truths: &[f64]) -> Result<ErrorMetrics> {
    if estimates.is_empty() || estimates.len() != truths.len() {
        return Err(Error::Config(format!(
            "error_metrics needs equal-length non-empty inputs, got {} and {}",
            estimates.len(),
            truths.len()
        )));
    }
    let n = estimates.len() as f64;
    let mut bias = 0.0;
    let mut mse = 0.0;
    for (&e, &t) in estimates.iter().zip(truths) {
        let d = e - t;
        bias += d;
        mse += d * d;
    }
    bias /= n;
    mse /= n;
    let var = (mse - bias * bias).max(0.0);
    Ok(ErrorMetrics { n: estimates.len(), bias, mse, std: var.sqrt() })
}

fn split_counts(
    estimates: &[f64],
    truths: &[f64],
    t_truth: f64,
    t_decision: f64,
) -> (usize, usize, usize, usize) {
    // (true positives, positives, true negatives, negatives)
    let mut tp = 0;
    let mut pos = 0;
    let mut tn = 0;
    let mut neg = 0;
    for (&e, &t) in estimates.iter().zip(truths) {
        if t > t_truth {
            pos += 1;
            if e > t_decision {
                tp += 1;
            }
        } else {
            neg += 1;
            if e <= t_decision {
                tn += 1;
            }
        }
    }
    (tp, pos, tn, neg)
}

/// Sensitivity `#(estimate > t, truth > T) / #(truth > T)` and specificity
/// `#(estimate <= t, truth <= T) / #(truth <= T)`.
pub fn sensitivity_specificity(
    estimates: &[f64],
    truths: &[f64],
    t_truth: f64,
    t_decision: f64,
) -> Result<(f64, f64)> {
    if estimates.len() != truths.len() {
        return Err(Error::Config("estimates/truths length mismatch".into()));
    }
    let (tp, pos, tn, neg) = split_counts(estimates, truths, t_truth, t_decision);
    if pos == 0 || neg == 0 {
        return Err(Error::Data(format!(
            "sensitivity/specificity undefined: {pos} positives, {neg} negatives at T={t_truth}"
        )));
    }
    Ok((tp as f64 / pos as f64, tn as f64 / neg as f64))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    /// 1 - specificity.
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve over every distinct estimate value (plus infinite sentinels)
/// and its trapezoidal area. Ties receive half credit, so the area equals
/// the Mann-Whitney statistic of positives versus negatives.
pub fn roc_auc(
    estimates: &[f64],
    truths: &[f64],
    t_truth: f64,
) -> Result<(Vec<RocPoint>, f64)> {
    if estimates.len() != truths.len() {
        return Err(Error::Config("estimates/truths length mismatch".into()));
    }
    let pos = truths.iter().filter(|&&t| t > t_truth).count();
    let neg = truths.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Data(format!(
            "ROC undefined: {pos} positives, {neg} negatives at T={t_truth}"
        )));
    }

    let mut cuts: Vec<f64> = estimates.to_vec();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut points = Vec::with_capacity(cuts.len() + 2);
    points.push(RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 });
    for &cut in cuts.iter().rev() {
        let mut tp = 0;
        let mut fp = 0;
        for (&e, &t) in estimates.iter().zip(truths) {
            if e > cut {
                if t > t_truth {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
        }
        points.push(RocPoint {
            threshold: cut,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    points.push(RocPoint { threshold: f64::NEG_INFINITY, fpr: 1.0, tpr: 1.0 });

    let mut auc = 0.0;
    for w in points.windows(2) {
        auc += (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) * 0.5;
    }
    Ok((points, auc))
}
