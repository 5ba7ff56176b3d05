//! Regression and ranking metrics: MSE, concordance index, r_m^2, AUPR, and the pKd transform.

use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

/// Binder threshold on the pKd scale.
pub const DAVIS_THRESHOLD: f64 = 7.0;
/// Binder threshold on the KIBA score scale.
pub const KIBA_THRESHOLD: f64 = 12.1;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("{preds} predictions but {labels} labels")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("all labels are equal; no comparable pairs")]
    AllLabelsEqual,
    #[error("degenerate variance (need at least 3 points with spread in both vectors)")]
    DegenerateVariance,
    #[error("Kd must be positive, got {0}")]
    NonPositiveKd(f64),
    #[error("only one class present after thresholding")]
    SingleClass,
}

fn check_lengths(preds: &[f64], labels: &[f64]) -> Result<(), MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            labels: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::EmptyBatch);
    }
    Ok(())
}

pub fn mse(preds: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(preds, labels)?;
    let s: f64 = preds.iter().zip(labels).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(s / preds.len() as f64)
}

/// `pKd = -log10(Kd / 1e9)` for `Kd` in nM, evaluated as `9 - log10(Kd)`.
pub fn pkd_transform(kd_nm: f64) -> Result<f64, MetricsError> {
    if kd_nm.is_nan() || kd_nm <= 0.0 {
        return Err(MetricsError::NonPositiveKd(kd_nm));
    }
    Ok(9.0 - kd_nm.log10())
}

/// Fraction of pairs with `y_i > y_j` whose predictions are ordered the same
/// way; prediction ties count one half.
pub fn concordance_index(preds: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(preds, labels)?;
    let n = preds.len();
    // Counts in half-units keep the sum exact and independent of thread scheduling.
    let (half_units, pairs) = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut h, mut z) = (0u64, 0u64);
            for j in 0..n {
                if labels[i] > labels[j] {
                    z += 1;
                    if preds[i] > preds[j] {
                        h += 2;
                    } else if preds[i] == preds[j] {
                        h += 1;
                    }
                }
            }
            (h, z)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    if pairs == 0 {
        return Err(MetricsError::AllLabelsEqual);
    }
    Ok((half_units as f64 / 2.0) / pairs as f64)
}

/// Squared Pearson correlation.
pub fn r_squared(preds: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(preds, labels)?;
    let n = preds.len() as f64;
    let (mf, my) = (preds.iter().sum::<f64>() / n, labels.iter().sum::<f64>() / n);
    let (mut sfy, mut sff, mut syy) = (0.0, 0.0, 0.0);
    for (f, y) in preds.iter().zip(labels) {
        sfy += (f - mf) * (y - my);
        sff += (f - mf) * (f - mf);
        syy += (y - my) * (y - my);
    }
    if preds.len() < 3 || sff == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateVariance);
    }
    Ok(sfy * sfy / (sff * syy))
}

/// Through-origin coefficient of determination with `k = sum(y f) / sum(f^2)`.
pub fn r0_squared(preds: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    check_lengths(preds, labels)?;
    let n = preds.len() as f64;
    let my = labels.iter().sum::<f64>() / n;
    let syf: f64 = preds.iter().zip(labels).map(|(f, y)| f * y).sum();
    let sff: f64 = preds.iter().map(|f| f * f).sum();
    let syy: f64 = labels.iter().map(|y| (y - my) * (y - my)).sum();
    if sff == 0.0 || syy == 0.0 {
        return Err(MetricsError::DegenerateVariance);
    }
    let k = syf / sff;
    let sse: f64 = preds.iter().zip(labels).map(|(f, y)| (y - k * f) * (y - k * f)).sum();
    Ok(1.0 - sse / syy)
}

/// `r^2 * (1 - sqrt(max(r^2 - r0^2, 0)))`.
pub fn rm_squared(preds: &[f64], labels: &[f64]) -> Result<f64, MetricsError> {
    let r2 = r_squared(preds, labels)?;
    let r02 = r0_squared(preds, labels)?;
    Ok(r2 * (1.0 - (r2 - r02).max(0.0).sqrt()))
}

/// Area under the precision-recall curve with step interpolation. Labels
/// `>= threshold` are positive; tied scores enter the curve together.
pub fn aupr(preds: &[f64], labels: &[f64], threshold: f64) -> Result<f64, MetricsError> {
    check_lengths(preds, labels)?;
    let positives = labels.iter().filter(|&&y| y >= threshold).count();
    if positives == 0 || positives == labels.len() {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].total_cmp(&preds[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut area, mut prev_recall) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let score = preds[order[i]];
        while i < order.len() && preds[order[i]] == score {
            if labels[order[i]] >= threshold {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(area)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mse: f64,
    /// NaN when undefined for the given labels (all equal).
    pub ci: f64,
    /// NaN when either vector has no spread.
    pub rm2: f64,
    /// NaN when no threshold is given or only one class is present.
    pub aupr: f64,
    pub n_pairs: usize,
    pub threshold_used: Option<f64>,
}

impl MetricsReport {
    pub fn compute(preds: &[f64], labels: &[f64], threshold: Option<f64>) -> Result<Self, MetricsError> {
        let mse = mse(preds, labels)?;
        let or_nan = |r: Result<f64, MetricsError>| match r {
            Ok(v) => v,
            Err(e) => {
                log::warn!("metric undefined: {e}");
                f64::NAN
            }
        };
        Ok(Self {
            mse,
            ci: or_nan(concordance_index(preds, labels)),
            rm2: or_nan(rm_squared(preds, labels)),
            aupr: threshold.map_or(f64::NAN, |t| or_nan(aupr(preds, labels, t))),
            n_pairs: preds.len(),
            threshold_used: threshold,
        })
    }

    pub const CSV_HEADER: &'static str = "n_pairs,mse,ci,rm2,aupr,threshold";

    pub fn csv_row(&self) -> String {
        let t = self.threshold_used.map(|t| t.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.n_pairs, self.mse, self.ci, self.rm2, self.aupr, t
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10}{:>12}", "pairs", self.n_pairs)?;
        writeln!(f, "{:<10}{:>12.6}", "MSE", self.mse)?;
        writeln!(f, "{:<10}{:>12.6}", "CI", self.ci)?;
        writeln!(f, "{:<10}{:>12.6}", "rm2", self.rm2)?;
        write!(f, "{:<10}{:>12.6}", "AUPR", self.aupr)
    }
}
