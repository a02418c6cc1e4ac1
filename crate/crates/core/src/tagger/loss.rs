use crate::annotation::DistributionSequence;
use crate::{Error, Result};

pub const LOG_FLOOR: f64 = 1e-12;

/// Mean over tokens of `-sum_j target_j * ln(max(predicted_j, 1e-12))`.
///
/// With one-hot targets this is the usual negative log-likelihood of the hard labels.
pub fn soft_cross_entropy(predicted: &DistributionSequence, target: &DistributionSequence) -> Result<f64> {
    if predicted.len() != target.len() {
        return Err(Error::LengthMismatch { expected: target.len(), actual: predicted.len() });
    }
    if predicted.classes() != target.classes() {
        return Err(Error::LengthMismatch { expected: target.classes(), actual: predicted.classes() });
    }
    if target.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = predicted
        .rows()
        .zip(target.rows())
        .map(|(q, t)| -t.iter().zip(q).map(|(tj, qj)| if *tj == 0.0 { 0.0 } else { tj * qj.max(LOG_FLOOR).ln() }).sum::<f64>())
        .sum();
    Ok(total / target.len() as f64)
}
