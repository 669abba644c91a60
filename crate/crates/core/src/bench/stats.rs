use serde::{Deserialize, Serialize};

use super::BenchError;

/// Summary of a list of CF values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub max: f64,
    pub mean: f64,
    pub min: f64,
    /// Second smallest value by position, so duplicates of the minimum count.
    /// Equals `min` for a single value.
    pub second_min: f64,
}

pub fn stats(values: &[f64]) -> Result<GroupStats, BenchError> {
    if values.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(BenchError::InvalidParams(format!("non-finite value {v}")));
    }
    let mut max = f64::NEG_INFINITY;
    let (mut lo, mut lo2) = (f64::INFINITY, f64::INFINITY);
    let mut sum = 0.0;
    for &v in values {
        max = max.max(v);
        sum += v;
        if v < lo {
            lo2 = lo;
            lo = v;
        } else if v < lo2 {
            lo2 = v;
        }
    }
    let second_min = if values.len() == 1 { lo } else { lo2 };
    // Rounding in the sum can push the mean a hair outside [min, max].
    let mean = (sum / values.len() as f64).clamp(lo, max);
    Ok(GroupStats {
        max,
        mean,
        min: lo,
        second_min,
    })
}
