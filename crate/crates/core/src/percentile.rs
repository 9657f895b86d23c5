//! Nearest-rank percentiles.
//!
//! Both frequency thresholds and dictionary score thresholds use the
//! nearest-rank definition: the p-th percentile of n values is the value at
//! 1-indexed position ⌈p·n⌉ of the ascending sort. No interpolation takes
//! place, so the returned value is always a member of the input multiset.

use crate::error::{Error, Result};

/// 0-based index of the nearest-rank percentile in an ascending sort of `n` values.
///
/// Products that land within 1e-9 of an integer are treated as exact before
/// the ceiling is taken, so that e.g. p = 0.8 over 5 values selects rank 4
/// even when the floating-point product strays a few ulps above 4.0.
pub(crate) fn nearest_rank_index(n: usize, p: f64) -> usize {
    debug_assert!(n > 0);
    let raw = p * n as f64;
    let rank = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
    (rank as usize).clamp(1, n) - 1
}

/// Nearest-rank percentile of unsigned counts. `p` must lie in (0, 1).
pub fn percentile_u64(values: &[u64], p: f64) -> Result<u64> {
    check_args(values.len(), p)?;
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    Ok(sorted[nearest_rank_index(sorted.len(), p)])
}

/// Nearest-rank percentile of floats. `p` must lie in (0, 1); NaN is rejected.
pub fn percentile_f64(values: &[f64], p: f64) -> Result<f64> {
    check_args(values.len(), p)?;
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::invalid("percentile over NaN values"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted[nearest_rank_index(sorted.len(), p)])
}

fn check_args(n: usize, p: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("percentile of an empty value set"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("percentile {p} outside (0, 1)")));
    }
    Ok(())
}
