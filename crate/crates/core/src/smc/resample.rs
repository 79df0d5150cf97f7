use super::SmcError;

/// Systematic resampling with a single uniform offset `u` in `[0, 1)`.
///
/// Index `i` is selected either `floor(N w_i)` or `ceil(N w_i)` times. Weights
/// need not be normalized; they must be nonnegative with a positive sum.
pub fn systematic_resample(weights: &[f64], u: f64) -> Result<Vec<usize>, SmcError> {
    let mut out = vec![0u32; weights.len()];
    resample_into(weights, u, &mut out)?;
    Ok(out.into_iter().map(|i| i as usize).collect())
}

pub(crate) fn resample_into(weights: &[f64], u: f64, out: &mut [u32]) -> Result<(), SmcError> {
    let n = weights.len();
    debug_assert_eq!(out.len(), n);
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) || weights.iter().any(|w| *w < 0.0) {
        return Err(SmcError::Collapse { t: 0 });
    }
    let step = total / n as f64;
    let mut cumulative = weights[0];
    let mut j = 0;
    for (i, slot) in out.iter_mut().enumerate() {
        let position = (u + i as f64) * step;
        while position >= cumulative && j + 1 < n {
            j += 1;
            cumulative += weights[j];
        }
        *slot = j as u32;
    }
    Ok(())
}
