//! Small descriptive-statistics helpers shared across modules.
//!
//! Dispersion uses the sample (n - 1) estimator throughout; percentiles use
//! linear interpolation between order statistics at position `(n - 1) * q`.

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation. Zero for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Percentile of `values` for `q` in `[0, 1]`, linear interpolation.
///
/// Returns NaN for an empty slice.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, q)
}

pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = (n - 1) as f64 * q.clamp(0.0, 1.0);
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            if lo == hi {
                sorted[lo]
            } else {
                let frac = pos - lo as f64;
                sorted[lo] + (sorted[hi] - sorted[lo]) * frac
            }
        }
    }
}

/// Standardize in place to mean 0, sample sd 1. Returns `(mean, sd)`;
/// entries are only centered when `sd` is zero.
pub fn standardize_in_place(values: &mut [f64]) -> (f64, f64) {
    let m = mean(values);
    let sd = sample_sd(values);
    let scale = if sd > 0.0 { sd } else { 1.0 };
    for v in values.iter_mut() {
        *v = (*v - m) / scale;
    }
    (m, sd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_interpolates() {
        let v: Vec<f64> = (-22..=22).map(f64::from).collect();
        assert!((percentile(&v, 0.10) - (-17.6)).abs() < 1e-12);
        assert!((percentile(&v, 0.90) - 17.6).abs() < 1e-12);
        assert_eq!(percentile(&[0.1, 0.2, 0.3, 0.4], 0.5), 0.25);
        assert_eq!(percentile(&[3.0], 0.3), 3.0);
        assert!(percentile(&[], 0.3).is_nan());
    }

    #[test]
    fn sample_sd_uses_n_minus_one() {
        assert!((sample_sd(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(sample_sd(&[4.0]), 0.0);
    }
}
