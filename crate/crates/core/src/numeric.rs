//! Small numeric helpers shared across modules.
//!
//! All measure sums go through compensated (Neumaier) summation: the
//! sup-over-balls quantities computed elsewhere amplify rounding, so plain
//! left-to-right accumulation is not good enough.

/// Compensated sum of an iterator of f64 terms.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for t in terms {
        let next = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - next) + t;
        } else {
            comp += (t - next) + sum;
        }
        sum = next;
    }
    sum + comp
}

/// Weighted L^p norm: (sum_x w(x) |f(x)|^p)^(1/p).
pub fn weighted_lp_norm(values: &[f64], weights: &[f64], p: f64) -> f64 {
    debug_assert_eq!(values.len(), weights.len());
    kahan_sum(
        values
            .iter()
            .zip(weights)
            .map(|(v, w)| w * v.abs().powf(p)),
    )
    .powf(1.0 / p)
}

/// Weighted L^1 norm.
pub fn weighted_l1_norm(values: &[f64], weights: &[f64]) -> f64 {
    kahan_sum(values.iter().zip(weights).map(|(v, w)| w * v.abs()))
}

/// Weighted inner product sum_x w(x) f(x) g(x).
pub fn weighted_inner(f: &[f64], g: &[f64], weights: &[f64]) -> f64 {
    kahan_sum(
        f.iter()
            .zip(g)
            .zip(weights)
            .map(|((a, b), w)| w * a * b),
    )
}

/// Format a float as a decimal string with 12 significant digits.
///
/// Uses scientific notation with an 11-digit mantissa fraction so the
/// representation is unambiguous and byte-stable across runs.
pub fn format_sig12(x: f64) -> String {
    if x == 0.0 {
        return "0.00000000000e0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".to_string()
        } else if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        };
    }
    format!("{:.11e}", x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kahan_handles_cancellation() {
        // 1 + 1e16 - 1e16 loses the 1 under naive summation order.
        let s = kahan_sum([1.0, 1e16, -1e16]);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn sig12_is_stable() {
        assert_eq!(format_sig12(7.0 / 3.0), "2.33333333333e0");
        assert_eq!(format_sig12(0.0), "0.00000000000e0");
        assert_eq!(format_sig12(-1.5e-7), "-1.50000000000e-7");
    }
}
