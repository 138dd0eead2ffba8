use crate::error::{invalid, Result};
use alloc::vec::Vec;

/// The `⌈p·M⌉`-th order statistic of `xs` (1-based).
///
/// As a simulated critical value with strict rejection, this gives an exact
/// finite-`M` rejection rate of `(M + 1 − ⌈pM⌉)/(M + 1)`, e.g. 5.09% for
/// `M = 1000` at `p = 0.95`.
pub fn empirical_quantile(xs: &[f64], p: f64) -> Result<f64> {
    let mut buf: Vec<f64> = xs.to_vec();
    empirical_quantile_mut(&mut buf, p)
}

/// As [`empirical_quantile`], reordering `xs` in place instead of copying.
pub fn empirical_quantile_mut(xs: &mut [f64], p: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(invalid!("empirical quantile of an empty sample"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid!("quantile level must lie in (0, 1), got {p}"));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(invalid!("sample contains NaN"));
    }
    let m = xs.len();
    // The slack absorbs representation error in p·M (0.95·100 must give 95).
    let rank = libm::ceil(p * m as f64 - 1e-9).clamp(1.0, m as f64) as usize;
    let (_, v, _) = xs.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistic_definition() {
        let xs: Vec<f64> = (1..=100).rev().map(f64::from).collect();
        assert_eq!(empirical_quantile(&xs, 0.95).unwrap(), 95.0);
        assert_eq!(empirical_quantile(&xs, 0.951).unwrap(), 96.0);
        assert_eq!(empirical_quantile(&xs, 0.001).unwrap(), 1.0);
    }

    #[test]
    fn singleton() {
        for p in [0.01, 0.5, 0.99] {
            assert_eq!(empirical_quantile(&[5.0], p).unwrap(), 5.0);
        }
    }

    #[test]
    fn errors() {
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&[1.0], 1.0).is_err());
        assert!(empirical_quantile(&[1.0, f64::NAN], 0.5).is_err());
    }
}
