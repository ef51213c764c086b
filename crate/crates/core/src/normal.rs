//! Standard normal distribution helpers built on the complementary error function.
//!
//! Interval probabilities are formed from whichever tail keeps both terms small,
//! so cells far out in either tail keep their relative precision.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// `P(Z > x)`.
pub fn upper_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `P(Z <= x)`.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `P(lo <= Z < hi)` for `lo <= hi`; either end may be infinite.
pub fn interval_prob(lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    if lo >= 0.0 {
        upper_tail(lo) - upper_tail(hi)
    } else if hi <= 0.0 {
        upper_tail(-hi) - upper_tail(-lo)
    } else {
        1.0 - upper_tail(-lo) - upper_tail(hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_interval() {
        // mpmath, 30 digits
        let p = interval_prob(-0.5, 0.5);
        assert!((p - 0.382_924_922_548_026_2).abs() < 1e-16);
    }

    #[test]
    fn tails_keep_relative_precision() {
        let q = upper_tail(10.0);
        assert!((q / 7.619_853_024_160_527e-24 - 1.0).abs() < 1e-13, "{q:e}");
        let p = interval_prob(9.0, 10.0);
        assert!(p > 0.0 && (p / (upper_tail(9.0) - q) - 1.0).abs() < 1e-14);
        assert_eq!(interval_prob(f64::NEG_INFINITY, f64::INFINITY), 1.0);
    }

    #[test]
    fn cdf_and_tail_are_complementary() {
        for &x in &[-3.0, -0.2, 0.0, 0.7, 4.0] {
            assert!((cdf(x) + upper_tail(x) - 1.0).abs() < 1e-15);
            assert!((cdf(x) - upper_tail(-x)).abs() < 1e-16);
        }
        assert!((pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
    }
}
