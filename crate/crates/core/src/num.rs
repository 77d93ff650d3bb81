/// Rounds to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 || digits == 0 {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

/// `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn approx_eq(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding() {
        assert_eq!(round_sig(0.19999999999999996, 12), 0.2);
        assert_eq!(round_sig(7.6000000000000005, 12), 7.6);
        assert_eq!(round_sig(123_456_789.123_456, 3), 123000000.0);
        assert_eq!(round_sig(-0.000123456, 2), -0.00012);
        assert!(round_sig(f64::NAN, 3).is_nan());
    }
}
