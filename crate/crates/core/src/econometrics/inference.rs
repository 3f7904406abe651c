/// Critical value for 95% normal intervals.
pub const Z95: f64 = 1.96;

/// Two-sided normal p-value of a t statistic.
pub fn two_sided_p(t: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    libm::erfc(t.abs() / core::f64::consts::SQRT_2)
}

pub fn ci95(estimate: f64, se: f64) -> (f64, f64) {
    (estimate - Z95 * se, estimate + Z95 * se)
}

/// Significance stars: `*` p<0.05, `**` p<0.01, `***` p<0.001.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.004), "**");
        assert_eq!(stars(0.2), "");
        assert_eq!(stars(0.0009), "***");
        assert_eq!(stars(0.049), "*");
        assert_eq!(stars(0.05), "");
    }

    #[test]
    fn normal_p_values() {
        assert!((two_sided_p(1.959_963_984_540_054) - 0.05).abs() < 1e-12);
        assert_eq!(two_sided_p(0.0), 1.0);
        assert!((two_sided_p(-2.575_829_303_548_901) - 0.01).abs() < 1e-12);
    }
}
