use core::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI)
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `2 (1 - Φ(|z|))`, evaluated as `erfc(|z| / √2)` to keep tail precision.
pub fn two_sided_p(z: f64) -> f64 {
    libm::erfc(libm::fabs(z) * FRAC_1_SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // Φ(1) = 0.841344746068542948585..., φ(1) = 0.241970724519143349797...
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_pdf(1.0) - 0.241_970_724_519_143_35).abs() < 1e-15);
        assert_eq!(normal_cdf(0.0), 0.5);
        // 2(1 - Φ(1.959963984540054)) = 0.05
        assert!((two_sided_p(1.959_963_984_540_054) - 0.05).abs() < 1e-14);
        assert!((two_sided_p(-3.0) - 0.002_699_796_063_260_19).abs() < 1e-15);
    }
}
