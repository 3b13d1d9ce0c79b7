//! Univariate normal helpers built on `erfc`.

use libm::erfc;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

pub fn pdf(x: f64, mean: f64, var: f64) -> f64 {
    log_pdf(x, mean, var).exp()
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail `1 - Φ(x)`.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// `Φ(b) - Φ(a)` for `a <= b`, evaluated in whichever tail keeps precision.
pub fn interval_prob(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        sf(a) - sf(b)
    } else if b <= 0.0 {
        cdf(b) - cdf(a)
    } else {
        1.0 - cdf(a) - sf(b)
    }
}

/// Mass of `[lo, hi)` under `N(mean, var)`.
pub fn mass(lo: f64, hi: f64, mean: f64, var: f64) -> f64 {
    let s = var.sqrt();
    interval_prob((lo - mean) / s, (hi - mean) / s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        // Φ(2) to 16 digits.
        assert!((cdf(2.0) - 0.977_249_868_051_820_8).abs() < 1e-15);
        assert!((sf(8.0) - 6.220_960_574_271_785e-16).abs() < 1e-28);
        assert!((pdf(0.0, 0.0, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
    }

    #[test]
    fn interval_in_far_tail() {
        let p = interval_prob(9.0, 10.0);
        assert!(p > 0.0 && (p - (sf(9.0) - sf(10.0))).abs() < 1e-30);
    }
}
