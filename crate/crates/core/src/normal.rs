//! Standard normal helpers.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::standard()
}

/// Density φ(x).
pub fn pdf(x: f64) -> f64 {
    standard().pdf(x)
}

/// Distribution function Φ(x).
pub fn cdf(x: f64) -> f64 {
    standard().cdf(x)
}

/// Upper tail 1 − Φ(x), accurate for large x.
pub fn sf(x: f64) -> f64 {
    standard().sf(x)
}

/// Quantile function Φ⁻¹(p) for p in (0, 1).
pub fn quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

/// Two-sided p-value 2(1 − Φ(|z|)).
pub fn two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    (2.0 * sf(z.abs())).min(1.0)
}
