//! Gaussian special functions and truncated moments.
//!
//! `erf`/`erfc` come from `libm`; everything else here is built on them.

use std::f64::consts::FRAC_1_SQRT_2;

pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    if z.is_infinite() {
        0.0
    } else {
        FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
    }
}

/// Standard normal CDF, accurate in both tails.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Probability mass of the standard normal on the far side of `z`:
/// `P(Z >= z)` for `z >= 0`, `P(Z <= z)` for `z < 0`.
#[inline]
fn tail_mass(z: f64) -> f64 {
    0.5 * erfc(z.abs() * FRAC_1_SQRT_2)
}

/// Density and tail mass of the standard normal at one breakpoint.
#[derive(Debug, Clone, Copy)]
pub struct Breakpoint {
    pub z: f64,
    pub pdf: f64,
    tail: f64,
}

impl Breakpoint {
    #[inline]
    pub fn new(z: f64) -> Self {
        Self {
            z,
            pdf: std_normal_pdf(z),
            tail: if z.is_infinite() { 0.0 } else { tail_mass(z) },
        }
    }

    /// `z * pdf(z)`, zero at infinity.
    #[inline]
    fn z_pdf(&self) -> f64 {
        if self.z.is_infinite() {
            0.0
        } else {
            self.z * self.pdf
        }
    }
}

/// Zeroth, first and second moments of the standard normal restricted to
/// `[lo.z, hi.z]`: `E[Z^k 1{lo <= Z <= hi}]` for k = 0, 1, 2.
#[inline]
pub fn truncated_moments(lo: &Breakpoint, hi: &Breakpoint) -> [f64; 3] {
    let m0 = if lo.z >= 0.0 {
        lo.tail - hi.tail
    } else if hi.z <= 0.0 {
        hi.tail - lo.tail
    } else {
        1.0 - lo.tail - hi.tail
    };
    let m1 = lo.pdf - hi.pdf;
    let m2 = m0 + lo.z_pdf() - hi.z_pdf();
    [m0, m1, m2]
}

/// `E[max(0, X)]` for `X ~ N(mean, var)`.
pub fn expected_positive_part(mean: f64, var: f64) -> f64 {
    if var <= 0.0 {
        return mean.max(0.0);
    }
    let sd = var.sqrt();
    let z = mean / sd;
    mean * std_normal_cdf(z) + sd * std_normal_pdf(z)
}
