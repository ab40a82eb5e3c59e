//! Closed-form approximation of the Gittins index.
//!
//! `γ̃(ν, σ², m) = ν + sqrt(2σ² log β(σ², m))` with
//! `β = max{1, c·min{m / log₊^{3/2}(m), mσ² / log₊^{1/2}(mσ²)}}`,
//! `log₊(x) = max{1, log x}` and `c = 1/4` by default.

use rayon::prelude::*;

use crate::engine::IndexEngine;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxParams {
    pub constant: f64,
}

impl Default for ApproxParams {
    fn default() -> Self {
        Self { constant: 0.25 }
    }
}

impl ApproxParams {
    pub fn new(constant: f64) -> Result<Self> {
        if !(constant > 0.0) || !constant.is_finite() {
            return Err(Error::InvalidInput(format!("approximation constant must be positive, got {constant}")));
        }
        Ok(Self { constant })
    }

    pub fn beta(&self, variance: f64, m: usize) -> f64 {
        if m == 0 || variance <= 0.0 {
            return 1.0;
        }
        let m = m as f64;
        let horizon_term = m / log_plus(m).powf(1.5);
        let variance_term = if variance.is_infinite() {
            f64::INFINITY
        } else {
            let mv = m * variance;
            mv / log_plus(mv).sqrt()
        };
        (self.constant * horizon_term.min(variance_term)).max(1.0)
    }

    pub fn bonus(&self, variance: f64, m: usize) -> f64 {
        if variance <= 0.0 {
            return 0.0;
        }
        let b = self.beta(variance, m);
        if b <= 1.0 {
            0.0
        } else {
            (2.0 * variance * b.ln()).sqrt()
        }
    }

    pub fn index(&self, mean: f64, variance: f64, m: usize) -> f64 {
        mean + self.bonus(variance, m)
    }
}

/// `max{1, log x}`.
pub fn log_plus(x: f64) -> f64 {
    x.ln().max(1.0)
}

/// `β(σ², m)` with the default constant.
pub fn beta(variance: f64, m: usize) -> f64 {
    ApproxParams::default().beta(variance, m)
}

/// `γ̃(ν, σ², m)` with the default constant.
pub fn approx_gittins(mean: f64, variance: f64, m: usize) -> f64 {
    ApproxParams::default().index(mean, variance, m)
}

/// Exact and approximate exploration bonus at one `(σ², m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub variance: f64,
    pub m: usize,
    pub exact: f64,
    pub approx: f64,
}

impl Deviation {
    /// `|γ̃ − γ| / γ`; zero when both bonuses vanish.
    pub fn relative(&self) -> f64 {
        if self.exact == 0.0 && self.approx == 0.0 {
            0.0
        } else {
            (self.approx - self.exact).abs() / self.exact
        }
    }
}

/// Evaluates both bonuses at every `(σ², m)` point, in parallel.
pub fn compare_with_exact(params: &ApproxParams, points: &[(f64, usize)], engine: &IndexEngine) -> Result<Vec<Deviation>> {
    points
        .par_iter()
        .map(|&(variance, m)| {
            Ok(Deviation { variance, m, exact: engine.bonus(variance, m)?, approx: params.bonus(variance, m) })
        })
        .collect()
}

/// Largest relative deviation over `rows`.
pub fn max_relative_deviation(rows: &[Deviation]) -> f64 {
    rows.iter().map(Deviation::relative).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_examples() {
        assert_eq!(beta(1.0, 1), 1.0);
        // 0.25 · 10⁴ / ln(10⁴)^{3/2}
        let expected = 0.25 * 1e4 / (1e4f64).ln().powf(1.5);
        assert!((beta(1.0, 10_000) - expected).abs() < 1e-12);
        assert!((expected - 89.43).abs() < 0.01);
        let m = 500usize;
        let limit = 0.25 * m as f64 / log_plus(m as f64).powf(1.5);
        assert_eq!(beta(f64::INFINITY, m), limit);
        assert!((beta(1e12, m) - limit).abs() < 1e-12);
    }

    #[test]
    fn approx_index_examples() {
        assert_eq!(approx_gittins(0.7, 1.0, 1), 0.7);
        assert_eq!(approx_gittins(-0.2, 0.0, 1000), -0.2);
        let g = approx_gittins(0.0, 1.0, 10_000);
        assert!((g - 2.998).abs() < 1e-3, "{g}");
        let a = approx_gittins(1.5, 0.3, 400);
        let b = approx_gittins(0.0, 0.3, 400);
        assert!((a - b - 1.5).abs() < 1e-12);
    }

    #[test]
    fn nondecreasing_in_horizon() {
        for &v in &[1.0, 0.5, 0.1, 0.01] {
            let mut prev = approx_gittins(0.0, v, 3);
            for m in 4..5000 {
                let g = approx_gittins(0.0, v, m);
                assert!(g >= prev - 1e-12, "σ²={v} m={m}");
                prev = g;
            }
        }
    }

    #[test]
    fn never_below_mean() {
        for m in 1..200 {
            for &v in &[0.0, 1e-3, 0.5, 4.0] {
                assert!(approx_gittins(0.25, v, m) >= 0.25);
            }
        }
    }

    #[test]
    fn rejects_bad_constant() {
        assert!(ApproxParams::new(0.0).is_err());
        assert!(ApproxParams::new(0.25).is_ok());
    }

    #[test]
    fn deviation_against_the_engine() {
        let engine = IndexEngine::new(crate::engine::EngineConfig::default());
        let rows = compare_with_exact(&ApproxParams::default(), &[(1.0, 1), (1.0, 2), (0.5, 30)], &engine).unwrap();
        assert_eq!(rows[0].relative(), 0.0);
        // β clamps to 1 at m = 2, so the approximation is 0 there.
        assert_eq!(rows[1].approx, 0.0);
        assert!((rows[1].relative() - 1.0).abs() < 1e-12);
        assert!(rows[2].exact > 0.0 && rows[2].approx > 0.0);
        assert!(max_relative_deviation(&rows) >= rows[2].relative());
    }
}
