//! Exact finite-horizon Gaussian Gittins index by backward induction.
//!
//! With `ν` chosen so that the index is zero, the optimal-stopping value of
//! an arm with `t` rounds left satisfies
//!
//! ```text
//! V_t(x, s²) = x + E[max{0, V_{t-1}(x + η, s²/(1+s²))}],   η ~ N(0, s⁴/(1+s²)),
//! ```
//!
//! with `V_0 ≡ 0`, and `γ(0, s², t)` is minus the largest zero of `V_t`. Each
//! stage is stored as a quadratic spline of `max{0, V_t}` that starts at that
//! zero and continues affinely with slope `t` once the Gaussian smoothing of
//! the previous stage can no longer reach its last knot. `V_t` is convex and
//! increasing with slope at least one, which makes both the midpoint-driven
//! refinement and the root bracket `[-V_t(0) + 0, 0]` sound.

use std::collections::HashMap;
use std::sync::RwLock;

use crate::error::{Error, Result};
use crate::roots::bracketed_root;
use crate::spline::{fit_adaptive, AffineTail, FitOptions, PiecewiseQuadratic, WINDOW};

/// Gaussian belief over an arm's mean reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !variance.is_finite() || variance < 0.0 {
            return Err(Error::InvalidInput(format!("invalid posterior N({mean}, {variance})")));
        }
        Ok(Self { mean, variance })
    }
}

/// Conjugate update after observing one unit-variance reward `x`.
///
/// A zero-variance posterior is a known mean and is returned unchanged.
pub fn posterior_update(p: Posterior, x: f64) -> Result<Posterior> {
    if !x.is_finite() {
        return Err(Error::InvalidInput(format!("reward {x} is not finite")));
    }
    if p.variance == 0.0 {
        return Ok(p);
    }
    let precision = 1.0 / p.variance + 1.0;
    Ok(Posterior { mean: (p.mean / p.variance + x) / precision, variance: 1.0 / precision })
}

/// Variance of the change in posterior mean caused by the `t`-th observation
/// of an arm whose prior variance is `prior_var`.
pub fn noise_variance(prior_var: f64, t: usize) -> Result<f64> {
    if !(prior_var > 0.0) || !prior_var.is_finite() || t == 0 {
        return Err(Error::InvalidInput(format!("noise variance needs σ² > 0 and t ≥ 1, got ({prior_var}, {t})")));
    }
    let before = prior_var / (1.0 + (t - 1) as f64 * prior_var);
    let after = prior_var / (1.0 + t as f64 * prior_var);
    Ok(before * after)
}

/// Arguments of `γ(ν, σ², m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexQuery {
    pub mean: f64,
    pub variance: f64,
    pub remaining: usize,
}

impl IndexQuery {
    pub fn new(mean: f64, variance: f64, remaining: usize) -> Result<Self> {
        if remaining == 0 {
            return Err(Error::InvalidInput("remaining rounds must be at least 1".into()));
        }
        if !mean.is_finite() || !variance.is_finite() || variance < 0.0 {
            return Err(Error::InvalidInput(format!("invalid index query N({mean}, {variance})")));
        }
        Ok(Self { mean, variance, remaining })
    }
}

/// Numerical settings of the engine.
#[derive(Debug, Clone, Copy)]
pub struct EngineConfig {
    pub fit: FitOptions,
    /// Bracket width at which root finding stops.
    pub root_tol: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { fit: FitOptions::default(), root_tol: 1e-8 }
    }
}

impl EngineConfig {
    pub fn with_tol(tol: f64) -> Self {
        let mut cfg = Self::default();
        cfg.fit.tol = tol;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fit.tol > 0.0) || !(self.root_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// One backward-induction stage: `max{0, V_t}` as a spline plus a short
/// stretch of the signed `V_t` below its largest zero.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    stage: usize,
    root: f64,
    positive: PiecewiseQuadratic,
    below_root: PiecewiseQuadratic,
    achieved: f64,
}

impl ValueFunction {
    /// `V_1(x) = x`.
    pub fn first_stage() -> Self {
        Self {
            stage: 1,
            root: 0.0,
            positive: PiecewiseQuadratic::new(
                Vec::new(),
                AffineTail::zero(0.0),
                AffineTail { anchor: 0.0, value: 0.0, slope: 1.0 },
            )
            .expect("tails share an anchor"),
            below_root: PiecewiseQuadratic::affine(0.0, 0.0, 1.0),
            achieved: 0.0,
        }
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    /// Largest zero of the signed `V_t`, located on the exact backup.
    pub fn root(&self) -> f64 {
        self.root
    }

    /// `γ(0, s², t)` for the variance `s²` this stage was built at.
    pub fn zero_mean_index(&self) -> f64 {
        0.0 - self.root
    }

    /// The spline of `max{0, V_t}`.
    pub fn positive_part(&self) -> &PiecewiseQuadratic {
        &self.positive
    }

    /// Largest quarter-point deviation accepted while fitting this stage.
    pub fn achieved_tol(&self) -> f64 {
        self.achieved
    }

    pub fn segment_count(&self) -> usize {
        self.positive.segments().len() + self.below_root.segments().len()
    }

    /// `max{0, V_t(x)}` from the spline.
    pub fn eval_positive(&self, x: f64) -> f64 {
        if x < self.root {
            0.0
        } else {
            self.positive.eval(x)
        }
    }

    /// Signed `V_t(x)` from the splines. Accurate near and above the root;
    /// far below it the left extrapolation is only a lower-accuracy guide.
    pub fn eval_signed(&self, x: f64) -> f64 {
        if x < self.root {
            self.below_root.eval(x)
        } else {
            self.positive.eval(x)
        }
    }

    /// Lower end of the domain on which the signed function is represented.
    pub fn signed_domain_lo(&self) -> f64 {
        self.below_root.first_knot()
    }

    /// `E[max{0, V_t}(X)]` for `X ~ N(mean, var)`.
    pub fn gauss_expect_positive(&self, mean: f64, var: f64) -> Result<f64> {
        if !(var > 0.0) || !var.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidInput(format!("expectation needs finite mean and var > 0, got ({mean}, {var})")));
        }
        Ok(self.positive.gauss_expectation(mean, var))
    }
}

/// `E[max{0, V}(X)]` for `X ~ N(mean, var)` using the closed-form Gaussian
/// moments of every quadratic piece.
pub fn gauss_expect_positive_spline(v: &ValueFunction, mean: f64, var: f64) -> Result<f64> {
    v.gauss_expect_positive(mean, var)
}

/// Builds stage `t` from stage `t - 1`, where `noise_var` is the variance of
/// the posterior-mean increment at the variance stage `t` starts from.
pub fn bellman_backup(prev: &ValueFunction, noise_var: f64, cfg: &EngineConfig) -> Result<ValueFunction> {
    if !(noise_var > 0.0) || !noise_var.is_finite() {
        return Err(Error::InvalidInput(format!("noise variance must be positive, got {noise_var}")));
    }
    cfg.validate()?;
    let stage = prev.stage + 1;
    let slope = prev.positive.right_tail().slope + 1.0;
    let sd = noise_var.sqrt();
    let backup = |x: f64| x + prev.positive.gauss_expectation(x, noise_var);

    // V is increasing with V(0) = E[g(η)] =: c >= 0 and V(-c) <= 0.
    let at_zero = backup(0.0);
    let root = if at_zero <= 0.0 {
        0.0
    } else {
        let lo = -at_zero;
        let f_lo = backup(lo);
        if f_lo > 0.0 {
            return Err(Error::DomainTooNarrow { lo, hi: 0.0 });
        }
        bracketed_root(backup, lo, 0.0, f_lo, at_zero, cfg.root_tol)
    };

    // Beyond `affine_from` the previous stage is affine wherever the noise can
    // reach, so V_t is exactly affine with slope t there.
    let affine_from = prev.positive.last_knot() + WINDOW * sd;
    let mut achieved: f64 = 0.0;
    let positive = if affine_from <= root {
        PiecewiseQuadratic::new(
            Vec::new(),
            AffineTail::zero(root),
            AffineTail { anchor: root, value: 0.0, slope },
        )?
    } else {
        let fit = fit_adaptive(|x| backup(x).max(0.0), root, affine_from, &cfg.fit)?;
        achieved = achieved.max(fit.achieved);
        PiecewiseQuadratic::new(
            fit.segments,
            AffineTail::zero(root),
            AffineTail { anchor: affine_from, value: fit.f_hi, slope },
        )?
    };

    let margin = (4.0 * sd).max(1e-3);
    let below_opts = FitOptions { initial_pieces: 2, ..cfg.fit };
    let below = fit_adaptive(backup, root - margin, root, &below_opts)?;
    achieved = achieved.max(below.achieved);
    let first = below.segments[0];
    let last = *below.segments.last().expect("fit has segments");
    let below_root = PiecewiseQuadratic::new(
        below.segments,
        AffineTail { anchor: first.lo, value: first.c, slope: first.derivative(first.lo) },
        AffineTail { anchor: last.hi, value: below.f_hi, slope: last.derivative(last.hi) },
    )?;

    Ok(ValueFunction { stage, root, positive, below_root, achieved })
}

/// `γ(0, s², m)` read off a stage-`m` value function: minus the largest zero
/// of the signed spline, located by bracketing and bisection.
pub fn index_zero_root(v: &ValueFunction, xtol: f64) -> Result<f64> {
    let mut lo = v.signed_domain_lo();
    let mut f_lo = v.eval_signed(lo);
    let mut hi = v.root().max(0.0) + 1.0;
    let mut f_hi = v.eval_signed(hi);
    if f_lo > 0.0 {
        // Widen once to the left.
        lo -= 10.0 * (v.root() - lo).max(1.0);
        f_lo = v.eval_signed(lo);
    }
    if f_hi <= 0.0 {
        hi += 10.0;
        f_hi = v.eval_signed(hi);
    }
    if f_lo > 0.0 || f_hi <= 0.0 {
        return Err(Error::DomainTooNarrow { lo, hi });
    }
    // Largest zero: tighten the bracket from the right onto the last sign change.
    let root = bracketed_root(|x| v.eval_signed(x), lo, hi, f_lo, f_hi, xtol);
    Ok(-root)
}

/// Runs the backward induction for prior variance `variance` over `m` stages
/// and hands each stage to `visit` (stage 1 first).
pub fn backward_induction<F>(variance: f64, m: usize, cfg: &EngineConfig, mut visit: F) -> Result<ValueFunction>
where
    F: FnMut(&ValueFunction),
{
    if m == 0 {
        return Err(Error::InvalidInput("remaining rounds must be at least 1".into()));
    }
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::InvalidInput(format!("induction needs σ² > 0, got {variance}")));
    }
    let mut v = ValueFunction::first_stage();
    visit(&v);
    for k in 2..=m {
        let nv = noise_variance(variance, m - k + 1)?;
        v = bellman_backup(&v, nv, cfg)?;
        visit(&v);
    }
    Ok(v)
}

/// `γ(ν, σ², m)` without memoization.
pub fn gittins_index(q: &IndexQuery, cfg: &EngineConfig) -> Result<f64> {
    Ok(q.mean + exploration_bonus(q.variance, q.remaining, cfg)?)
}

/// `γ(0, σ², m)`.
pub fn exploration_bonus(variance: f64, m: usize, cfg: &EngineConfig) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidInput("remaining rounds must be at least 1".into()));
    }
    if variance == 0.0 || m == 1 {
        return Ok(0.0);
    }
    let v = backward_induction(variance, m, cfg, |_| {})?;
    Ok(v.zero_mean_index())
}

/// Key used for memoized bonuses: σ² rounded to 12 significant digits.
fn variance_key(variance: f64) -> u64 {
    let rounded: f64 = format!("{variance:.11e}").parse().expect("formatted float parses");
    rounded.to_bits()
}

/// Memoizing front end to the engine, safe to share between threads.
///
/// Every induction for `(σ², m)` also yields `γ(0, σ²/(1+jσ²), m-j)` for all
/// `j < m`; those byproducts are cached too.
#[derive(Debug, Default)]
pub struct IndexEngine {
    config: EngineConfig,
    cache: RwLock<HashMap<(u64, usize), f64>>,
}

impl IndexEngine {
    pub fn new(config: EngineConfig) -> Self {
        Self { config, cache: RwLock::new(HashMap::new()) }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    pub fn index(&self, q: &IndexQuery) -> Result<f64> {
        Ok(q.mean + self.bonus(q.variance, q.remaining)?)
    }

    /// `γ(0, σ², m)`.
    pub fn bonus(&self, variance: f64, m: usize) -> Result<f64> {
        if m == 0 {
            return Err(Error::InvalidInput("remaining rounds must be at least 1".into()));
        }
        if !variance.is_finite() || variance < 0.0 {
            return Err(Error::InvalidInput(format!("variance must be finite and ≥ 0, got {variance}")));
        }
        if variance == 0.0 || m == 1 {
            return Ok(0.0);
        }
        let key = (variance_key(variance), m);
        if let Some(&b) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(b);
        }
        let mut found = Vec::with_capacity(m);
        let v = backward_induction(variance, m, &self.config, |stage| {
            let k = stage.stage();
            let stage_var = variance / (1.0 + (m - k) as f64 * variance);
            found.push(((variance_key(stage_var), k), stage.zero_mean_index()));
        })?;
        let bonus = v.zero_mean_index();
        let mut cache = self.cache.write().expect("cache lock");
        for (k, b) in found {
            cache.entry(k).or_insert(b);
        }
        cache.insert(key, bonus);
        Ok(bonus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn posterior_update_examples() {
        let p = posterior_update(Posterior::new(0.0, 1.0).unwrap(), 1.0).unwrap();
        assert_eq!((p.mean, p.variance), (0.5, 0.5));
        let p = posterior_update(Posterior::new(1.0, 0.5).unwrap(), 0.0).unwrap();
        assert!((p.mean - 2.0 / 3.0).abs() < 1e-15 && (p.variance - 1.0 / 3.0).abs() < 1e-15);
        let known = Posterior::new(0.7, 0.0).unwrap();
        assert_eq!(posterior_update(known, 123.0).unwrap(), known);
        assert!(posterior_update(known, f64::NAN).is_err());
    }

    #[test]
    fn noise_variance_examples_and_telescoping() {
        assert_eq!(noise_variance(1.0, 1).unwrap(), 0.5);
        assert!((noise_variance(1.0, 2).unwrap() - 1.0 / 6.0).abs() < 1e-16);
        for &s in &[1.0, 0.5, 0.2, 3.0] {
            for k in 1..20usize {
                let sum: f64 = (1..=k).map(|t| noise_variance(s, t).unwrap()).sum();
                let closed = k as f64 * s * s / (1.0 + k as f64 * s);
                assert!((sum - closed).abs() < 1e-14);
            }
        }
        assert!(noise_variance(0.0, 1).is_err());
        assert!(noise_variance(1.0, 0).is_err());
    }

    #[test]
    fn first_stage_is_identity() {
        let v = ValueFunction::first_stage();
        for x in [-2.0, 0.0, 0.3, 5.0] {
            assert_eq!(v.eval_signed(x), x);
            assert_eq!(v.eval_positive(x), x.max(0.0));
        }
        assert_eq!(index_zero_root(&v, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn second_stage_at_zero_is_half_normal_mean() {
        let cfg = EngineConfig::default();
        let v2 = bellman_backup(&ValueFunction::first_stage(), 0.5, &cfg).unwrap();
        let expected = 1.0 / (2.0 * std::f64::consts::PI.sqrt());
        assert!((v2.eval_signed(0.0) - expected).abs() < 1e-6);
        assert!((expected - 0.282095).abs() < 1e-6);
    }

    #[test]
    fn expectation_rejects_bad_variance() {
        let v = ValueFunction::first_stage();
        assert!(gauss_expect_positive_spline(&v, 0.0, 0.0).is_err());
        assert!(gauss_expect_positive_spline(&v, 0.0, -1.0).is_err());
    }

    #[test]
    fn two_round_indices() {
        let cfg = EngineConfig::default();
        let g1 = exploration_bonus(1.0, 2, &cfg).unwrap();
        let g2 = exploration_bonus(0.5, 2, &cfg).unwrap();
        assert!((g1 - 0.195183).abs() < 1e-4, "{g1}");
        assert!((g2 - 0.112689).abs() < 1e-4, "{g2}");
        let q = IndexQuery::new(0.3, 1.0, 2).unwrap();
        assert!((gittins_index(&q, &cfg).unwrap() - 0.495183).abs() < 1e-4);
    }

    #[test]
    fn degenerate_queries_short_circuit() {
        let cfg = EngineConfig::default();
        assert_eq!(gittins_index(&IndexQuery::new(1.25, 0.0, 40).unwrap(), &cfg).unwrap(), 1.25);
        assert_eq!(gittins_index(&IndexQuery::new(-3.0, 2.0, 1).unwrap(), &cfg).unwrap(), -3.0);
        assert!(IndexQuery::new(0.0, 1.0, 0).is_err());
        assert!(IndexQuery::new(0.0, -1.0, 3).is_err());
    }

    #[test]
    fn spline_root_matches_exact_root() {
        let cfg = EngineConfig::default();
        let v = backward_induction(1.0, 30, &cfg, |_| {}).unwrap();
        let from_spline = index_zero_root(&v, 1e-10).unwrap();
        assert!((from_spline + v.root()).abs() < 1e-6);
    }

    #[test]
    fn stages_are_convex_and_nondecreasing() {
        let cfg = EngineConfig::default();
        let mut checked = 0;
        backward_induction(1.0, 40, &cfg, |v| {
            let lo = v.root() - 0.5;
            let hi = v.positive_part().last_knot() + 1.0;
            let n = 400;
            let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
            let ys: Vec<f64> = xs.iter().map(|&x| v.eval_positive(x)).collect();
            for w in ys.windows(2) {
                assert!(w[1] >= w[0] - 1e-9);
            }
            for w in ys.windows(3) {
                assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-6);
            }
            assert!(ys.iter().all(|&y| y >= 0.0));
            checked += 1;
        })
        .unwrap();
        assert_eq!(checked, 40);
    }

    #[test]
    fn engine_memoizes_induction_byproducts() {
        let engine = IndexEngine::new(EngineConfig::default());
        let b = engine.bonus(1.0, 10).unwrap();
        assert!(engine.cached_entries() >= 10);
        // γ(0, 1/2, 9) comes from the same induction.
        let cached = engine.bonus(0.5, 9).unwrap();
        let direct = exploration_bonus(0.5, 9, &EngineConfig::default()).unwrap();
        assert!((cached - direct).abs() < 1e-9);
        assert_eq!(engine.bonus(1.0, 10).unwrap(), b);
    }
}
