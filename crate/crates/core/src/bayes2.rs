//! Bayes-optimal play of a two-armed Gaussian bandit.
//!
//! With independent Gaussian beliefs `N(ν₁, σ₁²)`, `N(ν₂, σ₂²)` and `r` rounds
//! left, the optimal expected reward is `r·ν₁ + U(δ)` with `δ = ν₂ − ν₁`.
//! `U` depends on how often each arm has been pulled since the prior was set,
//! `(j₁, j₂)`, and satisfies
//!
//! ```text
//! U_{j₁,j₂}(δ) = max{ E[U_{j₁+1,j₂}(δ + η₁)],  δ + E[U_{j₁,j₂+1}(δ + η₂)] }
//! ```
//!
//! where `η_i` is the posterior-mean increment of arm `i` and `U ≡ 0` once the
//! rounds run out. Each `U` is convex, tends to 0 on the left and to `r·δ` on
//! the right. The two branches are smooth but their maximum has a kink at the
//! decision threshold, so the threshold is located first and each branch is
//! fitted on its own side of it.
//!
//! The induction runs over diagonals `j₁ + j₂ = k`, from `k = r − 1` down to
//! 0, keeping only two diagonals of splines alive. The threshold of every
//! state is kept, which is all a policy needs.

use rayon::prelude::*;

use crate::engine::{noise_variance, EngineConfig, IndexEngine};
use crate::error::{Error, Result};
use crate::policy::BanditPolicy;
use crate::roots::bracketed_root;
use crate::special::{erf, FRAC_1_SQRT_2PI};
use crate::spline::{fit_adaptive, AffineTail, PiecewiseQuadratic, WINDOW};

/// Beliefs about both arms with `remaining` rounds to play.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesState {
    pub mean1: f64,
    pub var1: f64,
    pub mean2: f64,
    pub var2: f64,
    pub remaining: usize,
}

impl BayesState {
    pub fn new(mean1: f64, var1: f64, mean2: f64, var2: f64, remaining: usize) -> Result<Self> {
        if !(mean1.is_finite() && mean2.is_finite()) {
            return Err(Error::InvalidInput("posterior means must be finite".into()));
        }
        if !(var1 >= 0.0 && var2 >= 0.0 && var1.is_finite() && var2.is_finite()) {
            return Err(Error::InvalidInput(format!("variances must be finite and nonnegative, got {var1}, {var2}")));
        }
        Ok(Self { mean1, var1, mean2, var2, remaining })
    }

    pub fn gap(&self) -> f64 {
        self.mean2 - self.mean1
    }
}

/// Posterior variance after `j` unit-variance observations.
fn shrunk(var: f64, j: usize) -> f64 {
    if var == 0.0 {
        0.0
    } else {
        var / (1.0 + j as f64 * var)
    }
}

/// Variance of the posterior-mean increment on the `(j+1)`-th pull.
fn increment_variance(var: f64, j: usize) -> Result<f64> {
    if var == 0.0 {
        Ok(0.0)
    } else {
        noise_variance(var, j + 1)
    }
}

fn expect(f: &PiecewiseQuadratic, mean: f64, var: f64) -> f64 {
    if var == 0.0 {
        f.eval(mean)
    } else {
        f.gauss_expectation(mean, var)
    }
}

/// `max{0, slope·δ}`.
fn hinge(slope: f64) -> PiecewiseQuadratic {
    PiecewiseQuadratic::new(Vec::new(), AffineTail::zero(0.0), AffineTail { anchor: 0.0, value: 0.0, slope })
        .expect("an empty spline with matching anchors is valid")
}

/// One state of the induction: its value function and decision threshold.
struct Solved {
    value: PiecewiseQuadratic,
    threshold: f64,
    achieved: f64,
}

/// Threshold and value of state `(j1, j2)` with `r ≥ 2` rounds left, given
/// the value functions after pulling arm 1 (`next1`) and arm 2 (`next2`).
fn solve_state(
    prior: (f64, f64),
    j1: usize,
    j2: usize,
    r: usize,
    next1: &PiecewiseQuadratic,
    next2: &PiecewiseQuadratic,
    cfg: &EngineConfig,
) -> Result<Solved> {
    let nv1 = increment_variance(prior.0, j1)?;
    let nv2 = increment_variance(prior.1, j2)?;
    let branch1 = |d: f64| expect(next1, d, nv1);
    let branch2 = |d: f64| d + expect(next2, d, nv2);
    let gain = |d: f64| branch2(d) - branch1(d);

    let spread = (shrunk(prior.0, j1) + shrunk(prior.1, j2)).sqrt();
    if spread == 0.0 {
        // Nothing left to learn: play the better-looking arm.
        return Ok(Solved { value: hinge(r as f64), threshold: 0.0, achieved: 0.0 });
    }
    let half = WINDOW * spread;
    let (mut lo, mut hi) = (-half, half);
    let (mut g_lo, mut g_hi) = (gain(lo), gain(hi));
    // The gain tends to δ at both ends, so doubling finds a bracket quickly.
    let mut widen = 0;
    while (g_lo > 0.0 || g_hi <= 0.0) && widen < 60 {
        if g_lo > 0.0 {
            lo *= 2.0;
            g_lo = gain(lo);
        }
        if g_hi <= 0.0 {
            hi *= 2.0;
            g_hi = gain(hi);
        }
        widen += 1;
    }
    if g_lo > 0.0 || g_hi <= 0.0 {
        return Err(Error::DomainTooNarrow { lo, hi });
    }
    let threshold = bracketed_root(gain, lo, hi, g_lo, g_hi, cfg.root_tol);

    let left = fit_adaptive(branch1, lo, threshold, &cfg.fit)?;
    let right = fit_adaptive(branch2, threshold, hi, &cfg.fit)?;
    let achieved = left.achieved.max(right.achieved);
    let left_value = left.segments[0].c;
    let mut segments = left.segments;
    let join = segments.len();
    segments.extend(right.segments);
    segments[join].lo = segments[join - 1].hi;
    let value = PiecewiseQuadratic::new(
        segments,
        AffineTail { anchor: lo, value: left_value, slope: 0.0 },
        AffineTail { anchor: hi, value: right.f_hi, slope: r as f64 },
    )?;
    Ok(Solved { value, threshold, achieved })
}

/// Offset of state `(k - j2, j2)` on diagonal `k` in the threshold array.
fn offset(k: usize, j2: usize) -> usize {
    k * (k + 1) / 2 + j2
}

/// The solved two-armed problem for fixed prior variances and horizon.
#[derive(Debug, Clone)]
pub struct BayesSolution {
    var1: f64,
    var2: f64,
    horizon: usize,
    /// Pull arm 2 in state `(j1, j2)` iff `δ > thresholds[offset(j1 + j2, j2)]`.
    thresholds: Vec<f64>,
    /// `U_{0,0}`, and the two successors of the root state.
    root: PiecewiseQuadratic,
    after1: PiecewiseQuadratic,
    after2: PiecewiseQuadratic,
    achieved: f64,
}

impl BayesSolution {
    /// Backward induction for prior variances `var1`, `var2` over `horizon` rounds.
    pub fn solve(var1: f64, var2: f64, horizon: usize, cfg: &EngineConfig) -> Result<Self> {
        if !(var1 >= 0.0 && var2 >= 0.0 && var1.is_finite() && var2.is_finite()) {
            return Err(Error::InvalidInput(format!("variances must be finite and nonnegative, got {var1}, {var2}")));
        }
        cfg.validate()?;
        let zero = PiecewiseQuadratic::affine(0.0, 0.0, 0.0);
        let mut thresholds = vec![0.0; offset(horizon, 0)];
        if horizon == 0 {
            return Ok(Self {
                var1,
                var2,
                horizon,
                thresholds,
                root: zero.clone(),
                after1: zero.clone(),
                after2: zero,
                achieved: 0.0,
            });
        }

        // Diagonal k = horizon - 1 has one round left: U = max{0, δ}.
        let mut next: Vec<PiecewiseQuadratic> = vec![hinge(1.0); horizon];
        let mut achieved: f64 = 0.0;
        let (mut after1, mut after2) = (zero.clone(), zero);
        for k in (0..horizon - 1).rev() {
            let r = horizon - k;
            if k == 0 {
                // next[j2] is state (1 - j2, j2).
                after1 = next[0].clone();
                after2 = next[1].clone();
            }
            let solved = (0..=k)
                .into_par_iter()
                .map(|j2| solve_state((var1, var2), k - j2, j2, r, &next[j2], &next[j2 + 1], cfg))
                .collect::<Result<Vec<Solved>>>()?;
            next = Vec::with_capacity(k + 1);
            for (j2, s) in solved.into_iter().enumerate() {
                thresholds[offset(k, j2)] = s.threshold;
                achieved = achieved.max(s.achieved);
                next.push(s.value);
            }
        }
        let root = next.swap_remove(0);
        if horizon == 1 {
            after1 = PiecewiseQuadratic::affine(0.0, 0.0, 0.0);
            after2 = after1.clone();
        }
        Ok(Self { var1, var2, horizon, thresholds, root, after1, after2, achieved })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn achieved_tol(&self) -> f64 {
        self.achieved
    }

    /// Decision threshold after `j1` and `j2` further pulls.
    pub fn threshold(&self, j1: usize, j2: usize) -> Result<f64> {
        let k = j1 + j2;
        if k >= self.horizon {
            return Err(Error::OutOfRange { t: j1, m: j2, n: self.horizon });
        }
        Ok(self.thresholds[offset(k, j2)])
    }

    /// `U_{0,0}(δ)`: optimal value minus `horizon·ν₁`.
    pub fn value_at_gap(&self, gap: f64) -> f64 {
        self.root.eval(gap)
    }

    /// Values of pulling arm 1 and arm 2 first, each minus `horizon·ν₁`.
    pub fn branch_values(&self, gap: f64) -> Result<(f64, f64)> {
        if self.horizon == 0 {
            return Ok((0.0, 0.0));
        }
        let nv1 = increment_variance(self.var1, 0)?;
        let nv2 = increment_variance(self.var2, 0)?;
        Ok((expect(&self.after1, gap, nv1), gap + expect(&self.after2, gap, nv2)))
    }
}

/// Optimal expected total reward from `state`.
pub fn bayes_value(state: &BayesState, cfg: &EngineConfig) -> Result<f64> {
    if state.remaining == 0 {
        return Ok(0.0);
    }
    let sol = BayesSolution::solve(state.var1, state.var2, state.remaining, cfg)?;
    Ok(state.remaining as f64 * state.mean1 + sol.value_at_gap(state.gap()))
}

/// The Bayes-optimal arm (0 or 1) in `state`; ties go to arm 0.
pub fn bayes_select(state: &BayesState, cfg: &EngineConfig) -> Result<usize> {
    if state.remaining == 0 {
        return Err(Error::SequenceExhausted { round: 1, horizon: 0 });
    }
    let sol = BayesSolution::solve(state.var1, state.var2, state.remaining, cfg)?;
    let (v1, v2) = sol.branch_values(state.gap())?;
    Ok(usize::from(v2 > v1))
}

/// Values of pulling arm 1 and arm 2 first when `n = 2`, `ν₁ = 0`, `σ₁² = 1`
/// and `σ₂² = 1/2`.
pub fn closed_form_n2(mean2: f64) -> (f64, f64) {
    let pull1 = (-mean2 * mean2).exp() * FRAC_1_SQRT_2PI / std::f64::consts::SQRT_2 + 0.5 * (mean2 + mean2 * erf(mean2));
    let pull2 = mean2
        + (-3.0 * mean2 * mean2).exp() / (12.0 * std::f64::consts::PI).sqrt()
        + 0.5 * (mean2 + mean2 * erf(3f64.sqrt() * mean2));
    (pull1, pull2)
}

/// Gap above which the closed-form pull-2 branch wins in the `n = 2` setup.
pub fn bayes_threshold_n2() -> f64 {
    let gain = |x: f64| {
        let (a, b) = closed_form_n2(x);
        b - a
    };
    bracketed_root(gain, -1.0, 1.0, gain(-1.0), gain(1.0), 1e-12)
}

/// `γ(0, 1, 2) − γ(0, 1/2, 2)`: the gap at which the index policy switches arms
/// in the `n = 2` setup.
pub fn gittins_threshold_n2(engine: &IndexEngine) -> Result<f64> {
    Ok(engine.bonus(1.0, 2)? - engine.bonus(0.5, 2)?)
}

/// Bayes-optimal two-armed policy under the flat prior: each arm is pulled
/// once, then beliefs are `N(μ̂_i, 1/T_i)`.
#[derive(Debug, Clone)]
pub struct BayesPolicy<'a> {
    solution: &'a BayesSolution,
    horizon: usize,
    counts: [usize; 2],
    sums: [f64; 2],
    round: usize,
    pending: Option<usize>,
}

impl<'a> BayesPolicy<'a> {
    /// `solution` must come from [`BayesPolicy::solve_for`] with the same horizon.
    pub fn new(solution: &'a BayesSolution, horizon: usize) -> Result<Self> {
        if solution.var1 != 1.0 || solution.var2 != 1.0 {
            return Err(Error::Config("the flat-prior Bayes policy needs a solution for unit prior variances".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        if solution.horizon != horizon.saturating_sub(2) {
            return Err(Error::Config(format!(
                "Bayes solution was built for horizon {} but the policy has horizon {}",
                solution.horizon + 2,
                horizon
            )));
        }
        Ok(Self { solution, horizon, counts: [0; 2], sums: [0.0; 2], round: 1, pending: None })
    }

    /// Solution for a horizon-`n` flat-prior policy.
    pub fn solve_for(horizon: usize, cfg: &EngineConfig) -> Result<BayesSolution> {
        BayesSolution::solve(1.0, 1.0, horizon.saturating_sub(2), cfg)
    }

    pub fn counts(&self) -> [usize; 2] {
        self.counts
    }
}

impl BanditPolicy for BayesPolicy<'_> {
    fn select(&mut self) -> Result<usize> {
        if self.pending.is_some() {
            return Err(Error::Protocol("select called twice without an observation".into()));
        }
        if self.round > self.horizon {
            return Err(Error::SequenceExhausted { round: self.round, horizon: self.horizon });
        }
        let arm = if self.counts[0] == 0 {
            0
        } else if self.counts[1] == 0 {
            1
        } else {
            let gap = self.sums[1] / self.counts[1] as f64 - self.sums[0] / self.counts[0] as f64;
            let c = self.solution.threshold(self.counts[0] - 1, self.counts[1] - 1)?;
            usize::from(gap > c)
        };
        self.pending = Some(arm);
        Ok(arm)
    }

    fn observe(&mut self, arm: usize, reward: f64) -> Result<()> {
        if self.pending != Some(arm) {
            return Err(Error::Protocol(format!("observed arm {arm} but {:?} was selected", self.pending)));
        }
        if !reward.is_finite() {
            return Err(Error::InvalidInput(format!("reward {reward} is not finite")));
        }
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        self.round += 1;
        self.pending = None;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::expected_positive_part;

    fn cfg() -> EngineConfig {
        EngineConfig::default()
    }

    #[test]
    fn trivial_horizons() {
        let s = BayesState::new(0.3, 1.0, -0.2, 0.5, 0).unwrap();
        assert_eq!(bayes_value(&s, &cfg()).unwrap(), 0.0);
        let s = BayesState { remaining: 1, ..s };
        assert!((bayes_value(&s, &cfg()).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(bayes_select(&s, &cfg()).unwrap(), 0);
        let s = BayesState { mean2: 0.4, ..s };
        assert_eq!(bayes_select(&s, &cfg()).unwrap(), 1);
    }

    #[test]
    fn closed_form_at_zero_gap() {
        let (a, b) = closed_form_n2(0.0);
        // Half-normal means with variances 1/2 and 1/6.
        assert!((a - expected_positive_part(0.0, 0.5)).abs() < 1e-15);
        assert!((b - expected_positive_part(0.0, 1.0 / 6.0)).abs() < 1e-15);
        assert!((a - 0.282095).abs() < 1e-6);
        assert!((b - 0.162867).abs() < 1e-6);
    }

    #[test]
    fn closed_form_threshold() {
        let c = bayes_threshold_n2();
        assert!((c - 0.116462).abs() < 1e-5, "{c}");
        let (a, b) = closed_form_n2(c);
        assert!((a - b).abs() < 1e-10);
        assert!((a - 0.34414).abs() < 1e-5, "{a}");
    }

    #[test]
    fn two_round_solution_matches_closed_form() {
        let sol = BayesSolution::solve(1.0, 0.5, 2, &cfg()).unwrap();
        for i in 0..=40 {
            let x = -1.0 + 0.05 * i as f64;
            let (a, b) = closed_form_n2(x);
            let (p1, p2) = sol.branch_values(x).unwrap();
            assert!((p1 - a).abs() < 1e-9 && (p2 - b).abs() < 1e-9, "{x}: {p1} {a} {p2} {b}");
            assert!((sol.value_at_gap(x) - a.max(b)).abs() < 1e-5);
        }
        assert!((sol.threshold(0, 0).unwrap() - bayes_threshold_n2()).abs() < 1e-7);
    }

    #[test]
    fn decisions_around_the_thresholds() {
        for (nu2, arm) in [(0.10, 0), (0.13, 1)] {
            let s = BayesState::new(0.0, 1.0, nu2, 0.5, 2).unwrap();
            assert_eq!(bayes_select(&s, &cfg()).unwrap(), arm);
        }
    }

    #[test]
    fn shift_covariance() {
        let s = BayesState::new(0.2, 0.8, -0.1, 0.3, 5).unwrap();
        let base = bayes_value(&s, &cfg()).unwrap();
        let shifted = BayesState { mean1: s.mean1 + 1.5, mean2: s.mean2 + 1.5, ..s };
        let v = bayes_value(&shifted, &cfg()).unwrap();
        assert!((v - base - 5.0 * 1.5).abs() < 1e-9);
    }

    #[test]
    fn known_arms_reduce_to_the_best_mean() {
        let s = BayesState::new(0.1, 0.0, 0.4, 0.0, 6).unwrap();
        assert!((bayes_value(&s, &cfg()).unwrap() - 6.0 * 0.4).abs() < 1e-12);
    }

    #[test]
    fn flat_policy_pulls_each_arm_first() {
        let sol = BayesPolicy::solve_for(6, &cfg()).unwrap();
        let mut p = BayesPolicy::new(&sol, 6).unwrap();
        assert_eq!(p.select().unwrap(), 0);
        p.observe(0, -1.0).unwrap();
        assert_eq!(p.select().unwrap(), 1);
        p.observe(1, 2.0).unwrap();
        assert_eq!(p.select().unwrap(), 1);
        assert!(BayesPolicy::new(&sol, 9).is_err());
    }
}
