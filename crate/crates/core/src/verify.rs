//! Executable checks of the analytical objects behind the index: the
//! stopping rule used to bracket it, the bracket itself, the break-even
//! functional `f(β)` and two Gaussian tail bounds.
//!
//! Inequalities with explicit constants are asserted; statistical checks
//! allow `3·stderr` of Monte-Carlo slack and are downgraded to report-only
//! when run with too few replications. Existential constants are fitted
//! and reported, never asserted.

use std::fmt;
use std::fmt::Write as _;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::approx::log_plus;
use crate::error::{Error, Result};
use crate::rng;
use crate::sim::summarize;
use crate::special::{erfc, FRAC_1_SQRT_2PI};
use crate::table::IndexTable;

/// Fewest replications for an asserted stopping-time check.
pub const MIN_TAU_REPS: usize = 1_000;
/// Fewest replications for an asserted tail-bound check.
pub const MIN_TAIL_REPS: usize = 10_000;

/// `τ = min{m, min{t ≥ 1/ν² : μ̂_t + sqrt((4/t) log(4tν²)) ≤ 0}}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    threshold: f64,
    horizon: usize,
}

impl StoppingRule {
    pub fn new(threshold: f64, horizon: usize) -> Result<Self> {
        if !(threshold < 0.0) || !threshold.is_finite() {
            return Err(Error::InvalidInput(format!("stopping threshold must be negative, got {threshold}")));
        }
        if horizon == 0 {
            return Err(Error::InvalidInput("stopping horizon must be at least 1".into()));
        }
        Ok(Self { threshold, horizon })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// First round at which stopping is allowed, `⌈1/ν²⌉`.
    pub fn first_round(&self) -> usize {
        ((1.0 / (self.threshold * self.threshold)).ceil() as usize).max(1)
    }

    /// Whether the rule stops at round `t` given the sum of the first `t` rewards.
    pub fn stops_at(&self, t: usize, sum: f64) -> bool {
        if t < self.first_round() {
            return false;
        }
        let tf = t as f64;
        let nu2 = self.threshold * self.threshold;
        sum / tf + ((4.0 / tf) * (4.0 * tf * nu2).ln()).sqrt() <= 0.0
    }
}

/// `τ` on the reward path; only the first `τ` rewards are read.
pub fn stopping_time(rule: &StoppingRule, path: &[f64]) -> Result<usize> {
    if path.len() < rule.horizon {
        return Err(Error::InvalidInput(format!(
            "path has {} rewards but the rule needs {}",
            path.len(),
            rule.horizon
        )));
    }
    Ok(stopping_time_with(rule, path.iter().copied()))
}

fn stopping_time_with(rule: &StoppingRule, rewards: impl Iterator<Item = f64>) -> usize {
    let mut sum = 0.0;
    for (i, y) in rewards.enumerate().take(rule.horizon) {
        let t = i + 1;
        sum += y;
        if t == rule.horizon || rule.stops_at(t, sum) {
            return t;
        }
    }
    rule.horizon
}

/// Outcome of a single check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Computed and shown, not asserted.
    Report,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "FAIL",
            Verdict::Report => "report",
        })
    }
}

/// One row of a verification report. `margin` is positive when the bound holds.
#[derive(Debug, Clone, PartialEq)]
pub struct MCCheckReport {
    pub name: String,
    pub estimate: f64,
    pub stderr: f64,
    pub bound: f64,
    pub margin: f64,
    pub reps: usize,
    pub verdict: Verdict,
}

impl MCCheckReport {
    /// `estimate ≤ bound`, with `slack_sd` standard errors of slack.
    fn upper(name: String, estimate: f64, stderr: f64, bound: f64, reps: usize, slack_sd: f64, asserted: bool) -> Self {
        let margin = bound + slack_sd * stderr - estimate;
        let verdict = match (asserted, margin >= 0.0) {
            (false, _) => Verdict::Report,
            (true, true) => Verdict::Pass,
            (true, false) => Verdict::Fail,
        };
        Self { name, estimate, stderr, bound, margin, reps, verdict }
    }

    /// `estimate ≥ bound`, with `slack_sd` standard errors of slack.
    fn lower(name: String, estimate: f64, stderr: f64, bound: f64, reps: usize, slack_sd: f64, asserted: bool) -> Self {
        let margin = estimate + slack_sd * stderr - bound;
        let verdict = match (asserted, margin >= 0.0) {
            (false, _) => Verdict::Report,
            (true, true) => Verdict::Pass,
            (true, false) => Verdict::Fail,
        };
        Self { name, estimate, stderr, bound, margin, reps, verdict }
    }

    fn report(name: String, estimate: f64, stderr: f64, reps: usize) -> Self {
        Self { name, estimate, stderr, bound: f64::NAN, margin: f64::NAN, reps, verdict: Verdict::Report }
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

/// Monte-Carlo mean of `τ` when rewards are `N(θ, 1)`, with the lower bound
/// `m/2` asserted for `θ ≥ 0` (needs at least [`MIN_TAU_REPS`] replications).
pub fn mc_expected_tau(rule: &StoppingRule, theta: f64, reps: usize, seed: u64) -> Result<MCCheckReport> {
    if reps == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    let taus: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|k| {
            let mut g = rng::stream(rng::derive_seed(seed, &[k]), 0);
            let path = std::iter::repeat_with(move || theta + g.sample::<f64, _>(StandardNormal));
            stopping_time_with(rule, path) as f64
        })
        .collect();
    let est = summarize(&taus)?;
    let name = format!("tau_mean(theta={theta},nu={},m={})", rule.threshold, rule.horizon);
    Ok(if theta >= 0.0 {
        let bound = rule.horizon as f64 / 2.0;
        MCCheckReport::lower(name, est.mean, est.stderr, bound, reps, 3.0, reps >= MIN_TAU_REPS)
    } else {
        MCCheckReport::report(name, est.mean, est.stderr, reps)
    })
}

/// `(E[τ] − 1)·ν²` from a report with `θ ≤ ν`: the smallest constant for
/// which the small-mean bound on `E[τ]` holds at this point.
pub fn fitted_tau_constant(report: &MCCheckReport, threshold: f64) -> f64 {
    (report.estimate - 1.0) * threshold * threshold
}

/// An entry whose exploration coefficient breaks the upper bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketViolation {
    pub t: usize,
    pub m: usize,
    pub beta: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketReport {
    pub checked: usize,
    pub violations: Vec<BracketViolation>,
    /// Largest `c` with `c·min{m/log₊^{3/2} m, mσ²/log₊^{1/2}(mσ²)} ≤ β` on every entry.
    pub fitted_lower_constant: f64,
    /// Entry attaining the fitted constant.
    pub tightest: (usize, usize),
    /// Smallest `bound − β` over checked entries.
    pub min_upper_slack: f64,
}

impl BracketReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `exp(γ²/(2σ²))`.
pub fn exploration_coefficient(gamma: f64, variance: f64) -> f64 {
    (gamma * gamma / (2.0 * variance)).exp()
}

/// `m / log^{3/2}(m)` for `m ≥ 2`.
pub fn beta_upper_bound(m: usize) -> f64 {
    let m = m as f64;
    m / m.ln().powf(1.5)
}

/// `min{m/log₊^{3/2}(m), mσ²/log₊^{1/2}(mσ²)}`.
pub fn beta_lower_shape(variance: f64, m: usize) -> f64 {
    let m = m as f64;
    let ms = m * variance;
    (m / log_plus(m).powf(1.5)).min(ms / log_plus(ms).sqrt())
}

/// Checks every entry with `m ≥ 2` against the upper bound on `β` and fits
/// the lower-bound constant.
pub fn check_thm1_bracket(table: &IndexTable) -> BracketReport {
    let mut checked = 0;
    let mut violations = Vec::new();
    let mut fitted = f64::INFINITY;
    let mut tightest = (0, 0);
    let mut min_slack = f64::INFINITY;
    for (t, m, gamma) in table.iter() {
        if m < 2 {
            continue;
        }
        checked += 1;
        let variance = 1.0 / t as f64;
        let beta = exploration_coefficient(gamma, variance);
        let bound = beta_upper_bound(m);
        min_slack = min_slack.min(bound - beta);
        if !(beta <= bound) {
            violations.push(BracketViolation { t, m, beta, bound });
        }
        let c = beta / beta_lower_shape(variance, m);
        if c < fitted {
            fitted = c;
            tightest = (t, m);
        }
    }
    BracketReport { checked, violations, fitted_lower_constant: fitted, tightest, min_upper_slack: min_slack }
}

/// `f(β) = (1/β)·sqrt(1/(2π)) − sqrt(log(β)/2)·erfc(sqrt(log β))`.
pub fn f_beta(beta: f64) -> f64 {
    let l = beta.ln();
    FRAC_1_SQRT_2PI / beta - (l / 2.0).sqrt() * erfc(l.sqrt())
}

/// `1/sqrt(8π)`, the limit of `f(β)·β·log β`.
pub const F_BETA_LIMIT: f64 = 0.199_471_140_200_716_35;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FBetaRow {
    pub beta: f64,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    /// `f(β)·β·log β`.
    pub scaled: f64,
}

impl FBetaRow {
    pub fn passed(&self) -> bool {
        self.lower <= self.value && self.value <= self.upper
    }
}

/// The two-sided bound `1/(10β log β) ≤ f(β) ≤ 1/(sqrt(8π)·β log β)` at each grid point (β ≥ 3).
pub fn check_f_beta(grid: &[f64]) -> Result<Vec<FBetaRow>> {
    grid.iter()
        .map(|&beta| {
            if !(beta >= 3.0) || !beta.is_finite() {
                return Err(Error::InvalidInput(format!("grid point {beta} is outside [3, ∞)")));
            }
            let bl = beta * beta.ln();
            let value = f_beta(beta);
            Ok(FBetaRow { beta, value, lower: 1.0 / (10.0 * bl), upper: F_BETA_LIMIT / bl, scaled: value * bl })
        })
        .collect()
}

/// Monte-Carlo frequency of an event over `reps` independent draws.
fn mc_frequency<F>(reps: usize, seed: u64, event: F) -> Result<(f64, f64)>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> bool + Sync,
{
    let hits: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|k| {
            let mut g = rng::stream(rng::derive_seed(seed, &[k]), 0);
            if event(&mut g) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let est = summarize(&hits)?;
    Ok((est.mean, est.stderr))
}

/// Monte-Carlo checks of the Gaussian tail bound `P{X ≥ x} ≤ exp(−(ν−x)²/(2σ²))`
/// and of the maximal inequality for a Gaussian random walk
/// `P{∃t ≤ n: S_t ≥ nΔ + sqrt(2n log(1/δ))} ≤ δ/sqrt(π log(1/δ))·exp(−nΔ²/2)`.
/// Also checks `E[X 1{X ≤ 0}] ≥ ν − σ/sqrt(2π)` for `ν < 0`.
pub fn mc_gaussian_tails(reps: usize, seed: u64) -> Result<Vec<MCCheckReport>> {
    if reps == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    let asserted = reps >= MIN_TAIL_REPS;
    let mut out = Vec::new();
    for (i, &(nu, sd, x)) in [(0.0f64, 1.0f64, 0.0f64), (0.0, 1.0, 1.0), (0.0, 1.0, 2.0), (-1.0, 2.0, 1.0), (-0.5, 0.5, 0.5)]
        .iter()
        .enumerate()
    {
        let (p, se) = mc_frequency(reps, rng::derive_seed(seed, &[1, i as u64]), |g| {
            nu + sd * g.sample::<f64, _>(StandardNormal) >= x
        })?;
        let bound = (-(nu - x) * (nu - x) / (2.0 * sd * sd)).exp();
        out.push(MCCheckReport::upper(format!("gaussian_tail(nu={nu},sd={sd},x={x})"), p, se, bound, reps, 3.0, asserted));
    }
    for (i, &(nu, sd)) in [(-1.0f64, 1.0f64), (-0.1, 2.0)].iter().enumerate() {
        let draws: Vec<f64> = (0..reps as u64)
            .into_par_iter()
            .map(|k| {
                let mut g = rng::stream(rng::derive_seed(seed, &[2, i as u64, k]), 0);
                let v = nu + sd * g.sample::<f64, _>(StandardNormal);
                v.min(0.0)
            })
            .collect();
        let est = summarize(&draws)?;
        let bound = nu - sd * FRAC_1_SQRT_2PI;
        out.push(MCCheckReport::lower(
            format!("gaussian_negative_part(nu={nu},sd={sd})"),
            est.mean,
            est.stderr,
            bound,
            reps,
            3.0,
            asserted,
        ));
    }
    for (i, &(n, gap, delta)) in [(100usize, 0.0f64, 0.1f64), (100, 0.1, 0.1), (50, 0.0, 0.01)].iter().enumerate() {
        let level = n as f64 * gap + (2.0 * n as f64 * (1.0 / delta).ln()).sqrt();
        let (p, se) = mc_frequency(reps, rng::derive_seed(seed, &[3, i as u64]), |g| {
            let mut s = 0.0;
            (0..n).any(|_| {
                s += g.sample::<f64, _>(StandardNormal);
                s >= level
            })
        })?;
        let l = (1.0 / delta).ln();
        let bound = delta / (std::f64::consts::PI * l).sqrt() * (-(n as f64) * gap * gap / 2.0).exp();
        out.push(MCCheckReport::upper(format!("walk_maximum(n={n},gap={gap},delta={delta})"), p, se, bound, reps, 3.0, asserted));
    }
    Ok(out)
}

/// Everything the verification suite computed.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub bracket: Option<BracketReport>,
    pub f_beta: Vec<FBetaRow>,
    pub checks: Vec<MCCheckReport>,
    pub warnings: Vec<String>,
}

/// Grid used for the `f(β)` bounds.
pub const F_BETA_GRID: [f64; 6] = [3.0, 10.0, 1e2, 1e3, 1e4, 1e6];

/// Runs every check. Statistical checks use `reps` replications.
pub fn run_suite(table: Option<&IndexTable>, reps: usize, seed: u64) -> Result<VerifyReport> {
    let mut warnings = Vec::new();
    if reps < MIN_TAU_REPS {
        warnings.push(format!("{reps} replications: stopping-time checks are report-only (need {MIN_TAU_REPS})"));
    }
    if reps < MIN_TAIL_REPS {
        warnings.push(format!("{reps} replications: tail-bound checks are report-only (need {MIN_TAIL_REPS})"));
    }
    let bracket = table.map(check_thm1_bracket);
    let f_beta = check_f_beta(&F_BETA_GRID)?;

    let mut checks = Vec::new();
    let stop = StoppingRule::new(-0.5, 1000)?;
    checks.push(mc_expected_tau(&stop, 0.0, reps, rng::derive_seed(seed, &[10]))?);
    let fast = StoppingRule::new(-1.0, 1000)?;
    let small = mc_expected_tau(&fast, -10.0, reps, rng::derive_seed(seed, &[11]))?;
    let c = fitted_tau_constant(&small, fast.threshold());
    checks.push(small);
    checks.push(MCCheckReport::report("tau_small_mean_constant(theta=-10,nu=-1)".into(), c, f64::NAN, reps));
    checks.extend(mc_gaussian_tails(reps, rng::derive_seed(seed, &[12]))?);
    Ok(VerifyReport { bracket, f_beta, checks, warnings })
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.bracket.as_ref().is_none_or(|b| b.passed())
            && self.f_beta.iter().all(|r| r.passed())
            && self.checks.iter().all(|c| c.passed())
    }

    /// Names of every failed check.
    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(b) = &self.bracket {
            for v in &b.violations {
                out.push(format!("beta_upper_bound(T={},m={}): beta={:.6e} > {:.6e}", v.t, v.m, v.beta, v.bound));
            }
        }
        for r in self.f_beta.iter().filter(|r| !r.passed()) {
            out.push(format!("f_beta_bounds(beta={})", r.beta));
        }
        for c in self.checks.iter().filter(|c| !c.passed()) {
            out.push(c.name.clone());
        }
        out
    }

    /// `%`-commented text, one check per row: `name estimate bound margin verdict`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for w in &self.warnings {
            let _ = writeln!(s, "% warning: {w}");
        }
        let _ = writeln!(s, "% columns: name estimate bound margin verdict");
        if let Some(b) = &self.bracket {
            let verdict = if b.passed() { Verdict::Pass } else { Verdict::Fail };
            let _ = writeln!(
                s,
                "beta_upper_bound(entries={}) {} {} {:.6e} {verdict}",
                b.checked,
                b.violations.len(),
                0,
                b.min_upper_slack
            );
            for v in &b.violations {
                let _ = writeln!(
                    s,
                    "beta_upper_bound(T={},m={}) {:.6e} {:.6e} {:.6e} {}",
                    v.t,
                    v.m,
                    v.beta,
                    v.bound,
                    v.bound - v.beta,
                    Verdict::Fail
                );
            }
            let _ = writeln!(
                s,
                "beta_lower_constant(T={},m={}) {:.6e} nan nan {}",
                b.tightest.0,
                b.tightest.1,
                b.fitted_lower_constant,
                Verdict::Report
            );
        }
        for r in &self.f_beta {
            let verdict = if r.passed() { Verdict::Pass } else { Verdict::Fail };
            let margin = (r.value - r.lower).min(r.upper - r.value);
            let _ = writeln!(s, "f_beta_bounds(beta={}) {:.6e} {:.6e} {:.6e} {verdict}", r.beta, r.value, r.lower, margin);
            let _ = writeln!(
                s,
                "f_beta_scaled(beta={}) {:.6e} {:.6e} {:.6e} {}",
                r.beta,
                r.scaled,
                F_BETA_LIMIT,
                F_BETA_LIMIT - r.scaled,
                Verdict::Report
            );
        }
        for c in &self.checks {
            let _ = writeln!(s, "{} {:.6e} {:.6e} {:.6e} {}", c.name, c.estimate, c.bound, c.margin, c.verdict);
        }
        s
    }
}
