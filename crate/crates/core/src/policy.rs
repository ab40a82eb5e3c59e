//! Arm-selection strategies.
//!
//! | kind            | index of arm `i` in round `t`                          |
//! |-----------------|--------------------------------------------------------|
//! | `GittinsFlat`   | `μ̂_i + γ(0, 1/T_i, n-t+1)` from an [`IndexTable`]       |
//! | `GittinsPrior`  | `γ(ν_i(t-1), σ_i²(t-1), n-t+1)` from an [`IndexEngine`] |
//! | `GittinsApprox` | `μ̂_i + γ̃(0, 1/T_i, n-t+1)`                             |
//! | `Ucb`           | `μ̂_i + sqrt(2 log(t) / T_i)`                            |
//! | `Ocucb`         | `μ̂_i + sqrt(3 log(2n/t) / T_i)`                         |
//! | `Thompson`      | a draw from `N(μ̂_i, 1/(T_i+1))`                         |
//!
//! Every kind except `GittinsPrior` starts with a flat prior and plays each
//! arm once in rounds `1..=d`. Ties go to the lowest arm index.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::approx::ApproxParams;
use crate::engine::{posterior_update, IndexEngine, Posterior};
use crate::error::{Error, Result};
use crate::rng;
use crate::table::IndexTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    GittinsFlat,
    GittinsPrior,
    GittinsApprox,
    Ucb,
    Ocucb,
    Thompson,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::GittinsFlat,
        PolicyKind::GittinsPrior,
        PolicyKind::GittinsApprox,
        PolicyKind::Ucb,
        PolicyKind::Ocucb,
        PolicyKind::Thompson,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::GittinsFlat => "GittinsFlat",
            PolicyKind::GittinsPrior => "GittinsPrior",
            PolicyKind::GittinsApprox => "GittinsApprox",
            PolicyKind::Ucb => "UCB",
            PolicyKind::Ocucb => "OCUCB",
            PolicyKind::Thompson => "Thompson",
        }
    }

    /// Whether the policy starts from the improper flat prior.
    pub fn is_flat(&self) -> bool {
        !matches!(self, PolicyKind::GittinsPrior)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub arms: usize,
    pub horizon: usize,
    /// Per-arm prior, required by `GittinsPrior` only.
    pub prior: Option<Vec<Posterior>>,
}

impl PolicySpec {
    pub fn flat(kind: PolicyKind, arms: usize, horizon: usize) -> Result<Self> {
        let spec = Self { kind, arms, horizon, prior: None };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_prior(arms_prior: Vec<Posterior>, horizon: usize) -> Result<Self> {
        let spec = Self { kind: PolicyKind::GittinsPrior, arms: arms_prior.len(), horizon, prior: Some(arms_prior) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        if self.arms == 0 {
            return Err(Error::InvalidInput("need at least one arm".into()));
        }
        match (&self.kind, &self.prior) {
            (PolicyKind::GittinsPrior, Some(p)) => {
                if p.len() != self.arms {
                    return Err(Error::InvalidInput(format!("prior has {} arms, spec has {}", p.len(), self.arms)));
                }
                if p.iter().any(|q| !(q.variance > 0.0)) {
                    return Err(Error::InvalidInput("GittinsPrior needs every prior variance > 0".into()));
                }
            }
            (PolicyKind::GittinsPrior, None) => {
                return Err(Error::InvalidInput("GittinsPrior needs a prior".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Where index policies get their exploration bonuses.
#[derive(Debug, Clone, Copy, Default)]
pub struct IndexSource<'a> {
    pub table: Option<&'a IndexTable>,
    pub engine: Option<&'a IndexEngine>,
}

impl<'a> IndexSource<'a> {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn table(table: &'a IndexTable) -> Self {
        Self { table: Some(table), engine: None }
    }

    pub fn engine(engine: &'a IndexEngine) -> Self {
        Self { table: None, engine: Some(engine) }
    }
}

/// Sufficient statistics of one episode.
#[derive(Debug, Clone)]
pub struct PolicyState {
    counts: Vec<usize>,
    sums: Vec<f64>,
    posteriors: Vec<Posterior>,
    /// The round about to be played, starting at 1.
    round: usize,
    pending: Option<usize>,
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
}

impl PolicyState {
    pub fn new(spec: &PolicySpec, seed: u64) -> Self {
        let posteriors = spec.prior.clone().unwrap_or_default();
        Self {
            counts: vec![0; spec.arms],
            sums: vec![0.0; spec.arms],
            posteriors,
            round: 1,
            pending: None,
            rng: rng::stream(seed, 0),
            scratch: Vec::with_capacity(spec.arms),
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn round(&self) -> usize {
        self.round
    }

    /// `μ̂_i`, defined once the arm has been pulled.
    pub fn empirical_mean(&self, arm: usize) -> Option<f64> {
        (self.counts[arm] > 0).then(|| self.sums[arm] / self.counts[arm] as f64)
    }

    pub fn posterior(&self, arm: usize) -> Option<Posterior> {
        self.posteriors.get(arm).copied()
    }
}

/// A strategy that picks arms and learns from rewards.
pub trait BanditPolicy {
    fn select(&mut self) -> Result<usize>;
    fn observe(&mut self, arm: usize, reward: f64) -> Result<()>;
}

/// `sqrt(2 log(t) / T)`.
pub fn ucb_bonus(count: usize, round: usize) -> f64 {
    if count == 0 {
        return f64::INFINITY;
    }
    (2.0 * (round as f64).ln() / count as f64).sqrt()
}

/// `sqrt(3 log(2n/t) / T)`.
pub fn ocucb_bonus(count: usize, round: usize, horizon: usize) -> f64 {
    if count == 0 {
        return f64::INFINITY;
    }
    (3.0 / count as f64 * (2.0 * horizon as f64 / round as f64).ln()).sqrt()
}

/// One Thompson draw from `N(μ̂, 1/(T+1))`, or `N(0, 1)` for an unpulled arm.
pub fn thompson_draw<R: Rng>(empirical_mean: Option<f64>, count: usize, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    empirical_mean.unwrap_or(0.0) + z / ((count + 1) as f64).sqrt()
}

/// Lowest index among the maxima.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > best_value || (i == 0 && v == best_value) {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Index scores of every arm in the current round.
pub fn arm_scores(spec: &PolicySpec, state: &mut PolicyState, source: IndexSource<'_>) -> Result<Vec<f64>> {
    let mut scores = Vec::with_capacity(spec.arms);
    fill_scores(spec, state, source, &mut scores)?;
    Ok(scores)
}

fn fill_scores(spec: &PolicySpec, state: &mut PolicyState, source: IndexSource<'_>, scores: &mut Vec<f64>) -> Result<()> {
    scores.clear();
    let t = state.round;
    let n = spec.horizon;
    if t > n {
        return Err(Error::SequenceExhausted { round: t, horizon: n });
    }
    let m = n - t + 1;
    match spec.kind {
        PolicyKind::GittinsPrior => {
            let engine = source.engine.ok_or_else(|| Error::Config("GittinsPrior needs an index engine".into()))?;
            for p in &state.posteriors {
                scores.push(p.mean + engine.bonus(p.variance, m)?);
            }
        }
        PolicyKind::GittinsFlat => {
            let table = source.table.ok_or_else(|| Error::Config("GittinsFlat needs an index table".into()))?;
            for arm in 0..spec.arms {
                let c = state.counts[arm];
                scores.push(match state.empirical_mean(arm) {
                    Some(mu) => mu + table.lookup(c, m)?,
                    None => f64::INFINITY,
                });
            }
        }
        PolicyKind::GittinsApprox => {
            let approx = ApproxParams::default();
            for arm in 0..spec.arms {
                let c = state.counts[arm];
                scores.push(match state.empirical_mean(arm) {
                    Some(mu) => mu + approx.bonus(1.0 / c as f64, m),
                    None => f64::INFINITY,
                });
            }
        }
        PolicyKind::Ucb => {
            for arm in 0..spec.arms {
                let mu = state.empirical_mean(arm).unwrap_or(0.0);
                scores.push(mu + ucb_bonus(state.counts[arm], t));
            }
        }
        PolicyKind::Ocucb => {
            for arm in 0..spec.arms {
                let mu = state.empirical_mean(arm).unwrap_or(0.0);
                scores.push(mu + ocucb_bonus(state.counts[arm], t, n));
            }
        }
        PolicyKind::Thompson => {
            for arm in 0..spec.arms {
                let mu = state.empirical_mean(arm);
                let c = state.counts[arm];
                scores.push(thompson_draw(mu, c, &mut state.rng));
            }
        }
    }
    Ok(())
}

/// Chooses the arm for the current round and records it as pending.
pub fn select_arm(spec: &PolicySpec, state: &mut PolicyState, source: IndexSource<'_>) -> Result<usize> {
    if state.pending.is_some() {
        return Err(Error::Protocol("select called twice without an observation".into()));
    }
    if state.round > spec.horizon {
        return Err(Error::SequenceExhausted { round: state.round, horizon: spec.horizon });
    }
    let arm = match (spec.kind.is_flat(), state.counts.iter().position(|&c| c == 0)) {
        (true, Some(unpulled)) => unpulled,
        _ => {
            let mut scores = std::mem::take(&mut state.scratch);
            let filled = fill_scores(spec, state, source, &mut scores);
            let best = filled.map(|()| argmax(scores.iter().copied()));
            state.scratch = scores;
            best?
        }
    };
    state.pending = Some(arm);
    Ok(arm)
}

/// Records the reward of the pending arm and advances the round.
pub fn observe(spec: &PolicySpec, state: &mut PolicyState, arm: usize, reward: f64) -> Result<()> {
    match state.pending {
        Some(p) if p == arm => {}
        Some(p) => return Err(Error::Protocol(format!("observed arm {arm} but arm {p} was selected"))),
        None => return Err(Error::Protocol(format!("observed arm {arm} with no pending selection"))),
    }
    if !reward.is_finite() {
        return Err(Error::InvalidInput(format!("reward {reward} is not finite")));
    }
    if spec.kind == PolicyKind::GittinsPrior {
        state.posteriors[arm] = posterior_update(state.posteriors[arm], reward)?;
    }
    state.counts[arm] += 1;
    state.sums[arm] += reward;
    state.round += 1;
    state.pending = None;
    Ok(())
}

/// A policy bound to its index source.
#[derive(Debug, Clone)]
pub struct Policy<'a> {
    spec: PolicySpec,
    state: PolicyState,
    source: IndexSource<'a>,
}

impl<'a> Policy<'a> {
    pub fn new(spec: PolicySpec, source: IndexSource<'a>, seed: u64) -> Result<Self> {
        spec.validate()?;
        match spec.kind {
            PolicyKind::GittinsFlat => {
                let table = source.table.ok_or_else(|| Error::Config("GittinsFlat needs an index table".into()))?;
                if table.horizon() < spec.horizon {
                    return Err(Error::Config(format!(
                        "index table covers horizon {} but the policy needs {}",
                        table.horizon(),
                        spec.horizon
                    )));
                }
            }
            PolicyKind::GittinsPrior if source.engine.is_none() => {
                return Err(Error::Config("GittinsPrior needs an index engine".into()));
            }
            _ => {}
        }
        let state = PolicyState::new(&spec, seed);
        Ok(Self { spec, state, source })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }
}

impl BanditPolicy for Policy<'_> {
    fn select(&mut self) -> Result<usize> {
        select_arm(&self.spec, &mut self.state, self.source)
    }

    fn observe(&mut self, arm: usize, reward: f64) -> Result<()> {
        observe(&self.spec, &mut self.state, arm, reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineConfig;

    #[test]
    fn flat_policies_play_each_arm_once() {
        for kind in [PolicyKind::Ucb, PolicyKind::Ocucb, PolicyKind::Thompson, PolicyKind::GittinsApprox] {
            let spec = PolicySpec::flat(kind, 3, 10).unwrap();
            let mut p = Policy::new(spec, IndexSource::none(), 1).unwrap();
            for t in 0..3 {
                let arm = p.select().unwrap();
                assert_eq!(arm, t, "{kind}");
                p.observe(arm, -5.0).unwrap();
            }
        }
    }

    #[test]
    fn gittins_flat_round_two_plays_arm_two() {
        let table = IndexTable::build(5, &EngineConfig::default()).unwrap();
        let spec = PolicySpec::flat(PolicyKind::GittinsFlat, 3, 5).unwrap();
        let mut p = Policy::new(spec, IndexSource::table(&table), 0).unwrap();
        let a = p.select().unwrap();
        p.observe(a, 100.0).unwrap();
        assert_eq!(p.select().unwrap(), 1);
    }

    #[test]
    fn bonus_formulas() {
        let e = std::f64::consts::E;
        // sqrt(2 log t / T) with log t = 1
        assert!(((2.0 * e.ln()).sqrt() - 2f64.sqrt()).abs() < 1e-15);
        assert!((ucb_bonus(1, 3) - (2.0 * 3f64.ln()).sqrt()).abs() < 1e-15);
        assert!((ocucb_bonus(3, 50, 50) - 2f64.ln().sqrt()).abs() < 1e-15);
        assert!((2f64.ln().sqrt() - 0.83255).abs() < 1e-5);
        assert_eq!(ucb_bonus(0, 5), f64::INFINITY);
    }

    #[test]
    fn observe_updates_statistics() {
        let spec = PolicySpec::flat(PolicyKind::Ucb, 2, 4).unwrap();
        let mut p = Policy::new(spec, IndexSource::none(), 0).unwrap();
        let a = p.select().unwrap();
        p.observe(a, 0.75).unwrap();
        assert_eq!(p.state().counts(), &[1, 0]);
        assert_eq!(p.state().empirical_mean(0), Some(0.75));
        assert_eq!(p.state().round(), 2);
    }

    #[test]
    fn prior_policy_updates_posterior() {
        let engine = IndexEngine::new(EngineConfig::default());
        let prior = vec![Posterior::new(0.0, 1.0).unwrap(), Posterior::new(-10.0, 1.0).unwrap()];
        let spec = PolicySpec::with_prior(prior, 3).unwrap();
        let mut p = Policy::new(spec, IndexSource::engine(&engine), 0).unwrap();
        let a = p.select().unwrap();
        assert_eq!(a, 0);
        p.observe(a, 1.0).unwrap();
        assert_eq!(p.state().posterior(0), Some(Posterior { mean: 0.5, variance: 0.5 }));
    }

    #[test]
    fn prior_spec_validation() {
        assert!(PolicySpec::with_prior(vec![Posterior::new(0.0, 0.0).unwrap()], 3).is_err());
        let mut spec = PolicySpec::flat(PolicyKind::Ucb, 2, 3).unwrap();
        spec.kind = PolicyKind::GittinsPrior;
        assert!(spec.validate().is_err());
        assert!(PolicySpec::flat(PolicyKind::Ucb, 0, 3).is_err());
    }

    #[test]
    fn protocol_errors() {
        let spec = PolicySpec::flat(PolicyKind::Ucb, 2, 1).unwrap();
        let mut p = Policy::new(spec, IndexSource::none(), 0).unwrap();
        assert!(matches!(p.observe(0, 1.0), Err(Error::Protocol(_))));
        let a = p.select().unwrap();
        assert!(matches!(p.select(), Err(Error::Protocol(_))));
        assert!(matches!(p.observe(1 - a, 1.0), Err(Error::Protocol(_))));
        p.observe(a, 1.0).unwrap();
        assert!(matches!(p.observe(a, 1.0), Err(Error::Protocol(_))));
        assert!(matches!(p.select(), Err(Error::SequenceExhausted { round: 2, horizon: 1 })));
    }

    #[test]
    fn missing_sources_are_configuration_errors() {
        let spec = PolicySpec::flat(PolicyKind::GittinsFlat, 2, 10).unwrap();
        assert!(matches!(Policy::new(spec.clone(), IndexSource::none(), 0), Err(Error::Config(_))));
        let small = IndexTable::build(4, &EngineConfig::default()).unwrap();
        assert!(matches!(Policy::new(spec, IndexSource::table(&small), 0), Err(Error::Config(_))));
    }

    #[test]
    fn ties_go_to_lowest_arm() {
        assert_eq!(argmax([1.0, 3.0, 3.0, 2.0].into_iter()), 1);
        assert_eq!(argmax([f64::INFINITY, f64::INFINITY].into_iter()), 0);
        assert_eq!(argmax([f64::NEG_INFINITY, f64::NEG_INFINITY].into_iter()), 0);
    }

    #[test]
    fn policy_names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>().unwrap(), k);
        }
        assert_eq!("ucb".parse::<PolicyKind>().unwrap(), PolicyKind::Ucb);
        assert!("klucb".parse::<PolicyKind>().is_err());
    }
}
