//! Sweep configuration files.
//!
//! ```toml
//! # Defaults for every grid.
//! seed = 1
//! reps = 10000
//! policies = ["UCB", "Thompson", "OCUCB", "GittinsFlat"]
//!
//! [[grid]]
//! horizon = 1000
//! arms = 5
//! delta_range = { start = 0.2, stop = 2.0, step = 0.2 }
//!
//! [[grid]]
//! horizon = 1000
//! arms = 10
//! deltas = [0.5, 1.0]
//! reps = 2000              # overrides the default
//! ```
//!
//! Every problem in a file is reported at once, before any simulation runs.

use std::collections::HashSet;
use std::path::Path;

use gittins_core::{PolicyKind, SweepConfig};
use serde::Deserialize;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    seed: Option<u64>,
    reps: Option<usize>,
    policies: Option<Vec<String>>,
    prior_variance: Option<f64>,
    #[serde(default)]
    grid: Vec<RawGrid>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    horizon: usize,
    arms: usize,
    deltas: Option<Vec<f64>>,
    delta_range: Option<DeltaRange>,
    reps: Option<usize>,
    seed: Option<u64>,
    policies: Option<Vec<String>>,
    prior_variance: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeltaRange {
    start: f64,
    stop: f64,
    step: f64,
}

impl DeltaRange {
    fn values(&self) -> Result<Vec<f64>, String> {
        if !(self.step > 0.0) || !(self.stop >= self.start) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(format!(
                "delta_range needs step > 0 and stop ≥ start (got start={}, stop={}, step={})",
                self.start, self.stop, self.step
            ));
        }
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        if count > 100_000 {
            return Err(format!("delta_range produces {count} values"));
        }
        // Round away the drift of repeated addition so values print cleanly.
        Ok((0..count).map(|i| ((self.start + self.step * i as f64) * 1e12).round() / 1e12).collect())
    }
}

/// Loads and validates a sweep file, returning one config per grid.
pub fn load(path: &Path) -> Result<Vec<SweepConfig>, Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![format!("cannot read {}: {e}", path.display())])?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Vec<SweepConfig>, Vec<String>> {
    let raw: RawFile = toml::from_str(text).map_err(|e| vec![e.to_string()])?;
    let mut problems = Vec::new();
    if raw.grid.is_empty() {
        problems.push("no [[grid]] entries".to_string());
    }
    let mut out = Vec::new();
    let mut files = HashSet::new();
    for (i, g) in raw.grid.iter().enumerate() {
        let here = |msg: String| format!("grid[{i}]: {msg}");
        let before = problems.len();
        let deltas = match (&g.deltas, &g.delta_range) {
            (Some(d), None) => d.clone(),
            (None, Some(r)) => r.values().unwrap_or_else(|e| {
                problems.push(here(e));
                Vec::new()
            }),
            (Some(_), Some(_)) => {
                problems.push(here("give either deltas or delta_range, not both".into()));
                Vec::new()
            }
            (None, None) => {
                problems.push(here("missing deltas or delta_range".into()));
                Vec::new()
            }
        };
        let deltas_reported = problems.len() > before;
        let before = problems.len();
        let names = g.policies.as_ref().or(raw.policies.as_ref());
        let mut policies = Vec::new();
        match names {
            None => problems.push(here("no policies given (set them per grid or at the top level)".into())),
            Some(names) => {
                for name in names {
                    match name.parse::<PolicyKind>() {
                        Ok(k) => policies.push(k),
                        Err(_) => problems.push(here(format!(
                            "unknown policy {name:?} (expected one of {})",
                            PolicyKind::ALL.map(|k| k.name()).join(", ")
                        ))),
                    }
                }
            }
        }
        let policies_reported = problems.len() > before;
        let cfg = SweepConfig {
            horizon: g.horizon,
            arms: g.arms,
            deltas,
            policies,
            reps: g.reps.or(raw.reps).unwrap_or(10_000),
            seed: g.seed.or(raw.seed).unwrap_or(0),
            prior_variance: g.prior_variance.or(raw.prior_variance).unwrap_or(1.0),
        };
        for p in cfg.problems() {
            let duplicate = (deltas_reported && p.starts_with("at least one delta"))
                || (policies_reported && p.starts_with("at least one policy"));
            if !duplicate {
                problems.push(here(p));
            }
        }
        if !files.insert((cfg.horizon, cfg.arms)) {
            problems.push(here(format!("another grid already writes n={} d={}", cfg.horizon, cfg.arms)));
        }
        out.push(cfg);
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(problems)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_defaults_and_ranges() {
        let cfgs = parse(
            r#"
            seed = 3
            policies = ["UCB", "gittinsflat"]
            [[grid]]
            horizon = 100
            arms = 2
            delta_range = { start = 0.0, stop = 0.3, step = 0.1 }
            [[grid]]
            horizon = 100
            arms = 5
            deltas = [1.0]
            reps = 7
            policies = ["Thompson"]
            "#,
        )
        .unwrap();
        assert_eq!(cfgs[0].deltas, vec![0.0, 0.1, 0.2, 0.3]);
        assert_eq!(cfgs[0].policies, vec![PolicyKind::Ucb, PolicyKind::GittinsFlat]);
        assert_eq!(cfgs[0].reps, 10_000);
        assert_eq!(cfgs[1].reps, 7);
        assert_eq!(cfgs[1].seed, 3);
    }

    #[test]
    fn reports_every_problem() {
        let errs = parse(
            r#"
            [[grid]]
            horizon = 100
            arms = 0
            deltas = [-1.0]
            reps = 0
            policies = ["KLUCB"]
            "#,
        )
        .unwrap_err();
        assert_eq!(errs.len(), 4, "{errs:?}");
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(parse("[[grid]]\nhorizon = 1\narms = 1\ndeltas = [0.0]\npolicies = [\"UCB\"]\nfoo = 1\n").is_err());
    }

    #[test]
    fn checked_in_configs_are_valid() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().is_some_and(|e| e == "toml") {
                let grids = load(&path).unwrap_or_else(|p| panic!("{}: {p:?}", path.display()));
                assert!(!grids.is_empty());
                seen += 1;
            }
        }
        assert!(seen >= 3);
    }
}
