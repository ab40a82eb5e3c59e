//! Lookup table of `γ(0, 1/T, m)` for every `T + m ≤ n`.
//!
//! A single induction started at σ² = 1 with horizon `h` passes through the
//! variance `1/T` at stage `h - T + 1`, so it yields the whole anti-diagonal
//! `T + m = h + 1`. Horizons are independent jobs.
//!
//! On disk the table is plain text:
//!
//! ```text
//! % gittins index table
//! % format=1
//! % n=100
//! % tol=1e-5
//! % columns: T m gamma(0,1/T,m)
//! 1 1 0.0000000000000000e0
//! 1 2 1.9518...e-1
//! ```
//!
//! Rows are ordered by `T` then `m` and values carry 17 significant digits,
//! which round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::engine::{backward_induction, EngineConfig};
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexTable {
    horizon: usize,
    tol: f64,
    entries: Vec<f64>,
}

/// Number of `(T, m)` pairs with `T, m ≥ 1` and `T + m ≤ n`.
pub fn entry_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl IndexTable {
    /// Wraps precomputed entries in row order (`T` ascending, then `m`).
    pub fn from_entries(horizon: usize, tol: f64, entries: Vec<f64>) -> Result<Self> {
        if horizon < 2 {
            return Err(Error::InvalidInput(format!("table horizon must be at least 2, got {horizon}")));
        }
        if entries.len() != entry_count(horizon) {
            return Err(Error::InvalidInput(format!(
                "a horizon-{horizon} table has {} entries, got {}",
                entry_count(horizon),
                entries.len()
            )));
        }
        Ok(Self { horizon, tol, entries })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn offset(&self, t: usize, m: usize) -> usize {
        // Rows T = 1..T-1 hold n-1, n-2, ... entries.
        let n = self.horizon;
        (t - 1) * n - (t - 1) * t / 2 + (m - 1)
    }

    /// `γ(0, 1/T, m)`.
    pub fn lookup(&self, t: usize, m: usize) -> Result<f64> {
        if t == 0 || m == 0 || t + m > self.horizon {
            return Err(Error::OutOfRange { t, m, n: self.horizon });
        }
        Ok(self.entries[self.offset(t, m)])
    }

    /// All entries as `(T, m, γ(0, 1/T, m))` in row order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.horizon;
        (1..n).flat_map(move |t| (1..=n - t).map(move |m| (t, m))).zip(self.entries.iter()).map(|((t, m), &v)| (t, m, v))
    }

    /// Builds the table, running one induction per horizon `h ∈ 1..n`.
    pub fn build(n: usize, cfg: &EngineConfig) -> Result<Self> {
        Self::build_with_stats(n, cfg).map(|(table, _)| table)
    }

    /// As [`IndexTable::build`], also reporting spline sizes and accuracy.
    pub fn build_with_stats(n: usize, cfg: &EngineConfig) -> Result<(Self, BuildStats)> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("table horizon must be at least 2, got {n}")));
        }
        let diagonals: Vec<Result<Diagonal>> = (1..n).into_par_iter().map(|h| diagonal(h, cfg)).collect();
        let mut table = Self { horizon: n, tol: cfg.fit.tol, entries: vec![f64::NAN; entry_count(n)] };
        let mut stats = BuildStats { entries: table.len(), max_segments: 0, achieved_tol: 0.0 };
        for (h, diag) in (1..n).zip(diagonals) {
            let diag = diag?;
            stats.max_segments = stats.max_segments.max(diag.max_segments);
            stats.achieved_tol = stats.achieved_tol.max(diag.achieved);
            // values[k-1] = γ(0, 1/(h-k+1), k)
            for (k, value) in (1..=h).zip(diag.values) {
                let at = table.offset(h - k + 1, k);
                table.entries[at] = value;
            }
        }
        Ok((table, stats))
    }

    /// Writes the text format described in the module docs.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let mut out = String::with_capacity(self.entries.len() * 32 + 128);
        out.push_str("% gittins index table\n");
        let _ = writeln!(out, "% format={FORMAT_VERSION}");
        let _ = writeln!(out, "% n={}", self.horizon);
        let _ = writeln!(out, "% tol={:e}", self.tol);
        out.push_str("% columns: T m gamma(0,1/T,m)\n");
        for (t, m, v) in self.iter() {
            let _ = writeln!(out, "{t} {m} {v:.16e}");
        }
        w.write_all(out.as_bytes())?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self> {
        let mut format: Option<u32> = None;
        let mut horizon: Option<usize> = None;
        let mut tol = f64::NAN;
        let mut entries = Vec::new();
        let mut expected: Option<Box<dyn Iterator<Item = (usize, usize)>>> = None;
        let mut line_no = 0;

        for line in r.lines() {
            line_no += 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('%') {
                if expected.is_some() {
                    continue;
                }
                for token in comment.split_whitespace() {
                    let Some((key, value)) = token.split_once('=') else { continue };
                    let bad = |what: &str| Error::Format { line: line_no, msg: format!("bad {what} value {value:?}") };
                    match key {
                        "format" => format = Some(value.parse().map_err(|_| bad("format"))?),
                        "n" => horizon = Some(value.parse().map_err(|_| bad("n"))?),
                        "tol" => tol = value.parse().map_err(|_| bad("tol"))?,
                        _ => {}
                    }
                }
                continue;
            }
            if expected.is_none() {
                match format {
                    Some(FORMAT_VERSION) => {}
                    Some(v) => {
                        return Err(Error::Format { line: line_no, msg: format!("unsupported format version {v}") })
                    }
                    None => return Err(Error::Format { line: line_no, msg: "missing format header".into() }),
                }
                let n = horizon.ok_or_else(|| Error::Format { line: line_no, msg: "missing n header".into() })?;
                if n < 2 {
                    return Err(Error::Format { line: line_no, msg: format!("horizon {n} is below 2") });
                }
                entries.reserve(entry_count(n));
                expected = Some(Box::new((1..n).flat_map(move |t| (1..=n - t).map(move |m| (t, m)))));
            }
            let mut fields = trimmed.split_whitespace();
            let parsed = (|| {
                let t: usize = fields.next()?.parse().ok()?;
                let m: usize = fields.next()?.parse().ok()?;
                let v: f64 = fields.next()?.parse().ok()?;
                if fields.next().is_some() {
                    return None;
                }
                Some((t, m, v))
            })();
            let (t, m, v) =
                parsed.ok_or_else(|| Error::Format { line: line_no, msg: format!("malformed row {trimmed:?}") })?;
            match expected.as_mut().and_then(|it| it.next()) {
                Some((et, em)) if (et, em) == (t, m) => entries.push(v),
                Some((et, em)) => {
                    return Err(Error::Format {
                        line: line_no,
                        msg: format!("expected entry (T={et}, m={em}), found (T={t}, m={m})"),
                    })
                }
                None => {
                    return Err(Error::Format { line: line_no, msg: format!("unexpected extra entry (T={t}, m={m})") })
                }
            }
        }

        let n = horizon.ok_or_else(|| Error::Format { line: line_no, msg: "missing n header".into() })?;
        if format != Some(FORMAT_VERSION) {
            return Err(Error::Format { line: line_no, msg: "missing or unsupported format header".into() });
        }
        if let Some((t, m)) = expected.as_mut().and_then(|it| it.next()).or_else(|| {
            if entries.is_empty() && n >= 2 {
                Some((1, 1))
            } else {
                None
            }
        }) {
            return Err(Error::Format { line: line_no, msg: format!("table truncated: missing entry (T={t}, m={m})") });
        }
        Self::from_entries(n, tol, entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path)?;
        Self::read_from(BufReader::new(file))
    }
}

/// Size and accuracy of a table build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildStats {
    pub entries: usize,
    /// Largest number of spline pieces in any stage.
    pub max_segments: usize,
    /// Largest fit deviation accepted in any stage.
    pub achieved_tol: f64,
}

struct Diagonal {
    values: Vec<f64>,
    max_segments: usize,
    achieved: f64,
}

/// `γ(0, 1/(h-k+1), k)` for `k = 1..=h`.
fn diagonal(h: usize, cfg: &EngineConfig) -> Result<Diagonal> {
    let mut values = Vec::with_capacity(h);
    let mut max_segments = 0;
    let mut achieved: f64 = 0.0;
    backward_induction(1.0, h, cfg, |v| {
        values.push(v.zero_mean_index());
        max_segments = max_segments.max(v.segment_count());
        achieved = achieved.max(v.achieved_tol());
    })
    .map_err(|e| Error::TableBuild {
        horizon: h,
        // Stage k = values.len() + 1 failed; it works at variance 1/(h-k+1).
        t: h - values.len(),
        source: Box::new(e),
    })?;
    Ok(Diagonal { values, max_segments, achieved })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> IndexTable {
        IndexTable::build(6, &EngineConfig::default()).unwrap()
    }

    #[test]
    fn horizon_two_has_single_zero_entry() {
        let t = IndexTable::build(2, &EngineConfig::default()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.lookup(1, 1).unwrap().to_bits(), 0f64.to_bits());
    }

    #[test]
    fn horizon_three_matches_two_round_index() {
        let t = IndexTable::build(3, &EngineConfig::default()).unwrap();
        assert!((t.lookup(1, 2).unwrap() - 0.195183).abs() < 1e-4);
        assert_eq!(t.lookup(2, 1).unwrap(), 0.0);
        assert_eq!(t.lookup(1, 1).unwrap(), 0.0);
    }

    #[test]
    fn lookup_range() {
        let t = small();
        assert!(t.lookup(0, 1).is_err());
        assert!(t.lookup(1, 0).is_err());
        assert!(matches!(t.lookup(3, 4), Err(Error::OutOfRange { t: 3, m: 4, n: 6 })));
        assert!(t.lookup(3, 3).is_ok());
        assert!((t.lookup(2, 2).unwrap() - 0.112689).abs() < 1e-4);
    }

    #[test]
    fn coverage_and_row_order() {
        let t = small();
        let keys: Vec<(usize, usize)> = t.iter().map(|(a, b, _)| (a, b)).collect();
        assert_eq!(keys.len(), entry_count(6));
        assert!(keys.iter().all(|&(a, b)| a >= 1 && b >= 1 && a + b <= 6));
        assert_eq!(entry_count(100), 4950);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let t = small();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = IndexTable::read_from(&buf[..]).unwrap();
        assert_eq!(back.horizon(), 6);
        for ((_, _, a), (_, _, b)) in t.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_file_names_missing_entry() {
        let t = small();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cut: Vec<&str> = text.lines().take(5 + 7).collect();
        let err = IndexTable::read_from(cut.join("\n").as_bytes()).unwrap_err();
        let msg = err.to_string();
        // Rows for T=1 are m=1..5, then T=2 starts with m=1,2; next missing is (2, 3).
        assert!(msg.contains("(T=2, m=3)"), "{msg}");
    }

    #[test]
    fn malformed_and_mismatched_rows_are_rejected() {
        let bad_version = "% format=2\n% n=3\n1 1 0\n";
        assert!(matches!(IndexTable::read_from(bad_version.as_bytes()), Err(Error::Format { line: 3, .. })));
        let garbled = "% format=1\n% n=3\n1 1 zero\n";
        assert!(matches!(IndexTable::read_from(garbled.as_bytes()), Err(Error::Format { line: 3, .. })));
        let out_of_order = "% format=1\n% n=3\n1 2 0.1\n";
        assert!(IndexTable::read_from(out_of_order.as_bytes()).is_err());
        let extra = "% format=1\n% n=2\n1 1 0\n1 2 0\n";
        assert!(matches!(IndexTable::read_from(extra.as_bytes()), Err(Error::Format { line: 4, .. })));
        let no_header = "1 1 0\n";
        assert!(IndexTable::read_from(no_header.as_bytes()).is_err());
    }
}
