//! Artifact writers. CSV is written by hand: `\n` endings and `Display`
//! formatting for floats, which is locale-free and round-trips.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::CcdfPoint;
use crate::protocols::TrialRecord;
use crate::ratefn::RateReport;

pub const TRIALS_HEADER: &str = "trial,length,attempts,delay,censored";

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::with_capacity(32 * records.len() + 64);
    out.push_str(TRIALS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.trial, r.length, r.attempts, r.delay, r.censored as u8
        );
    }
    out
}

pub fn write_trials(path: &Path, records: &[TrialRecord]) -> Result<()> {
    write_text(path, &trials_csv(records))
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, why: &str| Error::Parse {
        path: path.display().to_string(),
        reason: format!("line {line}: {why}"),
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(TRIALS_HEADER) {
        return Err(bad(1, "missing header"));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 5 {
            return Err(bad(i + 2, "expected 5 fields"));
        }
        let num = |s: &str| s.parse::<u64>().map_err(|_| bad(i + 2, "not an integer"));
        let censored = match f[4] {
            "0" | "false" => false,
            "1" | "true" => true,
            _ => return Err(bad(i + 2, "censored must be 0 or 1")),
        };
        out.push(TrialRecord {
            trial: num(f[0])?,
            length: num(f[1])?,
            attempts: num(f[2])?,
            delay: num(f[3])?,
            censored,
        });
    }
    if out.is_empty() {
        return Err(bad(2, "no trials"));
    }
    Ok(out)
}

pub fn ccdf_csv(points: &[CcdfPoint]) -> String {
    let mut out = String::from("value,tail_prob\n");
    for p in points {
        let _ = writeln!(out, "{},{}", p.value, p.tail_prob);
    }
    out
}

pub fn write_ccdf(path: &Path, points: &[CcdfPoint]) -> Result<()> {
    write_text(path, &ccdf_csv(points))
}

/// Run metadata; the only artifact carrying wall time and a timestamp.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub master_seed: u64,
    pub n_trials: u64,
    pub censored: u64,
    pub censored_fraction: f64,
    pub engine: String,
    pub rng: String,
    pub wall_time_s: f64,
    pub unix_time_s: u64,
    pub version: String,
    pub rates: Option<RateReport>,
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
