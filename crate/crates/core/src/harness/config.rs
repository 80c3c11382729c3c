//! Experiment configuration: one JSON document plus dotted-path overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::estimator::FitWindow;
use crate::protocols::{CodewordDist, DecoderMode, Engine, ProtocolConfig, DEFAULT_MAX_ATTEMPTS};
use crate::ratefn::{RateParams, DEFAULT_N_MAX};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: ChannelSpec,
    pub codeword: CodewordDist,
    pub protocol: ProtocolSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    pub beta: f64,
    #[serde(default = "default_r")]
    pub r: u32,
    pub mode: DecoderMode,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u64,
}

fn default_r() -> u32 {
    1
}

fn default_max_attempts() -> u64 {
    DEFAULT_MAX_ATTEMPTS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub n_trials: u64,
    pub master_seed: u64,
    pub output_dir: PathBuf,
    pub engine: Engine,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            n_trials: 100_000,
            master_seed: 1,
            output_dir: PathBuf::from("runs"),
            engine: Engine::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub n_max: u32,
    /// Tail fit window; tail probabilities in `[10/n, 0.1]` when absent.
    pub fit_window: Option<FitWindow>,
    /// Lengths at which `n_b` is reported.
    pub b_grid: Vec<u64>,
    /// Relative tolerance of slope comparisons.
    pub tolerance: f64,
    /// Relative tolerance of waist location and main-body slope checks.
    pub waist_tolerance: f64,
    /// Lengths swept by the throughput command.
    pub throughput_b_grid: Vec<u64>,
    /// Fraction of the predicted throughput decay the fitted slope must reach.
    pub throughput_factor: f64,
    /// Waist detection ignores tail probabilities below `waist_min_count / n`.
    pub waist_min_count: f64,
    /// Accepted range of the changepoint growth factor from b = 200 to 400.
    pub growth_band: [f64; 2],
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            n_max: DEFAULT_N_MAX,
            fit_window: None,
            b_grid: vec![200, 400, 600, 800],
            tolerance: 0.15,
            waist_tolerance: 0.2,
            throughput_b_grid: (100..=400).step_by(50).collect(),
            throughput_factor: 0.7,
            waist_min_count: 10.0,
            growth_band: [3.5, 5.5],
        }
    }
}

impl ExperimentConfig {
    pub fn protocol_config(&self) -> ProtocolConfig {
        ProtocolConfig {
            beta: self.protocol.beta,
            r: self.protocol.r,
            mode: self.protocol.mode,
            max_attempts: self.protocol.max_attempts,
            spec: self.channel.clone(),
            dist: self.codeword.clone(),
        }
    }

    pub fn rate_params(&self) -> Result<RateParams> {
        RateParams::new(
            self.protocol.beta,
            self.codeword.lambda(),
            self.protocol.r,
            self.channel.clone(),
        )?
        .with_n_max(self.analysis.n_max)
    }

    /// Cross-field checks run before any computation.
    pub fn validate(&self) -> Result<()> {
        self.protocol_config().validate()?;
        self.rate_params()?;
        if self.run.n_trials == 0 {
            return Err(Error::config("run.n_trials", "must be at least 1"));
        }
        let a = &self.analysis;
        for (field, v) in [
            ("analysis.tolerance", a.tolerance),
            ("analysis.waist_tolerance", a.waist_tolerance),
            ("analysis.throughput_factor", a.throughput_factor),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, format!("{v} is not positive")));
            }
        }
        if a.b_grid.contains(&0) || a.throughput_b_grid.iter().any(|&b| b <= self.codeword.min_length()) {
            return Err(Error::config(
                "analysis",
                "b values must exceed the minimum codeword length",
            ));
        }
        if !(a.growth_band[0] > 0.0 && a.growth_band[0] <= a.growth_band[1]) {
            return Err(Error::config("analysis.growth_band", "needs 0 < lo <= hi"));
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(a.waist_min_count > 0.0) {
            return Err(Error::config("analysis.waist_min_count", "must be positive"));
        }
        Ok(())
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| {
            Error::config("config", e.to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and applies `overrides` before validation.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        apply_overrides(&mut value, overrides)?;
        Self::from_value(value)
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))[..12].to_string()
    }

    /// `<output_dir>/<hash>-<seed>`.
    pub fn run_dir(&self) -> PathBuf {
        self.run
            .output_dir
            .join(format!("{}-{}", self.hash(), self.run.master_seed))
    }
}

/// Sets `path.to.field = value` in a JSON tree. The value is read as JSON
/// when it parses and as a string otherwise.
pub fn apply_overrides(root: &mut Value, overrides: &[(String, String)]) -> Result<()> {
    for (path, raw) in overrides {
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        let mut node = &mut *root;
        let parts: Vec<&str> = path.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(Error::config(path.clone(), "malformed override path"));
        }
        for part in &parts[..parts.len() - 1] {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::config(path.clone(), format!("`{part}` is not inside an object")))?;
            node = obj
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::config(path.clone(), "parent is not an object"))?;
        obj.insert(parts[parts.len() - 1].to_string(), value);
    }
    Ok(())
}

/// Splits `--a.b v` and `--a.b=v` arguments into `(path, value)` pairs.
pub fn parse_override_args(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let Some(flag) = arg.strip_prefix("--") else {
            return Err(Error::config(arg.clone(), "expected an override of the form --path value"));
        };
        match flag.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::config(flag.to_string(), "override is missing its value"))?;
                out.push((flag.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}
