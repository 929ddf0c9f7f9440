use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

/// Coefficients of the linear mean-field kernels `beta(mu)(x) = c_mean mean(mu) + c_local x`,
/// `sigma = sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub c_mean: f64,
    pub c_local: f64,
    pub sigma: f64,
}

/// Contents of a TOML config file; every field is optional and flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub experiment: Option<String>,
    pub level: Option<u32>,
    pub alpha: Option<f64>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub streams: Option<u64>,
    pub levels: Option<Vec<u32>>,
    pub replicates: Option<usize>,
    pub probe_set: Option<String>,
    pub out: Option<PathBuf>,
    pub kernel: Option<KernelSpec>,
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub level: u32,
    /// `None` keeps the experiment's default exponent.
    pub alpha: Option<f64>,
    pub n: usize,
    pub seed: u64,
    pub streams: u64,
    pub levels: Vec<u32>,
    pub replicates: usize,
    pub probe_set: String,
    pub out: PathBuf,
    pub kernel: Option<KernelSpec>,
}

fn line_of(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(1, |i| i + 1)
}

fn invalid(path: &Path, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

pub fn load(path: &Path) -> Result<(FileConfig, String), CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::ConfigRead {
        path: path.display().to_string(),
        source,
    })?;
    let cfg: FileConfig = toml::from_str(&text).map_err(|e| {
        let line = e.span().map_or(1, |s| {
            text[..s.start.min(text.len())].matches('\n').count() + 1
        });
        invalid(path, line, e.message().to_string())
    })?;
    Ok((cfg, text))
}

/// Checks value ranges; `source` is the config path and text when values came from a file.
pub fn validate(cfg: &ExperimentConfig, source: Option<(&Path, &str)>) -> Result<(), CliError> {
    let fail = |key: &str, msg: String| match source {
        Some((p, text)) => invalid(p, line_of(text, key), msg),
        None => CliError::Usage(msg),
    };
    if let Some(a) = cfg.alpha {
        if !(a > 1.0 / 3.0 && a < 0.5) {
            return Err(fail("alpha", format!("alpha = {a} must lie in (1/3, 1/2)")));
        }
    }
    if !(2..=16).contains(&cfg.level) {
        return Err(fail(
            "level",
            format!("level = {} must lie in 2..=16", cfg.level),
        ));
    }
    if cfg.n == 0 {
        return Err(fail("n", "particle count must be positive".into()));
    }
    if cfg.levels.iter().any(|l| !(2..=16).contains(l)) {
        return Err(fail("levels", "every level must lie in 2..=16".into()));
    }
    if cfg.replicates == 0 {
        return Err(fail("replicates", "replicates must be positive".into()));
    }
    if cfg.probe_set != "dictionary" {
        return Err(fail(
            "probe_set",
            format!(
                "unknown probe set '{}'; available: dictionary",
                cfg.probe_set
            ),
        ));
    }
    Ok(())
}
