//! Run configuration: one flat JSON document, every key mirrored by a CLI
//! flag, flags win. Relative paths are resolved against the directory the
//! config file lives in.

use std::fs;
use std::path::{Path, PathBuf};

use aire_core::attention::validate_bins;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Everything a `report` run needs. Path fields are optional so the other
/// subcommands can share the same document with only the keys they use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub questions: Option<PathBuf>,
    pub scene_graphs: Option<PathBuf>,
    pub programs: Option<PathBuf>,
    pub fixations: Option<PathBuf>,
    /// Directory of precomputed dense maps (`<question>__<source>.json|csv`).
    pub attention_maps: Option<PathBuf>,
    /// Directory of per-question proposal files (`<question>.json`).
    pub proposals: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
    pub cooccurrence: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub k: usize,
    pub map_size: usize,
    pub sigma: f64,
    pub temporal_bins: Vec<(f64, f64)>,
    pub phi: f64,
    pub c: u64,
    pub epsilon_kl: f64,
    pub strict_relate: bool,
    /// Worker count; `None` means one per hardware thread.
    pub jobs: Option<usize>,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            questions: None,
            scene_graphs: None,
            programs: None,
            fixations: None,
            attention_maps: None,
            proposals: None,
            outcomes: None,
            cooccurrence: None,
            out_dir: None,
            k: 20,
            map_size: 256,
            sigma: 9.0,
            temporal_bins: vec![(0.0, 1000.0), (1000.0, 2000.0), (2000.0, 3000.0)],
            phi: 0.5,
            c: 300_000,
            epsilon_kl: 1e-8,
            strict_relate: false,
            jobs: None,
            format: OutputFormat::Json,
        }
    }
}

/// CLI-side overrides; `None` keeps the config (or default) value. The
/// `strict_relate` flag can only switch the option on.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub k: Option<usize>,
    pub map_size: Option<usize>,
    pub sigma: Option<f64>,
    pub bins: Option<Vec<(f64, f64)>>,
    pub phi: Option<f64>,
    pub jobs: Option<usize>,
    pub format: Option<OutputFormat>,
    pub strict_relate: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Anchor every relative path at `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for slot in [
            &mut self.questions,
            &mut self.scene_graphs,
            &mut self.programs,
            &mut self.fixations,
            &mut self.attention_maps,
            &mut self.proposals,
            &mut self.outcomes,
            &mut self.cooccurrence,
            &mut self.out_dir,
        ] {
            if let Some(p) = slot {
                if p.is_relative() {
                    *p = base.join(p.as_path());
                }
            }
        }
    }

    pub fn apply(&mut self, ov: &Overrides) {
        if let Some(k) = ov.k {
            self.k = k;
        }
        if let Some(s) = ov.map_size {
            self.map_size = s;
        }
        if let Some(s) = ov.sigma {
            self.sigma = s;
        }
        if let Some(b) = &ov.bins {
            self.temporal_bins = b.clone();
        }
        if let Some(p) = ov.phi {
            self.phi = p;
        }
        if let Some(j) = ov.jobs {
            self.jobs = Some(j);
        }
        if let Some(f) = ov.format {
            self.format = f;
        }
        if ov.strict_relate {
            self.strict_relate = true;
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        if self.map_size == 0 {
            return Err(ConfigError::Invalid("map_size must be at least 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "sigma must be a positive finite number, got {}",
                self.sigma
            )));
        }
        validate_bins(&self.temporal_bins)
            .map_err(|e| ConfigError::Invalid(format!("temporal_bins: {e}")))?;
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "phi must be a non-negative finite number, got {}",
                self.phi
            )));
        }
        if self.c == 0 {
            return Err(ConfigError::Invalid("c must be at least 1".into()));
        }
        if !(self.epsilon_kl > 0.0 && self.epsilon_kl.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "epsilon_kl must be a positive finite number, got {}",
                self.epsilon_kl
            )));
        }
        if self.jobs == Some(0) {
            return Err(ConfigError::Invalid("jobs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Parse the `--bins` flag format: `lo-hi` ranges joined by commas, e.g.
/// `0-1000,1000-2000,2000-3000`.
pub fn parse_bins(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut out = Vec::new();
    for part in text.split(',') {
        let part = part.trim();
        let (lo, hi) = part
            .split_once('-')
            .ok_or_else(|| format!("bin {part:?} is not of the form lo-hi"))?;
        let lo: f64 = lo
            .trim()
            .parse()
            .map_err(|_| format!("bad bin start in {part:?}"))?;
        let hi: f64 = hi
            .trim()
            .parse()
            .map_err(|_| format!("bad bin end in {part:?}"))?;
        out.push((lo, hi));
    }
    validate_bins(&out).map_err(|e| e.to_string())?;
    Ok(out)
}
