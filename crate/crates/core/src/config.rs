//! Audit run configuration. Every threshold has the default used by the
//! command-line tool and is echoed into the report.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::HeuristicId;
use crate::geocode::DEFAULT_SEED_FALLBACK_M;
use crate::model::SourceApp;
use crate::pipeline::PipelineConfig;
use crate::policy::PolicyCutoffs;
use crate::sensitive::SensitiveConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot load {what} from {path}: {message}")]
    Load { what: &'static str, path: PathBuf, message: String },
}

impl ConfigError {
    pub fn load(what: &'static str, path: &Path, err: impl std::fmt::Display) -> Self {
        ConfigError::Load { what, path: path.to_path_buf(), message: err.to_string() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CacheScope {
    /// One cache shared by all users; labeling runs in user-id order.
    #[default]
    Global,
    PerUser,
}

/// Optional stages. Key-location inference always runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stages {
    pub sensitive: bool,
    pub policy: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages { sensitive: false, policy: true }
    }
}

impl Stages {
    /// Comma-separated names out of `keyloc`, `sensitive`, `policy`.
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        let mut st = Stages { sensitive: false, policy: false };
        for name in s.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            match name {
                "keyloc" | "home" | "work" => {}
                "sensitive" => st.sensitive = true,
                "policy" => st.policy = true,
                "all" => st = Stages { sensitive: true, policy: true },
                other => return Err(ConfigError::Invalid(format!("unknown stage {other:?}"))),
            }
        }
        Ok(st)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub cutoffs: PolicyCutoffs,
    /// Post-cutoff re-inference runs once per offset.
    pub offsets_weeks: Vec<u32>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig { cutoffs: PolicyCutoffs::default(), offsets_weeks: vec![0, 4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    pub dataset: Option<PathBuf>,
    pub geocode_db: Option<PathBuf>,
    /// Re-checks the addresses of the top-ranked clusters when set.
    pub authoritative_db: Option<PathBuf>,
    pub venue_db: Option<PathBuf>,
    /// Defaults to the bundled mapping.
    pub category_map: Option<PathBuf>,
    /// Defaults to the bundled wordlists.
    pub wordlists_dir: Option<PathBuf>,
    /// Falls back to longitude bands when unset.
    pub tz_db: Option<PathBuf>,
    /// Hour-weight table for H9 to H11.
    pub weights: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub stages: Stages,
    pub baselines: Vec<HeuristicId>,
    pub cache_scope: CacheScope,
    /// Geocode seeds answer queries within this distance.
    pub geocode_fallback_m: f64,
    pub pipeline: PipelineConfig,
    pub sensitive: SensitiveConfig,
    pub policy: PolicyConfig,
    pub sources: Vec<SourceApp>,
    pub strict: bool,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            dataset: None,
            geocode_db: None,
            authoritative_db: None,
            venue_db: None,
            category_map: None,
            wordlists_dir: None,
            tz_db: None,
            weights: None,
            out: None,
            stages: Stages::default(),
            baselines: Vec::new(),
            cache_scope: CacheScope::default(),
            geocode_fallback_m: DEFAULT_SEED_FALLBACK_M,
            pipeline: PipelineConfig::default(),
            sensitive: SensitiveConfig::default(),
            policy: PolicyConfig::default(),
            sources: SourceApp::DEFAULT_FILTER.to_vec(),
            strict: false,
            seed: 0,
        }
    }
}

impl AuditConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError::load("config", path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dataset.is_none() {
            return Err(ConfigError::Missing("dataset"));
        }
        if self.geocode_db.is_none() {
            return Err(ConfigError::Missing("geocode database"));
        }
        if self.stages.sensitive && self.venue_db.is_none() {
            return Err(ConfigError::Missing("venue database (required by the sensitive stage)"));
        }
        if let Some(h) = self.baselines.iter().find(|h| h.needs_weights()) {
            if self.weights.is_none() {
                return Err(ConfigError::Invalid(format!("baseline {h} needs an hour-weight table")));
            }
        }
        let p = &self.pipeline;
        for (name, v) in [
            ("cache radius", p.cache_m),
            ("eps", p.eps_m),
            ("merge radius", p.merge_m),
            ("venue radius", self.sensitive.venue_radius_m),
            ("geocode fallback", self.geocode_fallback_m),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be a non-negative distance")));
            }
        }
        if !(0.0..=1.0).contains(&p.keyloc.max_long_day_fraction) {
            return Err(ConfigError::Invalid("long-day fraction must be within [0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_paths() -> AuditConfig {
        AuditConfig { dataset: Some("d".into()), geocode_db: Some("g".into()), ..AuditConfig::default() }
    }

    #[test]
    fn sensitive_stage_needs_venues() {
        let mut c = with_paths();
        c.stages.sensitive = true;
        assert!(matches!(c.validate(), Err(ConfigError::Missing(_))));
        c.venue_db = Some("v".into());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn weighted_baselines_need_weights() {
        let mut c = with_paths();
        c.baselines = vec![HeuristicId::H1LargestCluster, HeuristicId::H10WMean];
        assert!(matches!(c.validate(), Err(ConfigError::Invalid(_))));
        c.weights = Some("w".into());
        assert!(c.validate().is_ok());
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let c = AuditConfig::from_json(r#"{"dataset":"a.jsonl","geocode_db":"g","baselines":["H1","H15"],"cache_scope":"per-user"}"#)
            .unwrap();
        assert_eq!(c.baselines, vec![HeuristicId::H1LargestCluster, HeuristicId::H15SecondLargest]);
        assert_eq!(c.cache_scope, CacheScope::PerUser);
        assert_eq!(c.pipeline.merge_m, 50.0);
        let back = AuditConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(AuditConfig::from_json(r#"{"baselines":["H12"]}"#).is_err());
    }

    #[test]
    fn stage_names() {
        assert_eq!(Stages::parse("keyloc,sensitive").unwrap(), Stages { sensitive: true, policy: false });
        assert!(Stages::parse("keyloc,magic").is_err());
    }
}
