use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::archive::ExtractLimits;
use crate::dockerlint::DockerRules;
use crate::model::AttackVector;
use crate::typosquat::NormalizeConfig;
use crate::vulnscan::SourceRefConfig;

use super::DEFAULT_CDF_THRESHOLDS;

/// Environment variable naming a config file when `--config` is absent.
pub const CONFIG_ENV: &str = "SLSA_AUDIT_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VulnConfig {
    /// Directory of OSV-style advisory files.
    pub advisory_db: Option<PathBuf>,
    /// Drop matches whose package is never referenced from source.
    pub fp_filter: bool,
    pub source_refs: SourceRefConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchiveConfig {
    pub limits: ExtractLimits,
    /// How many levels of nested archives to open.
    pub depth: u32,
    /// Engines that must agree before an archive is called malicious.
    /// Capped at the number of configured engines.
    pub consensus_threshold: usize,
    /// One signature database per engine; the built-in set when empty.
    pub signature_dbs: Vec<PathBuf>,
}

impl Default for ArchiveConfig {
    fn default() -> Self {
        ArchiveConfig {
            limits: ExtractLimits::default(),
            depth: 3,
            consensus_threshold: 5,
            signature_dbs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IacConfig {
    /// Rule catalog file; the bundled catalog when absent.
    pub catalog: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TyposquatConfig {
    pub max_distance: usize,
    pub normalize: NormalizeConfig,
}

impl Default for TyposquatConfig {
    fn default() -> Self {
        TyposquatConfig {
            max_distance: 1,
            normalize: NormalizeConfig::default(),
        }
    }
}

/// Every tunable list and threshold, loadable from one JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub enabled_vectors: BTreeSet<AttackVector>,
    pub cdf_thresholds: Vec<u64>,
    pub vulnscan: VulnConfig,
    pub archive: ArchiveConfig,
    pub docker: DockerRules,
    pub iac: IacConfig,
    pub typosquat: TyposquatConfig,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            enabled_vectors: AttackVector::ALL.into_iter().collect(),
            cdf_thresholds: DEFAULT_CDF_THRESHOLDS.to_vec(),
            vulnscan: VulnConfig::default(),
            archive: ArchiveConfig::default(),
            docker: DockerRules::default(),
            iac: IacConfig::default(),
            typosquat: TyposquatConfig::default(),
        }
    }
}

impl AuditConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: AuditConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if cfg.enabled_vectors.is_empty() {
            return Err("enabled_vectors is empty".into());
        }
        if cfg.archive.consensus_threshold == 0 {
            return Err("archive.consensus_threshold must be at least 1".into());
        }
        if cfg.typosquat.max_distance == 0 {
            return Err("typosquat.max_distance must be at least 1".into());
        }
        Ok(cfg)
    }

    /// Relative paths inside the config resolve against its directory.
    fn rebase(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.vulnscan.advisory_db.as_mut() {
            fix(p);
        }
        if let Some(p) = self.iac.catalog.as_mut() {
            fix(p);
        }
        self.archive.signature_dbs.iter_mut().for_each(fix);
        self
    }
}

/// Loads `explicit`, else the file named by [`CONFIG_ENV`], else defaults.
pub fn load_config(explicit: Option<&Path>) -> Result<AuditConfig, String> {
    let from_env = std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let Some(path) = explicit.map(Path::to_path_buf).or(from_env) else {
        return Ok(AuditConfig::default());
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("config {}: {e}", path.display()))?;
    let cfg = AuditConfig::from_json(&text).map_err(|e| format!("config {}: {e}", path.display()))?;
    Ok(cfg.rebase(path.parent().unwrap_or(Path::new("."))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg = AuditConfig::from_json(r#"{"archive": {"consensus_threshold": 2}, "enabled_vectors": ["V2"]}"#).unwrap();
        assert_eq!(cfg.archive.consensus_threshold, 2);
        assert_eq!(cfg.archive.depth, 3);
        assert_eq!(cfg.enabled_vectors.len(), 1);
        assert_eq!(cfg.typosquat.max_distance, 1);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(AuditConfig::from_json(r#"{"enabled_vectors": []}"#).is_err());
        assert!(AuditConfig::from_json(r#"{"archive": {"consensus_threshold": 0}}"#).is_err());
        assert!(AuditConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn default_round_trips() {
        let text = serde_json::to_string(&AuditConfig::default()).unwrap();
        assert_eq!(AuditConfig::from_json(&text).unwrap(), AuditConfig::default());
    }

    #[test]
    fn relative_paths_follow_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cfg.json");
        std::fs::write(&p, r#"{"vulnscan": {"advisory_db": "adv"}}"#).unwrap();
        let cfg = load_config(Some(&p)).unwrap();
        assert_eq!(cfg.vulnscan.advisory_db.unwrap(), dir.path().join("adv"));
    }
}
