//! Dependency vulnerability analysis (V1).
//!
//! Pipeline per component: manifests → [`PackageInventory`] →
//! [`mark_source_references`] → [`match_advisories`] against an
//! [`AdvisoryIndex`] → optional [`filter_false_positives`].

pub mod advisory;
pub mod external;
pub mod manifest;
pub mod source_refs;
pub mod version;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{severity_band, AttackVector, ComponentRef, Finding, Severity};

pub use advisory::{load_advisory_db, parse_osv, AdvisoryLoad};
pub use external::{import_external_scan, import_external_scan_str, ExternalFormat, ScanSets};
pub use manifest::{inventory_from_tree, parse_manifest, ManifestKind};
pub use source_refs::{mark_source_references, SourceRefConfig};
pub use version::{Bound, Version, VersionError, VersionInterval};

#[derive(Debug, Error)]
pub enum VulnError {
    #[error("unsupported manifest kind: {0}")]
    UnsupportedManifest(String),
    #[error("{path}:{line}: {message}")]
    ManifestSyntax {
        path: String,
        line: usize,
        message: String,
    },
    #[error("advisory database {path}: {message}")]
    AdvisoryDb { path: String, message: String },
    #[error("external scan {path}: {message}")]
    ExternalFormat { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ecosystem {
    Npm,
    Pypi,
    Gomod,
    OsPackages,
}

impl Ecosystem {
    pub fn from_osv(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "npm" => Some(Ecosystem::Npm),
            "pypi" => Some(Ecosystem::Pypi),
            "go" | "gomod" => Some(Ecosystem::Gomod),
            "os-packages" | "os" => Some(Ecosystem::OsPackages),
            _ => None,
        }
    }

    /// PyPI names compare after PEP 503 normalization; other ecosystems
    /// compare exactly.
    pub fn normalize_name(&self, name: &str) -> String {
        match self {
            Ecosystem::Pypi => {
                let mut out = String::with_capacity(name.len());
                let mut last_sep = false;
                for c in name.chars() {
                    if matches!(c, '-' | '_' | '.') {
                        if !last_sep {
                            out.push('-');
                        }
                        last_sep = true;
                    } else {
                        out.push(c.to_ascii_lowercase());
                        last_sep = false;
                    }
                }
                out
            }
            _ => name.to_string(),
        }
    }
}

impl fmt::Display for Ecosystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ecosystem::Npm => "npm",
            Ecosystem::Pypi => "pypi",
            Ecosystem::Gomod => "gomod",
            Ecosystem::OsPackages => "os-packages",
        })
    }
}

/// One `(name, ecosystem)` with every version declared for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Package {
    pub name: String,
    pub ecosystem: Ecosystem,
    pub versions: BTreeSet<String>,
    pub declared_in: BTreeSet<String>,
    pub referenced_in_source: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackageInventory {
    pub packages: BTreeMap<(Ecosystem, String), Package>,
    #[serde(default)]
    pub notices: Vec<String>,
}

impl PackageInventory {
    pub fn add(&mut self, name: &str, version: &str, ecosystem: Ecosystem, declared_in: &str) {
        let name = ecosystem.normalize_name(name);
        let p = self
            .packages
            .entry((ecosystem, name.clone()))
            .or_insert_with(|| Package {
                name,
                ecosystem,
                versions: BTreeSet::new(),
                declared_in: BTreeSet::new(),
                referenced_in_source: BTreeSet::new(),
            });
        p.versions.insert(version.to_string());
        p.declared_in.insert(declared_in.to_string());
    }

    pub fn merge(&mut self, other: PackageInventory) {
        for (key, pkg) in other.packages {
            match self.packages.get_mut(&key) {
                Some(p) => {
                    p.versions.extend(pkg.versions);
                    p.declared_in.extend(pkg.declared_in);
                    p.referenced_in_source.extend(pkg.referenced_in_source);
                }
                None => {
                    self.packages.insert(key, pkg);
                }
            }
        }
        self.notices.extend(other.notices);
    }

    pub fn get(&self, name: &str, ecosystem: Ecosystem) -> Option<&Package> {
        self.packages.get(&(ecosystem, ecosystem.normalize_name(name)))
    }

    pub fn is_empty(&self) -> bool {
        self.packages.is_empty()
    }

    pub fn len(&self) -> usize {
        self.packages.len()
    }
}

/// One vulnerability record for one package.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advisory {
    pub id: String,
    pub ecosystem: Ecosystem,
    pub package_name: String,
    pub affected_ranges: Vec<VersionInterval>,
    pub cvss_score: Option<f64>,
    pub summary: String,
}

impl Advisory {
    pub fn affects(&self, version: &Version) -> Result<bool, VersionError> {
        for iv in &self.affected_ranges {
            if iv.contains(version)? {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn severity(&self) -> Severity {
        // scores are range-checked when the index is built
        severity_band(self.cvss_score).unwrap_or(Severity::Unknown)
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty advisory id".into());
        }
        severity_band(self.cvss_score).map_err(|e| format!("{}: {e}", self.id))?;
        for iv in &self.affected_ranges {
            iv.validate().map_err(|m| format!("{}: {m}", self.id))?;
        }
        Ok(())
    }
}

/// Read-only lookup from `(ecosystem, package)` to advisories.
#[derive(Debug, Default)]
pub struct AdvisoryIndex {
    by_package: HashMap<(Ecosystem, String), Vec<Advisory>>,
    len: usize,
}

impl AdvisoryIndex {
    pub fn build(advisories: Vec<Advisory>) -> Result<Self, VulnError> {
        let mut idx = AdvisoryIndex::default();
        for mut adv in advisories {
            adv.validate().map_err(|message| VulnError::AdvisoryDb {
                path: "<index>".into(),
                message,
            })?;
            adv.package_name = adv.ecosystem.normalize_name(&adv.package_name);
            idx.by_package
                .entry((adv.ecosystem, adv.package_name.clone()))
                .or_default()
                .push(adv);
            idx.len += 1;
        }
        Ok(idx)
    }

    pub fn load(dir: &Path) -> Result<(Self, Vec<String>), VulnError> {
        let load = load_advisory_db(dir)?;
        Ok((AdvisoryIndex::build(load.advisories)?, load.notices))
    }

    pub fn lookup(&self, ecosystem: Ecosystem, name: &str) -> &[Advisory] {
        self.by_package
            .get(&(ecosystem, name.to_string()))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FpClass {
    SourceReferenced,
    MetadataOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatchedPackage {
    pub name: String,
    pub version: String,
    pub ecosystem: Ecosystem,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VulnMatch {
    pub advisory_id: String,
    pub package: MatchedPackage,
    pub severity: Severity,
    pub fp_class: FpClass,
    /// First manifest declaring the package.
    pub declared_in: String,
}

#[derive(Debug, Clone, Default)]
pub struct MatchOutcome {
    pub matches: Vec<VulnMatch>,
    pub notices: Vec<String>,
}

/// Matches every declared package version against the index.
///
/// Output is sorted and deduplicated on `(advisory, package, version)`.
pub fn match_advisories(inventory: &PackageInventory, index: &AdvisoryIndex) -> MatchOutcome {
    let mut out = MatchOutcome::default();
    let mut seen = BTreeSet::new();
    for pkg in inventory.packages.values() {
        let candidates = index.lookup(pkg.ecosystem, &pkg.name);
        if candidates.is_empty() {
            continue;
        }
        let fp_class = if pkg.referenced_in_source.is_empty() {
            FpClass::MetadataOnly
        } else {
            FpClass::SourceReferenced
        };
        for raw in &pkg.versions {
            let version = match Version::parse(raw) {
                Ok(v) => v,
                Err(e) => {
                    out.notices.push(format!("{} excluded: {e}", pkg.name));
                    continue;
                }
            };
            if version.is_fallback() {
                out.notices.push(format!(
                    "{}@{raw}: not semver, compared segment-wise",
                    pkg.name
                ));
            }
            for adv in candidates {
                match adv.affects(&version) {
                    Ok(true) => {
                        if seen.insert((adv.id.clone(), pkg.ecosystem, pkg.name.clone(), raw.clone())) {
                            out.matches.push(VulnMatch {
                                advisory_id: adv.id.clone(),
                                package: MatchedPackage {
                                    name: pkg.name.clone(),
                                    version: raw.clone(),
                                    ecosystem: pkg.ecosystem,
                                },
                                severity: adv.severity(),
                                fp_class,
                                declared_in: pkg.declared_in.first().cloned().unwrap_or_default(),
                            });
                        }
                    }
                    Ok(false) => {}
                    Err(e) => out.notices.push(format!("{}: {e}", adv.id)),
                }
            }
        }
    }
    out.matches.sort_by(|a, b| {
        (&a.advisory_id, &a.package).cmp(&(&b.advisory_id, &b.package))
    });
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FpPartition {
    pub kept: Vec<VulnMatch>,
    pub suspected_fp: Vec<VulnMatch>,
    pub fp_rate: f64,
}

/// Splits off matches whose package never appears in source code.
pub fn filter_false_positives(matches: Vec<VulnMatch>) -> FpPartition {
    let total = matches.len();
    let (suspected_fp, kept): (Vec<_>, Vec<_>) = matches
        .into_iter()
        .partition(|m| m.fp_class == FpClass::MetadataOnly);
    let fp_rate = if total == 0 {
        0.0
    } else {
        suspected_fp.len() as f64 / total as f64
    };
    FpPartition {
        kept,
        suspected_fp,
        fp_rate,
    }
}

/// `|A ∩ B| / |A ∪ B|`, with two empty sets counting as identical (1.0).
pub fn jaccard_similarity<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Per-component Jaccard similarity between two imported scans. Components
/// missing from one side are compared against an empty set.
pub fn compare_scans(a: &ScanSets, b: &ScanSets) -> BTreeMap<String, f64> {
    let empty = BTreeSet::new();
    a.keys()
        .chain(b.keys())
        .map(|k| {
            let sa = a.get(k).unwrap_or(&empty);
            let sb = b.get(k).unwrap_or(&empty);
            (k.clone(), jaccard_similarity(sa, sb))
        })
        .collect()
}

/// Full V1 pass over one component tree.
#[derive(Debug, Clone, Default)]
pub struct ComponentVulns {
    pub inventory: PackageInventory,
    pub matches: Vec<VulnMatch>,
    pub notices: Vec<String>,
}

pub fn scan_tree(tree_root: &Path, index: &AdvisoryIndex, config: &SourceRefConfig) -> ComponentVulns {
    let mut inventory = inventory_from_tree(tree_root);
    let mut notices = std::mem::take(&mut inventory.notices);
    notices.extend(mark_source_references(&mut inventory, tree_root, config));
    let outcome = match_advisories(&inventory, index);
    notices.extend(outcome.notices);
    ComponentVulns {
        inventory,
        matches: outcome.matches,
        notices,
    }
}

/// Number of matches with a known severity; `Unknown` stays out of statistics.
pub fn counted_vulns(matches: &[VulnMatch]) -> u64 {
    matches
        .iter()
        .filter(|m| m.severity != Severity::Unknown)
        .count() as u64
}

/// Converts matches into report findings. `prefix` is the path of the
/// scanned tree inside the component (usually `tree`).
pub fn vuln_findings(component: &ComponentRef, prefix: &str, matches: &[VulnMatch]) -> Vec<Finding> {
    matches
        .iter()
        .map(|m| {
            let file = if prefix.is_empty() {
                m.declared_in.clone()
            } else {
                format!("{prefix}/{}", m.declared_in)
            };
            let fp_note = match m.fp_class {
                FpClass::SourceReferenced => "",
                FpClass::MetadataOnly => " [metadata-only, possible false positive]",
            };
            Finding {
                rule_id: m.advisory_id.clone(),
                vector: AttackVector::V1,
                severity: m.severity,
                component: component.clone(),
                location: format!("{file}#{}@{}", m.package.name, m.package.version),
                evidence: format!(
                    "{}@{} ({}){fp_note}",
                    m.package.name, m.package.version, m.package.ecosystem
                ),
                remediation: format!(
                    "upgrade {} past the range affected by {}",
                    m.package.name, m.advisory_id
                ),
            }
        })
        .collect()
}
