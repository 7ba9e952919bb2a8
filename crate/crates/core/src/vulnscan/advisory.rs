//! Offline advisory database: a directory of JSON files, each holding one
//! record in a subset of the OSV schema.
//!
//! ```json
//! {
//!   "id": "CVE-2019-10744",
//!   "summary": "Prototype pollution in lodash",
//!   "affected": [{
//!     "package": {"ecosystem": "npm", "name": "lodash"},
//!     "ranges": [{"type": "SEMVER", "events": [{"introduced": "0"}, {"fixed": "4.17.12"}]}],
//!     "versions": []
//!   }],
//!   "severity": [{"type": "CVSS_V3", "score": 9.1}]
//! }
//! ```
//!
//! `score` is a precomputed base score, as a number or numeric string.
//! Supported range events: `introduced`, `fixed`, `last_affected`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::version::{Bound, VersionInterval};
use super::{Advisory, Ecosystem, VulnError};

#[derive(Debug, Deserialize)]
struct OsvRecord {
    id: String,
    #[serde(default)]
    summary: Option<String>,
    #[serde(default)]
    details: Option<String>,
    #[serde(default)]
    affected: Vec<OsvAffected>,
    #[serde(default)]
    severity: Vec<OsvSeverity>,
}

#[derive(Debug, Deserialize)]
struct OsvAffected {
    package: OsvPackage,
    #[serde(default)]
    ranges: Vec<OsvRange>,
    #[serde(default)]
    versions: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct OsvPackage {
    ecosystem: String,
    name: String,
}

#[derive(Debug, Deserialize)]
struct OsvRange {
    #[serde(rename = "type")]
    kind: String,
    events: Vec<BTreeMap<String, String>>,
}

#[derive(Debug, Deserialize)]
struct OsvSeverity {
    #[serde(rename = "type")]
    kind: String,
    score: Value,
}

/// Result of loading an advisory directory.
#[derive(Debug, Default)]
pub struct AdvisoryLoad {
    pub advisories: Vec<Advisory>,
    pub notices: Vec<String>,
}

/// Parses one OSV record. A record with several affected packages yields one
/// [`Advisory`] per package.
pub fn parse_osv(origin: &str, text: &str) -> Result<(Vec<Advisory>, Vec<String>), VulnError> {
    let db_err = |message: String| VulnError::AdvisoryDb {
        path: origin.to_string(),
        message,
    };
    let rec: OsvRecord = serde_json::from_str(text).map_err(|e| db_err(e.to_string()))?;
    if rec.id.trim().is_empty() {
        return Err(db_err("empty advisory id".into()));
    }
    let mut notices = Vec::new();
    let mut score = None;
    for s in &rec.severity {
        if !s.kind.starts_with("CVSS_V3") {
            continue;
        }
        let parsed = match &s.score {
            Value::Number(n) => n.as_f64(),
            Value::String(t) => t.trim().parse::<f64>().ok(),
            _ => None,
        };
        match parsed {
            Some(v) if (0.0..=10.0).contains(&v) => {
                score = Some(v);
                break;
            }
            Some(v) => return Err(db_err(format!("CVSS score {v} outside [0, 10]"))),
            None => notices.push(format!("{origin}: {} has a non-numeric CVSS score, severity unknown", rec.id)),
        }
    }
    let summary = rec.summary.or(rec.details).unwrap_or_default();

    let mut out = Vec::new();
    for aff in rec.affected {
        let Some(ecosystem) = Ecosystem::from_osv(&aff.package.ecosystem) else {
            notices.push(format!(
                "{origin}: {} skipped, unsupported ecosystem `{}`",
                rec.id, aff.package.ecosystem
            ));
            continue;
        };
        let mut intervals = Vec::new();
        for range in &aff.ranges {
            if !matches!(range.kind.as_str(), "SEMVER" | "ECOSYSTEM") {
                notices.push(format!("{origin}: {} range type {} ignored", rec.id, range.kind));
                continue;
            }
            intervals.extend(events_to_intervals(&range.events).map_err(db_err)?);
        }
        intervals.extend(aff.versions.iter().map(|v| VersionInterval::exact(v)));
        for iv in &intervals {
            iv.validate().map_err(|m| db_err(format!("{}: {m}", rec.id)))?;
        }
        out.push(Advisory {
            id: rec.id.clone(),
            ecosystem,
            package_name: ecosystem.normalize_name(&aff.package.name),
            affected_ranges: intervals,
            cvss_score: score,
            summary: summary.clone(),
        });
    }
    Ok((out, notices))
}

fn events_to_intervals(events: &[BTreeMap<String, String>]) -> Result<Vec<VersionInterval>, String> {
    let mut out = Vec::new();
    let mut lower: Option<Option<Bound>> = None;
    for ev in events {
        if let Some(v) = ev.get("introduced") {
            let b = (v != "0").then(|| Bound {
                version: v.clone(),
                inclusive: true,
            });
            lower = Some(b);
        } else if let Some(v) = ev.get("fixed").or_else(|| ev.get("limit")) {
            let lo = lower.take().ok_or("`fixed` without preceding `introduced`")?;
            out.push(VersionInterval {
                lower: lo,
                upper: Some(Bound {
                    version: v.clone(),
                    inclusive: false,
                }),
            });
        } else if let Some(v) = ev.get("last_affected") {
            let lo = lower.take().ok_or("`last_affected` without preceding `introduced`")?;
            out.push(VersionInterval {
                lower: lo,
                upper: Some(Bound {
                    version: v.clone(),
                    inclusive: true,
                }),
            });
        } else {
            return Err(format!("unknown range event {ev:?}"));
        }
    }
    if let Some(lo) = lower {
        out.push(VersionInterval { lower: lo, upper: None });
    }
    Ok(out)
}

/// Loads every `*.json` file under `dir` (sorted by path).
pub fn load_advisory_db(dir: &Path) -> Result<AdvisoryLoad, VulnError> {
    let mut files = Vec::new();
    for item in walkdir::WalkDir::new(dir) {
        let item = item.map_err(|e| VulnError::AdvisoryDb {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        if item.file_type().is_file() && item.path().extension().is_some_and(|e| e == "json") {
            files.push(item.into_path());
        }
    }
    files.sort();
    let mut load = AdvisoryLoad::default();
    for f in files {
        let origin = f.display().to_string();
        let text = fs::read_to_string(&f).map_err(|e| VulnError::AdvisoryDb {
            path: origin.clone(),
            message: e.to_string(),
        })?;
        let (advs, notices) = parse_osv(&origin, &text)?;
        load.advisories.extend(advs);
        load.notices.extend(notices);
    }
    Ok(load)
}
