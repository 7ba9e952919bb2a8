//! Import of third-party scanner output for cross-tool comparison.
//!
//! Only a minimal subset of each report is read. Both formats accept either a
//! top-level array of result objects or an object wrapping that array:
//!
//! * `trivy-json`: `{"Results": [{"ArtifactName": "...", "VulnerabilityID": "..."}]}`
//! * `grype-json`: `{"matches": [{"component": "...", "id": "..."}]}`

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use serde_json::Value;

use super::VulnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExternalFormat {
    TrivyJson,
    GrypeJson,
}

impl ExternalFormat {
    fn keys(self) -> (&'static str, &'static str, &'static str) {
        match self {
            ExternalFormat::TrivyJson => ("Results", "VulnerabilityID", "ArtifactName"),
            ExternalFormat::GrypeJson => ("matches", "id", "component"),
        }
    }
}

impl FromStr for ExternalFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "trivy-json" | "trivy" => Ok(ExternalFormat::TrivyJson),
            "grype-json" | "grype" => Ok(ExternalFormat::GrypeJson),
            _ => Err(format!("unknown scan format `{s}` (expected trivy-json or grype-json)")),
        }
    }
}

/// Advisory-id sets keyed by component name.
pub type ScanSets = BTreeMap<String, BTreeSet<String>>;

pub fn import_external_scan(path: &Path, format: ExternalFormat) -> Result<ScanSets, VulnError> {
    let text = std::fs::read_to_string(path).map_err(|e| VulnError::ExternalFormat {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    import_external_scan_str(&path.display().to_string(), &text, format)
}

pub fn import_external_scan_str(
    origin: &str,
    text: &str,
    format: ExternalFormat,
) -> Result<ScanSets, VulnError> {
    let fail = |message: String| VulnError::ExternalFormat {
        path: origin.to_string(),
        message,
    };
    let (wrapper, id_key, component_key) = format.keys();
    let doc: Value = serde_json::from_str(text).map_err(|e| fail(e.to_string()))?;
    let results = match &doc {
        Value::Array(items) => items,
        Value::Object(obj) => match obj.get(wrapper) {
            Some(Value::Array(items)) => items,
            Some(Value::Null) | None => return Ok(ScanSets::new()),
            Some(_) => return Err(fail(format!("`{wrapper}` must be an array"))),
        },
        _ => return Err(fail("expected an array or object at top level".into())),
    };
    let mut sets = ScanSets::new();
    for (i, item) in results.iter().enumerate() {
        let field = |key: &str| {
            item.get(key)
                .and_then(Value::as_str)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| fail(format!("{wrapper}[{i}].{key} missing or not a string")))
        };
        let id = field(id_key)?;
        let component = field(component_key)?;
        sets.entry(component.to_string())
            .or_default()
            .insert(id.to_string());
    }
    Ok(sets)
}
