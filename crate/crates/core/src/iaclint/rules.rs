//! Data-driven rule catalog.
//!
//! A rule lists checks; each check selects resource types and evaluates a
//! predicate over the resource's properties:
//!
//! ```json
//! {"missing": "SourceArn"}
//! {"exists": "Environment.Variables"}
//! {"equals": ["AccessControl", "PublicRead"]}
//! {"contains": ["**.Action", "*"]}
//! {"in": ["acl", ["public-read", "public-read-write"]]}
//! {"all": [...]}  {"any": [...]}  {"not": {...}}
//! ```
//!
//! Paths are dot-separated keys; `*` matches any key, `**` any depth, and
//! lists are walked implicitly. Values hidden behind references make a
//! predicate undetermined, which is reported as a notice instead of a
//! finding.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{resolve, IaCFramework, PropValue, TemplateModel};
use super::{IacError, IacFinding};
use crate::model::Severity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predicate {
    Missing(String),
    Exists(String),
    Equals(String, serde_json::Value),
    Contains(String, serde_json::Value),
    In(String, Vec<serde_json::Value>),
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
    Not(Box<Predicate>),
}

/// Three-valued result; `Unknown` when references hide the answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    fn not(self) -> Truth {
        match self {
            Truth::True => Truth::False,
            Truth::False => Truth::True,
            Truth::Unknown => Truth::Unknown,
        }
    }
}

fn any_value(props: &PropValue, path: &str, mut hit: impl FnMut(&PropValue) -> bool) -> Truth {
    let r = resolve(props, path);
    let mut unknown = r.blocked;
    for v in &r.values {
        let items: Vec<&PropValue> = match v {
            PropValue::List(items) => items.iter().collect(),
            other => vec![other],
        };
        for item in items {
            if hit(item) {
                return Truth::True;
            }
            unknown |= item.is_undetermined();
        }
    }
    if unknown {
        Truth::Unknown
    } else {
        Truth::False
    }
}

impl Predicate {
    pub fn eval(&self, props: &PropValue) -> Truth {
        match self {
            Predicate::Exists(path) => Predicate::Missing(path.clone()).eval(props).not(),
            Predicate::Missing(path) => {
                let r = resolve(props, path);
                if !r.values.is_empty() {
                    Truth::False
                } else if r.blocked {
                    Truth::Unknown
                } else {
                    Truth::True
                }
            }
            Predicate::Equals(path, want) => {
                let r = resolve(props, path);
                if r.values.iter().any(|v| v.matches_json(want)) {
                    Truth::True
                } else if r.blocked || r.values.iter().any(|v| v.is_undetermined()) {
                    Truth::Unknown
                } else {
                    Truth::False
                }
            }
            Predicate::Contains(path, want) => any_value(props, path, |v| v.matches_json(want)),
            Predicate::In(path, options) => any_value(props, path, |v| options.iter().any(|o| v.matches_json(o))),
            Predicate::All(ps) => {
                let mut out = Truth::True;
                for p in ps {
                    match p.eval(props) {
                        Truth::False => return Truth::False,
                        Truth::Unknown => out = Truth::Unknown,
                        Truth::True => {}
                    }
                }
                out
            }
            Predicate::Any(ps) => {
                let mut out = Truth::False;
                for p in ps {
                    match p.eval(props) {
                        Truth::True => return Truth::True,
                        Truth::Unknown => out = Truth::Unknown,
                        Truth::False => {}
                    }
                }
                out
            }
            Predicate::Not(p) => p.eval(props).not(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub resource_types: Vec<String>,
    pub when: Predicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisconfigRule {
    pub rule_id: String,
    pub title: String,
    pub severity: Severity,
    pub frameworks: BTreeSet<IaCFramework>,
    pub description: String,
    #[serde(default)]
    pub remediation: String,
    #[serde(default)]
    pub checks: Vec<Check>,
    /// Name of a rule implemented in code (`cors-wildcard`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
}

pub const BUILTIN_CORS: &str = "cors-wildcard";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCatalog {
    pub rules: Vec<MisconfigRule>,
}

pub const DEFAULT_CATALOG: &str = include_str!("default_catalog.json");

impl RuleCatalog {
    pub fn from_json(text: &str) -> Result<Self, IacError> {
        let catalog: RuleCatalog = serde_json::from_str(text).map_err(|e| IacError::Catalog(e.to_string()))?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn load(path: &Path) -> Result<Self, IacError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IacError::Catalog(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| IacError::Catalog(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), IacError> {
        let mut seen = BTreeSet::new();
        for r in &self.rules {
            if r.rule_id.trim().is_empty() {
                return Err(IacError::Catalog("rule with empty rule_id".into()));
            }
            if !seen.insert(r.rule_id.as_str()) {
                return Err(IacError::Catalog(format!("duplicate rule_id `{}`", r.rule_id)));
            }
            match &r.builtin {
                Some(b) if b != BUILTIN_CORS => {
                    return Err(IacError::Catalog(format!("{}: unknown builtin `{b}`", r.rule_id)))
                }
                None if r.checks.is_empty() => {
                    return Err(IacError::Catalog(format!("{}: no checks and no builtin", r.rule_id)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn get(&self, rule_id: &str) -> Option<&MisconfigRule> {
        self.rules.iter().find(|r| r.rule_id == rule_id)
    }
}

impl Default for RuleCatalog {
    fn default() -> Self {
        Self::from_json(DEFAULT_CATALOG).expect("bundled catalog is valid")
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleRun {
    pub findings: Vec<IacFinding>,
    pub notices: Vec<String>,
}

pub(crate) fn sort_findings(findings: &mut [IacFinding]) {
    findings.sort_by(|a, b| {
        (&a.span, &a.rule_id, &a.logical_id, &a.message).cmp(&(&b.span, &b.rule_id, &b.logical_id, &b.message))
    });
}

/// Evaluates every catalog rule that applies to the model's framework.
pub fn run_rules(model: &TemplateModel, catalog: &RuleCatalog) -> RuleRun {
    let mut run = RuleRun::default();
    for rule in catalog.rules.iter().filter(|r| r.frameworks.contains(&model.framework)) {
        if rule.builtin.as_deref() == Some(BUILTIN_CORS) {
            let cors = super::cors::check_cors_wildcard(model);
            run.notices.extend(cors.notices);
            run.findings.extend(cors.findings.into_iter().map(|mut f| {
                f.rule_id = rule.rule_id.clone();
                f
            }));
            continue;
        }
        for res in &model.resources {
            let checks: Vec<&Check> = rule
                .checks
                .iter()
                .filter(|c| c.resource_types.contains(&res.resource_type))
                .collect();
            if checks.is_empty() {
                continue;
            }
            let props = model.effective_properties(res);
            let mut undetermined = false;
            let mut fired = false;
            for c in checks {
                match c.when.eval(&props) {
                    Truth::True => fired = true,
                    Truth::Unknown => undetermined = true,
                    Truth::False => {}
                }
            }
            if fired {
                run.findings.push(IacFinding {
                    rule_id: rule.rule_id.clone(),
                    framework: model.framework,
                    severity: rule.severity,
                    logical_id: res.logical_id.clone(),
                    resource_type: res.resource_type.clone(),
                    span: res.source_span.clone(),
                    message: format!("{}: {}", res.logical_id, rule.title),
                });
            } else if undetermined {
                run.notices.push(format!(
                    "{} on {} ({}) undetermined: value comes from a reference",
                    rule.rule_id, res.logical_id, res.source_span
                ));
            }
        }
    }
    sort_findings(&mut run.findings);
    run.notices.sort();
    run
}
