//! Aggregation of analyzer output into a [`ScanReport`] and rendering as
//! JSON, a text table or a SARIF-shaped document.

mod config;
mod pipeline;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::model::{
    cdf_of_counts, summarize_counts, AttackVector, ComponentRef, Finding, ModelError, Repository, ScanReport,
    Severity, SeverityHistogram,
};

pub use config::{load_config, AuditConfig, ArchiveConfig, IacConfig, TyposquatConfig, VulnConfig, CONFIG_ENV};
pub use pipeline::{corpus_id, scan_corpus, vector_counts, Analyzers, ArchiveScan, CorpusScan};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("batch from corpus `{found}` cannot be merged into `{expected}`")]
    MixedCorpus { expected: String, found: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("report JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Thresholds for the vulnerability-count CDF. The largest observed count is
/// appended when it exceeds the last threshold, so the curve ends at 1.
pub const DEFAULT_CDF_THRESHOLDS: [u64; 10] = [0, 1, 5, 10, 25, 50, 100, 250, 500, 1000];

/// Output of one analyzer pass over (part of) a corpus.
#[derive(Debug, Clone, Default)]
pub struct Batch {
    pub corpus_id: String,
    /// Components the pass looked at, with or without findings.
    pub components: Vec<ComponentRef>,
    pub findings: Vec<Finding>,
    pub vuln_counts: BTreeMap<ComponentRef, u64>,
}

impl Batch {
    pub fn new(corpus_id: impl Into<String>) -> Self {
        Batch {
            corpus_id: corpus_id.into(),
            ..Default::default()
        }
    }
}

fn finding_order(a: &Finding, b: &Finding) -> std::cmp::Ordering {
    (&a.rule_id, &a.location, &a.evidence).cmp(&(&b.rule_id, &b.location, &b.evidence))
}

/// Merges batches into one report. Findings are deduplicated on
/// `(rule_id, component, location)` keeping the first; vulnerability counts
/// from several batches for one component add up.
pub fn aggregate(corpus_id: &str, batches: Vec<Batch>, thresholds: &[u64]) -> Result<ScanReport, ReportError> {
    let mut per_component: BTreeMap<ComponentRef, Vec<Finding>> = BTreeMap::new();
    let mut vuln_counts: BTreeMap<ComponentRef, u64> = BTreeMap::new();
    let mut seen: BTreeSet<(String, ComponentRef, String)> = BTreeSet::new();
    for batch in batches {
        if batch.corpus_id != corpus_id {
            return Err(ReportError::MixedCorpus {
                expected: corpus_id.to_string(),
                found: batch.corpus_id,
            });
        }
        for c in batch.components {
            per_component.entry(c).or_default();
        }
        for (c, n) in batch.vuln_counts {
            *vuln_counts.entry(c.clone()).or_default() += n;
            per_component.entry(c).or_default();
        }
        for f in batch.findings {
            let key = (f.rule_id.clone(), f.component.clone(), f.location.clone());
            if seen.insert(key) {
                per_component.entry(f.component.clone()).or_default().push(f);
            }
        }
    }
    let mut histogram = SeverityHistogram::default();
    for list in per_component.values_mut() {
        list.sort_by(finding_order);
        list.iter().for_each(|f| histogram.add(f.severity));
    }
    let counts: Vec<u64> = vuln_counts.values().copied().collect();
    let (stats, cdf_points) = if counts.is_empty() {
        (None, Vec::new())
    } else {
        let mut t: Vec<u64> = thresholds.to_vec();
        t.sort_unstable();
        t.dedup();
        let max = *counts.iter().max().expect("non-empty");
        if t.last().is_none_or(|&last| last < max) {
            t.push(max);
        }
        (Some(summarize_counts(&counts)?), cdf_of_counts(&counts, &t)?)
    };
    Ok(ScanReport {
        corpus_id: corpus_id.to_string(),
        per_component,
        vuln_counts,
        severity_histogram: histogram,
        stats,
        cdf_points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Json,
    Table,
    SarifLike,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "table" => Ok(OutputFormat::Table),
            "sarif-like" | "sarif" => Ok(OutputFormat::SarifLike),
            _ => Err(format!("unknown output format `{s}` (expected json, table or sarif-like)")),
        }
    }
}

/// Interchange level for a severity; `None` for Unknown.
pub fn sarif_level(severity: Severity) -> &'static str {
    match severity {
        Severity::Critical | Severity::High => "error",
        Severity::Medium => "warning",
        Severity::Low => "note",
        Severity::Unknown => "none",
    }
}

pub fn to_json(report: &ScanReport) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
    out.push(b'\n');
    out
}

pub fn from_json(bytes: &[u8]) -> Result<ScanReport, ReportError> {
    Ok(serde_json::from_slice(bytes)?)
}

pub const TABLE_HEADER: &str =
    "repository            components  vulns     mean   median    max    min   stddev  critical  high  medium  low";

/// One row per repository: component count, vulnerability statistics and
/// finding counts by severity. An empty report renders the header only.
pub fn to_table(report: &ScanReport) -> String {
    let mut out = String::new();
    out.push_str(TABLE_HEADER);
    out.push('\n');
    let mut repos: BTreeMap<Repository, (usize, Vec<u64>, SeverityHistogram)> = BTreeMap::new();
    for (c, findings) in &report.per_component {
        let e = repos.entry(c.repository).or_default();
        e.0 += 1;
        if let Some(n) = report.vuln_counts.get(c) {
            e.1.push(*n);
        }
        findings.iter().for_each(|f| e.2.add(f.severity));
    }
    for (repo, (components, counts, h)) in repos {
        let stats = summarize_counts(&counts).ok();
        let num = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<20}  {:>10}  {:>5}  {:>7}  {:>7}  {:>5}  {:>5}  {:>7}  {:>8}  {:>4}  {:>6}  {:>3}",
            repo.as_str(),
            components,
            counts.iter().sum::<u64>(),
            num(stats.map(|s| s.mean)),
            num(stats.map(|s| s.median)),
            stats.map(|s| s.max.to_string()).unwrap_or_else(|| "-".into()),
            stats.map(|s| s.min.to_string()).unwrap_or_else(|| "-".into()),
            num(stats.map(|s| s.stddev)),
            h.critical,
            h.high,
            h.medium,
            h.low,
        );
    }
    out
}

/// Static-analysis interchange document: one rule per distinct rule id and
/// one result per finding.
pub fn to_sarif_like(report: &ScanReport) -> Vec<u8> {
    let mut rules: BTreeMap<&str, AttackVector> = BTreeMap::new();
    let mut results = Vec::new();
    for f in report.findings() {
        rules.entry(&f.rule_id).or_insert(f.vector);
        results.push(json!({
            "ruleId": f.rule_id,
            "level": sarif_level(f.severity),
            "message": {"text": f.evidence},
            "locations": [{
                "physicalLocation": {"artifactLocation": {"uri": format!("{}/{}", f.component, f.location)}}
            }],
            "properties": {"vector": f.vector, "severity": f.severity, "remediation": f.remediation},
        }));
    }
    let rules: Vec<_> = rules
        .into_iter()
        .map(|(id, v)| json!({"id": id, "properties": {"vector": v, "category": v.title()}}))
        .collect();
    let doc = json!({
        "version": "2.1.0",
        "runs": [{
            "tool": {"driver": {"name": "slsa-audit", "version": env!("CARGO_PKG_VERSION"), "rules": rules}},
            "automationDetails": {"id": report.corpus_id},
            "results": results,
        }]
    });
    let mut out = serde_json::to_vec_pretty(&doc).expect("json value serializes");
    out.push(b'\n');
    out
}

pub fn emit(report: &ScanReport, format: OutputFormat) -> Vec<u8> {
    match format {
        OutputFormat::Json => to_json(report),
        OutputFormat::Table => to_table(report).into_bytes(),
        OutputFormat::SarifLike => to_sarif_like(report),
    }
}

/// True when some finding is at or above `threshold`. An `Unknown`
/// threshold matches any finding.
pub fn fails_on(report: &ScanReport, threshold: Severity) -> bool {
    any_at_or_above(report.findings(), threshold)
}

pub fn any_at_or_above<'a, I>(findings: I, threshold: Severity) -> bool
where
    I: IntoIterator<Item = &'a Finding>,
{
    findings.into_iter().any(|f| match (threshold.rank(), f.severity.rank()) {
        (None, _) => true,
        (Some(t), Some(s)) => s >= t,
        (Some(_), None) => false,
    })
}

/// Run header kept apart from the report so the report stays byte-stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRun {
    pub corpus_id: String,
    pub enabled_vectors: BTreeSet<AttackVector>,
    pub report: ScanReport,
    pub tool_versions: BTreeMap<String, String>,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
}

impl AuditRun {
    pub fn validate(&self) -> Result<(), String> {
        if self.enabled_vectors.is_empty() {
            return Err("no attack vector enabled".into());
        }
        if let Some(f) = self.report.findings().find(|f| !self.enabled_vectors.contains(&f.vector)) {
            return Err(format!("finding {} belongs to disabled vector {:?}", f.rule_id, f.vector));
        }
        Ok(())
    }
}

pub fn tool_versions() -> BTreeMap<String, String> {
    BTreeMap::from([("slsa-audit".to_string(), env!("CARGO_PKG_VERSION").to_string())])
}
