//! Runs every enabled analyzer over a corpus directory.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::archive::{
    builtin_signatures, ArchiveFormat, consensus_flag, detect_format, extract, load_signature_db, ArchiveError, Consensus, Engine,
    EngineVerdict,
};
use crate::dockerlint::lint_run_commands;
use crate::iaclint::{iac_findings, lint_dir, RuleCatalog};
use crate::ingest::{load_corpus, CorpusEntry};
use crate::model::{AttackVector, ComponentRef, Finding, ScanReport, Severity};
use crate::typosquat::{find_near_pairs, records_from_components, typosquat_findings, PairSearch};
use crate::vulnscan::{counted_vulns, filter_false_positives, scan_tree, vuln_findings, AdvisoryIndex};

use super::{aggregate, AuditConfig, Batch};

/// Loaded databases and catalogs shared by every component of a run.
pub struct Analyzers {
    pub config: AuditConfig,
    pub index: Option<AdvisoryIndex>,
    pub engines: Vec<Engine>,
    pub catalog: RuleCatalog,
}

impl Analyzers {
    pub fn new(config: AuditConfig, notices: &mut Vec<String>) -> Result<Self, String> {
        let index = match &config.vulnscan.advisory_db {
            Some(dir) => {
                let (index, n) = AdvisoryIndex::load(dir).map_err(|e| e.to_string())?;
                notices.extend(n);
                Some(index)
            }
            None => None,
        };
        let mut engines = Vec::new();
        for path in &config.archive.signature_dbs {
            let (signatures, n) = load_signature_db(path).map_err(|e| format!("{}: {e}", path.display()))?;
            notices.extend(n.into_iter().map(|m| format!("{}: {m}", path.display())));
            let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            engines.push(Engine { id, signatures });
        }
        if engines.is_empty() {
            engines.push(Engine {
                id: "builtin".into(),
                signatures: builtin_signatures(),
            });
        }
        let catalog = match &config.iac.catalog {
            Some(p) => RuleCatalog::load(p).map_err(|e| e.to_string())?,
            None => RuleCatalog::default(),
        };
        Ok(Analyzers {
            config,
            index,
            engines,
            catalog,
        })
    }

    /// Consensus threshold actually applied: never more than the number of
    /// engines, so a single-engine setup can still flag.
    pub fn effective_threshold(&self) -> usize {
        self.config.archive.consensus_threshold.min(self.engines.len()).max(1)
    }

    /// Dependency vulnerabilities of the component's source tree and image
    /// filesystem. Returns findings and the counted vulnerabilities.
    pub fn vulns(&self, entry: &CorpusEntry, notices: &mut Vec<String>) -> (Vec<Finding>, u64) {
        let Some(index) = &self.index else { return (Vec::new(), 0) };
        let mut findings = Vec::new();
        let mut count = 0;
        for sub in ["tree", "image"] {
            let dir = entry.root_path.join(sub);
            if !dir.is_dir() {
                continue;
            }
            let scan = scan_tree(&dir, index, &self.config.vulnscan.source_refs);
            notices.extend(scan.notices.into_iter().map(|n| format!("{}: {n}", entry.component)));
            let matches = if self.config.vulnscan.fp_filter {
                filter_false_positives(scan.matches).kept
            } else {
                scan.matches
            };
            count += counted_vulns(&matches);
            findings.extend(vuln_findings(&entry.component, sub, &matches));
        }
        (findings, count)
    }

    /// Scans one archive file with every engine.
    pub fn archive(&self, component: &ComponentRef, path: &Path, label: &str) -> ArchiveScan {
        let mut out = ArchiveScan {
            label: label.to_string(),
            ..Default::default()
        };
        let finding = |rule: &str, severity, evidence: String| Finding {
            rule_id: rule.to_string(),
            vector: AttackVector::V2,
            severity,
            component: component.clone(),
            location: label.to_string(),
            evidence,
            remediation: "Remove the archive or rebuild it from trusted sources.".into(),
        };
        let leading = match read_prefix(path) {
            Ok(b) => b,
            Err(e) => {
                out.notices.push(format!("{label}: {e}"));
                return out;
            }
        };
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let format = match detect_format(&name, &leading) {
            Ok(f) => f,
            Err(e) => {
                out.notices.push(format!("{label}: {e}"));
                return out;
            }
        };
        out.format = Some(format);
        let limits = &self.config.archive.limits;
        let extraction = match extract(path, format, limits) {
            Ok(x) => x,
            Err(e @ ArchiveError::PathTraversal { .. }) => {
                out.findings.push(finding("ARCHIVE-PATH-TRAVERSAL", Severity::High, e.to_string()));
                return out;
            }
            Err(e @ ArchiveError::Bomb { .. }) => {
                out.findings.push(finding("ARCHIVE-DECOMPRESSION-BOMB", Severity::High, e.to_string()));
                return out;
            }
            Err(e) => {
                out.notices.push(format!("{label}: {e}"));
                return out;
            }
        };
        out.notices.extend(extraction.notices.into_iter().map(|n| format!("{label}: {n}")));
        let depth = self.config.archive.depth;
        out.verdicts = self
            .engines
            .iter()
            .map(|e| e.verdict(&extraction.entries, depth, limits))
            .collect();
        let consensus = consensus_flag(&out.verdicts, self.effective_threshold()).expect("threshold is positive");
        if consensus.malicious {
            let sigs: Vec<&str> = out
                .verdicts
                .iter()
                .flat_map(|v| v.matched_signatures.iter().map(String::as_str))
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            out.findings.push(finding(
                "ARCHIVE-MALICIOUS-CONTENT",
                Severity::Critical,
                format!(
                    "{format} archive flagged by {} of {} engines: {}",
                    consensus.engines_flagging,
                    out.verdicts.len(),
                    sigs.join(", ")
                ),
            ));
        } else if consensus.engines_flagging > 0 {
            out.notices.push(format!(
                "{label}: flagged by {} engines, below the threshold of {}",
                consensus.engines_flagging,
                self.effective_threshold()
            ));
        }
        out.consensus = Some(consensus);
        out
    }

    pub fn archives(&self, entry: &CorpusEntry, notices: &mut Vec<String>) -> Vec<Finding> {
        let dir = entry.archives_dir();
        let mut files: Vec<_> = match std::fs::read_dir(&dir) {
            Ok(it) => it.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.is_file()).collect(),
            Err(_) => return Vec::new(),
        };
        files.sort();
        let mut findings = Vec::new();
        for f in files {
            let label = format!("archives/{}", f.file_name().expect("file").to_string_lossy());
            let scan = self.archive(&entry.component, &f, &label);
            notices.extend(scan.notices.into_iter().map(|n| format!("{}: {n}", entry.component)));
            findings.extend(scan.findings);
        }
        findings
    }

    pub fn docker(&self, entry: &CorpusEntry, notices: &mut Vec<String>) -> Vec<Finding> {
        let path = entry.run_commands_path();
        let Ok(text) = std::fs::read_to_string(&path) else { return Vec::new() };
        let lint = lint_run_commands(&entry.component, "run_commands.txt", &text, &self.config.docker);
        notices.extend(lint.notices.into_iter().map(|n| format!("{}: {n}", entry.component)));
        lint.findings
    }

    pub fn iac(&self, entry: &CorpusEntry, notices: &mut Vec<String>) -> Vec<Finding> {
        match lint_dir(&entry.iac_dir(), "iac", &self.catalog) {
            Ok(out) => {
                notices.extend(out.notices.into_iter().map(|n| format!("{}: {n}", entry.component)));
                iac_findings(&entry.component, &out.findings, &self.catalog)
            }
            Err(e) => {
                notices.push(format!("{}: {e}", entry.component));
                Vec::new()
            }
        }
    }

    pub fn typosquat<'a, I>(&self, components: I) -> PairSearch
    where
        I: IntoIterator<Item = &'a ComponentRef>,
    {
        let records = records_from_components(components, &self.config.typosquat.normalize);
        find_near_pairs(&records, self.config.typosquat.max_distance).unwrap_or_default()
    }
}

fn read_prefix(path: &Path) -> std::io::Result<Vec<u8>> {
    use std::io::Read;
    let mut buf = Vec::with_capacity(8192);
    std::fs::File::open(path)?.take(8192).read_to_end(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ArchiveScan {
    pub label: String,
    pub format: Option<ArchiveFormat>,
    pub verdicts: Vec<EngineVerdict>,
    pub consensus: Option<Consensus>,
    pub findings: Vec<Finding>,
    pub notices: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CorpusScan {
    pub report: ScanReport,
    pub notices: Vec<String>,
}

/// Corpus id: the corpus directory's name.
pub fn corpus_id(root: &Path) -> String {
    root.canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| root.display().to_string())
}

/// Every enabled vector over every component under `root`.
pub fn scan_corpus(root: &Path, config: &AuditConfig) -> Result<CorpusScan, String> {
    let mut notices = Vec::new();
    let load = load_corpus(root).map_err(|e| e.to_string())?;
    for e in &load.errors {
        notices.push(e.to_string());
    }
    let analyzers = Analyzers::new(config.clone(), &mut notices)?;
    let enabled = |v| config.enabled_vectors.contains(&v);
    if enabled(AttackVector::V1) && analyzers.index.is_none() {
        notices.push("no advisory database configured; dependency scan skipped".into());
    }
    let id = corpus_id(root);
    let mut batch = Batch::new(id.clone());
    for entry in &load.entries {
        batch.components.push(entry.component.clone());
        if enabled(AttackVector::V1) && analyzers.index.is_some() {
            let (f, n) = analyzers.vulns(entry, &mut notices);
            batch.findings.extend(f);
            batch.vuln_counts.insert(entry.component.clone(), n);
        }
        if enabled(AttackVector::V2) {
            batch.findings.extend(analyzers.archives(entry, &mut notices));
        }
        if enabled(AttackVector::V3) {
            batch.findings.extend(analyzers.docker(entry, &mut notices));
        }
        if enabled(AttackVector::V4) {
            batch.findings.extend(analyzers.iac(entry, &mut notices));
        }
    }
    if enabled(AttackVector::V5) {
        let search = analyzers.typosquat(load.entries.iter().map(|e| &e.component));
        batch.findings.extend(typosquat_findings(&search));
    }
    let report = aggregate(&id, vec![batch], &config.cdf_thresholds).map_err(|e| e.to_string())?;
    notices.sort();
    notices.dedup();
    Ok(CorpusScan { report, notices })
}

/// Findings grouped by vector, for summaries.
pub fn vector_counts(report: &ScanReport) -> BTreeMap<AttackVector, usize> {
    let mut out: BTreeMap<AttackVector, usize> = AttackVector::ALL.iter().map(|v| (*v, 0)).collect();
    for f in report.findings() {
        *out.entry(f.vector).or_default() += 1;
    }
    out
}
