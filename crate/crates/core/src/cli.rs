//! Command-line front end. The binary only calls [`main_with_args`].
//!
//! Exit codes: 0 clean, 1 when `--fail-on` is given and some finding is at
//! or above it, 2 on any operational error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::archive::{inject_and_pack, read_tree, ArchiveFormat};
use crate::dockerlint::{lint_run_commands, DockerRules};
use crate::iaclint::{
    iac_findings, lint_dir, lint_template, rule_frequencies, severity_histogram, IacFinding, IacHistogram,
    RuleFrequency,
};
use crate::ingest::{is_serverless, load_corpus, ArtifactKind};
use crate::model::{AttackVector, ComponentRef, Finding, Repository, ScanReport, Severity};
use crate::report::{
    aggregate, any_at_or_above, emit, load_config, scan_corpus, tool_versions, Analyzers, AuditConfig, AuditRun,
    Batch, OutputFormat,
};
use crate::typosquat::{
    distance_cdf, find_near_pairs, records_from_components, typosquat_findings, DistancePoint, NameKind, NearPair,
};
use crate::vulnscan::{compare_scans, import_external_scan_str, jaccard_similarity, ExternalFormat, ScanSets};

#[derive(Debug, Parser)]
#[command(name = "slsa-audit", version, about = "Audit serverless components for supply-chain attack vectors")]
pub struct Cli {
    /// json, table or sarif-like.
    #[arg(long, global = true, default_value = "json")]
    pub output: OutputFormat,
    /// Exit with 1 when any finding is at or above this severity.
    #[arg(long, global = true)]
    pub fail_on: Option<Severity>,
    /// JSON config file; falls back to $SLSA_AUDIT_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the components of a local corpus.
    Ingest {
        #[arg(long)]
        root: PathBuf,
        /// Keep only components with serverless markers.
        #[arg(long)]
        filter_serverless: bool,
    },
    /// Match dependencies against an advisory database, or compare two
    /// external scanner reports.
    Vulnscan {
        #[arg(long, required_unless_present = "compare")]
        corpus: Option<PathBuf>,
        #[arg(long, required_unless_present = "compare")]
        db: Option<PathBuf>,
        #[arg(long)]
        fp_filter: bool,
        #[arg(long, num_args = 2, value_names = ["SCAN_A", "SCAN_B"])]
        compare: Option<Vec<PathBuf>>,
    },
    /// Scan compressed artifacts.
    #[command(subcommand)]
    Archive(ArchiveCommand),
    /// Lint `docker run` commands.
    Docker {
        #[arg(long, required_unless_present = "cmd", conflicts_with = "cmd")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        cmd: Option<String>,
        /// JSON file overriding the docker rule lists.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Lint infrastructure-as-code templates.
    Iac {
        #[arg(long, required_unless_present = "paths")]
        corpus: Option<PathBuf>,
        /// Template files or directories, instead of a corpus.
        #[arg(conflicts_with = "corpus")]
        paths: Vec<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Print severity histogram and rule frequencies instead of findings.
        #[arg(long)]
        histogram: bool,
    },
    /// Find lexically similar usernames and image names.
    Typosquat {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        max_distance: Option<usize>,
        #[arg(long)]
        kind: Option<NameKind>,
    },
    /// Every enabled vector over a corpus.
    ScanAll {
        #[arg(long)]
        corpus: PathBuf,
        /// Also write the run header (timestamps, versions) here.
        #[arg(long)]
        run_file: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ArchiveCommand {
    Scan(ArchiveScanArgs),
    /// Test harness: add a payload to a tree and pack it.
    Inject(InjectArgs),
}

#[derive(Debug, Args)]
pub struct ArchiveScanArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub depth: Option<u32>,
    #[arg(long)]
    pub threshold: Option<usize>,
    /// Signature database, one engine per file.
    #[arg(long = "signatures")]
    pub signature_dbs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    pub tree: PathBuf,
    pub payload: PathBuf,
    #[arg(long)]
    pub format: ArchiveFormat,
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
    /// Directory inside the tree to place the payload in.
    #[arg(long, default_value = "")]
    pub at: String,
    #[arg(long)]
    pub i_am_testing: bool,
}

/// What a subcommand produced.
struct Outcome {
    stdout: Vec<u8>,
    notices: Vec<String>,
    findings: Vec<Finding>,
}

impl Outcome {
    fn report(report: &ScanReport, format: OutputFormat, notices: Vec<String>) -> Self {
        Outcome {
            stdout: emit(report, format),
            notices,
            findings: report.findings().cloned().collect(),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return 2;
            }
            let _ = write!(stdout, "{}", e.render());
            return 0;
        }
    };
    run(&cli, stdout, stderr)
}

pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let outcome = load_config(cli.config.as_deref()).and_then(|cfg| dispatch(cli, cfg));
    match outcome {
        Ok(o) => {
            for n in &o.notices {
                let _ = writeln!(stderr, "notice: {n}");
            }
            if let Err(e) = stdout.write_all(&o.stdout) {
                let _ = writeln!(stderr, "error: {e}");
                return 2;
            }
            match cli.fail_on {
                Some(t) if any_at_or_above(&o.findings, t) => 1,
                _ => 0,
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}

fn dispatch(cli: &Cli, mut cfg: AuditConfig) -> Result<Outcome, String> {
    let fmt = cli.output;
    match &cli.command {
        Command::Ingest { root, filter_serverless } => ingest(root, *filter_serverless, fmt),
        Command::Vulnscan {
            compare: Some(files), ..
        } => compare(&files[0], &files[1], fmt),
        Command::Vulnscan {
            corpus, db, fp_filter, ..
        } => {
            let corpus = corpus.as_deref().ok_or("--corpus is required")?;
            cfg.vulnscan.advisory_db = db.clone();
            cfg.vulnscan.fp_filter |= fp_filter;
            corpus_report(corpus, cfg, AttackVector::V1, fmt)
        }
        Command::Archive(ArchiveCommand::Scan(args)) => {
            if let Some(d) = args.depth {
                cfg.archive.depth = d;
            }
            if let Some(t) = args.threshold {
                if t == 0 {
                    return Err("--threshold must be at least 1".into());
                }
                cfg.archive.consensus_threshold = t;
            }
            if !args.signature_dbs.is_empty() {
                cfg.archive.signature_dbs = args.signature_dbs.clone();
            }
            archive_scan(&args.file, cfg, fmt)
        }
        Command::Archive(ArchiveCommand::Inject(args)) => inject(args),
        Command::Docker { corpus, cmd, rules } => {
            if let Some(p) = rules {
                cfg.docker = DockerRules::load(p).map_err(|e| format!("{}: {e}", p.display()))?;
            }
            match (corpus, cmd) {
                (Some(c), _) => corpus_report(c, cfg, AttackVector::V3, fmt),
                (None, Some(cmd)) => {
                    let component = local_component("cmd")?;
                    let lint = lint_run_commands(&component, "cmd", cmd, &cfg.docker);
                    single_report(&component, lint.findings, lint.notices, fmt)
                }
                (None, None) => Err("one of --corpus or --cmd is required".into()),
            }
        }
        Command::Iac {
            corpus,
            paths,
            catalog,
            histogram,
        } => {
            if catalog.is_some() {
                cfg.iac.catalog = catalog.clone();
            }
            iac(corpus.as_deref(), paths, cfg, *histogram, fmt)
        }
        Command::Typosquat {
            corpus,
            max_distance,
            kind,
        } => {
            if let Some(d) = max_distance {
                cfg.typosquat.max_distance = *d;
            }
            typosquat(corpus, cfg, *kind, fmt)
        }
        Command::ScanAll { corpus, run_file } => scan_all(corpus, &cfg, run_file.as_deref(), fmt),
    }
}

fn local_component(name: &str) -> Result<ComponentRef, String> {
    ComponentRef::new(Repository::LocalCorpus, "local", name, None).map_err(|e| e.to_string())
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable");
    out.push(b'\n');
    out
}

fn corpus_report(corpus: &Path, mut cfg: AuditConfig, vector: AttackVector, fmt: OutputFormat) -> Result<Outcome, String> {
    cfg.enabled_vectors = BTreeSet::from([vector]);
    let scan = scan_corpus(corpus, &cfg)?;
    Ok(Outcome::report(&scan.report, fmt, scan.notices))
}

fn single_report(
    component: &ComponentRef,
    findings: Vec<Finding>,
    notices: Vec<String>,
    fmt: OutputFormat,
) -> Result<Outcome, String> {
    let mut batch = Batch::new("cli");
    batch.components.push(component.clone());
    batch.findings = findings;
    let report = aggregate("cli", vec![batch], &[]).map_err(|e| e.to_string())?;
    Ok(Outcome::report(&report, fmt, notices))
}

#[derive(Serialize)]
struct IngestRow {
    component: ComponentRef,
    artifact_kind: ArtifactKind,
    dir: String,
}

fn ingest(root: &Path, filter_serverless: bool, fmt: OutputFormat) -> Result<Outcome, String> {
    let load = load_corpus(root).map_err(|e| e.to_string())?;
    let mut notices: Vec<String> = load.errors.iter().map(|e| e.to_string()).collect();
    let mut rows = Vec::new();
    for entry in &load.entries {
        if filter_serverless {
            match is_serverless(entry) {
                Ok(true) => {}
                Ok(false) => continue,
                Err(e) => {
                    notices.push(format!("{}: {e}", entry.component));
                    continue;
                }
            }
        }
        rows.push(IngestRow {
            component: entry.component.clone(),
            artifact_kind: entry.artifact_kind,
            dir: file_label(&entry.root_path),
        });
    }
    let stdout = match fmt {
        OutputFormat::Table => {
            let mut s = format!("{:<50}  {:<12}  dir\n", "component", "kind");
            for r in &rows {
                let kind = serde_json::to_value(r.artifact_kind).expect("kind serializes");
                let _ = writeln!(s, "{:<50}  {:<12}  {}", r.component.to_string(), kind.as_str().unwrap_or(""), r.dir);
            }
            s.into_bytes()
        }
        _ => to_json(&rows),
    };
    Ok(Outcome {
        stdout,
        notices,
        findings: Vec::new(),
    })
}

/// Reads a scanner report in either supported layout.
fn read_external(path: &Path) -> Result<ScanSets, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let origin = path.display().to_string();
    let trivy = import_external_scan_str(&origin, &text, ExternalFormat::TrivyJson);
    match trivy {
        Ok(sets) if !sets.is_empty() => Ok(sets),
        _ => import_external_scan_str(&origin, &text, ExternalFormat::GrypeJson)
            .or_else(|grype| trivy.map_err(|_| grype))
            .map_err(|e| e.to_string()),
    }
}

#[derive(Serialize)]
struct Comparison {
    per_component: std::collections::BTreeMap<String, f64>,
    /// Similarity of the union of all findings.
    overall: f64,
}

fn compare(a: &Path, b: &Path, fmt: OutputFormat) -> Result<Outcome, String> {
    let (sa, sb) = (read_external(a)?, read_external(b)?);
    let flat = |s: &ScanSets| -> BTreeSet<(String, String)> {
        s.iter()
            .flat_map(|(c, ids)| ids.iter().map(move |id| (c.clone(), id.clone())))
            .collect()
    };
    let cmp = Comparison {
        per_component: compare_scans(&sa, &sb),
        overall: jaccard_similarity(&flat(&sa), &flat(&sb)),
    };
    let stdout = match fmt {
        OutputFormat::Table => {
            let mut s = format!("{:<50}  jaccard\n", "component");
            for (c, j) in &cmp.per_component {
                let _ = writeln!(s, "{c:<50}  {j:.3}");
            }
            let _ = writeln!(s, "{:<50}  {:.3}", "(all)", cmp.overall);
            s.into_bytes()
        }
        _ => to_json(&cmp),
    };
    Ok(Outcome {
        stdout,
        notices: Vec::new(),
        findings: Vec::new(),
    })
}

fn archive_scan(file: &Path, cfg: AuditConfig, fmt: OutputFormat) -> Result<Outcome, String> {
    if !file.is_file() {
        return Err(format!("{}: not a file", file.display()));
    }
    let mut notices = Vec::new();
    let analyzers = Analyzers::new(cfg, &mut notices)?;
    let label = file_label(file);
    let component = local_component(&label)?;
    let scan = analyzers.archive(&component, file, &label);
    notices.extend(scan.notices.iter().cloned());
    if fmt != OutputFormat::Json {
        return single_report(&component, scan.findings, notices, fmt);
    }
    Ok(Outcome {
        stdout: to_json(&scan),
        notices,
        findings: scan.findings,
    })
}

fn inject(args: &InjectArgs) -> Result<Outcome, String> {
    if !args.i_am_testing {
        return Err("archive inject builds test artifacts; pass --i-am-testing to confirm".into());
    }
    let tree = read_tree(&args.tree).map_err(|e| format!("{}: {e}", args.tree.display()))?;
    let payload = std::fs::read(&args.payload).map_err(|e| format!("{}: {e}", args.payload.display()))?;
    let name = file_label(&args.payload);
    let bytes = inject_and_pack(&tree, &name, &payload, args.format, &args.at).map_err(|e| e.to_string())?;
    std::fs::write(&args.out, &bytes).map_err(|e| format!("{}: {e}", args.out.display()))?;
    Ok(Outcome {
        stdout: Vec::new(),
        notices: vec![format!("wrote {} ({} bytes, {})", args.out.display(), bytes.len(), args.format)],
        findings: Vec::new(),
    })
}

#[derive(Serialize)]
struct IacSummary {
    templates: usize,
    histogram: IacHistogram,
    rule_frequencies: Vec<RuleFrequency>,
}

fn iac(
    corpus: Option<&Path>,
    paths: &[PathBuf],
    cfg: AuditConfig,
    histogram: bool,
    fmt: OutputFormat,
) -> Result<Outcome, String> {
    let mut notices = Vec::new();
    let analyzers = Analyzers::new(cfg, &mut notices)?;
    let catalog = &analyzers.catalog;
    // Template labels carry the component so template counts stay distinct.
    let mut raw: Vec<IacFinding> = Vec::new();
    let mut templates = 0;
    let mut batch = Batch::new("cli");
    if let Some(root) = corpus {
        let load = load_corpus(root).map_err(|e| e.to_string())?;
        notices.extend(load.errors.iter().map(|e| e.to_string()));
        batch.corpus_id = crate::report::corpus_id(root);
        for entry in &load.entries {
            batch.components.push(entry.component.clone());
            let dir = entry.iac_dir();
            if !dir.is_dir() {
                continue;
            }
            let out = lint_dir(&dir, "iac", catalog).map_err(|e| e.to_string())?;
            notices.extend(out.notices.iter().map(|n| format!("{}: {n}", entry.component)));
            templates += out.templates.len();
            batch.findings.extend(iac_findings(&entry.component, &out.findings, catalog));
            raw.extend(out.findings.into_iter().map(|mut f| {
                f.span.file = format!("{}/{}", entry.component, f.span.file);
                f
            }));
        }
    } else {
        for path in paths {
            let label = file_label(path);
            let component = local_component(&label)?;
            batch.components.push(component.clone());
            let findings = if path.is_dir() {
                let out = lint_dir(path, &label, catalog).map_err(|e| e.to_string())?;
                templates += out.templates.len();
                notices.extend(out.notices);
                out.findings
            } else {
                let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                let lint = lint_template(&label, &text, catalog).map_err(|e| e.to_string())?;
                templates += 1;
                notices.extend(lint.notices);
                lint.findings
            };
            batch.findings.extend(iac_findings(&component, &findings, catalog));
            raw.extend(findings);
        }
    }
    if !histogram {
        let id = batch.corpus_id.clone();
        let report = aggregate(&id, vec![batch], &[]).map_err(|e| e.to_string())?;
        return Ok(Outcome::report(&report, fmt, notices));
    }
    let summary = IacSummary {
        templates,
        histogram: severity_histogram(&raw),
        rule_frequencies: rule_frequencies(&raw, templates),
    };
    let stdout = match fmt {
        OutputFormat::Table => iac_table(&summary).into_bytes(),
        _ => to_json(&summary),
    };
    Ok(Outcome {
        stdout,
        notices,
        findings: batch.findings,
    })
}

fn iac_table(s: &IacSummary) -> String {
    let mut out = format!("templates: {}\n\n", s.templates);
    let _ = writeln!(out, "{:<16}  critical  high  medium  low  unknown", "framework");
    let rows = s.histogram.by_framework.iter().map(|(f, h)| (f.to_string(), h));
    for (name, h) in rows.chain(std::iter::once(("total".to_string(), &s.histogram.total))) {
        let _ = writeln!(
            out,
            "{name:<16}  {:>8}  {:>4}  {:>6}  {:>3}  {:>7}",
            h.critical, h.high, h.medium, h.low, h.unknown
        );
    }
    let _ = writeln!(out, "\n{:<40}  count  %findings  %templates", "rule");
    for r in &s.rule_frequencies {
        let _ = writeln!(
            out,
            "{:<40}  {:>5}  {:>9.1}  {:>10.1}",
            r.rule_id, r.count, r.pct_of_findings, r.pct_of_templates
        );
    }
    out
}

#[derive(Serialize)]
struct TyposquatOut {
    total_pairs: u64,
    pairs: Vec<NearPair>,
    collisions: Vec<NearPair>,
    cdf: Vec<DistancePoint>,
}

fn typosquat(corpus: &Path, cfg: AuditConfig, kind: Option<NameKind>, fmt: OutputFormat) -> Result<Outcome, String> {
    let load = load_corpus(corpus).map_err(|e| e.to_string())?;
    let mut notices: Vec<String> = load.errors.iter().map(|e| e.to_string()).collect();
    let max = cfg.typosquat.max_distance;
    let mut records = records_from_components(load.entries.iter().map(|e| &e.component), &cfg.typosquat.normalize);
    if let Some(k) = kind {
        records.retain(|r| r.kind == k);
    }
    let search = find_near_pairs(&records, max).map_err(|e| e.to_string())?;
    let cdf = distance_cdf(&records, max).unwrap_or_else(|e| {
        notices.push(e.to_string());
        Vec::new()
    });
    let findings = typosquat_findings(&search);
    let stdout = match fmt {
        OutputFormat::Json => to_json(&TyposquatOut {
            total_pairs: search.total_pairs,
            pairs: search.pairs,
            collisions: search.collisions,
            cdf,
        }),
        OutputFormat::Table => {
            let mut s = format!("{:<8}  {:>8}  {:<32}  {:<32}\n", "kind", "distance", "a", "b");
            for p in search.collisions.iter().chain(&search.pairs) {
                let _ = writeln!(
                    s,
                    "{:<8}  {:>8}  {:<32}  {:<32}",
                    p.a.kind.to_string(),
                    p.distance,
                    format!("{} ({})", p.a.name, p.a.owner),
                    format!("{} ({})", p.b.name, p.b.owner)
                );
            }
            let _ = writeln!(s, "\ndistance  cumulative_fraction");
            for pt in &cdf {
                let _ = writeln!(s, "{:>8}  {:.6}", pt.distance, pt.fraction);
            }
            s.into_bytes()
        }
        OutputFormat::SarifLike => {
            let mut batch = Batch::new("cli");
            batch.findings = findings.clone();
            let report = aggregate("cli", vec![batch], &[]).map_err(|e| e.to_string())?;
            emit(&report, fmt)
        }
    };
    Ok(Outcome {
        stdout,
        notices,
        findings,
    })
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn scan_all(corpus: &Path, cfg: &AuditConfig, run_file: Option<&Path>, fmt: OutputFormat) -> Result<Outcome, String> {
    let started = now();
    let scan = scan_corpus(corpus, cfg)?;
    if let Some(path) = run_file {
        let run = AuditRun {
            corpus_id: scan.report.corpus_id.clone(),
            enabled_vectors: cfg.enabled_vectors.clone(),
            report: scan.report.clone(),
            tool_versions: tool_versions(),
            started,
            finished: now(),
        };
        run.validate()?;
        std::fs::write(path, to_json(&run)).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    Ok(Outcome::report(&scan.report, fmt, scan.notices))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = main_with_args(std::iter::once("slsa-audit").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn docker_cmd_and_fail_on() {
        let cmd = "docker run --privileged -v /var/run/docker.sock:/var/run/docker.sock img";
        let (code, out, _) = run_args(&["docker", "--cmd", cmd]);
        assert_eq!(code, 0);
        assert!(out.contains("DOCKER-PRIVILEGED"), "{out}");
        let (code, _, _) = run_args(&["--fail-on", "high", "docker", "--cmd", cmd]);
        assert_eq!(code, 1);
        let (code, _, _) = run_args(&["--fail-on", "critical", "docker", "--cmd", "docker run alpine"]);
        assert_eq!(code, 0);
    }

    #[test]
    fn operational_errors_exit_2() {
        assert_eq!(run_args(&["scan-all", "--corpus", "/definitely/not/here"]).0, 2);
        assert_eq!(run_args(&["--output", "xml", "ingest", "--root", "."]).0, 2);
        assert_eq!(run_args(&["bogus"]).0, 2);
    }

    #[test]
    fn inject_requires_confirmation() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "a").unwrap();
        let payload = dir.path().join("p.bin");
        std::fs::write(&payload, "x").unwrap();
        let out = dir.path().join("o.zip");
        let tree = dir.path().to_str().unwrap();
        let base = ["archive", "inject", tree, payload.to_str().unwrap(), "--format", "zip", "-o", out.to_str().unwrap()];
        let (code, _, err) = run_args(&base);
        assert_eq!(code, 2);
        assert!(err.contains("--i-am-testing"));
        let mut confirmed = base.to_vec();
        confirmed.push("--i-am-testing");
        assert_eq!(run_args(&confirmed).0, 0);
        assert!(out.is_file());
    }

    #[test]
    fn compare_reads_both_layouts() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        std::fs::write(&a, r#"{"Results":[{"ArtifactName":"x","VulnerabilityID":"CVE-1"},{"ArtifactName":"x","VulnerabilityID":"CVE-2"}]}"#).unwrap();
        std::fs::write(&b, r#"{"matches":[{"component":"x","id":"CVE-1"}]}"#).unwrap();
        let (code, out, _) = run_args(&["vulnscan", "--compare", a.to_str().unwrap(), b.to_str().unwrap()]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["per_component"]["x"], 0.5);
    }
}
