//! Cross-module properties checked with generated inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use slsa_audit::archive::{
    builtin_signatures, extract_bytes, inject_and_pack, pack, scan_entries, ArchiveError, ArchiveFormat,
    ExtractLimits, EICAR,
};
use slsa_audit::iaclint::{lint_template, parse_template, IaCFramework, RuleCatalog};
use slsa_audit::ingest::Manifest;
use slsa_audit::model::{severity_band, AttackVector, ComponentRef, Finding, Repository, Severity};
use slsa_audit::report::{aggregate, from_json, to_json, Batch};
use slsa_audit::vulnscan::{
    jaccard_similarity, match_advisories, Advisory, AdvisoryIndex, Bound, Ecosystem, PackageInventory,
    VersionInterval,
};

fn fixture_files() -> Vec<(PathBuf, String)> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/iac");
    let mut out = Vec::new();
    for dir in ["terraform", "cloudformation", "sam"] {
        for e in std::fs::read_dir(root.join(dir)).unwrap() {
            let p = e.unwrap().path();
            let text = std::fs::read_to_string(&p).unwrap();
            out.push((p, text));
        }
    }
    out.sort();
    out
}

fn label(p: &Path) -> String {
    p.file_name().unwrap().to_string_lossy().into_owned()
}

type Summary = (IaCFramework, Vec<(String, String, String)>);

fn summary(file: &str, text: &str, catalog: &RuleCatalog) -> Summary {
    let lint = lint_template(file, text, catalog).unwrap();
    let mut f: Vec<_> = lint
        .findings
        .into_iter()
        .map(|f| (f.rule_id, f.logical_id, f.severity.to_string()))
        .collect();
    f.sort();
    (lint.framework, f)
}

/// Shuffles top-level keys and resources of a YAML or JSON template.
fn shuffle_doc(text: &str, json: bool, rng: &mut StdRng) -> String {
    let doc: serde_yaml::Value = serde_yaml::from_str(text).unwrap();
    let mut shuffle = |m: &serde_yaml::Mapping| -> serde_yaml::Mapping {
        let mut entries: Vec<_> = m.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        entries.shuffle(rng);
        entries.into_iter().collect()
    };
    let mut top = shuffle(doc.as_mapping().unwrap());
    if let Some(serde_yaml::Value::Mapping(res)) = top.get("Resources").cloned() {
        top.insert("Resources".into(), serde_yaml::Value::Mapping(shuffle(&res)));
    }
    let out = serde_yaml::Value::Mapping(top);
    if json {
        serde_json::to_string(&out).unwrap()
    } else {
        serde_yaml::to_string(&out).unwrap()
    }
}

/// Shuffles top-level Terraform blocks.
fn shuffle_tf(text: &str, rng: &mut StdRng) -> String {
    let starts = ["resource ", "data ", "variable ", "module ", "output ", "locals ", "provider ", "terraform "];
    let mut blocks: Vec<String> = Vec::new();
    for line in text.lines() {
        if blocks.is_empty() || starts.iter().any(|s| line.starts_with(s)) {
            blocks.push(String::new());
        }
        let b = blocks.last_mut().unwrap();
        b.push_str(line);
        b.push('\n');
    }
    blocks.shuffle(rng);
    blocks.concat()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn iac_results_ignore_key_order(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let catalog = RuleCatalog::default();
        for (path, text) in fixture_files() {
            let file = label(&path);
            let shuffled = match path.extension().unwrap().to_str().unwrap() {
                "tf" => shuffle_tf(&text, &mut rng),
                "json" => shuffle_doc(&text, true, &mut rng),
                _ => shuffle_doc(&text, false, &mut rng),
            };
            prop_assert_eq!(summary(&file, &shuffled, &catalog), summary(&file, &text, &catalog), "{}", file);
        }
    }

    #[test]
    fn catalog_order_only_changes_finding_order(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let base = RuleCatalog::default();
        let mut permuted = base.clone();
        permuted.rules.shuffle(&mut rng);
        for (path, text) in fixture_files() {
            let file = label(&path);
            prop_assert_eq!(summary(&file, &text, &permuted), summary(&file, &text, &base));
        }
    }

    #[test]
    fn no_cors_keys_no_cors_findings(
        buckets in proptest::collection::vec(("[A-Z][a-z]{2,8}", any::<bool>()), 0..4),
        api in any::<bool>(),
    ) {
        let mut t = String::from("Resources:\n");
        for (i, (name, kms)) in buckets.iter().enumerate() {
            t.push_str(&format!("  {name}{i}:\n    Type: AWS::S3::Bucket\n"));
            if *kms {
                t.push_str("    Properties:\n      BucketEncryption:\n        ServerSideEncryptionConfiguration:\n          - ServerSideEncryptionByDefault:\n              SSEAlgorithm: aws:kms\n");
            }
        }
        if api {
            t.push_str("  Api:\n    Type: AWS::ApiGateway::RestApi\n    Properties:\n      Name: open\n");
        }
        let lint = lint_template("t.yaml", &t, &RuleCatalog::default()).unwrap();
        prop_assert!(lint.findings.iter().all(|f| f.rule_id != "IAC-API-CORS-WILDCARD"));
        let lines = t.lines().count();
        for f in &lint.findings {
            prop_assert!(1 <= f.span.start_line && f.span.start_line <= f.span.end_line && f.span.end_line <= lines);
        }
    }

    #[test]
    fn manifest_round_trip(pairs in proptest::collection::btree_map("[a-z_]{1,10}", "[ -~]{0,20}", 0..8), trailing in any::<bool>()) {
        let mut text = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("\n");
        if trailing && !text.is_empty() {
            text.push('\n');
        }
        prop_assert_eq!(Manifest::parse(&text).unwrap().to_string(), text);
    }

    #[test]
    fn jaccard_extremes(a in proptest::collection::btree_set(0u8..10, 0..8), b in proptest::collection::btree_set(0u8..10, 0..8)) {
        let j = jaccard_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j == 1.0, a == b);
        prop_assert_eq!(j == 0.0, a.is_disjoint(&b) && !(a.is_empty() && b.is_empty()));
    }

    #[test]
    fn matching_is_monotone(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (inv, mut db) = random_instance(&mut rng);
        let key = |adv: &[Advisory]| -> BTreeSet<(String, String, String)> {
            let index = AdvisoryIndex::build(adv.to_vec()).unwrap();
            let out = match_advisories(&inv, &index);
            for m in &out.matches {
                let adv = adv.iter().find(|a| a.id == m.advisory_id).unwrap();
                assert_eq!(m.severity, severity_band(adv.cvss_score).unwrap());
            }
            out.matches.into_iter().map(|m| (m.advisory_id, m.package.name, m.package.version)).collect()
        };
        let before = key(&db);
        db.push(random_advisory(&mut rng, db.len()));
        let after = key(&db);
        prop_assert!(before.is_subset(&after));
    }

    #[test]
    fn histogram_conserves_findings(
        raw in proptest::collection::vec((0usize..4, 0usize..5, 0usize..3, 0usize..6), 0..60),
    ) {
        let comps: Vec<ComponentRef> = (0..4)
            .map(|i| ComponentRef::new(Repository::LocalCorpus, "p", format!("c{i}"), None).unwrap())
            .collect();
        let sevs = [Severity::Critical, Severity::High, Severity::Medium, Severity::Low, Severity::Unknown];
        let mut batch = Batch::new("corpus");
        batch.components = comps.clone();
        for (c, s, rule, loc) in &raw {
            batch.findings.push(Finding {
                rule_id: format!("R{rule}"),
                vector: AttackVector::V3,
                severity: sevs[*s],
                component: comps[*c].clone(),
                location: format!("L{loc}"),
                evidence: String::new(),
                remediation: String::new(),
            });
        }
        let distinct: BTreeSet<_> = raw.iter().map(|(c, _, r, l)| (c, r, l)).collect();
        let report = aggregate("corpus", vec![batch], &[0, 1, 2]).unwrap();
        let h = &report.severity_histogram;
        let total = h.critical + h.high + h.medium + h.low + h.unknown;
        prop_assert_eq!(total as usize, distinct.len());
        prop_assert_eq!(report.findings().count(), distinct.len());
        prop_assert_eq!(from_json(&to_json(&report)).unwrap(), report);
    }
}

const NAMES: [&str; 5] = ["left-pad", "lodash", "requests", "yaml", "zlib"];

fn rand_version(rng: &mut StdRng) -> String {
    use rand::Rng;
    format!("{}.{}.{}", rng.gen_range(0..3), rng.gen_range(0..3), rng.gen_range(0..3))
}

fn random_advisory(rng: &mut StdRng, i: usize) -> Advisory {
    use rand::Rng;
    let mut lo = rand_version(rng);
    let mut hi = rand_version(rng);
    if semver::Version::parse(&lo).unwrap() > semver::Version::parse(&hi).unwrap() {
        std::mem::swap(&mut lo, &mut hi);
    }
    Advisory {
        id: format!("ADV-{i}"),
        ecosystem: if rng.gen_bool(0.5) { Ecosystem::Npm } else { Ecosystem::Pypi },
        package_name: NAMES[rng.gen_range(0..NAMES.len())].into(),
        affected_ranges: vec![VersionInterval {
            lower: Some(Bound { version: lo, inclusive: true }),
            upper: Some(Bound { version: hi, inclusive: rng.gen_bool(0.5) }),
        }],
        cvss_score: rng.gen_bool(0.9).then(|| rng.gen_range(0..=100) as f64 / 10.0),
        summary: String::new(),
    }
}

fn random_instance(rng: &mut StdRng) -> (PackageInventory, Vec<Advisory>) {
    use rand::Rng;
    let mut inv = PackageInventory::default();
    for _ in 0..rng.gen_range(0..=20) {
        let eco = if rng.gen_bool(0.5) { Ecosystem::Npm } else { Ecosystem::Pypi };
        inv.add(NAMES[rng.gen_range(0..NAMES.len())], &rand_version(rng), eco, "manifest");
    }
    let db = (0..rng.gen_range(0..=50)).map(|i| random_advisory(rng, i)).collect();
    (inv, db)
}

#[test]
fn sam_templates_parse_as_cloudformation() {
    for (path, text) in fixture_files() {
        let file = label(&path);
        let lint = lint_template(&file, &text, &RuleCatalog::default()).unwrap();
        if lint.framework == IaCFramework::Sam {
            assert!(parse_template(&file, &text, IaCFramework::CloudFormation).is_ok(), "{file}");
        }
        let lines = text.lines().count();
        for f in &lint.findings {
            assert!(1 <= f.span.start_line && f.span.start_line <= f.span.end_line, "{file}: {}", f.span);
            assert!(f.span.end_line <= lines, "{file}: {} beyond {lines} lines", f.span);
        }
        let again = lint_template(&file, &text, &RuleCatalog::default()).unwrap();
        assert_eq!(again.findings, lint.findings, "{file}: lint is not idempotent");
    }
}

#[test]
fn depth_zero_never_reports_nested_paths() {
    let limits = ExtractLimits::default();
    let inner: BTreeMap<String, Vec<u8>> = [("readme.txt".to_string(), b"hi".to_vec())].into();
    let sigs = builtin_signatures();
    for format in ArchiveFormat::ALL {
        let nested = inject_and_pack(&inner, "eicar.com", EICAR, format, "").unwrap();
        let outer: BTreeMap<String, Vec<u8>> = [
            ("notes.txt".to_string(), b"plain".to_vec()),
            (format!("inner.{}", format.extension()), nested),
        ]
        .into();
        let entries = extract_bytes(&pack(&outer, ArchiveFormat::Zip).unwrap(), ArchiveFormat::Zip, &limits)
            .unwrap()
            .entries;
        let shallow = scan_entries(&entries, &sigs, 0, &limits);
        assert!(shallow.matches.iter().all(|m| !m.path.contains('!')), "{format}: {:?}", shallow.matches);
        let deep = scan_entries(&entries, &sigs, 1, &limits);
        assert!(deep.matches.iter().any(|m| m.path.contains('!')), "{format}: payload missed at depth 1");
    }
}

/// A tar holding a single `../` member, built from a normal tar by
/// rewriting the header name and checksum.
fn traversal_tar() -> Vec<u8> {
    let tree: BTreeMap<String, Vec<u8>> = [("aa/evil.sh".to_string(), b"rm -rf ~\n".to_vec())].into();
    let mut raw = pack(&tree, ArchiveFormat::Tar).unwrap();
    raw[..10].copy_from_slice(b"../evil.sh");
    raw[148..156].copy_from_slice(b"        ");
    let sum: u32 = raw[..512].iter().map(|b| *b as u32).sum();
    raw[148..156].copy_from_slice(format!("{sum:06o}\0 ").as_bytes());
    raw
}

fn wrap(format: ArchiveFormat, tar: &[u8]) -> Vec<u8> {
    let name = "../evil.sh";
    match format {
        ArchiveFormat::Tar => tar.to_vec(),
        ArchiveFormat::TarGz => {
            let mut e = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
            e.write_all(tar).unwrap();
            e.finish().unwrap()
        }
        ArchiveFormat::TarBz2 => {
            let mut e = bzip2::write::BzEncoder::new(Vec::new(), bzip2::Compression::default());
            e.write_all(tar).unwrap();
            e.finish().unwrap()
        }
        ArchiveFormat::TarXz => {
            let mut e = xz2::write::XzEncoder::new(Vec::new(), 6);
            e.write_all(tar).unwrap();
            e.finish().unwrap()
        }
        ArchiveFormat::TarLzma => {
            let opts = xz2::stream::LzmaOptions::new_preset(6).unwrap();
            let stream = xz2::stream::Stream::new_lzma_encoder(&opts).unwrap();
            let mut e = xz2::write::XzEncoder::new_stream(Vec::new(), stream);
            e.write_all(tar).unwrap();
            e.finish().unwrap()
        }
        ArchiveFormat::TarZst => zstd::stream::encode_all(tar, 3).unwrap(),
        ArchiveFormat::Zip => {
            let mut w = zip::ZipWriter::new(std::io::Cursor::new(Vec::new()));
            w.start_file(name, zip::write::SimpleFileOptions::default()).unwrap();
            w.write_all(b"rm -rf ~\n").unwrap();
            w.finish().unwrap().into_inner()
        }
        ArchiveFormat::SevenZ => {
            let mut w = sevenz_rust::SevenZWriter::new(std::io::Cursor::new(Vec::new())).unwrap();
            let mut entry = sevenz_rust::SevenZArchiveEntry::new();
            entry.name = name.into();
            w.push_archive_entry(entry, Some(&b"rm -rf ~\n"[..])).unwrap();
            w.finish().unwrap().into_inner()
        }
    }
}

#[test]
fn traversal_rejected_in_every_format() {
    let tar = traversal_tar();
    for format in ArchiveFormat::ALL {
        let bytes = wrap(format, &tar);
        match extract_bytes(&bytes, format, &ExtractLimits::default()) {
            Err(ArchiveError::PathTraversal { .. }) => {}
            other => panic!("{format}: expected traversal rejection, got {other:?}"),
        }
    }
}
