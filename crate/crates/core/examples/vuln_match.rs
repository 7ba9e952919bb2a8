//! Dependency matching against the demo advisory database, the
//! false-positive split and a scanner comparison.

use std::collections::BTreeSet;
use std::path::Path;

use slsa_audit::ingest::load_corpus;
use slsa_audit::vulnscan::{
    compare_scans, filter_false_positives, import_external_scan_str, scan_tree, AdvisoryIndex, ExternalFormat,
    SourceRefConfig,
};

fn main() {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo");
    let (index, notices) = AdvisoryIndex::load(&demo.join("advisories")).expect("advisories load");
    notices.iter().for_each(|n| println!("notice: {n}"));
    println!("{} advisories\n", index.len());

    let mut all = Vec::new();
    for entry in load_corpus(&demo.join("corpus")).unwrap().entries {
        for sub in ["tree", "image"] {
            let dir = entry.root_path.join(sub);
            if !dir.is_dir() {
                continue;
            }
            let scan = scan_tree(&dir, &index, &SourceRefConfig::default());
            for m in &scan.matches {
                println!(
                    "{:<45} {:<16} {:<9} {}@{} ({:?})",
                    entry.component.to_string(),
                    m.advisory_id,
                    m.severity.to_string(),
                    m.package.name,
                    m.package.version,
                    m.fp_class
                );
            }
            all.extend(scan.matches);
        }
    }
    let split = filter_false_positives(all);
    println!(
        "\nkept {}  suspected false positives {}  fp rate {:.3}",
        split.kept.len(),
        split.suspected_fp.len(),
        split.fp_rate
    );

    let a = import_external_scan_str(
        "a",
        r#"{"Results":[{"ArtifactName":"web","VulnerabilityID":"CVE-1"},{"ArtifactName":"web","VulnerabilityID":"CVE-2"}]}"#,
        ExternalFormat::TrivyJson,
    )
    .unwrap();
    let b = import_external_scan_str(
        "b",
        r#"{"matches":[{"component":"web","id":"CVE-2"},{"component":"web","id":"CVE-3"},{"component":"db","id":"CVE-9"}]}"#,
        ExternalFormat::GrypeJson,
    )
    .unwrap();
    println!();
    for (component, j) in compare_scans(&a, &b) {
        let ids: BTreeSet<_> = a.get(&component).into_iter().flatten().collect();
        println!("jaccard {component:<4} {j:.3}  (first scanner: {ids:?})");
    }
}
