//! Classifies and lints the templates of the demo corpus, then prints the
//! severity histogram and rule frequencies.

use std::path::Path;

use slsa_audit::iaclint::{lint_dir, rule_frequencies, severity_histogram, RuleCatalog};
use slsa_audit::ingest::load_corpus;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo/corpus");
    let catalog = RuleCatalog::default();
    let mut findings = Vec::new();
    let mut templates = 0;
    for entry in load_corpus(&root).unwrap().entries {
        let dir = entry.iac_dir();
        if !dir.is_dir() {
            continue;
        }
        let out = lint_dir(&dir, &entry.component.name, &catalog).unwrap();
        for (label, framework) in &out.templates {
            println!("{label:<40} {framework}");
        }
        out.notices.iter().for_each(|n| println!("  notice: {n}"));
        templates += out.templates.len();
        findings.extend(out.findings);
    }
    println!();
    for f in &findings {
        println!("{:<34} {:<7} {}", f.rule_id, f.severity.to_string(), f.message);
    }
    let h = severity_histogram(&findings);
    println!("\n{:<15} crit high med low", "");
    for (fw, s) in h.by_framework.iter().map(|(f, s)| (f.to_string(), s)).chain([("all".into(), &h.total)]) {
        println!("{fw:<15} {:>4} {:>4} {:>3} {:>3}", s.critical, s.high, s.medium, s.low);
    }
    println!();
    for r in rule_frequencies(&findings, templates) {
        println!("{:<34} {:>2}  {:>5.1}% of findings  {:>5.1}% of templates", r.rule_id, r.count, r.pct_of_findings, r.pct_of_templates);
    }
}
