//! Loads the bundled demo corpus and applies the serverless filter.

use std::path::Path;

use slsa_audit::ingest::{is_serverless, load_corpus};

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo/corpus");
    let load = load_corpus(&root).expect("demo corpus exists");
    for e in &load.errors {
        println!("error: {e}");
    }
    for entry in &load.entries {
        let serverless = is_serverless(entry).unwrap_or(false);
        println!(
            "{:<55} {:<13} serverless={}",
            entry.component.to_string(),
            format!("{:?}", entry.artifact_kind),
            serverless
        );
    }
    println!("{} components", load.entries.len());
}
