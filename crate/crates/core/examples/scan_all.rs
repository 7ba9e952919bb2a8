//! Every vector over the demo corpus, rendered in all three output formats.

use std::path::Path;

use slsa_audit::report::{emit, load_config, scan_corpus, vector_counts, OutputFormat};

fn main() {
    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("demo");
    let config = load_config(Some(&demo.join("config.json"))).unwrap();
    let scan = scan_corpus(&demo.join("corpus"), &config).unwrap();
    scan.notices.iter().for_each(|n| eprintln!("notice: {n}"));

    print!("{}", String::from_utf8(emit(&scan.report, OutputFormat::Table)).unwrap());
    println!();
    for (vector, n) in vector_counts(&scan.report) {
        println!("{vector:?}: {n} findings");
    }
    let json = emit(&scan.report, OutputFormat::Json);
    let sarif = emit(&scan.report, OutputFormat::SarifLike);
    println!("\njson report {} bytes, sarif-like {} bytes", json.len(), sarif.len());
}
