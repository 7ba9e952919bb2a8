//! Packs a benign tree in every supported format, injects the EICAR test
//! file and checks that the local engine still finds it. Also shows the
//! multi-engine consensus rule and the extraction guards.

use std::collections::BTreeMap;

use slsa_audit::archive::{
    builtin_signatures, consensus_flag, extract_bytes, inject_and_pack, pack, ArchiveFormat, Engine, EngineVerdict,
    ExtractLimits, EICAR,
};

fn main() {
    let tree: BTreeMap<String, Vec<u8>> = [
        ("index.js", &b"exports.handler = async () => 'ok';\n"[..]),
        ("package.json", b"{\"name\":\"demo\"}\n"),
        ("lib/util.js", b"module.exports = {};\n"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_vec()))
    .collect();
    let limits = ExtractLimits::default();
    let engine = Engine {
        id: "local".into(),
        signatures: builtin_signatures(),
    };

    println!("{:<8} {:>6} {:>10} {:>8}", "format", "bytes", "roundtrip", "flagged");
    for format in ArchiveFormat::ALL {
        let benign = pack(&tree, format).unwrap();
        let back: BTreeMap<_, _> = extract_bytes(&benign, format, &limits)
            .unwrap()
            .entries
            .into_iter()
            .map(|e| (e.path, e.bytes))
            .collect();
        let infected = inject_and_pack(&tree, "eicar.com", EICAR, format, "node_modules/.cache").unwrap();
        let entries = extract_bytes(&infected, format, &limits).unwrap().entries;
        let verdict = engine.verdict(&entries, 3, &limits);
        println!("{:<8} {:>6} {:>10} {:>8}", format.to_string(), infected.len(), back == tree, verdict.flagged);
    }

    // consensus: five engines must agree
    let verdicts: Vec<EngineVerdict> = (0..8)
        .map(|i| EngineVerdict::new(&format!("engine-{i}"), (i < 4).then(|| "x".to_string())))
        .collect();
    println!("\n4 of 8 flag, threshold 5: {:?}", consensus_flag(&verdicts, 5).unwrap());

    let mut zip = zip::ZipWriter::new(std::io::Cursor::new(Vec::new()));
    zip.start_file("../escape.sh", zip::write::SimpleFileOptions::default()).unwrap();
    std::io::Write::write_all(&mut zip, b"echo pwned\n").unwrap();
    let evil = zip.finish().unwrap().into_inner();
    println!("traversal zip: {}", extract_bytes(&evil, ArchiveFormat::Zip, &limits).unwrap_err());

    let bomb = pack(&[("zeros".to_string(), vec![0u8; 4 << 20])].into(), ArchiveFormat::TarXz).unwrap();
    let tight = ExtractLimits {
        max_ratio: 100,
        ..limits
    };
    println!("bomb tar.xz: {}", extract_bytes(&bomb, ArchiveFormat::TarXz, &tight).unwrap_err());
}
