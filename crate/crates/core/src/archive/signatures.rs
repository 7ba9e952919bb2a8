//! Local signature engine. Deliberately simple: exact content, SHA-256 of
//! content, or byte substring.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{detect_format, extract_bytes, ArchiveEntry, ArchiveError, ExtractLimits};

/// The 68-byte antivirus test string.
pub const EICAR: &[u8] = br"X5O!P%@AP[4\PZX54(P^)7CC)7}$EICAR-STANDARD-ANTIVIRUS-TEST-FILE!$H+H*";

/// Built-in database. Entries with a null pattern are slots for the
/// operator to fill with sample hashes; they are skipped until filled.
pub const BUILTIN_SIGNATURE_DB: &str = r#"{"id":"eicar","kind":"substring","pattern":"X5O!P%@AP[4\\PZX54(P^)7CC)7}$EICAR-STANDARD-ANTIVIRUS-TEST-FILE!$H+H*","description":"EICAR antivirus test file"}
{"id":"python-rat","kind":"sha256","pattern":null,"description":"Python remote access trojan"}
{"id":"java-infector","kind":"sha256","pattern":null,"description":"Java class infector"}
{"id":"php-backdoor","kind":"sha256","pattern":null,"description":"PHP web backdoor"}
{"id":"python-backdoor","kind":"sha256","pattern":null,"description":"Python backdoor"}
{"id":"python-trojan","kind":"sha256","pattern":null,"description":"Python trojan"}
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignatureKind {
    ExactBytes,
    Sha256,
    Substring,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub id: String,
    pub kind: SignatureKind,
    /// Raw bytes; for `Sha256` the 32-byte digest.
    pub pattern: Vec<u8>,
    pub description: String,
}

impl Signature {
    pub fn new(id: &str, kind: SignatureKind, pattern: &[u8], description: &str) -> Result<Self, ArchiveError> {
        if pattern.is_empty() {
            return Err(ArchiveError::Invalid(format!("signature {id}: empty pattern")));
        }
        if kind == SignatureKind::Sha256 && pattern.len() != 32 {
            return Err(ArchiveError::Invalid(format!("signature {id}: sha256 digest must be 32 bytes")));
        }
        Ok(Signature {
            id: id.to_string(),
            kind,
            pattern: pattern.to_vec(),
            description: description.to_string(),
        })
    }

    fn matches(&self, data: &[u8], digest: &mut Option<[u8; 32]>) -> bool {
        match self.kind {
            SignatureKind::ExactBytes => data == self.pattern.as_slice(),
            SignatureKind::Substring => data
                .windows(self.pattern.len())
                .any(|w| w == self.pattern.as_slice()),
            SignatureKind::Sha256 => {
                let d = digest.get_or_insert_with(|| Sha256::digest(data).into());
                d.as_slice() == self.pattern.as_slice()
            }
        }
    }
}

#[derive(Deserialize)]
struct SignatureRecord {
    id: String,
    kind: SignatureKind,
    pattern: Option<String>,
    #[serde(default)]
    description: String,
}

/// Parses a JSON-lines signature database.
///
/// `pattern` is text for `exact-bytes`/`substring` (prefix `hex:` for
/// binary) and a hex digest for `sha256`. Returns the usable signatures
/// and notices for unfilled slots.
pub fn parse_signature_db(text: &str) -> Result<(Vec<Signature>, Vec<String>), ArchiveError> {
    let mut sigs = Vec::new();
    let mut notices = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |m: String| ArchiveError::Invalid(format!("signature db line {}: {m}", i + 1));
        let rec: SignatureRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let Some(pattern) = rec.pattern else {
            notices.push(format!("signature {} has no pattern yet; skipped", rec.id));
            continue;
        };
        let bytes = match rec.kind {
            SignatureKind::Sha256 => hex::decode(pattern.trim()).map_err(|e| bad(e.to_string()))?,
            _ => match pattern.strip_prefix("hex:") {
                Some(h) => hex::decode(h).map_err(|e| bad(e.to_string()))?,
                None => pattern.into_bytes(),
            },
        };
        sigs.push(Signature::new(&rec.id, rec.kind, &bytes, &rec.description).map_err(|e| bad(e.to_string()))?);
    }
    Ok((sigs, notices))
}

pub fn load_signature_db(path: &Path) -> Result<(Vec<Signature>, Vec<String>), ArchiveError> {
    parse_signature_db(&std::fs::read_to_string(path)?)
}

pub fn builtin_signatures() -> Vec<Signature> {
    parse_signature_db(BUILTIN_SIGNATURE_DB)
        .expect("builtin signature db parses")
        .0
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignatureMatch {
    pub signature_id: String,
    /// Entry path; nested archive members are joined with `!`.
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanOutcome {
    pub matches: Vec<SignatureMatch>,
    pub notices: Vec<String>,
}

/// Checks each entry against every signature, descending into entries that
/// are themselves archives while `depth > 0`.
pub fn scan_entries(
    entries: &[ArchiveEntry],
    signatures: &[Signature],
    depth: u32,
    limits: &ExtractLimits,
) -> ScanOutcome {
    let mut out = ScanOutcome::default();
    scan_into(entries, signatures, depth, limits, "", &mut out);
    out.matches.sort();
    out.matches.dedup();
    out
}

fn scan_into(
    entries: &[ArchiveEntry],
    signatures: &[Signature],
    depth: u32,
    limits: &ExtractLimits,
    prefix: &str,
    out: &mut ScanOutcome,
) {
    for entry in entries {
        let path = format!("{prefix}{}", entry.path);
        let mut digest = None;
        for sig in signatures {
            if sig.matches(&entry.bytes, &mut digest) {
                out.matches.push(SignatureMatch {
                    signature_id: sig.id.clone(),
                    path: path.clone(),
                });
            }
        }
        if depth == 0 {
            continue;
        }
        let lead = &entry.bytes[..entry.bytes.len().min(64 * 1024)];
        let Ok(format) = detect_format(&entry.path, lead) else {
            continue;
        };
        match extract_bytes(&entry.bytes, format, limits) {
            Ok(inner) => {
                out.notices
                    .extend(inner.notices.into_iter().map(|n| format!("{path}: {n}")));
                scan_into(&inner.entries, signatures, depth - 1, limits, &format!("{path}!"), out);
            }
            Err(e @ ArchiveError::Encrypted { .. }) => {
                out.notices.push(format!("{path}: encrypted, contents not inspected ({e})"))
            }
            Err(e) => out.notices.push(format!("{path}: {e}")),
        }
    }
}

/// A named signature set standing in for one scanning engine.
#[derive(Debug, Clone)]
pub struct Engine {
    pub id: String,
    pub signatures: Vec<Signature>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineVerdict {
    pub engine_id: String,
    pub flagged: bool,
    pub matched_signatures: Vec<String>,
}

impl EngineVerdict {
    pub fn new(engine_id: &str, matched: impl IntoIterator<Item = String>) -> Self {
        let matched_signatures: Vec<String> = matched.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        EngineVerdict {
            engine_id: engine_id.to_string(),
            flagged: !matched_signatures.is_empty(),
            matched_signatures,
        }
    }
}

impl Engine {
    pub fn verdict(&self, entries: &[ArchiveEntry], depth: u32, limits: &ExtractLimits) -> EngineVerdict {
        let outcome = scan_entries(entries, &self.signatures, depth, limits);
        EngineVerdict::new(&self.id, outcome.matches.into_iter().map(|m| m.signature_id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consensus {
    pub malicious: bool,
    pub engines_flagging: usize,
}

pub fn consensus_flag(verdicts: &[EngineVerdict], threshold: usize) -> Result<Consensus, ArchiveError> {
    if threshold == 0 {
        return Err(ArchiveError::Invalid("consensus threshold must be at least 1".into()));
    }
    let engines_flagging = verdicts.iter().filter(|v| v.flagged).count();
    Ok(Consensus {
        malicious: engines_flagging >= threshold,
        engines_flagging,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{inject_and_pack, pack, ArchiveFormat};
    use std::collections::BTreeMap;

    fn entry(path: &str, bytes: &[u8]) -> ArchiveEntry {
        ArchiveEntry {
            path: path.into(),
            bytes: bytes.to_vec(),
        }
    }

    #[test]
    fn eicar_is_68_bytes_and_builtin() {
        assert_eq!(EICAR.len(), 68);
        let sigs = builtin_signatures();
        assert_eq!(sigs.len(), 1);
        assert_eq!(sigs[0].pattern, EICAR);
        let (_, notices) = parse_signature_db(BUILTIN_SIGNATURE_DB).unwrap();
        assert_eq!(notices.len(), 6 - 1);
    }

    #[test]
    fn eicar_entry_matches() {
        let mut data = EICAR.to_vec();
        data.extend_from_slice(b"\r\n");
        let out = scan_entries(&[entry("eicar.txt", &data)], &builtin_signatures(), 0, &ExtractLimits::default());
        assert_eq!(out.matches.len(), 1);
        assert_eq!(out.matches[0].signature_id, "eicar");
    }

    #[test]
    fn benign_entries_do_not_match() {
        let out = scan_entries(
            &[entry("a.txt", b"hello"), entry("b.py", b"import os\n")],
            &builtin_signatures(),
            3,
            &ExtractLimits::default(),
        );
        assert!(out.matches.is_empty());
    }

    #[test]
    fn sha256_and_exact_kinds() {
        let digest = Sha256::digest(b"payload");
        let sigs = vec![
            Signature::new("h", SignatureKind::Sha256, &digest, "").unwrap(),
            Signature::new("e", SignatureKind::ExactBytes, b"payload", "").unwrap(),
        ];
        let out = scan_entries(&[entry("p", b"payload"), entry("q", b"payload!")], &sigs, 0, &ExtractLimits::default());
        let ids: Vec<_> = out.matches.iter().map(|m| (m.signature_id.as_str(), m.path.as_str())).collect();
        assert_eq!(ids, vec![("e", "p"), ("h", "p")]);
        assert!(Signature::new("x", SignatureKind::Substring, b"", "").is_err());
    }

    #[test]
    fn nested_paths_need_depth() {
        let mut inner = BTreeMap::new();
        // padded so deflate does not fall back to a stored block
        let mut payload = EICAR.to_vec();
        payload.extend(std::iter::repeat_n(b' ', 4096));
        inner.insert("inner/payload.py".to_string(), payload);
        let zip = pack(&inner, ArchiveFormat::Zip).unwrap();
        let mut outer = BTreeMap::new();
        outer.insert("readme".to_string(), b"x".to_vec());
        let tar = inject_and_pack(&outer, "outer.zip", &zip, ArchiveFormat::Tar, "").unwrap();
        let tar_entry = [entry("bundle.tar", &tar)];

        let sigs = builtin_signatures();
        let limits = ExtractLimits::default();
        let deep = scan_entries(&tar_entry, &sigs, 2, &limits);
        assert_eq!(deep.matches.len(), 1);
        assert_eq!(deep.matches[0].path, "bundle.tar!outer.zip!inner/payload.py");
        assert!(scan_entries(&tar_entry, &sigs, 1, &limits).matches.is_empty());
        let flat = scan_entries(&tar_entry, &sigs, 0, &limits);
        assert!(flat.matches.iter().all(|m| !m.path.contains('!')));
    }

    #[test]
    fn consensus_threshold() {
        let verdicts = |k: usize| -> Vec<EngineVerdict> {
            (0..20)
                .map(|i| EngineVerdict::new(&format!("e{i}"), (i < k).then(|| "eicar".to_string())))
                .collect()
        };
        assert!(!consensus_flag(&verdicts(4), 5).unwrap().malicious);
        assert!(consensus_flag(&verdicts(5), 5).unwrap().malicious);
        assert!(!consensus_flag(&[], 1).unwrap().malicious);
        assert!(consensus_flag(&[], 0).is_err());
    }

    #[test]
    fn signature_db_errors_name_the_line() {
        let err = parse_signature_db("\n{\"id\":\"x\",\"kind\":\"sha256\",\"pattern\":\"zz\"}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
