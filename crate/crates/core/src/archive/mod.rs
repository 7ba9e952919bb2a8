//! Compressed component handling (V2): format detection, hardened
//! extraction, signature scanning and the payload injection harness.

mod extract;
mod pack;
mod signatures;

use std::fmt;
use std::io::{self, Read};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use extract::{extract, extract_bytes, ArchiveEntry, Extraction};
pub use pack::{inject_and_pack, pack, read_tree};
pub use signatures::{
    builtin_signatures, consensus_flag, load_signature_db, parse_signature_db, scan_entries,
    Consensus, Engine, EngineVerdict, ScanOutcome, Signature, SignatureKind, SignatureMatch,
    EICAR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArchiveFormat {
    #[serde(rename = "7z")]
    SevenZ,
    #[serde(rename = "tar")]
    Tar,
    #[serde(rename = "tar.bz2")]
    TarBz2,
    #[serde(rename = "tar.gz")]
    TarGz,
    #[serde(rename = "tar.lzma")]
    TarLzma,
    #[serde(rename = "tar.xz")]
    TarXz,
    #[serde(rename = "tar.zst")]
    TarZst,
    #[serde(rename = "zip")]
    Zip,
}

impl ArchiveFormat {
    pub const ALL: [ArchiveFormat; 8] = [
        ArchiveFormat::SevenZ,
        ArchiveFormat::Tar,
        ArchiveFormat::TarBz2,
        ArchiveFormat::TarGz,
        ArchiveFormat::TarLzma,
        ArchiveFormat::TarXz,
        ArchiveFormat::TarZst,
        ArchiveFormat::Zip,
    ];

    /// Canonical file extension, without the leading dot.
    pub fn extension(self) -> &'static str {
        match self {
            ArchiveFormat::SevenZ => "7z",
            ArchiveFormat::Tar => "tar",
            ArchiveFormat::TarBz2 => "tar.bz2",
            ArchiveFormat::TarGz => "tar.gz",
            ArchiveFormat::TarLzma => "tar.lzma",
            ArchiveFormat::TarXz => "tar.xz",
            ArchiveFormat::TarZst => "tar.zst",
            ArchiveFormat::Zip => "zip",
        }
    }

    pub fn is_tar(self) -> bool {
        !matches!(self, ArchiveFormat::SevenZ | ArchiveFormat::Zip)
    }

    fn from_filename(name: &str) -> Option<Self> {
        let lower = name.to_ascii_lowercase();
        let ends = |s: &str| lower.ends_with(s);
        Some(if ends(".7z") {
            ArchiveFormat::SevenZ
        } else if ends(".zip") || ends(".jar") || ends(".whl") {
            ArchiveFormat::Zip
        } else if ends(".tar.gz") || ends(".tgz") {
            ArchiveFormat::TarGz
        } else if ends(".tar.bz2") || ends(".tbz2") || ends(".tbz") {
            ArchiveFormat::TarBz2
        } else if ends(".tar.xz") || ends(".txz") {
            ArchiveFormat::TarXz
        } else if ends(".tar.lzma") || ends(".tlz") {
            ArchiveFormat::TarLzma
        } else if ends(".tar.zst") || ends(".tzst") {
            ArchiveFormat::TarZst
        } else if ends(".tar") {
            ArchiveFormat::Tar
        } else {
            return None;
        })
    }
}

impl fmt::Display for ArchiveFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for ArchiveFormat {
    type Err = ArchiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().trim_start_matches('.').to_ascii_lowercase().replace('_', ".");
        let f = match norm.as_str() {
            "7z" | "sevenz" => ArchiveFormat::SevenZ,
            "tgz" => ArchiveFormat::TarGz,
            "txz" => ArchiveFormat::TarXz,
            "tzst" => ArchiveFormat::TarZst,
            other => match ArchiveFormat::ALL.iter().find(|f| f.extension() == other) {
                Some(f) => *f,
                None => return Err(ArchiveError::UnsupportedFormat(s.to_string())),
            },
        };
        Ok(f)
    }
}

fn supported_list() -> String {
    ArchiveFormat::ALL
        .iter()
        .map(|f| f.extension())
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("unsupported archive format `{0}` (supported: {list})", list = supported_list())]
    UnsupportedFormat(String),
    #[error("corrupt {format} archive at byte offset {offset}: {message}")]
    Corrupt {
        format: ArchiveFormat,
        offset: u64,
        message: String,
    },
    #[error("path traversal in archive entry `{entry}`")]
    PathTraversal { entry: String },
    #[error("decompression bomb: output exceeded {limit} bytes from {compressed} compressed bytes")]
    Bomb { limit: u64, compressed: u64 },
    #[error("encrypted archive entry `{entry}` cannot be inspected")]
    Encrypted { entry: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ArchiveError {
    pub fn is_security(&self) -> bool {
        matches!(self, ArchiveError::PathTraversal { .. } | ArchiveError::Bomb { .. })
    }
}

/// Expansion caps applied while extracting one archive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractLimits {
    pub max_ratio: u64,
    pub max_output_bytes: u64,
}

impl Default for ExtractLimits {
    fn default() -> Self {
        ExtractLimits {
            max_ratio: 1000,
            max_output_bytes: 1 << 30,
        }
    }
}

impl ExtractLimits {
    pub fn budget_for(&self, compressed_len: u64) -> u64 {
        self.max_output_bytes
            .min(self.max_ratio.saturating_mul(compressed_len.max(1)))
    }
}

const SEVENZ_MAGIC: [u8; 6] = [b'7', b'z', 0xBC, 0xAF, 0x27, 0x1C];
const XZ_MAGIC: [u8; 6] = [0xFD, b'7', b'z', b'X', b'Z', 0x00];
const ZSTD_MAGIC: [u8; 4] = [0x28, 0xB5, 0x2F, 0xFD];

/// A 512-byte block is a tar header if its checksum field agrees with its
/// contents (ustar magic alone is not required; v7 tars lack it).
pub(crate) fn looks_like_tar(block: &[u8]) -> bool {
    if block.len() < 512 {
        return false;
    }
    if &block[257..262] == b"ustar" {
        return true;
    }
    let field = &block[148..156];
    let digits: String = field
        .iter()
        .take_while(|b| **b != 0)
        .map(|b| *b as char)
        .collect();
    let Ok(stored) = u32::from_str_radix(digits.trim(), 8) else {
        return false;
    };
    let sum: u32 = block[..512]
        .iter()
        .enumerate()
        .map(|(i, b)| if (148..156).contains(&i) { 32 } else { *b as u32 })
        .sum();
    block[0] != 0 && sum == stored
}

/// Decompresses as much of `prefix` as possible, up to one tar block.
fn inner_prefix(format: ArchiveFormat, prefix: &[u8]) -> Vec<u8> {
    let reader: Box<dyn Read + '_> = match extract::decoder(format, prefix) {
        Ok(r) => r,
        Err(_) => return Vec::new(),
    };
    let mut out = Vec::with_capacity(512);
    let mut limited = reader.take(512);
    let mut buf = [0u8; 512];
    loop {
        match limited.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => out.extend_from_slice(&buf[..n]),
        }
    }
    out
}

/// Identifies an archive from its name and leading bytes.
///
/// Magic bytes decide the outer container. For compressed streams the inner
/// tar header is confirmed by decompressing the prefix; when the prefix is
/// too short to confirm, a tar-style file extension is accepted instead.
pub fn detect_format(filename: &str, leading: &[u8]) -> Result<ArchiveFormat, ArchiveError> {
    let by_name = ArchiveFormat::from_filename(filename);
    if leading.starts_with(b"PK\x03\x04") || leading.starts_with(b"PK\x05\x06") {
        return Ok(ArchiveFormat::Zip);
    }
    if leading.starts_with(&SEVENZ_MAGIC) {
        return Ok(ArchiveFormat::SevenZ);
    }
    let wrapped = if leading.starts_with(&[0x1F, 0x8B]) {
        Some(ArchiveFormat::TarGz)
    } else if leading.starts_with(b"BZh") {
        Some(ArchiveFormat::TarBz2)
    } else if leading.starts_with(&XZ_MAGIC) {
        Some(ArchiveFormat::TarXz)
    } else if leading.starts_with(&ZSTD_MAGIC) {
        Some(ArchiveFormat::TarZst)
    } else if leading.starts_with(&[0x5D, 0x00, 0x00]) {
        Some(ArchiveFormat::TarLzma)
    } else {
        None
    };
    if let Some(fmt) = wrapped {
        let inner = inner_prefix(fmt, leading);
        if looks_like_tar(&inner) {
            return Ok(fmt);
        }
        if inner.len() < 512 && by_name == Some(fmt) {
            return Ok(fmt);
        }
        return Err(ArchiveError::UnsupportedFormat(format!(
            "{filename}: {fmt} compression without a tar stream inside"
        )));
    }
    if looks_like_tar(leading) {
        return Ok(ArchiveFormat::Tar);
    }
    Err(ArchiveError::UnsupportedFormat(filename.to_string()))
}
