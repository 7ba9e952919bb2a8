use std::cell::Cell;
use std::fs::File;
use std::io::{self, BufReader, Read, Seek};
use std::path::Path;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::{ArchiveError, ArchiveFormat, ExtractLimits};

/// One regular file taken out of an archive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub path: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub entries: Vec<ArchiveEntry>,
    pub notices: Vec<String>,
}

/// Streaming decompressor for the tar-wrapping formats.
pub(crate) fn decoder<'a, R: Read + 'a>(
    format: ArchiveFormat,
    r: R,
) -> io::Result<Box<dyn Read + 'a>> {
    Ok(match format {
        ArchiveFormat::Tar => Box::new(r),
        ArchiveFormat::TarGz => Box::new(flate2::read::MultiGzDecoder::new(r)),
        ArchiveFormat::TarBz2 => Box::new(bzip2::read::MultiBzDecoder::new(r)),
        ArchiveFormat::TarXz => Box::new(xz2::read::XzDecoder::new_multi_decoder(r)),
        ArchiveFormat::TarLzma => {
            let stream = xz2::stream::Stream::new_lzma_decoder(u64::MAX).map_err(io::Error::other)?;
            Box::new(xz2::read::XzDecoder::new_stream(r, stream))
        }
        ArchiveFormat::TarZst => Box::new(zstd::stream::read::Decoder::new(r)?),
        ArchiveFormat::SevenZ | ArchiveFormat::Zip => {
            return Err(io::Error::other(format!("{format} is not a tar wrapper")))
        }
    })
}

/// Normalizes an entry name, rejecting anything that would resolve outside
/// the extraction root.
pub(crate) fn safe_entry_name(raw: &str) -> Result<String, ArchiveError> {
    let unified = raw.replace('\\', "/");
    let reject = || ArchiveError::PathTraversal {
        entry: raw.to_string(),
    };
    if unified.starts_with('/') || unified.as_bytes().get(1) == Some(&b':') {
        return Err(reject());
    }
    let mut parts = Vec::new();
    for part in unified.split('/') {
        match part {
            "" | "." => {}
            ".." => return Err(reject()),
            p => parts.push(p),
        }
    }
    Ok(parts.join("/"))
}

struct Budget {
    remaining: u64,
    limit: u64,
    compressed: u64,
}

impl Budget {
    fn new(limits: &ExtractLimits, compressed: u64) -> Self {
        let limit = limits.budget_for(compressed);
        Budget {
            remaining: limit,
            limit,
            compressed,
        }
    }

    fn read(
        &mut self,
        r: &mut dyn Read,
        on_io: &dyn Fn(io::Error) -> ArchiveError,
    ) -> Result<Vec<u8>, ArchiveError> {
        let mut buf = Vec::new();
        r.take(self.remaining + 1)
            .read_to_end(&mut buf)
            .map_err(on_io)?;
        if buf.len() as u64 > self.remaining {
            return Err(ArchiveError::Bomb {
                limit: self.limit,
                compressed: self.compressed,
            });
        }
        self.remaining -= buf.len() as u64;
        Ok(buf)
    }
}

struct Counting<R> {
    inner: R,
    count: Rc<Cell<u64>>,
}

impl<R: Read> Read for Counting<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.count.set(self.count.get() + n as u64);
        Ok(n)
    }
}

/// Extracts every regular file of the archive at `path`.
pub fn extract(
    path: &Path,
    format: ArchiveFormat,
    limits: &ExtractLimits,
) -> Result<Extraction, ArchiveError> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    match format {
        ArchiveFormat::Zip => extract_zip(file, len, limits),
        ArchiveFormat::SevenZ => extract_7z(file, len, limits),
        _ => extract_tar(BufReader::new(file), format, len, limits),
    }
}

pub fn extract_bytes(
    bytes: &[u8],
    format: ArchiveFormat,
    limits: &ExtractLimits,
) -> Result<Extraction, ArchiveError> {
    let len = bytes.len() as u64;
    match format {
        ArchiveFormat::Zip => extract_zip(io::Cursor::new(bytes), len, limits),
        ArchiveFormat::SevenZ => extract_7z(io::Cursor::new(bytes), len, limits),
        _ => extract_tar(bytes, format, len, limits),
    }
}

fn extract_tar<R: Read>(
    src: R,
    format: ArchiveFormat,
    compressed: u64,
    limits: &ExtractLimits,
) -> Result<Extraction, ArchiveError> {
    let count = Rc::new(Cell::new(0u64));
    let counting = Counting {
        inner: src,
        count: Rc::clone(&count),
    };
    let corrupt = |e: io::Error| ArchiveError::Corrupt {
        format,
        offset: count.get(),
        message: e.to_string(),
    };
    let mut archive = tar::Archive::new(decoder(format, counting).map_err(corrupt)?);
    let mut budget = Budget::new(limits, compressed);
    let mut out = Extraction::default();
    for entry in archive.entries().map_err(corrupt)? {
        let mut entry = entry.map_err(corrupt)?;
        let raw = String::from_utf8_lossy(&entry.path_bytes()).into_owned();
        let name = safe_entry_name(&raw)?;
        match entry.header().entry_type() {
            tar::EntryType::Regular | tar::EntryType::Continuous => {
                let bytes = budget.read(&mut entry, &corrupt)?;
                out.entries.push(ArchiveEntry { path: name, bytes });
            }
            tar::EntryType::Directory => {}
            other => out
                .notices
                .push(format!("{raw}: {other:?} entry not extracted")),
        }
    }
    Ok(out)
}

fn zip_error(e: zip::result::ZipError, offset: u64, entry: &str) -> ArchiveError {
    match e {
        zip::result::ZipError::UnsupportedArchive(msg)
            if msg == zip::result::ZipError::PASSWORD_REQUIRED =>
        {
            ArchiveError::Encrypted {
                entry: entry.to_string(),
            }
        }
        zip::result::ZipError::Io(io) => ArchiveError::Corrupt {
            format: ArchiveFormat::Zip,
            offset,
            message: io.to_string(),
        },
        other => ArchiveError::Corrupt {
            format: ArchiveFormat::Zip,
            offset,
            message: other.to_string(),
        },
    }
}

fn extract_zip<R: Read + Seek>(
    src: R,
    len: u64,
    limits: &ExtractLimits,
) -> Result<Extraction, ArchiveError> {
    let mut zip = zip::ZipArchive::new(src).map_err(|e| zip_error(e, len, "<central directory>"))?;
    let mut budget = Budget::new(limits, len);
    let mut out = Extraction::default();
    for i in 0..zip.len() {
        let (raw, encrypted, is_dir, is_symlink, offset) = {
            let f = zip.by_index_raw(i).map_err(|e| zip_error(e, 0, "<index>"))?;
            (
                f.name().to_string(),
                f.encrypted(),
                f.is_dir(),
                f.is_symlink(),
                f.header_start(),
            )
        };
        let name = safe_entry_name(&raw)?;
        if is_dir {
            continue;
        }
        if encrypted {
            return Err(ArchiveError::Encrypted { entry: raw });
        }
        if is_symlink {
            out.notices.push(format!("{raw}: symlink entry not extracted"));
            continue;
        }
        let mut f = zip.by_index(i).map_err(|e| zip_error(e, offset, &raw))?;
        let on_io = |e: io::Error| ArchiveError::Corrupt {
            format: ArchiveFormat::Zip,
            offset,
            message: format!("{raw}: {e}"),
        };
        let bytes = budget.read(&mut f, &on_io)?;
        out.entries.push(ArchiveEntry { path: name, bytes });
    }
    Ok(out)
}

fn sevenz_error(e: sevenz_rust::Error) -> ArchiveError {
    match e {
        sevenz_rust::Error::PasswordRequired | sevenz_rust::Error::MaybeBadPassword(_) => {
            ArchiveError::Encrypted {
                entry: "<7z stream>".into(),
            }
        }
        other => ArchiveError::Corrupt {
            format: ArchiveFormat::SevenZ,
            offset: 0,
            message: other.to_string(),
        },
    }
}

fn extract_7z<R: Read + Seek>(
    src: R,
    len: u64,
    limits: &ExtractLimits,
) -> Result<Extraction, ArchiveError> {
    let mut reader =
        sevenz_rust::SevenZReader::new(src, len, sevenz_rust::Password::empty()).map_err(sevenz_error)?;
    for f in &reader.archive().files {
        safe_entry_name(&f.name)?;
    }
    let mut budget = Budget::new(limits, len);
    let mut out = Extraction::default();
    let mut failure = None;
    reader
        .for_each_entries(|entry, data| {
            if entry.is_directory() {
                return Ok(true);
            }
            let name = entry.name().to_string();
            let on_io = |e: io::Error| ArchiveError::Corrupt {
                format: ArchiveFormat::SevenZ,
                offset: 0,
                message: format!("{name}: {e}"),
            };
            match budget.read(data, &on_io) {
                Ok(bytes) => {
                    // names were validated above
                    let path = safe_entry_name(&name).unwrap_or(name);
                    out.entries.push(ArchiveEntry { path, bytes });
                    Ok(true)
                }
                Err(e) => {
                    failure = Some(e);
                    Ok(false)
                }
            }
        })
        .map_err(sevenz_error)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::pack;
    use std::collections::BTreeMap;

    fn tree() -> BTreeMap<String, Vec<u8>> {
        [
            ("a.txt", &b"alpha"[..]),
            ("dir/b.txt", b"bravo bravo"),
            ("dir/sub/c.bin", &[0u8, 1, 2, 255]),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_vec()))
        .collect()
    }

    #[test]
    fn round_trip_all_formats() {
        for fmt in ArchiveFormat::ALL {
            let bytes = pack(&tree(), fmt).unwrap();
            let ex = extract_bytes(&bytes, fmt, &ExtractLimits::default()).unwrap();
            let got: BTreeMap<_, _> = ex.entries.into_iter().map(|e| (e.path, e.bytes)).collect();
            assert_eq!(got, tree(), "{fmt}");
        }
    }

    #[test]
    fn empty_file_round_trips() {
        let mut t = tree();
        t.insert("empty".into(), Vec::new());
        for fmt in ArchiveFormat::ALL {
            let bytes = pack(&t, fmt).unwrap();
            let ex = extract_bytes(&bytes, fmt, &ExtractLimits::default()).unwrap();
            assert_eq!(ex.entries.len(), 4, "{fmt}");
        }
    }

    #[test]
    fn entry_names_are_checked() {
        assert_eq!(safe_entry_name("./a/./b").unwrap(), "a/b");
        for bad in ["../x", "a/../../x", "/etc/passwd", "C:\\win", "a\\..\\..\\b"] {
            assert!(matches!(safe_entry_name(bad), Err(ArchiveError::PathTraversal { .. })), "{bad}");
        }
    }

    /// Hand-built ustar header, since `tar::Builder` refuses `..` names.
    pub(crate) fn raw_tar_with_name(name: &str, data: &[u8]) -> Vec<u8> {
        let mut h = [0u8; 512];
        h[..name.len()].copy_from_slice(name.as_bytes());
        h[100..108].copy_from_slice(b"0000644\0");
        h[108..116].copy_from_slice(b"0000000\0");
        h[116..124].copy_from_slice(b"0000000\0");
        h[124..136].copy_from_slice(format!("{:011o}\0", data.len()).as_bytes());
        h[136..148].copy_from_slice(b"00000000000\0");
        h[156] = b'0';
        h[257..263].copy_from_slice(b"ustar\0");
        h[263..265].copy_from_slice(b"00");
        h[148..156].copy_from_slice(b"        ");
        let sum: u32 = h.iter().map(|b| *b as u32).sum();
        h[148..156].copy_from_slice(format!("{sum:06o}\0 ").as_bytes());
        let mut out = h.to_vec();
        out.extend_from_slice(data);
        out.resize(out.len().div_ceil(512) * 512 + 1024, 0);
        out
    }

    #[test]
    fn tar_traversal_is_rejected() {
        let tar = raw_tar_with_name("../../etc/passwd", b"root:x:0:0\n");
        assert!(super::super::looks_like_tar(&tar));
        let err = extract_bytes(&tar, ArchiveFormat::Tar, &ExtractLimits::default()).unwrap_err();
        assert!(matches!(err, ArchiveError::PathTraversal { .. }), "{err}");
    }

    #[test]
    fn zip_traversal_is_rejected() {
        use std::io::Write;
        let mut w = zip::ZipWriter::new(io::Cursor::new(Vec::new()));
        w.start_file("../evil.sh", zip::write::SimpleFileOptions::default())
            .unwrap();
        w.write_all(b"x").unwrap();
        let bytes = w.finish().unwrap().into_inner();
        let err = extract_bytes(&bytes, ArchiveFormat::Zip, &ExtractLimits::default()).unwrap_err();
        assert!(matches!(err, ArchiveError::PathTraversal { .. }));
    }

    pub(crate) fn zip_bomb(mib: usize) -> Vec<u8> {
        use std::io::Write;
        let opts = zip::write::SimpleFileOptions::default()
            .compression_method(zip::CompressionMethod::Zstd)
            .compression_level(Some(19));
        let mut w = zip::ZipWriter::new(io::Cursor::new(Vec::new()));
        w.start_file("zeros.bin", opts).unwrap();
        let chunk = vec![0u8; 1 << 20];
        for _ in 0..mib {
            w.write_all(&chunk).unwrap();
        }
        w.finish().unwrap().into_inner()
    }

    #[test]
    fn zip_bomb_is_rejected() {
        let bomb = zip_bomb(64);
        assert!(bomb.len() < 10 * 1024, "fixture is {} bytes", bomb.len());
        let err = extract_bytes(&bomb, ArchiveFormat::Zip, &ExtractLimits::default()).unwrap_err();
        assert!(matches!(err, ArchiveError::Bomb { .. }), "{err}");
    }

    #[test]
    fn absolute_cap_applies() {
        let limits = ExtractLimits {
            max_ratio: u64::MAX,
            max_output_bytes: 1000,
        };
        let mut t = BTreeMap::new();
        t.insert("big".to_string(), vec![7u8; 5000]);
        let bytes = pack(&t, ArchiveFormat::TarGz).unwrap();
        assert!(matches!(
            extract_bytes(&bytes, ArchiveFormat::TarGz, &limits),
            Err(ArchiveError::Bomb { .. })
        ));
    }

    #[test]
    fn truncated_archives_report_corruption() {
        for fmt in [ArchiveFormat::TarGz, ArchiveFormat::Zip, ArchiveFormat::TarXz, ArchiveFormat::SevenZ] {
            let bytes = pack(&tree(), fmt).unwrap();
            let cut = &bytes[..bytes.len() / 2];
            let err = extract_bytes(cut, fmt, &ExtractLimits::default()).unwrap_err();
            assert!(matches!(err, ArchiveError::Corrupt { .. }), "{fmt}: {err}");
        }
    }
}
