use std::collections::BTreeMap;
use std::io::{self, Cursor, Write};
use std::path::Path;

use walkdir::WalkDir;

use super::extract::safe_entry_name;
use super::{ArchiveError, ArchiveFormat};

fn tar_bytes(tree: &BTreeMap<String, Vec<u8>>) -> io::Result<Vec<u8>> {
    let mut builder = tar::Builder::new(Vec::new());
    builder.mode(tar::HeaderMode::Deterministic);
    for (path, data) in tree {
        let mut header = tar::Header::new_ustar();
        header.set_entry_type(tar::EntryType::Regular);
        header.set_size(data.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        header.set_uid(0);
        header.set_gid(0);
        builder.append_data(&mut header, path, data.as_slice())?;
    }
    builder.into_inner()
}

fn compress(format: ArchiveFormat, raw: &[u8]) -> io::Result<Vec<u8>> {
    Ok(match format {
        ArchiveFormat::Tar => raw.to_vec(),
        ArchiveFormat::TarGz => {
            let mut enc = flate2::GzBuilder::new()
                .mtime(0)
                .write(Vec::new(), flate2::Compression::default());
            enc.write_all(raw)?;
            enc.finish()?
        }
        ArchiveFormat::TarBz2 => {
            let mut enc = bzip2::write::BzEncoder::new(Vec::new(), bzip2::Compression::default());
            enc.write_all(raw)?;
            enc.finish()?
        }
        ArchiveFormat::TarXz => {
            let mut enc = xz2::write::XzEncoder::new(Vec::new(), 6);
            enc.write_all(raw)?;
            enc.finish()?
        }
        ArchiveFormat::TarLzma => {
            let opts = xz2::stream::LzmaOptions::new_preset(6).map_err(io::Error::other)?;
            let stream = xz2::stream::Stream::new_lzma_encoder(&opts).map_err(io::Error::other)?;
            let mut enc = xz2::write::XzEncoder::new_stream(Vec::new(), stream);
            enc.write_all(raw)?;
            enc.finish()?
        }
        ArchiveFormat::TarZst => zstd::stream::encode_all(raw, 3)?,
        ArchiveFormat::SevenZ | ArchiveFormat::Zip => unreachable!("not a tar wrapper"),
    })
}

fn zip_bytes(tree: &BTreeMap<String, Vec<u8>>) -> Result<Vec<u8>, ArchiveError> {
    let opts = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default())
        .unix_permissions(0o644);
    let mut w = zip::ZipWriter::new(Cursor::new(Vec::new()));
    let fail = |e: zip::result::ZipError| ArchiveError::Invalid(format!("zip writer: {e}"));
    for (path, data) in tree {
        w.start_file(path.as_str(), opts).map_err(fail)?;
        w.write_all(data)?;
    }
    Ok(w.finish().map_err(fail)?.into_inner())
}

fn sevenz_bytes(tree: &BTreeMap<String, Vec<u8>>) -> Result<Vec<u8>, ArchiveError> {
    let fail = |e: sevenz_rust::Error| ArchiveError::Invalid(format!("7z writer: {e}"));
    let mut w = sevenz_rust::SevenZWriter::new(Cursor::new(Vec::new())).map_err(fail)?;
    w.set_encrypt_header(false);
    for (path, data) in tree {
        let mut entry = sevenz_rust::SevenZArchiveEntry::new();
        entry.name = path.clone();
        let reader = (!data.is_empty()).then_some(data.as_slice());
        w.push_archive_entry(entry, reader).map_err(fail)?;
    }
    Ok(w.finish()?.into_inner())
}

/// Packs a path → contents map. Output depends only on the input: entries
/// are written in path order with zeroed timestamps and mode 0644.
pub fn pack(tree: &BTreeMap<String, Vec<u8>>, format: ArchiveFormat) -> Result<Vec<u8>, ArchiveError> {
    for name in tree.keys() {
        if safe_entry_name(name)? != *name {
            return Err(ArchiveError::Invalid(format!("entry name `{name}` is not normalized")));
        }
    }
    match format {
        ArchiveFormat::Zip => zip_bytes(tree),
        ArchiveFormat::SevenZ => sevenz_bytes(tree),
        tarlike => Ok(compress(tarlike, &tar_bytes(tree)?)?),
    }
}

/// Adds `payload` to a copy of `benign` at `<at>/<payload_name>` and packs
/// the result.
pub fn inject_and_pack(
    benign: &BTreeMap<String, Vec<u8>>,
    payload_name: &str,
    payload: &[u8],
    format: ArchiveFormat,
    at: &str,
) -> Result<Vec<u8>, ArchiveError> {
    if benign.is_empty() {
        return Err(ArchiveError::Invalid("benign tree is empty".into()));
    }
    let joined = match at.trim_end_matches('/') {
        "" => payload_name.to_string(),
        dir => format!("{dir}/{payload_name}"),
    };
    let dest = safe_entry_name(&joined)?;
    if dest.is_empty() {
        return Err(ArchiveError::Invalid("payload needs a file name".into()));
    }
    let mut tree = benign.clone();
    tree.insert(dest, payload.to_vec());
    pack(&tree, format)
}

/// Reads a directory into a path → contents map (relative, `/`-separated).
pub fn read_tree(root: &Path) -> io::Result<BTreeMap<String, Vec<u8>>> {
    let mut tree = BTreeMap::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(io::Error::other)?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .map_err(io::Error::other)?
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        tree.insert(rel, std::fs::read(entry.path())?);
    }
    Ok(tree)
}
