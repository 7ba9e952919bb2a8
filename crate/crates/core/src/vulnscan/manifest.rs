//! Dependency manifest parsers.
//!
//! Supported files: `package.json`, `package-lock.json`, `requirements.txt`,
//! `go.mod` and `os-packages.txt` (flat `name=version` list standing in for
//! image package databases). Unpinned ranges resolve to their lower bound.

use std::path::Path;

use serde_json::Value;
use walkdir::WalkDir;

use super::{Ecosystem, PackageInventory, VulnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ManifestKind {
    PackageJson,
    PackageLock,
    Requirements,
    GoMod,
    OsPackages,
}

impl ManifestKind {
    pub fn from_path(path: &str) -> Option<Self> {
        let base = Path::new(path).file_name()?.to_str()?;
        match base {
            "package.json" => Some(ManifestKind::PackageJson),
            "package-lock.json" => Some(ManifestKind::PackageLock),
            "requirements.txt" => Some(ManifestKind::Requirements),
            "go.mod" => Some(ManifestKind::GoMod),
            "os-packages.txt" => Some(ManifestKind::OsPackages),
            _ => None,
        }
    }
}

/// Parses one manifest into a partial inventory. `path` is recorded in
/// `declared_in` as given.
pub fn parse_manifest(path: &str, contents: &str) -> Result<PackageInventory, VulnError> {
    let kind =
        ManifestKind::from_path(path).ok_or_else(|| VulnError::UnsupportedManifest(path.to_string()))?;
    let mut inv = PackageInventory::default();
    match kind {
        ManifestKind::PackageJson => parse_package_json(path, contents, &mut inv)?,
        ManifestKind::PackageLock => parse_package_lock(path, contents, &mut inv)?,
        ManifestKind::Requirements => parse_requirements(path, contents, &mut inv)?,
        ManifestKind::GoMod => parse_go_mod(path, contents, &mut inv)?,
        ManifestKind::OsPackages => parse_os_packages(path, contents, &mut inv)?,
    }
    Ok(inv)
}

/// Walks `root` and merges every supported manifest. Paths in the inventory
/// are relative to `root`.
pub fn inventory_from_tree(root: &Path) -> PackageInventory {
    let mut inv = PackageInventory::default();
    if !root.is_dir() {
        return inv;
    }
    let mut files: Vec<_> = WalkDir::new(root)
        .into_iter()
        .filter_entry(|e| e.file_name() != ".git")
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .filter(|e| ManifestKind::from_path(&e.file_name().to_string_lossy()).is_some())
        .map(|e| e.into_path())
        .collect();
    files.sort();
    for file in files {
        let rel = rel_path(root, &file);
        match std::fs::read_to_string(&file) {
            Ok(text) => match parse_manifest(&rel, &text) {
                Ok(part) => inv.merge(part),
                Err(e) => inv.notices.push(e.to_string()),
            },
            Err(e) => inv.notices.push(format!("{rel}: {e}")),
        }
    }
    inv
}

pub(crate) fn rel_path(root: &Path, file: &Path) -> String {
    file.strip_prefix(root)
        .unwrap_or(file)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn syntax(path: &str, line: usize, message: impl Into<String>) -> VulnError {
    VulnError::ManifestSyntax {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn parse_json(path: &str, contents: &str) -> Result<Value, VulnError> {
    serde_json::from_str(contents).map_err(|e| syntax(path, e.line(), e.to_string()))
}

/// Minimum version satisfying an npm range, when one can be determined
/// without a registry.
fn npm_range_floor(range: &str) -> Option<String> {
    let first = range.split("||").next()?.trim();
    let first = first.split_whitespace().next()?;
    let v = first.trim_start_matches(['^', '~', '>', '=', 'v']);
    if v.is_empty()
        || v.contains(':')
        || v.contains('/')
        || !v.starts_with(|c: char| c.is_ascii_digit())
        || first.starts_with('>') && !first.starts_with(">=")
    {
        return None;
    }
    let parts: Vec<&str> = v.split('.').collect();
    let mut fixed = Vec::new();
    for p in parts.iter().take(3) {
        if *p == "x" || *p == "X" || *p == "*" {
            fixed.push("0".to_string());
        } else {
            fixed.push(p.to_string());
        }
    }
    while fixed.len() < 3 {
        fixed.push("0".to_string());
    }
    Some(fixed.join("."))
}

fn parse_package_json(path: &str, contents: &str, inv: &mut PackageInventory) -> Result<(), VulnError> {
    let doc = parse_json(path, contents)?;
    for section in ["dependencies", "devDependencies", "optionalDependencies"] {
        let Some(deps) = doc.get(section) else { continue };
        let deps = deps
            .as_object()
            .ok_or_else(|| syntax(path, 1, format!("`{section}` must be an object")))?;
        for (name, range) in deps {
            let range = range.as_str().unwrap_or_default();
            match npm_range_floor(range) {
                Some(v) => inv.add(name, &v, Ecosystem::Npm, path),
                None => inv
                    .notices
                    .push(format!("{path}: cannot resolve `{name}@{range}` without a registry")),
            }
        }
    }
    Ok(())
}

fn parse_package_lock(path: &str, contents: &str, inv: &mut PackageInventory) -> Result<(), VulnError> {
    let doc = parse_json(path, contents)?;
    if let Some(packages) = doc.get("packages").and_then(Value::as_object) {
        for (key, meta) in packages {
            let Some(idx) = key.rfind("node_modules/") else { continue };
            let name = &key[idx + "node_modules/".len()..];
            match meta.get("version").and_then(Value::as_str) {
                Some(v) => inv.add(name, v, Ecosystem::Npm, path),
                None => inv.notices.push(format!("{path}: `{key}` has no version")),
            }
        }
        return Ok(());
    }
    fn walk(deps: &serde_json::Map<String, Value>, path: &str, inv: &mut PackageInventory) {
        for (name, meta) in deps {
            if let Some(v) = meta.get("version").and_then(Value::as_str) {
                inv.add(name, v, Ecosystem::Npm, path);
            }
            if let Some(nested) = meta.get("dependencies").and_then(Value::as_object) {
                walk(nested, path, inv);
            }
        }
    }
    if let Some(deps) = doc.get("dependencies").and_then(Value::as_object) {
        walk(deps, path, inv);
    }
    Ok(())
}

fn parse_requirements(path: &str, contents: &str, inv: &mut PackageInventory) -> Result<(), VulnError> {
    for (i, raw) in contents.lines().enumerate() {
        let line = raw.split(" #").next().unwrap_or_default().trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('-') {
            continue;
        }
        let line = line.split(';').next().unwrap_or_default().trim();
        let name_end = line
            .find(|c: char| !(c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')))
            .unwrap_or(line.len());
        let name = &line[..name_end];
        if name.is_empty() {
            return Err(syntax(path, i + 1, format!("expected a requirement, got `{raw}`")));
        }
        let mut rest = line[name_end..].trim_start();
        if rest.starts_with('[') {
            let close = rest
                .find(']')
                .ok_or_else(|| syntax(path, i + 1, "unterminated extras list"))?;
            rest = rest[close + 1..].trim_start();
        }
        if rest.is_empty() {
            inv.notices
                .push(format!("{path}:{}: `{name}` is unpinned", i + 1));
            continue;
        }
        let mut floor = None;
        for spec in rest.split(',') {
            let spec = spec.trim();
            let op_len = spec
                .find(|c: char| !matches!(c, '=' | '<' | '>' | '~' | '!'))
                .unwrap_or(spec.len());
            let (op, ver) = (&spec[..op_len], spec[op_len..].trim());
            if ver.is_empty() || !matches!(op, "==" | "===" | ">=" | "~=" | ">" | "<" | "<=" | "!=") {
                return Err(syntax(path, i + 1, format!("bad version specifier `{spec}`")));
            }
            if matches!(op, "==" | "===" | ">=" | "~=") && floor.is_none() {
                floor = Some(ver.trim_end_matches(".*").to_string());
            }
        }
        match floor {
            Some(v) => inv.add(name, &v, Ecosystem::Pypi, path),
            None => inv
                .notices
                .push(format!("{path}:{}: `{name}` has no lower bound", i + 1)),
        }
    }
    Ok(())
}

fn parse_go_mod(path: &str, contents: &str, inv: &mut PackageInventory) -> Result<(), VulnError> {
    let mut in_block = false;
    for (i, raw) in contents.lines().enumerate() {
        let line = raw.split("//").next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let spec = if in_block {
            if line == ")" {
                in_block = false;
                continue;
            }
            line
        } else if let Some(rest) = line.strip_prefix("require") {
            let rest = rest.trim();
            if rest == "(" {
                in_block = true;
                continue;
            }
            rest
        } else {
            continue;
        };
        let mut parts = spec.split_whitespace();
        let (Some(module), Some(version)) = (parts.next(), parts.next()) else {
            return Err(syntax(path, i + 1, format!("require without version: `{raw}`")));
        };
        inv.add(module, version.trim_start_matches('v'), Ecosystem::Gomod, path);
    }
    if in_block {
        return Err(syntax(path, contents.lines().count(), "unterminated require block"));
    }
    Ok(())
}

fn parse_os_packages(path: &str, contents: &str, inv: &mut PackageInventory) -> Result<(), VulnError> {
    for (i, raw) in contents.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('=') {
            Some((name, version)) if !name.trim().is_empty() && !version.trim().is_empty() => {
                inv.add(name.trim(), version.trim(), Ecosystem::OsPackages, path)
            }
            _ => return Err(syntax(path, i + 1, format!("expected name=version, got `{raw}`"))),
        }
    }
    Ok(())
}
