//! Marks which inventory packages are actually imported by source files.
//!
//! A package counts as referenced when a source file mentions it in an
//! import-like context: `import X`, `from X`, `require('X')`, ES module
//! `from 'X'`, a quoted Go module path, or (for OS packages) a bare word in
//! a shell script. Files in the metadata extension set never count.

use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use super::manifest::rel_path;
use super::{Ecosystem, PackageInventory};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceRefConfig {
    pub source_extensions: Vec<String>,
    pub metadata_extensions: Vec<String>,
}

impl Default for SourceRefConfig {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        SourceRefConfig {
            source_extensions: v(&["py", "js", "ts", "java", "go", "rb", "sh", "c", "cpp"]),
            metadata_extensions: v(&["lock", "gradle", "toml", "yml", "yaml", "json", "xml", "md"]),
        }
    }
}

impl SourceRefConfig {
    fn is_source(&self, path: &Path) -> bool {
        let Some(ext) = path.extension().and_then(|e| e.to_str()) else {
            return false;
        };
        let ext = ext.to_ascii_lowercase();
        self.source_extensions.contains(&ext) && !self.metadata_extensions.contains(&ext)
    }
}

// end-of-token guard; the regex crate has no lookahead
const END: &str = r#"(?:$|[^\w\-])"#;

fn import_pattern(name: &str, ecosystem: Ecosystem) -> Regex {
    let mut alts = Vec::new();
    match ecosystem {
        Ecosystem::Npm | Ecosystem::Pypi => {
            let mut names = vec![regex::escape(name)];
            if ecosystem == Ecosystem::Pypi && name.contains('-') {
                names.push(regex::escape(&name.replace('-', "_")));
            }
            for n in names {
                alts.push(format!(r"\bimport\s+{n}{END}"));
                alts.push(format!(r"\bfrom\s+{n}{END}"));
                alts.push(format!(r#"\brequire\s*\(\s*['"]{n}['"/]"#));
                alts.push(format!(r#"\bfrom\s+['"]{n}['"/]"#));
                alts.push(format!(r#"\bimport\s*\(?\s*['"]{n}['"/]"#));
            }
        }
        Ecosystem::Gomod => alts.push(format!(r#""{}(?:/[^"]*)?""#, regex::escape(name))),
        Ecosystem::OsPackages => alts.push(format!(r"(?:^|[^\w\-/.]){}{END}", regex::escape(name))),
    }
    Regex::new(&format!("(?m){}", alts.join("|"))).expect("escaped pattern is valid")
}

/// Fills `referenced_in_source` for every package. Returns notices for files
/// that could not be read.
pub fn mark_source_references(
    inventory: &mut PackageInventory,
    tree_root: &Path,
    config: &SourceRefConfig,
) -> Vec<String> {
    let mut notices = Vec::new();
    if !tree_root.is_dir() {
        return notices;
    }
    let matchers: Vec<_> = inventory
        .packages
        .values()
        .map(|p| ((p.ecosystem, p.name.clone()), import_pattern(&p.name, p.ecosystem)))
        .collect();
    let mut files: Vec<_> = WalkDir::new(tree_root)
        .into_iter()
        .filter_map(|e| match e {
            Ok(e) => Some(e),
            Err(err) => {
                notices.push(format!("skipped unreadable entry: {err}"));
                None
            }
        })
        .filter(|e| e.file_type().is_file() && config.is_source(e.path()))
        .map(|e| e.into_path())
        .collect();
    files.sort();
    for file in files {
        let bytes = match std::fs::read(&file) {
            Ok(b) => b,
            Err(e) => {
                notices.push(format!("skipped {}: {e}", file.display()));
                continue;
            }
        };
        let text = String::from_utf8_lossy(&bytes);
        let rel = rel_path(tree_root, &file);
        let is_shell = file.extension().is_some_and(|e| e == "sh");
        for (key, re) in &matchers {
            if key.0 == Ecosystem::OsPackages && !is_shell {
                continue;
            }
            if key.0 == Ecosystem::Gomod && file.extension().is_none_or(|e| e != "go") {
                continue;
            }
            if re.is_match(&text) {
                if let Some(p) = inventory.packages.get_mut(key) {
                    p.referenced_in_source.insert(rel.clone());
                }
            }
        }
    }
    notices
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use tempfile::TempDir;

    fn inv_with(pkgs: &[(&str, Ecosystem)]) -> PackageInventory {
        let mut inv = PackageInventory::default();
        for (n, e) in pkgs {
            inv.add(n, "1.0.0", *e, "manifest");
        }
        inv
    }

    #[test]
    fn python_import_is_referenced() {
        let tmp = TempDir::new().unwrap();
        fs::write(tmp.path().join("handler.py"), "import json\nimport requests\n").unwrap();
        let mut inv = inv_with(&[("requests", Ecosystem::Pypi)]);
        mark_source_references(&mut inv, tmp.path(), &SourceRefConfig::default());
        let p = inv.get("requests", Ecosystem::Pypi).unwrap();
        assert!(p.referenced_in_source.contains("handler.py"));
    }

    #[test]
    fn metadata_only_mentions_do_not_count() {
        let tmp = TempDir::new().unwrap();
        fs::write(tmp.path().join("README.md"), "we use lodash: require('lodash')").unwrap();
        fs::write(tmp.path().join("package.json"), r#"{"dependencies":{"lodash":"4"}}"#).unwrap();
        let mut inv = inv_with(&[("lodash", Ecosystem::Npm)]);
        mark_source_references(&mut inv, tmp.path(), &SourceRefConfig::default());
        assert!(inv.get("lodash", Ecosystem::Npm).unwrap().referenced_in_source.is_empty());
    }

    #[test]
    fn token_context_is_required() {
        let tmp = TempDir::new().unwrap();
        fs::write(
            tmp.path().join("a.js"),
            "const qsx = require('qs-extra');\n// lodash is great\nimport x from \"lodash/fp\";\n",
        )
        .unwrap();
        let mut inv = inv_with(&[("qs", Ecosystem::Npm), ("lodash", Ecosystem::Npm)]);
        mark_source_references(&mut inv, tmp.path(), &SourceRefConfig::default());
        assert!(inv.get("qs", Ecosystem::Npm).unwrap().referenced_in_source.is_empty());
        assert_eq!(inv.get("lodash", Ecosystem::Npm).unwrap().referenced_in_source.len(), 1);
    }

    #[test]
    fn go_and_underscore_imports() {
        let tmp = TempDir::new().unwrap();
        fs::write(tmp.path().join("main.go"), "import (\n\t\"golang.org/x/text/language\"\n)\n").unwrap();
        fs::write(tmp.path().join("app.py"), "from flask_cors import CORS\n").unwrap();
        let mut inv = inv_with(&[("golang.org/x/text", Ecosystem::Gomod), ("flask-cors", Ecosystem::Pypi)]);
        mark_source_references(&mut inv, tmp.path(), &SourceRefConfig::default());
        assert!(!inv.get("golang.org/x/text", Ecosystem::Gomod).unwrap().referenced_in_source.is_empty());
        assert!(!inv.get("flask-cors", Ecosystem::Pypi).unwrap().referenced_in_source.is_empty());
    }

    #[test]
    fn empty_tree_leaves_everything_unreferenced() {
        let tmp = TempDir::new().unwrap();
        let mut inv = inv_with(&[("requests", Ecosystem::Pypi), ("curl", Ecosystem::OsPackages)]);
        mark_source_references(&mut inv, tmp.path(), &SourceRefConfig::default());
        assert!(inv.packages.values().all(|p| p.referenced_in_source.is_empty()));
    }
}
