//! Corpus loading, serverless filtering and the registry fetch interface.
//!
//! A corpus is a directory with one subdirectory per component:
//!
//! ```text
//! <root>/<publisher>__<name>/component.meta
//!                            tree/              source
//!                            archives/          compressed artifacts
//!                            iac/               templates
//!                            run_commands.txt   docker run instructions
//! ```
//!
//! `component.meta` is a list of `key=value` lines with lowercase keys.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::model::{ComponentRef, ModelError, Repository};

pub const MANIFEST_FILE: &str = "component.meta";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("corpus root {0} not found")]
    NotFound(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Why a single component directory could not be loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EntryError {
    pub dir: PathBuf,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for EntryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "{}:{}: {}", self.dir.display(), l, self.message),
            None => write!(f, "{}: {}", self.dir.display(), self.message),
        }
    }
}

/// Parsed `component.meta`, keeping line order so it re-serializes
/// byte-for-byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    lines: Vec<(String, String)>,
    trailing_newline: bool,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self, (usize, String)> {
        let trailing_newline = text.ends_with('\n');
        let body = text.strip_suffix('\n').unwrap_or(text);
        let mut lines = Vec::new();
        let mut seen = BTreeSet::new();
        if !body.is_empty() {
            for (i, line) in body.split('\n').enumerate() {
                let lineno = i + 1;
                let Some((key, value)) = line.split_once('=') else {
                    return Err((lineno, format!("expected key=value, got `{line}`")));
                };
                if key.is_empty()
                    || !key
                        .bytes()
                        .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
                {
                    return Err((lineno, format!("key `{key}` must be lowercase ASCII")));
                }
                if !seen.insert(key.to_string()) {
                    return Err((lineno, format!("duplicate key `{key}`")));
                }
                lines.push((key.to_string(), value.to_string()));
            }
        }
        Ok(Manifest {
            lines,
            trailing_newline,
        })
    }

    /// Canonical manifest for a component: identity keys first, then the
    /// remaining metadata in key order.
    pub fn for_component(component: &ComponentRef, metadata: &BTreeMap<String, String>) -> Self {
        let mut lines = vec![
            ("repository".to_string(), component.repository.to_string()),
            ("publisher".to_string(), component.publisher.clone()),
            ("name".to_string(), component.name.clone()),
            (
                "version".to_string(),
                component.version.clone().unwrap_or_default(),
            ),
        ];
        for (k, v) in metadata {
            if !matches!(k.as_str(), "repository" | "publisher" | "name" | "version") {
                lines.push((k.clone(), v.replace('\n', "\\n")));
            }
        }
        Manifest {
            lines,
            trailing_newline: true,
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn lines(&self) -> &[(String, String)] {
        &self.lines
    }

    pub fn component(&self) -> Result<ComponentRef, String> {
        let field = |k: &str| self.get(k).ok_or_else(|| format!("missing `{k}=`"));
        let repository: Repository = field("repository")?
            .parse()
            .map_err(|e: ModelError| e.to_string())?;
        ComponentRef::new(
            repository,
            field("publisher")?,
            field("name")?,
            self.get("version").map(str::to_string),
        )
        .map_err(|e| e.to_string())
    }
}

impl fmt::Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.lines.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{k}={v}")?;
        }
        if self.trailing_newline {
            f.write_str("\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    SourceTree,
    Archive,
    ImageLayout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub component: ComponentRef,
    pub root_path: PathBuf,
    /// Every non-identity manifest key (`github_url`, `pull_command`, ...).
    pub metadata: BTreeMap<String, String>,
    pub artifact_kind: ArtifactKind,
    pub manifest: Manifest,
}

impl CorpusEntry {
    pub fn tree_dir(&self) -> PathBuf {
        self.root_path.join("tree")
    }

    pub fn archives_dir(&self) -> PathBuf {
        self.root_path.join("archives")
    }

    pub fn iac_dir(&self) -> PathBuf {
        self.root_path.join("iac")
    }

    pub fn run_commands_path(&self) -> PathBuf {
        self.root_path.join("run_commands.txt")
    }

    fn from_dir(dir: &Path) -> Result<Self, EntryError> {
        let err = |line, message: String| EntryError {
            dir: dir.to_path_buf(),
            line,
            message,
        };
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => err(None, format!("missing {MANIFEST_FILE}")),
            _ => err(None, e.to_string()),
        })?;
        let manifest = Manifest::parse(&text).map_err(|(l, m)| err(Some(l), m))?;
        let component = manifest.component().map_err(|m| err(None, m))?;
        let metadata = manifest
            .lines()
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "repository" | "publisher" | "name" | "version"))
            .cloned()
            .collect::<BTreeMap<_, _>>();
        let artifact_kind = match metadata.get("artifact_kind").map(String::as_str) {
            Some("source-tree") => ArtifactKind::SourceTree,
            Some("archive") => ArtifactKind::Archive,
            Some("image-layout") => ArtifactKind::ImageLayout,
            Some(other) => return Err(err(None, format!("unknown artifact_kind `{other}`"))),
            None => infer_kind(dir),
        };
        Ok(CorpusEntry {
            component,
            root_path: dir.to_path_buf(),
            metadata,
            artifact_kind,
            manifest,
        })
    }
}

fn infer_kind(dir: &Path) -> ArtifactKind {
    let has_files = |p: PathBuf| {
        fs::read_dir(p)
            .map(|mut it| it.next().is_some())
            .unwrap_or(false)
    };
    if dir.join("image").is_dir() {
        ArtifactKind::ImageLayout
    } else if !dir.join("tree").is_dir() && has_files(dir.join("archives")) {
        ArtifactKind::Archive
    } else {
        ArtifactKind::SourceTree
    }
}

/// Result of loading a corpus: valid entries plus per-directory errors.
#[derive(Debug, Default)]
pub struct CorpusLoad {
    pub entries: Vec<CorpusEntry>,
    pub errors: Vec<EntryError>,
}

/// Loads every component directory under `root`, in directory-name order.
/// Hidden directories are ignored.
pub fn load_corpus(root: &Path) -> Result<CorpusLoad, IngestError> {
    if !root.is_dir() {
        return Err(IngestError::NotFound(root.to_path_buf()));
    }
    let io_err = |source| IngestError::Io {
        path: root.to_path_buf(),
        source,
    };
    let mut dirs = Vec::new();
    for item in fs::read_dir(root).map_err(io_err)? {
        let item = item.map_err(io_err)?;
        let hidden = item.file_name().to_string_lossy().starts_with('.');
        if item.file_type().map_err(io_err)?.is_dir() && !hidden {
            dirs.push(item.path());
        }
    }
    dirs.sort();

    let mut load = CorpusLoad::default();
    let mut keys = BTreeSet::new();
    for dir in dirs {
        match CorpusEntry::from_dir(&dir) {
            Ok(entry) => {
                if keys.insert(entry.component.clone()) {
                    load.entries.push(entry);
                } else {
                    load.errors.push(EntryError {
                        dir,
                        line: None,
                        message: format!("duplicate component {}", entry.component),
                    });
                }
            }
            Err(e) => load.errors.push(e),
        }
    }
    Ok(load)
}

/// Two-step serverless filter: the keyword `serverless` in the name or
/// metadata, or a `serverless.yml` file anywhere under the component.
pub fn is_serverless(entry: &CorpusEntry) -> io::Result<bool> {
    let has_keyword = |s: &str| s.to_ascii_lowercase().contains("serverless");
    if has_keyword(&entry.component.name) || entry.metadata.values().any(|v| has_keyword(v)) {
        return Ok(true);
    }
    for item in WalkDir::new(&entry.root_path) {
        let item = item.map_err(io::Error::other)?;
        if item.file_type().is_file() && item.file_name() == "serverless.yml" {
            return Ok(true);
        }
    }
    Ok(false)
}

/// A secret that never shows up in `Debug` output.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretString(String);

impl SecretString {
    pub fn new(s: impl Into<String>) -> Self {
        SecretString(s.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for SecretString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretString(***)")
    }
}

#[derive(Debug, Clone)]
pub struct FetchSpec {
    pub repository: Repository,
    pub query: String,
    pub auth_token: Option<SecretString>,
    /// Requests per minute, > 0.
    pub rate_limit: u32,
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("authentication rejected by registry")]
    Auth,
    #[error("registry rate limit hit")]
    RateLimited,
    #[error("registry rate limit still exceeded after {0} retries")]
    RateLimitExceeded(u32),
    #[error("network error: {0}")]
    Network(String),
    #[error("invalid fetch spec: {0}")]
    InvalidSpec(String),
    #[error("component {0} already exists in the corpus")]
    Conflict(String),
    #[error("fetched component is invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Contract every registry backend fulfils.
pub trait RegistryClient {
    fn list(
        &self,
        repository: Repository,
        query: &str,
        auth: Option<&SecretString>,
    ) -> Result<Vec<ComponentRef>, FetchError>;

    fn metadata(
        &self,
        component: &ComponentRef,
        auth: Option<&SecretString>,
    ) -> Result<BTreeMap<String, String>, FetchError>;

    /// Writes the component's artifacts (`tree/`, `archives/`, ...) into `dest`.
    fn download(
        &self,
        component: &ComponentRef,
        auth: Option<&SecretString>,
        dest: &Path,
    ) -> Result<(), FetchError>;
}

pub trait Clock {
    /// Time since an arbitrary epoch.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    start: std::time::Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock {
            start: std::time::Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// Clock whose `sleep` only advances a counter.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: Cell<Duration>,
    sleeps: Cell<u32>,
}

impl VirtualClock {
    pub fn sleeps(&self) -> u32 {
        self.sleeps.get()
    }
}

impl Clock for VirtualClock {
    fn now(&self) -> Duration {
        self.now.get()
    }

    fn sleep(&self, d: Duration) {
        self.now.set(self.now.get() + d);
        self.sleeps.set(self.sleeps.get() + 1);
    }
}

/// Spaces requests at least `60s / rate_limit` apart.
pub struct RateLimiter<'c> {
    clock: &'c dyn Clock,
    interval: Duration,
    last: Option<Duration>,
}

impl<'c> RateLimiter<'c> {
    pub fn new(clock: &'c dyn Clock, requests_per_minute: u32) -> Result<Self, FetchError> {
        if requests_per_minute == 0 {
            return Err(FetchError::InvalidSpec("rate_limit must be > 0".into()));
        }
        Ok(RateLimiter {
            clock,
            interval: Duration::from_secs(60) / requests_per_minute,
            last: None,
        })
    }

    pub fn acquire(&mut self) {
        if let Some(last) = self.last {
            let next = last + self.interval;
            let now = self.clock.now();
            if now < next {
                self.clock.sleep(next - now);
            }
        }
        self.last = Some(self.clock.now());
    }
}

const MAX_RETRIES: u32 = 3;
const BACKOFF_BASE: Duration = Duration::from_secs(2);

fn with_retry<T>(
    limiter: &mut RateLimiter<'_>,
    mut op: impl FnMut() -> Result<T, FetchError>,
) -> Result<T, FetchError> {
    let mut backoff = BACKOFF_BASE;
    for attempt in 0..=MAX_RETRIES {
        limiter.acquire();
        match op() {
            Err(FetchError::RateLimited) if attempt < MAX_RETRIES => {
                limiter.clock.sleep(backoff);
                backoff *= 2;
            }
            Err(FetchError::RateLimited) => return Err(FetchError::RateLimitExceeded(MAX_RETRIES)),
            other => return other,
        }
    }
    unreachable!("loop returns on the final attempt")
}

pub(crate) fn component_dir_name(c: &ComponentRef) -> String {
    let base = format!("{}__{}", c.publisher, c.name);
    let base: String = base
        .chars()
        .map(|ch| if ch == '/' || ch == '\\' { '_' } else { ch })
        .collect();
    match &c.version {
        Some(v) => format!("{base}@{v}"),
        None => base,
    }
}

/// Queries a registry and writes matching components into `dest` using the
/// corpus layout. Downloads are staged so that a failure leaves `dest`
/// untouched.
pub fn fetch_components(
    spec: &FetchSpec,
    client: &dyn RegistryClient,
    clock: &dyn Clock,
    dest: &Path,
) -> Result<Vec<CorpusEntry>, FetchError> {
    let mut limiter = RateLimiter::new(clock, spec.rate_limit)?;
    fs::create_dir_all(dest)?;
    let staging = dest.join(".fetch-staging");
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;

    let staged = stage_components(spec, client, &mut limiter, &staging);
    let names = match staged {
        Ok(names) => names,
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
    };
    if let Some(existing) = names.iter().find(|n| dest.join(n).exists()) {
        let _ = fs::remove_dir_all(&staging);
        return Err(FetchError::Conflict(existing.clone()));
    }
    let mut entries = Vec::with_capacity(names.len());
    for name in &names {
        let target = dest.join(name);
        fs::rename(staging.join(name), &target)?;
        entries.push(CorpusEntry::from_dir(&target).map_err(|e| FetchError::Invalid(e.to_string()))?);
    }
    fs::remove_dir_all(&staging)?;
    Ok(entries)
}

fn stage_components(
    spec: &FetchSpec,
    client: &dyn RegistryClient,
    limiter: &mut RateLimiter<'_>,
    staging: &Path,
) -> Result<Vec<String>, FetchError> {
    let auth = spec.auth_token.as_ref();
    let refs = with_retry(limiter, || client.list(spec.repository, &spec.query, auth))?;
    let mut names = Vec::new();
    for component in refs {
        let metadata = with_retry(limiter, || client.metadata(&component, auth))?;
        let name = component_dir_name(&component);
        let dir = staging.join(&name);
        fs::create_dir_all(&dir)?;
        with_retry(limiter, || client.download(&component, auth, &dir))?;
        let manifest = Manifest::for_component(&component, &metadata);
        fs::write(dir.join(MANIFEST_FILE), manifest.to_string())?;
        names.push(name);
    }
    Ok(names)
}

/// Registry backed by a local corpus directory. Stands in for the live
/// scrapers in tests and offline experiments.
pub struct FsRegistryClient {
    root: PathBuf,
    accepted_tokens: Option<BTreeSet<String>>,
    requests: Cell<usize>,
    /// Number of upcoming requests to answer with `RateLimited`.
    throttle: Cell<u32>,
}

impl FsRegistryClient {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FsRegistryClient {
            root: root.into(),
            accepted_tokens: None,
            requests: Cell::new(0),
            throttle: Cell::new(0),
        }
    }

    /// Require one of `tokens` on every request.
    pub fn with_tokens<I, S>(mut self, tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.accepted_tokens = Some(tokens.into_iter().map(Into::into).collect());
        self
    }

    pub fn throttle_next(&self, n: u32) {
        self.throttle.set(n);
    }

    pub fn request_count(&self) -> usize {
        self.requests.get()
    }

    fn check(&self, auth: Option<&SecretString>) -> Result<(), FetchError> {
        self.requests.set(self.requests.get() + 1);
        if self.throttle.get() > 0 {
            self.throttle.set(self.throttle.get() - 1);
            return Err(FetchError::RateLimited);
        }
        if let Some(tokens) = &self.accepted_tokens {
            match auth {
                Some(t) if tokens.contains(t.expose()) => {}
                _ => return Err(FetchError::Auth),
            }
        }
        Ok(())
    }

    fn find(&self, component: &ComponentRef) -> Result<CorpusEntry, FetchError> {
        let load = load_corpus(&self.root).map_err(|e| FetchError::Network(e.to_string()))?;
        load.entries
            .into_iter()
            .find(|e| &e.component == component)
            .ok_or_else(|| FetchError::Network(format!("{component} not found")))
    }
}

impl RegistryClient for FsRegistryClient {
    fn list(
        &self,
        repository: Repository,
        query: &str,
        auth: Option<&SecretString>,
    ) -> Result<Vec<ComponentRef>, FetchError> {
        self.check(auth)?;
        let load = load_corpus(&self.root).map_err(|e| FetchError::Network(e.to_string()))?;
        let q = query.to_ascii_lowercase();
        Ok(load
            .entries
            .into_iter()
            .filter(|e| e.component.repository == repository)
            .filter(|e| {
                q.is_empty()
                    || e.component.name.to_ascii_lowercase().contains(&q)
                    || e.metadata.values().any(|v| v.to_ascii_lowercase().contains(&q))
            })
            .map(|e| e.component)
            .collect())
    }

    fn metadata(
        &self,
        component: &ComponentRef,
        auth: Option<&SecretString>,
    ) -> Result<BTreeMap<String, String>, FetchError> {
        self.check(auth)?;
        Ok(self.find(component)?.metadata)
    }

    fn download(
        &self,
        component: &ComponentRef,
        auth: Option<&SecretString>,
        dest: &Path,
    ) -> Result<(), FetchError> {
        self.check(auth)?;
        let entry = self.find(component)?;
        for item in WalkDir::new(&entry.root_path).min_depth(1) {
            let item = item.map_err(io::Error::other)?;
            let rel = item
                .path()
                .strip_prefix(&entry.root_path)
                .expect("walkdir yields paths under its root");
            if rel == Path::new(MANIFEST_FILE) {
                continue;
            }
            let target = dest.join(rel);
            if item.file_type().is_dir() {
                fs::create_dir_all(&target)?;
            } else if item.file_type().is_file() {
                fs::copy(item.path(), &target)?;
            }
        }
        Ok(())
    }
}
