//! Version parsing and ordering for advisory range checks.
//!
//! Semantic-version precedence is used whenever a string parses as semver
//! (one- and two-component versions are zero-padded). Anything else falls
//! back to segment-wise comparison of the numbers and letter suffixes.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionError(pub String);

impl fmt::Display for VersionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unparseable version `{}`", self.0)
    }
}

impl std::error::Error for VersionError {}

#[derive(Debug, Clone)]
pub enum Version {
    Semver(semver::Version),
    Segments(Vec<u64>),
}

impl Version {
    pub fn parse(raw: &str) -> Result<Version, VersionError> {
        let s = raw.trim();
        let s = s.strip_prefix('v').unwrap_or(s);
        let s = s.strip_suffix("+incompatible").unwrap_or(s);
        if let Ok(v) = semver::Version::parse(s) {
            return Ok(Version::Semver(v));
        }
        let dots = s.split('.').count();
        if dots < 3 && !s.is_empty() && s.split('.').all(|p| !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit())) {
            let padded = match dots {
                1 => format!("{s}.0.0"),
                _ => format!("{s}.0"),
            };
            if let Ok(v) = semver::Version::parse(&padded) {
                return Ok(Version::Semver(v));
            }
        }
        let mut segments = Vec::new();
        for part in s.split(['.', '-', '_', '+', '~', ':']) {
            if part.is_empty() {
                return Err(VersionError(raw.to_string()));
            }
            segments.push(segment_key(part).ok_or_else(|| VersionError(raw.to_string()))?);
        }
        Ok(Version::Segments(segments))
    }

    /// True when the fallback comparison is in use.
    pub fn is_fallback(&self) -> bool {
        matches!(self, Version::Segments(_))
    }

    fn segments(&self) -> Vec<u64> {
        match self {
            Version::Semver(v) => [v.major, v.minor, v.patch]
                .into_iter()
                .map(|n| n.saturating_mul(SEGMENT_SCALE) + PLAIN)
                .collect(),
            Version::Segments(s) => s.clone(),
        }
    }
}

const SEGMENT_SCALE: u64 = 1000;
const PLAIN: u64 = 100;

/// Sort key of one segment. Leading letters are ignored (`r1` is 1). A
/// single trailing letter is a post-release (`1.1.1t` after `1.1.1s` after
/// `1.1.1`); pre-release words sort before the bare number.
fn segment_key(part: &str) -> Option<u64> {
    let rest = part.trim_start_matches(|c: char| !c.is_ascii_digit());
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    let n: u64 = digits.parse().ok()?;
    let suffix: String = rest[digits.len()..]
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    let tail = match suffix.as_str() {
        "" => PLAIN,
        "dev" => 1,
        "alpha" => 2,
        "beta" => 3,
        "pre" => 4,
        "rc" => 5,
        s if s.len() == 1 => PLAIN + u64::from(s.as_bytes()[0] - b'a' + 1),
        _ => PLAIN,
    };
    n.checked_mul(SEGMENT_SCALE)?.checked_add(tail)
}

fn cmp_segments(a: &[u64], b: &[u64]) -> Ordering {
    let n = a.len().max(b.len());
    for i in 0..n {
        let x = a.get(i).copied().unwrap_or(PLAIN);
        let y = b.get(i).copied().unwrap_or(PLAIN);
        match x.cmp(&y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

impl Ord for Version {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Version::Semver(a), Version::Semver(b)) => a.cmp_precedence(b),
            _ => cmp_segments(&self.segments(), &other.segments()),
        }
    }
}

impl PartialOrd for Version {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Version {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Version {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bound {
    pub version: String,
    pub inclusive: bool,
}

/// Affected interval; a missing bound is unbounded on that side.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VersionInterval {
    pub lower: Option<Bound>,
    pub upper: Option<Bound>,
}

impl VersionInterval {
    pub fn exact(v: &str) -> Self {
        let b = Bound {
            version: v.to_string(),
            inclusive: true,
        };
        VersionInterval {
            lower: Some(b.clone()),
            upper: Some(b),
        }
    }

    /// Checks `lower <= upper` with both bounds parseable.
    pub fn validate(&self) -> Result<(), String> {
        let lo = self.lower.as_ref().map(|b| Version::parse(&b.version)).transpose();
        let hi = self.upper.as_ref().map(|b| Version::parse(&b.version)).transpose();
        let (lo, hi) = (lo.map_err(|e| e.to_string())?, hi.map_err(|e| e.to_string())?);
        if let (Some(lo), Some(hi)) = (lo, hi) {
            if lo > hi {
                return Err(format!(
                    "interval lower bound {} exceeds upper bound {}",
                    self.lower.as_ref().unwrap().version,
                    self.upper.as_ref().unwrap().version
                ));
            }
        }
        Ok(())
    }

    pub fn contains(&self, v: &Version) -> Result<bool, VersionError> {
        if let Some(lo) = &self.lower {
            let bound = Version::parse(&lo.version)?;
            let ok = if lo.inclusive { *v >= bound } else { *v > bound };
            if !ok {
                return Ok(false);
            }
        }
        if let Some(hi) = &self.upper {
            let bound = Version::parse(&hi.version)?;
            let ok = if hi.inclusive { *v <= bound } else { *v < bound };
            if !ok {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl fmt::Display for VersionInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.lower, &self.upper) {
            (None, None) => f.write_str("*"),
            (lo, hi) => {
                let mut parts = Vec::new();
                if let Some(b) = lo {
                    parts.push(format!("{}{}", if b.inclusive { ">=" } else { ">" }, b.version));
                }
                if let Some(b) = hi {
                    parts.push(format!("{}{}", if b.inclusive { "<=" } else { "<" }, b.version));
                }
                f.write_str(&parts.join(" "))
            }
        }
    }
}
