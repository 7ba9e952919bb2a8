//! Shared domain types: component identity, the five attack vectors,
//! severities, findings and the aggregated scan report.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("CVSS score {0} is outside [0.0, 10.0]")]
    ScoreOutOfRange(f64),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("thresholds must be sorted ascending")]
    UnsortedThresholds,
    #[error("invalid component reference: {0}")]
    InvalidComponent(String),
    #[error("unknown repository `{0}`")]
    UnknownRepository(String),
}

/// Public repository a component was retrieved from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Repository {
    #[serde(rename = "dockerhub")]
    DockerHub,
    #[serde(rename = "github")]
    GitHub,
    #[serde(rename = "aws-sar")]
    AwsSar,
    #[serde(rename = "serverless-framework")]
    ServerlessFramework,
    #[serde(rename = "quay")]
    RedHatQuay,
    #[serde(rename = "local")]
    LocalCorpus,
}

impl Repository {
    pub const ALL: [Repository; 6] = [
        Repository::DockerHub,
        Repository::GitHub,
        Repository::AwsSar,
        Repository::ServerlessFramework,
        Repository::RedHatQuay,
        Repository::LocalCorpus,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Repository::DockerHub => "dockerhub",
            Repository::GitHub => "github",
            Repository::AwsSar => "aws-sar",
            Repository::ServerlessFramework => "serverless-framework",
            Repository::RedHatQuay => "quay",
            Repository::LocalCorpus => "local",
        }
    }
}

impl fmt::Display for Repository {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Repository {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match norm.as_str() {
            "dockerhub" => Ok(Repository::DockerHub),
            "github" => Ok(Repository::GitHub),
            "awssar" | "sar" => Ok(Repository::AwsSar),
            "serverlessframework" | "serverless" => Ok(Repository::ServerlessFramework),
            "redhatquay" | "quay" | "quayio" => Ok(Repository::RedHatQuay),
            "localcorpus" | "local" => Ok(Repository::LocalCorpus),
            _ => Err(ModelError::UnknownRepository(s.to_string())),
        }
    }
}

/// Identity of a serverless component.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComponentRef {
    pub repository: Repository,
    pub publisher: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
}

impl ComponentRef {
    pub fn new(
        repository: Repository,
        publisher: impl Into<String>,
        name: impl Into<String>,
        version: Option<String>,
    ) -> Result<Self, ModelError> {
        let publisher = publisher.into();
        let name = name.into();
        if publisher.trim().is_empty() {
            return Err(ModelError::InvalidComponent("publisher is empty".into()));
        }
        if name.trim().is_empty() {
            return Err(ModelError::InvalidComponent("name is empty".into()));
        }
        Ok(ComponentRef {
            repository,
            publisher,
            name,
            version: version.filter(|v| !v.is_empty()),
        })
    }
}

impl fmt::Display for ComponentRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}/{}", self.repository, self.publisher, self.name)?;
        if let Some(v) = &self.version {
            write!(f, "@{v}")?;
        }
        Ok(())
    }
}

/// The five attack vectors against public serverless repositories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AttackVector {
    /// Vulnerable third-party dependencies.
    V1,
    /// Malicious payloads concealed in compressed components.
    V2,
    /// Sensitive parameters in Docker run commands.
    V3,
    /// IaC template misconfigurations.
    V4,
    /// Typo-squatted component or publisher names.
    V5,
}

impl AttackVector {
    pub const ALL: [AttackVector; 5] = [
        AttackVector::V1,
        AttackVector::V2,
        AttackVector::V3,
        AttackVector::V4,
        AttackVector::V5,
    ];

    pub fn title(&self) -> &'static str {
        match self {
            AttackVector::V1 => "vulnerable dependencies",
            AttackVector::V2 => "malicious payload in compressed component",
            AttackVector::V3 => "sensitive docker run parameter",
            AttackVector::V4 => "IaC template misconfiguration",
            AttackVector::V5 => "typo-squatting",
        }
    }
}

impl FromStr for AttackVector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "V1" => Ok(AttackVector::V1),
            "V2" => Ok(AttackVector::V2),
            "V3" => Ok(AttackVector::V3),
            "V4" => Ok(AttackVector::V4),
            "V5" => Ok(AttackVector::V5),
            _ => Err(format!("unknown attack vector `{s}` (expected V1..V5)")),
        }
    }
}

/// Severity band. Critical > High > Medium > Low; `Unknown` is incomparable
/// with the other levels and is left out of every statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Critical,
    High,
    Medium,
    Low,
    Unknown,
}

impl Severity {
    pub const ALL: [Severity; 5] = [
        Severity::Critical,
        Severity::High,
        Severity::Medium,
        Severity::Low,
        Severity::Unknown,
    ];

    /// Numeric rank, higher is more severe. `None` for `Unknown`.
    pub fn rank(&self) -> Option<u8> {
        match self {
            Severity::Critical => Some(4),
            Severity::High => Some(3),
            Severity::Medium => Some(2),
            Severity::Low => Some(1),
            Severity::Unknown => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Critical => "critical",
            Severity::High => "high",
            Severity::Medium => "medium",
            Severity::Low => "low",
            Severity::Unknown => "unknown",
        }
    }
}

impl PartialOrd for Severity {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        match (self.rank(), other.rank()) {
            (Some(a), Some(b)) => Some(a.cmp(&b)),
            (None, None) => Some(Ordering::Equal),
            _ => None,
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "critical" => Ok(Severity::Critical),
            "high" => Ok(Severity::High),
            "medium" => Ok(Severity::Medium),
            "low" => Ok(Severity::Low),
            "unknown" => Ok(Severity::Unknown),
            _ => Err(format!("unknown severity `{s}`")),
        }
    }
}

/// One detected issue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub rule_id: String,
    pub vector: AttackVector,
    pub severity: Severity,
    pub component: ComponentRef,
    /// File path, command index or template resource path inside the
    /// component's artifacts.
    pub location: String,
    /// Matched text. Credential values are redacted before they get here.
    pub evidence: String,
    pub remediation: String,
}

impl Finding {
    /// Key under which two findings are considered the same issue.
    pub fn dedup_key(&self) -> (&str, &ComponentRef, &str) {
        (&self.rule_id, &self.component, &self.location)
    }
}

/// Per-severity counters. `unknown` is kept as its own bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeverityHistogram {
    pub critical: u64,
    pub high: u64,
    pub medium: u64,
    pub low: u64,
    pub unknown: u64,
}

impl SeverityHistogram {
    pub fn add(&mut self, severity: Severity) {
        *self.slot(severity) += 1;
    }

    pub fn get(&self, severity: Severity) -> u64 {
        match severity {
            Severity::Critical => self.critical,
            Severity::High => self.high,
            Severity::Medium => self.medium,
            Severity::Low => self.low,
            Severity::Unknown => self.unknown,
        }
    }

    fn slot(&mut self, severity: Severity) -> &mut u64 {
        match severity {
            Severity::Critical => &mut self.critical,
            Severity::High => &mut self.high,
            Severity::Medium => &mut self.medium,
            Severity::Low => &mut self.low,
            Severity::Unknown => &mut self.unknown,
        }
    }

    /// Sum of the four ranked buckets.
    pub fn known_total(&self) -> u64 {
        self.critical + self.high + self.medium + self.low
    }

    pub fn total(&self) -> u64 {
        self.known_total() + self.unknown
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }
}

impl<'a> FromIterator<&'a Severity> for SeverityHistogram {
    fn from_iter<I: IntoIterator<Item = &'a Severity>>(iter: I) -> Self {
        let mut h = SeverityHistogram::default();
        for s in iter {
            h.add(*s);
        }
        h
    }
}

/// Descriptive statistics over per-component counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub count_threshold: u64,
    pub fraction: f64,
}

/// Per-component and per-corpus aggregation of findings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub corpus_id: String,
    #[serde(with = "component_map")]
    pub per_component: BTreeMap<ComponentRef, Vec<Finding>>,
    #[serde(with = "component_map")]
    pub vuln_counts: BTreeMap<ComponentRef, u64>,
    pub severity_histogram: SeverityHistogram,
    /// Absent when `vuln_counts` is empty.
    pub stats: Option<Stats>,
    pub cdf_points: Vec<CdfPoint>,
}

impl ScanReport {
    pub fn findings(&self) -> impl Iterator<Item = &Finding> {
        self.per_component.values().flatten()
    }

    pub fn finding_count(&self) -> usize {
        self.per_component.values().map(Vec::len).sum()
    }
}

/// JSON object keys must be strings, so component-keyed maps are written as
/// an array of `{component, value}` pairs in key order.
mod component_map {
    use super::ComponentRef;
    use serde::de::Deserializer;
    use serde::ser::{SerializeSeq, Serializer};
    use serde::{Deserialize, Serialize};
    use std::collections::BTreeMap;

    #[derive(Serialize)]
    struct EntryRef<'a, V> {
        component: &'a ComponentRef,
        value: &'a V,
    }

    #[derive(Deserialize)]
    struct Entry<V> {
        component: ComponentRef,
        value: V,
    }

    pub fn serialize<S, V>(map: &BTreeMap<ComponentRef, V>, ser: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        V: Serialize,
    {
        let mut seq = ser.serialize_seq(Some(map.len()))?;
        for (component, value) in map {
            seq.serialize_element(&EntryRef { component, value })?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D, V>(de: D) -> Result<BTreeMap<ComponentRef, V>, D::Error>
    where
        D: Deserializer<'de>,
        V: Deserialize<'de>,
    {
        let entries: Vec<Entry<V>> = Vec::deserialize(de)?;
        Ok(entries.into_iter().map(|e| (e.component, e.value)).collect())
    }
}

/// Bands a CVSS 3.1 base score.
///
/// `None` and `0.0` map to [`Severity::Unknown`]. Scores are compared in
/// tenths so that `3.9` and `4.0` never straddle a floating-point gap.
pub fn severity_band(cvss_score: Option<f64>) -> Result<Severity, ModelError> {
    let Some(score) = cvss_score else {
        return Ok(Severity::Unknown);
    };
    if !score.is_finite() || !(0.0..=10.0).contains(&score) {
        return Err(ModelError::ScoreOutOfRange(score));
    }
    let tenths = (score * 10.0).round() as u32;
    Ok(match tenths {
        0 => Severity::Unknown,
        1..=39 => Severity::Low,
        40..=69 => Severity::Medium,
        70..=89 => Severity::High,
        _ => Severity::Critical,
    })
}

/// Mean, median, extremes and population standard deviation.
pub fn summarize_counts(counts: &[u64]) -> Result<Stats, ModelError> {
    if counts.is_empty() {
        return Err(ModelError::EmptyInput("summarize_counts needs at least one count"));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mean = sorted.iter().map(|&c| c as f64).sum::<f64>() / n as f64;
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    };
    let variance = sorted
        .iter()
        .map(|&c| {
            let d = c as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    Ok(Stats {
        mean,
        median,
        min: sorted[0] as f64,
        max: sorted[n - 1] as f64,
        stddev: variance.sqrt(),
    })
}

/// Empirical CDF of `counts` evaluated at each threshold.
pub fn cdf_of_counts(counts: &[u64], thresholds: &[u64]) -> Result<Vec<CdfPoint>, ModelError> {
    if counts.is_empty() {
        return Err(ModelError::EmptyInput("cdf_of_counts needs at least one count"));
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(ModelError::UnsortedThresholds);
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let at_or_below = sorted.partition_point(|&c| c <= t);
            CdfPoint {
                count_threshold: t,
                fraction: at_or_below as f64 / n,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn band_boundaries() {
        let cases = [
            (0.1, Severity::Low),
            (3.9, Severity::Low),
            (4.0, Severity::Medium),
            (6.9, Severity::Medium),
            (7.0, Severity::High),
            (8.9, Severity::High),
            (9.0, Severity::Critical),
            (10.0, Severity::Critical),
        ];
        for (score, want) in cases {
            assert_eq!(severity_band(Some(score)).unwrap(), want, "score {score}");
        }
        assert_eq!(severity_band(Some(0.0)).unwrap(), Severity::Unknown);
        assert_eq!(severity_band(None).unwrap(), Severity::Unknown);
    }

    #[test]
    fn band_rejects_out_of_range() {
        assert!(matches!(severity_band(Some(10.1)), Err(ModelError::ScoreOutOfRange(_))));
        assert!(matches!(severity_band(Some(-0.1)), Err(ModelError::ScoreOutOfRange(_))));
        assert!(severity_band(Some(f64::NAN)).is_err());
    }

    #[test]
    fn unknown_is_incomparable() {
        assert!(Severity::Critical > Severity::High);
        assert!(Severity::Medium > Severity::Low);
        assert_eq!(Severity::Unknown.partial_cmp(&Severity::Low), None);
        assert_eq!(Severity::Unknown.partial_cmp(&Severity::Low), None);
    }

    #[test]
    fn summarize_examples() {
        let s = summarize_counts(&[5]).unwrap();
        assert_eq!((s.mean, s.median, s.min, s.max, s.stddev), (5.0, 5.0, 5.0, 5.0, 0.0));
        let s = summarize_counts(&[0, 10]).unwrap();
        assert_eq!((s.mean, s.median, s.min, s.max, s.stddev), (5.0, 5.0, 0.0, 10.0, 5.0));
        assert_eq!(summarize_counts(&[1, 2, 3, 4]).unwrap().median, 2.5);
        assert!(matches!(summarize_counts(&[]), Err(ModelError::EmptyInput(_))));
    }

    #[test]
    fn cdf_examples() {
        let pts = cdf_of_counts(&[0, 0, 5, 200], &[0, 10, 100, 1000]).unwrap();
        let fr: Vec<f64> = pts.iter().map(|p| p.fraction).collect();
        assert_eq!(fr, vec![0.5, 0.75, 0.75, 1.0]);
        assert_eq!(cdf_of_counts(&[7], &[7]).unwrap()[0].fraction, 1.0);
        assert_eq!(cdf_of_counts(&[1, 2, 3], &[0]).unwrap()[0].fraction, 0.0);
        assert!(cdf_of_counts(&[], &[1]).is_err());
        assert_eq!(cdf_of_counts(&[1], &[3, 1]), Err(ModelError::UnsortedThresholds));
    }

    #[test]
    fn component_requires_identity() {
        assert!(ComponentRef::new(Repository::GitHub, "", "x", None).is_err());
        assert!(ComponentRef::new(Repository::GitHub, "p", " ", None).is_err());
        let c = ComponentRef::new(Repository::GitHub, "p", "x", Some(String::new())).unwrap();
        assert_eq!(c.version, None);
        assert_eq!(c.to_string(), "github:p/x");
    }

    #[test]
    fn repository_names_round_trip() {
        for r in Repository::ALL {
            assert_eq!(r.as_str().parse::<Repository>().unwrap(), r);
        }
        assert_eq!("GitHub".parse::<Repository>().unwrap(), Repository::GitHub);
        assert!("npmjs".parse::<Repository>().is_err());
    }

    proptest! {
        #[test]
        fn summarize_is_permutation_invariant(mut v in prop::collection::vec(0u64..10_000, 1..60), seed in any::<u64>()) {
            let a = summarize_counts(&v).unwrap();
            // deterministic shuffle
            let n = v.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
            let b = summarize_counts(&v).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a.min <= a.median && a.median <= a.max);
            prop_assert!(a.stddev >= 0.0);
            let all_equal = v.iter().all(|&x| x == v[0]);
            prop_assert_eq!(a.stddev == 0.0, all_equal);
        }

        #[test]
        fn cdf_is_monotone(v in prop::collection::vec(0u64..500, 1..40), mut t in prop::collection::vec(0u64..600, 1..20)) {
            t.sort_unstable();
            let pts = cdf_of_counts(&v, &t).unwrap();
            for w in pts.windows(2) {
                prop_assert!(w[0].fraction <= w[1].fraction);
            }
            if t.last().copied().unwrap() >= *v.iter().max().unwrap() {
                prop_assert_eq!(pts.last().unwrap().fraction, 1.0);
            }
        }
    }
}
