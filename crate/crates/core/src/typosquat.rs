//! Lexically similar publisher and image names.
//!
//! Distances are optimal string alignment (Damerau-Levenshtein restricted
//! so that no substring is edited twice). OSA is not a metric, so the
//! BK-tree index is keyed on plain Levenshtein and candidates are verified
//! with OSA. Since one transposition costs two Levenshtein edits,
//! `osa <= lev <= 2 * osa`, and a search radius of `2k` finds every pair
//! with OSA at most `k`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{AttackVector, ComponentRef, Finding, Repository, Severity};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TyposquatError {
    #[error("need at least two names of one kind to form a pair")]
    EmptyInput,
    #[error("max distance must be positive")]
    ZeroDistance,
}

/// Restricted Damerau-Levenshtein (optimal string alignment) distance over
/// Unicode scalar values.
pub fn dl_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    osa_chars(&a, &b)
}

fn osa_chars(a: &[char], b: &[char]) -> usize {
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return n.max(m);
    }
    // three rolling rows: i-2, i-1, i
    let mut prev2 = vec![0usize; m + 1];
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; m + 1];
    for i in 1..=n {
        cur[0] = i;
        for j in 1..=m {
            let cost = usize::from(a[i - 1] != b[j - 1]);
            let mut d = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
            if i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1] {
                d = d.min(prev2[j - 2] + 1);
            }
            cur[j] = d;
        }
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// Plain Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    lev_chars(&a, &b)
}

fn lev_chars(a: &[char], b: &[char]) -> usize {
    if a.is_empty() || b.is_empty() {
        return a.len().max(b.len());
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            cur[j + 1] = (prev[j + 1] + 1).min(cur[j] + 1).min(prev[j] + usize::from(ca != cb));
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Burkhard-Keller tree over Levenshtein distance.
#[derive(Debug, Clone, Default)]
pub struct BkTree {
    items: Vec<Vec<char>>,
    children: Vec<BTreeMap<usize, usize>>,
}

impl BkTree {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `item` and returns its index. Duplicates get their own index.
    pub fn insert(&mut self, item: &str) -> usize {
        let chars: Vec<char> = item.chars().collect();
        let idx = self.items.len();
        if idx > 0 {
            let mut node = 0;
            loop {
                let d = lev_chars(&self.items[node], &chars);
                match self.children[node].get(&d) {
                    Some(&next) => node = next,
                    None => {
                        self.children[node].insert(d, idx);
                        break;
                    }
                }
            }
        }
        self.items.push(chars);
        self.children.push(BTreeMap::new());
        idx
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Indices of items within Levenshtein `radius` of `query`, ascending.
    pub fn within(&self, query: &str, radius: usize) -> Vec<(usize, usize)> {
        let q: Vec<char> = query.chars().collect();
        let mut out = Vec::new();
        if self.items.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            let d = lev_chars(&self.items[node], &q);
            if d <= radius {
                out.push((node, d));
            }
            let lo = d.saturating_sub(radius);
            let hi = d + radius;
            stack.extend(self.children[node].range(lo..=hi).map(|(_, &c)| c));
        }
        out.sort_unstable();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NameKind {
    Username,
    ImageName,
}

impl fmt::Display for NameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NameKind::Username => "username",
            NameKind::ImageName => "image",
        })
    }
}

impl std::str::FromStr for NameKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "username" | "user" | "publisher" => Ok(NameKind::Username),
            "image" | "image-name" | "imagename" | "name" => Ok(NameKind::ImageName),
            _ => Err(format!("unknown name kind `{s}` (expected username or image)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizeConfig {
    pub lowercase: bool,
    /// Drop registry host, namespace and tag from image names.
    pub strip_namespace: bool,
    pub include_aws_sar: bool,
}

impl Default for NormalizeConfig {
    fn default() -> Self {
        NormalizeConfig {
            lowercase: true,
            strip_namespace: true,
            include_aws_sar: false,
        }
    }
}

pub fn normalize_name(raw: &str, kind: NameKind, cfg: &NormalizeConfig) -> String {
    let mut s = raw.trim();
    if kind == NameKind::ImageName && cfg.strip_namespace {
        s = s.split('@').next().unwrap_or(s);
        s = s.rsplit('/').next().unwrap_or(s);
        s = s.split(':').next().unwrap_or(s);
    }
    if kind == NameKind::Username {
        s = s.trim_start_matches('@');
    }
    if cfg.lowercase {
        s.to_lowercase()
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NameRecord {
    pub name: String,
    pub kind: NameKind,
    pub owner: ComponentRef,
}

impl NameRecord {
    /// `None` when the name is empty after normalization.
    pub fn new(raw: &str, kind: NameKind, owner: ComponentRef, cfg: &NormalizeConfig) -> Option<Self> {
        let name = normalize_name(raw, kind, cfg);
        (!name.is_empty()).then_some(NameRecord { name, kind, owner })
    }

    /// Identity used to drop repeated records: a username belongs to a
    /// publisher on one repository, an image name to one component.
    fn owner_key(&self) -> (Repository, &str, &str) {
        match self.kind {
            NameKind::Username => (self.owner.repository, self.owner.publisher.as_str(), ""),
            NameKind::ImageName => (self.owner.repository, self.owner.publisher.as_str(), self.owner.name.as_str()),
        }
    }
}

/// Username and image-name records for every component, one per distinct
/// owner. Components from AWS SAR are skipped unless configured otherwise.
pub fn records_from_components<'a, I>(components: I, cfg: &NormalizeConfig) -> Vec<NameRecord>
where
    I: IntoIterator<Item = &'a ComponentRef>,
{
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for c in components {
        if c.repository == Repository::AwsSar && !cfg.include_aws_sar {
            continue;
        }
        for (raw, kind) in [(&c.publisher, NameKind::Username), (&c.name, NameKind::ImageName)] {
            let Some(rec) = NameRecord::new(raw, kind, c.clone(), cfg) else { continue };
            let (repo, publisher, name) = rec.owner_key();
            let key = (rec.kind, rec.name.clone(), repo, publisher.to_string(), name.to_string());
            if seen.insert(key) {
                out.push(rec);
            }
        }
    }
    out.sort();
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NearPair {
    pub a: NameRecord,
    pub b: NameRecord,
    pub distance: usize,
}

impl NearPair {
    fn new(x: &NameRecord, y: &NameRecord, distance: usize) -> Self {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        NearPair {
            a: a.clone(),
            b: b.clone(),
            distance,
        }
    }

    fn sort_key(&self) -> (usize, &str, &str, &NameRecord, &NameRecord) {
        (self.distance, &self.a.name, &self.b.name, &self.a, &self.b)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSearch {
    /// Pairs with `1 <= distance <= max_distance`.
    pub pairs: Vec<NearPair>,
    /// Identical names held by different owners (distance 0).
    pub collisions: Vec<NearPair>,
    /// Unordered same-kind record pairs examined in total.
    pub total_pairs: u64,
}

/// Every same-kind pair of records within `max_distance`, canonically
/// sorted by distance then names. Identical names are reported separately
/// as collisions.
pub fn find_near_pairs(records: &[NameRecord], max_distance: usize) -> Result<PairSearch, TyposquatError> {
    if max_distance == 0 {
        return Err(TyposquatError::ZeroDistance);
    }
    let mut out = PairSearch::default();
    let mut by_kind: BTreeMap<NameKind, BTreeMap<&str, Vec<&NameRecord>>> = BTreeMap::new();
    for r in records {
        by_kind.entry(r.kind).or_default().entry(r.name.as_str()).or_default().push(r);
    }
    for names in by_kind.values() {
        let n: u64 = names.values().map(|v| v.len() as u64).sum();
        out.total_pairs += n * n.saturating_sub(1) / 2;

        let distinct: Vec<(&str, &Vec<&NameRecord>)> = names.iter().map(|(k, v)| (*k, v)).collect();
        for (_, recs) in &distinct {
            for (i, x) in recs.iter().enumerate() {
                for y in &recs[i + 1..] {
                    out.collisions.push(NearPair::new(x, y, 0));
                }
            }
        }

        let mut tree = BkTree::new();
        for (name, _) in &distinct {
            tree.insert(name);
        }
        let chars: Vec<Vec<char>> = distinct.iter().map(|(n, _)| n.chars().collect()).collect();
        for (i, (name, recs)) in distinct.iter().enumerate() {
            for (j, _) in tree.within(name, 2 * max_distance) {
                if j <= i || chars[i].len().abs_diff(chars[j].len()) > max_distance {
                    continue;
                }
                let d = osa_chars(&chars[i], &chars[j]);
                if d == 0 || d > max_distance {
                    continue;
                }
                for x in recs.iter() {
                    for y in distinct[j].1.iter() {
                        out.pairs.push(NearPair::new(x, y, d));
                    }
                }
            }
        }
    }
    out.pairs.sort_by(|p, q| p.sort_key().cmp(&q.sort_key()));
    out.collisions.sort_by(|p, q| p.sort_key().cmp(&q.sort_key()));
    Ok(out)
}

/// Reference implementation: the plain double loop.
pub fn find_near_pairs_brute(records: &[NameRecord], max_distance: usize) -> Vec<NearPair> {
    let mut out = Vec::new();
    for (i, x) in records.iter().enumerate() {
        for y in &records[i + 1..] {
            if x.kind != y.kind {
                continue;
            }
            let d = dl_distance(&x.name, &y.name);
            if (1..=max_distance).contains(&d) {
                out.push(NearPair::new(x, y, d));
            }
        }
    }
    out.sort_by(|p, q| p.sort_key().cmp(&q.sort_key()));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistancePoint {
    pub distance: usize,
    pub fraction: f64,
}

/// For `d = 0..=max_distance`, the fraction of same-kind record pairs whose
/// distance is at most `d`.
pub fn distance_cdf(records: &[NameRecord], max_distance: usize) -> Result<Vec<DistancePoint>, TyposquatError> {
    let search = find_near_pairs(records, max_distance.max(1))?;
    if search.total_pairs == 0 {
        return Err(TyposquatError::EmptyInput);
    }
    let mut at = vec![0u64; max_distance.max(1) + 1];
    at[0] = search.collisions.len() as u64;
    for p in &search.pairs {
        at[p.distance] += 1;
    }
    let mut running = 0;
    Ok((0..=max_distance)
        .map(|d| {
            running += at[d];
            DistancePoint {
                distance: d,
                fraction: running as f64 / search.total_pairs as f64,
            }
        })
        .collect())
}

/// One finding per owner of each pair: the pair is reported, never judged.
pub fn typosquat_findings(search: &PairSearch) -> Vec<Finding> {
    let mut out = Vec::new();
    let mut emit = |p: &NearPair, rule: &str| {
        for (me, other) in [(&p.a, &p.b), (&p.b, &p.a)] {
            out.push(Finding {
                rule_id: rule.to_string(),
                vector: AttackVector::V5,
                severity: Severity::Low,
                component: me.owner.clone(),
                location: format!("{}:{}", me.kind, me.name),
                evidence: format!(
                    "{} `{}` is at distance {} from `{}` ({})",
                    me.kind, me.name, p.distance, other.name, other.owner
                ),
                remediation: "Check that consumers fetch the intended publisher and name.".into(),
            });
        }
    };
    for p in &search.pairs {
        let rule = match p.a.kind {
            NameKind::Username => "TYPO-NEAR-USERNAME",
            NameKind::ImageName => "TYPO-NEAR-IMAGE",
        };
        emit(p, rule);
    }
    for p in &search.collisions {
        let rule = match p.a.kind {
            NameKind::Username => "TYPO-COLLISION-USERNAME",
            NameKind::ImageName => "TYPO-COLLISION-IMAGE",
        };
        emit(p, rule);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn owner(publisher: &str, name: &str) -> ComponentRef {
        ComponentRef::new(Repository::DockerHub, publisher, name, None).unwrap()
    }

    fn img(name: &str, publisher: &str) -> NameRecord {
        NameRecord::new(name, NameKind::ImageName, owner(publisher, name), &NormalizeConfig::default()).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(dl_distance("lodash", "lodash"), 0);
        assert_eq!(dl_distance("lodash", "lodahs"), 1);
        assert_eq!(dl_distance("ca", "abc"), 3);
        assert_eq!(levenshtein("ca", "abc"), 3);
        assert_eq!(dl_distance("", "abc"), 3);
        assert_eq!(dl_distance("ab", "ba"), 1);
        assert_eq!(levenshtein("ab", "ba"), 2);
        assert_eq!(dl_distance("héllo", "hlélo"), 1);
    }

    #[test]
    fn near_pair_examples() {
        let recs = vec![img("serverless-app", "a"), img("serverless-apps", "b"), img("redis", "c")];
        let s = find_near_pairs(&recs, 1).unwrap();
        assert_eq!(s.pairs.len(), 1);
        assert_eq!(s.pairs[0].distance, 1);
        assert!(find_near_pairs(&recs[..1], 1).unwrap().pairs.is_empty());

        let dup = vec![img("redis", "a"), img("redis", "b")];
        let s = find_near_pairs(&dup, 1).unwrap();
        assert!(s.pairs.is_empty());
        assert_eq!(s.collisions.len(), 1);
        assert_eq!(s.collisions[0].distance, 0);
    }

    #[test]
    fn cdf_examples() {
        let recs = vec![img("ab", "p"), img("ba", "q"), img("zz", "r")];
        let cdf = distance_cdf(&recs, 2).unwrap();
        assert_eq!(cdf[0].fraction, 0.0);
        assert!((cdf[1].fraction - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(cdf[2].fraction, 1.0);

        let far = vec![img("aaaaa", "p"), img("bbbbb", "q"), img("ccccc", "r")];
        let cdf = distance_cdf(&far, 1).unwrap();
        assert_eq!(cdf.iter().map(|p| p.fraction).collect::<Vec<_>>(), vec![0.0, 0.0]);

        assert_eq!(distance_cdf(&recs[..1], 1), Err(TyposquatError::EmptyInput));
    }

    #[test]
    fn normalization() {
        let cfg = NormalizeConfig::default();
        assert_eq!(normalize_name("Docker.io/Library/Redis:7", NameKind::ImageName, &cfg), "redis");
        assert_eq!(normalize_name("quay.io/org/app@sha256:ab", NameKind::ImageName, &cfg), "app");
        assert_eq!(normalize_name("@Alice", NameKind::Username, &cfg), "alice");
        assert!(NameRecord::new("  ", NameKind::Username, owner("p", "n"), &cfg).is_none());
    }

    #[test]
    fn records_skip_sar_and_dedupe() {
        let comps = vec![
            owner("alice", "app1"),
            owner("alice", "app2"),
            ComponentRef::new(Repository::AwsSar, "alicf", "app3", None).unwrap(),
        ];
        let recs = records_from_components(&comps, &NormalizeConfig::default());
        let users: Vec<_> = recs.iter().filter(|r| r.kind == NameKind::Username).collect();
        assert_eq!(users.len(), 1);
        assert_eq!(recs.len(), 3);
        let cfg = NormalizeConfig {
            include_aws_sar: true,
            ..Default::default()
        };
        assert_eq!(records_from_components(&comps, &cfg).len(), 5);
    }

    #[test]
    fn findings_for_both_owners() {
        let recs = vec![img("serverless-app", "a"), img("serverless-apps", "b")];
        let f = typosquat_findings(&find_near_pairs(&recs, 1).unwrap());
        assert_eq!(f.len(), 2);
        assert!(f.iter().all(|f| f.vector == AttackVector::V5));
        assert_ne!(f[0].component, f[1].component);
    }

    proptest! {
        #[test]
        fn distance_properties(a in "[abc]{0,7}", b in "[abc]{0,7}") {
            let d = dl_distance(&a, &b);
            prop_assert_eq!(d, dl_distance(&b, &a));
            prop_assert_eq!(dl_distance(&a, &a), 0);
            prop_assert!(d <= a.chars().count().max(b.chars().count()));
            let lev = levenshtein(&a, &b);
            prop_assert!(d <= lev);
            prop_assert!(lev <= 2 * d);
            prop_assert!(a.len().abs_diff(b.len()) <= d);
        }

        #[test]
        fn bk_tree_matches_scan(names in proptest::collection::vec("[ab]{0,5}", 0..40), q in "[ab]{0,5}", r in 0usize..4) {
            let mut t = BkTree::new();
            for n in &names { t.insert(n); }
            let got: Vec<usize> = t.within(&q, r).into_iter().map(|(i, _)| i).collect();
            let want: Vec<usize> = names.iter().enumerate().filter(|(_, n)| levenshtein(n, &q) <= r).map(|(i, _)| i).collect();
            prop_assert_eq!(got, want);
        }

        #[test]
        fn index_matches_brute(names in proptest::collection::vec(("[abcd]{1,6}", "[pq]"), 0..60), k in 1usize..3) {
            let recs: Vec<NameRecord> = names.iter().map(|(n, p)| img(n, p)).collect::<BTreeSet<_>>().into_iter().collect();
            let got = find_near_pairs(&recs, k).unwrap();
            prop_assert_eq!(got.pairs, find_near_pairs_brute(&recs, k));
        }
    }
}
