use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IaCFramework {
    #[serde(rename = "terraform", alias = "Terraform")]
    Terraform,
    #[serde(rename = "cloudformation", alias = "CloudFormation")]
    CloudFormation,
    #[serde(rename = "sam", alias = "SAM")]
    Sam,
}

impl IaCFramework {
    pub const ALL: [IaCFramework; 3] = [IaCFramework::Terraform, IaCFramework::CloudFormation, IaCFramework::Sam];
}

impl fmt::Display for IaCFramework {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IaCFramework::Terraform => "Terraform",
            IaCFramework::CloudFormation => "CloudFormation",
            IaCFramework::Sam => "SAM",
        })
    }
}

/// Property tree. Maps keep source order; `Reference` marks intrinsic
/// functions and interpolations whose value is not known statically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PropValue {
    Null,
    Bool(bool),
    Number(f64),
    String(String),
    List(Vec<PropValue>),
    Map(Vec<(String, PropValue)>),
    Reference { function: String, target: String },
    Opaque(String),
}

impl PropValue {
    pub fn empty_map() -> Self {
        PropValue::Map(Vec::new())
    }

    pub fn get(&self, key: &str) -> Option<&PropValue> {
        match self {
            PropValue::Map(entries) => entries.iter().find(|(k, _)| k == key).map(|(_, v)| v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            PropValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_undetermined(&self) -> bool {
        matches!(self, PropValue::Reference { .. } | PropValue::Opaque(_))
    }

    /// True for null, empty strings, empty lists and empty maps.
    pub fn is_blank(&self) -> bool {
        match self {
            PropValue::Null => true,
            PropValue::String(s) => s.trim().is_empty(),
            PropValue::List(v) => v.is_empty(),
            PropValue::Map(v) => v.is_empty(),
            _ => false,
        }
    }

    /// Calls `f` on every node, parents before children, with the key under
    /// which the node appears (empty for list items and the root).
    pub fn walk<'a>(&'a self, key: &str, f: &mut dyn FnMut(&str, &'a PropValue)) {
        f(key, self);
        match self {
            PropValue::List(items) => items.iter().for_each(|v| v.walk("", f)),
            PropValue::Map(entries) => entries.iter().for_each(|(k, v)| v.walk(k, f)),
            _ => {}
        }
    }

    /// Targets of every reference in the tree.
    pub fn references(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk("", &mut |_, v| {
            if let PropValue::Reference { target, .. } = v {
                out.push(target.as_str());
            }
        });
        out
    }

    /// Shallow merge: keys of `self` win over `defaults`.
    pub fn merged_over(&self, defaults: &PropValue) -> PropValue {
        let (PropValue::Map(own), PropValue::Map(base)) = (self, defaults) else {
            return self.clone();
        };
        let mut out: Vec<(String, PropValue)> = base
            .iter()
            .filter(|(k, _)| !own.iter().any(|(o, _)| o == k))
            .cloned()
            .collect();
        out.extend(own.iter().cloned());
        PropValue::Map(out)
    }

    pub fn matches_json(&self, want: &serde_json::Value) -> bool {
        match (self, want) {
            (PropValue::String(a), serde_json::Value::String(b)) => a == b,
            (PropValue::Number(a), serde_json::Value::Number(b)) => b.as_f64() == Some(*a),
            (PropValue::Bool(a), serde_json::Value::Bool(b)) => a == b,
            (PropValue::Null, serde_json::Value::Null) => true,
            _ => false,
        }
    }

    pub fn from_json(v: &serde_json::Value) -> PropValue {
        match v {
            serde_json::Value::Null => PropValue::Null,
            serde_json::Value::Bool(b) => PropValue::Bool(*b),
            serde_json::Value::Number(n) => PropValue::Number(n.as_f64().unwrap_or(f64::NAN)),
            serde_json::Value::String(s) => PropValue::String(s.clone()),
            serde_json::Value::Array(a) => PropValue::List(a.iter().map(PropValue::from_json).collect()),
            serde_json::Value::Object(o) => {
                PropValue::Map(o.iter().map(|(k, v)| (k.clone(), PropValue::from_json(v))).collect())
            }
        }
    }
}

/// Result of following a dotted path. `blocked` is set when the path ran
/// into a reference or opaque node before its end.
#[derive(Debug, Default)]
pub struct Resolved<'a> {
    pub values: Vec<&'a PropValue>,
    pub blocked: bool,
}

/// Intrinsics that always evaluate to a string or list of strings, so a
/// deep search cannot find keys hidden behind them.
fn yields_scalar(v: &PropValue) -> bool {
    matches!(
        v,
        PropValue::Reference { function, .. }
            if matches!(function.as_str(), "Ref" | "GetAtt" | "Sub" | "Join" | "ImportValue" | "Base64" | "GetAZs" | "Split" | "Cidr")
    )
}

/// Follows `path` (dot-separated keys; `*` = any key, `**` = any depth).
/// Lists are traversed implicitly; null leaves are dropped.
pub fn resolve<'a>(root: &'a PropValue, path: &str) -> Resolved<'a> {
    let mut current = vec![root];
    let mut blocked = false;
    for seg in path.split('.').filter(|s| !s.is_empty()) {
        let mut next = Vec::new();
        let mut stack: Vec<&PropValue> = current;
        while let Some(v) = stack.pop() {
            match v {
                PropValue::List(items) if seg != "**" => stack.extend(items.iter().rev()),
                PropValue::Map(entries) => match seg {
                    "*" => next.extend(entries.iter().map(|(_, v)| v)),
                    "**" => v.walk("", &mut |key, n| {
                        if matches!(n, PropValue::Map(_)) {
                            next.push(n);
                        }
                        if n.is_undetermined() && (key.is_empty() || !yields_scalar(n)) {
                            blocked = true;
                        }
                    }),
                    key => next.extend(entries.iter().filter(|(k, _)| k == key).map(|(_, v)| v)),
                },
                PropValue::List(_) => v.walk("", &mut |_, n| {
                    if matches!(n, PropValue::Map(_)) {
                        next.push(n);
                    }
                }),
                PropValue::Reference { .. } | PropValue::Opaque(_) => blocked = true,
                _ => {}
            }
        }
        current = next;
    }
    Resolved {
        values: current.into_iter().filter(|v| !matches!(v, PropValue::Null)).collect(),
        blocked,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file: String,
    pub start_line: usize,
    pub end_line: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.start_line == self.end_line {
            write!(f, "{}:{}", self.file, self.start_line)
        } else {
            write!(f, "{}:{}-{}", self.file, self.start_line, self.end_line)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceNode {
    pub logical_id: String,
    pub resource_type: String,
    pub properties: PropValue,
    pub source_span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub default: Option<PropValue>,
    pub param_type: String,
    pub source_span: SourceSpan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateModel {
    pub framework: IaCFramework,
    pub parameters: Vec<Parameter>,
    pub resources: Vec<ResourceNode>,
    pub transforms: Vec<String>,
    /// SAM `Globals` section (empty map elsewhere).
    pub globals: PropValue,
    pub globals_span: Option<SourceSpan>,
    pub line_count: usize,
}

impl TemplateModel {
    pub fn resource(&self, logical_id: &str) -> Option<&ResourceNode> {
        self.resources.iter().find(|r| r.logical_id == logical_id)
    }

    /// Properties with SAM globals applied for serverless resource types.
    pub fn effective_properties(&self, r: &ResourceNode) -> PropValue {
        let section = match r.resource_type.as_str() {
            "AWS::Serverless::Function" => "Function",
            "AWS::Serverless::Api" => "Api",
            "AWS::Serverless::HttpApi" => "HttpApi",
            "AWS::Serverless::SimpleTable" => "SimpleTable",
            _ => return r.properties.clone(),
        };
        match self.globals.get(section) {
            Some(g) => r.properties.merged_over(g),
            None => r.properties.clone(),
        }
    }
}

/// `needle` occurs in `hay` as a whole identifier (not as part of a longer
/// name).
pub(crate) fn mentions(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    let word = |c: char| c.is_ascii_alphanumeric() || c == '_' || c == '-';
    hay.match_indices(needle).any(|(i, _)| {
        let before = hay[..i].chars().next_back();
        let after = hay[i + needle.len()..].chars().next();
        before.is_none_or(|c| !word(c)) && after.is_none_or(|c| !word(c))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(entries: Vec<(&str, PropValue)>) -> PropValue {
        PropValue::Map(entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }

    fn s(x: &str) -> PropValue {
        PropValue::String(x.into())
    }

    #[test]
    fn deep_search_blocks_only_on_object_positions() {
        let r = |f: &str| PropValue::Reference {
            function: f.into(),
            target: "X".into(),
        };
        let scalar_ref = m(vec![("RestApiId", r("Ref")), ("Path", s("/a"))]);
        assert!(!resolve(&scalar_ref, "**.Action").blocked);
        let conditional = m(vec![("Policies", r("If"))]);
        assert!(resolve(&conditional, "**.Action").blocked);
        let in_list = m(vec![("Statement", PropValue::List(vec![r("Ref")]))]);
        assert!(resolve(&in_list, "**.Action").blocked);
    }

    #[test]
    fn resolve_through_lists() {
        let root = m(vec![(
            "A",
            PropValue::List(vec![m(vec![("B", s("x"))]), m(vec![("B", s("y"))]), m(vec![("C", s("z"))])]),
        )]);
        let r = resolve(&root, "A.B");
        assert_eq!(r.values.len(), 2);
        assert!(!r.blocked);
        assert_eq!(resolve(&root, "A.*").values.len(), 3);
    }

    #[test]
    fn resolve_blocked_by_reference() {
        let root = m(vec![(
            "A",
            PropValue::Reference {
                function: "Ref".into(),
                target: "P".into(),
            },
        )]);
        let r = resolve(&root, "A.B");
        assert!(r.values.is_empty());
        assert!(r.blocked);
    }

    #[test]
    fn resolve_descendants() {
        let root = m(vec![("Policies", PropValue::List(vec![m(vec![("Statement", m(vec![("Action", s("*"))]))])]))]);
        let r = resolve(&root, "**.Action");
        assert_eq!(r.values, vec![&s("*")]);
    }

    #[test]
    fn identifier_mentions() {
        assert!(mentions("var.cors_origin", "var.cors_origin"));
        assert!(mentions("aws_api_gateway_rest_api.api.id", "aws_api_gateway_rest_api.api"));
        assert!(!mentions("CorsOriginX", "CorsOrigin"));
        assert!(mentions("${CorsOrigin}", "CorsOrigin"));
    }

    #[test]
    fn merge_prefers_own_keys() {
        let own = m(vec![("A", s("own"))]);
        let base = m(vec![("A", s("base")), ("B", s("b"))]);
        let merged = own.merged_over(&base);
        assert_eq!(merged.get("A"), Some(&s("own")));
        assert_eq!(merged.get("B"), Some(&s("b")));
    }
}
