//! CloudFormation and SAM templates (JSON or YAML).

use serde_yaml::Value;

use super::model::{IaCFramework, Parameter, PropValue, ResourceNode, SourceSpan, TemplateModel};
use super::IacError;

pub const SAM_TRANSFORM: &str = "AWS::Serverless-2016-10-31";

fn scalar_text(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::String(s) => out.push(s.clone()),
        Value::Number(n) => out.push(n.to_string()),
        Value::Bool(b) => out.push(b.to_string()),
        Value::Sequence(items) => items.iter().for_each(|i| scalar_text(i, out)),
        Value::Mapping(m) => m.iter().for_each(|(k, v)| {
            scalar_text(k, out);
            scalar_text(v, out);
        }),
        Value::Tagged(t) => scalar_text(&t.value, out),
        Value::Null => {}
    }
}

fn reference(function: &str, arg: &Value) -> PropValue {
    let mut parts = Vec::new();
    scalar_text(arg, &mut parts);
    let target = if function == "GetAtt" || function == "Fn::GetAtt" {
        parts.join(".")
    } else {
        parts.join(" ")
    };
    PropValue::Reference {
        function: function.trim_start_matches("Fn::").to_string(),
        target,
    }
}

fn key_string(k: &Value) -> String {
    match k {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        Value::Null => "null".into(),
        other => serde_yaml::to_string(other).unwrap_or_default().trim().to_string(),
    }
}

/// Converts a YAML node. Intrinsic functions, long form (`{"Ref": x}`,
/// `{"Fn::Sub": ...}`) or short tags (`!Ref x`), become references.
pub(crate) fn to_prop(v: &Value) -> PropValue {
    match v {
        Value::Null => PropValue::Null,
        Value::Bool(b) => PropValue::Bool(*b),
        Value::Number(n) => PropValue::Number(n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => PropValue::String(s.clone()),
        Value::Sequence(items) => PropValue::List(items.iter().map(to_prop).collect()),
        Value::Mapping(m) => {
            if m.len() == 1 {
                let (k, arg) = m.iter().next().expect("len 1");
                if let Value::String(k) = k {
                    if k == "Ref" || k.starts_with("Fn::") {
                        return reference(k, arg);
                    }
                }
            }
            PropValue::Map(m.iter().map(|(k, v)| (key_string(k), to_prop(v))).collect())
        }
        Value::Tagged(t) => {
            let tag = t.tag.to_string();
            reference(tag.trim_start_matches('!'), &t.value)
        }
    }
}

fn has_sam_transform(v: Option<&Value>) -> bool {
    match v {
        Some(Value::String(s)) => s.trim() == SAM_TRANSFORM,
        Some(Value::Sequence(items)) => items.iter().any(|i| has_sam_transform(Some(i))),
        _ => false,
    }
}

fn transforms(doc: &Value) -> Vec<String> {
    match doc.get("Transform") {
        Some(Value::String(s)) => vec![s.trim().to_string()],
        Some(Value::Sequence(items)) => items
            .iter()
            .filter_map(|i| i.as_str().map(|s| s.trim().to_string()))
            .collect(),
        _ => Vec::new(),
    }
}

pub(crate) fn parse_document(contents: &str) -> Result<Value, IacError> {
    if contents.trim().is_empty() {
        return Ok(Value::Mapping(Default::default()));
    }
    serde_yaml::from_str::<Value>(contents).map_err(|e| IacError::Parse {
        line: e.location().map(|l| l.line()).unwrap_or(0),
        message: e.to_string(),
    })
}

/// Textual fallback for documents that do not parse.
pub(crate) fn textual_sam(contents: &str) -> bool {
    let mut in_transform_list = false;
    for line in contents.lines() {
        let t = line.trim_start();
        let top = line.len() == t.len() || t.starts_with('"');
        let stripped = t.trim_start_matches('"');
        if stripped.starts_with("Transform") && (top || contents.trim_start().starts_with('{')) {
            if line.contains(SAM_TRANSFORM) {
                return true;
            }
            in_transform_list = true;
            continue;
        }
        if in_transform_list {
            if line.contains(SAM_TRANSFORM) {
                return true;
            }
            if t.starts_with('-') || t.starts_with('[') || t.starts_with('"') {
                continue;
            }
            in_transform_list = false;
        }
    }
    false
}

pub(crate) fn classify_document(doc: &Value) -> IaCFramework {
    if has_sam_transform(doc.get("Transform")) {
        IaCFramework::Sam
    } else {
        IaCFramework::CloudFormation
    }
}

/// Line numbers (1-based) where each child key of a top-level section is
/// declared, found by scanning the text. Works for block YAML and for
/// pretty-printed JSON.
fn section_key_lines(contents: &str, section: &str, keys: &[String]) -> Vec<(usize, usize)> {
    let lines: Vec<&str> = contents.lines().collect();
    let n = lines.len().max(1);
    let is_key_line = |line: &str, key: &str| {
        let t = line.trim_start().trim_start_matches(['{', ',', ' ']);
        let (quote, t) = match t.chars().next() {
            Some(q @ ('"' | '\'')) => (Some(q), &t[1..]),
            _ => (None, t),
        };
        let Some(rest) = t.strip_prefix(key) else { return false };
        let rest = match quote {
            Some(q) => match rest.strip_prefix(q) {
                Some(r) => r,
                None => return false,
            },
            None => rest,
        };
        rest.trim_start().starts_with(':')
    };
    let start = lines.iter().position(|l| is_key_line(l, section)).unwrap_or(0);
    let mut found = Vec::with_capacity(keys.len());
    let mut cursor = start;
    for key in keys {
        let at = (cursor..lines.len())
            .find(|&i| is_key_line(lines[i], key))
            .or_else(|| (start..lines.len()).find(|&i| is_key_line(lines[i], key)));
        match at {
            Some(i) => {
                found.push(i);
                cursor = i + 1;
            }
            None => found.push(start),
        }
    }
    // A declaration ends where the next sibling starts, or where the
    // indentation drops back to the section's level.
    let indent = |l: &str| l.len() - l.trim_start().len();
    let mut sorted: Vec<usize> = found.clone();
    sorted.sort_unstable();
    found
        .iter()
        .map(|&s| {
            let own = indent(lines.get(s).copied().unwrap_or(""));
            let next = sorted.iter().copied().find(|&o| o > s).unwrap_or(lines.len());
            let mut end = s;
            for (i, l) in lines.iter().enumerate().take(next).skip(s + 1) {
                if l.trim().is_empty() || l.trim_start().starts_with('#') {
                    continue;
                }
                if indent(l) <= own {
                    break;
                }
                end = i;
            }
            ((s + 1).min(n), (end + 1).min(n))
        })
        .collect()
}

fn string_keys(m: Option<&Value>) -> Vec<String> {
    match m {
        Some(Value::Mapping(m)) => m.keys().map(key_string).collect(),
        _ => Vec::new(),
    }
}

pub(crate) fn parse_cfn(file: &str, contents: &str, framework: IaCFramework) -> Result<TemplateModel, IacError> {
    let doc = parse_document(contents)?;
    if !matches!(doc, Value::Mapping(_) | Value::Null) {
        return Err(IacError::Parse {
            line: 1,
            message: "template root is not a mapping".into(),
        });
    }
    let line_count = contents.lines().count().max(1);
    let span = |(start_line, end_line): (usize, usize)| SourceSpan {
        file: file.to_string(),
        start_line,
        end_line,
    };

    let param_names = string_keys(doc.get("Parameters"));
    let param_spans = section_key_lines(contents, "Parameters", &param_names);
    let mut parameters = Vec::new();
    for (name, lines) in param_names.iter().zip(param_spans) {
        let body = doc.get("Parameters").and_then(|p| p.get(name.as_str()));
        parameters.push(Parameter {
            name: name.clone(),
            default: body.and_then(|b| b.get("Default")).map(to_prop),
            param_type: body
                .and_then(|b| b.get("Type"))
                .and_then(Value::as_str)
                .unwrap_or("String")
                .to_string(),
            source_span: span(lines),
        });
    }

    let res_ids = string_keys(doc.get("Resources"));
    let res_spans = section_key_lines(contents, "Resources", &res_ids);
    let mut resources = Vec::new();
    for (id, lines) in res_ids.iter().zip(res_spans) {
        let body = doc.get("Resources").and_then(|r| r.get(id.as_str()));
        let resource_type = body
            .and_then(|b| b.get("Type"))
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        let properties = body
            .and_then(|b| b.get("Properties"))
            .map(to_prop)
            .unwrap_or_else(PropValue::empty_map);
        resources.push(ResourceNode {
            logical_id: id.clone(),
            resource_type,
            properties,
            source_span: span(lines),
        });
    }

    let (globals, globals_span) = match (framework, doc.get("Globals")) {
        (IaCFramework::Sam, Some(g)) => {
            let lines = section_key_lines(contents, "Globals", &["Globals".to_string()])[0];
            (to_prop(g), Some(span(lines)))
        }
        _ => (PropValue::empty_map(), None),
    };

    Ok(TemplateModel {
        framework,
        parameters,
        resources,
        transforms: transforms(&doc),
        globals,
        globals_span,
        line_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAM: &str = "\
AWSTemplateFormatVersion: '2010-09-09'
Transform: AWS::Serverless-2016-10-31
Parameters:
  CorsOrigin:
    Type: String
    Default: '*'
Resources:
  Fn:
    Type: AWS::Serverless::Function
    Properties:
      Handler: index.handler
      Environment:
        Variables:
          ORIGIN: !Ref CorsOrigin

  Perm:
    Type: AWS::Lambda::Permission
    Properties:
      FunctionName: !GetAtt Fn.Arn
      Principal: apigateway.amazonaws.com
";

    #[test]
    fn parses_sam_with_spans() {
        let doc = parse_document(SAM).unwrap();
        assert_eq!(classify_document(&doc), IaCFramework::Sam);
        let m = parse_cfn("t.yaml", SAM, IaCFramework::Sam).unwrap();
        assert_eq!(m.transforms, vec![SAM_TRANSFORM.to_string()]);
        assert_eq!(m.parameters[0].default, Some(PropValue::String("*".into())));
        assert_eq!(m.parameters[0].source_span.start_line, 4);
        assert_eq!(m.parameters[0].source_span.end_line, 6);
        let ids: Vec<_> = m.resources.iter().map(|r| (r.logical_id.as_str(), r.source_span.start_line, r.source_span.end_line)).collect();
        assert_eq!(ids, vec![("Fn", 8, 14), ("Perm", 16, 20)]);
        let env = super::super::model::resolve(&m.resources[0].properties, "Environment.Variables.ORIGIN");
        assert_eq!(
            env.values[0],
            &PropValue::Reference {
                function: "Ref".into(),
                target: "CorsOrigin".into()
            }
        );
        let arn = m.resources[1].properties.get("FunctionName").unwrap();
        assert_eq!(arn.references(), vec!["Fn.Arn"]);
    }

    #[test]
    fn long_form_intrinsics() {
        let json = r#"{"Resources": {"B": {"Type": "AWS::S3::Bucket", "Properties": {"Name": {"Fn::Sub": "${AWS::StackName}-b"}}}}}"#;
        let m = parse_cfn("t.json", json, IaCFramework::CloudFormation).unwrap();
        assert!(m.resources[0].properties.get("Name").unwrap().is_undetermined());
        assert_eq!(m.resources[0].source_span.start_line, 1);
    }

    #[test]
    fn textual_fallback() {
        assert!(textual_sam("Transform: AWS::Serverless-2016-10-31\nResources: [unclosed"));
        assert!(textual_sam("Transform:\n  - AWS::Serverless-2016-10-31\n"));
        assert!(!textual_sam("Resources:\n  X: {Transform: AWS::Serverless-2016-10-31\n"));
    }

    #[test]
    fn syntax_error_has_line() {
        let err = parse_document("a: 1\nb: [1, 2\nc: 3\n").unwrap_err();
        match err {
            IacError::Parse { line, .. } => assert!(line >= 2),
            other => panic!("{other:?}"),
        }
    }
}
