//! Infrastructure-as-code templates: classification, parsing and a
//! misconfiguration rule engine for Terraform, CloudFormation and SAM.

mod cfn;
mod cors;
mod hcl;
mod model;
mod rules;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::model::{AttackVector, ComponentRef, Finding, Severity, SeverityHistogram};

pub use cfn::SAM_TRANSFORM;
pub use cors::{check_cors_wildcard, CorsCheck};
pub use model::{resolve, IaCFramework, Parameter, PropValue, ResourceNode, Resolved, SourceSpan, TemplateModel};
pub use rules::{
    run_rules, Check, MisconfigRule, Predicate, RuleCatalog, RuleRun, Truth, BUILTIN_CORS, DEFAULT_CATALOG,
};

#[derive(Debug, thiserror::Error)]
pub enum IacError {
    #[error("unsupported template extension `{0}` (expected .tf, .json, .yaml or .yml)")]
    UnsupportedExtension(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("rule catalog: {0}")]
    Catalog(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub const TEMPLATE_EXTENSIONS: [&str; 4] = ["tf", "json", "yaml", "yml"];

fn extension(path: &str) -> String {
    Path::new(path)
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub framework: IaCFramework,
    /// Set when the document did not parse and the Transform directive was
    /// looked up textually.
    pub notice: Option<String>,
}

/// `.tf` is Terraform; structured documents are SAM when a top-level
/// Transform names the serverless transform, CloudFormation otherwise.
pub fn classify_template(path: &str, contents: &str) -> Result<Classification, IacError> {
    match extension(path).as_str() {
        "tf" => Ok(Classification {
            framework: IaCFramework::Terraform,
            notice: None,
        }),
        "json" | "yaml" | "yml" => match cfn::parse_document(contents) {
            Ok(doc) => Ok(Classification {
                framework: cfn::classify_document(&doc),
                notice: None,
            }),
            Err(e) => {
                let framework = if cfn::textual_sam(contents) {
                    IaCFramework::Sam
                } else {
                    IaCFramework::CloudFormation
                };
                Ok(Classification {
                    framework,
                    notice: Some(format!("{path}: {e}; classified as {framework} from text")),
                })
            }
        },
        other => Err(IacError::UnsupportedExtension(other.to_string())),
    }
}

/// Parses a classified template. `file` labels source spans.
pub fn parse_template(file: &str, contents: &str, framework: IaCFramework) -> Result<TemplateModel, IacError> {
    match framework {
        IaCFramework::Terraform => hcl::parse_terraform(file, contents),
        fw => cfn::parse_cfn(file, contents, fw),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IacFinding {
    pub rule_id: String,
    pub framework: IaCFramework,
    pub severity: Severity,
    pub logical_id: String,
    pub resource_type: String,
    pub span: SourceSpan,
    pub message: String,
}

impl IacFinding {
    pub fn to_finding(&self, component: &ComponentRef, catalog: &RuleCatalog) -> Finding {
        Finding {
            rule_id: self.rule_id.clone(),
            vector: AttackVector::V4,
            severity: self.severity,
            component: component.clone(),
            location: format!("{}:{}-{}", self.span.file, self.span.start_line, self.span.end_line),
            evidence: format!("[{}] {}", self.framework, self.message),
            remediation: catalog
                .get(&self.rule_id)
                .map(|r| r.remediation.clone())
                .unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TemplateLint {
    pub framework: IaCFramework,
    pub model: TemplateModel,
    pub findings: Vec<IacFinding>,
    pub notices: Vec<String>,
}

/// Classifies, parses and lints one template.
pub fn lint_template(file: &str, contents: &str, catalog: &RuleCatalog) -> Result<TemplateLint, IacError> {
    let class = classify_template(file, contents)?;
    let model = parse_template(file, contents, class.framework)?;
    let run = run_rules(&model, catalog);
    let mut notices: Vec<String> = class.notice.into_iter().collect();
    notices.extend(run.notices);
    Ok(TemplateLint {
        framework: class.framework,
        model,
        findings: run.findings,
        notices,
    })
}

#[derive(Debug, Clone, Default)]
pub struct DirLint {
    /// Every template file seen, relative label → framework.
    pub templates: BTreeMap<String, IaCFramework>,
    pub findings: Vec<IacFinding>,
    pub notices: Vec<String>,
}

fn merge_models(models: Vec<TemplateModel>) -> Option<TemplateModel> {
    let mut it = models.into_iter();
    let mut base = it.next()?;
    for m in it {
        base.parameters.extend(m.parameters);
        base.resources.extend(m.resources);
        base.line_count = base.line_count.max(m.line_count);
    }
    Some(base)
}

/// Lints every template under `root`. Terraform files in one directory form
/// one module and are evaluated together, so references across files
/// resolve. Span files are `<label_prefix>/<relative path>`.
pub fn lint_dir(root: &Path, label_prefix: &str, catalog: &RuleCatalog) -> Result<DirLint, IacError> {
    let mut out = DirLint::default();
    if !root.is_dir() {
        return Ok(out);
    }
    let mut tf_groups: BTreeMap<String, Vec<TemplateModel>> = BTreeMap::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| IacError::Io {
            path: root.display().to_string(),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walk stays under root")
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if !TEMPLATE_EXTENSIONS.contains(&extension(&rel).as_str()) {
            continue;
        }
        let label = if label_prefix.is_empty() {
            rel.clone()
        } else {
            format!("{}/{rel}", label_prefix.trim_end_matches('/'))
        };
        let contents = match std::fs::read_to_string(entry.path()) {
            Ok(c) => c,
            Err(e) => {
                out.notices.push(format!("{label}: unreadable: {e}"));
                continue;
            }
        };
        let class = classify_template(&label, &contents)?;
        out.templates.insert(label.clone(), class.framework);
        out.notices.extend(class.notice);
        let model = match parse_template(&label, &contents, class.framework) {
            Ok(m) => m,
            Err(e) => {
                out.notices.push(format!("{label}: {e}"));
                continue;
            }
        };
        if class.framework == IaCFramework::Terraform {
            let dir = rel.rsplit_once('/').map(|(d, _)| d.to_string()).unwrap_or_default();
            tf_groups.entry(dir).or_default().push(model);
        } else {
            let run = run_rules(&model, catalog);
            out.findings.extend(run.findings);
            out.notices.extend(run.notices);
        }
    }
    for (_, models) in tf_groups {
        if let Some(model) = merge_models(models) {
            let run = run_rules(&model, catalog);
            out.findings.extend(run.findings);
            out.notices.extend(run.notices);
        }
    }
    rules::sort_findings(&mut out.findings);
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IacHistogram {
    pub total: SeverityHistogram,
    pub by_framework: BTreeMap<IaCFramework, SeverityHistogram>,
}

/// Counts by severity, overall and per framework; every framework appears.
pub fn severity_histogram(findings: &[IacFinding]) -> IacHistogram {
    let mut h = IacHistogram {
        total: SeverityHistogram::default(),
        by_framework: IaCFramework::ALL.iter().map(|f| (*f, SeverityHistogram::default())).collect(),
    };
    for f in findings {
        h.total.add(f.severity);
        h.by_framework.entry(f.framework).or_default().add(f.severity);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleFrequency {
    pub rule_id: String,
    pub count: u64,
    /// Share of all findings.
    pub pct_of_findings: f64,
    /// Share of templates with at least one finding of this rule.
    pub pct_of_templates: f64,
}

/// Per-rule frequencies under both denominators, most frequent first.
pub fn rule_frequencies(findings: &[IacFinding], template_count: usize) -> Vec<RuleFrequency> {
    let mut per_rule: BTreeMap<&str, (u64, std::collections::BTreeSet<&str>)> = BTreeMap::new();
    for f in findings {
        let e = per_rule.entry(&f.rule_id).or_default();
        e.0 += 1;
        e.1.insert(&f.span.file);
    }
    let pct = |n: f64, d: usize| if d == 0 { 0.0 } else { 100.0 * n / d as f64 };
    let mut out: Vec<RuleFrequency> = per_rule
        .into_iter()
        .map(|(id, (count, files))| RuleFrequency {
            rule_id: id.to_string(),
            count,
            pct_of_findings: pct(count as f64, findings.len()),
            pct_of_templates: pct(files.len() as f64, template_count),
        })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.rule_id.cmp(&b.rule_id)));
    out
}

pub fn iac_findings(component: &ComponentRef, findings: &[IacFinding], catalog: &RuleCatalog) -> Vec<Finding> {
    findings.iter().map(|f| f.to_finding(component, catalog)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lint(file: &str, src: &str) -> TemplateLint {
        lint_template(file, src, &RuleCatalog::default()).unwrap()
    }

    fn ids(l: &TemplateLint, rule: &str) -> Vec<(String, Severity)> {
        l.findings
            .iter()
            .filter(|f| f.rule_id == rule)
            .map(|f| (f.logical_id.clone(), f.severity))
            .collect()
    }

    const CORS_SAM: &str = "\
Transform: AWS::Serverless-2016-10-31
Parameters:
  CorsOrigin:
    Type: String
    Default: '*'
Resources:
  Api:
    Type: AWS::Serverless::Api
    Properties:
      StageName: prod
      AccessLogSetting:
        DestinationArn: arn:aws:logs:us-east-1:1:log-group:x
      Cors:
        AllowOrigin: !Ref CorsOrigin
";

    #[test]
    fn classification() {
        let c = |p, s| classify_template(p, s).unwrap().framework;
        assert_eq!(c("main.tf", ""), IaCFramework::Terraform);
        assert_eq!(c("t.yaml", CORS_SAM), IaCFramework::Sam);
        assert_eq!(c("t.json", r#"{"Resources": {}}"#), IaCFramework::CloudFormation);
        assert_eq!(
            c("t.json", r#"{"Transform": ["AWS::LanguageExtensions", "AWS::Serverless-2016-10-31"]}"#),
            IaCFramework::Sam
        );
        assert!(matches!(classify_template("x.txt", ""), Err(IacError::UnsupportedExtension(_))));
        let broken = classify_template("t.yaml", "Transform: AWS::Serverless-2016-10-31\nResources: [\n").unwrap();
        assert_eq!(broken.framework, IaCFramework::Sam);
        assert!(broken.notice.is_some());
    }

    #[test]
    fn cors_unauthenticated_is_high() {
        let l = lint("t.yaml", CORS_SAM);
        assert_eq!(ids(&l, "IAC-API-CORS-WILDCARD"), vec![("CorsOrigin".to_string(), Severity::High)]);
    }

    #[test]
    fn cors_with_authorizer_is_low() {
        let src = format!("{CORS_SAM}      Auth:\n        DefaultAuthorizer: Cognito\n        Authorizers:\n          Cognito:\n            UserPoolArn: arn:aws:cognito-idp:x\n");
        let l = lint("t.yaml", &src);
        assert_eq!(ids(&l, "IAC-API-CORS-WILDCARD"), vec![("CorsOrigin".to_string(), Severity::Low)]);
    }

    #[test]
    fn cors_explicit_none_is_unauthenticated() {
        let src = format!("{CORS_SAM}      Auth:\n        DefaultAuthorizer: NONE\n");
        let l = lint("t.yaml", &src);
        assert_eq!(ids(&l, "IAC-API-CORS-WILDCARD")[0].1, Severity::High);
    }

    #[test]
    fn cors_specific_origin_is_clean() {
        let l = lint("t.yaml", &CORS_SAM.replace("'*'", "'https://example.com'"));
        assert!(ids(&l, "IAC-API-CORS-WILDCARD").is_empty());
    }

    #[test]
    fn cors_through_method_and_authorizer_resources() {
        let src = r#"{
  "Parameters": {"CorsOrigin": {"Type": "String", "Default": "*"}},
  "Resources": {
    "Api": {"Type": "AWS::ApiGateway::RestApi", "Properties": {"Name": "a"}},
    "Options": {
      "Type": "AWS::ApiGateway::Method",
      "Properties": {
        "RestApiId": {"Ref": "Api"},
        "HttpMethod": "OPTIONS",
        "AuthorizationType": "NONE",
        "Integration": {"IntegrationResponses": [{"ResponseParameters": {
          "method.response.header.Access-Control-Allow-Origin": {"Fn::Sub": "'${CorsOrigin}'"}}}]}
      }
    }
  }
}"#;
        let l = lint("t.json", src);
        assert_eq!(ids(&l, "IAC-API-CORS-WILDCARD"), vec![("CorsOrigin".to_string(), Severity::High)]);

        let with_auth = src.replace(
            "\"Options\": {",
            "\"Auth\": {\"Type\": \"AWS::ApiGateway::Authorizer\", \"Properties\": {\"RestApiId\": {\"Ref\": \"Api\"}, \"Type\": \"COGNITO_USER_POOLS\"}},\n    \"Options\": {",
        );
        let l = lint("t.json", &with_auth);
        assert_eq!(ids(&l, "IAC-API-CORS-WILDCARD"), vec![("CorsOrigin".to_string(), Severity::Low)]);
    }

    #[test]
    fn cors_terraform_inline() {
        let src = r#"
resource "aws_apigatewayv2_api" "http" {
  name          = "h"
  protocol_type = "HTTP"
  cors_configuration {
    allow_origins = ["*"]
  }
}

resource "aws_apigatewayv2_route" "r" {
  api_id             = aws_apigatewayv2_api.http.id
  route_key          = "GET /"
  authorization_type = "JWT"
  authorizer_id      = aws_apigatewayv2_authorizer.jwt.id
}
"#;
        let l = lint("main.tf", src);
        assert_eq!(
            ids(&l, "IAC-API-CORS-WILDCARD"),
            vec![("aws_apigatewayv2_api.http".to_string(), Severity::Low)]
        );
        let open = src.replace("\"JWT\"", "\"NONE\"").replace("  authorizer_id      = aws_apigatewayv2_authorizer.jwt.id\n", "");
        let l = lint("main.tf", &open);
        assert_eq!(ids(&l, "IAC-API-CORS-WILDCARD")[0].1, Severity::High);
    }

    #[test]
    fn cors_sam_implicit_api_via_globals() {
        let src = "\
Transform: AWS::Serverless-2016-10-31
Globals:
  Api:
    Cors:
      AllowOrigin: \"'*'\"
Resources:
  Fn:
    Type: AWS::Serverless::Function
    Properties:
      Handler: app.handler
      Events:
        Get:
          Type: Api
          Properties:
            Path: /
            Method: get
";
        let l = lint("t.yaml", src);
        let f: Vec<_> = l.findings.iter().filter(|f| f.rule_id == "IAC-API-CORS-WILDCARD").collect();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].severity, Severity::High);
        assert_eq!(f[0].logical_id, "Globals");
        assert_eq!((f[0].span.start_line, f[0].span.end_line), (2, 5));
    }

    #[test]
    fn arn_and_kms_rules() {
        let src = "\
Resources:
  Perm:
    Type: AWS::Lambda::Permission
    Properties:
      Action: lambda:InvokeFunction
      FunctionName: f
      Principal: s3.amazonaws.com
  Bucket:
    Type: AWS::S3::Bucket
    Properties:
      BucketEncryption:
        ServerSideEncryptionConfiguration:
          - ServerSideEncryptionByDefault:
              SSEAlgorithm: aws:kms
";
        let l = lint("t.yaml", src);
        assert_eq!(ids(&l, "IAC-LAMBDA-PERMISSION-SOURCE-ARN").len(), 1);
        assert_eq!(ids(&l, "IAC-S3-CUSTOMER-KMS-KEY"), vec![("Bucket".to_string(), Severity::Medium)]);

        let fixed = src.replace("      Principal:", "      SourceArn: arn:aws:s3:::b\n      Principal:")
            + "              KMSMasterKeyID: !Ref Key\n";
        let l = lint("t.yaml", &fixed);
        assert!(ids(&l, "IAC-LAMBDA-PERMISSION-SOURCE-ARN").is_empty());
        assert!(ids(&l, "IAC-S3-CUSTOMER-KMS-KEY").is_empty());
    }

    #[test]
    fn rules_respect_frameworks() {
        let mut catalog = RuleCatalog::default();
        for r in &mut catalog.rules {
            r.frameworks.remove(&IaCFramework::CloudFormation);
        }
        let l = lint_template(
            "t.yaml",
            "Resources:\n  P:\n    Type: AWS::Lambda::Permission\n    Properties: {}\n",
            &catalog,
        )
        .unwrap();
        assert!(l.findings.is_empty());
    }

    #[test]
    fn undetermined_is_a_notice() {
        let src = "Resources:\n  B:\n    Type: AWS::S3::Bucket\n    Properties:\n      BucketEncryption: !If [c, x, y]\n";
        let l = lint("t.yaml", src);
        assert!(ids(&l, "IAC-S3-CUSTOMER-KMS-KEY").is_empty());
        assert!(l.notices.iter().any(|n| n.contains("undetermined")));
    }

    #[test]
    fn histogram_and_frequencies() {
        let h = severity_histogram(&[]);
        assert_eq!(h.total.total(), 0);
        assert_eq!(h.by_framework.len(), 3);

        let mk = |fw, sev, rule: &str, file: &str| IacFinding {
            rule_id: rule.into(),
            framework: fw,
            severity: sev,
            logical_id: "x".into(),
            resource_type: "t".into(),
            span: SourceSpan {
                file: file.into(),
                start_line: 1,
                end_line: 1,
            },
            message: String::new(),
        };
        let fs = vec![
            mk(IaCFramework::Sam, Severity::High, "A", "a.yaml"),
            mk(IaCFramework::Terraform, Severity::High, "A", "b.tf"),
            mk(IaCFramework::Terraform, Severity::Medium, "B", "b.tf"),
        ];
        let h = severity_histogram(&fs);
        assert_eq!(h.total.high, 2);
        assert_eq!(h.total.medium, 1);
        let sum: u64 = h.by_framework.values().map(|x| x.total()).sum();
        assert_eq!(sum, 3);

        let freq = rule_frequencies(&fs, 4);
        assert_eq!(freq[0].rule_id, "A");
        assert!((freq[0].pct_of_findings - 200.0 / 3.0).abs() < 1e-9);
        assert!((freq[0].pct_of_templates - 50.0).abs() < 1e-9);
    }

    #[test]
    fn directory_merges_terraform_modules() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("vars.tf"),
            "variable \"cors_origin\" {\n  default = \"*\"\n}\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("api.tf"),
            "resource \"aws_api_gateway_rest_api\" \"api\" {\n  name = \"x\"\n}\n\nresource \"aws_api_gateway_integration_response\" \"ir\" {\n  rest_api_id = aws_api_gateway_rest_api.api.id\n  response_parameters = {\n    \"method.response.header.Access-Control-Allow-Origin\" = var.cors_origin\n  }\n}\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let out = lint_dir(dir.path(), "iac", &RuleCatalog::default()).unwrap();
        assert_eq!(out.templates.len(), 2);
        let cors: Vec<_> = out.findings.iter().filter(|f| f.rule_id == "IAC-API-CORS-WILDCARD").collect();
        assert_eq!(cors.len(), 1);
        assert_eq!(cors[0].severity, Severity::High);
        assert_eq!(cors[0].span.file, "iac/vars.tf");
    }
}
