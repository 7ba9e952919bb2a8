//! Wildcard CORS origin combined with unauthenticated APIs.
//!
//! A source is either a parameter whose name follows the CorsOrigin
//! convention with a wildcard default, or an inline allowed-origin property
//! set to a wildcard. Each source yields one finding: High when an API it
//! feeds has no authentication, Low otherwise.

use std::collections::BTreeSet;

use super::model::{mentions, IaCFramework, PropValue, SourceSpan, TemplateModel};
use super::IacFinding;
use crate::model::Severity;

const API_TYPES: &[&str] = &[
    "AWS::ApiGateway::RestApi",
    "AWS::ApiGatewayV2::Api",
    "AWS::Serverless::Api",
    "AWS::Serverless::HttpApi",
    "aws_api_gateway_rest_api",
    "aws_apigatewayv2_api",
];

const AUTHORIZER_TYPES: &[&str] = &[
    "AWS::ApiGateway::Authorizer",
    "AWS::ApiGatewayV2::Authorizer",
    "aws_api_gateway_authorizer",
    "aws_apigatewayv2_authorizer",
];

/// Keys whose non-empty value means an authorizer is attached.
const AUTH_KEYS: &[&str] = &["auth", "authorizer", "authorizers", "defaultauthorizer", "authorizerid"];
/// Keys naming an authorization type; anything but NONE counts.
const AUTH_TYPE_KEYS: &[&str] = &["authorizationtype", "authorization", "authtype"];

/// Implicit API created by SAM for function events without a RestApiId.
const IMPLICIT_API: &str = "ServerlessRestApi";

fn normalize(key: &str) -> String {
    key.chars()
        .filter(|c| !matches!(c, '-' | '_' | '.' | ' '))
        .flat_map(char::to_lowercase)
        .collect()
}

fn is_cors_name(name: &str) -> bool {
    let n = normalize(name);
    n.contains("corsorigin") || n.contains("alloworigin")
}

fn is_wildcard(v: &PropValue) -> bool {
    match v {
        PropValue::String(s) => matches!(s.trim(), "*" | "'*'" | "\"*\""),
        PropValue::List(items) => items.iter().any(is_wildcard),
        _ => false,
    }
}

/// Whether a template mentions CORS at all; the check never fires otherwise.
fn has_cors_keys(model: &TemplateModel) -> bool {
    let mut found = model.parameters.iter().any(|p| is_cors_name(&p.name));
    let mut visit = |k: &str, _: &PropValue| found |= is_cors_name(k) || normalize(k) == "cors";
    for r in &model.resources {
        r.properties.walk("", &mut visit);
    }
    model.globals.walk("", &mut visit);
    found
}

#[derive(Debug, Clone)]
struct Api {
    id: String,
    /// Resource, or `None` for the SAM implicit API.
    node: Option<usize>,
}

#[derive(Debug, Default)]
pub struct CorsCheck {
    pub findings: Vec<IacFinding>,
    pub notices: Vec<String>,
}

struct Ctx<'a> {
    model: &'a TemplateModel,
    props: Vec<PropValue>,
    apis: Vec<Api>,
    notices: Vec<String>,
}

impl<'a> Ctx<'a> {
    fn new(model: &'a TemplateModel) -> Self {
        let props: Vec<PropValue> = model.resources.iter().map(|r| model.effective_properties(r)).collect();
        let mut apis: Vec<Api> = model
            .resources
            .iter()
            .enumerate()
            .filter(|(_, r)| API_TYPES.contains(&r.resource_type.as_str()))
            .map(|(i, r)| Api {
                id: r.logical_id.clone(),
                node: Some(i),
            })
            .collect();
        if model.framework == IaCFramework::Sam
            && model.resource(IMPLICIT_API).is_none()
            && implicit_api_events(model, &props).next().is_some()
        {
            apis.push(Api {
                id: IMPLICIT_API.into(),
                node: None,
            });
        }
        Ctx {
            model,
            props,
            apis,
            notices: Vec::new(),
        }
    }

    fn refs_of(&self, i: usize) -> Vec<&str> {
        self.props[i].references()
    }

    fn references(&self, i: usize, needle: &str) -> bool {
        self.refs_of(i).iter().any(|t| mentions(t, needle))
    }

    /// APIs reached from resource `i`: itself, or APIs it references.
    fn apis_from_resource(&self, i: usize) -> BTreeSet<usize> {
        let r = &self.model.resources[i];
        let mut out = BTreeSet::new();
        for (a, api) in self.apis.iter().enumerate() {
            if api.node == Some(i) || self.references(i, &api.id) {
                out.insert(a);
            }
        }
        // A SAM function with implicit API events feeds the implicit API.
        if r.resource_type == "AWS::Serverless::Function" {
            if let Some(a) = self.apis.iter().position(|a| a.node.is_none()) {
                if implicit_api_events(self.model, &self.props).any(|(fi, _)| fi == i) {
                    out.insert(a);
                }
            }
        }
        out
    }

    /// APIs fed by anything that references `needle`, directly or through
    /// one intermediate resource.
    fn apis_fed_by(&self, needle: &str) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        for i in 0..self.model.resources.len() {
            if !self.references(i, needle) {
                continue;
            }
            let direct = self.apis_from_resource(i);
            if direct.is_empty() {
                let id = &self.model.resources[i].logical_id;
                for j in 0..self.model.resources.len() {
                    if j != i && self.references(j, id) {
                        out.extend(self.apis_from_resource(j));
                    }
                }
            }
            out.extend(direct);
        }
        out
    }

    fn sam_apis(&self) -> BTreeSet<usize> {
        self.apis
            .iter()
            .enumerate()
            .filter(|(_, a)| match a.node {
                None => true,
                Some(i) => self.model.resources[i].resource_type.starts_with("AWS::Serverless::"),
            })
            .map(|(k, _)| k)
            .collect()
    }

    fn authenticated(&mut self, api: usize) -> bool {
        let a = self.apis[api].clone();
        match a.node {
            Some(i) => {
                if self.auth_in(&self.props[i].clone(), &a.id) {
                    return true;
                }
                for j in 0..self.model.resources.len() {
                    if j == i || !self.references(j, &a.id) {
                        continue;
                    }
                    if AUTHORIZER_TYPES.contains(&self.model.resources[j].resource_type.as_str()) {
                        return true;
                    }
                    let p = self.props[j].clone();
                    if self.auth_in(&p, &a.id) {
                        return true;
                    }
                }
                false
            }
            None => {
                let globals = self.model.globals.get("Api").cloned().unwrap_or(PropValue::Null);
                if self.auth_in(&globals, &a.id) {
                    return true;
                }
                let events: Vec<PropValue> = implicit_api_events(self.model, &self.props)
                    .map(|(_, e)| e.clone())
                    .collect();
                events.iter().any(|e| self.auth_in(e, &a.id))
            }
        }
    }

    fn auth_in(&mut self, props: &PropValue, api: &str) -> bool {
        let mut found = false;
        let mut undetermined = Vec::new();
        props.walk("", &mut |k, v| {
            let n = normalize(k);
            if AUTH_KEYS.contains(&n.as_str()) {
                found |= match v {
                    PropValue::String(s) => !s.trim().is_empty() && !s.trim().eq_ignore_ascii_case("none"),
                    // `Auth: {Authorizer: NONE}` opts out explicitly
                    PropValue::Map(entries) => {
                        !entries.is_empty()
                            && !entries.iter().any(|(k, v)| {
                                let k = normalize(k);
                                (AUTH_KEYS.contains(&k.as_str()) || AUTH_TYPE_KEYS.contains(&k.as_str()))
                                    && v.as_str().is_some_and(|s| s.trim().eq_ignore_ascii_case("none"))
                            })
                    }
                    PropValue::Null | PropValue::Bool(false) => false,
                    other => !other.is_blank(),
                };
            } else if AUTH_TYPE_KEYS.contains(&n.as_str()) {
                match v {
                    PropValue::String(s) => found |= !s.trim().is_empty() && !s.trim().eq_ignore_ascii_case("none"),
                    v if v.is_undetermined() => undetermined.push(k.to_string()),
                    _ => {}
                }
            }
        });
        if !found && !undetermined.is_empty() {
            self.notices.push(format!(
                "authorization type of {api} comes from a reference; treated as unauthenticated"
            ));
        }
        found
    }
}

/// `(function index, event properties)` for SAM events of type Api or
/// HttpApi that do not name an explicit API.
fn implicit_api_events<'m>(
    model: &'m TemplateModel,
    props: &'m [PropValue],
) -> impl Iterator<Item = (usize, &'m PropValue)> + 'm {
    model
        .resources
        .iter()
        .enumerate()
        .filter(|(_, r)| r.resource_type == "AWS::Serverless::Function")
        .flat_map(move |(i, _)| match props[i].get("Events") {
            Some(PropValue::Map(events)) => events.iter().map(move |(_, e)| (i, e)).collect::<Vec<_>>(),
            _ => Vec::new(),
        })
        .filter(|(_, e)| {
            matches!(e.get("Type").and_then(PropValue::as_str), Some("Api" | "HttpApi"))
                && e.get("Properties").and_then(|p| p.get("RestApiId").or(p.get("ApiId"))).is_none()
        })
        .map(|(i, e)| (i, e.get("Properties").unwrap_or(e)))
}

struct Source {
    logical_id: String,
    resource_type: String,
    span: SourceSpan,
    what: String,
    fed: BTreeSet<usize>,
}

fn inline_sources(props: &PropValue) -> Vec<String> {
    let mut keys = Vec::new();
    props.walk("", &mut |k, v| {
        if (is_cors_name(k) || normalize(k) == "cors") && is_wildcard(v) && !keys.iter().any(|x| x == k) {
            keys.push(k.to_string());
        }
    });
    keys
}

pub fn check_cors_wildcard(model: &TemplateModel) -> CorsCheck {
    if !has_cors_keys(model) {
        return CorsCheck::default();
    }
    let mut ctx = Ctx::new(model);
    let mut sources = Vec::new();

    for p in &model.parameters {
        if !is_cors_name(&p.name) || !p.default.as_ref().is_some_and(is_wildcard) {
            continue;
        }
        let needle = match model.framework {
            IaCFramework::Terraform => format!("var.{}", p.name),
            _ => p.name.clone(),
        };
        let mut fed = ctx.apis_fed_by(&needle);
        let globals_ref = model.globals.references().iter().any(|t| mentions(t, &needle));
        if globals_ref {
            fed.extend(ctx.sam_apis());
        }
        sources.push(Source {
            logical_id: p.name.clone(),
            resource_type: "Parameter".into(),
            span: p.source_span.clone(),
            what: format!("parameter {} defaults to a wildcard origin", p.name),
            fed,
        });
    }

    for (i, r) in model.resources.iter().enumerate() {
        for key in inline_sources(&r.properties) {
            let mut fed = ctx.apis_from_resource(i);
            if fed.is_empty() {
                fed = ctx.apis_fed_by(&r.logical_id);
            }
            sources.push(Source {
                logical_id: r.logical_id.clone(),
                resource_type: r.resource_type.clone(),
                span: r.source_span.clone(),
                what: format!("{} sets {key} to a wildcard origin", r.logical_id),
                fed,
            });
        }
    }
    if let (Some(key), Some(span)) = (inline_sources(&model.globals).first(), &model.globals_span) {
        sources.push(Source {
            logical_id: "Globals".into(),
            resource_type: "Globals".into(),
            span: span.clone(),
            what: format!("Globals set {key} to a wildcard origin"),
            fed: ctx.sam_apis(),
        });
    }

    let mut findings = Vec::new();
    for mut s in sources {
        if s.fed.is_empty() {
            s.fed = (0..ctx.apis.len()).collect();
        }
        let mut open = Vec::new();
        for &a in &s.fed {
            if !ctx.authenticated(a) {
                open.push(ctx.apis[a].id.clone());
            }
        }
        let (severity, message) = if open.is_empty() {
            let note = if s.fed.is_empty() {
                "no API found"
            } else {
                "fed APIs require authentication"
            };
            (Severity::Low, format!("{} ({note})", s.what))
        } else {
            (Severity::High, format!("{}; unauthenticated API: {}", s.what, open.join(", ")))
        };
        findings.push(IacFinding {
            rule_id: String::new(),
            framework: model.framework,
            severity,
            logical_id: s.logical_id,
            resource_type: s.resource_type,
            span: s.span,
            message,
        });
    }
    let mut notices = ctx.notices;
    notices.sort();
    notices.dedup();
    CorsCheck { findings, notices }
}
