//! Block-level HCL reader for Terraform files. Expressions are kept
//! literal where possible; traversals and interpolations become references
//! and anything computed becomes an opaque node.

use super::model::{IaCFramework, Parameter, PropValue, ResourceNode, SourceSpan, TemplateModel};
use super::IacError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str { text: String, interpolated: bool },
    Heredoc(String),
    Number(f64),
    Punct(char),
    Op(&'static str),
    Newline,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    start: usize,
    end: usize,
}

fn err(line: usize, message: impl Into<String>) -> IacError {
    IacError::Parse {
        line,
        message: message.into(),
    }
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Lexer<'a> {
    fn peek(&self, off: usize) -> Option<u8> {
        self.bytes.get(self.pos + off).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek(0)?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
        }
        Some(b)
    }

    fn skip_trivia(&mut self) -> Result<(), IacError> {
        loop {
            match (self.peek(0), self.peek(1)) {
                (Some(b' ' | b'\t' | b'\r'), _) => {
                    self.bump();
                }
                (Some(b'#'), _) | (Some(b'/'), Some(b'/')) => {
                    while self.peek(0).is_some_and(|b| b != b'\n') {
                        self.bump();
                    }
                }
                (Some(b'/'), Some(b'*')) => {
                    let line = self.line;
                    self.pos += 2;
                    loop {
                        match (self.peek(0), self.peek(1)) {
                            (Some(b'*'), Some(b'/')) => {
                                self.pos += 2;
                                break;
                            }
                            (Some(_), _) => {
                                self.bump();
                            }
                            (None, _) => return Err(err(line, "unterminated block comment")),
                        }
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    /// Reads a quoted string starting after the opening quote.
    fn string(&mut self) -> Result<Tok, IacError> {
        let line = self.line;
        let mut text = String::new();
        let mut interpolated = false;
        loop {
            let Some(b) = self.peek(0) else {
                return Err(err(line, "unterminated string"));
            };
            match b {
                b'"' => {
                    self.bump();
                    return Ok(Tok::Str { text, interpolated });
                }
                b'\n' => return Err(err(line, "newline in string")),
                b'\\' => {
                    self.bump();
                    let esc = self.bump().ok_or_else(|| err(line, "unterminated string"))?;
                    match esc {
                        b'n' => text.push('\n'),
                        b't' => text.push('\t'),
                        b'r' => text.push('\r'),
                        b'"' => text.push('"'),
                        b'\\' => text.push('\\'),
                        other => {
                            text.push('\\');
                            text.push(other as char);
                        }
                    }
                }
                b'$' | b'%' if self.peek(1) == Some(b) && self.peek(2) == Some(b'{') => {
                    // `$${` is a literal `${`
                    self.pos += 3;
                    text.push(b as char);
                    text.push('{');
                }
                b'$' | b'%' if self.peek(1) == Some(b'{') => {
                    interpolated = true;
                    let start = self.pos;
                    self.pos += 2;
                    let mut depth = 1;
                    while depth > 0 {
                        match self.bump() {
                            Some(b'{') => depth += 1,
                            Some(b'}') => depth -= 1,
                            Some(b'"') => {
                                // nested string inside the template expression
                                while let Some(c) = self.bump() {
                                    if c == b'\\' {
                                        self.bump();
                                    } else if c == b'"' {
                                        break;
                                    }
                                }
                            }
                            Some(_) => {}
                            None => return Err(err(line, "unterminated interpolation")),
                        }
                    }
                    text.push_str(&self.src[start..self.pos]);
                }
                _ => {
                    let ch = self.src[self.pos..].chars().next().expect("in bounds");
                    for _ in 0..ch.len_utf8() {
                        self.bump();
                    }
                    text.push(ch);
                }
            }
        }
    }

    fn heredoc(&mut self) -> Result<Tok, IacError> {
        let line = self.line;
        if self.peek(0) == Some(b'-') {
            self.bump();
        }
        let start = self.pos;
        while self.peek(0).is_some_and(|b| b.is_ascii_alphanumeric() || b == b'_') {
            self.bump();
        }
        let marker = self.src[start..self.pos].to_string();
        if marker.is_empty() {
            return Err(err(line, "heredoc without marker"));
        }
        while self.peek(0).is_some_and(|b| b != b'\n') {
            self.bump();
        }
        self.bump();
        let mut body = Vec::new();
        loop {
            if self.peek(0).is_none() {
                return Err(err(line, format!("heredoc `{marker}` not terminated")));
            }
            let ls = self.pos;
            while self.peek(0).is_some_and(|b| b != b'\n') {
                self.bump();
            }
            let text = &self.src[ls..self.pos];
            if text.trim() == marker {
                return Ok(Tok::Heredoc(body.join("\n")));
            }
            body.push(text.to_string());
            self.bump();
        }
    }

    fn next(&mut self) -> Result<Option<Token>, IacError> {
        self.skip_trivia()?;
        let start = self.pos;
        let line = self.line;
        let Some(b) = self.peek(0) else { return Ok(None) };
        let tok = match b {
            b'\n' => {
                self.bump();
                Tok::Newline
            }
            b'"' => {
                self.bump();
                self.string()?
            }
            b'<' if self.peek(1) == Some(b'<') => {
                self.pos += 2;
                self.heredoc()?
            }
            b'0'..=b'9' => {
                while self
                    .peek(0)
                    .is_some_and(|c| c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E')
                {
                    // a dot followed by a non-digit is a traversal, not a fraction
                    if self.peek(0) == Some(b'.') && !self.peek(1).is_some_and(|c| c.is_ascii_digit()) {
                        break;
                    }
                    self.bump();
                }
                let text = &self.src[start..self.pos];
                Tok::Number(text.parse().map_err(|_| err(line, format!("bad number `{text}`")))?)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self
                    .peek(0)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || c == b'_' || c == b'-')
                {
                    self.bump();
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            _ => {
                let two = self.src.get(self.pos..self.pos + 2).unwrap_or("");
                let three = self.src.get(self.pos..self.pos + 3).unwrap_or("");
                let op = ["==", "!=", "<=", ">=", "&&", "||", "=>"].into_iter().find(|o| *o == two);
                if three == "..." {
                    self.pos += 3;
                    Tok::Op("...")
                } else if let Some(op) = op {
                    self.pos += 2;
                    Tok::Op(op)
                } else {
                    let ch = self.src[self.pos..].chars().next().expect("in bounds");
                    self.pos += ch.len_utf8();
                    if "{}[]()=,.:?!<>+-*/%".contains(ch) {
                        Tok::Punct(ch)
                    } else {
                        return Err(err(line, format!("unexpected character `{ch}`")));
                    }
                }
            }
        };
        Ok(Some(Token {
            tok,
            line,
            start,
            end: self.pos,
        }))
    }
}

fn lex(src: &str) -> Result<Vec<Token>, IacError> {
    let mut lx = Lexer {
        src,
        bytes: src.as_bytes(),
        pos: 0,
        line: 1,
    };
    let mut out = Vec::new();
    while let Some(t) = lx.next()? {
        out.push(t);
    }
    Ok(out)
}

/// A parsed block: `type "label"... { body }`.
#[derive(Debug, Clone)]
struct Block {
    kind: String,
    labels: Vec<String>,
    body: Body,
    start_line: usize,
    end_line: usize,
}

#[derive(Debug, Clone, Default)]
struct Body {
    attrs: Vec<(String, PropValue)>,
    blocks: Vec<Block>,
}

impl Body {
    /// Attributes plus nested blocks; repeated block types become lists.
    fn to_prop(&self) -> PropValue {
        let mut entries: Vec<(String, PropValue)> = self.attrs.clone();
        for b in &self.blocks {
            let mut value = b.body.to_prop();
            for label in b.labels.iter().rev() {
                value = PropValue::Map(vec![(label.clone(), value)]);
            }
            match entries.iter_mut().find(|(k, _)| *k == b.kind) {
                Some((_, PropValue::List(items))) if !self.attrs.iter().any(|(k, _)| *k == b.kind) => {
                    items.push(value)
                }
                Some((_, existing)) => {
                    let first = std::mem::replace(existing, PropValue::Null);
                    *existing = PropValue::List(vec![first, value]);
                }
                None => entries.push((b.kind.clone(), value)),
            }
        }
        PropValue::Map(entries)
    }
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
}

fn closing(c: char) -> bool {
    matches!(c, ')' | ']' | '}')
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn line(&self) -> usize {
        self.toks
            .get(self.pos)
            .or_else(|| self.toks.last())
            .map(|t| t.line)
            .unwrap_or(1)
    }

    fn advance(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn skip_newlines(&mut self) {
        while self.peek() == Some(&Tok::Newline) {
            self.pos += 1;
        }
    }

    fn expect_punct(&mut self, c: char) -> Result<Token, IacError> {
        let line = self.line();
        match self.advance() {
            Some(t) if t.tok == Tok::Punct(c) => Ok(t),
            Some(t) => Err(err(t.line, format!("expected `{c}`, found `{}`", &self.src[t.start..t.end]))),
            None => Err(err(line, format!("expected `{c}`, found end of file"))),
        }
    }

    fn body(&mut self, nested: bool) -> Result<Body, IacError> {
        let mut body = Body::default();
        loop {
            self.skip_newlines();
            match self.peek() {
                None if nested => return Err(err(self.line(), "unclosed block")),
                None => return Ok(body),
                Some(Tok::Punct('}')) if nested => return Ok(body),
                Some(Tok::Ident(_)) => {}
                Some(_) => {
                    let t = &self.toks[self.pos];
                    return Err(err(t.line, format!("unexpected `{}`", &self.src[t.start..t.end])));
                }
            }
            let head = self.advance().expect("peeked");
            let Tok::Ident(name) = head.tok else { unreachable!() };
            if matches!(self.peek(), Some(Tok::Punct('=' | ':'))) {
                self.pos += 1;
                let value = self.expr()?;
                body.attrs.retain(|(k, _)| *k != name);
                body.attrs.push((name, value));
            } else {
                let mut labels = Vec::new();
                loop {
                    match self.peek() {
                        Some(Tok::Str { text, .. }) => labels.push(text.clone()),
                        Some(Tok::Ident(l)) => labels.push(l.clone()),
                        _ => break,
                    }
                    self.pos += 1;
                }
                self.expect_punct('{')?;
                let inner = self.body(true)?;
                let close = self.expect_punct('}')?;
                body.blocks.push(Block {
                    kind: name,
                    labels,
                    body: inner,
                    start_line: head.line,
                    end_line: close.line,
                });
            }
            match self.peek() {
                None | Some(Tok::Newline) | Some(Tok::Punct('}')) => {}
                Some(_) => {
                    let t = &self.toks[self.pos];
                    return Err(err(t.line, format!("expected newline, found `{}`", &self.src[t.start..t.end])));
                }
            }
        }
    }

    /// Skips to the end of the current expression: the next newline, comma
    /// or unbalanced closing bracket at depth zero.
    fn skip_expr_tail(&mut self) -> Result<(), IacError> {
        let mut depth = 0usize;
        let line = self.line();
        loop {
            match self.peek() {
                None if depth == 0 => return Ok(()),
                None => return Err(err(line, "unbalanced brackets")),
                Some(Tok::Newline | Tok::Punct(',')) if depth == 0 => return Ok(()),
                Some(Tok::Punct(c)) if closing(*c) => {
                    if depth == 0 {
                        return Ok(());
                    }
                    depth -= 1;
                }
                Some(Tok::Punct('(' | '[' | '{')) => depth += 1,
                _ => {}
            }
            self.pos += 1;
        }
    }

    fn expr(&mut self) -> Result<PropValue, IacError> {
        let start = self.toks.get(self.pos).map(|t| t.start).unwrap_or(self.src.len());
        let value = self.postfix()?;
        let continues = match self.peek() {
            Some(Tok::Op(o)) => *o != "=>" && *o != "...",
            Some(Tok::Punct(c)) => "?<>+-*/%".contains(*c),
            _ => false,
        };
        if !continues {
            return Ok(value);
        }
        self.skip_expr_tail()?;
        let end = self.toks.get(self.pos.saturating_sub(1)).map(|t| t.end).unwrap_or(start);
        Ok(PropValue::Opaque(self.src[start..end.max(start)].trim().to_string()))
    }

    fn postfix(&mut self) -> Result<PropValue, IacError> {
        let start_tok = self.pos;
        let mut value = self.primary()?;
        let mut extended = false;
        loop {
            match self.peek() {
                Some(Tok::Punct('.')) => {
                    self.pos += 1;
                    match self.advance().map(|t| t.tok) {
                        Some(Tok::Ident(_) | Tok::Number(_) | Tok::Punct('*')) => {}
                        _ => return Err(err(self.line(), "bad attribute access")),
                    }
                    extended = true;
                }
                Some(Tok::Punct('[')) => {
                    self.pos += 1;
                    self.skip_newlines();
                    if self.peek() == Some(&Tok::Punct('*')) {
                        self.pos += 1;
                    } else {
                        self.expr()?;
                    }
                    self.skip_newlines();
                    self.expect_punct(']')?;
                    extended = true;
                }
                _ => break,
            }
        }
        if extended {
            let text = self.text_from(start_tok);
            value = match value {
                PropValue::Reference { function, .. } => PropValue::Reference { function, target: text },
                _ => PropValue::Opaque(text),
            };
        }
        Ok(value)
    }

    fn text_from(&self, tok: usize) -> String {
        let start = self.toks[tok].start;
        let end = self.toks[self.pos - 1].end;
        self.src[start..end].to_string()
    }

    fn primary(&mut self) -> Result<PropValue, IacError> {
        let line = self.line();
        let Some(t) = self.advance() else {
            return Err(err(line, "expected expression"));
        };
        Ok(match t.tok {
            Tok::Number(n) => PropValue::Number(n),
            Tok::Str { text, interpolated: false } => PropValue::String(text),
            Tok::Str { text, interpolated: true } => {
                let inner = text.strip_prefix("${").and_then(|r| r.strip_suffix('}'));
                match inner {
                    Some(expr) if !expr.contains("${") && !expr.contains('}') => PropValue::Reference {
                        function: "traversal".into(),
                        target: expr.trim().to_string(),
                    },
                    _ => PropValue::Reference {
                        function: "interpolation".into(),
                        target: text,
                    },
                }
            }
            Tok::Heredoc(body) => {
                if body.contains("${") {
                    PropValue::Reference {
                        function: "interpolation".into(),
                        target: body,
                    }
                } else {
                    match serde_json::from_str::<serde_json::Value>(&body) {
                        Ok(v) => PropValue::from_json(&v),
                        Err(_) => PropValue::String(body),
                    }
                }
            }
            Tok::Ident(id) if id == "true" => PropValue::Bool(true),
            Tok::Ident(id) if id == "false" => PropValue::Bool(false),
            Tok::Ident(id) if id == "null" => PropValue::Null,
            Tok::Ident(id) if self.peek() == Some(&Tok::Punct('(')) => {
                self.pos += 1;
                let args = self.sequence(')')?;
                if id == "jsonencode" && args.len() == 1 {
                    args.into_iter().next().expect("one arg")
                } else {
                    PropValue::Opaque(self.src[t.start..self.toks[self.pos - 1].end].to_string())
                }
            }
            Tok::Ident(id) => PropValue::Reference {
                function: "traversal".into(),
                target: id,
            },
            Tok::Punct('[') => {
                self.skip_newlines();
                if matches!(self.peek(), Some(Tok::Ident(k)) if k == "for") {
                    self.skip_expr_tail()?;
                    self.expect_punct(']')?;
                    PropValue::Opaque(self.src[t.start..self.toks[self.pos - 1].end].to_string())
                } else {
                    PropValue::List(self.sequence(']')?)
                }
            }
            Tok::Punct('{') => self.object(t.start)?,
            Tok::Punct('(') => {
                self.skip_newlines();
                let v = self.expr()?;
                self.skip_newlines();
                self.expect_punct(')')?;
                v
            }
            Tok::Punct('-') => match self.primary()? {
                PropValue::Number(n) => PropValue::Number(-n),
                _ => PropValue::Opaque(self.src[t.start..self.toks[self.pos - 1].end].to_string()),
            },
            Tok::Punct('!') => {
                self.postfix()?;
                PropValue::Opaque(self.src[t.start..self.toks[self.pos - 1].end].to_string())
            }
            Tok::Newline => return Err(err(t.line, "expected expression before end of line")),
            _ => return Err(err(t.line, format!("unexpected `{}` in expression", &self.src[t.start..t.end]))),
        })
    }

    /// Comma or newline separated expressions up to `close`.
    fn sequence(&mut self, close: char) -> Result<Vec<PropValue>, IacError> {
        let mut items = Vec::new();
        loop {
            self.skip_newlines();
            if self.peek() == Some(&Tok::Punct(close)) {
                self.pos += 1;
                return Ok(items);
            }
            items.push(self.expr()?);
            if self.peek() == Some(&Tok::Op("...")) {
                self.pos += 1;
            }
            self.skip_newlines();
            match self.peek() {
                Some(Tok::Punct(',')) => self.pos += 1,
                Some(Tok::Punct(c)) if *c == close => {}
                _ => return Err(err(self.line(), format!("expected `,` or `{close}`"))),
            }
        }
    }

    fn object(&mut self, start: usize) -> Result<PropValue, IacError> {
        self.skip_newlines();
        if matches!(self.peek(), Some(Tok::Ident(k)) if k == "for") {
            self.skip_expr_tail()?;
            self.expect_punct('}')?;
            return Ok(PropValue::Opaque(self.src[start..self.toks[self.pos - 1].end].to_string()));
        }
        let mut entries: Vec<(String, PropValue)> = Vec::new();
        loop {
            self.skip_newlines();
            if self.peek() == Some(&Tok::Punct('}')) {
                self.pos += 1;
                return Ok(PropValue::Map(entries));
            }
            let key_tok = self.pos;
            let key = match self.peek().cloned() {
                Some(Tok::Ident(k)) => {
                    self.pos += 1;
                    k
                }
                Some(Tok::Str { text, .. }) => {
                    self.pos += 1;
                    text
                }
                Some(Tok::Number(_)) => {
                    self.pos += 1;
                    self.text_from(key_tok)
                }
                Some(Tok::Punct('(')) => {
                    self.pos += 1;
                    self.expr()?;
                    self.expect_punct(')')?;
                    self.text_from(key_tok)
                }
                _ => return Err(err(self.line(), "expected object key")),
            };
            match self.advance().map(|t| t.tok) {
                Some(Tok::Punct('=' | ':')) => {}
                _ => return Err(err(self.line(), format!("expected `=` after key `{key}`"))),
            }
            let value = self.expr()?;
            entries.retain(|(k, _)| *k != key);
            entries.push((key, value));
            match self.peek() {
                Some(Tok::Punct(',') | Tok::Newline) => self.pos += 1,
                Some(Tok::Punct('}')) => {}
                _ => return Err(err(self.line(), "expected `,`, newline or `}` in object")),
            }
        }
    }
}

fn parse_blocks(src: &str) -> Result<Body, IacError> {
    let toks = lex(src)?;
    let mut p = Parser { src, toks, pos: 0 };
    p.body(false)
}

/// Parses one Terraform file. Resources are named `<type>.<name>`, data
/// sources `data.<type>.<name>`, locals `local.<name>`, modules
/// `module.<name>`; variables become parameters.
pub(crate) fn parse_terraform(file: &str, contents: &str) -> Result<TemplateModel, IacError> {
    let body = parse_blocks(contents)?;
    let line_count = contents.lines().count().max(1);
    let span = |b: &Block| SourceSpan {
        file: file.to_string(),
        start_line: b.start_line,
        end_line: b.end_line,
    };
    let mut resources = Vec::new();
    let mut parameters = Vec::new();
    for b in &body.blocks {
        match (b.kind.as_str(), b.labels.as_slice()) {
            ("resource", [ty, name]) => resources.push(ResourceNode {
                logical_id: format!("{ty}.{name}"),
                resource_type: ty.clone(),
                properties: b.body.to_prop(),
                source_span: span(b),
            }),
            ("data", [ty, name]) => resources.push(ResourceNode {
                logical_id: format!("data.{ty}.{name}"),
                resource_type: format!("data.{ty}"),
                properties: b.body.to_prop(),
                source_span: span(b),
            }),
            ("module", [name]) => resources.push(ResourceNode {
                logical_id: format!("module.{name}"),
                resource_type: "module".into(),
                properties: b.body.to_prop(),
                source_span: span(b),
            }),
            ("locals", []) => {
                for (k, v) in &b.body.attrs {
                    resources.push(ResourceNode {
                        logical_id: format!("local.{k}"),
                        resource_type: "local".into(),
                        properties: PropValue::Map(vec![(k.clone(), v.clone())]),
                        source_span: span(b),
                    });
                }
            }
            ("variable", [name]) => {
                let param_type = b
                    .body
                    .attrs
                    .iter()
                    .find(|(k, _)| k == "type")
                    .map(|(_, v)| match v {
                        PropValue::Reference { target, .. } => target.clone(),
                        PropValue::Opaque(s) => s.clone(),
                        _ => "any".into(),
                    })
                    .unwrap_or_else(|| "any".into());
                parameters.push(Parameter {
                    name: name.clone(),
                    default: b.body.attrs.iter().find(|(k, _)| k == "default").map(|(_, v)| v.clone()),
                    param_type,
                    source_span: span(b),
                });
            }
            _ => {}
        }
    }
    Ok(TemplateModel {
        framework: IaCFramework::Terraform,
        parameters,
        resources,
        transforms: Vec::new(),
        globals: PropValue::empty_map(),
        globals_span: None,
        line_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iaclint::model::resolve;

    const TF: &str = r#"
# bucket
variable "cors_origin" {
  type    = string
  default = "*"
}

resource "aws_s3_bucket" "b" {
  bucket = "demo-${var.env}"
  tags = {
    Name = "demo"
    "team:owner" = "x"
  }
  server_side_encryption_configuration {
    rule {
      apply_server_side_encryption_by_default {
        sse_algorithm = "aws:kms"
      }
    }
  }
}

resource "aws_lambda_permission" "p" {
  statement_id  = "AllowAPI"
  action        = "lambda:InvokeFunction"
  function_name = aws_lambda_function.f.function_name
  principal     = "apigateway.amazonaws.com"
  count         = var.enabled ? 1 : 0
}

resource "aws_iam_policy" "pol" {
  policy = jsonencode({
    Version = "2012-10-17"
    Statement = [{ Action = "*", Effect = "Allow", Resource = "*" }]
  })
}

locals {
  allow_origin = "*"
  ports        = [for p in var.ports : p + 1]
}
"#;

    #[test]
    fn parses_blocks() {
        let m = parse_terraform("main.tf", TF).unwrap();
        let ids: Vec<_> = m.resources.iter().map(|r| r.logical_id.as_str()).collect();
        assert_eq!(
            ids,
            vec!["aws_s3_bucket.b", "aws_lambda_permission.p", "aws_iam_policy.pol", "local.allow_origin", "local.ports"]
        );
        assert_eq!(m.parameters[0].name, "cors_origin");
        assert_eq!(m.parameters[0].default, Some(PropValue::String("*".into())));
        assert_eq!(m.parameters[0].param_type, "string");

        let b = &m.resources[0];
        assert_eq!((b.source_span.start_line, b.source_span.end_line), (8, 21));
        let sse = resolve(
            &b.properties,
            "server_side_encryption_configuration.rule.apply_server_side_encryption_by_default.sse_algorithm",
        );
        assert_eq!(sse.values, vec![&PropValue::String("aws:kms".into())]);
        assert!(b.properties.get("bucket").unwrap().is_undetermined());
        assert_eq!(resolve(&b.properties, "tags.team:owner").values.len(), 1);

        let p = &m.resources[1];
        assert_eq!(
            p.properties.get("function_name"),
            Some(&PropValue::Reference {
                function: "traversal".into(),
                target: "aws_lambda_function.f.function_name".into()
            })
        );
        assert!(matches!(p.properties.get("count"), Some(PropValue::Opaque(s)) if s == "var.enabled ? 1 : 0"));

        let pol = &m.resources[2];
        assert_eq!(resolve(&pol.properties, "policy.Statement.Action").values, vec![&PropValue::String("*".into())]);

        assert!(matches!(m.resources[4].properties.get("ports"), Some(PropValue::Opaque(_))));
    }

    #[test]
    fn heredoc_json_policy() {
        let src = "resource \"aws_iam_role_policy\" \"r\" {\n  policy = <<EOF\n{\"Statement\": [{\"Action\": [\"s3:*\", \"*\"]}]}\nEOF\n}\n";
        let m = parse_terraform("x.tf", src).unwrap();
        let v = resolve(&m.resources[0].properties, "policy.Statement.Action");
        assert_eq!(v.values.len(), 1);
        assert!(matches!(v.values[0], PropValue::List(items) if items.len() == 2));
    }

    #[test]
    fn repeated_blocks_become_lists() {
        let src = "resource \"aws_security_group\" \"sg\" {\n  ingress { from_port = 22 }\n  ingress { from_port = 80 }\n  ingress { from_port = 443 }\n}\n";
        let m = parse_terraform("x.tf", src).unwrap();
        let v = resolve(&m.resources[0].properties, "ingress.from_port");
        assert_eq!(v.values.len(), 3);
    }

    #[test]
    fn empty_resource_block() {
        let m = parse_terraform("x.tf", "resource \"aws_s3_bucket\" \"b\" { }\n").unwrap();
        assert_eq!(m.resources[0].resource_type, "aws_s3_bucket");
        assert_eq!(m.resources[0].properties, PropValue::empty_map());
    }

    #[test]
    fn syntax_errors_carry_lines() {
        for (src, line) in [
            ("resource \"a\" \"b\" {\n  x = \n}\n", 2),
            ("resource \"a\" \"b\" {\n  x = 1\n", 2),
            ("resource \"a\" \"b\" {\n  x = \"open\n}\n", 2),
        ] {
            match parse_terraform("x.tf", src) {
                Err(IacError::Parse { line: l, .. }) => assert_eq!(l, line, "{src:?}"),
                other => panic!("{src:?}: {other:?}"),
            }
        }
    }
}
