use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DockerParseError {
    #[error("unterminated quote starting at column {column}")]
    UnterminatedQuote { column: usize },
    #[error("unterminated command substitution starting at column {column}")]
    UnterminatedSubstitution { column: usize },
    #[error("not a docker run command")]
    NotRunCommand,
    #[error("incomplete command: {0}")]
    Incomplete(String),
}

/// One shell word. `raw` is the exact source text, `value` has quotes
/// removed; `$VAR` and `$(...)` are kept verbatim in both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub raw: String,
    pub value: String,
    /// 1-based character column in the command.
    pub column: usize,
}

fn matching_paren(chars: &[char], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut quote = None;
    for (i, &c) in chars.iter().enumerate().skip(open) {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '\'' | '"') => quote = Some(c),
            (None, '(') => depth += 1,
            (None, ')') => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Shell-style word splitting without expansion. An unquoted `#` at the
/// start of a word ends the command.
pub fn tokenize(cmd: &str) -> Result<Vec<Token>, DockerParseError> {
    let chars: Vec<char> = cmd.chars().collect();
    let n = chars.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        if chars[i] == '#' {
            break;
        }
        let start = i;
        let mut value = String::new();
        while i < n && !chars[i].is_whitespace() {
            match chars[i] {
                '\'' => {
                    let q = i;
                    i += 1;
                    while i < n && chars[i] != '\'' {
                        value.push(chars[i]);
                        i += 1;
                    }
                    if i >= n {
                        return Err(DockerParseError::UnterminatedQuote { column: q + 1 });
                    }
                    i += 1;
                }
                '"' => {
                    let q = i;
                    i += 1;
                    loop {
                        if i >= n {
                            return Err(DockerParseError::UnterminatedQuote { column: q + 1 });
                        }
                        match chars[i] {
                            '"' => {
                                i += 1;
                                break;
                            }
                            '\\' if i + 1 < n && matches!(chars[i + 1], '"' | '\\' | '$' | '`') => {
                                value.push(chars[i + 1]);
                                i += 2;
                            }
                            '$' if i + 1 < n && chars[i + 1] == '(' => {
                                let end = matching_paren(&chars, i + 1)
                                    .ok_or(DockerParseError::UnterminatedSubstitution { column: i + 1 })?;
                                value.extend(&chars[i..=end]);
                                i = end + 1;
                            }
                            c => {
                                value.push(c);
                                i += 1;
                            }
                        }
                    }
                }
                '\\' => {
                    if i + 1 < n {
                        value.push(chars[i + 1]);
                    }
                    i += 2;
                }
                '$' if i + 1 < n && chars[i + 1] == '(' => {
                    let end = matching_paren(&chars, i + 1)
                        .ok_or(DockerParseError::UnterminatedSubstitution { column: i + 1 })?;
                    value.extend(&chars[i..=end]);
                    i = end + 1;
                }
                '`' => {
                    let q = i;
                    let close = chars[i + 1..]
                        .iter()
                        .position(|c| *c == '`')
                        .ok_or(DockerParseError::UnterminatedQuote { column: q + 1 })?;
                    let end = i + 1 + close;
                    value.extend(&chars[i..=end]);
                    i = end + 1;
                }
                c => {
                    value.push(c);
                    i += 1;
                }
            }
        }
        let i_end = i.min(n);
        out.push(Token {
            raw: chars[start..i_end].iter().collect(),
            value,
            column: start + 1,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeSpec {
    pub source: String,
    pub destination: String,
    pub options: Option<String>,
    pub token_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub key: String,
    pub value: Option<String>,
    pub token_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DockerRunSpec {
    pub image: String,
    pub image_token: usize,
    pub detach: bool,
    pub name: Option<String>,
    pub volumes: Vec<VolumeSpec>,
    pub env: Vec<EnvSpec>,
    pub ports: Vec<String>,
    pub privileged: bool,
    pub pid_mode: Option<String>,
    /// Arguments after the image.
    pub args: Vec<String>,
    pub raw_tokens: Vec<String>,
    /// Token index of the first occurrence of each recognized flag, keyed
    /// by its long name.
    pub flag_tokens: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

enum FlagKind {
    Value(&'static str),
    Bool(&'static str),
}

const LONG_VALUE_FLAGS: &[&str] = &[
    "add-host", "annotation", "attach", "blkio-weight", "blkio-weight-device", "cap-add", "cap-drop",
    "cgroup-parent", "cgroupns", "cidfile", "cpu-period", "cpu-quota", "cpu-rt-period", "cpu-rt-runtime",
    "cpu-shares", "cpus", "cpuset-cpus", "cpuset-mems", "device", "device-cgroup-rule", "device-read-bps",
    "device-read-iops", "device-write-bps", "device-write-iops", "dns", "dns-option", "dns-search",
    "domainname", "entrypoint", "env", "env-file", "expose", "gpus", "group-add", "health-cmd",
    "health-interval", "health-retries", "health-start-period", "health-timeout", "hostname", "ip", "ip6",
    "ipc", "isolation", "kernel-memory", "label", "label-file", "link", "link-local-ip", "log-driver",
    "log-opt", "mac-address", "memory", "memory-reservation", "memory-swap", "memory-swappiness", "mount",
    "name", "network", "network-alias", "oom-score-adj", "pid", "pids-limit", "platform", "publish", "pull",
    "restart", "runtime", "security-opt", "shm-size", "stop-signal", "stop-timeout", "storage-opt",
    "sysctl", "tmpfs", "ulimit", "user", "userns", "uts", "volume", "volume-driver", "volumes-from",
    "workdir",
];

const LONG_BOOL_FLAGS: &[&str] = &[
    "detach", "disable-content-trust", "init", "interactive", "no-healthcheck", "oom-kill-disable",
    "privileged", "publish-all", "quiet", "read-only", "rm", "sig-proxy", "tty", "use-api-socket",
];

fn long_flag(name: &str) -> Option<FlagKind> {
    let name = match name {
        "net" => "network",
        "net-alias" => "network-alias",
        other => other,
    };
    if let Some(n) = LONG_VALUE_FLAGS.iter().find(|f| **f == name) {
        return Some(FlagKind::Value(n));
    }
    LONG_BOOL_FLAGS.iter().find(|f| **f == name).map(|n| FlagKind::Bool(n))
}

fn short_flag(c: char) -> Option<FlagKind> {
    Some(match c {
        'a' => FlagKind::Value("attach"),
        'c' => FlagKind::Value("cpu-shares"),
        'e' => FlagKind::Value("env"),
        'h' => FlagKind::Value("hostname"),
        'l' => FlagKind::Value("label"),
        'm' => FlagKind::Value("memory"),
        'p' => FlagKind::Value("publish"),
        'u' => FlagKind::Value("user"),
        'v' => FlagKind::Value("volume"),
        'w' => FlagKind::Value("workdir"),
        'd' => FlagKind::Bool("detach"),
        'i' => FlagKind::Bool("interactive"),
        't' => FlagKind::Bool("tty"),
        'P' => FlagKind::Bool("publish-all"),
        'q' => FlagKind::Bool("quiet"),
        _ => return None,
    })
}

/// Number of leading tokens forming `[$] [sudo [-flags]] docker [container] run`.
fn run_prefix_len(words: &[&str]) -> Option<usize> {
    let mut i = 0;
    if words.first() == Some(&"$") {
        i += 1;
    }
    if words.get(i) == Some(&"sudo") {
        i += 1;
        while words.get(i).is_some_and(|w| w.starts_with('-')) {
            i += 1;
        }
    }
    if words.get(i) != Some(&"docker") {
        return None;
    }
    i += 1;
    if words.get(i) == Some(&"container") {
        i += 1;
    }
    (words.get(i) == Some(&"run")).then_some(i + 1)
}

/// Splits `src:dst[:opts]`, keeping Windows drive letters with their path.
fn split_volume(v: &str) -> (String, String, Option<String>) {
    let mut parts: Vec<String> = Vec::new();
    for piece in v.split(':') {
        let glue = parts.last().is_some_and(|last| {
            last.len() == 1 && last.chars().all(|c| c.is_ascii_alphabetic()) && (piece.starts_with('\\') || piece.starts_with('/'))
        }) && parts.len() == 1;
        if glue {
            let last = parts.pop().unwrap_or_default();
            parts.push(format!("{last}:{piece}"));
        } else {
            parts.push(piece.to_string());
        }
    }
    match parts.len() {
        0 => (String::new(), String::new(), None),
        // anonymous volume: destination only
        1 => (String::new(), parts.remove(0), None),
        2 => (parts[0].clone(), parts[1].clone(), None),
        _ => {
            let opts = parts[2..].join(":");
            (parts[0].clone(), parts[1].clone(), Some(opts))
        }
    }
}

fn parse_mount(v: &str, token_index: usize) -> Option<VolumeSpec> {
    let mut kind = "volume";
    let mut source = String::new();
    let mut dest = String::new();
    let mut opts = Vec::new();
    for field in v.split(',') {
        let (k, val) = field.split_once('=').unwrap_or((field, ""));
        match k {
            "type" => kind = if val == "bind" { "bind" } else { "other" },
            "source" | "src" => source = val.to_string(),
            "target" | "destination" | "dst" => dest = val.to_string(),
            _ => opts.push(field.to_string()),
        }
    }
    if kind != "bind" && !source.starts_with('/') {
        // named volumes and tmpfs never expose the host filesystem
        source = format!("volume:{source}");
    }
    Some(VolumeSpec {
        source,
        destination: dest,
        options: (!opts.is_empty()).then(|| opts.join(",")),
        token_index,
    })
}

impl DockerRunSpec {
    fn apply_value(&mut self, flag: &str, value: &str, token_index: usize) {
        match flag {
            "volume" => {
                let (source, destination, options) = split_volume(value);
                self.volumes.push(VolumeSpec {
                    source,
                    destination,
                    options,
                    token_index,
                });
            }
            "mount" => self.volumes.extend(parse_mount(value, token_index)),
            "env" => {
                let (key, val) = match value.split_once('=') {
                    Some((k, v)) => (k.to_string(), Some(v.to_string())),
                    None => (value.to_string(), None),
                };
                self.env.push(EnvSpec {
                    key,
                    value: val,
                    token_index,
                });
            }
            "publish" => self.ports.push(value.to_string()),
            "name" => self.name = Some(value.to_string()),
            "pid" => self.pid_mode = Some(value.to_string()),
            _ => {}
        }
    }

    fn apply_bool(&mut self, flag: &str, on: bool) {
        match flag {
            "detach" => self.detach = on,
            "privileged" => self.privileged = on,
            _ => {}
        }
    }

    fn note_flag(&mut self, flag: &str, token_index: usize) {
        self.flag_tokens.entry(flag.to_string()).or_insert(token_index);
    }
}

/// Parses one `docker run` command. Unknown flags become warnings.
pub fn parse_run_command(cmd: &str) -> Result<DockerRunSpec, DockerParseError> {
    let tokens = tokenize(cmd)?;
    let words: Vec<&str> = tokens.iter().map(|t| t.value.as_str()).collect();
    let mut i = run_prefix_len(&words).ok_or(DockerParseError::NotRunCommand)?;
    let mut spec = DockerRunSpec {
        raw_tokens: tokens.iter().map(|t| t.raw.clone()).collect(),
        ..Default::default()
    };
    let missing = |flag: &str| DockerParseError::Incomplete(format!("flag {flag} has no value"));
    while i < tokens.len() {
        let v = words[i];
        if v == "--" {
            i += 1;
            break;
        }
        if let Some(long) = v.strip_prefix("--") {
            let (name, inline) = match long.split_once('=') {
                Some((n, val)) => (n, Some(val)),
                None => (long, None),
            };
            match long_flag(name) {
                Some(FlagKind::Value(flag)) => {
                    spec.note_flag(flag, i);
                    let (value, at) = match inline {
                        Some(val) => (val, i),
                        None => {
                            i += 1;
                            (*words.get(i).ok_or_else(|| missing(v))?, i)
                        }
                    };
                    spec.apply_value(flag, value, at);
                }
                Some(FlagKind::Bool(flag)) => {
                    spec.note_flag(flag, i);
                    let on = inline.is_none_or(|x| !matches!(x, "false" | "0"));
                    spec.apply_bool(flag, on);
                }
                None => spec
                    .warnings
                    .push(format!("unknown flag {v} at column {}", tokens[i].column)),
            }
            i += 1;
            continue;
        }
        if v.len() > 1 && v.starts_with('-') {
            let chars: Vec<char> = v[1..].chars().collect();
            let mut j = 0;
            while j < chars.len() {
                match short_flag(chars[j]) {
                    Some(FlagKind::Bool(flag)) => {
                        spec.note_flag(flag, i);
                        spec.apply_bool(flag, true);
                        j += 1;
                    }
                    Some(FlagKind::Value(flag)) => {
                        spec.note_flag(flag, i);
                        let rest: String = chars[j + 1..].iter().collect();
                        let rest = rest.strip_prefix('=').unwrap_or(&rest).to_string();
                        if rest.is_empty() {
                            i += 1;
                            let value = *words.get(i).ok_or_else(|| missing(v))?;
                            spec.apply_value(flag, value, i);
                        } else {
                            spec.apply_value(flag, &rest, i);
                        }
                        break;
                    }
                    None => {
                        spec.warnings
                            .push(format!("unknown flag -{} at column {}", chars[j], tokens[i].column));
                        j += 1;
                    }
                }
            }
            i += 1;
            continue;
        }
        break;
    }
    let Some(image) = words.get(i) else {
        return Err(DockerParseError::Incomplete("no image given".into()));
    };
    spec.image = image.to_string();
    spec.image_token = i;
    spec.args = words[i + 1..].iter().map(|s| s.to_string()).collect();
    Ok(spec)
}

fn is_run_start(line: &str) -> bool {
    let words: Vec<&str> = line.split_whitespace().collect();
    run_prefix_len(&words).is_some()
}

fn starts_new_command(line: &str) -> bool {
    let first = line.split_whitespace().next().unwrap_or("");
    matches!(first, "docker" | "sudo" | "$" | "#" | "```")
}

fn needs_more(cmd: &str) -> bool {
    matches!(
        parse_run_command(cmd),
        Err(DockerParseError::Incomplete(_))
            | Err(DockerParseError::UnterminatedQuote { .. })
            | Err(DockerParseError::UnterminatedSubstitution { .. })
    )
}

/// Extracts `docker run` commands from free text.
///
/// Backslash-newline continuations are joined first. A command that still
/// lacks its image (or ends on a flag awaiting a value) keeps absorbing the
/// following lines until it is complete, a blank line is reached or another
/// command starts; instructions copied from web pages often lose their
/// backslashes.
pub fn split_commands(text: &str) -> Vec<String> {
    let mut logical = Vec::new();
    let mut cur = String::new();
    for line in text.lines() {
        let t = line.trim_end();
        match t.strip_suffix('\\') {
            Some(head) => {
                cur.push_str(head);
                cur.push(' ');
            }
            None => {
                cur.push_str(t);
                logical.push(std::mem::take(&mut cur));
            }
        }
    }
    if !cur.trim().is_empty() {
        logical.push(cur);
    }

    let mut out = Vec::new();
    let mut i = 0;
    while i < logical.len() {
        let line = logical[i].trim();
        i += 1;
        if !is_run_start(line) {
            continue;
        }
        let line = line.strip_prefix("$ ").unwrap_or(line);
        let mut cmd = line.to_string();
        while needs_more(&cmd) && i < logical.len() {
            let next = logical[i].trim();
            if next.is_empty() || starts_new_command(next) {
                break;
            }
            cmd.push(' ');
            cmd.push_str(next);
            i += 1;
        }
        out.push(cmd);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_command() {
        let s = parse_run_command("docker run alpine").unwrap();
        assert_eq!(s.image, "alpine");
        assert!(s.volumes.is_empty() && s.env.is_empty() && s.ports.is_empty());
        assert!(!s.privileged && !s.detach && s.pid_mode.is_none());
    }

    #[test]
    fn flags_and_clusters() {
        let s = parse_run_command("sudo docker run -dit --rm -p8080:80 --name=web -e A=1 --env B nginx:1.25 nginx -g 'daemon off;'").unwrap();
        assert!(s.detach);
        assert_eq!(s.ports, vec!["8080:80"]);
        assert_eq!(s.name.as_deref(), Some("web"));
        assert_eq!(s.env.len(), 2);
        assert_eq!(s.env[1].value, None);
        assert_eq!(s.image, "nginx:1.25");
        assert_eq!(s.args, vec!["nginx", "-g", "daemon off;"]);
    }

    #[test]
    fn privileged_and_pid() {
        let s = parse_run_command("docker run --privileged --pid=host img").unwrap();
        assert!(s.privileged);
        assert_eq!(s.pid_mode.as_deref(), Some("host"));
        let s = parse_run_command("docker run --privileged=false img").unwrap();
        assert!(!s.privileged);
    }

    #[test]
    fn volumes() {
        let s = parse_run_command(r"docker run -v $(pwd):/opt/app -v 'C:\data:/data:ro' -v cache:/c -v /anon --mount type=bind,source=/etc,target=/e img").unwrap();
        assert_eq!(s.volumes[0].source, "$(pwd)");
        assert_eq!(s.volumes[1].source, r"C:\data");
        assert_eq!(s.volumes[1].options.as_deref(), Some("ro"));
        assert_eq!(s.volumes[2].source, "cache");
        assert_eq!(s.volumes[3].source, "");
        assert_eq!(s.volumes[4].source, "/etc");
        assert_eq!(s.volumes[4].destination, "/e");
    }

    #[test]
    fn errors() {
        assert_eq!(
            parse_run_command("docker run -e 'A=1 img"),
            Err(DockerParseError::UnterminatedQuote { column: 15 })
        );
        assert!(matches!(parse_run_command("docker run -d"), Err(DockerParseError::Incomplete(_))));
        assert!(matches!(parse_run_command("docker run -v"), Err(DockerParseError::Incomplete(_))));
        assert_eq!(parse_run_command("docker build ."), Err(DockerParseError::NotRunCommand));
    }

    #[test]
    fn unknown_flags_warn() {
        let s = parse_run_command("docker run --frobnicate -Z img").unwrap();
        assert_eq!(s.image, "img");
        assert_eq!(s.warnings.len(), 2);
    }

    #[test]
    fn substitution_with_spaces_is_one_token() {
        let t = tokenize("docker run -v $( pwd ):/x img").unwrap();
        assert_eq!(t[3].raw, "$( pwd ):/x");
        assert_eq!(t.len(), 5);
    }

    #[test]
    fn split_with_backslashes() {
        let text = "docker run -d \\\n  --name x \\\n  -v /a:/b \\\n  -e K=V \\\n  -p 1:1 \\\n  img\n";
        let cmds = split_commands(text);
        assert_eq!(cmds.len(), 1);
        assert_eq!(parse_run_command(&cmds[0]).unwrap().image, "img");
    }

    #[test]
    fn split_ignores_other_commands_and_prose() {
        assert!(split_commands("docker build -t x .\ndocker push x\n").is_empty());
        let text = "Start the API:\ndocker run -p 80:80 api\nThen start the worker with\n\ndocker run worker --queue jobs\n";
        let cmds = split_commands(text);
        assert_eq!(cmds, vec!["docker run -p 80:80 api", "docker run worker --queue jobs"]);
    }

    #[test]
    fn split_joins_lines_until_image() {
        let text = "docker run -p 8080:8080 -v\n/var/run/docker.sock:/var/run/docker.sock\nfurikuri/serverless-to-go\nls -la\n";
        let cmds = split_commands(text);
        assert_eq!(cmds.len(), 1);
        let s = parse_run_command(&cmds[0]).unwrap();
        assert_eq!(s.image, "furikuri/serverless-to-go");
        assert_eq!(s.volumes[0].source, "/var/run/docker.sock");
    }
}
