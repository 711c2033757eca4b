//! Config assembly: file, then `--set` overrides, then dedicated flags.

use std::fmt;
use std::path::Path;

use barrierlab::{Error as CoreError, SimConfig};
use toml::{Table, Value};

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_VIOLATIONS: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Failure { code: EXIT_IO, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        if e.is_config() {
            Failure::config(e.to_string())
        } else {
            Failure::io(e.to_string())
        }
    }
}

pub fn read_file(path: &Path) -> Result<Table, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back to a bare
/// string so `policy.method=pbsp` works without quotes.
pub fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets a dotted key, creating intermediate tables.
pub fn set_path(table: &mut Table, key: &str, value: Value) -> Result<(), Failure> {
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Failure::config(format!("malformed key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = match entry {
            Value::Table(t) => t,
            _ => return Err(Failure::config(format!("`{p}` in `{key}` is not a table"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn has_path(table: &Table, key: &str) -> bool {
    let mut cur = table;
    let mut parts = key.split('.').peekable();
    while let Some(p) = parts.next() {
        match (cur.get(p), parts.peek()) {
            (Some(_), None) => return true,
            (Some(Value::Table(t)), Some(_)) => cur = t,
            _ => return false,
        }
    }
    false
}

pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), Failure> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| Failure::config(format!("override `{assignment}` is not key=value")))?;
    set_path(table, key, parse_value(value))
}

/// Deserialises and validates; unknown keys are rejected.
pub fn build(table: Table) -> Result<SimConfig, Failure> {
    let cfg: SimConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Failure::config(format!("invalid config: {}", e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Integers as `7`, `1,4,9` or an inclusive range `1..10`, used for seeds and sweep
/// parameters.
pub fn parse_u64_list(spec: &str) -> Result<Vec<u64>, String> {
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| format!("bad integer `{s}` in `{spec}`"));
    let mut out = Vec::new();
    for part in spec.split(',') {
        if let Some((a, b)) = part.split_once("..") {
            let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
            if a > b {
                return Err(format!("empty range `{part}`"));
            }
            out.extend(a..=b);
        } else {
            out.push(num(part)?);
        }
    }
    Ok(out)
}
