//! Flat `key = value` configuration files.
//!
//! ```text
//! # comments start with '#', also after a value
//! kappa_hz = 1.4e6
//! cool_powers_w = 5e-6, 10e-6, 20e-6
//!
//! [mode.light]
//! m = 1
//! fit_window_hz = 350e3:390e3
//! ```
//!
//! Keys before the first header are global. Each `[mode.<label>]` header
//! opens a section that runs until the next header. Every key must be
//! consumed by the reader: leftovers are reported as unknown keys, with
//! their line numbers.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// A set of key/value pairs from one part of the file.
#[derive(Debug, Clone)]
pub struct Table {
    origin: String,
    header_line: usize,
    entries: BTreeMap<String, Entry>,
}

#[derive(Debug, Clone)]
pub struct Section {
    pub kind: String,
    pub label: String,
    pub table: Table,
}

#[derive(Debug, Clone)]
pub struct ConfigDoc {
    pub global: Table,
    pub sections: Vec<Section>,
}

impl ConfigDoc {
    pub fn parse(origin: &str, text: &str) -> Result<Self> {
        let mut global = Table::new(origin, 0);
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let inner = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(format!("{origin}:{line_no}"), "unterminated section header"))?;
                let (kind, label) = inner
                    .split_once('.')
                    .ok_or_else(|| Error::parse(format!("{origin}:{line_no}"), "section header must look like [kind.label]"))?;
                let (kind, label) = (kind.trim(), label.trim());
                if kind.is_empty() || label.is_empty() {
                    return Err(Error::parse(format!("{origin}:{line_no}"), "empty section kind or label"));
                }
                if sections.iter().any(|s| s.kind == kind && s.label == label) {
                    return Err(Error::parse(format!("{origin}:{line_no}"), format!("duplicate section [{kind}.{label}]")));
                }
                sections.push(Section {
                    kind: kind.to_string(),
                    label: label.to_string(),
                    table: Table::new(origin, line_no),
                });
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("{origin}:{line_no}"), "expected `key = value`"))?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::parse(format!("{origin}:{line_no}"), format!("invalid key `{key}`")));
            }
            let table = match sections.last_mut() {
                Some(s) => &mut s.table,
                None => &mut global,
            };
            if let Some(prev) = table.entries.get(key) {
                return Err(Error::parse(
                    format!("{origin}:{line_no}"),
                    format!("duplicate key `{key}` (first set on line {})", prev.line),
                ));
            }
            table.entries.insert(
                key.to_string(),
                Entry {
                    value: value.trim().to_string(),
                    line: line_no,
                },
            );
        }
        Ok(Self { global, sections })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&path.display().to_string(), &text)
    }

    /// Fails on the first key nobody asked for.
    pub fn finish(&self) -> Result<()> {
        self.global.finish()?;
        for s in &self.sections {
            s.table.finish()?;
        }
        Ok(())
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

impl Table {
    fn new(origin: &str, header_line: usize) -> Self {
        Self {
            origin: origin.to_string(),
            header_line,
            entries: BTreeMap::new(),
        }
    }

    fn location(&self, line: usize) -> String {
        format!("{}:{}", self.origin, line)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    pub fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(Some)
                .map_err(|err| Error::parse(self.location(e.line), format!("`{key}`: {err}"))),
        }
    }

    pub fn require_parsed<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.take_parsed(key)?.ok_or_else(|| {
            let line = self.header_line;
            Error::parse(self.location(line), format!("missing required key `{key}`"))
        })
    }

    pub fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.take_parsed(key)?;
        if let Some(x) = v {
            if !x.is_finite() {
                return Err(Error::parse(self.origin.clone(), format!("`{key}` must be finite")));
            }
        }
        Ok(v)
    }

    pub fn require_f64(&mut self, key: &str) -> Result<f64> {
        let line = self.entries.get(key).map(|e| e.line).unwrap_or(self.header_line);
        let v: f64 = self.require_parsed(key)?;
        if !v.is_finite() {
            return Err(Error::parse(self.location(line), format!("`{key}` must be finite")));
        }
        Ok(v)
    }

    pub fn take_string(&mut self, key: &str) -> Option<String> {
        self.take(key).map(|e| e.value)
    }

    pub fn take_bool(&mut self, key: &str) -> Result<Option<bool>> {
        self.take_parsed(key)
    }

    /// Comma-separated list of numbers.
    pub fn take_f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.take(key) else {
            return Ok(None);
        };
        let mut out = Vec::new();
        for item in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let x: f64 = item
                .parse()
                .map_err(|err| Error::parse(self.location(e.line), format!("`{key}`: `{item}`: {err}")))?;
            if !x.is_finite() {
                return Err(Error::parse(self.location(e.line), format!("`{key}`: non-finite value")));
            }
            out.push(x);
        }
        Ok(Some(out))
    }

    /// Comma-separated list of `lo:hi` ranges.
    pub fn take_ranges(&mut self, key: &str) -> Result<Vec<(f64, f64)>> {
        let Some(e) = self.take(key) else {
            return Ok(Vec::new());
        };
        e.value
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|item| parse_range(item).map_err(|m| Error::parse(self.location(e.line), format!("`{key}`: {m}"))))
            .collect()
    }

    pub fn take_range(&mut self, key: &str) -> Result<Option<(f64, f64)>> {
        let mut ranges = self.take_ranges(key)?;
        match ranges.len() {
            0 => Ok(None),
            1 => Ok(ranges.pop()),
            _ => Err(Error::parse(self.origin.clone(), format!("`{key}` takes a single lo:hi range"))),
        }
    }

    /// Colon-separated tuples, e.g. `freq:height:width, freq:height:width`.
    pub fn take_tuples(&mut self, key: &str, arity: usize) -> Result<Vec<Vec<f64>>> {
        let Some(e) = self.take(key) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        for item in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let parts: std::result::Result<Vec<f64>, _> = item.split(':').map(|p| p.trim().parse::<f64>()).collect();
            let parts = parts.map_err(|err| Error::parse(self.location(e.line), format!("`{key}`: `{item}`: {err}")))?;
            if parts.len() != arity {
                return Err(Error::parse(
                    self.location(e.line),
                    format!("`{key}`: `{item}` needs {arity} colon-separated numbers"),
                ));
            }
            out.push(parts);
        }
        Ok(out)
    }

    pub fn finish(&self) -> Result<()> {
        if let Some((key, e)) = self.entries.iter().min_by_key(|(_, e)| e.line) {
            return Err(Error::parse(self.location(e.line), format!("unknown key `{key}`")));
        }
        Ok(())
    }
}

/// Parses `lo:hi` with `lo < hi`.
pub fn parse_range(item: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = item
        .split_once(':')
        .ok_or_else(|| format!("`{item}` is not a lo:hi range"))?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("`{item}`: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("`{item}`: {e}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("`{item}`: need finite lo < hi"));
    }
    Ok((lo, hi))
}
