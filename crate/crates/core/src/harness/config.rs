//! TOML plan files, flattened into sections of string entries.
//!
//! ```text
//! # comment
//! seed = 3
//! [phantom]
//! kind = "modified-shepp-logan"
//! [method.dps]
//! strategy = "dcgrad"
//! eta = 0.5
//! ```
//!
//! Keys before the first header belong to the root section. A table is a
//! section kind; a table nested one level below it is a named section of that
//! kind. Lists become comma-separated values. Overrides use dotted paths:
//! `seed=4`, `phantom.size=64`, `method.dps.eta=2`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use toml_edit::{Document, Item, Table, Value};

use crate::error::{Error, Result};

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Scalars keep their source text; arrays become comma-separated lists.
fn value_text(text: &str, key: &str, value: &Value) -> Result<String> {
    let line = value.span().map_or(0, |s| line_of(text, s.start));
    match value {
        Value::String(s) => Ok(s.value().clone()),
        Value::Integer(_) | Value::Float(_) | Value::Boolean(_) => Ok(match value.span() {
            Some(span) => text[span].trim().to_string(),
            None => match value {
                Value::Integer(i) => i.value().to_string(),
                Value::Float(f) => f.value().to_string(),
                _ => value.as_bool().unwrap_or_default().to_string(),
            },
        }),
        Value::Array(items) => items
            .iter()
            .map(|v| match v {
                Value::Array(_) | Value::InlineTable(_) => Err(Error::Config {
                    line,
                    message: format!("{key}: lists must hold plain values"),
                }),
                v => value_text(text, key, v),
            })
            .collect::<Result<Vec<_>>>()
            .map(|v| v.join(",")),
        Value::Datetime(_) | Value::InlineTable(_) => Err(Error::Config {
            line,
            message: format!("{key}: expected a string, number, boolean or list"),
        }),
    }
}

fn entry(text: &str, key: &str, value: &Value) -> Result<Entry> {
    Ok(Entry {
        key: key.into(),
        value: value_text(text, key, value)?,
        line: value.span().map_or(0, |s| line_of(text, s.start)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// Source line, 0 for entries added by overrides.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub kind: String,
    pub name: Option<String>,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    fn new(kind: &str, name: Option<&str>, line: usize) -> Self {
        Self {
            kind: kind.into(),
            name: name.map(Into::into),
            line,
            entries: Vec::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.get(key).map(|e| e.value.as_str())
    }

    /// Parses `key` if present.
    pub fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(e) => e.value.parse().map(Some).map_err(|err| Error::Config {
                line: e.line,
                message: format!("{}: cannot parse {:?}: {err}", self.label_key(key), e.value),
            }),
        }
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    /// Comma-separated list; empty items are dropped.
    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        self.raw(key).map(|v| {
            v.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect()
        })
    }

    pub fn error(&self, key: &str, message: impl fmt::Display) -> Error {
        Error::Config {
            line: self.get(key).map_or(self.line, |e| e.line),
            message: format!("{}: {message}", self.label_key(key)),
        }
    }

    pub fn label(&self) -> String {
        match &self.name {
            Some(n) => format!("{}.{}", self.kind, n),
            None => self.kind.clone(),
        }
    }

    fn label_key(&self, key: &str) -> String {
        if self.kind.is_empty() {
            key.into()
        } else {
            format!("{}.{key}", self.label())
        }
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.push(Entry {
            key: key.into(),
            value: value.into(),
            line: 0,
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    sections: Vec<Section>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            sections: vec![Section::new("", None, 0)],
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let doc = Document::parse(text).map_err(|e| Error::Config {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().trim().to_string(),
        })?;
        let mut cfg = Self::default();
        for (key, item) in doc.iter() {
            match item {
                Item::Value(v) => {
                    let entry = entry(text, key, v)?;
                    cfg.sections[0].entries.push(entry);
                }
                Item::Table(t) => cfg.add_table(text, key, t)?,
                Item::ArrayOfTables(a) => {
                    return Err(Error::Config {
                        line: a.span().map_or(0, |s| line_of(text, s.start)),
                        message: format!("[[{key}]] is not supported, name each section: [{key}.<name>]"),
                    })
                }
                Item::None => {}
            }
        }
        Ok(cfg)
    }

    fn add_table(&mut self, text: &str, kind: &str, table: &Table) -> Result<()> {
        let line = table.span().map_or(0, |s| line_of(text, s.start));
        let mut own = Section::new(kind, None, line);
        let mut named = Vec::new();
        for (key, item) in table.iter() {
            match item {
                Item::Value(v) => own.entries.push(entry(text, key, v)?),
                Item::Table(t) => {
                    let line = t.span().map_or(line, |s| line_of(text, s.start));
                    let mut sec = Section::new(kind, Some(key), line);
                    for (k, item) in t.iter() {
                        match item {
                            Item::Value(v) => sec.entries.push(entry(text, k, v)?),
                            _ => {
                                return Err(Error::Config {
                                    line,
                                    message: format!("{kind}.{key}.{k}: sections nest at most two levels"),
                                })
                            }
                        }
                    }
                    named.push(sec);
                }
                _ => {
                    return Err(Error::Config {
                        line,
                        message: format!("{kind}.{key}: unsupported array of tables"),
                    })
                }
            }
        }
        if !table.is_implicit() || !own.entries.is_empty() {
            self.sections.push(own);
        }
        self.sections.extend(named);
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn root(&self) -> &Section {
        &self.sections[0]
    }

    pub fn section(&self, kind: &str, name: Option<&str>) -> Option<&Section> {
        self.sections
            .iter()
            .find(|s| s.kind == kind && s.name.as_deref() == name)
    }

    /// The named section, or an empty stand-in when absent.
    pub fn section_or_empty(&self, kind: &str) -> Section {
        self.section(kind, None)
            .cloned()
            .unwrap_or_else(|| Section::new(kind, None, 0))
    }

    /// Sections of one kind in file order.
    pub fn sections_of<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.kind == kind)
    }

    /// Applies a `path=value` override, creating the section if needed.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let bad = |message: String| Error::Config { line: 0, message };
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| bad(format!("override {assignment:?} is not key=value")))?;
        let parts: Vec<&str> = path.trim().split('.').collect();
        let (kind, name, key) = match parts.as_slice() {
            [key] => ("", None, *key),
            [kind, key] => (*kind, None, *key),
            [kind, name, key] => (*kind, Some(*name), *key),
            _ => return Err(bad(format!("override path {path:?} has too many parts"))),
        };
        if key.is_empty() || parts.iter().any(|p| p.is_empty()) {
            return Err(bad(format!("malformed override path {path:?}")));
        }
        let idx = match self
            .sections
            .iter()
            .position(|s| s.kind == kind && s.name.as_deref() == name)
        {
            Some(i) => i,
            None => {
                self.sections.push(Section::new(kind, name, 0));
                self.sections.len() - 1
            }
        };
        self.sections[idx].set(key, value.trim());
        Ok(())
    }

    pub fn with_overrides<S: AsRef<str>>(mut self, overrides: &[S]) -> Result<Self> {
        for o in overrides {
            self.apply_override(o.as_ref())?;
        }
        Ok(self)
    }
}
