//! Sectioned key-value text, shared by experiment configs, model files and
//! checkpoints.
//!
//! ```text
//! # comment
//! [section attr=value]
//! key = value
//! 0.25 0.75          # a bare row of numbers
//! ```
//!
//! Section headers may carry `name=value` attributes (`[mu h=1]`). Body lines
//! are either `key = value` entries or whitespace-separated rows of numbers.
//! Text after `#` is ignored.

use std::fmt::Write as _;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub attrs: Vec<(String, String)>,
    pub entries: Vec<Entry>,
    pub rows: Vec<Row>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub values: Vec<f64>,
    pub line: usize,
}

impl Section {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            attrs: Vec::new(),
            entries: Vec::new(),
            rows: Vec::new(),
            line: 0,
        }
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        match self.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => e.value = value,
            None => self.entries.push(Entry {
                key: key.to_string(),
                value,
                line: 0,
            }),
        }
    }
}

impl Entry {
    pub fn parse<T: std::str::FromStr>(&self) -> Result<T> {
        self.value.parse().map_err(|_| Error::Parse {
            line: self.line,
            msg: format!("cannot parse `{}` for key `{}`", self.value, self.key),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    pub sections: Vec<Section>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(header) = content.strip_prefix('[') {
                let header = header.strip_suffix(']').ok_or_else(|| Error::Parse {
                    line,
                    msg: "unterminated section header".into(),
                })?;
                let mut parts = header.split_whitespace();
                let name = parts.next().ok_or_else(|| Error::Parse {
                    line,
                    msg: "empty section header".into(),
                })?;
                let mut section = Section::new(name);
                section.line = line;
                for part in parts {
                    let (k, v) = part.split_once('=').ok_or_else(|| Error::Parse {
                        line,
                        msg: format!("bad section attribute `{part}`"),
                    })?;
                    section.attrs.push((k.to_string(), v.to_string()));
                }
                sections.push(section);
                continue;
            }
            let section = sections.last_mut().ok_or_else(|| Error::Parse {
                line,
                msg: "content before the first section header".into(),
            })?;
            if let Some((key, value)) = content.split_once('=') {
                let key = key.trim();
                if key.is_empty() || key.contains(char::is_whitespace) {
                    return Err(Error::Parse {
                        line,
                        msg: format!("bad key `{key}`"),
                    });
                }
                section.entries.push(Entry {
                    key: key.to_string(),
                    value: value.trim().to_string(),
                    line,
                });
            } else {
                let values = content
                    .split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>().map_err(|_| Error::Parse {
                            line,
                            msg: format!("bad number `{tok}`"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                section.rows.push(Row { values, line });
            }
        }
        Ok(Self { sections })
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn section_mut(&mut self, name: &str) -> &mut Section {
        if let Some(i) = self.sections.iter().position(|s| s.name == name) {
            &mut self.sections[i]
        } else {
            self.sections.push(Section::new(name));
            self.sections.last_mut().unwrap()
        }
    }

    pub fn sections_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.name == name)
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let bad = || Error::InvalidArgument(format!("override `{spec}` is not section.key=value"));
        let (path, value) = spec.split_once('=').ok_or_else(bad)?;
        let (section, key) = path.trim().split_once('.').ok_or_else(bad)?;
        if section.is_empty() || key.is_empty() {
            return Err(bad());
        }
        self.section_mut(section).set(key, value.trim());
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push('[');
            out.push_str(&s.name);
            for (k, v) in &s.attrs {
                let _ = write!(out, " {k}={v}");
            }
            out.push_str("]\n");
            for e in &s.entries {
                let _ = writeln!(out, "{} = {}", e.key, e.value);
            }
            for r in &s.rows {
                out.push_str(&format_row(&r.values));
                out.push('\n');
            }
        }
        out
    }
}

/// Space-separated shortest round-trip decimals.
pub fn format_row(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:?}");
    }
    out
}

/// Parses a float, accepting `inf`/`infinity` for greedy temperatures.
pub fn parse_real(entry: &Entry) -> Result<f64> {
    match entry.value.to_ascii_lowercase().as_str() {
        "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
        _ => entry.parse(),
    }
}

/// Comma-separated list of values.
pub fn parse_list<T>(entry: &Entry, item: impl Fn(&Entry) -> Result<T>) -> Result<Vec<T>> {
    entry
        .value
        .split(',')
        .map(|tok| {
            item(&Entry {
                key: entry.key.clone(),
                value: tok.trim().to_string(),
                line: entry.line,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_entries_and_rows() {
        let text = "# top\n[shape]\nnum_states = 2 # trailing\n\n[mu h=1]\n0.5 0.5\n1 0\n";
        let doc = Document::parse(text).unwrap();
        assert_eq!(doc.sections.len(), 2);
        let shape = doc.section("shape").unwrap();
        assert_eq!(shape.get("num_states").unwrap().parse::<usize>().unwrap(), 2);
        let mu = doc.section("mu").unwrap();
        assert_eq!(mu.attr("h"), Some("1"));
        assert_eq!(mu.rows[1].values, vec![1.0, 0.0]);
        assert_eq!(mu.rows[1].line, 7);
    }

    #[test]
    fn reports_line_numbers() {
        let err = Document::parse("[a]\n1 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(Document::parse("k = v\n").is_err());
        assert!(Document::parse("[a\n").is_err());
    }

    #[test]
    fn overrides_replace_or_insert() {
        let mut doc = Document::parse("[run]\nseed = 1\n").unwrap();
        doc.apply_override("run.seed=9").unwrap();
        doc.apply_override("learner.c1 = 0.5").unwrap();
        assert_eq!(doc.section("run").unwrap().get("seed").unwrap().value, "9");
        assert_eq!(doc.section("learner").unwrap().get("c1").unwrap().value, "0.5");
        assert!(doc.apply_override("seed=3").is_err());
        assert!(doc.apply_override("run.seed").is_err());
    }

    #[test]
    fn text_round_trip() {
        let text = "[a x=1]\nk = v\n0.1 -2.5 1e-30\n\n[b]\n";
        let doc = Document::parse(text).unwrap();
        assert_eq!(doc.to_text(), text);
        assert_eq!(Document::parse(&doc.to_text()).unwrap(), doc);
    }

    #[test]
    fn reals_and_lists() {
        let e = Entry { key: "alpha".into(), value: "inf".into(), line: 1 };
        assert_eq!(parse_real(&e).unwrap(), f64::INFINITY);
        let e = Entry { key: "alpha".into(), value: "0.5, inf ,2".into(), line: 1 };
        assert_eq!(parse_list(&e, parse_real).unwrap(), vec![0.5, f64::INFINITY, 2.0]);
        let e = Entry { key: "alpha".into(), value: "abc".into(), line: 3 };
        assert!(matches!(parse_real(&e), Err(Error::Parse { line: 3, .. })));
    }
}
