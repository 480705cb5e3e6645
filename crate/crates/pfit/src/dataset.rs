//! Plain-text dataset files.
//!
//! ```text
//! pfit-dataset 1 dim=<D> classes=<C> count=<N>
//! <id> <label> <f_1> ... <f_D>
//! ```
//!
//! Regression files declare `target=regression` in place of `classes=<C>` and
//! carry a real-valued label. Fields are separated by ASCII whitespace, blank
//! lines and lines starting with `#` are skipped, and numbers use Rust's
//! locale-free decimal syntax. Writers print the shortest representation that
//! parses back to the same `f64`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use pfit_core::{Dataset, Example, Target, Task};

use crate::error::{Error, Result};

const MAGIC: &str = "pfit-dataset";
const VERSION: &str = "1";

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn save_dataset(path: &Path, dataset: &Dataset) -> Result<()> {
    fs::write(path, format_dataset(dataset)).map_err(|e| Error::io(path, e))
}

fn number<T: FromStr>(line: usize, field: &str, token: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::parse(line, field, format!("cannot parse {token:?}")))
}

struct Header {
    task: Task,
    dim: usize,
    count: usize,
}

fn parse_header(line: usize, text: &str) -> Result<Header> {
    let mut tokens = text.split_ascii_whitespace();
    if tokens.next() != Some(MAGIC) {
        return Err(Error::parse(line, "header", format!("expected {MAGIC:?}")));
    }
    match tokens.next() {
        Some(VERSION) => {}
        other => {
            return Err(Error::parse(
                line,
                "version",
                format!("unsupported version {:?}", other.unwrap_or("")),
            ))
        }
    }
    let (mut dim, mut task, mut count) = (None, None, None);
    for token in tokens {
        let Some((key, value)) = token.split_once('=') else {
            return Err(Error::parse(line, "header", format!("expected key=value, found {token:?}")));
        };
        match key {
            "dim" => dim = Some(number(line, key, value)?),
            "count" => count = Some(number(line, key, value)?),
            "classes" => {
                task = Some(Task::Classification {
                    classes: number(line, key, value)?,
                })
            }
            "target" if value == "regression" => task = Some(Task::Regression),
            _ => return Err(Error::parse(line, key, format!("unexpected {token:?}"))),
        }
    }
    let missing = |f: &str| Error::parse(line, f, "missing from header");
    Ok(Header {
        task: task.ok_or_else(|| missing("classes"))?,
        dim: dim.ok_or_else(|| missing("dim"))?,
        count: count.ok_or_else(|| missing("count"))?,
    })
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let Some((header_line, header)) = lines.next() else {
        return Err(Error::parse(1, "header", "file is empty"));
    };
    let Header { task, dim, count } = parse_header(header_line, header)?;
    let mut seen = BTreeSet::new();
    let mut examples = Vec::with_capacity(count);
    let mut last_line = header_line;
    for (line, record) in lines {
        last_line = line;
        let mut tokens = record.split_ascii_whitespace();
        let id: u64 = number(line, "id", tokens.next().unwrap_or(""))?;
        if !seen.insert(id) {
            return Err(Error::parse(line, "id", format!("duplicate id {id}")));
        }
        let label = tokens
            .next()
            .ok_or_else(|| Error::parse(line, "label", "missing"))?;
        let target = match task {
            Task::Classification { classes } => {
                let label: usize = number(line, "label", label)?;
                if label >= classes {
                    return Err(Error::LabelOutOfRange { id, label, classes });
                }
                Target::Class(label)
            }
            Task::Regression => {
                let y: f64 = number(line, "label", label)?;
                if !y.is_finite() {
                    return Err(Error::NonFinite { line, id });
                }
                Target::Value(y)
            }
        };
        let input = tokens
            .map(|t| number::<f64>(line, "feature", t))
            .collect::<Result<Vec<_>>>()?;
        if input.len() != dim {
            return Err(Error::DimensionMismatch {
                id,
                expected: dim,
                actual: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { line, id });
        }
        examples.push(Example { id, input, target });
    }
    if examples.len() != count {
        return Err(Error::parse(
            last_line,
            "count",
            format!("header declares {count} records, found {}", examples.len()),
        ));
    }
    Ok(Dataset::new(task, dim, examples)?)
}

pub fn format_dataset(dataset: &Dataset) -> String {
    let mut out = String::new();
    let task = match dataset.task {
        Task::Classification { classes } => format!("classes={classes}"),
        Task::Regression => "target=regression".to_string(),
    };
    let _ = writeln!(
        out,
        "{MAGIC} {VERSION} dim={} {task} count={}",
        dataset.dim,
        dataset.len()
    );
    for ex in &dataset.examples {
        let _ = match ex.target {
            Target::Class(c) => write!(out, "{} {c}", ex.id),
            Target::Value(y) => write!(out, "{} {y:?}", ex.id),
        };
        for v in &ex.input {
            let _ = write!(out, " {v:?}");
        }
        out.push('\n');
    }
    out
}
