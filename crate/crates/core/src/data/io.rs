//! Text feature files.
//!
//! ```text
//! #factgrid v1 D=<dim>
//! #adjectives <name>,<name>,...
//! #nouns <name>,<name>,...
//! <example_id>,<uploader_id>,<adjective>,<noun>,<train|test|unseen>,<f_1>,...,<f_D>
//! ```
//!
//! Features are written with 17 significant digits so that every `f64`
//! survives a write/read cycle bit for bit. Other `#` lines after the header
//! are skipped.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::{Dataset, Example, Pair, PairVocab, Split};
use crate::error::{Error, Result};

const MAGIC: &str = "#factgrid v1";

/// Formats an `f64` with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn render_feature_file(ds: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} D={}", ds.dim);
    let _ = writeln!(out, "#adjectives {}", ds.vocab.adjectives().join(","));
    let _ = writeln!(out, "#nouns {}", ds.vocab.nouns().join(","));
    for e in &ds.examples {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            e.id,
            e.uploader,
            ds.vocab.adjectives()[e.pair.adj],
            ds.vocab.nouns()[e.pair.noun],
            e.split
        );
        for v in &e.features {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

pub fn write_feature_file(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    std::fs::write(path, render_feature_file(ds))?;
    Ok(())
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_feature_file(&std::fs::read_to_string(path)?)
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn split_names(list: &str) -> Vec<String> {
    if list.trim().is_empty() {
        Vec::new()
    } else {
        list.split(',').map(|s| s.trim().to_string()).collect()
    }
}

pub fn parse_feature_file(text: &str) -> Result<Dataset> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (ln, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let dim = header
        .strip_prefix(MAGIC)
        .and_then(|rest| rest.trim().strip_prefix("D="))
        .ok_or_else(|| parse_err(ln, format!("expected `{MAGIC} D=<dim>`")))?
        .parse::<usize>()
        .map_err(|e| parse_err(ln, format!("bad dimension: {e}")))?;

    let (ln, adj_line) = lines.next().ok_or_else(|| parse_err(2, "missing #adjectives line"))?;
    let adjectives = split_names(
        adj_line
            .strip_prefix("#adjectives")
            .ok_or_else(|| parse_err(ln, "expected `#adjectives`"))?,
    );
    let (ln, noun_line) = lines.next().ok_or_else(|| parse_err(3, "missing #nouns line"))?;
    let nouns = split_names(
        noun_line
            .strip_prefix("#nouns")
            .ok_or_else(|| parse_err(ln, "expected `#nouns`"))?,
    );
    // validates names before any lookup
    let empty = PairVocab::new(adjectives.clone(), nouns.clone(), BTreeSet::new(), BTreeSet::new())
        .map_err(|e| parse_err(ln, e.to_string()))?;

    let mut examples = Vec::new();
    let mut seen = BTreeSet::new();
    let mut unseen = BTreeSet::new();
    for (ln, line) in lines {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 5 {
            return Err(parse_err(ln, format!("expected at least 5 fields, found {}", fields.len())));
        }
        if fields.len() != 5 + dim {
            return Err(Error::Format(format!(
                "line {ln}: {} features, header declares D={dim}",
                fields.len() - 5
            )));
        }
        let adj = empty
            .adjective_id(fields[2])
            .ok_or_else(|| parse_err(ln, format!("unknown adjective {:?}", fields[2])))?;
        let noun = empty
            .noun_id(fields[3])
            .ok_or_else(|| parse_err(ln, format!("unknown noun {:?}", fields[3])))?;
        let split: Split = fields[4].parse().map_err(|e: String| parse_err(ln, e))?;
        let features = fields[5..]
            .iter()
            .map(|f| {
                let v: f64 = f.trim().parse().map_err(|e| parse_err(ln, format!("bad feature {f:?}: {e}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(ln, format!("non-finite feature {f:?}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(parse_err(ln, "empty example or uploader id"));
        }
        let pair = Pair::new(adj, noun);
        if split == Split::Unseen {
            unseen.insert(pair);
        } else {
            seen.insert(pair);
        }
        if seen.contains(&pair) && unseen.contains(&pair) {
            return Err(parse_err(ln, format!("pair {:?} appears in both seen and unseen splits", empty.pair_name(pair))));
        }
        examples.push(Example {
            id: fields[0].to_string(),
            uploader: fields[1].to_string(),
            pair,
            split,
            features,
        });
    }

    let vocab = PairVocab::new(adjectives, nouns, seen, unseen)?;
    let ds = Dataset { vocab, dim, examples };
    ds.validate()?;
    Ok(ds)
}
