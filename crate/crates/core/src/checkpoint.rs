//! Plain-text model checkpoints.
//!
//! ```text
//! #factgrid-checkpoint v1
//! #vocab-hash <sha256 hex>
//! #config kind = fact
//! #config trunk_widths = 32,32
//! param trunk.block0.fc.weight 32 32
//! <rows*cols values>
//! ```
//!
//! Values are written with 17 significant digits so a load reproduces every
//! weight bit for bit. Extra `#config` keys are kept as metadata.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::io::fmt_f64;
use crate::data::PairVocab;
use crate::error::{Error, Result};
use crate::heads::{Model, ModelSpec};
use crate::nn::Parameterized;

const MAGIC: &str = "#factgrid-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab_hash: String,
    /// Free-form metadata such as the training seed.
    pub meta: BTreeMap<String, String>,
}

pub fn render_checkpoint(model: &mut Model, vocab: &PairVocab, meta: &BTreeMap<String, String>) -> String {
    let s = &model.spec;
    let mut out = format!("{MAGIC}\n#vocab-hash {}\n", vocab.hash());
    let widths: Vec<String> = s.trunk_widths.iter().map(usize::to_string).collect();
    let _ = writeln!(out, "#config kind = {}", s.kind);
    let _ = writeln!(out, "#config in_dim = {}", s.in_dim);
    let _ = writeln!(out, "#config trunk_widths = {}", widths.join(","));
    let _ = writeln!(out, "#config branch_width = {}", s.branch_width);
    let _ = writeln!(out, "#config latent_dim = {}", s.latent_dim);
    for (k, v) in meta {
        let _ = writeln!(out, "#config {k} = {v}");
    }
    model.visit_params("", &mut |p| {
        let _ = writeln!(out, "param {} {} {}", p.name, p.shape.0, p.shape.1);
        let vals: Vec<String> = p.value.iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&vals.join(" "));
        out.push('\n');
    });
    out
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    model: &mut Model,
    vocab: &PairVocab,
    meta: &BTreeMap<String, String>,
) -> Result<()> {
    std::fs::write(path, render_checkpoint(model, vocab, meta))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>, vocab: &PairVocab) -> Result<Checkpoint> {
    parse_checkpoint(&std::fs::read_to_string(path)?, vocab)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Format(format!("checkpoint {key} is not an integer: {v:?}")))
}

pub fn parse_checkpoint(text: &str, vocab: &PairVocab) -> Result<Checkpoint> {
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l)).peekable();
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(Error::Format("not a factgrid checkpoint".into())),
    }
    let mut hash = None;
    let mut cfg: BTreeMap<String, String> = BTreeMap::new();
    while let Some(&(ln, l)) = lines.peek() {
        if let Some(h) = l.strip_prefix("#vocab-hash ") {
            hash = Some(h.trim().to_string());
        } else if let Some(kv) = l.strip_prefix("#config ") {
            let (k, v) = kv.split_once('=').ok_or_else(|| perr(ln, format!("bad config line {l:?}")))?;
            cfg.insert(k.trim().to_string(), v.trim().to_string());
        } else if !l.starts_with('#') && !l.trim().is_empty() {
            break;
        }
        lines.next();
    }
    let hash = hash.ok_or_else(|| Error::Format("checkpoint has no vocabulary hash".into()))?;
    if hash != vocab.hash() {
        return Err(Error::Incompatible(format!(
            "checkpoint was trained on a different vocabulary (hash {hash}, data has {})",
            vocab.hash()
        )));
    }
    let mut take = |key: &str| cfg.remove(key).ok_or_else(|| Error::Format(format!("checkpoint lacks config key {key}")));
    let kind = take("kind")?.parse()?;
    let in_dim = parse_usize("in_dim", &take("in_dim")?)?;
    let widths = take("trunk_widths")?;
    let trunk_widths = if widths.is_empty() {
        Vec::new()
    } else {
        widths.split(',').map(|w| parse_usize("trunk_widths", w.trim())).collect::<Result<_>>()?
    };
    let branch_width = parse_usize("branch_width", &take("branch_width")?)?;
    let latent_dim = parse_usize("latent_dim", &take("latent_dim")?)?;
    let spec = ModelSpec {
        kind,
        in_dim,
        trunk_widths,
        branch_width,
        latent_dim,
    };
    let mut model = Model::new(spec, vocab, 0)?;

    let mut tensors: Vec<(usize, String, (usize, usize), Vec<f64>)> = Vec::new();
    while let Some((ln, l)) = lines.next() {
        if l.trim().is_empty() || l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 4 || f[0] != "param" {
            return Err(perr(ln, format!("expected 'param <name> <rows> <cols>', got {l:?}")));
        }
        let shape = (parse_usize("rows", f[2])?, parse_usize("cols", f[3])?);
        let (vln, vals) = lines.next().ok_or_else(|| perr(ln, format!("missing values for {}", f[1])))?;
        let vals = vals
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|e| perr(vln, e.to_string())))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != shape.0 * shape.1 {
            return Err(perr(vln, format!("{} has {} values, expected {}", f[1], vals.len(), shape.0 * shape.1)));
        }
        tensors.push((ln, f[1].to_string(), shape, vals));
    }

    let mut idx = 0;
    let mut err = None;
    model.visit_params("", &mut |p| {
        if err.is_some() {
            return;
        }
        match tensors.get(idx) {
            Some((_, name, shape, vals)) if *name == p.name && *shape == p.shape => p.value.copy_from_slice(vals),
            Some((ln, name, shape, _)) => {
                err = Some(perr(
                    *ln,
                    format!("tensor {name} {}x{} does not match {} {}x{}", shape.0, shape.1, p.name, p.shape.0, p.shape.1),
                ))
            }
            None => err = Some(Error::Format(format!("checkpoint is missing tensor {}", p.name))),
        }
        idx += 1;
    });
    if let Some(e) = err {
        return Err(e);
    }
    if idx != tensors.len() {
        return Err(Error::Format(format!("checkpoint has {} tensors, model has {idx}", tensors.len())));
    }
    Ok(Checkpoint {
        model,
        vocab_hash: hash,
        meta: cfg,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::data::Pair;
    use crate::heads::ModelKind;

    fn vocab(extra: &str) -> PairVocab {
        let seen: BTreeSet<Pair> = [Pair::new(0, 0), Pair::new(0, 1), Pair::new(1, 1)].into();
        PairVocab::new(
            vec!["a".into(), format!("b{extra}")],
            vec!["x".into(), "y".into()],
            seen,
            [Pair::new(1, 0)].into(),
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let v = vocab("");
        for kind in ModelKind::ALL {
            let spec = ModelSpec {
                kind,
                in_dim: 3,
                trunk_widths: vec![4, 2],
                branch_width: 3,
                latent_dim: 2,
            };
            let mut m = Model::new(spec, &v, 7).unwrap();
            let meta: BTreeMap<String, String> = [("seed".to_string(), "7".to_string())].into();
            let text = render_checkpoint(&mut m, &v, &meta);
            let ck = parse_checkpoint(&text, &v).unwrap();
            assert_eq!(ck.model, m);
            assert_eq!(ck.meta, meta);
        }
    }

    #[test]
    fn vocab_mismatch_is_incompatible() {
        let spec = ModelSpec {
            kind: ModelKind::Fork,
            in_dim: 2,
            trunk_widths: vec![],
            branch_width: 2,
            latent_dim: 2,
        };
        let mut m = Model::new(spec, &vocab(""), 1).unwrap();
        let text = render_checkpoint(&mut m, &vocab(""), &BTreeMap::new());
        assert!(matches!(parse_checkpoint(&text, &vocab("2")), Err(Error::Incompatible(_))));
        assert!(parse_checkpoint("hello", &vocab("")).is_err());
        let truncated: String = text.lines().take(text.lines().count() - 1).collect::<Vec<_>>().join("\n");
        assert!(parse_checkpoint(&truncated, &vocab("")).is_err());
    }
}
