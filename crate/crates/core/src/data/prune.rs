//! Vocabulary construction from a pair census.
//!
//! Pruning keeps pairs with at least `min_images` examples, then repeatedly
//! drops any pair that shares neither its adjective nor its noun with another
//! surviving pair, until nothing changes. Adjectives and nouns left without a
//! pair are removed and the survivors are reindexed in sorted name order.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::vocab::{Pair, PairVocab};
use crate::error::{Error, Result};

/// Example count per `(adjective, noun)` name pair.
pub type Census = BTreeMap<(String, String), usize>;

pub const DEFAULT_MIN_IMAGES: usize = 200;
pub const DEFAULT_MIN_UNSEEN: usize = 100;

pub fn prune_vocab(counts: &Census, min_images: usize) -> Result<PairVocab> {
    let mut alive: BTreeSet<(&str, &str)> = counts
        .iter()
        .filter(|(_, &c)| c >= min_images)
        .map(|((a, n), _)| (a.as_str(), n.as_str()))
        .collect();

    loop {
        let mut adj_support: BTreeMap<&str, usize> = BTreeMap::new();
        let mut noun_support: BTreeMap<&str, usize> = BTreeMap::new();
        for &(a, n) in &alive {
            *adj_support.entry(a).or_default() += 1;
            *noun_support.entry(n).or_default() += 1;
        }
        let before = alive.len();
        alive.retain(|(a, n)| adj_support[a] >= 2 || noun_support[n] >= 2);
        if alive.len() == before {
            break;
        }
    }

    if alive.is_empty() {
        return Err(Error::EmptyVocab);
    }
    let adjectives: Vec<String> = alive
        .iter()
        .map(|(a, _)| a.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let nouns: Vec<String> = alive
        .iter()
        .map(|(_, n)| n.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let seen = alive
        .iter()
        .map(|(a, n)| {
            Pair::new(
                adjectives.binary_search_by(|x| x.as_str().cmp(a)).unwrap(),
                nouns.binary_search_by(|x| x.as_str().cmp(n)).unwrap(),
            )
        })
        .collect();
    PairVocab::new(adjectives, nouns, seen, BTreeSet::new())
}

/// Pairs outside the seen set whose adjective and noun both exist in
/// `vocab`, with at least `min_unseen` examples.
pub fn select_unseen(counts: &Census, vocab: &PairVocab, min_unseen: usize) -> BTreeSet<Pair> {
    counts
        .iter()
        .filter(|(_, &c)| c >= min_unseen)
        .filter_map(|((a, n), _)| Some(Pair::new(vocab.adjective_id(a)?, vocab.noun_id(n)?)))
        .filter(|p| !vocab.is_seen(*p))
        .collect()
}

/// Rebuilds a census with the same structure as a vocabulary's seen set.
pub fn census_of(vocab: &PairVocab, count: usize) -> Census {
    vocab
        .seen_pairs()
        .iter()
        .map(|p| {
            (
                (vocab.adjectives()[p.adj].clone(), vocab.nouns()[p.noun].clone()),
                count,
            )
        })
        .collect()
}

/// Removes manually excluded pairs (e.g. tags whose usage contradicts their
/// literal meaning) before pruning.
pub fn apply_exclusions(counts: &Census, excluded: &BTreeSet<(String, String)>) -> Census {
    counts
        .iter()
        .filter(|(k, _)| !excluded.contains(*k))
        .map(|(k, v)| (k.clone(), *v))
        .collect()
}

/// Reads an exclusion list: one `adjective noun` per line, `#` comments allowed.
pub fn read_exclusion_list(path: impl AsRef<Path>) -> Result<BTreeSet<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(n), None) => {
                out.insert((a.to_string(), n.to_string()));
            }
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected `adjective noun`, got {line:?}"),
                })
            }
        }
    }
    Ok(out)
}
