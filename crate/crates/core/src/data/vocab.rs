use std::collections::BTreeSet;
use std::fmt;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One cell of the adjective × noun grid.
///
/// Ordering is lexicographic on `(adj, noun)`, which coincides with the
/// flat index `adj * noun_count + noun`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair {
    pub adj: usize,
    pub noun: usize,
}

impl Pair {
    pub const fn new(adj: usize, noun: usize) -> Self {
        Self { adj, noun }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.adj, self.noun)
    }
}

/// Adjective and noun vocabularies plus the seen/unseen partition of the grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairVocab {
    adjectives: Vec<String>,
    nouns: Vec<String>,
    seen: BTreeSet<Pair>,
    unseen: BTreeSet<Pair>,
    seen_mask: Vec<bool>,
}

fn check_names(kind: &str, names: &[String]) -> Result<()> {
    let mut uniq = BTreeSet::new();
    for n in names {
        if n.is_empty() || n.contains(',') || n.contains(char::is_whitespace) {
            return Err(Error::Format(format!("invalid {kind} name {n:?}")));
        }
        if !uniq.insert(n) {
            return Err(Error::Format(format!("duplicate {kind} name {n:?}")));
        }
    }
    Ok(())
}

impl PairVocab {
    pub fn new(
        adjectives: Vec<String>,
        nouns: Vec<String>,
        seen: BTreeSet<Pair>,
        unseen: BTreeSet<Pair>,
    ) -> Result<Self> {
        check_names("adjective", &adjectives)?;
        check_names("noun", &nouns)?;
        let (a, n) = (adjectives.len(), nouns.len());
        for p in seen.iter().chain(&unseen) {
            if p.adj >= a || p.noun >= n {
                return Err(Error::Format(format!("pair {p} outside {a}x{n} grid")));
            }
        }
        if let Some(p) = seen.intersection(&unseen).next() {
            return Err(Error::Format(format!("pair {p} is both seen and unseen")));
        }
        let mut seen_mask = vec![false; a * n];
        for p in &seen {
            seen_mask[p.adj * n + p.noun] = true;
        }
        Ok(Self {
            adjectives,
            nouns,
            seen,
            unseen,
            seen_mask,
        })
    }

    /// Returns a copy with the unseen set replaced.
    pub fn with_unseen(&self, unseen: BTreeSet<Pair>) -> Result<Self> {
        Self::new(self.adjectives.clone(), self.nouns.clone(), self.seen.clone(), unseen)
    }

    pub fn adjectives(&self) -> &[String] {
        &self.adjectives
    }

    pub fn nouns(&self) -> &[String] {
        &self.nouns
    }

    #[inline]
    pub fn adj_count(&self) -> usize {
        self.adjectives.len()
    }

    #[inline]
    pub fn noun_count(&self) -> usize {
        self.nouns.len()
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.adjectives.len() * self.nouns.len()
    }

    pub fn seen_pairs(&self) -> &BTreeSet<Pair> {
        &self.seen
    }

    pub fn unseen_pairs(&self) -> &BTreeSet<Pair> {
        &self.unseen
    }

    /// Seen flag per grid cell, in flat-index order.
    pub fn seen_mask(&self) -> &[bool] {
        &self.seen_mask
    }

    pub fn is_seen(&self, p: Pair) -> bool {
        self.seen.contains(&p)
    }

    pub fn is_unseen(&self, p: Pair) -> bool {
        self.unseen.contains(&p)
    }

    pub fn contains(&self, p: Pair) -> bool {
        p.adj < self.adj_count() && p.noun < self.noun_count()
    }

    #[inline]
    pub fn flat_index(&self, p: Pair) -> usize {
        p.adj * self.nouns.len() + p.noun
    }

    #[inline]
    pub fn pair_at(&self, flat: usize) -> Pair {
        let n = self.nouns.len();
        Pair::new(flat / n, flat % n)
    }

    pub fn adjective_id(&self, name: &str) -> Option<usize> {
        self.adjectives.iter().position(|a| a == name)
    }

    pub fn noun_id(&self, name: &str) -> Option<usize> {
        self.nouns.iter().position(|a| a == name)
    }

    pub fn pair_name(&self, p: Pair) -> String {
        format!("{} {}", self.adjectives[p.adj], self.nouns[p.noun])
    }

    /// SHA-256 over a canonical rendering of names and both pair sets.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"adjectives:");
        h.update(self.adjectives.join(",").as_bytes());
        h.update(b"\nnouns:");
        h.update(self.nouns.join(",").as_bytes());
        for (tag, set) in [("\nseen:", &self.seen), ("\nunseen:", &self.unseen)] {
            h.update(tag.as_bytes());
            for p in set {
                h.update(format!("{}.{};", p.adj, p.noun).as_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
