//! Vocabulary, examples and dataset construction.

pub mod io;
pub mod prune;
pub mod split;
pub mod synth;
pub mod vocab;

use std::fmt;
use std::str::FromStr;

pub use io::{read_feature_file, render_feature_file, write_feature_file};
pub use prune::{prune_vocab, select_unseen, Census};
pub use split::{split_by_uploader, SplitOutcome};
pub use synth::{generate_synthetic, SynthConfig, SynthData, SynthTruth};
pub use vocab::{Pair, PairVocab};

use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
    Unseen,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unseen => "unseen",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "unseen" => Ok(Split::Unseen),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub uploader: String,
    pub pair: Pair,
    pub split: Split,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocab: PairVocab,
    pub dim: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    /// Checks that every example agrees with the vocabulary partition and
    /// has `dim` finite features.
    pub fn validate(&self) -> Result<()> {
        for ex in &self.examples {
            if !self.vocab.contains(ex.pair) {
                return Err(Error::Format(format!("example {} has pair {} outside the vocabulary", ex.id, ex.pair)));
            }
            let seen = self.vocab.is_seen(ex.pair);
            let unseen = self.vocab.is_unseen(ex.pair);
            let ok = match ex.split {
                Split::Train | Split::Test => seen,
                Split::Unseen => unseen,
            };
            if !ok {
                return Err(Error::Format(format!(
                    "example {} is in split {} but pair {} is {}",
                    ex.id,
                    ex.split,
                    self.vocab.pair_name(ex.pair),
                    if seen { "seen" } else if unseen { "unseen" } else { "in neither set" }
                )));
            }
            if ex.features.len() != self.dim {
                return Err(Error::Format(format!(
                    "example {} has {} features, expected {}",
                    ex.id,
                    ex.features.len(),
                    self.dim
                )));
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!("example {} has non-finite features", ex.id)));
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> Vec<&Example> {
        self.examples.iter().filter(|e| e.split == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.examples.iter().filter(|e| e.split == split).count()
    }
}

/// Stacks example features into a `batch × dim` matrix.
pub fn feature_matrix(examples: &[&Example], dim: usize) -> Matrix {
    let mut data = Vec::with_capacity(examples.len() * dim);
    for e in examples {
        data.extend_from_slice(&e.features);
    }
    Matrix::from_vec(examples.len(), dim, data).expect("feature widths validated")
}
