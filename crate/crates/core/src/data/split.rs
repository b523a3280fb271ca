//! Uploader-disjoint train/test assignment.
//!
//! Within each pair, an uploader's images move as one block. Blocks are
//! visited in a seeded random order and sent to test while that brings the
//! test count closer to `test_fraction` of the pair's images. At least one
//! block always stays in train.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Example, Pair, Split};
use crate::error::{Error, Result};

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    /// One entry per input example; examples already marked
    /// [`Split::Unseen`] keep that split.
    pub splits: Vec<Split>,
    pub warnings: Vec<String>,
}

pub fn split_by_uploader(examples: &[Example], test_fraction: f64, seed: u64) -> Result<SplitOutcome> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::OutOfRange {
            what: "test_fraction",
            value: test_fraction,
            limit: 1.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut splits: Vec<Split> = examples
        .iter()
        .map(|e| if e.split == Split::Unseen { Split::Unseen } else { Split::Train })
        .collect();
    let mut warnings = Vec::new();

    // pair -> uploader -> example indices, all in deterministic order
    let mut groups: BTreeMap<Pair, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
    for (i, e) in examples.iter().enumerate() {
        if e.split != Split::Unseen {
            groups
                .entry(e.pair)
                .or_default()
                .entry(e.uploader.as_str())
                .or_default()
                .push(i);
        }
    }

    for (pair, by_uploader) in groups {
        if by_uploader.len() < 2 {
            warnings.push(format!("pair {pair} has a single uploader; all images kept in train"));
            continue;
        }
        let total: usize = by_uploader.values().map(Vec::len).sum();
        let target = test_fraction * total as f64;
        let mut blocks: Vec<&Vec<usize>> = by_uploader.values().collect();
        blocks.shuffle(&mut rng);

        let mut in_test = 0usize;
        let mut remaining_blocks = blocks.len();
        for block in blocks {
            let with = (in_test + block.len()) as f64;
            if remaining_blocks > 1 && (with - target).abs() < (in_test as f64 - target).abs() {
                in_test += block.len();
                remaining_blocks -= 1;
                for &i in block {
                    splits[i] = Split::Test;
                }
            }
        }
    }
    Ok(SplitOutcome { splits, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::collections::BTreeSet;

    fn ex(i: usize, pair: Pair, uploader: &str) -> Example {
        Example {
            id: format!("e{i:05}"),
            uploader: uploader.to_string(),
            pair,
            split: Split::Train,
            features: Vec::new(),
        }
    }

    #[test]
    fn distinct_uploaders_hit_fraction() {
        for n in [5usize, 10, 37, 100, 151] {
            let examples: Vec<_> = (0..n).map(|i| ex(i, Pair::new(0, 0), &format!("u{i}"))).collect();
            let out = split_by_uploader(&examples, 0.2, 7).unwrap();
            let test = out.splits.iter().filter(|s| **s == Split::Test).count() as f64;
            assert!((test - 0.2 * n as f64).abs() <= 1.0, "n={n} test={test}");
            assert!(out.warnings.is_empty());
        }
    }

    #[test]
    fn single_uploader_stays_in_train() {
        let examples: Vec<_> = (0..20).map(|i| ex(i, Pair::new(1, 2), "solo")).collect();
        let out = split_by_uploader(&examples, 0.2, 1).unwrap();
        assert!(out.splits.iter().all(|s| *s == Split::Train));
        assert_eq!(out.warnings.len(), 1);
    }

    #[test]
    fn unseen_examples_untouched() {
        let mut examples: Vec<_> = (0..10).map(|i| ex(i, Pair::new(0, 0), &format!("u{i}"))).collect();
        examples[3].split = Split::Unseen;
        let out = split_by_uploader(&examples, 0.5, 1).unwrap();
        assert_eq!(out.splits[3], Split::Unseen);
    }

    #[test]
    fn keeps_a_training_block() {
        let examples = vec![ex(0, Pair::new(0, 0), "a"), ex(1, Pair::new(0, 0), "b")];
        let out = split_by_uploader(&examples, 0.9, 3).unwrap();
        assert!(out.splits.contains(&Split::Train));
    }

    #[test]
    fn fraction_bounds() {
        assert!(split_by_uploader(&[], 0.0, 0).is_err());
        assert!(split_by_uploader(&[], 1.0, 0).is_err());
        assert!(split_by_uploader(&[], 0.3, 0).unwrap().splits.is_empty());
    }

    #[test]
    fn random_census_has_no_uploader_overlap() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..50 {
            let examples: Vec<_> = (0..400)
                .map(|i| {
                    let p = Pair::new(rng.random_range(0..4), rng.random_range(0..4));
                    ex(i, p, &format!("u{}", rng.random_range(0..30)))
                })
                .collect();
            let out = split_by_uploader(&examples, 0.2, seed).unwrap();
            let mut sides: BTreeMap<(Pair, &str), BTreeSet<Split>> = BTreeMap::new();
            for (e, s) in examples.iter().zip(&out.splits) {
                sides.entry((e.pair, &e.uploader)).or_default().insert(*s);
            }
            assert!(sides.values().all(|s| s.len() == 1));
        }
    }
}
