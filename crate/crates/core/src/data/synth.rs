//! Synthetic two-factor datasets with a known low-rank structure.
//!
//! Each adjective `i` gets a latent vector `α_i` and each noun `j` a latent
//! vector `ν_j`, both in `ℝ^{M*}`. An example of pair `(i, j)` has features
//! `E·[α_i; ν_j] + σ·ε` for a fixed random map `E: ℝ^{2M*} → ℝ^D` and
//! standard normal `ε`. A fraction of grid cells is held out as unseen, and
//! a fraction `p` of seen-pair labels has its adjective swapped for another
//! one seen with the same noun.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::split::{split_by_uploader, DEFAULT_TEST_FRACTION};
use super::{Dataset, Example, Pair, PairVocab, Split};
use crate::error::{Error, Result};
use crate::nn::Matrix;

const HOLDOUT_ATTEMPTS: usize = 100;
const MIN_SEEN_PER_FACTOR: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub adj_count: usize,
    pub noun_count: usize,
    /// Rank of the generating structure, `M*`.
    pub latent_dim: usize,
    pub feature_dim: usize,
    pub examples_per_pair: usize,
    pub holdout_fraction: f64,
    pub label_noise: f64,
    pub noise_scale: f64,
    /// Size of the uploader pool each example draws from.
    pub uploaders: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            adj_count: 20,
            noun_count: 24,
            latent_dim: 2,
            feature_dim: 32,
            examples_per_pair: 150,
            holdout_fraction: 0.15,
            label_noise: 0.1,
            noise_scale: 0.5,
            uploaders: 400,
            test_fraction: DEFAULT_TEST_FRACTION,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.adj_count == 0 || self.noun_count == 0 {
            return bad("adjective and noun counts must be positive");
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be >= 1");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be >= 1");
        }
        if self.examples_per_pair == 0 {
            return bad("examples_per_pair must be >= 1");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must be in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.label_noise) {
            return bad("label_noise must be in [0, 1)");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return bad("noise_scale must be finite and >= 0");
        }
        if self.uploaders == 0 {
            return bad("uploaders must be >= 1");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must be in (0, 1)");
        }
        Ok(())
    }
}

/// The generating parameters, kept for diagnostics and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    /// `A_count × M*`.
    pub adj_vectors: Matrix,
    /// `N_count × M*`.
    pub noun_vectors: Matrix,
    /// `D × 2M*`.
    pub mixing: Matrix,
    /// Pair whose features generated each example (before label noise).
    pub clean_pairs: Vec<Pair>,
    /// Whether each example's label was rewritten.
    pub corrupted: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub dataset: Dataset,
    pub truth: SynthTruth,
    pub split_warnings: Vec<String>,
}

fn normal_matrix(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn draw_holdout(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Result<BTreeSet<Pair>> {
    let cells = cfg.adj_count * cfg.noun_count;
    let count = (cfg.holdout_fraction * cells as f64).round() as usize;
    if count == 0 {
        return Ok(BTreeSet::new());
    }
    for _ in 0..HOLDOUT_ATTEMPTS {
        let held: BTreeSet<Pair> = sample(rng, cells, count)
            .into_iter()
            .map(|f| Pair::new(f / cfg.noun_count, f % cfg.noun_count))
            .collect();
        let mut adj_seen = vec![cfg.noun_count; cfg.adj_count];
        let mut noun_seen = vec![cfg.adj_count; cfg.noun_count];
        for p in &held {
            adj_seen[p.adj] -= 1;
            noun_seen[p.noun] -= 1;
        }
        if adj_seen.iter().chain(&noun_seen).all(|&c| c >= MIN_SEEN_PER_FACTOR) {
            return Ok(held);
        }
    }
    Err(Error::Config(format!(
        "could not hold out {count} cells while keeping every adjective and noun in {MIN_SEEN_PER_FACTOR} seen pairs"
    )))
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let m = cfg.latent_dim;
    let adj_vectors = normal_matrix(cfg.adj_count, m, 1.0, &mut rng);
    let noun_vectors = normal_matrix(cfg.noun_count, m, 1.0, &mut rng);
    // unit-variance features before noise
    let mixing = normal_matrix(cfg.feature_dim, 2 * m, 1.0 / ((2 * m) as f64).sqrt(), &mut rng);

    let unseen = draw_holdout(cfg, &mut rng)?;
    let mut seen = BTreeSet::new();
    for a in 0..cfg.adj_count {
        for n in 0..cfg.noun_count {
            let p = Pair::new(a, n);
            if !unseen.contains(&p) {
                seen.insert(p);
            }
        }
    }
    // adjectives seen with each noun, the pool for label noise
    let mut seen_by_noun: Vec<Vec<usize>> = vec![Vec::new(); cfg.noun_count];
    for p in &seen {
        seen_by_noun[p.noun].push(p.adj);
    }

    let mut examples = Vec::with_capacity(cfg.adj_count * cfg.noun_count * cfg.examples_per_pair);
    let mut clean_pairs = Vec::with_capacity(examples.capacity());
    let mut corrupted = Vec::with_capacity(examples.capacity());
    let mut latent = vec![0.0; 2 * m];
    for a in 0..cfg.adj_count {
        for n in 0..cfg.noun_count {
            let pair = Pair::new(a, n);
            let is_seen = seen.contains(&pair);
            latent[..m].copy_from_slice(adj_vectors.row(a));
            latent[m..].copy_from_slice(noun_vectors.row(n));
            for _ in 0..cfg.examples_per_pair {
                let features: Vec<f64> = (0..cfg.feature_dim)
                    .map(|d| {
                        let clean: f64 = mixing.row(d).iter().zip(&latent).map(|(e, z)| e * z).sum();
                        clean + cfg.noise_scale * rng.sample::<f64, _>(StandardNormal)
                    })
                    .collect();
                let uploader = format!("u{:04}", rng.random_range(0..cfg.uploaders));
                let mut label = pair;
                let mut flipped = false;
                if is_seen && cfg.label_noise > 0.0 && rng.random::<f64>() < cfg.label_noise {
                    let others: Vec<usize> = seen_by_noun[n].iter().copied().filter(|&x| x != a).collect();
                    if !others.is_empty() {
                        label = Pair::new(others[rng.random_range(0..others.len())], n);
                        flipped = true;
                    }
                }
                examples.push(Example {
                    id: format!("s{:07}", examples.len()),
                    uploader,
                    pair: label,
                    split: if is_seen { Split::Train } else { Split::Unseen },
                    features,
                });
                clean_pairs.push(pair);
                corrupted.push(flipped);
            }
        }
    }

    let outcome = split_by_uploader(&examples, cfg.test_fraction, rng.random())?;
    for (e, s) in examples.iter_mut().zip(outcome.splits) {
        e.split = s;
    }

    let adjectives = (0..cfg.adj_count).map(|i| format!("adj{i:02}")).collect();
    let nouns = (0..cfg.noun_count).map(|i| format!("noun{i:02}")).collect();
    let vocab = PairVocab::new(adjectives, nouns, seen, unseen)?;
    let dataset = Dataset {
        vocab,
        dim: cfg.feature_dim,
        examples,
    };
    dataset.validate()?;
    Ok(SynthData {
        dataset,
        truth: SynthTruth {
            adj_vectors,
            noun_vectors,
            mixing,
            clean_pairs,
            corrupted,
        },
        split_warnings: outcome.warnings,
    })
}
