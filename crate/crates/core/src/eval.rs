//! Top-k accuracy, per-pair gap reports and retrieval.
//!
//! Ranking ties are broken by ascending flat grid index (for pairs) and by
//! ascending example id (for retrieval), so every result is deterministic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{feature_matrix, Example, Pair, PairVocab};
use crate::error::{Error, Result};
use crate::heads::Model;
use crate::nn::Matrix;

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];
const SCORE_CHUNK: usize = 256;

/// Anything that scores every grid cell for a batch of feature rows.
pub trait PairScorer: Sync {
    fn name(&self) -> String;
    /// `batch × cell_count`, flat-index order.
    fn score_grid(&self, x: &Matrix) -> Result<Matrix>;
    fn can_score(&self, p: Pair) -> bool;
}

impl PairScorer for Model {
    fn name(&self) -> String {
        match self.kind() {
            crate::heads::ModelKind::Fact => format!("fact(M={})", self.spec.latent_dim),
            k => k.to_string(),
        }
    }

    fn score_grid(&self, x: &Matrix) -> Result<Matrix> {
        self.grid_scores(x)
    }

    fn can_score(&self, p: Pair) -> bool {
        Model::can_score(self, p)
    }
}

/// Which grid cells compete in a top-k ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidatePolicy {
    Seen,
    SeenAndUnseen,
    UnseenOnly,
}

impl CandidatePolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            CandidatePolicy::Seen => "seen",
            CandidatePolicy::SeenAndUnseen => "seen+unseen",
            CandidatePolicy::UnseenOnly => "unseen",
        }
    }

    /// Candidate flat indices, ascending.
    pub fn candidates(self, vocab: &PairVocab) -> Vec<usize> {
        let set: BTreeSet<Pair> = match self {
            CandidatePolicy::Seen => vocab.seen_pairs().clone(),
            CandidatePolicy::SeenAndUnseen => vocab.seen_pairs().union(vocab.unseen_pairs()).copied().collect(),
            CandidatePolicy::UnseenOnly => vocab.unseen_pairs().clone(),
        };
        set.into_iter().map(|p| vocab.flat_index(p)).collect()
    }
}

impl fmt::Display for CandidatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CandidatePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen" => Ok(CandidatePolicy::Seen),
            "seen+unseen" | "all" => Ok(CandidatePolicy::SeenAndUnseen),
            "unseen" | "unseen-only" => Ok(CandidatePolicy::UnseenOnly),
            other => Err(Error::Config(format!("unknown candidate policy {other:?}"))),
        }
    }
}

/// Zero-based rank of `target` among `candidates`: the number of candidates
/// scoring higher, plus those scoring equal with a smaller index.
pub fn target_rank(scores: &[f64], target: usize, candidates: &[usize]) -> Result<usize> {
    if !candidates.contains(&target) {
        return Err(Error::InvalidQuery(format!("target cell {target} is not a candidate")));
    }
    let t = scores[target];
    Ok(candidates
        .iter()
        .filter(|&&c| {
            let s = scores[c];
            s > t || (s == t && c < target)
        })
        .count())
}

pub fn topk_hit(scores: &[f64], target: usize, k: usize, candidates: &[usize]) -> Result<bool> {
    if k == 0 {
        return Err(Error::InvalidQuery("k must be >= 1".into()));
    }
    Ok(target_rank(scores, target, candidates)? < k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairAccuracy {
    pub pair: Pair,
    pub flat: usize,
    pub adjective: String,
    pub noun: String,
    pub seen: bool,
    pub n_examples: usize,
    /// One entry per `k` of the report.
    pub acc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub policy: CandidatePolicy,
    pub ks: Vec<usize>,
    pub rows: Vec<PairAccuracy>,
    /// Unweighted mean over pairs, one entry per `k`.
    pub mean: Vec<f64>,
    pub examples: usize,
    pub warnings: Vec<String>,
}

impl EvalReport {
    pub fn mean_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.mean[i])
    }

    pub fn pair_set(&self) -> BTreeSet<Pair> {
        self.rows.iter().map(|r| r.pair).collect()
    }

    pub fn render(&self) -> String {
        let mut out = String::from("pair,adjective,noun,seen,n_examples");
        for k in &self.ks {
            let _ = write!(out, ",top{k}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{},{}", r.flat, r.adjective, r.noun, r.seen, r.n_examples);
            for a in &r.acc {
                let _ = write!(out, ",{a}");
            }
            out.push('\n');
        }
        let _ = writeln!(
            out,
            "#summary model={} policy={} pairs={} examples={}",
            self.model,
            self.policy,
            self.rows.len(),
            self.examples
        );
        let _ = write!(out, "#summary");
        for (k, m) in self.ks.iter().zip(&self.mean) {
            let _ = write!(out, " top{k}={m}");
        }
        out.push('\n');
        for w in &self.warnings {
            let _ = writeln!(out, "#summary warning {w}");
        }
        out
    }

    /// Inverse of [`render`](Self::render).
    pub fn parse(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| perr(1, "empty report".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 5 || cols[..5] != ["pair", "adjective", "noun", "seen", "n_examples"] {
            return Err(perr(1, "unexpected report header".into()));
        }
        let ks = cols[5..]
            .iter()
            .map(|c| c.strip_prefix("top").and_then(|k| k.parse().ok()).ok_or_else(|| perr(1, format!("bad column {c:?}"))))
            .collect::<Result<Vec<usize>>>()?;
        let mut report = EvalReport {
            model: String::new(),
            policy: CandidatePolicy::Seen,
            ks: ks.clone(),
            rows: Vec::new(),
            mean: vec![f64::NAN; ks.len()],
            examples: 0,
            warnings: Vec::new(),
        };
        for (ln, line) in lines {
            if let Some(rest) = line.strip_prefix("#summary") {
                let rest = rest.trim();
                if let Some(w) = rest.strip_prefix("warning ") {
                    report.warnings.push(w.to_string());
                    continue;
                }
                for kv in rest.split_whitespace() {
                    let (k, v) = kv.split_once('=').ok_or_else(|| perr(ln, format!("bad summary field {kv:?}")))?;
                    let num = |v: &str| v.parse::<f64>().map_err(|e| perr(ln, e.to_string()));
                    match k {
                        "model" => report.model = v.to_string(),
                        "policy" => report.policy = v.parse()?,
                        "pairs" => {}
                        "examples" => report.examples = v.parse().map_err(|_| perr(ln, format!("bad count {v:?}")))?,
                        other => {
                            let k: usize = other
                                .strip_prefix("top")
                                .and_then(|k| k.parse().ok())
                                .ok_or_else(|| perr(ln, format!("unknown summary key {other:?}")))?;
                            let i = ks.iter().position(|&x| x == k).ok_or_else(|| perr(ln, format!("top{k} not in header")))?;
                            report.mean[i] = num(v)?;
                        }
                    }
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 + ks.len() {
                return Err(perr(ln, format!("expected {} fields", 5 + ks.len())));
            }
            let flat: usize = f[0].parse().map_err(|_| perr(ln, "bad pair index".into()))?;
            let acc = f[5..]
                .iter()
                .map(|v| v.parse::<f64>().map_err(|e| perr(ln, e.to_string())))
                .collect::<Result<Vec<f64>>>()?;
            report.rows.push(PairAccuracy {
                pair: Pair::new(0, 0),
                flat,
                adjective: f[1].to_string(),
                noun: f[2].to_string(),
                seen: f[3].parse().map_err(|_| perr(ln, "bad seen flag".into()))?,
                n_examples: f[4].parse().map_err(|_| perr(ln, "bad example count".into()))?,
                acc,
            });
        }
        Ok(report)
    }

    /// Restores `Pair` fields of a parsed report from its flat indices.
    pub fn resolve_pairs(&mut self, vocab: &PairVocab) {
        for r in &mut self.rows {
            r.pair = vocab.pair_at(r.flat);
        }
    }
}

/// Scores examples in fixed-size chunks; chunks run in parallel but the
/// output order is the input order.
pub fn score_examples<S: PairScorer + ?Sized>(scorer: &S, examples: &[&Example], dim: usize) -> Result<Vec<Vec<f64>>> {
    let chunks: Vec<Result<Vec<Vec<f64>>>> = examples
        .par_chunks(SCORE_CHUNK)
        .map(|chunk| {
            let grid = scorer.score_grid(&feature_matrix(chunk, dim))?;
            Ok((0..grid.rows()).map(|r| grid.row(r).to_vec()).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(examples.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

/// Per-pair top-k accuracy over `pairs`, macro-averaged.
///
/// Examples whose pair is not in `pairs` are ignored. Pairs without any
/// example are left out of the table with a warning.
pub fn topk_accuracy<S: PairScorer + ?Sized>(
    scorer: &S,
    vocab: &PairVocab,
    dim: usize,
    examples: &[&Example],
    pairs: &BTreeSet<Pair>,
    ks: &[usize],
    policy: CandidatePolicy,
) -> Result<EvalReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidQuery("k values must be >= 1".into()));
    }
    let candidates = policy.candidates(vocab);
    if candidates.is_empty() {
        return Err(Error::InvalidQuery(format!("no candidates under policy {policy}")));
    }
    let cand_set: BTreeSet<usize> = candidates.iter().copied().collect();
    for p in pairs {
        if !cand_set.contains(&vocab.flat_index(*p)) {
            return Err(Error::InvalidQuery(format!(
                "pair {} is not among the {policy} candidates",
                vocab.pair_name(*p)
            )));
        }
    }
    if let Some(&c) = candidates.iter().find(|&&c| !scorer.can_score(vocab.pair_at(c))) {
        return Err(Error::Unsupported(format!(
            "{} cannot score pair {} (it only classifies pairs seen in training)",
            scorer.name(),
            vocab.pair_name(vocab.pair_at(c))
        )));
    }

    let selected: Vec<&Example> = examples.iter().copied().filter(|e| pairs.contains(&e.pair)).collect();
    let scores = score_examples(scorer, &selected, dim)?;
    let mut hits: BTreeMap<Pair, (usize, Vec<usize>)> = pairs.iter().map(|p| (*p, (0, vec![0; ks.len()]))).collect();
    for (e, s) in selected.iter().zip(&scores) {
        let rank = target_rank(s, vocab.flat_index(e.pair), &candidates)?;
        let entry = hits.get_mut(&e.pair).expect("pair filtered above");
        entry.0 += 1;
        for (h, &k) in entry.1.iter_mut().zip(ks) {
            if rank < k {
                *h += 1;
            }
        }
    }

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (p, (n, h)) in hits {
        if n == 0 {
            warnings.push(format!("pair {} has no examples; excluded", vocab.pair_name(p)));
            continue;
        }
        rows.push(PairAccuracy {
            pair: p,
            flat: vocab.flat_index(p),
            adjective: vocab.adjectives()[p.adj].clone(),
            noun: vocab.nouns()[p.noun].clone(),
            seen: vocab.is_seen(p),
            n_examples: n,
            acc: h.iter().map(|&x| x as f64 / n as f64).collect(),
        });
    }
    let mean = (0..ks.len())
        .map(|i| {
            if rows.is_empty() {
                0.0
            } else {
                rows.iter().map(|r| r.acc[i]).sum::<f64>() / rows.len() as f64
            }
        })
        .collect();
    Ok(EvalReport {
        model: scorer.name(),
        policy,
        ks: ks.to_vec(),
        rows,
        mean,
        examples: selected.len(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGap {
    pub flat: usize,
    pub adjective: String,
    pub noun: String,
    pub acc_a: f64,
    pub acc_b: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub k: usize,
    pub model_a: String,
    pub model_b: String,
    /// Descending by `acc_a − acc_b`, ties by flat index.
    pub rows: Vec<PairGap>,
}

impl GapReport {
    pub fn top(&self, n: usize) -> &[PairGap] {
        &self.rows[..n.min(self.rows.len())]
    }

    pub fn bottom(&self, n: usize) -> &[PairGap] {
        &self.rows[self.rows.len().saturating_sub(n)..]
    }

    pub fn render(&self) -> String {
        let mut out = format!("pair,adjective,noun,{}_top{k},{}_top{k},gap\n", self.model_a, self.model_b, k = self.k);
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{},{}", r.flat, r.adjective, r.noun, r.acc_a, r.acc_b, r.gap);
        }
        out
    }
}

pub fn accuracy_gap_report(a: &EvalReport, b: &EvalReport, k: usize) -> Result<GapReport> {
    let ia = a.ks.iter().position(|&x| x == k).ok_or_else(|| Error::Comparison(format!("first report has no top{k}")))?;
    let ib = b.ks.iter().position(|&x| x == k).ok_or_else(|| Error::Comparison(format!("second report has no top{k}")))?;
    let bmap: BTreeMap<usize, &PairAccuracy> = b.rows.iter().map(|r| (r.flat, r)).collect();
    if bmap.len() != a.rows.len() || a.rows.iter().any(|r| !bmap.contains_key(&r.flat)) {
        return Err(Error::Comparison("reports cover different pair sets".into()));
    }
    let mut rows: Vec<PairGap> = a
        .rows
        .iter()
        .map(|r| {
            let acc_b = bmap[&r.flat].acc[ib];
            PairGap {
                flat: r.flat,
                adjective: r.adjective.clone(),
                noun: r.noun.clone(),
                acc_a: r.acc[ia],
                acc_b,
                gap: r.acc[ia] - acc_b,
            }
        })
        .collect();
    rows.sort_by(|x, y| y.gap.total_cmp(&x.gap).then(x.flat.cmp(&y.flat)));
    Ok(GapReport {
        k,
        model_a: a.model.clone(),
        model_b: b.model.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit {
    pub id: String,
    pub pair: Pair,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub query: Pair,
    /// Descending by score, ties by example id.
    pub hits: Vec<RetrievalHit>,
}

impl RetrievalResult {
    /// Fraction of the first `n` hits whose label equals the query.
    pub fn precision_at(&self, n: usize) -> f64 {
        let top = &self.hits[..n.min(self.hits.len())];
        if top.is_empty() {
            return 0.0;
        }
        top.iter().filter(|h| h.pair == self.query).count() as f64 / top.len() as f64
    }

    /// Mean of `1/rank` over hits labelled with the query pair.
    pub fn mean_reciprocal_rank(&self) -> f64 {
        let ranks: Vec<f64> = self
            .hits
            .iter()
            .enumerate()
            .filter(|(_, h)| h.pair == self.query)
            .map(|(i, _)| 1.0 / (i + 1) as f64)
            .collect();
        if ranks.is_empty() {
            0.0
        } else {
            ranks.iter().sum::<f64>() / ranks.len() as f64
        }
    }

    pub fn render(&self, vocab: &PairVocab) -> String {
        let mut out = format!("#query {}\nrank,example_id,label,score\n", vocab.pair_name(self.query));
        for (i, h) in self.hits.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", i + 1, h.id, vocab.pair_name(h.pair), h.score);
        }
        out
    }
}

/// Ranks every example by its score for the `query` cell.
pub fn retrieve<S: PairScorer + ?Sized>(
    scorer: &S,
    vocab: &PairVocab,
    dim: usize,
    examples: &[&Example],
    query: Pair,
    top_n: usize,
) -> Result<RetrievalResult> {
    if !vocab.contains(query) {
        return Err(Error::InvalidQuery(format!("pair {query} outside the vocabulary grid")));
    }
    if !scorer.can_score(query) {
        return Err(Error::Unsupported(format!(
            "{} cannot score {}: it only classifies pairs seen in training",
            scorer.name(),
            vocab.pair_name(query)
        )));
    }
    if top_n == 0 {
        return Ok(RetrievalResult { query, hits: Vec::new() });
    }
    let cell = vocab.flat_index(query);
    let scores = score_examples(scorer, examples, dim)?;
    let mut hits: Vec<RetrievalHit> = examples
        .iter()
        .zip(&scores)
        .map(|(e, s)| RetrievalHit {
            id: e.id.clone(),
            pair: e.pair,
            score: s[cell],
        })
        .collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
    hits.truncate(top_n);
    Ok(RetrievalResult { query, hits })
}
