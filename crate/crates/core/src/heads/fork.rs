//! Independent adjective and noun classifiers over a shared trunk.
//!
//! Each branch is one hidden [`Block`] followed by a linear output layer.
//! The pair score is the product of the two marginals, so every grid cell,
//! seen or not, gets a score.

use rand::Rng;

use super::flat::check_batch;
use super::trunk::Block;
use crate::data::Pair;
use crate::error::{Error, Result};
use crate::nn::params::join;
use crate::nn::{softmax, LinearLayer, MaskedDistribution, Matrix, ParamView, Parameterized};

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub hidden: Block,
    pub out: LinearLayer,
}

impl Branch {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            hidden: Block::new(in_dim, hidden, rng),
            out: LinearLayer::new(hidden, out_dim, rng),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.out.out_dim()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.out.forward(&self.hidden.forward(x)?)
    }

    /// Runs forward, lets `grad_of` turn the outputs into output gradients,
    /// then backpropagates them. Returns `dL/dx`.
    pub fn forward_backward<T>(
        &mut self,
        x: &Matrix,
        grad_of: impl FnOnce(&Matrix) -> Result<(T, Matrix)>,
    ) -> Result<(T, Matrix)> {
        let (h, cache) = self.hidden.forward_cached(x)?;
        let y = self.out.forward(&h)?;
        let (value, dy) = grad_of(&y)?;
        let dh = self.out.backward(&h, &dy)?;
        Ok((value, self.hidden.backward(&cache, &dh)?))
    }
}

impl Parameterized for Branch {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.hidden.visit_params(&join(prefix, "hidden"), f);
        self.out.visit_params(&join(prefix, "out"), f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForkHead {
    pub adj_branch: Branch,
    pub noun_branch: Branch,
}

fn check_range(t: &[Pair], adj_count: usize, noun_count: usize) -> Result<()> {
    for p in t {
        if p.adj >= adj_count || p.noun >= noun_count {
            return Err(Error::InvalidTarget {
                target: p.adj * noun_count + p.noun,
                reason: format!("pair {p} outside the {adj_count}x{noun_count} grid"),
            });
        }
    }
    Ok(())
}

/// Summed cross-entropy of row-wise softmaxes; the gradient is scaled by `scale`.
fn softmax_xent(logits: &Matrix, targets: impl Iterator<Item = usize>, scale: f64) -> Result<(f64, Matrix)> {
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for (b, t) in targets.enumerate() {
        let d = softmax(logits.row(b));
        total += d.cross_entropy(t)?;
        for (o, g) in grad.row_mut(b).iter_mut().zip(d.logit_grad(t)?) {
            *o = g * scale;
        }
    }
    Ok((total, grad))
}

impl ForkHead {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: usize,
        adj_count: usize,
        noun_count: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            adj_branch: Branch::new(in_dim, hidden, adj_count, rng),
            noun_branch: Branch::new(in_dim, hidden, noun_count, rng),
        }
    }

    pub fn adj_count(&self) -> usize {
        self.adj_branch.out_dim()
    }

    pub fn noun_count(&self) -> usize {
        self.noun_branch.out_dim()
    }

    /// Per-row adjective and noun distributions.
    pub fn forward(&self, trunk_out: &Matrix) -> Result<(Vec<MaskedDistribution>, Vec<MaskedDistribution>)> {
        let a = self.adj_branch.forward(trunk_out)?;
        let n = self.noun_branch.forward(trunk_out)?;
        Ok((
            (0..a.rows()).map(|b| softmax(a.row(b))).collect(),
            (0..n.rows()).map(|b| softmax(n.row(b))).collect(),
        ))
    }

    /// Mean over the batch of `CE_adj + CE_noun`.
    pub fn loss(&self, trunk_out: &Matrix, targets: &[Pair]) -> Result<f64> {
        check_batch(trunk_out, targets)?;
        check_range(targets, self.adj_count(), self.noun_count())?;
        let (pa, pn) = self.forward(trunk_out)?;
        let mut total = 0.0;
        for ((a, n), t) in pa.iter().zip(&pn).zip(targets) {
            total += a.cross_entropy(t.adj)? + n.cross_entropy(t.noun)?;
        }
        Ok(total / targets.len() as f64)
    }

    pub fn backward(&mut self, trunk_out: &Matrix, targets: &[Pair]) -> Result<(f64, Matrix)> {
        check_batch(trunk_out, targets)?;
        check_range(targets, self.adj_count(), self.noun_count())?;
        let scale = 1.0 / targets.len() as f64;
        let (la, mut dh) = self
            .adj_branch
            .forward_backward(trunk_out, |y| softmax_xent(y, targets.iter().map(|t| t.adj), scale))?;
        let (ln, dhn) = self
            .noun_branch
            .forward_backward(trunk_out, |y| softmax_xent(y, targets.iter().map(|t| t.noun), scale))?;
        dh.add_scaled(&dhn, 1.0)?;
        Ok(((la + ln) * scale, dh))
    }

    /// `p_A(i)·p_N(j)` for every cell, one flattened grid per row.
    pub fn grid_scores(&self, trunk_out: &Matrix) -> Result<Matrix> {
        let (pa, pn) = self.forward(trunk_out)?;
        let (na, nn) = (self.adj_count(), self.noun_count());
        let mut out = Matrix::zeros(pa.len(), na * nn);
        for (b, (a, n)) in pa.iter().zip(&pn).enumerate() {
            let grid = fork_pair_score(a.probs(), n.probs());
            out.row_mut(b).copy_from_slice(grid.as_slice());
        }
        Ok(out)
    }
}

impl Parameterized for ForkHead {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.adj_branch.visit_params(&join(prefix, "adj"), f);
        self.noun_branch.visit_params(&join(prefix, "noun"), f);
    }
}

/// Outer product of the marginals, `scores[i][j] = adj[i] · noun[j]`.
pub fn fork_pair_score(adj_probs: &[f64], noun_probs: &[f64]) -> Matrix {
    Matrix::from_fn(adj_probs.len(), noun_probs.len(), |i, j| adj_probs[i] * noun_probs[j])
}

/// Free-function form of [`ForkHead::forward`].
pub fn fork_forward(
    head: &ForkHead,
    trunk_out: &Matrix,
) -> Result<(Vec<MaskedDistribution>, Vec<MaskedDistribution>)> {
    head.forward(trunk_out)
}

/// Free-function form of [`ForkHead::loss`].
pub fn fork_loss(head: &ForkHead, trunk_out: &Matrix, targets: &[Pair]) -> Result<f64> {
    head.loss(trunk_out, targets)
}
