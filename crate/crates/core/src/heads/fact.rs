//! Bilinearly factorized head.
//!
//! Two branches map each example to an adjective matrix `A` (`A_count × M`)
//! and a noun matrix `N` (`N_count × M`). The score grid is `Y = A·Nᵀ`, so
//! `y_ij = Σ_m a_im n_jm` and the grid has rank at most `M`. Training applies
//! a softmax over the seen cells of the flattened grid only; unseen cells
//! are still scored at inference through the shared factors.
//!
//! Backward through the product: `∂L/∂A = ∂L/∂Y · N` and
//! `∂L/∂N = (∂L/∂Y)ᵀ · A`.

use rand::Rng;

use super::flat::check_batch;
use super::fork::Branch;
use crate::data::Pair;
use crate::error::{dim_err, Error, Result};
use crate::nn::params::join;
use crate::nn::{masked_softmax, Matrix, ParamView, Parameterized};

#[derive(Debug, Clone, PartialEq)]
pub struct FactHead {
    pub adj_embed: Branch,
    pub noun_embed: Branch,
    latent_dim: usize,
    adj_count: usize,
    noun_count: usize,
    seen_mask: Vec<bool>,
    #[doc(hidden)]
    pub corrupt_backward: bool,
}

/// Per-example factor matrices and score grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FactOutput {
    pub adj: Matrix,
    pub noun: Matrix,
    pub grid: Matrix,
}

impl FactHead {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: usize,
        adj_count: usize,
        noun_count: usize,
        latent_dim: usize,
        seen_mask: Vec<bool>,
        rng: &mut R,
    ) -> Result<Self> {
        if latent_dim == 0 {
            return Err(Error::Config("latent_dim must be >= 1".into()));
        }
        if seen_mask.len() != adj_count * noun_count {
            return Err(dim_err("fact seen mask", (adj_count, noun_count), (1, seen_mask.len())));
        }
        Ok(Self {
            adj_embed: Branch::new(in_dim, hidden, adj_count * latent_dim, rng),
            noun_embed: Branch::new(in_dim, hidden, noun_count * latent_dim, rng),
            latent_dim,
            adj_count,
            noun_count,
            seen_mask,
            corrupt_backward: false,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn seen_mask(&self) -> &[bool] {
        &self.seen_mask
    }

    fn split_row(&self, adj_out: &Matrix, noun_out: &Matrix, b: usize) -> (Matrix, Matrix) {
        let m = self.latent_dim;
        (
            Matrix::from_vec(self.adj_count, m, adj_out.row(b).to_vec()).expect("branch width A*M"),
            Matrix::from_vec(self.noun_count, m, noun_out.row(b).to_vec()).expect("branch width N*M"),
        )
    }

    pub fn forward(&self, trunk_out: &Matrix) -> Result<Vec<FactOutput>> {
        let a_out = self.adj_embed.forward(trunk_out)?;
        let n_out = self.noun_embed.forward(trunk_out)?;
        (0..a_out.rows())
            .map(|b| {
                let (adj, noun) = self.split_row(&a_out, &n_out, b);
                let grid = adj.matmul_nt(&noun)?;
                Ok(FactOutput { adj, noun, grid })
            })
            .collect()
    }

    /// Raw `y_ij`, one flattened grid per row.
    pub fn grid_scores(&self, trunk_out: &Matrix) -> Result<Matrix> {
        let outs = self.forward(trunk_out)?;
        let mut m = Matrix::zeros(outs.len(), self.adj_count * self.noun_count);
        for (b, o) in outs.iter().enumerate() {
            m.row_mut(b).copy_from_slice(o.grid.as_slice());
        }
        Ok(m)
    }

    fn target_index(&self, p: Pair) -> Result<usize> {
        if p.adj >= self.adj_count || p.noun >= self.noun_count {
            return Err(Error::InvalidTarget {
                target: p.adj * self.noun_count + p.noun,
                reason: format!("pair {p} outside the {}x{} grid", self.adj_count, self.noun_count),
            });
        }
        Ok(p.adj * self.noun_count + p.noun)
    }

    /// Mean masked cross-entropy over the batch.
    pub fn loss(&self, trunk_out: &Matrix, targets: &[Pair]) -> Result<f64> {
        check_batch(trunk_out, targets)?;
        let outs = self.forward(trunk_out)?;
        let mut total = 0.0;
        for (o, t) in outs.iter().zip(targets) {
            let d = masked_softmax(o.grid.as_slice(), &self.seen_mask)?;
            total += d.cross_entropy(self.target_index(*t)?)?;
        }
        Ok(total / targets.len() as f64)
    }

    pub fn backward(&mut self, trunk_out: &Matrix, targets: &[Pair]) -> Result<(f64, Matrix)> {
        check_batch(trunk_out, targets)?;
        let batch = targets.len();
        let scale = 1.0 / batch as f64;
        let (na, nn, m) = (self.adj_count, self.noun_count, self.latent_dim);
        let corrupt = self.corrupt_backward;

        let (ha, cache_a) = self.adj_embed.hidden.forward_cached(trunk_out)?;
        let a_out = self.adj_embed.out.forward(&ha)?;
        let (hn, cache_n) = self.noun_embed.hidden.forward_cached(trunk_out)?;
        let n_out = self.noun_embed.out.forward(&hn)?;

        let mut d_a_out = Matrix::zeros(batch, na * m);
        let mut d_n_out = Matrix::zeros(batch, nn * m);
        let mut total = 0.0;
        for (b, t) in targets.iter().enumerate() {
            let (adj, noun) = self.split_row(&a_out, &n_out, b);
            let grid = adj.matmul_nt(&noun)?;
            let d = masked_softmax(grid.as_slice(), &self.seen_mask)?;
            let target = self.target_index(*t)?;
            total += d.cross_entropy(target)?;
            let mut dy = Matrix::from_vec(na, nn, d.logit_grad(target)?)?;
            dy.scale(scale);
            let (mut da, dn) = fact_backward(&dy, &adj, &noun)?;
            if corrupt {
                da.scale(1.5);
            }
            d_a_out.row_mut(b).copy_from_slice(da.as_slice());
            d_n_out.row_mut(b).copy_from_slice(dn.as_slice());
        }

        let dha = self.adj_embed.out.backward(&ha, &d_a_out)?;
        let mut dh = self.adj_embed.hidden.backward(&cache_a, &dha)?;
        let dhn = self.noun_embed.out.backward(&hn, &d_n_out)?;
        dh.add_scaled(&self.noun_embed.hidden.backward(&cache_n, &dhn)?, 1.0)?;
        Ok((total * scale, dh))
    }
}

impl Parameterized for FactHead {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.adj_embed.visit_params(&join(prefix, "adj"), f);
        self.noun_embed.visit_params(&join(prefix, "noun"), f);
    }
}

/// Gradients of the loss with respect to the two factors given `∂L/∂Y`:
/// returns `(∂L/∂Y · N, (∂L/∂Y)ᵀ · A)`.
pub fn fact_backward(d_grid: &Matrix, adj: &Matrix, noun: &Matrix) -> Result<(Matrix, Matrix)> {
    if d_grid.rows() != adj.rows() || d_grid.cols() != noun.rows() || adj.cols() != noun.cols() {
        return Err(dim_err("fact_backward", d_grid.shape(), (adj.rows(), noun.rows())));
    }
    Ok((d_grid.matmul(noun)?, d_grid.matmul_tn(adj)?))
}

/// `Y = A·Nᵀ` for explicit factor matrices.
pub fn bilinear_grid(adj: &Matrix, noun: &Matrix) -> Result<Matrix> {
    adj.matmul_nt(noun)
}

/// Free-function form of [`FactHead::forward`].
pub fn fact_forward(head: &FactHead, trunk_out: &Matrix) -> Result<Vec<FactOutput>> {
    head.forward(trunk_out)
}

/// Free-function form of [`FactHead::loss`].
pub fn fact_loss(head: &FactHead, trunk_out: &Matrix, targets: &[Pair]) -> Result<f64> {
    head.loss(trunk_out, targets)
}
