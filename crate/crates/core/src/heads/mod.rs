//! The three classifier heads over a shared trunk.
//!
//! - [`FlatHead`]: a softmax over seen pairs only.
//! - [`ForkHead`]: separate adjective and noun softmaxes; pair score is the
//!   product of marginals.
//! - [`FactHead`]: per-example factor matrices multiplied into a score grid,
//!   trained with a softmax masked to seen cells.
//!
//! [`Model`] bundles a [`Trunk`] with one head and is what the optimizer,
//! evaluator and checkpoint code operate on. Grids are flattened with
//! `index(i, j) = i * noun_count + j` everywhere.

pub mod fact;
pub mod flat;
pub mod fork;
pub mod trunk;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use fact::{bilinear_grid, fact_backward, fact_forward, fact_loss, FactHead, FactOutput};
pub use flat::{flat_forward, flat_loss, FlatHead};
pub use fork::{fork_forward, fork_loss, fork_pair_score, Branch, ForkHead};
pub use trunk::{Block, Trunk};

use crate::data::{Pair, PairVocab};
use crate::error::{Error, Result};
use crate::nn::gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
use crate::nn::{Matrix, ParamView, Parameterized};

pub const DEFAULT_LATENT_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Flat,
    Fork,
    Fact,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Flat, ModelKind::Fork, ModelKind::Fact];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Flat => "flat",
            ModelKind::Fork => "fork",
            ModelKind::Fact => "fact",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(ModelKind::Flat),
            "fork" => Ok(ModelKind::Fork),
            "fact" => Ok(ModelKind::Fact),
            other => Err(Error::Config(format!("unknown model kind {other:?} (expected flat, fork or fact)"))),
        }
    }
}

/// Architecture description; together with a vocabulary it fixes every
/// tensor shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub in_dim: usize,
    pub trunk_widths: Vec<usize>,
    /// Hidden width of each fork/fact branch.
    pub branch_width: usize,
    /// `M`; ignored by flat and fork heads.
    pub latent_dim: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 {
            return Err(Error::Config("input dimension must be >= 1".into()));
        }
        if self.trunk_widths.contains(&0) || self.branch_width == 0 {
            return Err(Error::Config("layer widths must be >= 1".into()));
        }
        if self.kind == ModelKind::Fact && self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be >= 1 for the fact head".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Flat(FlatHead),
    Fork(ForkHead),
    Fact(FactHead),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub trunk: Trunk,
    pub head: Head,
    adj_count: usize,
    noun_count: usize,
    seen_mask: Vec<bool>,
}

impl Model {
    /// Seeded initialization; the trunk is drawn before the head.
    pub fn new(spec: ModelSpec, vocab: &PairVocab, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk = Trunk::new(spec.in_dim, &spec.trunk_widths, &mut rng);
        let h = trunk.out_dim();
        let (na, nn) = (vocab.adj_count(), vocab.noun_count());
        let mask = vocab.seen_mask().to_vec();
        if na == 0 || nn == 0 {
            return Err(Error::Config("vocabulary has no adjectives or no nouns".into()));
        }
        let head = match spec.kind {
            ModelKind::Flat => Head::Flat(FlatHead::new(h, &mask, nn, &mut rng)?),
            ModelKind::Fork => Head::Fork(ForkHead::new(h, spec.branch_width, na, nn, &mut rng)),
            ModelKind::Fact => Head::Fact(FactHead::new(
                h,
                spec.branch_width,
                na,
                nn,
                spec.latent_dim,
                mask.clone(),
                &mut rng,
            )?),
        };
        Ok(Self {
            spec,
            trunk,
            head,
            adj_count: na,
            noun_count: nn,
            seen_mask: mask,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    pub fn adj_count(&self) -> usize {
        self.adj_count
    }

    pub fn noun_count(&self) -> usize {
        self.noun_count
    }

    pub fn seen_mask(&self) -> &[bool] {
        &self.seen_mask
    }

    /// Flat heads only score the pairs they were trained on.
    pub fn can_score(&self, p: Pair) -> bool {
        if p.adj >= self.adj_count || p.noun >= self.noun_count {
            return false;
        }
        match self.head {
            Head::Flat(_) => self.seen_mask[p.adj * self.noun_count + p.noun],
            _ => true,
        }
    }

    pub fn trunk_forward(&self, x: &Matrix) -> Result<Matrix> {
        self.trunk.forward(x)
    }

    /// Mean training loss over a batch.
    pub fn loss(&self, x: &Matrix, targets: &[Pair]) -> Result<f64> {
        let h = self.trunk.forward(x)?;
        match &self.head {
            Head::Flat(f) => f.loss(&h, targets),
            Head::Fork(f) => f.loss(&h, targets),
            Head::Fact(f) => f.loss(&h, targets),
        }
    }

    /// Adds the gradient of the mean batch loss to every gradient buffer and
    /// returns the loss. Call [`Parameterized::zero_grad`] first.
    pub fn loss_and_grad(&mut self, x: &Matrix, targets: &[Pair]) -> Result<f64> {
        let (h, caches) = self.trunk.forward_cached(x)?;
        let (loss, dh) = match &mut self.head {
            Head::Flat(f) => f.backward(&h, targets)?,
            Head::Fork(f) => f.backward(&h, targets)?,
            Head::Fact(f) => f.backward(&h, targets)?,
        };
        self.trunk.backward(&caches, &dh)?;
        Ok(loss)
    }

    /// Score for every grid cell, one flattened grid per input row.
    ///
    /// Fact: raw `y_ij`. Fork: `p_A(i)·p_N(j)`. Flat: class probability on
    /// seen cells and 0 elsewhere (check [`can_score`](Self::can_score)).
    pub fn grid_scores(&self, x: &Matrix) -> Result<Matrix> {
        let h = self.trunk.forward(x)?;
        match &self.head {
            Head::Flat(f) => f.grid_scores(&h),
            Head::Fork(f) => f.grid_scores(&h),
            Head::Fact(f) => f.grid_scores(&h),
        }
    }

    #[doc(hidden)]
    pub fn set_corrupt_backward(&mut self, on: bool) {
        if let Head::Fact(f) = &mut self.head {
            f.corrupt_backward = on;
        }
    }
}

impl Parameterized for Model {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.trunk.visit_params(&crate::nn::params::join(prefix, "trunk"), f);
        let hp = crate::nn::params::join(prefix, "head");
        match &mut self.head {
            Head::Flat(h) => h.visit_params(&hp, f),
            Head::Fork(h) => h.visit_params(&hp, f),
            Head::Fact(h) => h.visit_params(&hp, f),
        }
    }
}

/// Writes `values` into the `index`-th parameter tensor.
fn write_param(model: &mut Model, index: usize, values: &[f64]) {
    let mut k = 0;
    model.visit_params("", &mut |p| {
        if k == index {
            p.value.copy_from_slice(values);
        }
        k += 1;
    });
}

/// Finite-difference check of every parameter tensor (trunk and head) of
/// `model` for the mean loss on `(x, targets)`.
pub fn check_model_gradients(
    model: &mut Model,
    x: &Matrix,
    targets: &[Pair],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    model.zero_grad();
    model.loss_and_grad(x, targets)?;
    let mut tensors = Vec::new();
    model.visit_params("", &mut |p| {
        tensors.push((p.name.clone(), p.shape, p.value.to_vec(), p.grad.to_vec()));
    });
    // probing uses loss() only, so the corruption hook cannot leak into it
    let mut report = GradCheckReport::empty(cfg.tol);
    for (index, (_name, shape, values, grads)) in tensors.into_iter().enumerate() {
        let params = Matrix::from_vec(shape.0, shape.1, values.clone())?;
        let analytic = Matrix::from_vec(shape.0, shape.1, grads)?;
        let mut failed_eval = None;
        let tensor_cfg = GradCheckConfig {
            seed: cfg.seed.wrapping_add(index as u64),
            ..cfg.clone()
        };
        let r = grad_check(
            |p| {
                write_param(model, index, p.as_slice());
                match model.loss(x, targets) {
                    Ok(l) => l,
                    Err(e) => {
                        failed_eval = Some(e);
                        f64::NAN
                    }
                }
            },
            &params,
            &analytic,
            &tensor_cfg,
        );
        write_param(model, index, &values);
        if let Some(e) = failed_eval {
            return Err(e);
        }
        report.merge(r);
    }
    Ok(report)
}
