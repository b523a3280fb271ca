use rand::Rng;

use crate::error::Result;
use crate::nn::params::join;
use crate::nn::{LinearLayer, Matrix, PReluLayer, ParamGroup, ParamView, Parameterized};

/// `PReLU(x·Wᵀ + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub linear: LinearLayer,
    pub act: PReluLayer,
}

/// Activations a [`Block`] needs for its backward pass.
#[derive(Debug, Clone)]
pub struct BlockCache {
    input: Matrix,
    pre: Matrix,
}

impl Block {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            linear: LinearLayer::new(in_dim, out_dim, rng),
            act: PReluLayer::new(out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.linear.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.linear.out_dim()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.act.forward(&self.linear.forward(x)?)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, BlockCache)> {
        let pre = self.linear.forward(x)?;
        let out = self.act.forward(&pre)?;
        Ok((
            out,
            BlockCache {
                input: x.clone(),
                pre,
            },
        ))
    }

    pub fn backward(&mut self, cache: &BlockCache, dy: &Matrix) -> Result<Matrix> {
        let dpre = self.act.backward(&cache.pre, dy)?;
        self.linear.backward(&cache.input, &dpre)
    }
}

impl Parameterized for Block {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.linear.visit_params(&join(prefix, "fc"), f);
        self.act.visit_params(&join(prefix, "prelu"), f);
    }
}

/// Shared stack of [`Block`]s in front of every head. With no widths the
/// trunk is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Trunk {
    pub blocks: Vec<Block>,
    in_dim: usize,
}

impl Trunk {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, widths: &[usize], rng: &mut R) -> Self {
        let mut blocks = Vec::with_capacity(widths.len());
        let mut prev = in_dim;
        for &w in widths {
            blocks.push(Block::new(prev, w, rng));
            prev = w;
        }
        Self { blocks, in_dim }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.blocks.last().map_or(self.in_dim, Block::out_dim)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.forward(&h)?;
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &Matrix) -> Result<(Matrix, Vec<BlockCache>)> {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (out, cache) = b.forward_cached(&h)?;
            caches.push(cache);
            h = out;
        }
        Ok((h, caches))
    }

    /// Returns the gradient with respect to the trunk input.
    pub fn backward(&mut self, caches: &[BlockCache], dy: &Matrix) -> Result<Matrix> {
        let mut d = dy.clone();
        for (b, c) in self.blocks.iter_mut().zip(caches).rev() {
            d = b.backward(c, &d)?;
        }
        Ok(d)
    }
}

impl Parameterized for Trunk {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_params(&join(prefix, &format!("block{i}")), &mut |mut p| {
                p.group = ParamGroup::Trunk;
                f(p)
            });
        }
    }
}
