//! One softmax class per seen pair.

use rand::Rng;

use crate::data::Pair;
use crate::error::{Error, Result};
use crate::nn::{masked_softmax, LinearLayer, MaskedDistribution, Matrix, ParamView, Parameterized};

#[derive(Debug, Clone, PartialEq)]
pub struct FlatHead {
    pub classifier: LinearLayer,
    /// Seen pairs in flat-index order; class `k` is `classes[k]`.
    classes: Vec<Pair>,
    noun_count: usize,
    /// Grid cell -> class.
    class_of: Vec<Option<usize>>,
}

impl FlatHead {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        seen_mask: &[bool],
        noun_count: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let classes: Vec<Pair> = seen_mask
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(f, _)| Pair::new(f / noun_count, f % noun_count))
            .collect();
        if classes.is_empty() {
            return Err(Error::Config("flat head needs at least one seen pair".into()));
        }
        let classifier = LinearLayer::new(in_dim, classes.len(), rng);
        Ok(Self::from_parts(classifier, classes, seen_mask.len(), noun_count))
    }

    fn from_parts(classifier: LinearLayer, classes: Vec<Pair>, cells: usize, noun_count: usize) -> Self {
        let mut class_of = vec![None; cells];
        for (k, p) in classes.iter().enumerate() {
            class_of[p.adj * noun_count + p.noun] = Some(k);
        }
        Self {
            classifier,
            classes,
            noun_count,
            class_of,
        }
    }

    pub fn classes(&self) -> &[Pair] {
        &self.classes
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of(&self, p: Pair) -> Option<usize> {
        self.class_of.get(p.adj * self.noun_count + p.noun).copied().flatten()
    }

    fn target_class(&self, p: Pair) -> Result<usize> {
        self.class_of(p).ok_or_else(|| Error::InvalidTarget {
            target: p.adj * self.noun_count + p.noun,
            reason: format!("pair {p} is not a seen pair of the flat head"),
        })
    }

    /// Softmax over the seen-pair classes for each row of `trunk_out`.
    pub fn forward(&self, trunk_out: &Matrix) -> Result<Vec<MaskedDistribution>> {
        let logits = self.classifier.forward(trunk_out)?;
        let mask = vec![true; self.classes.len()];
        (0..logits.rows()).map(|b| masked_softmax(logits.row(b), &mask)).collect()
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, trunk_out: &Matrix, targets: &[Pair]) -> Result<f64> {
        check_batch(trunk_out, targets)?;
        let dists = self.forward(trunk_out)?;
        let mut total = 0.0;
        for (d, t) in dists.iter().zip(targets) {
            total += d.cross_entropy(self.target_class(*t)?)?;
        }
        Ok(total / targets.len() as f64)
    }

    /// Accumulates gradients of the mean loss; returns `(loss, dL/d trunk_out)`.
    pub fn backward(&mut self, trunk_out: &Matrix, targets: &[Pair]) -> Result<(f64, Matrix)> {
        check_batch(trunk_out, targets)?;
        let dists = self.forward(trunk_out)?;
        let scale = 1.0 / targets.len() as f64;
        let mut dlogits = Matrix::zeros(targets.len(), self.classes.len());
        let mut total = 0.0;
        for (b, (d, t)) in dists.iter().zip(targets).enumerate() {
            let k = self.target_class(*t)?;
            total += d.cross_entropy(k)?;
            for (o, g) in dlogits.row_mut(b).iter_mut().zip(d.logit_grad(k)?) {
                *o = g * scale;
            }
        }
        let dh = self.classifier.backward(trunk_out, &dlogits)?;
        Ok((total * scale, dh))
    }

    /// Class probabilities spread onto the grid; unseen cells stay 0.
    pub fn grid_scores(&self, trunk_out: &Matrix) -> Result<Matrix> {
        let dists = self.forward(trunk_out)?;
        let mut out = Matrix::zeros(dists.len(), self.class_of.len());
        for (b, d) in dists.iter().enumerate() {
            let row = out.row_mut(b);
            for (p, prob) in self.classes.iter().zip(d.probs()) {
                row[p.adj * self.noun_count + p.noun] = *prob;
            }
        }
        Ok(out)
    }
}

pub(crate) fn check_batch(x: &Matrix, targets: &[Pair]) -> Result<()> {
    if x.rows() != targets.len() || targets.is_empty() {
        return Err(crate::error::dim_err("loss batch", x.shape(), (targets.len(), x.cols())));
    }
    Ok(())
}

impl Parameterized for FlatHead {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.classifier.visit_params(&crate::nn::params::join(prefix, "classifier"), f);
    }
}

/// Free-function form of [`FlatHead::forward`].
pub fn flat_forward(head: &FlatHead, trunk_out: &Matrix) -> Result<Vec<MaskedDistribution>> {
    head.forward(trunk_out)
}

/// Free-function form of [`FlatHead::loss`].
pub fn flat_loss(head: &FlatHead, trunk_out: &Matrix, targets: &[Pair]) -> Result<f64> {
    head.loss(trunk_out, targets)
}
