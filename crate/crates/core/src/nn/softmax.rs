//! Softmax restricted to a subset of categories, and the matching
//! cross-entropy loss.
//!
//! Masked-out categories get probability exactly zero and never receive
//! gradient. The max-shift used for stability is taken over masked-in logits
//! only, so a huge activation on a masked-out cell cannot underflow the
//! distribution.

use crate::error::{dim_err, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedDistribution {
    probs: Vec<f64>,
    mask: Vec<bool>,
    log_probs: Vec<f64>,
}

impl MaskedDistribution {
    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `-log p[target]`, computed from the log-normalizer rather than from
    /// the (possibly underflowed) probability.
    pub fn cross_entropy(&self, target: usize) -> Result<f64> {
        self.check_target(target)?;
        Ok(-self.log_probs[target])
    }

    /// Gradient of [`cross_entropy`](Self::cross_entropy) with respect to the
    /// logits: `p - onehot(target)` inside the mask, exactly zero outside.
    pub fn logit_grad(&self, target: usize) -> Result<Vec<f64>> {
        let mut g = self.probs.clone();
        self.check_target(target)?;
        g[target] -= 1.0;
        Ok(g)
    }

    fn check_target(&self, target: usize) -> Result<()> {
        if target >= self.probs.len() {
            return Err(Error::InvalidTarget {
                target,
                reason: format!("only {} categories", self.probs.len()),
            });
        }
        if !self.mask[target] {
            return Err(Error::InvalidTarget {
                target,
                reason: "category is masked out (unseen pair used as a training label)".into(),
            });
        }
        Ok(())
    }
}

pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<MaskedDistribution> {
    if logits.len() != mask.len() {
        return Err(dim_err("masked_softmax", (1, logits.len()), (1, mask.len())));
    }
    let shift = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Err(Error::InvalidMask);
    }
    let mut probs = vec![0.0; logits.len()];
    let mut total = 0.0;
    for ((p, &l), &m) in probs.iter_mut().zip(logits).zip(mask) {
        if m {
            *p = (l - shift).exp();
            total += *p;
        }
    }
    let log_total = total.ln();
    let mut log_probs = vec![f64::NEG_INFINITY; logits.len()];
    for (k, p) in probs.iter_mut().enumerate() {
        if mask[k] {
            *p /= total;
            log_probs[k] = logits[k] - shift - log_total;
        }
    }
    Ok(MaskedDistribution {
        probs,
        mask: mask.to_vec(),
        log_probs,
    })
}

/// Plain softmax over every category.
pub fn softmax(logits: &[f64]) -> MaskedDistribution {
    masked_softmax(logits, &vec![true; logits.len()]).expect("non-empty logits")
}

/// Free-function form of [`MaskedDistribution::cross_entropy`].
pub fn cross_entropy(dist: &MaskedDistribution, target: usize) -> Result<f64> {
    dist.cross_entropy(target)
}
