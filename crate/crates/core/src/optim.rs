//! Momentum SGD with weight decay and a polynomial learning-rate schedule.
//!
//! Update per tensor, with `lr = poly_lr(iter) * group multiplier`:
//!
//! ```text
//! g = grad + weight_decay * param      (weights only; biases and PReLU slopes skip decay)
//! v = momentum * v - lr * g
//! param += v
//! ```

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{feature_matrix, Example, Pair};
use crate::error::{Error, Result};
use crate::heads::Model;
use crate::nn::{ParamGroup, Parameterized};

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// Length of the decay schedule. [`train_epochs`] overrides it with
    /// `epochs × ceil(n / batch_size)`.
    pub max_iters: usize,
    pub poly_power: f64,
    pub trunk_lr_mult: f64,
    pub head_lr_mult: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            batch_size: 256,
            max_iters: 1,
            poly_power: 1.0,
            trunk_lr_mult: 1.0,
            head_lr_mult: 1.0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be >= 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        if !(self.poly_power > 0.0 && self.poly_power.is_finite()) {
            return bad("poly_power must be > 0");
        }
        if !(self.trunk_lr_mult >= 0.0 && self.head_lr_mult >= 0.0) {
            return bad("learning-rate multipliers must be >= 0");
        }
        Ok(())
    }

    pub fn multiplier(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Trunk => self.trunk_lr_mult,
            ParamGroup::Head => self.head_lr_mult,
        }
    }
}

/// `base_lr · (1 − iter/max_iters)^poly_power`.
pub fn poly_lr(cfg: &SgdConfig, iter: usize) -> Result<f64> {
    if iter > cfg.max_iters {
        return Err(Error::OutOfRange {
            what: "iteration",
            value: iter as f64,
            limit: cfg.max_iters as f64,
        });
    }
    let frac = 1.0 - iter as f64 / cfg.max_iters as f64;
    Ok(cfg.base_lr * frac.powf(cfg.poly_power))
}

/// Velocity buffers in parameter-visiting order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    velocity: Vec<Vec<f64>>,
    iter: usize,
}

impl OptimizerState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn iter(&self) -> usize {
        self.iter
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    /// Applies one update using the gradients currently stored in `params`
    /// and advances the iteration counter. Returns the scheduled rate.
    pub fn sgd_step<P: Parameterized + ?Sized>(&mut self, params: &mut P, cfg: &SgdConfig) -> Result<f64> {
        let lr = poly_lr(cfg, self.iter)?;
        let first = self.velocity.is_empty();
        let mut k = 0;
        let mut shape_err = None;
        let velocity = &mut self.velocity;
        params.visit_params("", &mut |p| {
            if first {
                velocity.push(vec![0.0; p.value.len()]);
            }
            let Some(v) = velocity.get_mut(k) else {
                shape_err.get_or_insert_with(|| format!("no velocity buffer for {}", p.name));
                return;
            };
            k += 1;
            if v.len() != p.value.len() || p.grad.len() != p.value.len() {
                shape_err.get_or_insert_with(|| format!("shape mismatch for {}", p.name));
                return;
            }
            let step = lr * cfg.multiplier(p.group);
            let decay = if p.kind.decays() { cfg.weight_decay } else { 0.0 };
            for ((w, g), vel) in p.value.iter_mut().zip(p.grad.iter()).zip(v.iter_mut()) {
                let g = g + decay * *w;
                *vel = cfg.momentum * *vel - step * g;
                *w += *vel;
            }
        });
        if k != self.velocity.len() && shape_err.is_none() {
            shape_err = Some(format!("expected {} tensors, visited {k}", self.velocity.len()));
        }
        if let Some(msg) = shape_err {
            return Err(Error::Config(format!("optimizer state does not match parameters: {msg}")));
        }
        self.iter += 1;
        Ok(lr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub iter: usize,
    pub epoch: usize,
    pub lr: f64,
    pub batch_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
}

impl TrainingLog {
    /// Mean batch loss of each epoch.
    pub fn epoch_means(&self) -> Vec<f64> {
        let mut sums: Vec<(f64, usize)> = Vec::new();
        for e in &self.entries {
            if sums.len() <= e.epoch {
                sums.resize(e.epoch + 1, (0.0, 0));
            }
            sums[e.epoch].0 += e.batch_loss;
            sums[e.epoch].1 += 1;
        }
        sums.into_iter().map(|(s, n)| s / n.max(1) as f64).collect()
    }

    /// One `iter,epoch,lr,batch_loss` line per batch.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{}", e.iter, e.epoch, e.lr, e.batch_loss);
        }
        out
    }
}

pub fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Trains `model` for `epochs` passes over `examples`, reshuffling each
/// epoch with a generator seeded from `seed`. The last partial batch is kept.
pub fn train_epochs(
    model: &mut Model,
    examples: &[&Example],
    cfg: &SgdConfig,
    epochs: usize,
    seed: u64,
) -> Result<TrainingLog> {
    let mut log = TrainingLog::default();
    if epochs == 0 {
        return Ok(log);
    }
    if examples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let n_cells = model.seen_mask().len();
    for e in examples {
        let flat = e.pair.adj * model.noun_count() + e.pair.noun;
        if flat >= n_cells || !model.seen_mask()[flat] {
            return Err(Error::InvalidTarget {
                target: flat,
                reason: format!("example {} is labelled with a pair that is not seen", e.id),
            });
        }
    }
    let dim = model.spec.in_dim;
    let per_epoch = batches_per_epoch(examples.len(), cfg.batch_size);
    let cfg = SgdConfig {
        max_iters: epochs * per_epoch,
        ..cfg.clone()
    };
    cfg.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = OptimizerState::new();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| examples[i]).collect();
            let x = feature_matrix(&batch, dim);
            let targets: Vec<Pair> = batch.iter().map(|e| e.pair).collect();
            model.zero_grad();
            let loss = model.loss_and_grad(&x, &targets)?;
            let iter = state.iter();
            let lr = state.sgd_step(model, &cfg)?;
            log.entries.push(LogEntry {
                iter,
                epoch,
                lr,
                batch_loss: loss,
            });
        }
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ParamKind, ParamView};

    /// One scalar parameter with a caller-set gradient.
    struct Scalar {
        value: Vec<f64>,
        grad: Vec<f64>,
        kind: ParamKind,
    }

    impl Scalar {
        fn new(v: f64) -> Self {
            Self {
                value: vec![v],
                grad: vec![0.0],
                kind: ParamKind::Weight,
            }
        }
    }

    impl Parameterized for Scalar {
        fn visit_params(&mut self, _: &str, f: &mut dyn FnMut(ParamView<'_>)) {
            f(ParamView {
                name: "theta".into(),
                kind: self.kind,
                group: ParamGroup::Head,
                shape: (1, 1),
                value: &mut self.value,
                grad: &mut self.grad,
            });
        }
    }

    fn cfg(lr: f64, momentum: f64, decay: f64) -> SgdConfig {
        SgdConfig {
            base_lr: lr,
            momentum,
            weight_decay: decay,
            max_iters: 1_000_000,
            ..SgdConfig::default()
        }
    }

    #[test]
    fn poly_schedule_endpoints() {
        let c = SgdConfig {
            max_iters: 100,
            ..SgdConfig::default()
        };
        assert_eq!(poly_lr(&c, 0).unwrap(), 0.01);
        assert_eq!(poly_lr(&c, 100).unwrap(), 0.0);
        assert!((poly_lr(&c, 50).unwrap() - 0.005).abs() < 1e-15);
        assert!(poly_lr(&c, 101).is_err());
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let lr = poly_lr(&SgdConfig { poly_power: 2.0, ..c.clone() }, i).unwrap();
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn plain_gradient_descent_without_momentum_or_decay() {
        let mut p = Scalar::new(2.0);
        p.grad[0] = 0.5;
        let mut s = OptimizerState::new();
        s.sgd_step(&mut p, &cfg(0.1, 0.0, 0.0)).unwrap();
        assert_eq!(p.value[0], 2.0 - 0.1 * 0.5);
    }

    #[test]
    fn zero_gradient_coasts_on_velocity() {
        let mut p = Scalar::new(1.0);
        let mut s = OptimizerState::new();
        let c = cfg(0.1, 0.9, 0.0);
        p.grad[0] = 1.0;
        s.sgd_step(&mut p, &c).unwrap();
        let v = s.velocity()[0][0];
        let before = p.value[0];
        p.grad[0] = 0.0;
        s.sgd_step(&mut p, &c).unwrap();
        assert_eq!(p.value[0], before + 0.9 * v);
    }

    #[test]
    fn momentum_recurrence_on_quadratic() {
        // f(θ) = θ²/2, so grad = θ
        let c = cfg(0.1, 0.9, 0.0);
        let lr0 = poly_lr(&c, 0).unwrap();
        let lr1 = poly_lr(&c, 1).unwrap();
        let (mut theta, mut v) = (1.0f64, 0.0f64);
        v = 0.9 * v - lr0 * theta;
        theta += v;
        v = 0.9 * v - lr1 * theta;
        theta += v;

        let mut p = Scalar::new(1.0);
        let mut s = OptimizerState::new();
        for _ in 0..2 {
            p.grad[0] = p.value[0];
            s.sgd_step(&mut p, &c).unwrap();
        }
        assert!((p.value[0] - theta).abs() < 1e-12);
        assert_eq!(s.iter(), 2);
    }

    #[test]
    fn decay_only_on_weights() {
        let c = cfg(0.1, 0.0, 0.5);
        let mut w = Scalar::new(2.0);
        OptimizerState::new().sgd_step(&mut w, &c).unwrap();
        assert_eq!(w.value[0], 2.0 - 0.1 * 0.5 * 2.0);
        let mut b = Scalar::new(2.0);
        b.kind = ParamKind::Bias;
        OptimizerState::new().sgd_step(&mut b, &c).unwrap();
        assert_eq!(b.value[0], 2.0);
    }

    #[test]
    fn step_past_schedule_is_rejected() {
        let c = SgdConfig {
            max_iters: 1,
            ..SgdConfig::default()
        };
        let mut p = Scalar::new(1.0);
        let mut s = OptimizerState::new();
        s.sgd_step(&mut p, &c).unwrap();
        s.sgd_step(&mut p, &c).unwrap();
        assert!(s.sgd_step(&mut p, &c).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SgdConfig::default().validate().is_ok());
        assert!(SgdConfig { base_lr: 0.0, ..SgdConfig::default() }.validate().is_err());
        assert!(SgdConfig { momentum: 1.0, ..SgdConfig::default() }.validate().is_err());
        assert!(SgdConfig { weight_decay: -1.0, ..SgdConfig::default() }.validate().is_err());
        assert!(SgdConfig { max_iters: 0, ..SgdConfig::default() }.validate().is_err());
    }

    #[test]
    fn log_rendering() {
        let log = TrainingLog {
            entries: vec![
                LogEntry { iter: 0, epoch: 0, lr: 0.01, batch_loss: 2.5 },
                LogEntry { iter: 1, epoch: 0, lr: 0.005, batch_loss: 1.5 },
                LogEntry { iter: 2, epoch: 1, lr: 0.0, batch_loss: 1.0 },
            ],
        };
        assert_eq!(log.render(), "0,0,0.01,2.5\n1,0,0.005,1.5\n2,1,0,1\n");
        assert_eq!(log.epoch_means(), vec![2.0, 1.0]);
    }
}
