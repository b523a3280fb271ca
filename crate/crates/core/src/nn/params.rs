//! Uniform access to every learnable tensor of a model.

/// Decides whether weight decay applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    Slope,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        matches!(self, ParamKind::Weight)
    }
}

/// Learning-rate multiplier group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Trunk,
    Head,
}

/// Mutable view of one parameter tensor and its gradient buffer.
#[derive(Debug)]
pub struct ParamView<'a> {
    pub name: String,
    pub kind: ParamKind,
    pub group: ParamGroup,
    pub shape: (usize, usize),
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
}

pub trait Parameterized {
    /// Calls `f` once per tensor, always in the same order.
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>));

    fn zero_grad(&mut self) {
        self.visit_params("", &mut |p| p.grad.iter_mut().for_each(|g| *g = 0.0));
    }

    fn num_params(&mut self) -> usize {
        let mut n = 0;
        self.visit_params("", &mut |p| n += p.value.len());
        n
    }

    /// Snapshot of all parameter values, in visiting order.
    fn param_values(&mut self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.visit_params("", &mut |p| out.push(p.value.to_vec()));
        out
    }

    /// Snapshot of all gradient buffers, in visiting order.
    fn param_grads(&mut self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.visit_params("", &mut |p| out.push(p.grad.to_vec()));
        out
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
