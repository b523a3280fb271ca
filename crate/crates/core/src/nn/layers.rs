use rand::Rng;

use super::matrix::Matrix;
use super::params::{join, ParamGroup, ParamKind, ParamView, Parameterized};
use crate::error::{dim_err, Result};

/// PReLU slopes start here.
pub const PRELU_INIT_SLOPE: f64 = 0.25;

/// Fully connected layer, `y = x·Wᵀ + b` over a batch of row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    /// Shape `(out_dim, in_dim)`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub grad_weight: Matrix,
    pub grad_bias: Vec<f64>,
}

impl LinearLayer {
    /// Uniform init in `[-s, s]` with `s = 1/sqrt(in_dim)`; zero bias.
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let s = 1.0 / (in_dim.max(1) as f64).sqrt();
        let weight = Matrix::from_fn(out_dim, in_dim, |_, _| rng.random_range(-s..=s));
        Self::from_parts(weight, vec![0.0; out_dim]).expect("shapes agree by construction")
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(dim_err("linear bias", weight.shape(), (bias.len(), 1)));
        }
        let (o, i) = weight.shape();
        Ok(Self {
            grad_weight: Matrix::zeros(o, i),
            grad_bias: vec![0.0; o],
            weight,
            bias,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self::from_parts(Matrix::zeros(out_dim, in_dim), vec![0.0; out_dim])
            .expect("shapes agree by construction")
    }

    #[inline]
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(dim_err("linear_forward", x.shape(), self.weight.shape()));
        }
        let mut y = x.matmul_nt(&self.weight)?;
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients for upstream `dy` and returns `dL/dx`.
    pub fn backward(&mut self, x: &Matrix, dy: &Matrix) -> Result<Matrix> {
        if dy.cols() != self.out_dim() || dy.rows() != x.rows() {
            return Err(dim_err("linear_backward", dy.shape(), (x.rows(), self.out_dim())));
        }
        dy.matmul_tn_acc(x, &mut self.grad_weight)?;
        for r in 0..dy.rows() {
            for (g, d) in self.grad_bias.iter_mut().zip(dy.row(r)) {
                *g += d;
            }
        }
        dy.matmul(&self.weight)
    }
}

impl Parameterized for LinearLayer {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        let shape = self.weight.shape();
        f(ParamView {
            name: join(prefix, "weight"),
            group: ParamGroup::Head,
            kind: ParamKind::Weight,
            shape,
            value: self.weight.as_mut_slice(),
            grad: self.grad_weight.as_mut_slice(),
        });
        let n = self.bias.len();
        f(ParamView {
            name: join(prefix, "bias"),
            group: ParamGroup::Head,
            kind: ParamKind::Bias,
            shape: (1, n),
            value: &mut self.bias,
            grad: &mut self.grad_bias,
        });
    }
}

/// Parametric ReLU with one learnable negative-side slope per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PReluLayer {
    pub slope: Vec<f64>,
    pub grad_slope: Vec<f64>,
}

impl PReluLayer {
    pub fn new(channels: usize) -> Self {
        Self::with_slope(vec![PRELU_INIT_SLOPE; channels])
    }

    pub fn with_slope(slope: Vec<f64>) -> Self {
        let n = slope.len();
        Self {
            slope,
            grad_slope: vec![0.0; n],
        }
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.slope.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.channels() {
            return Err(dim_err("prelu_forward", x.shape(), (1, self.channels())));
        }
        let mut y = x.clone();
        for r in 0..y.rows() {
            for (v, a) in y.row_mut(r).iter_mut().zip(&self.slope) {
                if *v < 0.0 {
                    *v *= a;
                }
            }
        }
        Ok(y)
    }

    /// `x` is the layer input seen in the forward pass.
    pub fn backward(&mut self, x: &Matrix, dy: &Matrix) -> Result<Matrix> {
        if x.shape() != dy.shape() || x.cols() != self.channels() {
            return Err(dim_err("prelu_backward", x.shape(), dy.shape()));
        }
        let mut dx = dy.clone();
        for r in 0..x.rows() {
            let xr = x.row(r);
            for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                if xr[c] < 0.0 {
                    self.grad_slope[c] += *d * xr[c];
                    *d *= self.slope[c];
                }
            }
        }
        Ok(dx)
    }
}

impl Parameterized for PReluLayer {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        let n = self.slope.len();
        f(ParamView {
            name: join(prefix, "slope"),
            group: ParamGroup::Head,
            kind: ParamKind::Slope,
            shape: (1, n),
            value: &mut self.slope,
            grad: &mut self.grad_slope,
        });
    }
}

/// Free-function form of [`LinearLayer::forward`].
pub fn linear_forward(layer: &LinearLayer, x: &Matrix) -> Result<Matrix> {
    layer.forward(x)
}

/// Free-function form of [`PReluLayer::forward`].
pub fn prelu_forward(layer: &PReluLayer, x: &Matrix) -> Result<Matrix> {
    layer.forward(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, GradCheckConfig};
    use crate::nn::softmax::masked_softmax;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn init_is_bounded_and_seeded() {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let mut b = ChaCha8Rng::seed_from_u64(1);
        let la = LinearLayer::new(16, 4, &mut a);
        let lb = LinearLayer::new(16, 4, &mut b);
        assert_eq!(la, lb);
        assert!(la.weight.as_slice().iter().all(|w| w.abs() <= 0.25));
        assert_eq!(la.grad_weight.shape(), la.weight.shape());
        assert_eq!(la.grad_bias.len(), la.bias.len());
    }

    #[test]
    fn identity_weight_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(4, 3, &mut rng);
        let layer = LinearLayer::from_parts(Matrix::identity(3), vec![0.0; 3]).unwrap();
        assert_eq!(linear_forward(&layer, &x).unwrap(), x);
    }

    #[test]
    fn zero_weight_yields_bias_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(5, 3, &mut rng);
        let c = vec![0.5, -1.5];
        let layer = LinearLayer::from_parts(Matrix::zeros(2, 3), c.clone()).unwrap();
        let y = layer.forward(&x).unwrap();
        for r in 0..5 {
            assert_eq!(y.row(r), c.as_slice());
        }
    }

    #[test]
    fn random_forward_matches_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut layer = LinearLayer::new(6, 4, &mut rng);
        layer.bias = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = random(3, 6, &mut rng);
        let y = layer.forward(&x).unwrap();
        for b in 0..3 {
            for o in 0..4 {
                let mut s = layer.bias[o];
                for i in 0..6 {
                    s += x.get(b, i) * layer.weight.get(o, i);
                }
                assert!((y.get(b, o) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_rejects_wrong_width() {
        let layer = LinearLayer::zeros(3, 2);
        assert!(layer.forward(&Matrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn prelu_definition() {
        let layer = PReluLayer::with_slope(vec![0.7, -3.0]);
        let y = prelu_forward(&layer, &Matrix::from_rows(&[[2.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[2.0, 0.0]);

        let layer = PReluLayer::with_slope(vec![0.25]);
        let y = layer.forward(&Matrix::from_rows(&[[-4.0]]).unwrap()).unwrap();
        assert_eq!(y.as_slice(), &[-1.0]);
    }

    #[test]
    fn prelu_slope_one_is_identity_and_zero_is_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(5, 3, &mut rng);
        let id = PReluLayer::with_slope(vec![1.0; 3]);
        assert_eq!(id.forward(&x).unwrap(), x);
        let relu = PReluLayer::with_slope(vec![0.0; 3]);
        assert_eq!(relu.forward(&x).unwrap(), x.map(|v| v.max(0.0)));
    }

    #[test]
    fn prelu_channel_mismatch() {
        assert!(PReluLayer::new(3).forward(&Matrix::zeros(1, 2)).is_err());
    }

    // loss(W) = CE(softmax(x·Wᵀ + b), t) summed over a small batch
    #[test]
    fn linear_cross_entropy_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut layer = LinearLayer::new(5, 4, &mut rng);
        let x = random(3, 5, &mut rng);
        let targets = [0usize, 3, 1];
        let mask = vec![true; 4];

        let loss_of = |w: &Matrix, layer: &LinearLayer| -> f64 {
            let l = LinearLayer::from_parts(w.clone(), layer.bias.clone()).unwrap();
            let y = l.forward(&x).unwrap();
            (0..3)
                .map(|b| masked_softmax(y.row(b), &mask).unwrap().cross_entropy(targets[b]).unwrap())
                .sum()
        };

        let y = layer.forward(&x).unwrap();
        let mut dy = Matrix::zeros(3, 4);
        for b in 0..3 {
            let d = masked_softmax(y.row(b), &mask).unwrap();
            dy.row_mut(b).copy_from_slice(&d.logit_grad(targets[b]).unwrap());
        }
        let dx = layer.backward(&x, &dy).unwrap();
        let w0 = layer.weight.clone();
        let report = grad_check(
            |w| loss_of(w, &layer),
            &w0,
            &layer.grad_weight,
            &GradCheckConfig::with_tol(1e-6),
        );
        assert!(report.passed(), "{report:?}");

        // input gradient through the same oracle
        let report = grad_check(
            |xp| {
                let y = layer.forward(xp).unwrap();
                (0..3)
                    .map(|b| masked_softmax(y.row(b), &mask).unwrap().cross_entropy(targets[b]).unwrap())
                    .sum()
            },
            &x,
            &dx,
            &GradCheckConfig::with_tol(1e-6),
        );
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn prelu_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut layer = PReluLayer::with_slope(vec![0.25, 0.1, -0.3, 0.6]);
        let x = random(6, 4, &mut rng);
        let w = random(6, 4, &mut rng);
        // loss = Σ w ⊙ prelu(x)
        let loss = |l: &PReluLayer, x: &Matrix| -> f64 {
            let y = l.forward(x).unwrap();
            y.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum()
        };
        let dx = layer.backward(&x, &w).unwrap();
        let report = grad_check(|xp| loss(&layer, xp), &x, &dx, &GradCheckConfig::with_tol(1e-6));
        assert!(report.passed(), "{report:?}");

        let slope = Matrix::from_vec(1, 4, layer.slope.clone()).unwrap();
        let g = Matrix::from_vec(1, 4, layer.grad_slope.clone()).unwrap();
        let report = grad_check(
            |s| loss(&PReluLayer::with_slope(s.as_slice().to_vec()), &x),
            &slope,
            &g,
            &GradCheckConfig::with_tol(1e-6),
        );
        assert!(report.passed(), "{report:?}");
    }
}
