//! Central finite-difference gradient verification.
//!
//! Each checked coordinate compares the analytic derivative `a` with
//! `n = (f(θ+ε) − f(θ−ε)) / 2ε` and scores it by
//! `|a − n| / max(|a|, |n|, floor)`. The floor keeps near-zero derivatives,
//! where both values are dominated by rounding, from reporting spurious
//! relative errors.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::Matrix;

pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_MAX_COORDS: usize = 200;
pub const DEFAULT_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tol: f64,
    /// Tensors with more entries than this are subsampled.
    pub max_coords: usize,
    pub floor: f64,
    pub seed: u64,
}

impl GradCheckConfig {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            tol: 1e-6,
            max_coords: DEFAULT_MAX_COORDS,
            floor: DEFAULT_FLOOR,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordError {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub tol: f64,
    pub max_rel_err: f64,
    pub failures: Vec<CoordError>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.max_rel_err.is_finite()
    }

    /// Folds another tensor's report into this one.
    pub fn merge(&mut self, other: GradCheckReport) {
        self.checked += other.checked;
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        self.failures.extend(other.failures);
    }

    pub fn empty(tol: f64) -> Self {
        Self {
            checked: 0,
            tol,
            max_rel_err: 0.0,
            failures: Vec::new(),
        }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Coordinates to probe for a tensor of `len` entries.
pub fn sample_coords(len: usize, max_coords: usize, seed: u64) -> Vec<usize> {
    if len <= max_coords {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, len, max_coords).into_vec();
    idx.sort_unstable();
    idx
}

/// Checks `analytic` against central differences of `f` around `params`.
///
/// `f` receives a perturbed copy of `params`; it is called twice per sampled
/// coordinate.
pub fn grad_check<F>(mut f: F, params: &Matrix, analytic: &Matrix, cfg: &GradCheckConfig) -> GradCheckReport
where
    F: FnMut(&Matrix) -> f64,
{
    assert_eq!(params.shape(), analytic.shape(), "gradient shape must match parameters");
    let mut report = GradCheckReport::empty(cfg.tol);
    let mut probe = params.clone();
    for idx in sample_coords(params.len(), cfg.max_coords, cfg.seed) {
        let orig = params.as_slice()[idx];
        let (hi, lo) = (orig + cfg.eps, orig - cfg.eps);
        probe.as_mut_slice()[idx] = hi;
        let up = f(&probe);
        probe.as_mut_slice()[idx] = lo;
        let down = f(&probe);
        probe.as_mut_slice()[idx] = orig;

        // divide by the step actually taken after rounding `orig ± eps`
        let numeric = (up - down) / (hi - lo);
        let a = analytic.as_slice()[idx];
        let rel = relative_error(a, numeric, cfg.floor);
        report.checked += 1;
        // NaN must not slip through a `>` comparison
        if !(rel < cfg.tol) {
            report.failures.push(CoordError {
                index: idx,
                analytic: a,
                numeric,
                rel_err: rel,
            });
        }
        report.max_rel_err = if rel.is_nan() { f64::NAN } else { report.max_rel_err.max(rel) };
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn sum_of_squares() {
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let theta = Matrix::from_fn(2, 3, |_, _| rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 });
            let grad = theta.map(|t| 2.0 * t);
            let report = grad_check(
                |p| p.as_slice().iter().map(|t| t * t).sum(),
                &theta,
                &grad,
                &GradCheckConfig::with_tol(1e-9),
            );
            assert!(report.passed(), "{report:?}");
            assert_eq!(report.checked, 6);
        }
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let theta = Matrix::from_rows(&[[1.0, -2.0, 0.5]]).unwrap();
        let mut grad = theta.map(|t| 2.0 * t);
        grad.set(0, 1, 0.0);
        let report = grad_check(
            |p| p.as_slice().iter().map(|t| t * t).sum(),
            &theta,
            &grad,
            &GradCheckConfig::default(),
        );
        assert!(!report.passed());
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].index, 1);
    }

    #[test]
    fn nan_is_a_failure() {
        let theta = Matrix::from_rows(&[[1.0]]).unwrap();
        let grad = Matrix::from_rows(&[[f64::NAN]]).unwrap();
        let report = grad_check(|p| p.get(0, 0), &theta, &grad, &GradCheckConfig::default());
        assert!(!report.passed());
    }

    #[test]
    fn large_tensors_are_subsampled() {
        let idx = sample_coords(1000, 200, 4);
        assert_eq!(idx.len(), 200);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sample_coords(150, 200, 4), (0..150).collect::<Vec<_>>());
    }
}
