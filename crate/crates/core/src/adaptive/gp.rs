//! Exact Gaussian-process regression with a squared-exponential kernel and
//! zero prior mean, plus the expected-improvement acquisition.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{std_normal_cdf, std_normal_pdf};

/// Jitter ladder tried in order when the kernel matrix will not factor.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub signal_var: f64,
    pub length_scale: f64,
    pub noise_var: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { signal_var: 1.0, length_scale: 0.2, noise_var: 1e-6 }
    }
}

impl KernelParams {
    pub fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_var * (-0.5 * d2 / (self.length_scale * self.length_scale)).exp()
    }

    fn check(&self) -> Result<()> {
        if !(self.signal_var > 0.0 && self.length_scale > 0.0 && self.noise_var >= 0.0) {
            return Err(Error::InvalidValue(format!(
                "kernel needs signal_var > 0, length_scale > 0, noise_var >= 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GpModel {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    pub kernel: KernelParams,
    /// Jitter that made the factorization succeed.
    pub jitter: f64,
    chol: Cholesky<f64, Dyn>,
    weights: DVector<f64>,
}

pub fn gp_fit(points: &[Vec<f64>], values: &[f64], kernel: KernelParams) -> Result<GpModel> {
    kernel.check()?;
    if points.is_empty() {
        return Err(Error::EmptyInput("GP needs at least one observation".into()));
    }
    if points.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), found: values.len() });
    }
    let d = points[0].len();
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: p.len() });
        }
        if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidValue(format!("GP input {p:?} outside the unit cube")));
        }
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("GP outputs must be finite".into()));
    }
    let n = points.len();
    let base = DMatrix::from_fn(n, n, |i, j| kernel.k(&points[i], &points[j]));
    for jitter in JITTER_LADDER {
        let mut m = base.clone();
        for i in 0..n {
            m[(i, i)] += kernel.noise_var + jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            let weights = chol.solve(&DVector::from_column_slice(values));
            return Ok(GpModel {
                inputs: points.to_vec(),
                outputs: values.to_vec(),
                kernel,
                jitter,
                chol,
                weights,
            });
        }
    }
    Err(Error::NotPositiveDefinite { jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] })
}

/// Posterior mean and variance of the latent function at `x`.
pub fn gp_predict(model: &GpModel, x: &[f64]) -> (f64, f64) {
    let ks = DVector::from_iterator(model.inputs.len(), model.inputs.iter().map(|p| model.kernel.k(p, x)));
    let mean = ks.dot(&model.weights);
    let v = model
        .chol
        .l()
        .solve_lower_triangular(&ks)
        .expect("Cholesky factor has a nonzero diagonal");
    let var = (model.kernel.signal_var - v.norm_squared()).max(0.0);
    (mean, var)
}

/// EI for maximisation from posterior moments.
pub fn expected_improvement_at(mean: f64, variance: f64, best_so_far: f64) -> f64 {
    let sigma = variance.max(0.0).sqrt();
    let gain = mean - best_so_far;
    if sigma <= 0.0 {
        return gain.max(0.0);
    }
    let z = gain / sigma;
    (gain * std_normal_cdf(z) + sigma * std_normal_pdf(z)).max(0.0)
}

pub fn expected_improvement(model: &GpModel, x: &[f64], best_so_far: f64) -> f64 {
    let (m, v) = gp_predict(model, x);
    expected_improvement_at(m, v, best_so_far)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_without_noise() {
        let k = KernelParams { noise_var: 0.0, ..Default::default() };
        let pts = vec![vec![0.1], vec![0.5], vec![0.9]];
        let ys = [0.3, -1.0, 2.0];
        let gp = gp_fit(&pts, &ys, k).unwrap();
        for (p, y) in pts.iter().zip(ys) {
            let (m, v) = gp_predict(&gp, p);
            assert!((m - y).abs() < 1e-8, "{m} vs {y}");
            assert!(v <= 1e-8);
        }
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let k = KernelParams { length_scale: 0.01, signal_var: 2.0, noise_var: 0.0 };
        let gp = gp_fit(&[vec![0.0, 0.0]], &[5.0], k).unwrap();
        let (m, v) = gp_predict(&gp, &[0.2, 0.0]);
        assert!(m.abs() < 1e-6);
        assert!((v - 2.0).abs() <= 0.02);
    }

    #[test]
    fn duplicate_points_need_jitter() {
        let k = KernelParams { noise_var: 0.0, ..Default::default() };
        let gp = gp_fit(&[vec![0.4], vec![0.4]], &[1.0, 1.0], k).unwrap();
        assert!(gp.jitter > 0.0);
    }

    #[test]
    fn input_validation() {
        let k = KernelParams::default();
        assert!(gp_fit(&[], &[], k).is_err());
        assert!(gp_fit(&[vec![1.5]], &[0.0], k).is_err());
        assert!(gp_fit(&[vec![0.5]], &[0.0, 1.0], k).is_err());
    }

    #[test]
    fn ei_values() {
        assert_eq!(expected_improvement_at(1.0, 0.0, 1.0), 0.0);
        let ei = expected_improvement_at(1.0, 4.0, 1.0);
        assert!((ei - 2.0 * 0.398_942_280_401_432_7).abs() < 1e-12);
        assert!((expected_improvement_at(10.0, 1e-30, 1.0) - 9.0).abs() < 1e-9);
        assert_eq!(expected_improvement_at(0.5, 0.0, 1.0), 0.0);
    }
}
