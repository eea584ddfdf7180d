//! Small numeric helpers shared by the analysis modules.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::factorial::ln_binomial;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n − 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    if xs.len() < 2 {
        return f64::NAN;
    }
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Summary {
            mean: mean(values),
            p25: quantile_sorted(&sorted, 0.25),
            p50: quantile_sorted(&sorted, 0.5),
            p75: quantile_sorted(&sorted, 0.75),
            n: values.len(),
        })
    }
}

pub fn std_normal_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn std_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided p-value of a t statistic with `dof` degrees of freedom.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
    (2.0 * dist.cdf(-t.abs())).min(1.0)
}

pub fn t_quantile(p: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof).expect("positive dof").inverse_cdf(p)
}

/// P(X ≤ x) for X ~ Binomial(n, 1/2), summed in log space.
pub fn binomial_half_cdf(x: u64, n: u64) -> f64 {
    let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
    (0..=x.min(n)).map(|i| (ln_binomial(n, i) + ln_half_n).exp()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_eq!(quantile_sorted(&s, 0.25), 1.75);
        let one = Summary::of(&[0.5]).unwrap();
        assert_eq!((one.mean, one.p25, one.p50, one.p75), (0.5, 0.5, 0.5, 0.5));
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn binomial_tail() {
        // C(10,0)+C(10,1)+C(10,2) = 56
        assert!((binomial_half_cdf(2, 10) - 56.0 / 1024.0).abs() < 1e-14);
        assert!((binomial_half_cdf(10, 10) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn variance_and_covariance() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((sample_variance(&x) - 5.0 / 3.0).abs() < 1e-15);
        assert!((covariance(&x, &x) - sample_variance(&x)).abs() < 1e-15);
    }
}
