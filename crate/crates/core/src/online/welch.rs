use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, sample_variance, t_quantile, t_two_sided_p};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    /// `mean(b) - mean(a)`
    pub estimate: f64,
    pub std_error: f64,
    pub dof: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Welch's unequal-variance t test with Welch–Satterthwaite degrees of freedom.
/// The interval is two-sided at level `1 - alpha`.
pub fn welch_t(a: &[f64], b: &[f64], alpha: f64) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidValue(format!(
            "Welch test needs n >= 2 per arm (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidValue(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (sa, sb) = (sample_variance(a) / na, sample_variance(b) / nb);
    let estimate = mb - ma;
    let se2 = sa + sb;
    if se2 == 0.0 {
        let p_value = if estimate == 0.0 { 1.0 } else { 0.0 };
        return Ok(WelchResult {
            estimate,
            std_error: 0.0,
            dof: na + nb - 2.0,
            p_value,
            ci_low: estimate,
            ci_high: estimate,
        });
    }
    let std_error = se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let t = estimate / std_error;
    let half = t_quantile(1.0 - alpha / 2.0, dof) * std_error;
    Ok(WelchResult {
        estimate,
        std_error,
        dof,
        p_value: t_two_sided_p(t, dof),
        ci_low: estimate - half,
        ci_high: estimate + half,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let x = [0.1, 0.5, 0.9, 0.3];
        let r = welch_t(&x, &x, 0.05).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separated_constant_samples() {
        let r = welch_t(&[0.0; 4], &[1.0; 4], 0.05).unwrap();
        assert_eq!(r.estimate, 1.0);
        assert!(r.p_value < 1e-6);
        let same = welch_t(&[2.0; 3], &[2.0; 5], 0.05).unwrap();
        assert_eq!(same.p_value, 1.0);
    }

    #[test]
    fn matches_hand_computation() {
        // a: mean 2, var 1; b: mean 4, var 4; n = 3 each
        let a = [1.0, 2.0, 3.0];
        let b = [2.0, 4.0, 6.0];
        let r = welch_t(&a, &b, 0.05).unwrap();
        let se2: f64 = 1.0 / 3.0 + 4.0 / 3.0;
        assert!((r.std_error - se2.sqrt()).abs() < 1e-12);
        let dof = se2 * se2 / ((1.0f64 / 3.0).powi(2) / 2.0 + (4.0f64 / 3.0).powi(2) / 2.0);
        assert!((r.dof - dof).abs() < 1e-12);
        assert!(r.ci_low < r.estimate && r.estimate < r.ci_high);
    }

    #[test]
    fn rejects_tiny_samples() {
        assert!(welch_t(&[1.0], &[1.0, 2.0], 0.05).is_err());
    }
}
