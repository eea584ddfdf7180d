use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{covariance, mean, sample_variance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CupedResult {
    pub adjusted: Vec<f64>,
    pub theta: f64,
    /// Set when the covariate has no variance; `adjusted` is then `y` unchanged.
    pub degenerate_covariate: bool,
}

/// Regression adjustment `y' = y - θ (x - mean(x))` with `θ = cov(x, y) / var(x)`.
///
/// Pass both arms together so θ is pooled.
pub fn cuped_adjust(y: &[f64], x: &[f64]) -> Result<CupedResult> {
    if y.len() != x.len() {
        return Err(Error::InvalidValue(format!(
            "outcome and covariate lengths differ ({} vs {})",
            y.len(),
            x.len()
        )));
    }
    let var_x = sample_variance(x);
    if !(var_x > 0.0) {
        log::warn!("covariate has zero variance; regression adjustment skipped");
        return Ok(CupedResult {
            adjusted: y.to_vec(),
            theta: 0.0,
            degenerate_covariate: true,
        });
    }
    let theta = covariance(x, y) / var_x;
    let mx = mean(x);
    Ok(CupedResult {
        adjusted: y.iter().zip(x).map(|(yi, xi)| yi - theta * (xi - mx)).collect(),
        theta,
        degenerate_covariate: false,
    })
}
