//! Always-valid confidence sequence for a stream of paired differences.
//!
//! Normal-mixture boundary on the running sum: with intrinsic time
//! `V_t = Σ (d_i - d̄_t)²` the radius around the running mean is
//!
//! ```text
//! r_t = sqrt((V_t + ρ) · ln((V_t + ρ) / (ρ α²))) / t
//! ```
//!
//! `crossed` latches once zero leaves the interval.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: usize,
    pub estimate: f64,
    pub cs_low: f64,
    pub cs_high: f64,
    pub crossed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialTrajectory {
    pub alpha: f64,
    pub rho_mix: f64,
    /// Recorded checkpoints; always includes the first crossing and the last step.
    pub points: Vec<TrajectoryPoint>,
    pub first_crossing: Option<usize>,
    /// First crossing had the whole interval below zero.
    pub harm: bool,
    pub n: usize,
}

pub fn mixture_radius(t: usize, v: f64, rho: f64, alpha: f64) -> f64 {
    let vr = v + rho;
    (vr * (vr / (rho * alpha * alpha)).ln()).sqrt() / t as f64
}

fn check(alpha: f64, rho_mix: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidValue(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !(rho_mix > 0.0 && rho_mix.is_finite()) {
        return Err(Error::InvalidValue(format!("rho_mix must be positive, got {rho_mix}")));
    }
    Ok(())
}

/// Incremental form; feed differences one at a time.
#[derive(Debug, Clone)]
pub struct ConfidenceSequence {
    alpha: f64,
    rho: f64,
    t: usize,
    mean: f64,
    m2: f64,
    first_crossing: Option<usize>,
    harm: bool,
}

impl ConfidenceSequence {
    pub fn new(alpha: f64, rho_mix: f64) -> Result<Self> {
        check(alpha, rho_mix)?;
        Ok(ConfidenceSequence {
            alpha,
            rho: rho_mix,
            t: 0,
            mean: 0.0,
            m2: 0.0,
            first_crossing: None,
            harm: false,
        })
    }

    pub fn push(&mut self, d: f64) -> TrajectoryPoint {
        self.t += 1;
        let delta = d - self.mean;
        self.mean += delta / self.t as f64;
        self.m2 += delta * (d - self.mean);
        let r = mixture_radius(self.t, self.m2.max(0.0), self.rho, self.alpha);
        let (lo, hi) = (self.mean - r, self.mean + r);
        if self.first_crossing.is_none() && (lo > 0.0 || hi < 0.0) {
            self.first_crossing = Some(self.t);
            self.harm = hi < 0.0;
        }
        TrajectoryPoint {
            t: self.t,
            estimate: self.mean,
            cs_low: lo,
            cs_high: hi,
            crossed: self.first_crossing.is_some(),
        }
    }

    pub fn crossed(&self) -> bool {
        self.first_crossing.is_some()
    }

    pub fn first_crossing(&self) -> Option<usize> {
        self.first_crossing
    }

    pub fn harm(&self) -> bool {
        self.harm
    }
}

/// Runs the sequence over `diffs`, recording every `record_every`-th point.
pub fn sequential_cs(diffs: &[f64], alpha: f64, rho_mix: f64, record_every: usize) -> Result<SequentialTrajectory> {
    let mut cs = ConfidenceSequence::new(alpha, rho_mix)?;
    let every = record_every.max(1);
    let mut points = Vec::new();
    for (i, &d) in diffs.iter().enumerate() {
        let was = cs.crossed();
        let p = cs.push(d);
        if (i + 1) % every == 0 || i + 1 == diffs.len() || (p.crossed && !was) {
            points.push(p);
        }
    }
    Ok(SequentialTrajectory {
        alpha,
        rho_mix,
        points,
        first_crossing: cs.first_crossing(),
        harm: cs.harm(),
        n: diffs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn zero_differences_never_cross() {
        let tr = sequential_cs(&[0.0; 5000], 0.05, 100.0, 1).unwrap();
        assert!(tr.first_crossing.is_none());
        assert!(tr.points.iter().all(|p| !p.crossed && p.cs_low < 0.0 && p.cs_high > 0.0));
    }

    #[test]
    fn crossing_latches() {
        let mut d = vec![1.0; 200];
        d.extend(vec![-1.0; 2000]);
        let tr = sequential_cs(&d, 0.05, 5.0, 1).unwrap();
        let first = tr.first_crossing.unwrap();
        assert!(!tr.harm);
        assert!(tr.points[first - 1..].iter().all(|p| p.crossed));
    }

    #[test]
    fn one_sigma_harm_detected() {
        let mut detected = 0;
        let runs = 200;
        for seed in 0..runs {
            let mut rng = crate::rng::Stream::root(seed).rng();
            let d: Vec<f64> = (0..10_000).map(|_| -1.0 + rng.sample::<f64, _>(StandardNormal)).collect();
            let tr = sequential_cs(&d, 0.05, 1000.0, 1000).unwrap();
            if tr.harm && tr.first_crossing.is_some_and(|t| t < 10_000) {
                detected += 1;
            }
        }
        assert!(detected as f64 / runs as f64 >= 0.99);
    }

    #[test]
    fn width_shrinks_with_information() {
        let mut rng = crate::rng::Stream::root(3).rng();
        let d: Vec<f64> = (0..4000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let tr = sequential_cs(&d, 0.05, 400.0, 500).unwrap();
        let widths: Vec<f64> = tr.points.iter().map(|p| p.cs_high - p.cs_low).collect();
        assert!(widths.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn invalid_parameters() {
        assert!(sequential_cs(&[1.0], 0.0, 1.0, 1).is_err());
        assert!(sequential_cs(&[1.0], 0.05, 0.0, 1).is_err());
    }
}
