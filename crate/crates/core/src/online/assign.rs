//! Deterministic hash bucketing.
//!
//! `bucket = H(unit_id ++ ":" ++ salt) mod 1_000_000`, where `H` is 64-bit
//! FNV-1a followed by the SplitMix64 finalizer (see [`crate::rng::stable_hash`]).
//! Arm `i` owns buckets `[round(C_{i-1} * 10^6), round(C_i * 10^6))` where
//! `C_i` is the cumulative ratio; the last arm also takes any rounding tail.

use crate::error::{Error, Result};
use crate::rng::stable_hash;

pub const BUCKETS: u64 = 1_000_000;

pub fn bucket(unit_id: &str, salt: &str) -> u64 {
    stable_hash(&format!("{unit_id}:{salt}")) % BUCKETS
}

pub fn validate_ratios(n_arms: usize, ratios: &[f64]) -> Result<()> {
    if n_arms < 2 {
        return Err(Error::InvalidValue(format!("need at least 2 arms, got {n_arms}")));
    }
    if ratios.len() != n_arms {
        return Err(Error::InvalidValue(format!("{} ratios for {n_arms} arms", ratios.len())));
    }
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::InvalidValue("ratios must be finite and non-negative".into()));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidValue(format!("ratios sum to {total}, not 1")));
    }
    Ok(())
}

pub fn assign(unit_id: &str, salt: &str, n_arms: usize, ratios: &[f64]) -> Result<usize> {
    validate_ratios(n_arms, ratios)?;
    let b = bucket(unit_id, salt);
    let mut cum = 0.0;
    for (arm, r) in ratios.iter().enumerate().take(n_arms - 1) {
        cum += r;
        if b < (cum * BUCKETS as f64).round() as u64 {
            return Ok(arm);
        }
    }
    Ok(n_arms - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = assign("user-17", "exp1", 2, &[0.5, 0.5]).unwrap();
        assert_eq!(a, assign("user-17", "exp1", 2, &[0.5, 0.5]).unwrap());
    }

    #[test]
    fn fifty_fifty_split() {
        let n = 100_000;
        let ones = (0..n)
            .filter(|i| assign(&format!("u{i}"), "exp1", 2, &[0.5, 0.5]).unwrap() == 1)
            .count();
        assert!((ones as f64 / n as f64 - 0.5).abs() <= 0.01);
    }

    #[test]
    fn unequal_ratios() {
        let n = 100_000;
        let mut counts = [0usize; 3];
        for i in 0..n {
            counts[assign(&format!("u{i}"), "s", 3, &[0.2, 0.3, 0.5]).unwrap()] += 1;
        }
        for (c, r) in counts.iter().zip([0.2, 0.3, 0.5]) {
            assert!((*c as f64 / n as f64 - r).abs() <= 0.01);
        }
    }

    #[test]
    fn salt_change_rerandomizes() {
        let n = 100_000;
        let agree = (0..n)
            .filter(|i| {
                let id = format!("u{i}");
                assign(&id, "salt-a", 2, &[0.5, 0.5]).unwrap() == assign(&id, "salt-b", 2, &[0.5, 0.5]).unwrap()
            })
            .count();
        assert!((agree as f64 / n as f64 - 0.5).abs() <= 0.01);
    }

    #[test]
    fn bad_ratios() {
        assert!(assign("u", "s", 2, &[0.5, 0.6]).is_err());
        assert!(assign("u", "s", 1, &[1.0]).is_err());
        assert!(assign("u", "s", 2, &[1.0]).is_err());
        assert!(assign("u", "s", 2, &[1.5, -0.5]).is_err());
    }
}
