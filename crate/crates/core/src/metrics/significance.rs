//! Paired randomization test on per-segment scores.
//!
//! Under the null hypothesis the two systems are exchangeable on every
//! segment, so each paired difference is equally likely to carry either
//! sign. The p-value is the fraction of random sign assignments whose
//! absolute mean difference reaches the observed one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceConfig {
    pub alpha: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for SignificanceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            resamples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub p_value: f64,
    /// True when the difference is not significant at `alpha`.
    pub statistically_same: bool,
    pub observed_difference: f64,
}

pub fn significance(
    scores_a: &[f64],
    scores_b: &[f64],
    cfg: &SignificanceConfig,
) -> Result<SignificanceResult, MetricsError> {
    if scores_a.len() != scores_b.len() {
        return Err(MetricsError::Argument(format!(
            "paired test needs equal lengths, got {} and {}",
            scores_a.len(),
            scores_b.len()
        )));
    }
    if scores_a.len() < 2 {
        return Err(MetricsError::Argument("paired test needs at least two segments".into()));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(MetricsError::Argument(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    if cfg.resamples == 0 {
        return Err(MetricsError::Argument("resamples must be positive".into()));
    }
    let diffs: Vec<f64> = scores_a.iter().zip(scores_b).map(|(a, b)| a - b).collect();
    let n = diffs.len() as f64;
    let observed = diffs.iter().sum::<f64>() / n;
    let scale = diffs.iter().map(|d| d.abs()).sum::<f64>() / n;
    // absorbs rounding so that exact ties count as "at least as extreme"
    let slack = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut extreme = 0usize;
    for _ in 0..cfg.resamples {
        let flipped: f64 = diffs
            .iter()
            .map(|&d| if rng.gen::<bool>() { d } else { -d })
            .sum::<f64>()
            / n;
        if flipped.abs() + slack >= observed.abs() {
            extreme += 1;
        }
    }
    let p_value = extreme as f64 / cfg.resamples as f64;
    Ok(SignificanceResult {
        p_value,
        statistically_same: p_value >= cfg.alpha,
        observed_difference: observed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_inputs() {
        let a = [0.3, 0.5, 0.9, 0.1];
        let r = significance(&a, &a, &SignificanceConfig::default()).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.statistically_same);
    }

    #[test]
    fn constant_gap_is_significant() {
        let r = significance(&[1.0; 30], &[0.0; 30], &SignificanceConfig::default()).unwrap();
        assert!(r.p_value < 0.05);
        assert!(!r.statistically_same);
    }

    #[test]
    fn errors() {
        let cfg = SignificanceConfig::default();
        assert!(significance(&[1.0, 2.0], &[1.0], &cfg).is_err());
        assert!(significance(&[1.0], &[1.0], &cfg).is_err());
        let bad = SignificanceConfig { alpha: 1.0, ..cfg };
        assert!(significance(&[1.0, 2.0], &[1.0, 2.0], &bad).is_err());
    }

    #[test]
    fn same_distribution_is_usually_same() {
        let mut data_rng = ChaCha8Rng::seed_from_u64(99);
        let trials = 100;
        let mut same = 0;
        for t in 0..trials {
            let a: Vec<f64> = (0..100).map(|_| data_rng.gen::<f64>()).collect();
            let b: Vec<f64> = (0..100).map(|_| data_rng.gen::<f64>()).collect();
            let cfg = SignificanceConfig {
                seed: t,
                ..SignificanceConfig::default()
            };
            if significance(&a, &b, &cfg).unwrap().statistically_same {
                same += 1;
            }
        }
        assert!(same >= 90, "only {same}/{trials} trials judged the same");
    }
}
