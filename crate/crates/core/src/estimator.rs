//! Turn a chain trace into a local learning coefficient estimate:
//! `lambda_bar = n * beta * (L_bar - L_{m,0}(w_0))` with the WBIC temperature
//! `beta = beta_0 / ln n`.

use crate::samplers::ChainTrace;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EstimatorError {
    #[error("dataset size {0} is too small; the temperature needs n >= 3")]
    DatasetTooSmall(usize),
    #[error("beta0 must be positive and finite, got {0}")]
    BadBeta0(f64),
    #[error("burn-in {burn_in} leaves no trace entries to average (length {len})")]
    EmptyWindow { burn_in: usize, len: usize },
    #[error("no chain estimates given")]
    NoEstimates,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Dataset size n.
    pub n: usize,
    /// Temperature numerator beta_0 (default 1).
    pub beta0: f64,
    /// Burn-in steps B; entries before index B are discarded.
    pub burn_in: usize,
    /// Independent chains C (default 1).
    pub chains: usize,
}

impl EstimatorConfig {
    pub fn new(n: usize, beta0: f64, burn_in: usize, chains: usize) -> Self {
        Self {
            n,
            beta0,
            burn_in,
            chains,
        }
    }

    /// `n * beta`, the posterior temperature fed to the samplers.
    pub fn beta_tilde(&self) -> Result<f64, EstimatorError> {
        Ok(self.n as f64 * wbic_beta(self.n, self.beta0)?)
    }
}

/// The tempering `beta = beta_0 / ln n` (natural logarithm).
pub fn wbic_beta(n: usize, beta0: f64) -> Result<f64, EstimatorError> {
    if n < 3 {
        return Err(EstimatorError::DatasetTooSmall(n));
    }
    if !(beta0 > 0.0) || !beta0.is_finite() {
        return Err(EstimatorError::BadBeta0(beta0));
    }
    Ok(beta0 / (n as f64).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlcEstimate {
    /// `n * beta * (L_bar - L0)`; NaN when the chain diverged.
    pub lambda_hat: f64,
    /// Mean of the post-burn-in trace entries.
    pub l_bar: f64,
    /// The anchor loss `L_{m,0}(w_0)`, i.e. the first trace entry.
    pub l0: f64,
    pub diverged: bool,
    /// Fraction of merged chains that diverged (0 or 1 for a single chain).
    pub diverged_fraction: f64,
}

/// Estimate from a single chain trace. A divergence flag or any non-finite
/// averaged entry yields NaN with `diverged` set; that is data, not an error.
pub fn estimate_llc(trace: &ChainTrace, cfg: &EstimatorConfig) -> Result<LlcEstimate, EstimatorError> {
    let beta = wbic_beta(cfg.n, cfg.beta0)?;
    let l0 = trace.losses.first().copied().unwrap_or(f64::NAN);

    if trace.diverged() {
        return Ok(LlcEstimate {
            lambda_hat: f64::NAN,
            l_bar: f64::NAN,
            l0,
            diverged: true,
            diverged_fraction: 1.0,
        });
    }
    if cfg.burn_in >= trace.losses.len() {
        return Err(EstimatorError::EmptyWindow {
            burn_in: cfg.burn_in,
            len: trace.losses.len(),
        });
    }
    let window = &trace.losses[cfg.burn_in..];
    let l_bar = window.iter().sum::<f64>() / window.len() as f64;
    if !l_bar.is_finite() || !l0.is_finite() {
        return Ok(LlcEstimate {
            lambda_hat: f64::NAN,
            l_bar,
            l0,
            diverged: true,
            diverged_fraction: 1.0,
        });
    }
    Ok(LlcEstimate {
        lambda_hat: cfg.n as f64 * beta * (l_bar - l0),
        l_bar,
        l0,
        diverged: false,
        diverged_fraction: 0.0,
    })
}

/// Merge independent chains: mean over the finite estimates, with the
/// diverged fraction reported. All chains diverged means the merged estimate
/// did too.
pub fn multi_chain_estimate(estimates: &[LlcEstimate]) -> Result<LlcEstimate, EstimatorError> {
    if estimates.is_empty() {
        return Err(EstimatorError::NoEstimates);
    }
    let finite: Vec<&LlcEstimate> = estimates.iter().filter(|e| e.lambda_hat.is_finite()).collect();
    let diverged_fraction = (estimates.len() - finite.len()) as f64 / estimates.len() as f64;
    if finite.is_empty() {
        return Ok(LlcEstimate {
            lambda_hat: f64::NAN,
            l_bar: f64::NAN,
            l0: f64::NAN,
            diverged: true,
            diverged_fraction,
        });
    }
    let mean = |f: fn(&LlcEstimate) -> f64| {
        finite.iter().map(|e| f(e)).sum::<f64>() / finite.len() as f64
    };
    Ok(LlcEstimate {
        lambda_hat: mean(|e| e.lambda_hat),
        l_bar: mean(|e| e.l_bar),
        l0: mean(|e| e.l0),
        diverged: false,
        diverged_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(losses: Vec<f64>) -> ChainTrace {
        ChainTrace {
            losses,
            diverged_at: None,
        }
    }

    #[test]
    fn beta_arithmetic() {
        assert!((wbic_beta(20, 1.0).unwrap() - 1.0 / 20f64.ln()).abs() < 1e-15);
        assert!((wbic_beta(20, 1.0).unwrap() - 0.33381).abs() < 1e-5);
        assert!((wbic_beta(1_000_000, 1.0).unwrap() - 0.072_382_4).abs() < 1e-6);
        // beta is linear in beta0.
        assert_eq!(
            wbic_beta(100, 2.0).unwrap(),
            2.0 * wbic_beta(100, 1.0).unwrap()
        );
    }

    #[test]
    fn beta_rejects_tiny_n_and_bad_beta0() {
        assert_eq!(wbic_beta(2, 1.0).unwrap_err(), EstimatorError::DatasetTooSmall(2));
        assert_eq!(wbic_beta(10, 0.0).unwrap_err(), EstimatorError::BadBeta0(0.0));
    }

    #[test]
    fn constant_trace_estimates_zero() {
        let cfg = EstimatorConfig::new(1000, 1.0, 2, 1);
        let est = estimate_llc(&trace(vec![1.3; 10]), &cfg).unwrap();
        assert_eq!(est.lambda_hat, 0.0);
        assert!(!est.diverged);
    }

    #[test]
    fn hand_arithmetic_case() {
        // trace[0] = 1.0, post-burn-in mean 1.5, n = 1000, beta0 = 1:
        // lambda = 1000 * (1/ln 1000) * 0.5 = 72.3824...
        let cfg = EstimatorConfig::new(1000, 1.0, 1, 1);
        let est = estimate_llc(&trace(vec![1.0, 1.4, 1.6]), &cfg).unwrap();
        let expected = 1000.0 / 1000f64.ln() * ((1.4 + 1.6) / 2.0 - 1.0);
        assert!((est.lambda_hat - expected).abs() < 1e-12);
        assert!((est.lambda_hat - 72.3824).abs() < 1e-3);
    }

    #[test]
    fn nan_after_burn_in_contaminates() {
        let cfg = EstimatorConfig::new(1000, 1.0, 1, 1);
        let est = estimate_llc(&trace(vec![1.0, f64::NAN, 1.5]), &cfg).unwrap();
        assert!(est.lambda_hat.is_nan());
        assert!(est.diverged);
    }

    #[test]
    fn divergence_flag_forces_nan() {
        let cfg = EstimatorConfig::new(1000, 1.0, 0, 1);
        let t = ChainTrace {
            losses: vec![1.0, 2.0],
            diverged_at: Some(2),
        };
        let est = estimate_llc(&t, &cfg).unwrap();
        assert!(est.lambda_hat.is_nan());
        assert!(est.diverged);
        assert_eq!(est.diverged_fraction, 1.0);
    }

    #[test]
    fn empty_window_is_a_config_error() {
        let cfg = EstimatorConfig::new(1000, 1.0, 5, 1);
        assert_eq!(
            estimate_llc(&trace(vec![1.0, 2.0]), &cfg).unwrap_err(),
            EstimatorError::EmptyWindow {
                burn_in: 5,
                len: 2
            }
        );
    }

    #[test]
    fn single_step_trace_with_zero_burn_in_estimates_zero() {
        let cfg = EstimatorConfig::new(1000, 1.0, 0, 1);
        let est = estimate_llc(&trace(vec![0.7]), &cfg).unwrap();
        assert_eq!(est.lambda_hat, 0.0);
    }

    #[test]
    fn uniform_window_shift_moves_estimate_by_n_beta_c() {
        // Shifting every post-burn-in entry by c (anchor entry fixed) moves
        // lambda by exactly n * beta * c.
        let cfg = EstimatorConfig::new(5000, 1.0, 1, 1);
        let base = vec![1.0, 1.2, 1.4, 1.1];
        let c = 0.37;
        let shifted: Vec<f64> = base
            .iter()
            .enumerate()
            .map(|(i, &v)| if i >= 1 { v + c } else { v })
            .collect();
        let a = estimate_llc(&trace(base), &cfg).unwrap();
        let b = estimate_llc(&trace(shifted), &cfg).unwrap();
        let n_beta = 5000.0 * wbic_beta(5000, 1.0).unwrap();
        assert!((b.lambda_hat - a.lambda_hat - n_beta * c).abs() < 1e-9);
    }

    #[test]
    fn multi_chain_identity_mean_and_filtering() {
        let mk = |lambda: f64| LlcEstimate {
            lambda_hat: lambda,
            l_bar: 1.0,
            l0: 0.5,
            diverged: lambda.is_nan(),
            diverged_fraction: if lambda.is_nan() { 1.0 } else { 0.0 },
        };
        let one = multi_chain_estimate(&[mk(2.0)]).unwrap();
        assert_eq!(one.lambda_hat, 2.0);

        let two = multi_chain_estimate(&[mk(2.0), mk(4.0)]).unwrap();
        assert_eq!(two.lambda_hat, 3.0);

        let mixed = multi_chain_estimate(&[mk(2.0), mk(f64::NAN)]).unwrap();
        assert_eq!(mixed.lambda_hat, 2.0);
        assert_eq!(mixed.diverged_fraction, 0.5);
        assert!(!mixed.diverged);

        let all_bad = multi_chain_estimate(&[mk(f64::NAN)]).unwrap();
        assert!(all_bad.diverged);
        assert!(all_bad.lambda_hat.is_nan());

        assert_eq!(
            multi_chain_estimate(&[]).unwrap_err(),
            EstimatorError::NoEstimates
        );
    }
}
