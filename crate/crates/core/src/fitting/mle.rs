//! Log-normal fitting of a degree sample.

use serde::Serialize;

use crate::error::{HagError, Result};
use crate::numeric::csum;

/// Maximum likelihood statistics of a sample of log degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MleStats {
    pub n: usize,
    /// Mean of the log degrees.
    pub y_bar: f64,
    /// MLE standard deviation of the log degrees.
    pub sigma_hat: f64,
    /// Log of the mean degree.
    pub phi: f64,
    /// Constrained MLE of the log variance under `mu = phi - tau / 2`.
    pub tau: f64,
    /// Preferred degree variance `exp(2 phi)(exp(tau) - 1)`.
    pub eta2: f64,
    /// Plug-in variance `exp(2 y_bar + sigma_hat^2)(exp(sigma_hat^2) - 1)`, biased.
    pub eta2_simplistic: f64,
}

/// Fits `(y_bar, sigma_hat, phi, tau)` to log degrees `y`.
pub fn constrained_mle(y: &[f64]) -> Result<MleStats> {
    if y.is_empty() {
        return Err(HagError::invalid("constrained MLE needs at least one value"));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(HagError::invalid("log degrees must be finite"));
    }
    let n = y.len() as f64;
    let y_bar = csum(y.iter().copied()) / n;
    let var = csum(y.iter().map(|v| (v - y_bar) * (v - y_bar))) / n;
    let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let phi = y_max + (csum(y.iter().map(|v| (v - y_max).exp())) / n).ln();
    let gap = phi - y_bar;
    // Written as a ratio so it stays accurate when the radicand is near 1.
    let r = var + gap * gap;
    let tau = 2.0 * r / ((r + 1.0).sqrt() + 1.0);
    Ok(MleStats {
        n: y.len(),
        y_bar,
        sigma_hat: var.sqrt(),
        phi,
        tau,
        eta2: (2.0 * phi).exp() * tau.exp_m1(),
        eta2_simplistic: (2.0 * y_bar + var).exp() * var.exp_m1(),
    })
}

/// Constrained MLE from raw positive degrees.
pub fn constrained_mle_degrees(degrees: &[f64]) -> Result<MleStats> {
    if degrees.iter().any(|&d| !(d > 0.0)) {
        return Err(HagError::invalid("degrees must be positive to take logs"));
    }
    let y: Vec<f64> = degrees.iter().map(|d| d.ln()).collect();
    constrained_mle(&y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_sample_is_degenerate() {
        let s = constrained_mle(&[1.3; 7]).unwrap();
        assert!((s.phi - 1.3).abs() < 1e-15 && (s.y_bar - 1.3).abs() < 1e-15);
        assert_eq!((s.sigma_hat, s.tau, s.eta2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn two_point_hand_value() {
        let s = constrained_mle(&[0.0, 2f64.ln()]).unwrap();
        let r = (2f64.ln() / 2.0).powi(2) + (1.5f64.ln() - 2f64.ln() / 2.0).powi(2);
        assert!((s.tau - 2.0 * ((r + 1.0).sqrt() - 1.0)).abs() < 1e-15);
        assert!((s.tau - 0.119982).abs() < 5e-6, "{}", s.tau);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(constrained_mle(&[]).is_err());
        assert!(constrained_mle(&[f64::NAN]).is_err());
        assert!(constrained_mle_degrees(&[0.0, 1.0]).is_err());
    }
}
