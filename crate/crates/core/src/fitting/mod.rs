//! Parameter fitting: from observable graph statistics to generator parameters.
//!
//! The pipeline derives `mu` and the multi-degree targets from the cube-root
//! principle, fixes the depth from the vertex budget, then runs one-dimensional
//! searches for `theta`, the `(q1, nu)` pair and `omega` in turn.

pub mod mle;

use serde::{Deserialize, Serialize};

use crate::analytics::{branching_moments, color_coeffs, dot, h_matrix, poisson_offspring_variance};
use crate::edge_gen::HeightDistribution;
use crate::error::{HagError, Result};
use crate::latent_tree::{color_switch_rates, expected_label_count};
use crate::marks::lognormal_from_moments;
use crate::numeric::bisect_increasing;

pub use mle::{constrained_mle, constrained_mle_degrees, MleStats};

/// Grid step of the `q1` scan.
pub const Q1_STEP: f64 = 0.005;
/// Relative tolerance of the `theta` search.
pub const THETA_TOL: f64 = 1e-6;
/// Relative tolerance of the `nu` search.
pub const NU_TOL: f64 = 1e-4;
/// Maximum number of depth increments after an infeasible fit.
pub const MAX_DEPTH_RETRIES: usize = 3;

/// Observed statistics of the graph to be modelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub vertices: f64,
    pub labels: f64,
    pub mean_agreement_degree: f64,
    pub mean_conflict_degree: f64,
    pub alcc: f64,
    /// Degree variance, preferably the constrained-MLE estimate.
    pub degree_variance: f64,
}

impl TargetStats {
    pub fn validate(&self) -> Result<()> {
        if !(self.vertices > 1.0) {
            return Err(HagError::invalid("vertex count must exceed 1"));
        }
        if !(self.labels > 1.0) {
            return Err(HagError::invalid("label count must exceed 1"));
        }
        if !(self.mean_agreement_degree > 0.0) {
            return Err(HagError::invalid("mean agreement degree must be positive"));
        }
        if !(self.mean_conflict_degree >= 0.0) {
            return Err(HagError::invalid("mean conflict degree must be >= 0"));
        }
        if !(self.alcc > 0.0 && self.alcc < 1.0) {
            return Err(HagError::invalid("clustering coefficient must lie in (0, 1)"));
        }
        if !(self.degree_variance >= 0.0) || !self.degree_variance.is_finite() {
            return Err(HagError::invalid("degree variance must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Output of the cube-root step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CubeRoot {
    pub mu: f64,
    pub d_a_prime: f64,
    pub pi1_prime: f64,
}

/// `mu = 1 + d_A`, `d_A' = d_A (1 - c - ln(1 - c))`, `pi_1' = 1 / (1 - (1 - c)/ln(1 - c))`
/// with `c = kappa^(1/3)`.
pub fn cube_root_derive(d_a: f64, kappa: f64) -> Result<CubeRoot> {
    if !(d_a > 0.0) || !d_a.is_finite() {
        return Err(HagError::invalid(format!(
            "mean agreement degree must be positive, got {d_a}"
        )));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(HagError::invalid(format!(
            "clustering coefficient must lie in (0, 1), got {kappa}"
        )));
    }
    let c = kappa.cbrt();
    let l = (-c).ln_1p();
    Ok(CubeRoot {
        mu: 1.0 + d_a,
        d_a_prime: d_a * (1.0 - c - l),
        pi1_prime: 1.0 / (1.0 - (1.0 - c) / l),
    })
}

/// Largest `D >= 3` with `mu^D` within the vertex budget.
pub fn choose_depth(budget: f64, mu: f64) -> Result<usize> {
    if !(mu > 1.0) {
        return Err(HagError::invalid(format!("mean offspring must exceed 1, got {mu}")));
    }
    if !(budget > mu.powi(3)) {
        return Err(HagError::infeasible(
            "depth",
            format!("vertex budget {budget} is at most mu^3 = {}; increase |V|", mu.powi(3)),
        ));
    }
    // Integer walk instead of floor(ln B / ln mu), which misrounds exact powers.
    let limit = budget * (1.0 + 1e-12);
    let mut depth = 3;
    while mu.powi(depth as i32 + 1) <= limit {
        depth += 1;
    }
    Ok(depth)
}

/// `K_scaled = K ln(scale n) / ln n`.
pub fn scaled_label_count(k: f64, n: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(HagError::invalid(format!("scale must lie in (0, 1], got {scale}")));
    }
    if !(n > 1.0) || !(scale * n > 1.0) {
        return Err(HagError::invalid("scaled vertex count must exceed 1"));
    }
    Ok(k * (scale * n).ln() / n.ln())
}

/// Bisection for the `theta` whose expected label count is `target_k`.
pub fn fit_theta(mu: f64, depth: usize, target_k: f64) -> Result<f64> {
    if !(target_k > 1.0) {
        return Err(HagError::invalid("label target must exceed 1"));
    }
    if depth < 2 {
        return Err(HagError::invalid("label fit needs depth >= 2"));
    }
    let k = |theta: f64| expected_label_count(mu, depth, theta);
    let mut lo = (target_k - 1.0) / ((depth - 1) as f64 * (mu - 1.0));
    let mut hi = 10.0 * lo;
    let mut k_lo = k(lo)?;
    let mut k_hi = k(hi)?;
    let mut doublings = 0;
    while k_lo > target_k || k_hi < target_k {
        if doublings == 64 {
            return Err(HagError::infeasible(
                "theta",
                format!("label target {target_k} not bracketed"),
            ));
        }
        doublings += 1;
        if k_lo > target_k {
            lo *= 0.5;
            k_lo = k(lo)?;
        } else {
            hi *= 2.0;
            k_hi = k(hi)?;
        }
    }
    if k_lo > k_hi {
        return Err(HagError::infeasible("theta", "label count not increasing in theta"));
    }
    let theta = bisect_increasing(|t| k(t).unwrap_or(f64::NAN) - target_k, lo, hi, THETA_TOL);
    Ok(theta)
}

/// Quantities of the decoupling model the `(q1, nu)` search needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiblingFit {
    /// `2 Gamma . A`.
    pub d_a_prime: f64,
    /// `Gamma_0 A_0 / (Gamma . A)`.
    pub pi1_prime: f64,
    /// `Gamma . (1 - A)`.
    pub gamma_dot_mismatch: f64,
}

/// Evaluates the model at `(q1, nu)`, flooring negative `Gamma_t` at 0.
pub fn sibling_fit(mu: f64, depth: usize, theta: f64, eta2: f64, q1: f64, nu: f64) -> Result<SiblingFit> {
    let m = branching_moments(mu, poisson_offspring_variance(mu), depth)?;
    let h = h_matrix(nu, eta2, &m)?;
    let q = HeightDistribution::canonical(q1, depth)?;
    let gamma: Vec<f64> = (0..depth)
        .map(|t| {
            let g: f64 = (t + 1..=depth)
                .map(|s| q.get(s) * (h.get(s, t + 1) - h.get(s, t)))
                .sum();
            g.max(0.0)
        })
        .collect();
    let (a, _) = color_coeffs(&color_switch_rates(mu, depth, theta)?, 0.0)?;
    let ga = dot(&gamma, &a);
    let mismatch: Vec<f64> = a.iter().map(|x| 1.0 - x).collect();
    Ok(SiblingFit {
        d_a_prime: 2.0 * ga,
        pi1_prime: gamma[0] * a[0] / ga,
        gamma_dot_mismatch: dot(&gamma, &mismatch),
    })
}

/// Solves `2 Gamma . A = d_A'` for `nu >= d_A'` at fixed `q1`.
pub fn solve_nu(mu: f64, depth: usize, theta: f64, eta2: f64, q1: f64, d_a_prime: f64) -> Result<f64> {
    let f = |nu: f64| sibling_fit(mu, depth, theta, eta2, q1, nu).map(|s| s.d_a_prime - d_a_prime);
    let lo = d_a_prime;
    let f_lo = f(lo)?;
    if f_lo >= 0.0 {
        return Ok(lo);
    }
    let mut hi = 2.0 * lo;
    let mut f_hi = f(hi)?;
    let mut doublings = 0;
    while f_hi < 0.0 {
        if doublings == 64 {
            return Err(HagError::infeasible(
                "nu",
                format!("degree target not reached at q1 = {q1}"),
            ));
        }
        if f_hi < f_lo {
            return Err(HagError::infeasible("nu", "agreement degree not increasing in nu"));
        }
        doublings += 1;
        hi *= 2.0;
        f_hi = f(hi)?;
    }
    Ok(bisect_increasing(|nu| f(nu).unwrap_or(f64::NAN), lo, hi, NU_TOL * 1e-2))
}

/// One point of the `(q1, nu(q1))` fit curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub q1: f64,
    pub nu: f64,
    pub pi1_prime: f64,
}

/// Result of the `(q1, nu)` search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Q1NuFit {
    pub q1: f64,
    pub nu: f64,
    /// Scanned grid, ending with the first point below the target.
    pub curve: Vec<CurvePoint>,
}

/// Scans `q1 = 1 - k 0.005` downward, solving for `nu` at each step, until the
/// sibling share `pi_1'` falls below its target; the crossing is interpolated
/// linearly and `nu` solved again there.
pub fn fit_q1_nu(mu: f64, depth: usize, theta: f64, eta2: f64, d_a_prime: f64, pi1_target: f64) -> Result<Q1NuFit> {
    if !(pi1_target > 0.0 && pi1_target < 1.0) {
        return Err(HagError::invalid("sibling share target must lie in (0, 1)"));
    }
    let point = |q1: f64| -> Result<CurvePoint> {
        let nu = solve_nu(mu, depth, theta, eta2, q1, d_a_prime)?;
        let s = sibling_fit(mu, depth, theta, eta2, q1, nu)?;
        Ok(CurvePoint {
            q1,
            nu,
            pi1_prime: s.pi1_prime,
        })
    };
    let steps = (1.0 / Q1_STEP).round() as usize;
    let mut curve = vec![point(1.0)?];
    for k in 1..=steps {
        let q1 = (1.0 - k as f64 * Q1_STEP).max(0.0);
        let p = point(q1)?;
        let prev = *curve.last().unwrap();
        curve.push(p);
        if p.pi1_prime > prev.pi1_prime + 1e-12 {
            return Err(HagError::infeasible(
                "q1",
                format!(
                    "sibling share increased from {} to {} at q1 = {q1}",
                    prev.pi1_prime, p.pi1_prime
                ),
            ));
        }
        if p.pi1_prime < pi1_target {
            let w = (prev.pi1_prime - pi1_target) / (prev.pi1_prime - p.pi1_prime);
            let q1 = prev.q1 + w * (p.q1 - prev.q1);
            let nu = solve_nu(mu, depth, theta, eta2, q1, d_a_prime)?;
            return Ok(Q1NuFit { q1, nu, curve });
        }
    }
    Err(HagError::infeasible(
        "q1",
        format!("no solution at depth {depth}: sibling share never reached target"),
    ))
}

/// `omega = 1 - sqrt(1 - d_C / (2 Gamma . (1 - A)))`.
pub fn fit_omega(d_c: f64, gamma_dot_mismatch: f64) -> Result<f64> {
    if !(d_c >= 0.0) {
        return Err(HagError::invalid("mean conflict degree must be >= 0"));
    }
    if d_c == 0.0 {
        return Ok(0.0);
    }
    let cap = 2.0 * gamma_dot_mismatch;
    if !(d_c < cap) {
        return Err(HagError::infeasible(
            "omega",
            format!("conflict degree {d_c} needs omega >= 1 (max {cap}); increase D"),
        ));
    }
    Ok(1.0 - (1.0 - d_c / cap).sqrt())
}

/// Options of the fitting pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Fraction of the target vertex count to build.
    pub scale: f64,
    /// Wildness bias copied into the output.
    pub beta: f64,
    /// Shrink the label target logarithmically with the scale.
    pub rescale_labels: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            scale: 1.0,
            beta: 0.0,
            rescale_labels: false,
        }
    }
}

/// Generator parameters with the derived quantities behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedParams {
    pub mu: f64,
    pub depth: usize,
    pub theta: f64,
    pub q1: f64,
    pub mu_o: f64,
    pub sigma_o: f64,
    pub omega: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub nu: f64,
    #[serde(default)]
    pub eta2: f64,
    #[serde(default)]
    pub d_a_prime: f64,
    #[serde(default)]
    pub pi1_prime: f64,
    #[serde(default)]
    pub label_target: f64,
}

/// Fitted parameters plus the trace of the search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOutcome {
    pub params: FittedParams,
    pub curve: Vec<CurvePoint>,
    /// Depths abandoned before success, with the reason.
    pub rejected_depths: Vec<(usize, String)>,
}

/// Runs the full fit.
pub fn fit_pipeline(targets: &TargetStats, opts: &FitOptions) -> Result<FitOutcome> {
    targets.validate()?;
    let cr = cube_root_derive(targets.mean_agreement_degree, targets.alcc)?;
    let budget = opts.scale * targets.vertices;
    if !(opts.scale > 0.0 && opts.scale <= 1.0) {
        return Err(HagError::invalid(format!(
            "scale must lie in (0, 1], got {}",
            opts.scale
        )));
    }
    let first_depth = choose_depth(budget, cr.mu)?;
    let label_target = if opts.rescale_labels {
        scaled_label_count(targets.labels, targets.vertices, opts.scale)?
    } else {
        targets.labels
    };
    let eta2 = targets.degree_variance;
    let mut rejected = Vec::new();
    let mut last_err = None;
    for depth in first_depth..=first_depth + MAX_DEPTH_RETRIES {
        let attempt = (|| -> Result<FitOutcome> {
            let theta = fit_theta(cr.mu, depth, label_target)?;
            let fit = fit_q1_nu(cr.mu, depth, theta, eta2, cr.d_a_prime, cr.pi1_prime)?;
            let s = sibling_fit(cr.mu, depth, theta, eta2, fit.q1, fit.nu)?;
            let omega = fit_omega(targets.mean_conflict_degree, s.gamma_dot_mismatch)?;
            let (mu_o, sigma_o) = lognormal_from_moments(fit.nu, eta2)?;
            Ok(FitOutcome {
                params: FittedParams {
                    mu: cr.mu,
                    depth,
                    theta,
                    q1: fit.q1,
                    mu_o,
                    sigma_o,
                    omega,
                    beta: opts.beta,
                    nu: fit.nu,
                    eta2,
                    d_a_prime: s.d_a_prime,
                    pi1_prime: s.pi1_prime,
                    label_target,
                },
                curve: fit.curve,
                rejected_depths: Vec::new(),
            })
        })();
        match attempt {
            Ok(mut out) => {
                out.rejected_depths = rejected;
                return Ok(out);
            }
            Err(
                e @ HagError::Infeasible {
                    stage: "omega" | "q1", ..
                },
            ) => {
                log::warn!("fit failed at depth {depth}: {e}; retrying one level deeper");
                rejected.push((depth, e.to_string()));
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or_else(|| HagError::infeasible("fit", "no depth succeeded")))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn table_targets() -> TargetStats {
        TargetStats {
            vertices: 3.0e7,
            labels: 200.0,
            mean_agreement_degree: 25.0,
            mean_conflict_degree: 0.3,
            alcc: 0.5,
            degree_variance: 700.0,
        }
    }

    #[test]
    fn cube_root_limits() {
        let c = cube_root_derive(25.0, 1e-12).unwrap();
        assert!((c.d_a_prime - 25.0).abs() < 1e-3);
        assert!(c.pi1_prime < 1e-3);
        assert!(cube_root_derive(25.0, 1.0).is_err());
        assert!(cube_root_derive(0.0, 0.5).is_err());
    }

    #[test]
    fn depth_rule() {
        assert_eq!(choose_depth(3.0e7, 26.0).unwrap(), 5);
        assert_eq!(choose_depth(456_976.0, 26.0).unwrap(), 4);
        assert_eq!(choose_depth(26f64.powi(3) + 1.0, 26.0).unwrap(), 3);
        assert!(choose_depth(26f64.powi(3), 26.0).is_err());
    }

    #[test]
    fn label_rescaling() {
        assert_eq!(scaled_label_count(200.0, 3e7, 1.0).unwrap(), 200.0);
        let k = scaled_label_count(200.0, 3e7, 0.01).unwrap();
        assert!((k - 200.0 * 3e5f64.ln() / 3e7f64.ln()).abs() < 1e-12);
        assert!((k - 147.0).abs() < 1.0);
        assert!(scaled_label_count(200.0, 3e7, 0.02).unwrap() > k);
        assert!(scaled_label_count(200.0, 10.0, 0.05).is_err());
    }

    #[test]
    fn theta_rejects_degenerate_target() {
        assert!(fit_theta(26.0, 4, 1.0).is_err());
        let t = fit_theta(26.0, 4, 200.0).unwrap();
        assert!((expected_label_count(26.0, 4, t).unwrap() - 200.0).abs() < 1e-3);
    }

    #[test]
    fn omega_boundaries() {
        assert_eq!(fit_omega(0.0, 3.0).unwrap(), 0.0);
        assert!(fit_omega(6.0, 3.0).is_err());
        let w = fit_omega(0.0768 * 2.0, 0.5).unwrap();
        assert!((w - 0.08).abs() < 1e-12);
    }

    #[test]
    fn q1_scan_starts_above_target() {
        let cr = cube_root_derive(25.0, 0.5).unwrap();
        let theta = fit_theta(cr.mu, 4, 200.0).unwrap();
        let fit = fit_q1_nu(cr.mu, 4, theta, 700.0, cr.d_a_prime, cr.pi1_prime).unwrap();
        assert_eq!(fit.curve[0].q1, 1.0);
        assert!(fit.curve[0].pi1_prime > 0.99);
        assert!(fit.curve.windows(2).all(|w| w[1].pi1_prime <= w[0].pi1_prime));
    }

    #[test]
    fn pipeline_round_trips_targets() {
        let out = fit_pipeline(
            &table_targets(),
            &FitOptions {
                scale: 456_976.0 / 3.0e7,
                ..Default::default()
            },
        )
        .unwrap();
        let p = &out.params;
        assert_eq!(p.depth, 4);
        let cr = cube_root_derive(25.0, 0.5).unwrap();
        assert!((p.d_a_prime - cr.d_a_prime).abs() / cr.d_a_prime < 1e-4);
        assert!((p.pi1_prime - cr.pi1_prime).abs() < 2e-3);
        let mut zero = table_targets();
        zero.mean_conflict_degree = 0.0;
        let out = fit_pipeline(
            &zero,
            &FitOptions {
                scale: 456_976.0 / 3.0e7,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.params.omega, 0.0);
    }

    #[test]
    fn infeasible_conflict_degree_exhausts_retries() {
        let mut t = table_targets();
        t.mean_conflict_degree = 1e4;
        let e = fit_pipeline(
            &t,
            &FitOptions {
                scale: 456_976.0 / 3.0e7,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(e, HagError::Infeasible { stage: "omega", .. }), "{e}");
    }
}
