//! Closed-form expectations for the hidden ancestor graph: walk decoupling,
//! edge counts, degree and clustering heuristics, and collision counts.
//!
//! Everything here is a pure function of its inputs. Sums use compensated
//! accumulation so that exact identities can be checked to 1e-12.

use serde::Serialize;

use crate::edge_gen::HeightDistribution;
use crate::error::{HagError, Result};
use crate::latent_tree::SwitchRates;
use crate::numeric::csum;

/// Offspring variance of the `1 + Poisson(mu - 1)` law.
pub fn poisson_offspring_variance(mu: f64) -> f64 {
    mu - 1.0
}

/// Per-generation moments of the branching process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchingMoments {
    pub mu: f64,
    pub zeta1sq: f64,
    /// `mu^t`.
    pub mu_pow: Vec<f64>,
    /// Variance of the generation-`t` size.
    pub zeta_sq: Vec<f64>,
    /// Two-term approximation of `E[1 / xi_t]`, exact (1) at `t = 0`.
    pub delta: Vec<f64>,
}

/// Moments for `t = 0..=depth`.
pub fn branching_moments(mu: f64, zeta1sq: f64, depth: usize) -> Result<BranchingMoments> {
    if !(mu > 1.0) || !mu.is_finite() {
        return Err(HagError::invalid(format!("mean offspring must exceed 1, got {mu}")));
    }
    if !(zeta1sq >= 0.0) {
        return Err(HagError::invalid("offspring variance must be >= 0"));
    }
    let mu_pow: Vec<f64> = (0..=depth).map(|t| mu.powi(t as i32)).collect();
    let zeta_sq = mu_pow
        .iter()
        .map(|&m| zeta1sq * (m - 1.0) * (m / mu) / (mu - 1.0))
        .collect();
    let delta = mu_pow
        .iter()
        .enumerate()
        .map(|(t, &m)| if t == 0 { 1.0 } else { (1.0 + 1.0 / mu) / m })
        .collect();
    Ok(BranchingMoments {
        mu,
        zeta1sq,
        mu_pow,
        zeta_sq,
        delta,
    })
}

/// Lower-triangular matrix `h[s][t]`, `0 <= t <= s <= D`: expected coupled
/// walk pairs at height `t` per unit of `mu^D q_s`, for pairs started at height `s`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HMatrix {
    rows: Vec<Vec<f64>>,
}

impl HMatrix {
    pub fn depth(&self) -> usize {
        self.rows.len() - 1
    }

    #[inline]
    pub fn get(&self, s: usize, t: usize) -> f64 {
        self.rows[s][t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

/// `h_{s,t} = (nu mu^{t-s} + (1 - delta_{s-t})(a + b(mu^t - 1)) mu^{-s}) / 2`
/// for `t < s`, with `a = eta2 / nu`, `b = nu zeta_1^2 / (mu(mu - 1))`, and
/// `h_{s,s} = nu / 2` exactly.
pub fn h_matrix(nu: f64, eta2: f64, m: &BranchingMoments) -> Result<HMatrix> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(HagError::invalid(format!("mark mean must be positive, got {nu}")));
    }
    let mu = m.mu;
    let depth = m.mu_pow.len() - 1;
    let a = eta2 / nu;
    let b = nu * m.zeta1sq / (mu * (mu - 1.0));
    let rows = (0..=depth)
        .map(|s| {
            (0..=s)
                .map(|t| {
                    if t == s {
                        0.5 * nu
                    } else {
                        let var_ratio = a + b * (m.mu_pow[t] - 1.0);
                        0.5 * (nu / m.mu_pow[s - t] + (1.0 - m.delta[s - t]) * var_ratio / m.mu_pow[s])
                    }
                })
                .collect()
        })
        .collect();
    Ok(HMatrix { rows })
}

/// `Gamma_t` for `t = 0..D-1`, plus the heights where it came out negative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decoupling {
    pub gamma: Vec<f64>,
    /// Heights `t` with `Gamma_t < 0`; reported, never clamped here.
    pub negative: Vec<usize>,
}

/// `Gamma_t = sum_{s > t} q_s (h_{s,t+1} - h_{s,t})`.
pub fn decoupling_profile(h: &HMatrix, q: &HeightDistribution) -> Result<Decoupling> {
    let depth = h.depth();
    if q.depth() != depth {
        return Err(HagError::invalid(
            "height distribution depth differs from h-matrix depth",
        ));
    }
    let gamma: Vec<f64> = (0..depth)
        .map(|t| csum((t + 1..=depth).map(|s| q.get(s) * (h.get(s, t + 1) - h.get(s, t)))))
        .collect();
    let negative: Vec<usize> = (0..depth).filter(|&t| gamma[t] < 0.0).collect();
    if !negative.is_empty() {
        log::warn!("negative decoupling rate at heights {negative:?}: parameters outside the approximation's regime");
    }
    Ok(Decoupling { gamma, negative })
}

/// `A_t = prod_{d=D-t}^{D} (1 - rho_d)^2` and `C_t = (1 - A_t) omega (2 - omega)`, `t = 0..D-1`.
pub fn color_coeffs(rates: &SwitchRates, omega: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(0.0..1.0).contains(&omega) {
        return Err(HagError::invalid(format!("wild rate must lie in [0, 1), got {omega}")));
    }
    let depth = rates.depth();
    let w = omega * (2.0 - omega);
    let mut a = Vec::with_capacity(depth);
    let mut prod = 1.0;
    for t in 0..depth {
        let keep = 1.0 - rates.get(depth - t);
        prod *= keep * keep;
        a.push(prod);
    }
    let c = a.iter().map(|&at| (1.0 - at) * w).collect();
    Ok((a, c))
}

/// Dot product with compensated summation.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    csum(x.iter().zip(y).map(|(a, b)| a * b))
}

/// Expected multi-edge counts by attempt outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeCounts {
    pub agreement: f64,
    pub conflict: f64,
    pub loops: f64,
    pub inadmissible: f64,
}

impl EdgeCounts {
    pub fn total(&self) -> f64 {
        self.agreement + self.conflict + self.loops + self.inadmissible
    }
}

/// Expected loop count `sum_s q_s mu^{D-s} (nu + (1 - delta_s) eta2 / nu) / 2`.
pub fn expected_loops(nu: f64, eta2: f64, q: &HeightDistribution, m: &BranchingMoments) -> f64 {
    let depth = q.depth();
    csum((1..=depth).map(|s| 0.5 * q.get(s) * m.mu_pow[depth - s] * (nu + (1.0 - m.delta[s]) * eta2 / nu)))
}

/// `M_A`, `M_C`, `M_L` and the inadmissible remainder.
#[allow(clippy::too_many_arguments)]
pub fn expected_edge_counts(
    gamma: &[f64],
    a: &[f64],
    c: &[f64],
    omega: f64,
    nu: f64,
    eta2: f64,
    q: &HeightDistribution,
    m: &BranchingMoments,
) -> EdgeCounts {
    let depth = gamma.len();
    let scale = m.mu_pow[depth];
    let w = omega * (2.0 - omega);
    EdgeCounts {
        agreement: scale * dot(gamma, a),
        conflict: scale * dot(gamma, c),
        loops: expected_loops(nu, eta2, q, m),
        inadmissible: scale * csum(gamma.iter().zip(a).map(|(g, at)| g * (1.0 - at) * (1.0 - w))),
    }
}

/// Exact `(M_A, M_C)` for a deterministic `mu`-ary tree with constant marks:
/// `nu mu^D (mu - 1) / 2 sum_s q_s mu^{-s} sum_{t<s} A_t mu^t`, likewise with `C`.
pub fn deterministic_edge_counts(nu: f64, mu: f64, q: &HeightDistribution, a: &[f64], c: &[f64]) -> (f64, f64) {
    let depth = q.depth();
    let pre = 0.5 * nu * mu.powi(depth as i32) * (mu - 1.0);
    let weighted = |coef: &[f64]| {
        pre * csum(
            (1..=depth).map(|s| q.get(s) * mu.powi(-(s as i32)) * csum((0..s).map(|t| coef[t] * mu.powi(t as i32)))),
        )
    };
    (weighted(a), weighted(c))
}

/// Degree and clustering predictions of the sibling heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusteringEstimates {
    /// Mean agreement multi-degree.
    pub d_a_prime: f64,
    /// Mean conflict multi-degree.
    pub d_c_prime: f64,
    /// Share of agreement multi-edges that join siblings.
    pub pi1_prime: f64,
    /// Mean distinct sibling neighbours.
    pub d_s: f64,
    /// Mean distinct agreement neighbours.
    pub d_a: f64,
    /// Share of agreement neighbours that are siblings.
    pub pi1: f64,
    /// Predicted average local clustering coefficient.
    pub kappa: f64,
}

pub fn degree_and_clustering(gamma: &[f64], a: &[f64], c: &[f64], mu: f64) -> ClusteringEstimates {
    let ga = dot(gamma, a);
    let d_a_prime = 2.0 * ga;
    let d_c_prime = 2.0 * dot(gamma, c);
    let pi1_prime = gamma[0] * a[0] / ga;
    let adjacent = -(-pi1_prime * d_a_prime / (mu - 1.0)).exp_m1();
    let d_s = (mu - 1.0) * adjacent;
    let d_a = (1.0 - pi1_prime) * d_a_prime + d_s;
    let pi1 = d_s / d_a;
    ClusteringEstimates {
        d_a_prime,
        d_c_prime,
        pi1_prime,
        d_s,
        d_a,
        pi1,
        kappa: pi1 * pi1 * adjacent,
    }
}

/// Model parameters needed for the analytic profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub mu: f64,
    /// Offspring variance; `mu - 1` for the generator's offspring law.
    pub zeta1sq: f64,
    pub nu: f64,
    pub eta2: f64,
    pub q: HeightDistribution,
    pub rates: SwitchRates,
    pub omega: f64,
}

/// All analytic quantities for one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticProfile {
    pub depth: usize,
    pub a_const: f64,
    pub b_const: f64,
    pub moments: BranchingMoments,
    pub h: HMatrix,
    pub gamma: Vec<f64>,
    pub negative_gamma: Vec<usize>,
    pub agreement_coeffs: Vec<f64>,
    pub conflict_coeffs: Vec<f64>,
    pub edges: EdgeCounts,
    /// `nu mu^D / 2`, the expected number of attempts.
    pub attempt_budget: f64,
    pub clustering: ClusteringEstimates,
}

impl AnalyticProfile {
    pub fn compute(spec: &ModelSpec) -> Result<Self> {
        let depth = spec.q.depth();
        if spec.rates.depth() != depth {
            return Err(HagError::invalid(
                "switch rates and height distribution disagree on depth",
            ));
        }
        let moments = branching_moments(spec.mu, spec.zeta1sq, depth)?;
        let h = h_matrix(spec.nu, spec.eta2, &moments)?;
        let dec = decoupling_profile(&h, &spec.q)?;
        let (a, c) = color_coeffs(&spec.rates, spec.omega)?;
        let edges = expected_edge_counts(&dec.gamma, &a, &c, spec.omega, spec.nu, spec.eta2, &spec.q, &moments);
        let clustering = degree_and_clustering(&dec.gamma, &a, &c, spec.mu);
        Ok(Self {
            depth,
            a_const: spec.eta2 / spec.nu,
            b_const: spec.nu * spec.zeta1sq / (spec.mu * (spec.mu - 1.0)),
            attempt_budget: 0.5 * spec.nu * moments.mu_pow[depth],
            moments,
            h,
            gamma: dec.gamma,
            negative_gamma: dec.negative,
            agreement_coeffs: a,
            conflict_coeffs: c,
            edges,
            clustering,
        })
    }
}

/// Mean collision count of weighted sampling with replacement: `alpha/2` times
/// `(zeta^2 + Lambda)/lambda - 2 sum nu_j eta_j^2 / lambda^2 + zeta^2 Lambda / lambda^3`.
pub fn collision_mean(nu: &[f64], eta2: &[f64], alpha: f64) -> Result<f64> {
    let n = nu.len();
    if n < 2 {
        return Err(HagError::invalid("collision formula needs n >= 2"));
    }
    if eta2.len() != n {
        return Err(HagError::invalid("mean and variance vectors differ in length"));
    }
    if nu.iter().any(|&v| !(v > 0.0)) || eta2.iter().any(|&v| !(v >= 0.0)) {
        return Err(HagError::invalid("means must be positive and variances non-negative"));
    }
    let lambda = csum(nu.iter().copied());
    let big_lambda = csum(nu.iter().map(|v| v * v));
    let zeta2 = csum(eta2.iter().copied());
    let cross = csum(nu.iter().zip(eta2).map(|(v, e)| v * e));
    Ok(0.5
        * alpha
        * ((zeta2 + big_lambda) / lambda - 2.0 * cross / (lambda * lambda) + zeta2 * big_lambda / lambda.powi(3)))
}

/// Depth-one expectations `(M_E, M_A, M_C)`.
pub fn depth_one_expectations(n: usize, alpha: f64, nu: f64, eta2: f64, rho: f64, omega: f64) -> (f64, f64, f64) {
    let nf = n as f64;
    let m_e = 0.5 * alpha * nu * (nf - 1.0) * (1.0 - eta2 / (nf * nu * nu));
    let m_a = (1.0 - rho) * (1.0 - rho) * m_e;
    let m_c = rho * (2.0 - rho) * omega * (2.0 - omega) * m_e;
    (m_e, m_a, m_c)
}
