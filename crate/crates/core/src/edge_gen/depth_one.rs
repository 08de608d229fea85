//! The depth-one model: a root with `n` leaf children and no further structure.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HagError, Result};
use crate::marks::LogNormal;

/// Parameters of one depth-one replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthOneConfig {
    pub n: usize,
    pub alpha: f64,
    /// Mean leaf mark.
    pub nu: f64,
    /// Leaf mark variance.
    pub eta2: f64,
    /// Probability a leaf starts a fresh colour.
    pub rho: f64,
    pub omega: f64,
}

impl DepthOneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(HagError::invalid("depth-one model needs n >= 2"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(HagError::invalid(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) || !(0.0..1.0).contains(&self.omega) {
            return Err(HagError::invalid("rho must lie in [0, 1] and omega in [0, 1)"));
        }
        LogNormal::from_moments(self.nu, self.eta2).map(|_| ())
    }
}

/// Outcome counts of one replication.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthOneTallies {
    pub attempts: u64,
    /// Attempts whose two sampled leaves differ.
    pub distinct: u64,
    pub agreement: u64,
    pub conflict: u64,
    pub loops: u64,
    pub inadmissible: u64,
}

/// Draws `Binomial(T, p)` for a real total `T`: the integer part is binomial
/// and the fractional part contributes one extra trial with success
/// probability `frac(T) p`, which keeps the mean at `T p`.
pub(crate) fn binomial_real<R: Rng + ?Sized>(total: f64, p: f64, rng: &mut R) -> u64 {
    let whole = total.floor();
    let frac = total - whole;
    let mut k = match Binomial::new(whole as u64, p) {
        Ok(b) => b.sample(rng),
        Err(_) => 0,
    };
    if rng.random::<f64>() < frac * p {
        k += 1;
    }
    k
}

/// One replication of the depth-one construction with log-normal marks.
///
/// Each leaf keeps the root colour with probability `1 - rho` (otherwise it
/// gets a fresh colour), is wild with probability `omega`, and draws a mark
/// with mean `nu` and variance `eta2`. Then `S ~ Binomial(sum F, alpha / 2)`
/// leaf pairs are sampled with replacement at rates `F_x / sum F`.
pub fn depth_one_generate<R: Rng + ?Sized>(config: &DepthOneConfig, rng: &mut R) -> Result<DepthOneTallies> {
    config.validate()?;
    let law = LogNormal::from_moments(config.nu, config.eta2)?;
    let n = config.n;
    let mut colors = Vec::with_capacity(n);
    let mut wild = Vec::with_capacity(n);
    let mut marks = Vec::with_capacity(n);
    for x in 0..n {
        colors.push(if rng.random::<f64>() < config.rho {
            x as u32 + 1
        } else {
            0
        });
        wild.push(rng.random::<f64>() < config.omega);
        let y: f64 = rng.sample(StandardNormal);
        marks.push((law.mu + law.sigma * y).exp());
    }
    let total: f64 = marks.iter().sum();
    let pick = WeightedIndex::new(&marks).map_err(|e| HagError::invalid(format!("leaf marks: {e}")))?;
    let attempts = binomial_real(total, config.alpha / 2.0, rng);

    let mut t = DepthOneTallies {
        attempts,
        ..Default::default()
    };
    for _ in 0..attempts {
        let x = pick.sample(rng);
        let y = pick.sample(rng);
        if x == y {
            t.loops += 1;
            continue;
        }
        t.distinct += 1;
        if colors[x] == colors[y] {
            t.agreement += 1;
        } else if wild[x] || wild[y] {
            t.conflict += 1;
        } else {
            t.inadmissible += 1;
        }
    }
    Ok(t)
}
