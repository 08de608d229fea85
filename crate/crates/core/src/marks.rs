//! Leaf marks, wildness flags and their aggregation up the latent tree.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{HagError, Result};
use crate::latent_tree::{run_indexed, LatentTree};
use crate::numeric::csum;
use crate::rng::{Stage, Streams};

/// Leaves per sampling block; each block owns one marks and one wildness stream.
pub const LEAF_BLOCK: usize = 1 << 14;

/// Log-normal parameters of the leaf mark law.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LogNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl LogNormal {
    /// Parameters with mean `nu` and variance `eta2`.
    pub fn from_moments(nu: f64, eta2: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(HagError::invalid(format!("mark mean must be positive, got {nu}")));
        }
        if !(eta2 >= 0.0) || !eta2.is_finite() {
            return Err(HagError::invalid(format!("mark variance must be >= 0, got {eta2}")));
        }
        let s2 = (eta2 / (nu * nu)).ln_1p();
        Ok(Self {
            mu: nu.ln() - 0.5 * s2,
            sigma: s2.sqrt(),
        })
    }

    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }

    pub fn variance(&self) -> f64 {
        let nu = self.mean();
        nu * nu * (self.sigma * self.sigma).exp_m1()
    }
}

/// `(mu_o, sigma_o)` for a log-normal with mean `nu` and variance `eta2`.
pub fn lognormal_from_moments(nu: f64, eta2: f64) -> Result<(f64, f64)> {
    LogNormal::from_moments(nu, eta2).map(|p| (p.mu, p.sigma))
}

/// Per-leaf mark and wild flag.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafAttributes {
    pub marks: Vec<f64>,
    pub wild: Vec<bool>,
}

/// Options for leaf attribute sampling.
#[derive(Debug, Clone, Copy)]
pub struct MarkOptions {
    pub law: LogNormal,
    /// Marginal wild rate in `[0, 1)`.
    pub omega: f64,
    /// Tilt coupling wildness to the mark's normal score; 0 gives independence.
    pub beta: f64,
    /// Round marks up to integers.
    pub ceil: bool,
}

impl LeafAttributes {
    /// `F_x = exp(mu_o + sigma_o Y_x)` and wild iff `U_x < omega exp(beta Y_x - beta^2/2)`,
    /// the tilted probability being clamped at 1.
    pub fn sample(n: usize, opts: &MarkOptions, streams: &Streams, threads: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&opts.omega) {
            return Err(HagError::invalid(format!(
                "wild rate must lie in [0, 1), got {}",
                opts.omega
            )));
        }
        if !(opts.beta >= 0.0) || !opts.beta.is_finite() {
            return Err(HagError::invalid(format!("bias must be >= 0, got {}", opts.beta)));
        }
        if !(opts.law.sigma >= 0.0) || !opts.law.mu.is_finite() {
            return Err(HagError::invalid("invalid log-normal parameters"));
        }
        let blocks = n.div_ceil(LEAF_BLOCK);
        let tilt_shift = -0.5 * opts.beta * opts.beta;
        let block = |b: u32| -> (Vec<f64>, Vec<bool>) {
            let lo = b as usize * LEAF_BLOCK;
            let len = LEAF_BLOCK.min(n - lo);
            let mut mark_rng = streams.stream(Stage::Marks, b as u64);
            let mut wild_rng = streams.stream(Stage::Wildness, b as u64);
            let mut marks = Vec::with_capacity(len);
            let mut wild = Vec::with_capacity(len);
            for _ in 0..len {
                let y: f64 = mark_rng.sample(StandardNormal);
                let mut f = (opts.law.mu + opts.law.sigma * y).exp();
                if opts.ceil {
                    f = f.ceil();
                }
                marks.push(f);
                let p = (opts.omega * (opts.beta * y + tilt_shift).exp()).min(1.0);
                wild.push(wild_rng.random::<f64>() < p);
            }
            (marks, wild)
        };
        let parts = run_indexed(threads, blocks as u32, block);
        let mut marks = Vec::with_capacity(n);
        let mut wild = Vec::with_capacity(n);
        for (m, w) in parts {
            marks.extend(m);
            wild.extend(w);
        }
        Ok(Self { marks, wild })
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }
}

/// Subtree mark sums `F_v` for every node, stored per depth.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeMarks {
    levels: Vec<Vec<f64>>,
}

impl NodeMarks {
    /// Bottom-up sums of the leaf marks.
    pub fn aggregate(tree: &LatentTree, leaf_marks: &[f64]) -> Result<Self> {
        let depth = tree.depth();
        if leaf_marks.len() != tree.num_leaves() {
            return Err(HagError::invalid(format!(
                "{} leaf marks for {} leaves",
                leaf_marks.len(),
                tree.num_leaves()
            )));
        }
        if leaf_marks.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
            return Err(HagError::invalid("leaf marks must be positive and finite"));
        }
        let mut levels = vec![Vec::new(); depth + 1];
        levels[depth] = leaf_marks.to_vec();
        for d in (0..depth).rev() {
            let below = &levels[d + 1];
            let sums: Vec<f64> = (0..tree.level_size(d))
                .map(|i| tree.children(d, i).map(|c| below[c]).sum())
                .collect();
            levels[d] = sums;
        }
        Ok(Self { levels })
    }

    #[inline]
    pub fn get(&self, d: usize, i: usize) -> f64 {
        self.levels[d][i]
    }

    pub fn level(&self, d: usize) -> &[f64] {
        &self.levels[d]
    }

    pub fn leaf_marks(&self) -> &[f64] {
        self.levels.last().unwrap()
    }

    /// `F_root`, the total of all leaf marks.
    pub fn root(&self) -> f64 {
        self.levels[0][0]
    }

    /// Compensated total at depth `d`; equals `root()` up to rounding.
    pub fn level_total(&self, d: usize) -> f64 {
        csum(self.levels[d].iter().copied())
    }
}
