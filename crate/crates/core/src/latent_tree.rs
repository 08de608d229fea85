//! Depth-stratified Galton-Watson latent trees with inherited colour labels.
//!
//! Nodes are numbered per depth in breadth-first order. Because every node's
//! children are appended contiguously, the children of node `i` at depth `d`
//! occupy the half-open range `child_start[d][i]..child_start[d][i + 1]` of
//! depth `d + 1`, and the leaves below any node form a contiguous block of
//! leaf ids. The rest of the crate leans on that layout heavily.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{HagError, Result};
use crate::rng::{Stage, Streams};

/// Default refusal threshold for the expected number of tree nodes.
pub const DEFAULT_NODE_BUDGET: f64 = 1.0e9;

/// Rooted tree with all leaves at depth `depth`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatentTree {
    depth: usize,
    /// `child_start[d]` has `|V_d| + 1` entries for `d < depth`.
    child_start: Vec<Vec<u32>>,
    /// `parent[d][j]` is the index in depth `d - 1` of node `j` at depth `d`; `parent[0]` is empty.
    parent: Vec<Vec<u32>>,
}

/// Draws `1 + Poisson(mean_extra)` offspring.
struct Offspring(Option<Poisson<f64>>);

impl Offspring {
    fn new(mu: f64) -> Self {
        let extra = mu - 1.0;
        Offspring(if extra > 0.0 { Poisson::new(extra).ok() } else { None })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match &self.0 {
            Some(p) => 1 + p.sample(rng) as u32,
            None => 1,
        }
    }
}

/// Expected total node count `(mu^(D+1) - 1) / (mu - 1)` of a depth-`depth` tree.
pub fn expected_node_count(mu: f64, depth: usize) -> f64 {
    if (mu - 1.0).abs() < 1e-12 {
        return (depth + 1) as f64;
    }
    (mu.powi(depth as i32 + 1) - 1.0) / (mu - 1.0)
}

/// Fails fast when the expected tree size exceeds `budget` nodes.
pub fn check_node_budget(mu: f64, depth: usize, budget: f64) -> Result<()> {
    let expected = expected_node_count(mu, depth);
    if expected > budget || expected > u32::MAX as f64 / 2.0 {
        return Err(HagError::NodeBudget {
            expected,
            budget: budget.min(u32::MAX as f64 / 2.0),
        });
    }
    Ok(())
}

impl LatentTree {
    /// Samples a Galton-Watson tree with `1 + Poisson(mu - 1)` offspring per node.
    ///
    /// The root's offspring come from stream `(Tree, 0)` and the subtree under
    /// root child `i` from stream `(Tree, 1 + i)`, so the result does not depend
    /// on `threads`.
    pub fn sample(mu: f64, depth: usize, streams: &Streams, threads: usize) -> Result<Self> {
        if !(mu >= 1.0) || !mu.is_finite() {
            return Err(HagError::invalid(format!("mean offspring must be >= 1, got {mu}")));
        }
        if depth < 1 {
            return Err(HagError::invalid("tree depth must be >= 1"));
        }
        let offspring = Offspring::new(mu);
        let root_children = offspring.draw(&mut streams.stream(Stage::Tree, 0));

        // Per subtree: offspring counts for local levels 1..depth-1.
        let grow = |i: u32| -> Vec<Vec<u32>> {
            let mut rng = streams.stream(Stage::Tree, 1 + i as u64);
            let mut levels = Vec::with_capacity(depth.saturating_sub(1));
            let mut width = 1usize;
            for _ in 1..depth {
                let counts: Vec<u32> = (0..width).map(|_| offspring.draw(&mut rng)).collect();
                width = counts.iter().map(|&c| c as usize).sum();
                levels.push(counts);
            }
            levels
        };
        let subtrees: Vec<Vec<Vec<u32>>> = run_indexed(threads, root_children, grow);

        let mut child_start = Vec::with_capacity(depth);
        child_start.push(vec![0, root_children]);
        for d in 1..depth {
            let width: usize = subtrees.iter().map(|s| s[d - 1].len()).sum();
            let mut starts = Vec::with_capacity(width + 1);
            let mut acc: u64 = 0;
            starts.push(0);
            for s in &subtrees {
                for &c in &s[d - 1] {
                    acc += c as u64;
                    if acc > u32::MAX as u64 {
                        return Err(HagError::NodeBudget {
                            expected: acc as f64,
                            budget: u32::MAX as f64,
                        });
                    }
                    starts.push(acc as u32);
                }
            }
            child_start.push(starts);
        }
        Ok(Self::from_child_starts(depth, child_start))
    }

    /// Builds a tree from explicit per-node offspring counts, level by level.
    /// `offspring[d]` lists the child counts of the nodes at depth `d`.
    pub fn from_offspring(offspring: &[Vec<u32>]) -> Result<Self> {
        let depth = offspring.len();
        if depth == 0 {
            return Err(HagError::invalid("tree depth must be >= 1"));
        }
        let mut width = 1usize;
        let mut child_start = Vec::with_capacity(depth);
        for (d, counts) in offspring.iter().enumerate() {
            if counts.len() != width {
                return Err(HagError::invalid(format!(
                    "depth {d} has {width} nodes but {} offspring counts",
                    counts.len()
                )));
            }
            if counts.contains(&0) {
                return Err(HagError::invalid(format!("node at depth {d} has no children")));
            }
            let mut starts = Vec::with_capacity(width + 1);
            let mut acc = 0u32;
            starts.push(0);
            for &c in counts {
                acc += c;
                starts.push(acc);
            }
            width = acc as usize;
            child_start.push(starts);
        }
        Ok(Self::from_child_starts(depth, child_start))
    }

    fn from_child_starts(depth: usize, child_start: Vec<Vec<u32>>) -> Self {
        let mut parent = Vec::with_capacity(depth + 1);
        parent.push(Vec::new());
        for starts in &child_start {
            let width = *starts.last().unwrap() as usize;
            let mut p = Vec::with_capacity(width);
            for (i, w) in starts.windows(2).enumerate() {
                p.extend(std::iter::repeat_n(i as u32, (w[1] - w[0]) as usize));
            }
            parent.push(p);
        }
        Self {
            depth,
            child_start,
            parent,
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Number of nodes at depth `d`.
    pub fn level_size(&self, d: usize) -> usize {
        if d == 0 {
            1
        } else {
            self.parent[d].len()
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.level_size(self.depth)
    }

    pub fn num_nodes(&self) -> usize {
        (0..=self.depth).map(|d| self.level_size(d)).sum()
    }

    /// Non-leaf node count, i.e. the number of potential link nodes.
    pub fn num_internal(&self) -> usize {
        (0..self.depth).map(|d| self.level_size(d)).sum()
    }

    /// Children of node `i` at depth `d < depth`, as an index range into depth `d + 1`.
    #[inline]
    pub fn children(&self, d: usize, i: usize) -> std::ops::Range<usize> {
        let s = &self.child_start[d];
        s[i] as usize..s[i + 1] as usize
    }

    /// Offspring counts of the nodes at depth `d < depth`.
    pub fn offspring_counts(&self, d: usize) -> impl Iterator<Item = u32> + '_ {
        self.child_start[d].windows(2).map(|w| w[1] - w[0])
    }

    /// Parent index (at depth `d - 1`) of node `j` at depth `d >= 1`.
    #[inline]
    pub fn parent(&self, d: usize, j: usize) -> usize {
        self.parent[d][j] as usize
    }

    pub fn parents(&self, d: usize) -> &[u32] {
        &self.parent[d]
    }

    /// Ancestor of leaf `x` at height `s` (depth `depth - s`).
    #[inline]
    pub fn ancestor_of_leaf(&self, x: usize, s: usize) -> usize {
        let mut v = x;
        for d in (self.depth - s + 1..=self.depth).rev() {
            v = self.parent[d][v] as usize;
        }
        v
    }

    /// Contiguous leaf-id range below node `i` at depth `d`.
    pub fn leaf_range(&self, d: usize, i: usize) -> std::ops::Range<usize> {
        let (mut lo, mut hi) = (i, i + 1);
        for level in d..self.depth {
            let s = &self.child_start[level];
            lo = s[lo] as usize;
            hi = s[hi] as usize;
        }
        lo..hi
    }

    /// Node range at depth `d` of the subtree hanging from root child `i`.
    fn subtree_range(&self, i: usize, d: usize) -> std::ops::Range<usize> {
        debug_assert!(d >= 1);
        let (mut lo, mut hi) = (i, i + 1);
        for level in 1..d {
            let s = &self.child_start[level];
            lo = s[lo] as usize;
            hi = s[hi] as usize;
        }
        lo..hi
    }
}

/// Runs `f(0..n)` either serially or on a dedicated pool; output order is by index.
pub(crate) fn run_indexed<T, F>(threads: usize, n: u32, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u32) -> T + Sync + Send,
{
    if threads <= 1 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

/// Per-depth colour switch probabilities `rho_1..rho_D`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchRates(Vec<f64>);

impl SwitchRates {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(HagError::invalid("switch rates need depth >= 1"));
        }
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(HagError::invalid("switch rates must lie in [0, 1]"));
        }
        Ok(Self(rates))
    }

    /// Constant rate at every depth, including the leaves.
    pub fn constant(depth: usize, rho: f64) -> Result<Self> {
        Self::new(vec![rho; depth])
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    /// `rho_d` for `1 <= d <= D`.
    #[inline]
    pub fn get(&self, d: usize) -> f64 {
        self.0[d - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Canonical rates: `rho_d = theta (mu - 1) / ((theta - 1)(mu - 1) + mu^d - 1)` for `d < D`, `rho_D = 0`.
pub fn color_switch_rates(mu: f64, depth: usize, theta: f64) -> Result<SwitchRates> {
    if !(mu > 1.0) {
        return Err(HagError::invalid(format!("mean offspring must exceed 1, got {mu}")));
    }
    if !(theta > 0.0) {
        return Err(HagError::invalid(format!("theta must be positive, got {theta}")));
    }
    if depth < 1 {
        return Err(HagError::invalid("tree depth must be >= 1"));
    }
    let mut rates: Vec<f64> = (1..depth)
        .map(|d| {
            let r = theta * (mu - 1.0) / ((theta - 1.0) * (mu - 1.0) + mu.powi(d as i32) - 1.0);
            r.clamp(0.0, 1.0)
        })
        .collect();
    rates.push(0.0);
    SwitchRates::new(rates)
}

/// Expected number of distinct labels over all nodes of the canonical labelled tree.
pub fn expected_label_count(mu: f64, depth: usize, theta: f64) -> Result<f64> {
    if depth < 1 {
        return Err(HagError::invalid("tree depth must be >= 1"));
    }
    if !(mu > 1.0) || !(theta > 0.0) {
        return Err(HagError::invalid("need mu > 1 and theta > 0"));
    }
    let c = theta * mu - theta - mu;
    let sum = crate::numeric::csum((1..depth).map(|d| 1.0 / (1.0 + c * mu.powi(-(d as i32)))));
    Ok(1.0 + theta * (mu - 1.0) * sum)
}

/// Mean number of leaves sharing the colour of a colour created at depth `d`:
/// `mu^(D-d) * prod_{t>d} (1 - rho_t)`.
pub fn expected_color_leaf_count(d: usize, rates: &SwitchRates, mu: f64) -> f64 {
    let depth = rates.depth();
    assert!((1..=depth).contains(&d), "depth index {d} outside 1..={depth}");
    let keep: f64 = (d + 1..=depth).map(|t| 1.0 - rates.get(t)).product();
    mu.powi((depth - d) as i32) * keep
}

/// Colour label per node, numbered in breadth-first creation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorAssignment {
    colors: Vec<Vec<u32>>,
    num_colors: u32,
}

impl ColorAssignment {
    /// Bernoulli(`rho_d`) inheritance. Switch decisions for the subtree under
    /// root child `i` come from stream `(Colors, i)`; ids are then handed out
    /// in one breadth-first pass, so numbering is independent of `threads`.
    pub fn assign(tree: &LatentTree, rates: &SwitchRates, streams: &Streams, threads: usize) -> Result<Self> {
        let depth = tree.depth();
        if rates.depth() != depth {
            return Err(HagError::invalid(format!(
                "{} switch rates supplied for a depth-{depth} tree",
                rates.depth()
            )));
        }
        let root_children = tree.level_size(1) as u32;
        let decide = |i: u32| -> Vec<Vec<bool>> {
            let mut rng = streams.stream(Stage::Colors, i as u64);
            (1..=depth)
                .map(|d| {
                    let rho = rates.get(d);
                    tree.subtree_range(i as usize, d)
                        .map(|_| rng.random::<f64>() < rho)
                        .collect()
                })
                .collect()
        };
        let switches = run_indexed(threads, root_children, decide);

        let mut colors = Vec::with_capacity(depth + 1);
        colors.push(vec![0u32]);
        let mut next = 1u32;
        for d in 1..=depth {
            let parent_colors = &colors[d - 1];
            let mut level = Vec::with_capacity(tree.level_size(d));
            let fresh = switches.iter().flat_map(|s| s[d - 1].iter().copied());
            for (j, z) in fresh.enumerate() {
                if z {
                    level.push(next);
                    next += 1;
                } else {
                    level.push(parent_colors[tree.parent(d, j)]);
                }
            }
            colors.push(level);
        }
        Ok(Self {
            colors,
            num_colors: next,
        })
    }

    /// Total distinct colours `K` over all nodes.
    pub fn num_colors(&self) -> u32 {
        self.num_colors
    }

    #[inline]
    pub fn color(&self, d: usize, j: usize) -> u32 {
        self.colors[d][j]
    }

    pub fn level(&self, d: usize) -> &[u32] {
        &self.colors[d]
    }

    pub fn leaf_colors(&self) -> &[u32] {
        self.colors.last().unwrap()
    }
}
