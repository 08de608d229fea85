//! Edge generation by pairs of directed random walks.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, Poisson};

use super::{
    classify_pair, collapse_keys, edge_key, GenerationTallies, HeightDistribution, LabelledMultigraph, PairOutcome,
};
use crate::error::{HagError, Result};
use crate::latent_tree::{run_indexed, LatentTree};
use crate::marks::NodeMarks;
use crate::rng::{Stage, Streams};

/// Attempts per walk batch; each batch owns stream `(Walks, 1 + batch)`.
pub const WALK_BATCH: u64 = 4096;

/// One step away from the root: child `c` of `(d, v)` with probability `F_c / F_v`.
#[inline]
fn step<R: Rng + ?Sized>(tree: &LatentTree, marks: &NodeMarks, d: usize, v: usize, rng: &mut R) -> usize {
    let children = tree.children(d, v);
    let below = marks.level(d + 1);
    let mut u = rng.random::<f64>() * marks.get(d, v);
    let last = children.end - 1;
    for c in children {
        u -= below[c];
        if u < 0.0 {
            return c;
        }
    }
    last
}

/// Walks from node `v` at depth `d` down to a leaf and returns its id.
pub fn random_walk<R: Rng + ?Sized>(tree: &LatentTree, marks: &NodeMarks, d: usize, v: usize, rng: &mut R) -> usize {
    let mut node = v;
    for level in d..tree.depth() {
        node = step(tree, marks, level, node, rng);
    }
    node
}

/// Runs two walks from `(d, v)` in lockstep. Returns both leaves and the
/// height at which they first split (`None` if they never do).
fn walk_pair<R: Rng + ?Sized>(
    tree: &LatentTree,
    marks: &NodeMarks,
    d: usize,
    v: usize,
    rng: &mut R,
) -> (usize, usize, Option<usize>) {
    let depth = tree.depth();
    let (mut a, mut b) = (v, v);
    let mut split = None;
    for level in d..depth {
        a = step(tree, marks, level, a, rng);
        b = step(tree, marks, level, b, rng);
        if split.is_none() && a != b {
            split = Some(depth - level - 1);
        }
    }
    (a, b, split)
}

/// Paired-walk generator.
///
/// The attempt count is Poisson(`F_root / 2`); each attempt draws a height
/// `s ~ q`, a start node at depth `D - s` with probability `F_v / F_root`,
/// and two independent walks. Per-attempt outcomes are tallied along with
/// the height of first decoupling.
pub fn generate_walk_mode(
    tree: &LatentTree,
    leaf_colors: &[u32],
    marks: &NodeMarks,
    wild: &[bool],
    q: &HeightDistribution,
    streams: &Streams,
    threads: usize,
) -> Result<LabelledMultigraph> {
    let depth = tree.depth();
    if q.depth() != depth {
        return Err(HagError::invalid("height distribution depth differs from tree depth"));
    }
    if leaf_colors.len() != tree.num_leaves() || wild.len() != tree.num_leaves() {
        return Err(HagError::invalid("leaf attribute length differs from leaf count"));
    }
    let mean_attempts = 0.5 * marks.root();
    let attempts = if mean_attempts > 0.0 {
        Poisson::new(mean_attempts)
            .map_err(|e| HagError::invalid(format!("attempt count: {e}")))?
            .sample(&mut streams.stream(Stage::Walks, 0)) as u64
    } else {
        0
    };

    // Alias table over F_v for each start depth in use.
    let mut starts: Vec<Option<WeightedAliasIndex<f64>>> = vec![None; depth];
    for s in 1..=depth {
        if q.get(s) > 0.0 {
            let table = WeightedAliasIndex::new(marks.level(depth - s).to_vec())
                .map_err(|e| HagError::invalid(format!("start-node table at height {s}: {e}")))?;
            starts[s - 1] = Some(table);
        }
    }

    let batches = attempts.div_ceil(WALK_BATCH);
    let run_batch = |b: u32| -> (Vec<u64>, GenerationTallies) {
        let mut rng = streams.stream(Stage::Walks, 1 + b as u64);
        let n = WALK_BATCH.min(attempts - b as u64 * WALK_BATCH);
        let mut keys = Vec::new();
        let mut tallies = GenerationTallies {
            decoupling: vec![0; depth],
            ..Default::default()
        };
        for _ in 0..n {
            let s = q.sample(&mut rng);
            let table = starts[s - 1].as_ref().expect("height with zero mass sampled");
            let v = table.sample(&mut rng);
            let (x, y, split) = walk_pair(tree, marks, depth - s, v, &mut rng);
            if let Some(t) = split {
                tallies.decoupling[t] += 1;
            }
            let outcome = classify_pair(x, y, leaf_colors, wild);
            tallies.record(outcome);
            if matches!(outcome, PairOutcome::Agreement | PairOutcome::Conflict) {
                keys.push(edge_key(x, y));
            }
        }
        (keys, tallies)
    };
    let parts = run_indexed(threads, batches as u32, run_batch);

    let mut tallies = GenerationTallies {
        decoupling: vec![0; depth],
        ..Default::default()
    };
    let mut keys = Vec::new();
    for (k, t) in parts {
        keys.extend(k);
        tallies.merge(&t);
    }
    let edges = collapse_keys(keys, leaf_colors);
    Ok(LabelledMultigraph {
        colors: leaf_colors.to_vec(),
        wild: wild.to_vec(),
        edges,
        tallies,
    })
}
