//! Half-edge generation and randomized matching at link nodes.
//!
//! Leaves are visited in id order and every half-edge is appended to the list
//! of its link-node depth, so each list is sorted by leaf id. Since the
//! leaves below a node are contiguous, the half-edges of one link node form a
//! contiguous run of its list; `group_start` records those runs.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Poisson};

use super::{
    classify_pair, collapse_keys, edge_key, GenerationTallies, HeightDistribution, LabelledMultigraph, PairOutcome,
};
use crate::error::{HagError, Result};
use crate::latent_tree::{run_indexed, LatentTree};
use crate::marks::LEAF_BLOCK;
use crate::rng::{Stage, Streams};

/// Link nodes per matching work unit.
const LINK_CHUNK: usize = 1024;

/// A surrogate for one random walk from `link` (at the list's depth) to `leaf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HalfEdge {
    pub link: u32,
    pub leaf: u32,
}

/// Half-edge lists `S_0..S_{D-1}`, grouped by link node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HalfEdges {
    /// `leaves[j]`: leaf ids of half-edges whose link node sits at depth `j`.
    leaves: Vec<Vec<u32>>,
    /// `group_start[j][r]..group_start[j][r + 1]` is link node `r`'s run in `leaves[j]`.
    group_start: Vec<Vec<usize>>,
}

impl HalfEdges {
    pub fn depth(&self) -> usize {
        self.leaves.len()
    }

    pub fn total(&self) -> usize {
        self.leaves.iter().map(Vec::len).sum()
    }

    /// Number of half-edges whose link node is at depth `j`.
    pub fn len_at(&self, j: usize) -> usize {
        self.leaves[j].len()
    }

    /// Leaf ids of the half-edges at link node `r` of depth `j`.
    pub fn group(&self, j: usize, r: usize) -> &[u32] {
        &self.leaves[j][self.group_start[j][r]..self.group_start[j][r + 1]]
    }

    pub fn iter_depth(&self, j: usize) -> impl Iterator<Item = HalfEdge> + '_ {
        let starts = &self.group_start[j];
        (0..starts.len() - 1).flat_map(move |r| {
            self.leaves[j][starts[r]..starts[r + 1]]
                .iter()
                .map(move |&leaf| HalfEdge { link: r as u32, leaf })
        })
    }
}

/// Draws `Y^x_s ~ Poisson(q_s F_x)` half-edges `(pi^s(x), x)` for every leaf
/// `x` and height `s`, stored under link-node depth `D - s`.
/// Leaf block `b` draws from stream `(Heights, b)`.
pub fn generate_half_edges(
    tree: &LatentTree,
    leaf_marks: &[f64],
    q: &HeightDistribution,
    streams: &Streams,
    threads: usize,
) -> Result<HalfEdges> {
    let depth = tree.depth();
    let n = tree.num_leaves();
    if leaf_marks.len() != n {
        return Err(HagError::invalid("leaf mark count differs from leaf count"));
    }
    if q.depth() != depth {
        return Err(HagError::invalid("height distribution depth differs from tree depth"));
    }
    let blocks = n.div_ceil(LEAF_BLOCK);
    let block = |b: u32| -> Vec<Vec<u32>> {
        let mut rng = streams.stream(Stage::Heights, b as u64);
        let lo = b as usize * LEAF_BLOCK;
        let hi = (lo + LEAF_BLOCK).min(n);
        let mut lists = vec![Vec::new(); depth];
        for x in lo..hi {
            for s in 1..=depth {
                let mean = q.get(s) * leaf_marks[x];
                if mean <= 0.0 {
                    continue;
                }
                let count = match Poisson::new(mean) {
                    Ok(p) => p.sample(&mut rng) as usize,
                    Err(_) => 0,
                };
                let list = &mut lists[depth - s];
                list.extend(std::iter::repeat_n(x as u32, count));
            }
        }
        lists
    };
    let parts = run_indexed(threads, blocks as u32, block);

    let mut leaves: Vec<Vec<u32>> = (0..depth)
        .map(|j| Vec::with_capacity(parts.iter().map(|p| p[j].len()).sum()))
        .collect();
    for part in parts {
        for (j, list) in part.into_iter().enumerate() {
            leaves[j].extend(list);
        }
    }

    let group_start = (0..depth)
        .map(|j| {
            let list = &leaves[j];
            let mut starts = Vec::with_capacity(tree.level_size(j) + 1);
            starts.push(0);
            let mut pos = 0;
            for r in 0..tree.level_size(j) {
                let end_leaf = tree.leaf_range(j, r).end as u32;
                pos += list[pos..].partition_point(|&x| x < end_leaf);
                starts.push(pos);
            }
            starts
        })
        .collect();
    Ok(HalfEdges { leaves, group_start })
}

/// Single-round randomized matching of half-edges.
///
/// At each link node the half-edges are shuffled with the node's own stream
/// `(Matching, depth, node)` and consecutive entries are paired. Equal
/// leaves give a loop, distinct leaves are classified by colour and
/// wildness, and an odd leftover is counted as unmatched. Groups with no
/// half-edges or a single leaf type are skipped. Failed pairs are never
/// retried.
pub fn match_half_edges(
    tree: &LatentTree,
    half_edges: &HalfEdges,
    leaf_colors: &[u32],
    wild: &[bool],
    streams: &Streams,
    threads: usize,
) -> Result<LabelledMultigraph> {
    let depth = tree.depth();
    if half_edges.depth() != depth {
        return Err(HagError::invalid("half-edge lists do not match tree depth"));
    }
    if leaf_colors.len() != tree.num_leaves() || wild.len() != tree.num_leaves() {
        return Err(HagError::invalid("leaf attribute length differs from leaf count"));
    }

    // Work units: (depth, first link node) chunks.
    let units: Vec<(usize, usize)> = (0..depth)
        .flat_map(|j| (0..tree.level_size(j)).step_by(LINK_CHUNK).map(move |r| (j, r)))
        .collect();
    let run_unit = |u: u32| -> (Vec<u64>, GenerationTallies) {
        let (j, first) = units[u as usize];
        let last = (first + LINK_CHUNK).min(tree.level_size(j));
        let mut keys = Vec::new();
        let mut tallies = GenerationTallies::default();
        let mut buf: Vec<u32> = Vec::new();
        for r in first..last {
            let group = half_edges.group(j, r);
            tallies.half_edges += group.len() as u64;
            match_group(
                j,
                r,
                group,
                &mut buf,
                leaf_colors,
                wild,
                streams,
                &mut keys,
                &mut tallies,
            );
        }
        (keys, tallies)
    };
    let parts = run_indexed(threads, units.len() as u32, run_unit);

    let mut tallies = GenerationTallies::default();
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

#[allow(clippy::too_many_arguments)]
fn match_group(
    j: usize,
    r: usize,
    group: &[u32],
    buf: &mut Vec<u32>,
    colors: &[u32],
    wild: &[bool],
    streams: &Streams,
    keys: &mut Vec<u64>,
    tallies: &mut GenerationTallies,
) {
    let n = group.len();
    if n == 0 {
        return;
    }
    tallies.unmatched += (n % 2) as u64;
    // The group is sorted, so a single type means first == last.
    if group[0] == group[n - 1] {
        tallies.attempts += (n / 2) as u64;
        tallies.loops += (n / 2) as u64;
        return;
    }
    buf.clear();
    buf.extend_from_slice(group);
    let mut rng = streams.stream2(Stage::Matching, j as u32, r as u64);
    buf.shuffle(&mut rng);
    for pair in buf.chunks_exact(2) {
        let (x, y) = (pair[0] as usize, pair[1] as usize);
        let outcome = classify_pair(x, y, colors, wild);
        tallies.record(outcome);
        if matches!(outcome, PairOutcome::Agreement | PairOutcome::Conflict) {
            keys.push(edge_key(x, y));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge_gen::EdgeKind;
    use crate::marks::NodeMarks;

    fn fixed_groups(tree: &LatentTree, lists: Vec<Vec<u32>>) -> HalfEdges {
        let depth = tree.depth();
        let group_start = (0..depth)
            .map(|j| {
                let mut s = vec![0];
                for r in 0..tree.level_size(j) {
                    let end = tree.leaf_range(j, r).end as u32;
                    s.push(lists[j].partition_point(|&x| x < end));
                }
                s
            })
            .collect();
        HalfEdges {
            leaves: lists,
            group_start,
        }
    }

    #[test]
    fn empty_and_single_type_groups_give_no_edges() {
        let t = LatentTree::from_offspring(&[vec![3]]).unwrap();
        let s = Streams::new(0);
        let h = fixed_groups(&t, vec![vec![]]);
        let g = match_half_edges(&t, &h, &[0, 0, 0], &[false; 3], &s, 1).unwrap();
        assert!(g.edges.is_empty());
        let h = fixed_groups(&t, vec![vec![1, 1, 1, 1, 1]]);
        let g = match_half_edges(&t, &h, &[0, 0, 0], &[false; 3], &s, 1).unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.tallies.loops, 2);
        assert_eq!(g.tallies.unmatched, 1);
    }

    #[test]
    fn two_distinct_same_color_half_edges_make_one_edge() {
        let t = LatentTree::from_offspring(&[vec![3]]).unwrap();
        let h = fixed_groups(&t, vec![vec![0, 2]]);
        let g = match_half_edges(&t, &h, &[4, 4, 4], &[false; 3], &Streams::new(1), 1).unwrap();
        assert_eq!(g.edges.len(), 1);
        assert_eq!(
            (g.edges[0].u, g.edges[0].v, g.edges[0].kind),
            (0, 2, EdgeKind::Agreement)
        );
        assert_eq!(g.tallies.unmatched, 0);
    }

    #[test]
    fn tame_cross_color_pair_is_inadmissible() {
        let t = LatentTree::from_offspring(&[vec![2]]).unwrap();
        let h = fixed_groups(&t, vec![vec![0, 1]]);
        let g = match_half_edges(&t, &h, &[0, 1], &[false, false], &Streams::new(1), 1).unwrap();
        assert!(g.edges.is_empty());
        assert_eq!(g.tallies.inadmissible, 1);
        let g = match_half_edges(&t, &h, &[0, 1], &[false, true], &Streams::new(1), 1).unwrap();
        assert_eq!(g.edges[0].kind, EdgeKind::Conflict);
    }

    #[test]
    fn half_edges_sit_under_their_link_nodes() {
        let s = Streams::new(21);
        let t = LatentTree::sample(3.0, 3, &s, 1).unwrap();
        let marks = vec![4.0; t.num_leaves()];
        let q = HeightDistribution::uniform(3).unwrap();
        let h = generate_half_edges(&t, &marks, &q, &s, 1).unwrap();
        for j in 0..3 {
            let mut seen = 0;
            for e in h.iter_depth(j) {
                assert_eq!(t.ancestor_of_leaf(e.leaf as usize, 3 - j), e.link as usize);
                seen += 1;
            }
            assert_eq!(seen, h.len_at(j));
        }
        let h2 = generate_half_edges(&t, &marks, &q, &s, 3).unwrap();
        assert_eq!(h, h2);
        let zero = HeightDistribution::canonical(1.0, 3).unwrap();
        let h3 = generate_half_edges(&t, &marks, &zero, &s, 1).unwrap();
        assert_eq!(h3.len_at(0) + h3.len_at(1), 0);
    }

    #[test]
    fn matching_tallies_are_consistent() {
        let s = Streams::new(31);
        let t = LatentTree::sample(5.0, 3, &s, 1).unwrap();
        let n = t.num_leaves();
        let marks = vec![6.0; n];
        let nm = NodeMarks::aggregate(&t, &marks).unwrap();
        assert!(nm.root() > 0.0);
        let q = HeightDistribution::canonical(0.5, 3).unwrap();
        let h = generate_half_edges(&t, &marks, &q, &s, 1).unwrap();
        let colors: Vec<u32> = (0..n as u32).map(|x| x / 9).collect();
        let wild: Vec<bool> = (0..n).map(|x| x % 4 == 0).collect();
        let g = match_half_edges(&t, &h, &colors, &wild, &s, 1).unwrap();
        let tl = &g.tallies;
        assert_eq!(tl.half_edges as usize, h.total());
        assert_eq!(2 * tl.attempts + tl.unmatched, tl.half_edges);
        assert_eq!(tl.agreement + tl.conflict + tl.loops + tl.inadmissible, tl.attempts);
        assert_eq!(g.multi_edge_count(EdgeKind::Agreement), tl.agreement);
        assert_eq!(g.multi_edge_count(EdgeKind::Conflict), tl.conflict);
        for e in &g.edges {
            match e.kind {
                EdgeKind::Agreement => assert_eq!(colors[e.u as usize], colors[e.v as usize]),
                EdgeKind::Conflict => {
                    assert_ne!(colors[e.u as usize], colors[e.v as usize]);
                    assert!(wild[e.u as usize] || wild[e.v as usize]);
                }
            }
        }
        let g4 = match_half_edges(&t, &h, &colors, &wild, &s, 4).unwrap();
        assert_eq!(g, g4);
    }
}
