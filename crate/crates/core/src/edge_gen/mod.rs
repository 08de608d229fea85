//! Hidden ancestor multigraph construction.
//!
//! Two generators share the same output type: paired random walks ([`walk`]),
//! which follow the analysed model literally and serve as a small-scale
//! oracle, and half-edge matching ([`matching`]), the production path. The
//! depth-one special case lives in [`depth_one`].

pub mod depth_one;
pub mod matching;
pub mod walk;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HagError, Result};

pub use depth_one::{depth_one_generate, DepthOneConfig, DepthOneTallies};
pub use matching::{generate_half_edges, match_half_edges, HalfEdge, HalfEdges};
pub use walk::{generate_walk_mode, random_walk};

/// Law of the start height `s in 1..=D` of an edge attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightDistribution {
    q: Vec<f64>,
}

impl HeightDistribution {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(HagError::invalid("height distribution needs at least one height"));
        }
        if q.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(HagError::invalid("height probabilities must be non-negative"));
        }
        let total: f64 = q.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(HagError::invalid(format!("height probabilities sum to {total}, not 1")));
        }
        Ok(Self { q })
    }

    /// Atom `q1` at height 1, remainder spread evenly over heights `2..=depth`.
    pub fn canonical(q1: f64, depth: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&q1) {
            return Err(HagError::invalid(format!("q1 must lie in [0, 1], got {q1}")));
        }
        if depth == 1 {
            return Self::new(vec![1.0]);
        }
        if depth == 0 {
            return Err(HagError::invalid("tree depth must be >= 1"));
        }
        let rest = (1.0 - q1) / (depth - 1) as f64;
        let mut q = vec![rest; depth];
        q[0] = q1;
        Ok(Self { q })
    }

    /// Uniform over `1..=depth`.
    pub fn uniform(depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(HagError::invalid("tree depth must be >= 1"));
        }
        Ok(Self {
            q: vec![1.0 / depth as f64; depth],
        })
    }

    pub fn depth(&self) -> usize {
        self.q.len()
    }

    /// `q_s` for `1 <= s <= D`.
    #[inline]
    pub fn get(&self, s: usize) -> f64 {
        self.q[s - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.q
    }

    /// Categorical draw of a height.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.q.iter().enumerate() {
            acc += p;
            if u < acc {
                return i + 1;
            }
        }
        // Rounding: fall back to the highest height with positive mass.
        self.q.iter().rposition(|&p| p > 0.0).unwrap_or(0) + 1
    }
}

/// Kind of a retained edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Agreement,
    Conflict,
}

impl EdgeKind {
    pub fn code(self) -> char {
        match self {
            EdgeKind::Agreement => 'A',
            EdgeKind::Conflict => 'C',
        }
    }
}

/// Fate of one attempted edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairOutcome {
    Agreement,
    Conflict,
    Loop,
    Inadmissible,
}

/// Classifies the leaf pair `(x, y)`.
#[inline]
pub fn classify_pair(x: usize, y: usize, colors: &[u32], wild: &[bool]) -> PairOutcome {
    if x == y {
        PairOutcome::Loop
    } else if colors[x] == colors[y] {
        PairOutcome::Agreement
    } else if wild[x] || wild[y] {
        PairOutcome::Conflict
    } else {
        PairOutcome::Inadmissible
    }
}

/// Weighted simple edge between two leaves, `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub u: u32,
    pub v: u32,
    pub weight: u32,
    pub kind: EdgeKind,
}

/// Counts collected while generating a graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTallies {
    /// Attempted edges: walk pairs, or matched half-edge pairs.
    pub attempts: u64,
    pub agreement: u64,
    pub conflict: u64,
    pub loops: u64,
    pub inadmissible: u64,
    /// Half-edges left over at link nodes with an odd count (matching only).
    pub unmatched: u64,
    /// Half-edges produced (matching only).
    pub half_edges: u64,
    /// Walk pairs by height of first decoupling (walk mode only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decoupling: Vec<u64>,
}

impl GenerationTallies {
    pub(crate) fn record(&mut self, outcome: PairOutcome) {
        self.attempts += 1;
        match outcome {
            PairOutcome::Agreement => self.agreement += 1,
            PairOutcome::Conflict => self.conflict += 1,
            PairOutcome::Loop => self.loops += 1,
            PairOutcome::Inadmissible => self.inadmissible += 1,
        }
    }

    pub(crate) fn merge(&mut self, other: &GenerationTallies) {
        self.attempts += other.attempts;
        self.agreement += other.agreement;
        self.conflict += other.conflict;
        self.loops += other.loops;
        self.inadmissible += other.inadmissible;
        self.unmatched += other.unmatched;
        self.half_edges += other.half_edges;
        if self.decoupling.len() < other.decoupling.len() {
            self.decoupling.resize(other.decoupling.len(), 0);
        }
        for (a, b) in self.decoupling.iter_mut().zip(&other.decoupling) {
            *a += b;
        }
    }
}

#[inline]
pub(crate) fn edge_key(x: usize, y: usize) -> u64 {
    let (a, b) = if x < y { (x, y) } else { (y, x) };
    ((a as u64) << 32) | b as u64
}

/// Collapses a bag of edge keys into weighted edges sorted by `(u, v)`.
/// Addition is commutative, so the result does not depend on key order.
pub(crate) fn collapse_keys(mut keys: Vec<u64>, colors: &[u32]) -> Vec<Edge> {
    keys.sort_unstable();
    let mut edges = Vec::new();
    let mut i = 0;
    while i < keys.len() {
        let k = keys[i];
        let mut j = i + 1;
        while j < keys.len() && keys[j] == k {
            j += 1;
        }
        let (u, v) = ((k >> 32) as u32, k as u32);
        let kind = if colors[u as usize] == colors[v as usize] {
            EdgeKind::Agreement
        } else {
            EdgeKind::Conflict
        };
        edges.push(Edge {
            u,
            v,
            weight: (j - i) as u32,
            kind,
        });
        i = j;
    }
    edges
}

/// Leaf-vertex multigraph with colour and wild attributes; multi-edges are
/// stored once with their multiplicity as weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledMultigraph {
    pub colors: Vec<u32>,
    pub wild: Vec<bool>,
    /// Sorted by `(u, v)`, no self-loops.
    pub edges: Vec<Edge>,
    pub tallies: GenerationTallies,
}

impl LabelledMultigraph {
    pub fn new(colors: Vec<u32>, wild: Vec<bool>, mut edges: Vec<Edge>) -> Result<Self> {
        if colors.len() != wild.len() {
            return Err(HagError::invalid("colour and wild vectors differ in length"));
        }
        let n = colors.len();
        for e in edges.iter_mut() {
            if e.u == e.v {
                return Err(HagError::invalid(format!("self-loop at vertex {}", e.u)));
            }
            if e.u > e.v {
                std::mem::swap(&mut e.u, &mut e.v);
            }
            if e.v as usize >= n {
                return Err(HagError::invalid(format!("edge endpoint {} out of range", e.v)));
            }
            if e.weight == 0 {
                return Err(HagError::invalid("edge weight must be >= 1"));
            }
        }
        edges.sort_unstable_by_key(|e| (e.u, e.v));
        if edges.windows(2).any(|w| (w[0].u, w[0].v) == (w[1].u, w[1].v)) {
            return Err(HagError::invalid("duplicate edge records"));
        }
        Ok(Self {
            colors,
            wild,
            edges,
            tallies: GenerationTallies::default(),
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.colors.len()
    }

    /// Total multiplicity over edges of `kind`.
    pub fn multi_edge_count(&self, kind: EdgeKind) -> u64 {
        self.edges
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.weight as u64)
            .sum()
    }

    /// Edge-induced agreement and conflict subgraphs.
    pub fn split(&self) -> (Subgraph, Subgraph) {
        split_graphs(self)
    }
}

/// Edge-induced subgraph: its vertex set is every endpoint of its edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgraph {
    pub kind: EdgeKind,
    pub vertices: Vec<u32>,
    pub edges: Vec<Edge>,
}

/// Splits a multigraph into its agreement and conflict subgraphs.
pub fn split_graphs(g: &LabelledMultigraph) -> (Subgraph, Subgraph) {
    let build = |kind: EdgeKind| {
        let edges: Vec<Edge> = g.edges.iter().copied().filter(|e| e.kind == kind).collect();
        let mut vertices: Vec<u32> = edges.iter().flat_map(|e| [e.u, e.v]).collect();
        vertices.sort_unstable();
        vertices.dedup();
        Subgraph { kind, vertices, edges }
    };
    (build(EdgeKind::Agreement), build(EdgeKind::Conflict))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Stage, Streams};

    #[test]
    fn height_distribution_construction() {
        let q = HeightDistribution::canonical(0.82, 4).unwrap();
        assert!((q.get(3) - 0.06).abs() < 1e-12);
        assert!((q.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(HeightDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(HeightDistribution::new(vec![1.2, -0.2]).is_err());
        let one = HeightDistribution::canonical(1.0, 5).unwrap();
        let mut rng = Streams::new(1).stream(Stage::Auxiliary, 0);
        assert!((0..1000).all(|_| one.sample(&mut rng) == 1));
    }

    #[test]
    fn height_frequencies_pass_chi_square() {
        let q = HeightDistribution::canonical(0.82, 4).unwrap();
        let mut rng = Streams::new(2).stream(Stage::Auxiliary, 0);
        let n = 100_000;
        let mut counts = [0f64; 4];
        for _ in 0..n {
            counts[q.sample(&mut rng) - 1] += 1.0;
        }
        let chi2: f64 = (1..=4)
            .map(|s| {
                let e = n as f64 * q.get(s);
                (counts[s - 1] - e).powi(2) / e
            })
            .sum();
        // 3 degrees of freedom, 0.999 quantile.
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn classification_cases() {
        let colors = [0, 0, 1, 2];
        let wild = [false, false, false, true];
        assert_eq!(classify_pair(1, 1, &colors, &wild), PairOutcome::Loop);
        assert_eq!(classify_pair(0, 1, &colors, &wild), PairOutcome::Agreement);
        assert_eq!(classify_pair(0, 2, &colors, &wild), PairOutcome::Inadmissible);
        assert_eq!(classify_pair(2, 3, &colors, &wild), PairOutcome::Conflict);
        assert_eq!(classify_pair(3, 3, &colors, &wild), PairOutcome::Loop);
    }

    #[test]
    fn collapse_accumulates_multiplicity() {
        let colors = [0, 0, 1];
        let keys = vec![edge_key(1, 0), edge_key(0, 2), edge_key(0, 1), edge_key(0, 1)];
        let edges = collapse_keys(keys, &colors);
        assert_eq!(edges.len(), 2);
        assert_eq!((edges[0].u, edges[0].v, edges[0].weight), (0, 1, 3));
        assert_eq!(edges[0].kind, EdgeKind::Agreement);
        assert_eq!(edges[1].kind, EdgeKind::Conflict);
    }

    #[test]
    fn split_partitions_edges() {
        let g = LabelledMultigraph::new(
            vec![0, 0, 1, 1],
            vec![false, true, false, false],
            vec![
                Edge {
                    u: 0,
                    v: 1,
                    weight: 2,
                    kind: EdgeKind::Agreement,
                },
                Edge {
                    u: 2,
                    v: 1,
                    weight: 1,
                    kind: EdgeKind::Conflict,
                },
                Edge {
                    u: 2,
                    v: 3,
                    weight: 1,
                    kind: EdgeKind::Agreement,
                },
            ],
        )
        .unwrap();
        let (a, c) = g.split();
        assert_eq!(a.edges.len() + c.edges.len(), g.edges.len());
        assert_eq!(a.vertices, vec![0, 1, 2, 3]);
        assert_eq!(c.vertices, vec![1, 2]);
        assert!(a.vertices.contains(&1) && c.vertices.contains(&1));

        let only_a = LabelledMultigraph::new(
            vec![0, 0],
            vec![false, false],
            vec![Edge {
                u: 1,
                v: 0,
                weight: 1,
                kind: EdgeKind::Agreement,
            }],
        )
        .unwrap();
        let (_, c) = only_a.split();
        assert!(c.edges.is_empty() && c.vertices.is_empty());
    }

    #[test]
    fn multigraph_validation() {
        let e = |u, v| Edge {
            u,
            v,
            weight: 1,
            kind: EdgeKind::Agreement,
        };
        assert!(LabelledMultigraph::new(vec![0; 3], vec![false; 3], vec![e(1, 1)]).is_err());
        assert!(LabelledMultigraph::new(vec![0; 3], vec![false; 3], vec![e(1, 5)]).is_err());
        assert!(LabelledMultigraph::new(vec![0; 3], vec![false; 3], vec![e(0, 1), e(1, 0)]).is_err());
    }
}
