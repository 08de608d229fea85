//! Measurements on labelled multigraphs.
//!
//! Every statistic is computed from the edge list and vertex attributes
//! alone. Multi-edges count once (distinct-neighbour adjacency). The vertex
//! set `V` is every vertex with at least one edge; `V_a` is the vertex set
//! of the agreement subgraph.

use rand::Rng;
use serde::Serialize;

use crate::edge_gen::{EdgeKind, GenerationTallies, LabelledMultigraph};
use crate::error::{HagError, Result};
use crate::fitting::constrained_mle_degrees;
use crate::latent_tree::run_indexed;
use crate::numeric::csum;
use crate::rng::{Stage, Streams};

/// Vertices per ALCC work unit.
const ALCC_CHUNK: usize = 4096;

/// Simple undirected graph in compressed sparse row form over `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    start: Vec<usize>,
    nbrs: Vec<u32>,
}

impl Adjacency {
    /// Builds sorted, de-duplicated neighbour lists from `(u, v)` pairs.
    pub fn from_pairs(n: usize, pairs: impl Iterator<Item = (u32, u32)> + Clone) -> Self {
        let mut deg = vec![0usize; n + 1];
        for (u, v) in pairs.clone() {
            deg[u as usize] += 1;
            deg[v as usize] += 1;
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut acc = 0;
        for d in &deg[..n] {
            start.push(acc);
            acc += d;
        }
        start.push(acc);
        let mut fill = start.clone();
        let mut nbrs = vec![0u32; acc];
        for (u, v) in pairs {
            nbrs[fill[u as usize]] = v;
            fill[u as usize] += 1;
            nbrs[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        // Sort and dedup in place, then compact.
        let mut out_start = Vec::with_capacity(n + 1);
        let mut w = 0;
        for x in 0..n {
            let (lo, hi) = (start[x], start[x + 1]);
            nbrs[lo..hi].sort_unstable();
            out_start.push(w);
            let mut last = None;
            for i in lo..hi {
                let y = nbrs[i];
                if last != Some(y) {
                    nbrs[w] = y;
                    w += 1;
                    last = Some(y);
                }
            }
        }
        out_start.push(w);
        nbrs.truncate(w);
        Self { start: out_start, nbrs }
    }

    /// Adjacency of the edges of `kind` in `g`.
    pub fn of_kind(g: &LabelledMultigraph, kind: EdgeKind) -> Self {
        let edges = &g.edges;
        Self::from_pairs(
            g.num_vertices(),
            edges.iter().filter(move |e| e.kind == kind).map(|e| (e.u, e.v)),
        )
    }

    /// Adjacency of all edges of `g`.
    pub fn of_all(g: &LabelledMultigraph) -> Self {
        Self::from_pairs(g.num_vertices(), g.edges.iter().map(|e| (e.u, e.v)))
    }

    pub fn num_vertices(&self) -> usize {
        self.start.len() - 1
    }

    #[inline]
    pub fn neighbors(&self, x: usize) -> &[u32] {
        &self.nbrs[self.start[x]..self.start[x + 1]]
    }

    #[inline]
    pub fn degree(&self, x: usize) -> usize {
        self.start[x + 1] - self.start[x]
    }

    pub fn is_adjacent(&self, x: usize, y: usize) -> bool {
        self.neighbors(x).binary_search(&(y as u32)).is_ok()
    }
}

/// Local clustering coefficient of every vertex in `0..n` (0 below degree 2).
pub fn local_clustering(adj: &Adjacency, threads: usize) -> Vec<f64> {
    let n = adj.num_vertices();
    let chunks = n.div_ceil(ALCC_CHUNK);
    let run = |c: u32| -> Vec<f64> {
        let lo = c as usize * ALCC_CHUNK;
        let hi = (lo + ALCC_CHUNK).min(n);
        let mut mark = vec![false; n];
        let mut out = Vec::with_capacity(hi - lo);
        for x in lo..hi {
            let nx = adj.neighbors(x);
            let k = nx.len();
            if k < 2 {
                out.push(0.0);
                continue;
            }
            for &y in nx {
                mark[y as usize] = true;
            }
            let mut links = 0u64;
            for &y in nx {
                links += adj.neighbors(y as usize).iter().filter(|&&z| mark[z as usize]).count() as u64;
            }
            for &y in nx {
                mark[y as usize] = false;
            }
            // Each linked neighbour pair was seen from both ends.
            out.push(links as f64 / (k * (k - 1)) as f64);
        }
        out
    };
    run_indexed(threads, chunks as u32, run).into_iter().flatten().collect()
}

/// Exact ALCC: mean local clustering over `vertices`.
pub fn alcc_exact(adj: &Adjacency, vertices: &[u32], threads: usize) -> f64 {
    if vertices.is_empty() {
        return 0.0;
    }
    let local = local_clustering(adj, threads);
    csum(vertices.iter().map(|&v| local[v as usize])) / vertices.len() as f64
}

/// Monte-Carlo ALCC: average of `samples` draws of the clustering indicator
/// (uniform vertex, then two distinct uniform neighbours).
pub fn alcc_sampled<R: Rng + ?Sized>(adj: &Adjacency, vertices: &[u32], samples: usize, rng: &mut R) -> f64 {
    if vertices.is_empty() || samples == 0 {
        return 0.0;
    }
    let mut hits = 0u64;
    for _ in 0..samples {
        let x = vertices[rng.random_range(0..vertices.len())] as usize;
        let nx = adj.neighbors(x);
        if nx.len() < 2 {
            continue;
        }
        let i = rng.random_range(0..nx.len());
        let mut j = rng.random_range(0..nx.len() - 1);
        if j >= i {
            j += 1;
        }
        if adj.is_adjacent(nx[i] as usize, nx[j] as usize) {
            hits += 1;
        }
    }
    hits as f64 / samples as f64
}

/// Summary statistics of a labelled graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    /// Vertices with at least one edge.
    pub vertices: usize,
    pub agreement_vertices: usize,
    pub conflict_vertices: usize,
    pub distinct_edges: usize,
    pub agreement_edges: usize,
    pub conflict_edges: usize,
    pub multi_edges: u64,
    /// Mean distinct agreement neighbours over `V`.
    pub mean_agreement_degree: f64,
    /// Mean distinct conflict neighbours over `V`.
    pub mean_conflict_degree: f64,
    /// ALCC of the agreement graph over `V_a`.
    pub alcc: f64,
    /// `"exact"` or `"sampled:<draws>"`.
    pub alcc_mode: String,
    /// Distinct colours among `V`.
    pub labels: usize,
    /// Constrained-MLE degree variance.
    pub degree_variance: f64,
    /// Plug-in log-normal degree variance.
    pub degree_variance_simplistic: f64,
    /// Plain sample variance of degrees.
    pub degree_variance_sample: f64,
    pub mean_degree: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tallies: Option<GenerationTallies>,
}

/// Measures `g`. With `sample_alcc = Some(n)` the ALCC is estimated from `n`
/// draws of stream `(Diagnostics, 0)` instead of being computed exactly.
pub fn measure_graph_stats(
    g: &LabelledMultigraph,
    sample_alcc: Option<usize>,
    streams: &Streams,
    threads: usize,
) -> Result<GraphStats> {
    if g.edges.is_empty() {
        return Err(HagError::invalid("graph has no edges"));
    }
    let all = Adjacency::of_all(g);
    let agree = Adjacency::of_kind(g, EdgeKind::Agreement);
    let conflict = Adjacency::of_kind(g, EdgeKind::Conflict);
    let n = g.num_vertices();
    let v: Vec<u32> = (0..n as u32).filter(|&x| all.degree(x as usize) > 0).collect();
    let v_a: Vec<u32> = (0..n as u32).filter(|&x| agree.degree(x as usize) > 0).collect();
    let v_c = (0..n).filter(|&x| conflict.degree(x) > 0).count();
    let nv = v.len() as f64;

    let (alcc, alcc_mode) = match sample_alcc {
        Some(draws) => {
            let mut rng = streams.stream(Stage::Diagnostics, 0);
            (alcc_sampled(&agree, &v_a, draws, &mut rng), format!("sampled:{draws}"))
        }
        None => (alcc_exact(&agree, &v_a, threads), "exact".to_string()),
    };

    let degrees: Vec<f64> = v.iter().map(|&x| all.degree(x as usize) as f64).collect();
    let mean_degree = csum(degrees.iter().copied()) / nv;
    let degree_variance_sample = csum(degrees.iter().map(|d| (d - mean_degree).powi(2))) / nv;
    let mle = constrained_mle_degrees(&degrees)?;

    let mut labels: Vec<u32> = v.iter().map(|&x| g.colors[x as usize]).collect();
    labels.sort_unstable();
    labels.dedup();

    let agreement_edges = g.edges.iter().filter(|e| e.kind == EdgeKind::Agreement).count();
    Ok(GraphStats {
        vertices: v.len(),
        agreement_vertices: v_a.len(),
        conflict_vertices: v_c,
        distinct_edges: g.edges.len(),
        agreement_edges,
        conflict_edges: g.edges.len() - agreement_edges,
        multi_edges: g.edges.iter().map(|e| e.weight as u64).sum(),
        mean_agreement_degree: csum(v.iter().map(|&x| agree.degree(x as usize) as f64)) / nv,
        mean_conflict_degree: csum(v.iter().map(|&x| conflict.degree(x as usize) as f64)) / nv,
        alcc,
        alcc_mode,
        labels: labels.len(),
        degree_variance: mle.eta2,
        degree_variance_simplistic: mle.eta2_simplistic,
        degree_variance_sample,
        mean_degree,
        tallies: None,
    })
}

/// Vertex counts per colour over the non-isolated vertices, largest first.
pub fn label_frequencies(g: &LabelledMultigraph) -> Vec<u64> {
    let all = Adjacency::of_all(g);
    let mut colors: Vec<u32> = (0..g.num_vertices())
        .filter(|&x| all.degree(x) > 0)
        .map(|x| g.colors[x])
        .collect();
    colors.sort_unstable();
    let mut counts = Vec::new();
    let mut i = 0;
    while i < colors.len() {
        let j = i + colors[i..].partition_point(|&c| c == colors[i]);
        counts.push((j - i) as u64);
        i = j;
    }
    counts.sort_unstable_by(|a, b| b.cmp(a));
    counts
}

/// Separation of log label frequencies into bands.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandReport {
    pub bands: usize,
    /// Median log frequency per band, highest band first.
    pub medians: Vec<f64>,
    /// Max minus min log frequency per band.
    pub spreads: Vec<f64>,
    /// Every gap between adjacent band medians exceeds both bands' spreads.
    pub separated: bool,
}

/// Splits the descending frequencies at the `bands - 1` widest log gaps.
pub fn label_band_report(freqs: &[u64], bands: usize) -> Option<BandReport> {
    if bands < 2 || freqs.len() < bands {
        return None;
    }
    let logs: Vec<f64> = freqs.iter().map(|&f| (f as f64).ln()).collect();
    let mut gaps: Vec<(f64, usize)> = logs.windows(2).enumerate().map(|(i, w)| (w[0] - w[1], i + 1)).collect();
    gaps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut cuts: Vec<usize> = gaps[..bands - 1].iter().map(|g| g.1).collect();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(logs.len());
    let mut medians = Vec::new();
    let mut spreads = Vec::new();
    for w in bounds.windows(2) {
        let band = &logs[w[0]..w[1]];
        medians.push(band[band.len() / 2]);
        spreads.push(band[0] - band[band.len() - 1]);
    }
    let separated = (0..bands - 1).all(|b| medians[b] - medians[b + 1] > spreads[b].max(spreads[b + 1]));
    Some(BandReport {
        bands,
        medians,
        spreads,
        separated,
    })
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let p = self.parent[x] as usize;
            self.parent[x] = self.parent[p];
            x = self.parent[x] as usize;
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra as u32;
        self.size[ra] += self.size[rb];
    }
}

/// Component sizes of the agreement graph over `V_a`, largest first.
pub fn agreement_component_sizes(g: &LabelledMultigraph) -> Vec<u64> {
    let n = g.num_vertices();
    let mut uf = UnionFind::new(n);
    let mut touched = vec![false; n];
    for e in g.edges.iter().filter(|e| e.kind == EdgeKind::Agreement) {
        uf.union(e.u as usize, e.v as usize);
        touched[e.u as usize] = true;
        touched[e.v as usize] = true;
    }
    let mut count = vec![0u64; n];
    for x in 0..n {
        if touched[x] {
            let r = uf.find(x);
            count[r] += 1;
        }
    }
    let mut sizes: Vec<u64> = count.into_iter().filter(|&c| c > 0).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

/// `delta = 1 / ((1 - p)^(-1/m) - 1)`: the stick-breaking parameter whose
/// first `m` fragments have expected total mass `p`.
pub fn dirichlet_delta(p: f64, m: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || m == 0 {
        return Err(HagError::invalid("need 0 < p < 1 and m >= 1"));
    }
    Ok(1.0 / ((-(1.0 - p).ln() / m as f64).exp_m1()))
}

/// Top-`m` component mass and fitted stick-breaking parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentFit {
    pub m: usize,
    pub components: usize,
    pub p: f64,
    pub delta: f64,
}

/// Fits `delta` to the share `p` of `V_a` in the `m` largest components.
pub fn component_size_fit(sizes: &[u64], m: usize) -> Result<ComponentFit> {
    if m == 0 || m >= sizes.len() {
        return Err(HagError::invalid(format!(
            "need 1 <= m < component count ({}), got m = {m}",
            sizes.len()
        )));
    }
    let total: u64 = sizes.iter().sum();
    let mut sorted = sizes.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let p = sorted[..m].iter().sum::<u64>() as f64 / total as f64;
    Ok(ComponentFit {
        m,
        components: sizes.len(),
        p,
        delta: dirichlet_delta(p, m)?,
    })
}

/// First `m` stick-breaking fragments `Y_k prod_{i<k}(1 - Y_i)` with
/// `Y_i ~ Beta(1, delta)` drawn as `1 - U^(1/delta)`, sorted descending.
pub fn stick_breaking_sample<R: Rng + ?Sized>(delta: f64, m: usize, rng: &mut R) -> Result<Vec<f64>> {
    if !(delta > 0.0) || m == 0 {
        return Err(HagError::invalid("need delta > 0 and m >= 1"));
    }
    let mut rest = 1.0;
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let u: f64 = rng.random();
        let y = 1.0 - u.powf(1.0 / delta);
        out.push(y * rest);
        rest *= 1.0 - y;
    }
    out.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge_gen::Edge;

    fn graph(n: usize, colors: Vec<u32>, pairs: &[(u32, u32)]) -> LabelledMultigraph {
        let edges = pairs
            .iter()
            .map(|&(u, v)| Edge {
                u,
                v,
                weight: 1,
                kind: if colors[u as usize] == colors[v as usize] {
                    EdgeKind::Agreement
                } else {
                    EdgeKind::Conflict
                },
            })
            .collect();
        LabelledMultigraph::new(colors, vec![true; n], edges).unwrap()
    }

    #[test]
    fn triangle_and_path() {
        let s = Streams::new(0);
        let t = graph(3, vec![0; 3], &[(0, 1), (1, 2), (0, 2)]);
        let st = measure_graph_stats(&t, None, &s, 1).unwrap();
        assert_eq!((st.alcc, st.mean_agreement_degree, st.labels), (1.0, 2.0, 1));
        let p = graph(3, vec![0; 3], &[(0, 1), (1, 2)]);
        assert_eq!(measure_graph_stats(&p, None, &s, 1).unwrap().alcc, 0.0);
        let empty = graph(3, vec![0; 3], &[]);
        assert!(measure_graph_stats(&empty, None, &s, 1).is_err());
    }

    #[test]
    fn clustering_of_a_kite() {
        // 0-1-2 triangle with a pendant 3 on 2: C = (1, 1, 1/3, 0)
        let adj = Adjacency::from_pairs(4, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 2)].into_iter());
        let c = local_clustering(&adj, 1);
        assert_eq!(c, vec![1.0, 1.0, 1.0 / 3.0, 0.0]);
        assert_eq!(adj.degree(2), 3);
        assert_eq!(local_clustering(&adj, 3), c);
    }

    #[test]
    fn sampled_alcc_converges() {
        let mut rng = Streams::new(5).stream(Stage::Auxiliary, 0);
        let n = 10_000u32;
        let mut pairs = Vec::new();
        for x in 0..n {
            for _ in 0..3 {
                let y = rng.random_range(0..n);
                let z = (x / 8) * 8 + rng.random_range(0..8);
                if y != x {
                    pairs.push((x.min(y), x.max(y)));
                }
                if z != x {
                    pairs.push((x.min(z), x.max(z)));
                }
            }
        }
        let adj = Adjacency::from_pairs(n as usize, pairs.iter().copied());
        let v: Vec<u32> = (0..n).filter(|&x| adj.degree(x as usize) > 0).collect();
        let exact = alcc_exact(&adj, &v, 2);
        let sampled = alcc_sampled(&adj, &v, 100_000, &mut rng);
        assert!((exact - sampled).abs() < 0.01, "{exact} vs {sampled}");
    }

    #[test]
    fn label_frequency_counts() {
        let g = graph(5, vec![2, 2, 2, 7, 9], &[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(label_frequencies(&g), vec![3, 1]);
        let one = graph(3, vec![4; 3], &[(0, 1), (1, 2)]);
        assert_eq!(label_frequencies(&one), vec![3]);
    }

    #[test]
    fn band_report_finds_gaps() {
        let f = [1000, 990, 980, 100, 95, 90, 10, 9];
        let r = label_band_report(&f, 3).unwrap();
        assert!(r.separated);
        let flat = [10, 9, 8, 7, 6, 5];
        assert!(!label_band_report(&flat, 3).unwrap().separated);
    }

    #[test]
    fn components_are_order_independent() {
        let pairs = [(0, 1), (2, 3), (3, 4), (5, 6), (1, 7)];
        let g = graph(9, vec![0; 9], &pairs);
        assert_eq!(agreement_component_sizes(&g), vec![3, 3, 2]);
        let mut rev = pairs;
        rev.reverse();
        let mut uf = UnionFind::new(9);
        for (a, b) in rev {
            uf.union(b as usize, a as usize);
        }
        assert_eq!(uf.find(0), uf.find(7));
        assert_ne!(uf.find(0), uf.find(2));
    }

    #[test]
    fn dirichlet_hand_values() {
        assert!((dirichlet_delta(0.5, 1).unwrap() - 1.0).abs() < 1e-12);
        let d = dirichlet_delta(0.75, 2).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        assert!((1.0 - (d / (1.0 + d)).powi(2) - 0.75).abs() < 1e-12);
        let fit = component_size_fit(&[5, 3, 2], 1).unwrap();
        assert!((fit.p - 0.5).abs() < 1e-12 && (fit.delta - 1.0).abs() < 1e-12);
        assert!(component_size_fit(&[5, 3], 2).is_err());
    }

    #[test]
    fn stick_breaking_properties() {
        let mut rng = Streams::new(9).stream(Stage::Auxiliary, 0);
        let x = stick_breaking_sample(1e-6, 4, &mut rng).unwrap();
        assert!(x[0] > 0.999);
        for _ in 0..100 {
            let x = stick_breaking_sample(2.0, 6, &mut rng).unwrap();
            assert!(x.iter().sum::<f64>() <= 1.0 + 1e-12);
            assert!(x.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
