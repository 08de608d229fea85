use proptest::prelude::*;

use hag_core::diagnostics::{Adjacency, UnionFind};
use hag_core::edge_gen::{
    classify_pair, generate_half_edges, match_half_edges, Edge, EdgeKind, HeightDistribution, LabelledMultigraph,
    PairOutcome,
};
use hag_core::fitting::constrained_mle;
use hag_core::latent_tree::{color_switch_rates, expected_label_count, LatentTree};
use hag_core::rng::Streams;

fn golden_tau(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let y_bar = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - y_bar).powi(2)).sum::<f64>() / n;
    let phi = (y.iter().map(|v| v.exp()).sum::<f64>() / n).ln();
    let loglik = |tau: f64| -tau.ln() - (var + (y_bar - phi + tau / 2.0).powi(2)) / tau;
    let (mut a, mut b) = (1e-14, 4.0 * (var + (phi - y_bar).powi(2)).sqrt() + 4.0);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..400 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if loglik(c) > loglik(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pair_outcomes_follow_colour_and_wildness(
        x in 0usize..6, y in 0usize..6,
        colors in prop::collection::vec(0u32..3, 6),
        wild in prop::collection::vec(any::<bool>(), 6),
    ) {
        let out = classify_pair(x, y, &colors, &wild);
        prop_assert_eq!(out, classify_pair(y, x, &colors, &wild));
        let expected = if x == y {
            PairOutcome::Loop
        } else if colors[x] == colors[y] {
            PairOutcome::Agreement
        } else if wild[x] || wild[y] {
            PairOutcome::Conflict
        } else {
            PairOutcome::Inadmissible
        };
        prop_assert_eq!(out, expected);
    }

    #[test]
    fn matching_tallies_account_for_every_half_edge(seed in 0u64..1000, q1 in 0.05f64..0.95, p_wild in 0.0f64..1.0) {
        let s = Streams::new(seed);
        let tree = LatentTree::sample(3.0, 3, &s, 1).unwrap();
        let n = tree.num_leaves();
        let q = HeightDistribution::canonical(q1, 3).unwrap();
        let marks: Vec<f64> = (0..n).map(|i| 1.0 + (i % 5) as f64).collect();
        let colors: Vec<u32> = (0..n).map(|i| (i % 3) as u32).collect();
        let wild: Vec<bool> = (0..n).map(|i| ((i * 7919) % 100) as f64 / 100.0 < p_wild).collect();
        let half = generate_half_edges(&tree, &marks, &q, &s, 1).unwrap();
        let g = match_half_edges(&tree, &half, &colors, &wild, &s, 1).unwrap();
        let t = &g.tallies;
        prop_assert_eq!(t.half_edges, half.total() as u64);
        prop_assert_eq!(2 * t.attempts + t.unmatched, t.half_edges);
        prop_assert_eq!(t.attempts, t.agreement + t.conflict + t.loops + t.inadmissible);
        prop_assert_eq!(g.multi_edge_count(EdgeKind::Agreement), t.agreement);
        prop_assert_eq!(g.multi_edge_count(EdgeKind::Conflict), t.conflict);
        for e in &g.edges {
            prop_assert!(e.u < e.v);
            prop_assert_eq!(e.kind == EdgeKind::Agreement, colors[e.u as usize] == colors[e.v as usize]);
            if e.kind == EdgeKind::Conflict {
                prop_assert!(wild[e.u as usize] || wild[e.v as usize]);
            }
        }
    }

    #[test]
    fn graph_construction_ignores_record_order(
        pairs in prop::collection::btree_set((0u32..20, 0u32..20), 0..40),
        perm_seed in any::<u64>(),
    ) {
        let colors: Vec<u32> = (0..20).map(|i| i % 2).collect();
        let edges: Vec<Edge> = pairs
            .iter()
            .filter(|(a, b)| a < b)
            .map(|&(u, v)| Edge {
                u,
                v,
                weight: 1 + (u + v) % 3,
                kind: if colors[u as usize] == colors[v as usize] { EdgeKind::Agreement } else { EdgeKind::Conflict },
            })
            .collect();
        let mut shuffled: Vec<Edge> = edges
            .iter()
            .map(|e| Edge { u: e.v, v: e.u, ..*e })
            .collect();
        let len = shuffled.len();
        let mut state = perm_seed | 1;
        for i in (1..len).rev() {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            shuffled.swap(i, (state % (i as u64 + 1)) as usize);
        }
        let a = LabelledMultigraph::new(colors.clone(), vec![true; 20], edges).unwrap();
        let b = LabelledMultigraph::new(colors, vec![true; 20], shuffled).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn union_find_partition_ignores_union_order(
        pairs in prop::collection::vec((0usize..30, 0usize..30), 0..60),
    ) {
        let roots = |order: &[(usize, usize)]| {
            let mut uf = UnionFind::new(30);
            for &(a, b) in order {
                uf.union(a, b);
            }
            (0..30).map(|x| uf.find(x)).collect::<Vec<_>>()
        };
        let fwd = roots(&pairs);
        let rev: Vec<_> = pairs.iter().rev().map(|&(a, b)| (b, a)).collect();
        let bwd = roots(&rev);
        for x in 0..30 {
            for y in 0..30 {
                prop_assert_eq!(fwd[x] == fwd[y], bwd[x] == bwd[y]);
            }
        }
    }

    #[test]
    fn adjacency_is_symmetric_and_simple(pairs in prop::collection::vec((0u32..15, 0u32..15), 0..50)) {
        let pairs: Vec<(u32, u32)> = pairs.into_iter().filter(|(a, b)| a != b).collect();
        let adj = Adjacency::from_pairs(15, pairs.iter().copied());
        for &(a, b) in &pairs {
            prop_assert!(adj.is_adjacent(a as usize, b as usize));
            prop_assert!(adj.is_adjacent(b as usize, a as usize));
        }
        for x in 0..15 {
            let nb = adj.neighbors(x);
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(!nb.contains(&(x as u32)));
        }
    }

    #[test]
    fn constrained_tau_maximises_likelihood(
        y in prop::collection::vec(-2.0f64..4.0, 2..40),
    ) {
        let stats = constrained_mle(&y).unwrap();
        prop_assert!(stats.tau >= 0.0);
        prop_assert!((stats.tau - golden_tau(&y)).abs() <= 1e-6);
        prop_assert!((stats.eta2 - (2.0 * stats.phi).exp() * stats.tau.exp_m1()).abs() <= 1e-9 * stats.eta2.max(1.0));
    }

    #[test]
    fn height_distributions_sum_to_one(q1 in 0.0f64..1.0, depth in 1usize..9) {
        let q = HeightDistribution::canonical(q1, depth).unwrap();
        prop_assert_eq!(q.depth(), depth);
        prop_assert!((q.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(q.as_slice().iter().all(|&p| p >= 0.0));
        let u = HeightDistribution::uniform(depth).unwrap();
        prop_assert!((u.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn switch_rates_are_probabilities(mu in 1.5f64..40.0, depth in 1usize..7, theta in 1.01f64..20.0) {
        let rates = color_switch_rates(mu, depth, theta).unwrap();
        prop_assert_eq!(rates.get(depth), 0.0);
        for d in 1..=depth {
            prop_assert!((0.0..=1.0).contains(&rates.get(d)));
        }
        let k = expected_label_count(mu, depth, theta).unwrap();
        let k_more = expected_label_count(mu, depth, theta * 1.1).unwrap();
        prop_assert!(k >= 1.0 && k_more >= k * (1.0 - 1e-12));
    }
}
