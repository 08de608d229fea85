//! Monte Carlo checks of closed-form moments against independent simulation.

#![allow(clippy::needless_range_loop)]

use hag_core::analytics::{branching_moments, poisson_offspring_variance};
use hag_core::edge_gen::{generate_half_edges, generate_walk_mode, match_half_edges, HeightDistribution};
use hag_core::latent_tree::LatentTree;
use hag_core::marks::NodeMarks;
use hag_core::rng::Streams;

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

/// Fixed tree: root with 3 children having 2, 4 and 3 children.
fn small_tree() -> LatentTree {
    LatentTree::from_offspring(&[vec![3], vec![2, 4, 3]]).unwrap()
}

#[test]
fn generation_sizes_match_branching_moments() {
    let (mu, depth) = (6.0, 3);
    let m = branching_moments(mu, poisson_offspring_variance(mu), depth).unwrap();
    let mut sizes = vec![Vec::new(); depth + 1];
    for r in 0..2000u64 {
        let tree = LatentTree::sample(mu, depth, &Streams::new(r), 1).unwrap();
        for (t, s) in sizes.iter_mut().enumerate() {
            s.push(tree.level_size(t) as f64);
        }
    }
    for t in 1..=depth {
        let (mean, var) = mean_var(&sizes[t]);
        let se = (var / 2000.0).sqrt();
        assert!(
            (mean - m.mu_pow[t]).abs() <= 4.0 * se,
            "t={t}: {mean} vs {}",
            m.mu_pow[t]
        );
        assert!(
            (var / m.zeta_sq[t] - 1.0).abs() < 0.15,
            "t={t}: var {var} vs {}",
            m.zeta_sq[t]
        );
    }
    // One generation: E[1 / (1 + Poisson(mu - 1))] = (1 - e^{-(mu-1)}) / (mu - 1).
    let inv: Vec<f64> = sizes[1].iter().map(|s| 1.0 / s).collect();
    let (mean_inv, var_inv) = mean_var(&inv);
    let exact = (1.0 - (-(mu - 1.0)).exp()) / (mu - 1.0);
    assert!((mean_inv - exact).abs() <= 4.0 * (var_inv / 2000.0).sqrt());
    assert!(
        (m.delta[1] / exact - 1.0).abs() < 0.05,
        "delta_1 {} vs {exact}",
        m.delta[1]
    );
}

#[test]
fn half_edge_counts_are_poisson_in_total_mark() {
    let tree = small_tree();
    let n = tree.num_leaves();
    let marks: Vec<f64> = (0..n).map(|x| 0.5 + x as f64).collect();
    let f_root: f64 = marks.iter().sum();
    let q = HeightDistribution::new(vec![0.5, 0.5]).unwrap();
    let runs = 4000;
    let mut total = Vec::with_capacity(runs);
    let mut at_root = Vec::with_capacity(runs);
    for r in 0..runs as u64 {
        let half = generate_half_edges(&tree, &marks, &q, &Streams::new(r), 1).unwrap();
        total.push(half.total() as f64);
        at_root.push(half.len_at(0) as f64);
    }
    let (mt, vt) = mean_var(&total);
    let se = (f_root / runs as f64).sqrt();
    assert!((mt - f_root).abs() <= 4.0 * se, "{mt} vs {f_root}");
    assert!((vt / f_root - 1.0).abs() < 0.1);
    let lam = q.get(2) * f_root;
    let (mr, vr) = mean_var(&at_root);
    assert!((mr - lam).abs() <= 4.0 * (lam / runs as f64).sqrt(), "{mr} vs {lam}");
    assert!((vr / lam - 1.0).abs() < 0.1);
}

#[test]
fn walk_attempts_are_poisson_half_root_mark() {
    let tree = small_tree();
    let n = tree.num_leaves();
    let leaf_marks: Vec<f64> = (0..n).map(|x| 1.0 + (x % 3) as f64).collect();
    let marks = NodeMarks::aggregate(&tree, &leaf_marks).unwrap();
    let f_root: f64 = leaf_marks.iter().sum();
    let q = HeightDistribution::uniform(2).unwrap();
    let runs = 3000;
    let attempts: Vec<f64> = (0..runs as u64)
        .map(|r| {
            let g = generate_walk_mode(&tree, &vec![0; n], &marks, &vec![false; n], &q, &Streams::new(r), 1).unwrap();
            g.tallies.attempts as f64
        })
        .collect();
    let (m, v) = mean_var(&attempts);
    let lam = f_root / 2.0;
    assert!((m - lam).abs() <= 4.0 * (lam / runs as f64).sqrt(), "{m} vs {lam}");
    assert!((v / lam - 1.0).abs() < 0.1);
}

#[test]
fn matching_leaves_about_half_a_half_edge_per_internal_node() {
    // With many half-edges per link node the parity is a fair coin, so the
    // unmatched count approaches half the number of internal nodes.
    let (mu, depth) = (3.0, 3);
    let q = HeightDistribution::uniform(depth).unwrap();
    let runs = 400;
    let mut unmatched = Vec::with_capacity(runs);
    for r in 0..runs as u64 {
        let s = Streams::new(r);
        let tree = LatentTree::sample(mu, depth, &s, 1).unwrap();
        let n = tree.num_leaves();
        let half = generate_half_edges(&tree, &vec![40.0; n], &q, &s, 1).unwrap();
        let g = match_half_edges(&tree, &half, &vec![0; n], &vec![false; n], &s, 1).unwrap();
        unmatched.push(g.tallies.unmatched as f64);
    }
    let (m, v) = mean_var(&unmatched);
    let pred = (mu.powi(depth as i32) - 1.0) / (2.0 * (mu - 1.0));
    assert!((m - pred).abs() <= 4.0 * (v / runs as f64).sqrt(), "{m} vs {pred}");
}

#[test]
fn walk_and_match_agree_on_edge_volume() {
    // Same tree and marks: matching loses only the odd leftovers.
    let (mu, depth) = (3.0, 3);
    let q = HeightDistribution::uniform(depth).unwrap();
    let runs = 400;
    let (mut walk, mut matched) = (Vec::new(), Vec::new());
    for r in 0..runs as u64 {
        let s = Streams::new(r);
        let tree = LatentTree::sample(mu, depth, &s, 1).unwrap();
        let n = tree.num_leaves();
        let leaf_marks = vec![20.0; n];
        let marks = NodeMarks::aggregate(&tree, &leaf_marks).unwrap();
        let colors = vec![0; n];
        let wild = vec![false; n];
        let w = generate_walk_mode(&tree, &colors, &marks, &wild, &q, &s, 1).unwrap();
        let half = generate_half_edges(&tree, &leaf_marks, &q, &s, 1).unwrap();
        let m = match_half_edges(&tree, &half, &colors, &wild, &s, 1).unwrap();
        walk.push(w.tallies.attempts as f64);
        matched.push(m.tallies.attempts as f64 + m.tallies.unmatched as f64 / 2.0);
    }
    let (mw, vw) = mean_var(&walk);
    let (mm, vm) = mean_var(&matched);
    let se = ((vw + vm) / runs as f64).sqrt();
    assert!((mw - mm).abs() <= 4.0 * se, "walk {mw} vs match {mm}");
}
