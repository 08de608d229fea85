//! End-to-end generation: latent tree, colours, leaf attributes, edges.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::edge_gen::{
    generate_half_edges, generate_walk_mode, match_half_edges, HeightDistribution, LabelledMultigraph,
};
use crate::error::Result;
use crate::fitting::FittedParams;
use crate::latent_tree::{check_node_budget, color_switch_rates, ColorAssignment, LatentTree, DEFAULT_NODE_BUDGET};
use crate::marks::{LeafAttributes, LogNormal, MarkOptions, NodeMarks};
use crate::rng::Streams;

/// Edge construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Paired random walks.
    Walk,
    /// Half-edge matching at link nodes.
    Match,
}

/// Generator parameters in the fitted layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub mu: f64,
    pub depth: usize,
    pub theta: f64,
    pub q1: f64,
    pub mu_o: f64,
    pub sigma_o: f64,
    pub omega: f64,
    pub beta: f64,
}

impl From<&FittedParams> for GeneratorParams {
    fn from(p: &FittedParams) -> Self {
        Self {
            mu: p.mu,
            depth: p.depth,
            theta: p.theta,
            q1: p.q1,
            mu_o: p.mu_o,
            sigma_o: p.sigma_o,
            omega: p.omega,
            beta: p.beta,
        }
    }
}

/// Everything needed for one generation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateConfig {
    pub params: GeneratorParams,
    pub seed: u64,
    pub threads: usize,
    pub mode: Mode,
    pub ceil_marks: bool,
    pub node_budget: f64,
}

impl GenerateConfig {
    pub fn new(params: GeneratorParams, seed: u64) -> Self {
        Self {
            params,
            seed,
            threads: 1,
            mode: Mode::Match,
            ceil_marks: false,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub tree: f64,
    pub colors: f64,
    pub marks: f64,
    pub edges: f64,
}

/// Output of [`generate`].
#[derive(Debug, Clone)]
pub struct Generated {
    pub tree: LatentTree,
    pub colors: ColorAssignment,
    pub attributes: LeafAttributes,
    pub graph: LabelledMultigraph,
    pub timings: Timings,
}

/// Runs latent tree, colours, marks and edge generation.
pub fn generate(config: &GenerateConfig) -> Result<Generated> {
    let p = &config.params;
    check_node_budget(p.mu, p.depth, config.node_budget)?;
    let streams = Streams::new(config.seed);
    let threads = config.threads.max(1);
    let mut timings = Timings::default();

    let t0 = Instant::now();
    let tree = LatentTree::sample(p.mu, p.depth, &streams, threads)?;
    timings.tree = t0.elapsed().as_secs_f64();
    log::info!("latent tree: {} nodes, {} leaves", tree.num_nodes(), tree.num_leaves());

    let t0 = Instant::now();
    let rates = color_switch_rates(p.mu, p.depth, p.theta)?;
    let colors = ColorAssignment::assign(&tree, &rates, &streams, threads)?;
    timings.colors = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let opts = MarkOptions {
        law: LogNormal {
            mu: p.mu_o,
            sigma: p.sigma_o,
        },
        omega: p.omega,
        beta: p.beta,
        ceil: config.ceil_marks,
    };
    let attributes = LeafAttributes::sample(tree.num_leaves(), &opts, &streams, threads)?;
    timings.marks = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let q = HeightDistribution::canonical(p.q1, p.depth)?;
    let graph = match config.mode {
        Mode::Match => {
            let half = generate_half_edges(&tree, &attributes.marks, &q, &streams, threads)?;
            match_half_edges(&tree, &half, colors.leaf_colors(), &attributes.wild, &streams, threads)?
        }
        Mode::Walk => {
            let marks = NodeMarks::aggregate(&tree, &attributes.marks)?;
            generate_walk_mode(
                &tree,
                colors.leaf_colors(),
                &marks,
                &attributes.wild,
                &q,
                &streams,
                threads,
            )?
        }
    };
    timings.edges = t0.elapsed().as_secs_f64();
    log::info!("generated {} distinct edges", graph.edges.len());

    Ok(Generated {
        tree,
        colors,
        attributes,
        graph,
        timings,
    })
}
