//! Hidden ancestor graphs: sparse vertex-labelled multigraphs whose edges come
//! from random walks on a hidden Galton-Watson tree.
//!
//! The crate fits generator parameters to observed graph statistics
//! ([`fitting`]), evaluates the model's closed-form predictions
//! ([`analytics`]), generates graphs at scale ([`pipeline`], [`edge_gen`]) and
//! measures them ([`diagnostics`]).

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Loops over vertex and leaf ids read better with the id in hand.
#![allow(clippy::needless_range_loop)]

pub mod analytics;
pub mod cli;
pub mod diagnostics;
pub mod edge_gen;
pub mod error;
pub mod fitting;
pub mod io;
pub mod latent_tree;
pub mod marks;
pub mod numeric;
pub mod pipeline;
pub mod rng;

pub use error::{HagError, Result};
