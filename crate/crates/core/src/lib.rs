//! Denoising engine for weak supervision.
//!
//! Noisy labeling sources (knowledge-base lookups, heuristic labeling
//! functions, silver evidence selections) are written down as weighted
//! formula templates over latent instance labels. Grounding the
//! templates yields a factor graph; loopy belief propagation infers
//! soft labels; a variational EM loop alternately refines the template
//! weights and trains a pluggable discriminative prediction module on
//! the inferred labels.

pub mod cli;
pub mod data;
pub mod em;
pub mod error;
pub mod evidence;
pub mod graph;
pub mod inference;
pub mod learning;
pub mod metrics;
pub mod prediction;
pub mod synth;
pub mod templates;

pub use error::{Error, Result};
