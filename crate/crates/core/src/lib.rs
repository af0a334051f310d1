//! Two-stage zero-shot anomaly segmentation.
//!
//! The rough stage projects patch tokens from a (mock) image encoder, lets them interact with
//! an averaged text feature through strip and multi-scale attention paths, and predicts a
//! two-class map per encoder stage. The refinement stage binarizes that map, turns its connected
//! regions into point and box prompts, asks a promptable mask decoder for three masks per box and
//! fuses them back, weighted by confidence.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod encoders;
pub mod ensemble;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod imageio;
mod kernels;
pub mod loss;
pub mod metrics;
pub mod mmr;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod umci;

pub use error::{Error, Result};
pub use graph::{Graph, Var};
pub use params::{ParamId, ParamSet};
pub use tensor::Tensor;
