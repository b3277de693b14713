//! Scene-graph co-attention networks for text visual question answering.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense tensors and a reverse-mode autodiff tape.
//! - [`scene_graph`]: bounding-box geometry, the 12 spatial relations and
//!   the object/OCR scene graph with its adjacency matrix.
//! - [`attention`]: biased multi-head attention, SA/GA blocks and the
//!   relation-masked SRA and PRA layers.
//! - [`model`]: the end-to-end encoder/decoder with a pointer head, loss and
//!   training step.
//! - [`data`]: synthetic scenes, hashed pseudo-features and vocabulary.
//! - [`metrics`]: exact-match accuracy and ANLS.
//! - [`config`]: run configuration and presets.
//! - [`run`]: whole training runs from a configuration.

pub mod attention;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod run;
pub mod scene_graph;
pub mod tensor;

pub use error::{Error, Result};
