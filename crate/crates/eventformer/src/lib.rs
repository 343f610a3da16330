//! EventFormer: node-graph hierarchical attention for event prediction over
//! event-graph chains.
//!
//! An event chain is an ordered sequence of event graphs, each holding one
//! verb trigger node and role-labeled argument nodes. The model embeds every
//! node, adds a sinusoidal coreference encoding keyed by entity identity,
//! replaces the prediction target with a learned mask template, and runs an
//! encoder stack whose attention operates at both the node level and the
//! graph level. The prediction head emits verb logits over the verb
//! vocabulary plus per-slot noun embeddings matched against historical
//! argument nodes by cosine similarity.
//!
//! Everything is backed by a small 64-bit reverse-mode tensor engine
//! ([`numeric`]) so every gradient in the stack can be checked against
//! central finite differences.

pub mod encoding;
pub mod error;
pub mod evaluation;
pub mod event_model;
pub mod gnn;
pub mod harness;
pub mod attention;
pub mod cli;
pub mod config;
pub mod model;
pub mod numeric;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
