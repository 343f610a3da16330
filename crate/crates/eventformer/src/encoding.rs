//! Node feature construction: pluggable embeddings, text-visual
//! concatenation, and sinusoidal coreference encoding added residually.
//!
//! The embedding provider stands in for a frozen pretrained vision-text
//! encoder. The stub maps node text through a seeded hash to a fixed Gaussian
//! vector, so runs are deterministic without external weights; visual vectors
//! come from the corpus `feat` fields.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_model::{EventChain, NodeKind, COREF_SENTINEL};
use crate::numeric::{gauss, Binder, Linear, Tensor};

/// Where node vectors come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    /// Seeded hash-to-Gaussian text vectors; missing `feat` becomes zeros.
    Stub,
    /// Text vectors as in stub, but every node must carry a `feat` vector.
    File,
}

/// Frozen embedding source with fixed text and visual dimensions.
#[derive(Debug, Clone)]
pub struct EmbeddingProvider {
    pub text_dim: usize,
    pub visual_dim: usize,
    pub deterministic: bool,
    pub mode: ProviderMode,
    seed: u64,
}

impl EmbeddingProvider {
    pub fn new(mode: ProviderMode, text_dim: usize, visual_dim: usize, seed: u64) -> Self {
        EmbeddingProvider {
            text_dim,
            visual_dim,
            deterministic: true,
            mode,
            seed,
        }
    }

    /// Same text always maps to the same vector.
    pub fn text_vector(&self, text: &str) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(fnv1a(self.seed, text.as_bytes()));
        (0..self.text_dim).map(|_| gauss(&mut rng)).collect()
    }

    fn visual_vector(&self, text: &str, raw: Option<&Vec<f64>>) -> Result<Vec<f64>> {
        match raw {
            Some(v) => {
                if v.len() != self.visual_dim {
                    return Err(Error::Config(format!(
                        "visual feature length {} does not match provider visual_dim {}",
                        v.len(),
                        self.visual_dim
                    )));
                }
                Ok(v.clone())
            }
            None => match self.mode {
                ProviderMode::Stub => Ok(vec![0.0; self.visual_dim]),
                ProviderMode::File => Err(Error::Data(format!(
                    "file provider requires a feat vector for node \"{text}\""
                ))),
            },
        }
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64 ^ seed.wrapping_mul(0x9e3779b97f4a7c15);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Row layout of a flattened chain.
#[derive(Debug, Clone)]
pub struct ChainLayout {
    /// Row -> graph index.
    pub graph_of: Vec<usize>,
    /// Row -> coreference index ([`COREF_SENTINEL`] for triggers).
    pub coref_of: Vec<usize>,
    pub kinds: Vec<NodeKind>,
    /// Row -> lexeme id (verb id for triggers, noun id for arguments).
    pub lexemes: Vec<usize>,
    /// Row -> node text, for inspection dumps.
    pub labels: Vec<String>,
    /// Row -> original node_id (flattened chain order).
    pub node_order: Vec<usize>,
    /// Nodes per graph, in chain order.
    pub graph_sizes: Vec<usize>,
}

impl ChainLayout {
    pub fn num_rows(&self) -> usize {
        self.graph_of.len()
    }

    pub fn num_graphs(&self) -> usize {
        self.graph_sizes.len()
    }

    /// Row range `[start, end)` occupied by one graph.
    pub fn graph_rows(&self, graph: usize) -> (usize, usize) {
        let start: usize = self.graph_sizes[..graph].iter().sum();
        (start, start + self.graph_sizes[graph])
    }
}

/// Per-node embedding matrix for one chain plus its layout.
#[derive(Debug, Clone)]
pub struct NodeFeatures {
    /// N_total x d, already projected to the model dimension.
    pub features: Tensor,
    pub layout: ChainLayout,
}

/// Embed every node: provider text vector concatenated with the visual
/// vector (text first), then a learned linear projection to the model dim.
pub fn embed_chain(
    chain: &EventChain,
    provider: &EmbeddingProvider,
    projection: &Linear,
    binder: &Binder,
) -> Result<NodeFeatures> {
    if projection.in_dim != provider.text_dim + provider.visual_dim {
        return Err(Error::Config(format!(
            "projection input dim {} does not match text_dim {} + visual_dim {}",
            projection.in_dim, provider.text_dim, provider.visual_dim
        )));
    }
    let n = chain.node_count();
    let width = provider.text_dim + provider.visual_dim;
    let mut raw = Vec::with_capacity(n * width);
    let mut layout = ChainLayout {
        graph_of: Vec::with_capacity(n),
        coref_of: Vec::with_capacity(n),
        kinds: Vec::with_capacity(n),
        lexemes: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        node_order: Vec::with_capacity(n),
        graph_sizes: Vec::with_capacity(chain.len()),
    };
    for (gi, g) in chain.graphs.iter().enumerate() {
        layout.graph_sizes.push(g.nodes.len());
        for node in &g.nodes {
            raw.extend(provider.text_vector(&node.text));
            raw.extend(provider.visual_vector(&node.text, node.raw_feature.as_ref())?);
            layout.graph_of.push(gi);
            layout.coref_of.push(node.coref_index);
            layout.kinds.push(node.kind);
            layout.lexemes.push(node.lexeme_id);
            layout.labels.push(node.text.clone());
            layout.node_order.push(node.node_id);
        }
    }
    let features = projection.forward(binder, &Tensor::constant(n, width, raw));
    Ok(NodeFeatures { features, layout })
}

/// Sinusoidal coreference code for one entity index:
/// even dims `s*sin(index / 10000^(2k/d))`, odd dims `s*cos(index / 10000^(2k/d))`.
pub fn coreference_encoding(index: usize, d: usize, s: f64) -> Result<Vec<f64>> {
    if d % 2 != 0 {
        return Err(Error::Config(format!(
            "coreference encoding requires an even dimension, got {d}"
        )));
    }
    let mut out = vec![0.0; d];
    for k in 0..d / 2 {
        let freq = (index as f64) / 10000f64.powf(2.0 * k as f64 / d as f64);
        out[2 * k] = s * freq.sin();
        out[2 * k + 1] = s * freq.cos();
    }
    Ok(out)
}

/// Residually add the coreference code to every argument row. Trigger rows
/// (coref sentinel) are untouched; `s = 0` returns the input bit-identically.
pub fn apply_coreference(features: &NodeFeatures, s: f64) -> Result<NodeFeatures> {
    if s == 0.0 {
        return Ok(features.clone());
    }
    let n = features.layout.num_rows();
    let d = features.features.cols();
    let mut ce = vec![0.0; n * d];
    for (row, &coref) in features.layout.coref_of.iter().enumerate() {
        if coref == COREF_SENTINEL {
            continue;
        }
        let code = coreference_encoding(coref, d, s)?;
        ce[row * d..(row + 1) * d].copy_from_slice(&code);
    }
    Ok(NodeFeatures {
        features: features.features.add(&Tensor::constant(n, d, ce)),
        layout: features.layout.clone(),
    })
}

/// Deterministic per-entity visual stub: a base vector per entity name plus a
/// per-chain perturbation, mimicking appearance changes across scenes.
pub fn entity_visual_stub(entity: &str, chain_id: &str, dim: usize, seed: u64, jitter: f64) -> Vec<f64> {
    let mut base_rng = ChaCha20Rng::seed_from_u64(fnv1a(seed ^ 0xa5a5_5a5a, entity.as_bytes()));
    let mut pert_rng = ChaCha20Rng::seed_from_u64(fnv1a(
        fnv1a(seed ^ 0x0ff0_f00f, chain_id.as_bytes()),
        entity.as_bytes(),
    ));
    (0..dim)
        .map(|_| gauss(&mut base_rng) + jitter * gauss(&mut pert_rng))
        .collect()
}
