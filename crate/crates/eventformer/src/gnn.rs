//! Graph networks that produce the attention QKV instead of linear layers.
//!
//! Four variants: `linear` (ignores edges; the ablation baseline), `gcn`
//! (symmetric-normalized adjacency with self-loops), `gat` (per-head
//! attention over neighborhoods), and `gin` ((1+eps)*self plus neighbor sum
//! through a 2-layer perceptron). Message passing never crosses graph
//! boundaries; edges are treated as bidirectional and every node has a
//! self-loop path, so isolated nodes are never an error.
//!
//! Each role carries a learned embedding added to neighbor features inside
//! messages (`use_role_embeddings` ablates this).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_model::{ArgRole, EventChain};
use crate::numeric::{Binder, Init, Linear, ParamId, ParamStore, Perceptron2, Tensor};

const NUM_ROLES: usize = 5;
const GAT_NEG_SLOPE: f64 = 0.2;
/// Additive mask for non-edges; exp() underflows to exactly zero.
const MASK_OFF: f64 = -1e30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnKind {
    Linear,
    Gcn,
    Gat,
    Gin,
}

impl GnnKind {
    pub const ALL: [GnnKind; 4] = [GnnKind::Linear, GnnKind::Gcn, GnnKind::Gat, GnnKind::Gin];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(GnnKind::Linear),
            "gcn" => Ok(GnnKind::Gcn),
            "gat" => Ok(GnnKind::Gat),
            "gin" => Ok(GnnKind::Gin),
            _ => Err(Error::Config(format!(
                "unknown gnn kind \"{s}\" (expected linear|gcn|gat|gin)"
            ))),
        }
    }
}

impl std::fmt::Display for GnnKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GnnKind::Linear => "linear",
            GnnKind::Gcn => "gcn",
            GnnKind::Gat => "gat",
            GnnKind::Gin => "gin",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GnnConfig {
    pub kind: GnnKind,
    pub layers: usize,
    /// Internal attention heads for the GAT variant.
    pub heads: usize,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Perceptron hidden width for the GIN variant; defaults to `out_dim`.
    pub hidden_dim: Option<usize>,
    pub use_role_embeddings: bool,
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("gnn.layers must be at least 1".into()));
        }
        if self.heads == 0 || self.out_dim % self.heads != 0 {
            return Err(Error::Config(format!(
                "gnn.out_dim {} must be divisible by gnn.heads {}",
                self.out_dim, self.heads
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Chain structure constants
// ---------------------------------------------------------------------------

/// One graph's topology with node indices local to the graph.
#[derive(Debug, Clone)]
pub struct GraphDesc {
    pub n_nodes: usize,
    /// (local src, local dst, role)
    pub edges: Vec<(usize, usize, ArgRole)>,
}

impl GraphDesc {
    /// Star template: node 0 is the trigger, the rest connect to it.
    pub fn star(n_args: usize, role: ArgRole) -> Self {
        GraphDesc {
            n_nodes: 1 + n_args,
            edges: (1..=n_args).map(|a| (0, a, role)).collect(),
        }
    }
}

/// Topology of an event chain from the wire format: each graph is a star of
/// trigger-argument edges, mapped to local indices.
pub fn chain_desc(chain: &EventChain) -> Vec<GraphDesc> {
    chain
        .graphs
        .iter()
        .map(|g| {
            let local: std::collections::HashMap<usize, usize> = g
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| (n.node_id, i))
                .collect();
            GraphDesc {
                n_nodes: g.nodes.len(),
                edges: g
                    .edges
                    .iter()
                    .map(|e| (local[&e.src], local[&e.dst], e.role))
                    .collect(),
            }
        })
        .collect()
}

/// Constant matrices describing a chain's block structure, shared by the GNN
/// variants and the hierarchical attention.
#[derive(Debug, Clone)]
pub struct ChainStructure {
    pub n: usize,
    pub t: usize,
    pub graph_of: Vec<usize>,
    pub graph_sizes: Vec<usize>,
    /// N x N bidirectional adjacency without self-loops.
    pub adj: Tensor,
    /// N x N symmetric-normalized adjacency with self-loops.
    pub gcn_norm: Tensor,
    /// N x N additive attention mask: 0 on edges and self, -1e30 elsewhere.
    pub gat_mask: Tensor,
    /// N x NUM_ROLES incident-edge counts per role.
    pub role_counts: Tensor,
    /// N x NUM_ROLES normalized-adjacency weight sums per role.
    pub gcn_role: Tensor,
    /// Per-role N x N edge masks.
    pub role_masks: Vec<Tensor>,
    /// N x T node-to-graph block indicator (column j marks graph j's nodes).
    pub group: Tensor,
}

impl ChainStructure {
    pub fn new(graphs: &[GraphDesc]) -> Self {
        let t = graphs.len();
        let sizes: Vec<usize> = graphs.iter().map(|g| g.n_nodes).collect();
        let n: usize = sizes.iter().sum();
        let mut graph_of = Vec::with_capacity(n);
        for (gi, &sz) in sizes.iter().enumerate() {
            graph_of.extend(std::iter::repeat(gi).take(sz));
        }
        let mut adj = vec![0.0; n * n];
        let mut role_counts = vec![0.0; n * NUM_ROLES];
        let mut role_masks = vec![vec![0.0; n * n]; NUM_ROLES];
        let mut offset = 0usize;
        for g in graphs {
            for &(a, b, role) in &g.edges {
                let (i, j) = (offset + a, offset + b);
                let r = role.index();
                adj[i * n + j] = 1.0;
                adj[j * n + i] = 1.0;
                role_counts[i * NUM_ROLES + r] += 1.0;
                role_counts[j * NUM_ROLES + r] += 1.0;
                role_masks[r][i * n + j] = 1.0;
                role_masks[r][j * n + i] = 1.0;
            }
            offset += g.n_nodes;
        }
        // A + I, symmetric normalized
        let mut deg = vec![0.0f64; n];
        for i in 0..n {
            deg[i] = 1.0 + adj[i * n..(i + 1) * n].iter().sum::<f64>();
        }
        let mut gcn_norm = vec![0.0; n * n];
        let mut gcn_role = vec![0.0; n * NUM_ROLES];
        for i in 0..n {
            for j in 0..n {
                let a = adj[i * n + j] + if i == j { 1.0 } else { 0.0 };
                if a > 0.0 {
                    gcn_norm[i * n + j] = a / (deg[i] * deg[j]).sqrt();
                }
            }
        }
        for (r, mask) in role_masks.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    if mask[i * n + j] > 0.0 {
                        gcn_role[i * NUM_ROLES + r] += 1.0 / (deg[i] * deg[j]).sqrt();
                    }
                }
            }
        }
        let mut gat_mask = vec![MASK_OFF; n * n];
        for i in 0..n {
            gat_mask[i * n + i] = 0.0;
            for j in 0..n {
                if adj[i * n + j] > 0.0 {
                    gat_mask[i * n + j] = 0.0;
                }
            }
        }
        let mut group = vec![0.0; n * t];
        for (row, &g) in graph_of.iter().enumerate() {
            group[row * t + g] = 1.0;
        }
        ChainStructure {
            n,
            t,
            graph_of,
            graph_sizes: sizes,
            adj: Tensor::constant(n, n, adj),
            gcn_norm: Tensor::constant(n, n, gcn_norm),
            gat_mask: Tensor::constant(n, n, gat_mask),
            role_counts: Tensor::constant(n, NUM_ROLES, role_counts),
            gcn_role: Tensor::constant(n, NUM_ROLES, gcn_role),
            role_masks: role_masks
                .into_iter()
                .map(|m| Tensor::constant(n, n, m))
                .collect(),
            group: Tensor::constant(n, t, group),
        }
    }
}

// ---------------------------------------------------------------------------
// GNN layers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
enum GnnLayer {
    Linear(Linear),
    Gcn {
        lin: Linear,
        role_emb: Option<ParamId>,
    },
    Gat {
        /// Per-head projection, src score, dst score.
        w: Vec<ParamId>,
        a_src: Vec<ParamId>,
        a_dst: Vec<ParamId>,
        role_emb: Option<ParamId>,
    },
    Gin {
        eps: ParamId,
        mlp: Perceptron2,
        role_emb: Option<ParamId>,
    },
}

/// A stack of message-passing layers computing one of Q, K, or V.
#[derive(Debug, Clone)]
pub struct Gnn {
    pub config: GnnConfig,
    layers: Vec<GnnLayer>,
}

impl Gnn {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, config: GnnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let in_dim = if l == 0 { config.in_dim } else { config.out_dim };
            let lname = format!("{name}.{l}");
            let role = |store: &mut ParamStore, rng: &mut R| {
                config.use_role_embeddings.then(|| {
                    store.register(&format!("{lname}.role_emb"), NUM_ROLES, in_dim, Init::Normal(0.02), rng)
                })
            };
            let layer = match config.kind {
                GnnKind::Linear => {
                    GnnLayer::Linear(Linear::new(store, &lname, in_dim, config.out_dim, true, rng))
                }
                GnnKind::Gcn => GnnLayer::Gcn {
                    role_emb: role(store, rng),
                    lin: Linear::new(store, &lname, in_dim, config.out_dim, true, rng),
                },
                GnnKind::Gat => {
                    let head_dim = config.out_dim / config.heads;
                    let mut w = Vec::new();
                    let mut a_src = Vec::new();
                    let mut a_dst = Vec::new();
                    for h in 0..config.heads {
                        w.push(store.register(&format!("{lname}.h{h}.w"), in_dim, head_dim, Init::XavierUniform, rng));
                        a_src.push(store.register(&format!("{lname}.h{h}.a_src"), head_dim, 1, Init::XavierUniform, rng));
                        a_dst.push(store.register(&format!("{lname}.h{h}.a_dst"), head_dim, 1, Init::XavierUniform, rng));
                    }
                    GnnLayer::Gat {
                        role_emb: role(store, rng),
                        w,
                        a_src,
                        a_dst,
                    }
                }
                GnnKind::Gin => GnnLayer::Gin {
                    role_emb: role(store, rng),
                    eps: store.register(&format!("{lname}.eps"), 1, 1, Init::Zeros, rng),
                    mlp: Perceptron2::new(
                        store,
                        &format!("{lname}.mlp"),
                        in_dim,
                        config.hidden_dim.unwrap_or(config.out_dim),
                        config.out_dim,
                        rng,
                    ),
                },
            };
            layers.push(layer);
        }
        Ok(Gnn { config, layers })
    }

    pub fn forward(&self, binder: &Binder, x: &Tensor, s: &ChainStructure) -> Tensor {
        self.forward_inner(binder, x, s, &mut None)
    }

    /// Forward pass that also returns per-head GAT attention matrices of the
    /// last layer (empty for other kinds).
    pub fn forward_with_attention(
        &self,
        binder: &Binder,
        x: &Tensor,
        s: &ChainStructure,
    ) -> (Tensor, Vec<Tensor>) {
        let mut att = Some(Vec::new());
        let out = self.forward_inner(binder, x, s, &mut att);
        (out, att.unwrap())
    }

    fn forward_inner(
        &self,
        binder: &Binder,
        x: &Tensor,
        s: &ChainStructure,
        attention_out: &mut Option<Vec<Tensor>>,
    ) -> Tensor {
        assert_eq!(x.rows(), s.n, "feature rows do not match structure");
        let mut h = x.clone();
        for layer in &self.layers {
            h = match layer {
                GnnLayer::Linear(lin) => lin.forward(binder, &h),
                GnnLayer::Gcn { lin, role_emb } => {
                    let mut agg = s.gcn_norm.matmul(&h);
                    if let Some(re) = role_emb {
                        agg = agg.add(&s.gcn_role.matmul(&binder.leaf(*re)));
                    }
                    lin.forward(binder, &agg).relu()
                }
                GnnLayer::Gin { eps, mlp, role_emb } => {
                    let self_term = h.mul(&binder.leaf(*eps).add_scalar(1.0));
                    let mut agg = s.adj.matmul(&h).add(&self_term);
                    if let Some(re) = role_emb {
                        agg = agg.add(&s.role_counts.matmul(&binder.leaf(*re)));
                    }
                    mlp.forward(binder, &agg)
                }
                GnnLayer::Gat {
                    w,
                    a_src,
                    a_dst,
                    role_emb,
                } => {
                    if let Some(v) = attention_out.as_mut() {
                        v.clear();
                    }
                    let mut heads = Vec::with_capacity(w.len());
                    for hi in 0..w.len() {
                        let wh = binder.leaf(w[hi]);
                        let z = h.matmul(&wh);
                        let ssrc = z.matmul(&binder.leaf(a_src[hi]));
                        let sdst = z.matmul(&binder.leaf(a_dst[hi]));
                        let scores = ssrc
                            .add(&sdst.transpose())
                            .leaky_relu(GAT_NEG_SLOPE)
                            .add(&s.gat_mask);
                        let alpha = scores.softmax_rows();
                        if let Some(v) = attention_out.as_mut() {
                            v.push(alpha.detach());
                        }
                        let mut val = alpha.matmul(&h);
                        if let Some(re) = role_emb {
                            let e = binder.leaf(*re);
                            for (r, mask) in s.role_masks.iter().enumerate() {
                                let weight = alpha.mul(mask).sum_axis(1);
                                val = val.add(&weight.matmul(&e.slice_rows(r, r + 1)));
                            }
                        }
                        heads.push(val.matmul(&wh));
                    }
                    Tensor::concat_cols(&heads)
                }
            };
        }
        h
    }
}

/// Three independent GNNs sharing one output dimension.
#[derive(Debug, Clone)]
pub struct QkvGnn {
    pub q: Gnn,
    pub k: Gnn,
    pub v: Gnn,
}

impl QkvGnn {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, config: &GnnConfig, rng: &mut R) -> Result<Self> {
        Ok(QkvGnn {
            q: Gnn::new(store, &format!("{name}.gnn_q"), config.clone(), rng)?,
            k: Gnn::new(store, &format!("{name}.gnn_k"), config.clone(), rng)?,
            v: Gnn::new(store, &format!("{name}.gnn_v"), config.clone(), rng)?,
        })
    }

    pub fn forward(&self, binder: &Binder, x: &Tensor, s: &ChainStructure) -> (Tensor, Tensor, Tensor) {
        (
            self.q.forward(binder, x, s),
            self.k.forward(binder, x, s),
            self.v.forward(binder, x, s),
        )
    }
}
