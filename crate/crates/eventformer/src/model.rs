//! The encoder stack, learnable graph mask, and prediction head.
//!
//! A chain is embedded, coreference-encoded, and its target graph replaced by
//! a fixed learned template (one trigger placeholder plus `mask_slots`
//! argument placeholders, star-connected with role `other`). The stack is N
//! layers of hierarchical attention + position-wise FFN with post-norm
//! residuals. The head reads only the masked graph's final-layer rows: the
//! trigger placeholder produces verb logits, each slot row produces a noun
//! embedding and a presence logit. Attention over the whole chain is
//! bidirectional; reconstruction, not causality, is the training paradigm.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{AttentionTrace, HierAttention};
use crate::encoding::{
    apply_coreference, embed_chain, ChainLayout, EmbeddingProvider, NodeFeatures, ProviderMode,
};
use crate::error::{Error, Result};
use crate::event_model::{ArgRole, EventChain, NodeKind, Vocabulary, COREF_SENTINEL, MAX_CHAIN_LEN};
use crate::gnn::{chain_desc, ChainStructure, GnnConfig, GnnKind, GraphDesc, QkvGnn};
use crate::numeric::checkpoint::{self, ParamCheckpoint};
use crate::numeric::{Binder, Init, LayerNorm, Linear, ParamId, ParamStore, Perceptron2, Tensor};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

fn default_d() -> usize {
    64
}
fn default_layers() -> usize {
    2
}
fn default_heads() -> usize {
    4
}
fn default_dropout() -> f64 {
    0.3
}
fn default_gnn_kind() -> GnnKind {
    GnnKind::Gin
}
fn default_gnn_layers() -> usize {
    1
}
fn default_ce_scale() -> f64 {
    1.0
}
fn default_mask_slots() -> usize {
    4
}
fn default_tau() -> f64 {
    0.5
}
fn default_true() -> bool {
    true
}
fn default_text_dim() -> usize {
    32
}
fn default_provider() -> ProviderMode {
    ProviderMode::Stub
}
fn default_embed_seed() -> u64 {
    13
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Model dimension (desk default 64; paper-scale 1024).
    pub d: usize,
    pub layers: usize,
    pub heads: usize,
    /// FFN inner dimension; 0 means 4*d.
    pub ffn_dim: usize,
    pub dropout: f64,
    pub gnn_kind: GnnKind,
    pub gnn_layers: usize,
    /// Internal GAT heads; 0 means same as `heads`.
    pub gnn_heads: usize,
    /// GIN perceptron hidden width; 0 means d.
    pub gnn_hidden: usize,
    pub use_role_embeddings: bool,
    /// Coreference encoding scale s.
    pub ce_scale: f64,
    /// Argument placeholders in the masked graph template.
    pub mask_slots: usize,
    /// Hidden width of the verb/noun head perceptrons; 0 means d.
    pub head_hidden: usize,
    /// Similarity threshold for noun selection.
    pub tau: f64,
    pub shared_graph_attention: bool,
    pub text_dim: usize,
    /// 0 means same as text_dim.
    pub visual_dim: usize,
    pub provider: ProviderMode,
    pub embed_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: default_d(),
            layers: default_layers(),
            heads: default_heads(),
            ffn_dim: 0,
            dropout: default_dropout(),
            gnn_kind: default_gnn_kind(),
            gnn_layers: default_gnn_layers(),
            gnn_heads: 0,
            gnn_hidden: 0,
            use_role_embeddings: default_true(),
            ce_scale: default_ce_scale(),
            mask_slots: default_mask_slots(),
            head_hidden: 0,
            tau: default_tau(),
            shared_graph_attention: false,
            text_dim: default_text_dim(),
            visual_dim: 0,
            provider: default_provider(),
            embed_seed: default_embed_seed(),
        }
    }
}

impl ModelConfig {
    pub fn ffn_dim_effective(&self) -> usize {
        if self.ffn_dim == 0 {
            4 * self.d
        } else {
            self.ffn_dim
        }
    }

    pub fn gnn_heads_effective(&self) -> usize {
        if self.gnn_heads == 0 {
            self.heads
        } else {
            self.gnn_heads
        }
    }

    pub fn gnn_hidden_effective(&self) -> usize {
        if self.gnn_hidden == 0 {
            self.d
        } else {
            self.gnn_hidden
        }
    }

    pub fn head_hidden_effective(&self) -> usize {
        if self.head_hidden == 0 {
            self.d
        } else {
            self.head_hidden
        }
    }

    pub fn visual_dim_effective(&self) -> usize {
        if self.visual_dim == 0 {
            self.text_dim
        } else {
            self.visual_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d % 2 != 0 {
            return Err(Error::Config(format!("model.d must be even and positive, got {}", self.d)));
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::Config(format!(
                "model.d {} must be divisible by model.heads {}",
                self.d, self.heads
            )));
        }
        if self.layers == 0 {
            return Err(Error::Config("model.layers must be at least 1".into()));
        }
        if self.mask_slots == 0 {
            return Err(Error::Config("model.mask_slots must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("model.dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.ce_scale < 0.0 {
            return Err(Error::Config("model.ce_scale must be non-negative".into()));
        }
        Ok(())
    }

    fn gnn_config(&self) -> GnnConfig {
        GnnConfig {
            kind: self.gnn_kind,
            layers: self.gnn_layers,
            heads: self.gnn_heads_effective(),
            in_dim: self.d,
            out_dim: self.d,
            hidden_dim: Some(self.gnn_hidden_effective()),
            use_role_embeddings: self.use_role_embeddings,
        }
    }
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct EncoderLayer {
    qkv: QkvGnn,
    attn: HierAttention,
    ln1: LayerNorm,
    ffn: Perceptron2,
    ln2: LayerNorm,
}

#[derive(Debug)]
pub struct EventFormer {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    provider: EmbeddingProvider,
    proj: Linear,
    mask_trigger: ParamId,
    mask_slot_bank: ParamId,
    layers: Vec<EncoderLayer>,
    verb_head: Perceptron2,
    noun_head: Perceptron2,
}

/// Candidate argument nodes from the unmasked graphs.
#[derive(Debug)]
pub struct HistoryInfo {
    /// C x d input embeddings.
    pub embeddings: Tensor,
    pub lexemes: Vec<usize>,
    pub labels: Vec<String>,
}

/// Supervision extracted from the original target graph.
#[derive(Debug)]
pub struct GoldInfo {
    pub verb: usize,
    /// G x d input embeddings of the target's argument nodes.
    pub noun_embeddings: Tensor,
    pub noun_lexemes: Vec<usize>,
}

#[derive(Debug)]
pub struct ForwardOutput {
    /// 1 x |verbs|.
    pub verb_logits: Tensor,
    /// mask_slots x d.
    pub slot_embeddings: Tensor,
    /// mask_slots x 1.
    pub presence_logits: Tensor,
    pub history: HistoryInfo,
    pub gold: GoldInfo,
    /// Per layer, per head.
    pub traces: Option<Vec<Vec<AttentionTrace>>>,
    /// Layout of the masked chain (placeholder rows included).
    pub layout: ChainLayout,
    /// Index of the masked graph.
    pub target_index: usize,
}

/// Result of noun selection against historical candidates.
#[derive(Debug, Clone, Serialize)]
pub struct SlotChoice {
    pub slot: usize,
    pub present: bool,
    pub similarity: f64,
    /// Lexeme of the best candidate, if any candidates exist.
    pub lexeme: Option<usize>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Prediction {
    /// All verb ids ranked by logit, best first.
    pub verb_ranking: Vec<usize>,
    /// Deduplicated selected noun lexemes, ascending.
    pub nouns: Vec<usize>,
    pub slots: Vec<SlotChoice>,
}

impl EventFormer {
    pub fn new(config: ModelConfig, vocab: &Vocabulary, seed: u64) -> Result<Self> {
        config.validate()?;
        if vocab.verbs.is_empty() {
            return Err(Error::Config("verb vocabulary is empty".into()));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.d;
        let in_dim = config.text_dim + config.visual_dim_effective();
        let proj = Linear::new(&mut store, "embed.proj", in_dim, d, true, &mut rng);
        let mask_trigger = store.register("mask.trigger", 1, d, Init::Normal(0.02), &mut rng);
        let mask_slot_bank =
            store.register("mask.slots", config.mask_slots, d, Init::Normal(0.02), &mut rng);
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let name = format!("layer{l}");
            layers.push(EncoderLayer {
                qkv: QkvGnn::new(&mut store, &format!("{name}.attn"), &config.gnn_config(), &mut rng)?,
                attn: HierAttention::new(
                    &mut store,
                    &format!("{name}.attn"),
                    d,
                    config.heads,
                    config.shared_graph_attention,
                    &mut rng,
                ),
                ln1: LayerNorm::new(&mut store, &format!("{name}.ln1"), d, &mut rng),
                ffn: Perceptron2::new(
                    &mut store,
                    &format!("{name}.ffn"),
                    d,
                    config.ffn_dim_effective(),
                    d,
                    &mut rng,
                ),
                ln2: LayerNorm::new(&mut store, &format!("{name}.ln2"), d, &mut rng),
            });
        }
        let verb_head = Perceptron2::new(
            &mut store,
            "head.verb",
            d,
            config.head_hidden_effective(),
            vocab.verbs.len(),
            &mut rng,
        );
        let noun_head = Perceptron2::new(
            &mut store,
            "head.noun",
            d,
            config.head_hidden_effective(),
            d + 1,
            &mut rng,
        );
        let provider = EmbeddingProvider::new(
            config.provider,
            config.text_dim,
            config.visual_dim_effective(),
            config.embed_seed,
        );
        Ok(EventFormer {
            config,
            vocab: vocab.clone(),
            store,
            provider,
            proj,
            mask_trigger,
            mask_slot_bank,
            layers,
            verb_head,
            noun_head,
        })
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    /// Replace the target graph's feature rows with the learned template and
    /// produce the masked layout. Graphs outside the target are untouched.
    fn mask_graph(
        &self,
        features: &NodeFeatures,
        target: usize,
        binder: &Binder,
    ) -> (Tensor, ChainLayout) {
        let layout = &features.layout;
        let (tstart, tend) = layout.graph_rows(target);
        let n = layout.num_rows();
        let slots = self.config.mask_slots;
        let template = Tensor::concat_rows(&[
            binder.leaf(self.mask_trigger),
            binder.leaf(self.mask_slot_bank),
        ]);
        let mut parts = Vec::new();
        if tstart > 0 {
            parts.push(features.features.slice_rows(0, tstart));
        }
        parts.push(template);
        if tend < n {
            parts.push(features.features.slice_rows(tend, n));
        }
        let masked = Tensor::concat_rows(&parts);

        let mut ml = ChainLayout {
            graph_of: Vec::new(),
            coref_of: Vec::new(),
            kinds: Vec::new(),
            lexemes: Vec::new(),
            labels: Vec::new(),
            node_order: Vec::new(),
            graph_sizes: layout.graph_sizes.clone(),
        };
        ml.graph_sizes[target] = 1 + slots;
        let push_range = |ml: &mut ChainLayout, range: std::ops::Range<usize>| {
            for row in range {
                ml.graph_of.push(layout.graph_of[row]);
                ml.coref_of.push(layout.coref_of[row]);
                ml.kinds.push(layout.kinds[row]);
                ml.lexemes.push(layout.lexemes[row]);
                ml.labels.push(layout.labels[row].clone());
                ml.node_order.push(layout.node_order[row]);
            }
        };
        push_range(&mut ml, 0..tstart);
        ml.graph_of.push(target);
        ml.coref_of.push(COREF_SENTINEL);
        ml.kinds.push(NodeKind::Trigger);
        ml.lexemes.push(usize::MAX);
        ml.labels.push("<mask:trg>".into());
        ml.node_order.push(usize::MAX);
        for sidx in 0..slots {
            ml.graph_of.push(target);
            ml.coref_of.push(COREF_SENTINEL);
            ml.kinds.push(NodeKind::Argument);
            ml.lexemes.push(usize::MAX);
            ml.labels.push(format!("<mask:arg{sidx}>"));
            ml.node_order.push(usize::MAX);
        }
        push_range(&mut ml, tend..n);
        (masked, ml)
    }

    /// Prediction head over the masked graph's final-layer rows only.
    pub fn apply_head(
        &self,
        binder: &Binder,
        final_h: &Tensor,
        mask_start: usize,
    ) -> (Tensor, Tensor, Tensor) {
        let slots = self.config.mask_slots;
        let trig_row = final_h.slice_rows(mask_start, mask_start + 1);
        let slot_rows = final_h.slice_rows(mask_start + 1, mask_start + 1 + slots);
        let verb_logits = self.verb_head.forward(binder, &trig_row);
        let noun_out = self.noun_head.forward(binder, &slot_rows);
        let d = self.config.d;
        let slot_embeddings = noun_out.slice_cols(0, d);
        let presence_logits = noun_out.slice_cols(d, d + 1);
        (verb_logits, slot_embeddings, presence_logits)
    }

    /// Run the full pipeline. `target_override` substitutes the chain's
    /// target (used by random-mask pretraining); `dropout_rng` enables
    /// training-mode dropout.
    pub fn forward(
        &self,
        chain: &EventChain,
        target_override: Option<usize>,
        binder: &Binder,
        mut dropout_rng: Option<&mut ChaCha20Rng>,
        capture_traces: bool,
    ) -> Result<ForwardOutput> {
        if chain.len() > MAX_CHAIN_LEN {
            return Err(Error::Data(format!(
                "chain {} has {} graphs, maximum sequence length is {MAX_CHAIN_LEN}",
                chain.chain_id,
                chain.len()
            )));
        }
        let target = target_override.unwrap_or(chain.target_index);
        if target >= chain.len() {
            return Err(Error::Data(format!(
                "target index {target} out of range for chain of length {}",
                chain.len()
            )));
        }

        let embedded = embed_chain(chain, &self.provider, &self.proj, binder)?;
        let encoded = apply_coreference(&embedded, self.config.ce_scale)?;

        // Supervision and candidates come from the frozen embedding side.
        let (tstart, tend) = encoded.layout.graph_rows(target);
        let gold_graph = &chain.graphs[target];
        let gold_verb = gold_graph
            .trigger()
            .map(|t| t.lexeme_id)
            .ok_or_else(|| Error::Data(format!("graph {target} has no trigger")))?;
        let mut gold_rows = Vec::new();
        let mut gold_lexemes = Vec::new();
        for row in tstart..tend {
            if encoded.layout.kinds[row] == NodeKind::Argument {
                gold_rows.push(row);
                gold_lexemes.push(encoded.layout.lexemes[row]);
            }
        }
        let mut hist_rows = Vec::new();
        let mut hist_lexemes = Vec::new();
        let mut hist_labels = Vec::new();
        for row in 0..encoded.layout.num_rows() {
            if encoded.layout.graph_of[row] != target
                && encoded.layout.kinds[row] == NodeKind::Argument
            {
                hist_rows.push(row);
                hist_lexemes.push(encoded.layout.lexemes[row]);
                hist_labels.push(encoded.layout.labels[row].clone());
            }
        }
        let gold = GoldInfo {
            verb: gold_verb,
            noun_embeddings: encoded.features.select_rows(&gold_rows),
            noun_lexemes: gold_lexemes,
        };
        let history = HistoryInfo {
            embeddings: encoded.features.select_rows(&hist_rows),
            lexemes: hist_lexemes,
            labels: hist_labels,
        };

        // Mask, then encode.
        let (mut h, masked_layout) = self.mask_graph(&encoded, target, binder);
        let mut descs: Vec<GraphDesc> = chain_desc(chain);
        descs[target] = GraphDesc::star(self.config.mask_slots, ArgRole::Other);
        let structure = ChainStructure::new(&descs);

        let mut all_traces = capture_traces.then(Vec::new);
        let p = self.config.dropout;
        for layer in &self.layers {
            let (q, k, v) = layer.qkv.forward(binder, &h, &structure);
            let (attn_out, traces) = layer.attn.forward(binder, &q, &k, &v, &structure, capture_traces);
            if let (Some(all), Some(tr)) = (all_traces.as_mut(), traces) {
                all.push(tr);
            }
            let attn_out = match dropout_rng.as_deref_mut() {
                Some(rng) => attn_out.dropout(p, true, rng)?,
                None => attn_out,
            };
            h = layer.ln1.forward(binder, &h.add(&attn_out));
            let ffn_out = layer.ffn.forward(binder, &h);
            let ffn_out = match dropout_rng.as_deref_mut() {
                Some(rng) => ffn_out.dropout(p, true, rng)?,
                None => ffn_out,
            };
            h = layer.ln2.forward(binder, &h.add(&ffn_out));
        }

        let (mask_start, _) = masked_layout.graph_rows(target);
        let (verb_logits, slot_embeddings, presence_logits) =
            self.apply_head(binder, &h, mask_start);
        Ok(ForwardOutput {
            verb_logits,
            slot_embeddings,
            presence_logits,
            history,
            gold,
            traces: all_traces,
            layout: masked_layout,
            target_index: target,
        })
    }

    /// Rank verbs and select nouns from historical arguments by cosine
    /// similarity at threshold `tau`.
    pub fn predict(&self, chain: &EventChain, tau: f64) -> Result<Prediction> {
        let binder = Binder::new(&self.store, false);
        let out = self.forward(chain, None, &binder, None, false)?;
        if out.history.lexemes.is_empty() {
            return Err(Error::Contract(
                "empty history: no historical argument nodes to select nouns from".into(),
            ));
        }
        Ok(self.select(&out, tau))
    }

    /// Noun selection given a forward output (used by predict and evaluate).
    pub fn select(&self, out: &ForwardOutput, tau: f64) -> Prediction {
        let logits = out.verb_logits.data();
        let mut verb_ranking: Vec<usize> = (0..logits.len()).collect();
        verb_ranking.sort_by(|&a, &b| {
            logits[b].partial_cmp(&logits[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });

        let sims = crate::training::noun_similarities(&out.slot_embeddings, &out.history.embeddings)
            .expect("history checked non-empty");
        let sims = sims.data();
        let cands = out.history.lexemes.len();
        let presence = out.presence_logits.data();
        let mut slots = Vec::new();
        let mut nouns = std::collections::BTreeSet::new();
        for s in 0..self.config.mask_slots {
            let row = &sims[s * cands..(s + 1) * cands];
            let mut best = 0usize;
            for c in 1..cands {
                if row[c] > row[best] {
                    best = c;
                }
            }
            let present = presence[s] > 0.0;
            let sim = row[best];
            let chosen = present && sim >= tau;
            if chosen {
                nouns.insert(out.history.lexemes[best]);
            }
            slots.push(SlotChoice {
                slot: s,
                present,
                similarity: sim,
                lexeme: chosen.then(|| out.history.lexemes[best]),
                label: chosen.then(|| out.history.labels[best].clone()),
            });
        }
        Prediction {
            verb_ranking,
            nouns: nouns.into_iter().collect(),
            slots,
        }
    }

    // ----- persistence -----

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let ck = ModelCheckpoint {
            version: checkpoint::CHECKPOINT_VERSION,
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: checkpoint::snapshot(&self.store),
        };
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut f, &ck)?;
        use std::io::Write;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<EventFormer> {
        let text = std::fs::read_to_string(path)?;
        let ck: ModelCheckpoint = serde_json::from_str(&text)?;
        let mut model = EventFormer::new(ck.config.clone(), &ck.vocab, 0)?;
        checkpoint::restore(&mut model.store, &ck.params)?;
        Ok(model)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamCheckpoint,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::{chain_from_json, validate_chain};

    pub fn toy_vocab() -> Vocabulary {
        Vocabulary::new(
            (0..6).map(|i| format!("verb{i}")).collect(),
            (0..5).map(|i| format!("noun{i}")).collect(),
        )
        .unwrap()
    }

    pub fn toy_chain(n_graphs: usize) -> EventChain {
        let graphs: Vec<String> = (0..n_graphs)
            .map(|g| {
                format!(
                    r#"{{"trigger": {{"text": "verb{v}", "verb_id": {v}}}, "args": [
                        {{"text": "noun0", "noun_id": 0, "role": "subj", "coref": 0}},
                        {{"text": "noun{a}", "noun_id": {a}, "role": "obj", "coref": {a}}}
                    ]}}"#,
                    v = g % 6,
                    a = 1 + g % 3
                )
            })
            .collect();
        let json = format!(
            r#"{{"chain_id": "toy", "graphs": [{}], "target_index": {}}}"#,
            graphs.join(","),
            n_graphs - 1
        );
        chain_from_json(&json).unwrap()
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            d: 8,
            layers: 1,
            heads: 2,
            ffn_dim: 16,
            dropout: 0.0,
            text_dim: 4,
            visual_dim: 4,
            mask_slots: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn toy_chain_is_valid() {
        assert!(validate_chain(&toy_chain(4)).is_empty());
    }

    #[test]
    fn forward_shapes_and_traces() {
        let model = EventFormer::new(small_config(), &toy_vocab(), 1).unwrap();
        let chain = toy_chain(4);
        let binder = Binder::new(&model.store, false);
        let out = model.forward(&chain, None, &binder, None, true).unwrap();
        assert_eq!(out.verb_logits.shape(), (1, 6));
        assert_eq!(out.slot_embeddings.shape(), (3, 8));
        assert_eq!(out.presence_logits.shape(), (3, 1));
        // N_total after masking = N_history + 1 + mask_slots
        let n_hist = 3 * 3; // three history graphs, 3 nodes each
        assert_eq!(out.layout.num_rows(), n_hist + 1 + 3);
        let traces = out.traces.unwrap();
        assert_eq!(traces.len(), 1); // layers
        assert_eq!(traces[0].len(), 2); // heads
        let n = out.layout.num_rows();
        assert_eq!(traces[0][0].s1.len(), n);
        assert_eq!(traces[0][0].s_g[0].len(), 4);
    }

    #[test]
    fn masking_leaves_history_rows_identical() {
        let model = EventFormer::new(small_config(), &toy_vocab(), 1).unwrap();
        let chain = toy_chain(5);
        let binder = Binder::new(&model.store, false);
        let nf = embed_chain(&chain, &model.provider, &model.proj, &binder).unwrap();
        let nf = apply_coreference(&nf, model.config.ce_scale).unwrap();
        let (masked, layout) = model.mask_graph(&nf, 4, &binder);
        let before = nf.features.data();
        let after = masked.data();
        let (tstart, _) = nf.layout.graph_rows(4);
        for i in 0..tstart * 8 {
            assert_eq!(before[i].to_bits(), after[i].to_bits());
        }
        assert_eq!(layout.graph_sizes[4], 1 + 3);
    }

    #[test]
    fn mask_template_shared_across_chains() {
        let model = EventFormer::new(small_config(), &toy_vocab(), 1).unwrap();
        let binder = Binder::new(&model.store, false);
        let mask_rows = |chain: &EventChain| {
            let nf = embed_chain(chain, &model.provider, &model.proj, &binder).unwrap();
            let (masked, layout) = model.mask_graph(&nf, chain.target_index, &binder);
            let (s, e) = layout.graph_rows(chain.target_index);
            masked.slice_rows(s, e).data()
        };
        let a = mask_rows(&toy_chain(4));
        let b = mask_rows(&toy_chain(6));
        assert_eq!(a, b);
    }

    #[test]
    fn head_depends_only_on_masked_rows() {
        let model = EventFormer::new(small_config(), &toy_vocab(), 1).unwrap();
        let binder = Binder::new(&model.store, false);
        let n = 13usize; // 9 history rows + 1 trigger placeholder + 3 slots
        let mask_start = 9;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let h1 = Tensor::randn(n, 8, 1.0, &mut rng);
        // perturb all history rows, keep masked rows fixed
        let mut d2 = h1.data();
        for v in d2[..mask_start * 8].iter_mut() {
            *v += 2.0;
        }
        let h2 = Tensor::constant(n, 8, d2);
        let (v1, s1, p1) = model.apply_head(&binder, &h1, mask_start);
        let (v2, s2, p2) = model.apply_head(&binder, &h2, mask_start);
        assert_eq!(v1.data(), v2.data());
        assert_eq!(s1.data(), s2.data());
        assert_eq!(p1.data(), p2.data());
    }

    #[test]
    fn zeroed_head_gives_uniform_verb_softmax() {
        let mut model = EventFormer::new(small_config(), &toy_vocab(), 1).unwrap();
        for name in ["head.verb.l1.w", "head.verb.l1.b", "head.verb.l2.w", "head.verb.l2.b"] {
            let id = model.store.id(name).unwrap();
            let e = model.store.entry_mut(id);
            e.data = vec![0.0; e.data.len()];
        }
        let binder = Binder::new(&model.store, false);
        let out = model
            .forward(&toy_chain(4), None, &binder, None, false)
            .unwrap();
        let probs = out.verb_logits.softmax_rows().data();
        for p in probs {
            assert!((p - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eval_forward_deterministic() {
        let model = EventFormer::new(small_config(), &toy_vocab(), 2).unwrap();
        let chain = toy_chain(5);
        let run = || {
            let binder = Binder::new(&model.store, false);
            model
                .forward(&chain, None, &binder, None, false)
                .unwrap()
                .verb_logits
                .data()
        };
        let (a, b) = (run(), run());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn over_length_chain_rejected() {
        let model = EventFormer::new(small_config(), &toy_vocab(), 1).unwrap();
        let chain = toy_chain(51);
        let binder = Binder::new(&model.store, false);
        let err = model.forward(&chain, None, &binder, None, false).unwrap_err();
        assert!(err.to_string().contains("maximum sequence length"));
    }

    #[test]
    fn predict_thresholds() {
        let model = EventFormer::new(small_config(), &toy_vocab(), 3).unwrap();
        let chain = toy_chain(4);
        // unattainable threshold -> empty noun set
        let p = model.predict(&chain, 1.01).unwrap();
        assert!(p.nouns.is_empty());
        assert_eq!(p.verb_ranking.len(), 6);
        // ranking has no duplicates
        let mut sorted = p.verb_ranking.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 6);
    }

    #[test]
    fn slot_equal_to_candidate_selected_at_tau_one() {
        let model = EventFormer::new(small_config(), &toy_vocab(), 3).unwrap();
        let chain = toy_chain(4);
        let binder = Binder::new(&model.store, false);
        let mut out = model.forward(&chain, None, &binder, None, false).unwrap();
        // craft slot 0 = candidate 1 exactly, presence positive
        let cand = out.history.embeddings.slice_rows(1, 2);
        let mut slot_data = out.slot_embeddings.data();
        slot_data[..8].copy_from_slice(&cand.data());
        out.slot_embeddings = Tensor::constant(3, 8, slot_data);
        out.presence_logits = Tensor::constant(3, 1, vec![1.0, -1.0, -1.0]);
        let pred = model.select(&out, 1.0);
        assert!((pred.slots[0].similarity - 1.0).abs() < 1e-9);
        assert_eq!(pred.nouns, vec![out.history.lexemes[1]]);
    }

    #[test]
    fn predict_errors_on_empty_history() {
        let model = EventFormer::new(small_config(), &toy_vocab(), 1).unwrap();
        let mut chain = toy_chain(3);
        chain.target_index = 0;
        // remove argument nodes of graphs 1 and 2 is not valid data, so use
        // target override on a chain of three graphs where history is intact;
        // instead check the contract through a chain whose only graph with
        // arguments is the target.
        for g in [1usize, 2] {
            let trig = chain.graphs[g].trigger().unwrap().node_id;
            chain.graphs[g].nodes.retain(|n| n.node_id == trig);
            chain.graphs[g].edges.clear();
        }
        let err = model.predict(&chain, 0.5).unwrap_err();
        assert!(err.to_string().contains("empty history"), "{err}");
    }

    #[test]
    fn checkpoint_roundtrip_preserves_outputs() {
        let model = EventFormer::new(small_config(), &toy_vocab(), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = EventFormer::load(&path).unwrap();
        let chain = toy_chain(4);
        let a = {
            let b = Binder::new(&model.store, false);
            model.forward(&chain, None, &b, None, false).unwrap().verb_logits.data()
        };
        let c = {
            let b = Binder::new(&loaded.store, false);
            loaded.forward(&chain, None, &b, None, false).unwrap().verb_logits.data()
        };
        assert_eq!(a, c);
    }

    #[test]
    fn end_to_end_gradcheck_small_model() {
        // d = 8, 3 graphs, 1 layer
        let mut model = EventFormer::new(small_config(), &toy_vocab(), 4).unwrap();
        let chain = toy_chain(3);
        let mut store = std::mem::take(&mut model.store);
        let report = crate::numeric::grad_check(&mut store, 1e-3, 1e-4, |binder| {
            model_forward_for_check(&model, &chain, binder)
        })
        .unwrap();
        model.store = store;
        assert!(report.pass(), "{report}");
    }

    fn model_forward_for_check(
        model: &EventFormer,
        chain: &EventChain,
        binder: &Binder,
    ) -> crate::error::Result<Tensor> {
        let out = model.forward(chain, None, binder, None, false)?;
        // scalar touching every output head
        Ok(out
            .verb_logits
            .log_softmax_rows()
            .slice_cols(0, 1)
            .neg()
            .add(&out.slot_embeddings.powf(2.0).mean())
            .add(&out.presence_logits.sigmoid().mean())
            .sum())
    }
}
