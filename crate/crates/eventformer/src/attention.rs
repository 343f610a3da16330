//! Node-graph hierarchical attention.
//!
//! Per head: node scores `S1 = softmax(QK^T / sqrt(d_head))`, block-summed
//! per graph into an N x T matrix, softmaxed along the graph axis into the
//! graph attention `S_G`, broadcast back over each graph's node columns and
//! multiplied elementwise into `S1`, then row-softmaxed into the node
//! attention `S_N` that mixes the values. Heads compute their own `S_G` and
//! `S_N` unless `shared_graph_attention` is set.
//!
//! The product of two sub-unit factors shrinks the `S_N` logits toward zero;
//! no temperature correction is applied on purpose.

use rand::Rng;

use crate::gnn::ChainStructure;
use crate::numeric::{Binder, Linear, ParamStore, Tensor};

/// Plain matrix snapshot for traces and dumps.
pub type Mat = Vec<Vec<f64>>;

fn to_mat(t: &Tensor) -> Mat {
    let (r, c) = t.shape();
    let d = t.data();
    (0..r).map(|i| d[i * c..(i + 1) * c].to_vec()).collect()
}

/// S1 / S_G / S_N snapshots for one layer and head.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub s1: Mat,
    pub s_g: Mat,
    pub s_n: Mat,
}

/// `S1 = softmax(QK^T / sqrt(d_head))`, rows over all key positions.
pub fn node_scores(q: &Tensor, k: &Tensor, d_head: usize) -> Tensor {
    q.matmul(&k.transpose())
        .scale(1.0 / (d_head as f64).sqrt())
        .softmax_rows()
}

/// Sum S1 columns within each graph block: entry (i, j) adds up S1[i, l] over
/// all nodes l of graph j. Repartitions each stochastic row, so rows still
/// sum to 1.
pub fn block_sum(s1: &Tensor, structure: &ChainStructure) -> Tensor {
    s1.matmul(&structure.group)
}

/// Softmax along the graph axis (each node row distributes over T graphs).
pub fn graph_attention(block_sums: &Tensor) -> Tensor {
    block_sums.softmax_rows()
}

/// Broadcast S_G columns over each graph's node columns, multiply into S1
/// elementwise, and row-softmax.
pub fn node_attention(s1: &Tensor, s_g: &Tensor, structure: &ChainStructure) -> Tensor {
    let broadcast = s_g.matmul(&structure.group.transpose());
    s1.mul(&broadcast).softmax_rows()
}

/// `F = S_N x V` for one head.
pub fn attend(s_n: &Tensor, v: &Tensor) -> Tensor {
    s_n.matmul(v)
}

/// Multi-head hierarchical attention with an output projection back to d.
#[derive(Debug, Clone)]
pub struct HierAttention {
    pub heads: usize,
    pub d: usize,
    pub shared_graph_attention: bool,
    out_proj: Linear,
}

impl HierAttention {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        heads: usize,
        shared_graph_attention: bool,
        rng: &mut R,
    ) -> Self {
        assert!(heads > 0 && d % heads == 0, "d {d} must be divisible by heads {heads}");
        HierAttention {
            heads,
            d,
            shared_graph_attention,
            out_proj: Linear::new(store, &format!("{name}.out_proj"), d, d, true, rng),
        }
    }

    pub fn forward(
        &self,
        binder: &Binder,
        q: &Tensor,
        k: &Tensor,
        v: &Tensor,
        structure: &ChainStructure,
        capture: bool,
    ) -> (Tensor, Option<Vec<AttentionTrace>>) {
        let dh = self.d / self.heads;
        let mut s1s = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (a, b) = (h * dh, (h + 1) * dh);
            s1s.push(node_scores(&q.slice_cols(a, b), &k.slice_cols(a, b), dh));
        }
        let shared_s_g = self.shared_graph_attention.then(|| {
            let mut acc = block_sum(&s1s[0], structure);
            for s1 in &s1s[1..] {
                acc = acc.add(&block_sum(s1, structure));
            }
            graph_attention(&acc.scale(1.0 / self.heads as f64))
        });
        let mut outs = Vec::with_capacity(self.heads);
        let mut traces = capture.then(Vec::new);
        for (h, s1) in s1s.iter().enumerate() {
            let s_g = match &shared_s_g {
                Some(g) => g.clone(),
                None => graph_attention(&block_sum(s1, structure)),
            };
            let s_n = node_attention(s1, &s_g, structure);
            let (a, b) = (h * dh, (h + 1) * dh);
            outs.push(attend(&s_n, &v.slice_cols(a, b)));
            if let Some(tr) = traces.as_mut() {
                tr.push(AttentionTrace {
                    s1: to_mat(s1),
                    s_g: to_mat(&s_g),
                    s_n: to_mat(&s_n),
                });
            }
        }
        let out = self.out_proj.forward(binder, &Tensor::concat_cols(&outs));
        (out, traces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_model::ArgRole;
    use crate::gnn::GraphDesc;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn structure_3x2() -> ChainStructure {
        ChainStructure::new(&[
            GraphDesc::star(1, ArgRole::Subj),
            GraphDesc::star(1, ArgRole::Obj),
            GraphDesc::star(1, ArgRole::Other),
        ])
    }

    #[test]
    fn zero_queries_give_uniform_scores() {
        let q = Tensor::zeros(6, 4);
        let s1 = node_scores(&q, &q, 4);
        for v in s1.data() {
            assert!((v - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_node_scores_one() {
        let q = Tensor::constant(1, 4, vec![0.3, -2.0, 1.0, 0.5]);
        let s1 = node_scores(&q, &q, 4);
        assert_eq!(s1.shape(), (1, 1));
        assert!((s1.item() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_orthogonal_queries_approach_identity() {
        // orthogonal rows scaled by 50: off-diagonal mass < 1e-6
        let mut data = vec![0.0; 4 * 4];
        for i in 0..4 {
            data[i * 4 + i] = 50.0;
        }
        let q = Tensor::constant(4, 4, data);
        let s1 = node_scores(&q, &q, 4);
        for i in 0..4 {
            for j in 0..4 {
                let v = s1.get(i, j);
                if i == j {
                    assert!(v > 1.0 - 1e-5);
                } else {
                    assert!(v < 1e-6, "off-diagonal {v}");
                }
            }
        }
    }

    #[test]
    fn block_sum_uniform_thirds() {
        let s = structure_3x2();
        let s1 = Tensor::full(6, 6, 1.0 / 6.0);
        let bs = block_sum(&s1, &s);
        assert_eq!(bs.shape(), (6, 3));
        for v in bs.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn block_sum_single_graph_is_ones() {
        let s = ChainStructure::new(&[GraphDesc::star(3, ArgRole::Obj)]);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let s1 = Tensor::randn(4, 4, 1.0, &mut rng).softmax_rows();
        let bs = block_sum(&s1, &s);
        assert_eq!(bs.shape(), (4, 1));
        for v in bs.data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn block_sum_matches_nested_loop_oracle() {
        let s = structure_3x2();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let s1 = Tensor::randn(6, 6, 1.0, &mut rng).softmax_rows();
        let bs = block_sum(&s1, &s);
        for i in 0..6 {
            for j in 0..3 {
                let mut want = 0.0;
                for l in 0..6 {
                    if s.graph_of[l] == j {
                        want += s1.get(i, l);
                    }
                }
                assert_eq!(bs.get(i, j), want);
            }
        }
        // rows of the repartitioned matrix still sum to 1
        for i in 0..6 {
            let sum: f64 = (0..3).map(|j| bs.get(i, j)).sum();
            assert!((sum - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn graph_attention_closed_form() {
        let row = Tensor::constant(1, 3, vec![1f64.ln(), 2f64.ln(), 3f64.ln()]);
        let g = graph_attention(&row);
        let d = g.data();
        assert!((d[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((d[1] - 2.0 / 6.0).abs() < 1e-12);
        assert!((d[2] - 3.0 / 6.0).abs() < 1e-12);
        // uniform block sums -> 1/T
        let u = graph_attention(&Tensor::full(6, 3, 0.25));
        for v in u.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn node_attention_uniform_graph_weights() {
        // S_G uniform -> S_N = softmax(S1 / T)
        let s = structure_3x2();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let s1 = Tensor::randn(6, 6, 1.0, &mut rng).softmax_rows();
        let s_g = Tensor::full(6, 3, 1.0 / 3.0);
        let out = node_attention(&s1, &s_g, &s);
        let want = s1.scale(1.0 / 3.0).softmax_rows();
        for (a, b) in out.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_features_give_uniform_node_attention() {
        let s = structure_3x2();
        let q = Tensor::full(6, 4, 0.7);
        let s1 = node_scores(&q, &q, 4);
        let s_g = graph_attention(&block_sum(&s1, &s));
        for v in s_g.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-9);
        }
        let s_n = node_attention(&s1, &s_g, &s);
        for v in s_n.data() {
            assert!((v - 1.0 / 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn attend_identity_and_uniform() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let v = Tensor::randn(3, 2, 1.0, &mut rng);
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 3 + i] = 1.0;
        }
        let out = attend(&Tensor::constant(3, 3, eye), &v);
        assert_eq!(out.data(), v.data());
        let uni = attend(&Tensor::full(3, 3, 1.0 / 3.0), &v);
        let vd = v.data();
        for j in 0..2 {
            let mean = (vd[j] + vd[2 + j] + vd[4 + j]) / 3.0;
            for i in 0..3 {
                assert!((uni.get(i, j) - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn multi_head_forward_shapes_and_traces() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut store = ParamStore::new();
        let attn = HierAttention::new(&mut store, "layer0.attn", 8, 2, false, &mut rng);
        let s = structure_3x2();
        let binder = Binder::new(&store, false);
        let q = Tensor::randn(6, 8, 1.0, &mut rng);
        let k = Tensor::randn(6, 8, 1.0, &mut rng);
        let v = Tensor::randn(6, 8, 1.0, &mut rng);
        let (out, traces) = attn.forward(&binder, &q, &k, &v, &s, true);
        assert_eq!(out.shape(), (6, 8));
        let traces = traces.unwrap();
        assert_eq!(traces.len(), 2);
        for tr in &traces {
            assert_eq!(tr.s1.len(), 6);
            assert_eq!(tr.s_g[0].len(), 3);
            for m in [&tr.s1, &tr.s_g, &tr.s_n] {
                for row in m {
                    let sum: f64 = row.iter().sum();
                    assert!((sum - 1.0).abs() < 1e-6, "row sums to {sum}");
                }
            }
        }
    }

    #[test]
    fn shared_graph_attention_equalizes_heads() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let attn = HierAttention::new(&mut store, "a", 8, 2, true, &mut rng);
        let s = structure_3x2();
        let binder = Binder::new(&store, false);
        let q = Tensor::randn(6, 8, 1.0, &mut rng);
        let k = Tensor::randn(6, 8, 1.0, &mut rng);
        let v = Tensor::randn(6, 8, 1.0, &mut rng);
        let (_, traces) = attn.forward(&binder, &q, &k, &v, &s, true);
        let traces = traces.unwrap();
        assert_eq!(traces[0].s_g, traces[1].s_g);
    }
}
