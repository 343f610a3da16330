//! Shared test fixtures: a straight-line loop implementation of the
//! node-graph attention pipeline, independent of the tensor engine, plus
//! corpus helpers.

/// Plain row-major matrix as nested vectors.
pub type M = Vec<Vec<f64>>;

/// Stable softmax of one row.
fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Straight-line evaluation of the attention pipeline with explicit loops:
/// node scores, per-graph block sums, graph softmax, broadcast, elementwise
/// product, row softmax, and value aggregation.
pub struct OracleAttention {
    pub s1: M,
    pub s_g: M,
    pub s_n: M,
    pub out: M,
}

pub fn oracle_attention(q: &M, k: &M, v: &M, graph_of: &[usize], t: usize, d_head: usize) -> OracleAttention {
    let n = q.len();
    // S1 = softmax(QK^T / sqrt(d))
    let mut scores = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut dot = 0.0;
            for x in 0..d_head {
                dot += q[i][x] * k[j][x];
            }
            scores[i][j] = dot / (d_head as f64).sqrt();
        }
    }
    let s1: M = scores.iter().map(|r| softmax_row(r)).collect();

    // BlockSum: sum the scores within each graph block
    let mut block = vec![vec![0.0; t]; n];
    for i in 0..n {
        for l in 0..n {
            block[i][graph_of[l]] += s1[i][l];
        }
    }
    // softmax along the graph dimension
    let s_g: M = block.iter().map(|r| softmax_row(r)).collect();

    // Broadcast S_G over node columns, elementwise multiply, row softmax
    let mut modulated = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            modulated[i][j] = s1[i][j] * s_g[i][graph_of[j]];
        }
    }
    let s_n: M = modulated.iter().map(|r| softmax_row(r)).collect();

    // out = S_N * V
    let d_v = v[0].len();
    let mut out = vec![vec![0.0; d_v]; n];
    for i in 0..n {
        for j in 0..n {
            for x in 0..d_v {
                out[i][x] += s_n[i][j] * v[j][x];
            }
        }
    }
    OracleAttention { s1, s_g, s_n, out }
}

pub fn max_abs_diff(a: &M, b: &M) -> f64 {
    let mut worst: f64 = 0.0;
    assert_eq!(a.len(), b.len(), "row count mismatch");
    for (ra, rb) in a.iter().zip(b) {
        assert_eq!(ra.len(), rb.len(), "col count mismatch");
        for (x, y) in ra.iter().zip(rb) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

/// graph_of vector for graphs of the given sizes.
pub fn graph_of(sizes: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    for (g, &s) in sizes.iter().enumerate() {
        out.extend(std::iter::repeat(g).take(s));
    }
    out
}

pub fn tensor_to_rows(t: &eventformer::numeric::Tensor) -> M {
    let (r, c) = t.shape();
    let d = t.data();
    (0..r).map(|i| d[i * c..(i + 1) * c].to_vec()).collect()
}

pub fn rows_to_tensor(m: &M) -> eventformer::numeric::Tensor {
    let r = m.len();
    let c = m[0].len();
    let flat: Vec<f64> = m.iter().flatten().copied().collect();
    eventformer::numeric::Tensor::constant(r, c, flat)
}
