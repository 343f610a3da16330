//! Named parameter storage, separate from the computation graph.
//!
//! A [`ParamStore`] owns plain `f64` buffers keyed by hierarchical names
//! (`layer0.attn.gnn_q.w0`). Each forward pass opens a [`Binder`] that turns
//! entries into graph leaves on demand; after backward the binder hands the
//! accumulated gradients back keyed by parameter id. Optimizers and
//! checkpoints work on the store alone and never touch the graph.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::Rng;

use super::tensor::{gauss, Tensor};

/// Index of a parameter within its store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Const(f64),
    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    XavierUniform,
    Normal(f64),
}

#[derive(Debug, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register<R: Rng>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        init: Init,
        rng: &mut R,
    ) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name: {name}"
        );
        let n = rows * cols;
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Const(v) => vec![v; n],
            Init::XavierUniform => {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                (0..n).map(|_| rng.gen_range(-limit..limit)).collect()
            }
            Init::Normal(std) => (0..n).map(|_| gauss(rng) * std).collect(),
        };
        let id = ParamId(self.entries.len());
        self.by_name.insert(name.to_string(), id.0);
        self.entries.push(ParamEntry {
            name: name.to_string(),
            rows,
            cols,
            data,
        });
        id
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entry_mut(&mut self, id: ParamId) -> &mut ParamEntry {
        &mut self.entries[id.0]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamEntry)> {
        self.entries.iter().enumerate().map(|(i, e)| (ParamId(i), e))
    }
}

/// Per-pass view binding store entries to graph leaves.
pub struct Binder<'a> {
    store: &'a ParamStore,
    leaves: RefCell<Vec<Option<Tensor>>>,
    trainable: bool,
}

impl<'a> Binder<'a> {
    /// `trainable = false` binds constants, which prunes the backward graph
    /// entirely for inference.
    pub fn new(store: &'a ParamStore, trainable: bool) -> Self {
        Binder {
            store,
            leaves: RefCell::new(vec![None; store.len()]),
            trainable,
        }
    }

    pub fn leaf(&self, id: ParamId) -> Tensor {
        let mut leaves = self.leaves.borrow_mut();
        if let Some(t) = &leaves[id.0] {
            return t.clone();
        }
        let e = self.store.entry(id);
        let t = if self.trainable {
            Tensor::leaf(e.rows, e.cols, e.data.clone())
        } else {
            Tensor::constant(e.rows, e.cols, e.data.clone())
        };
        leaves[id.0] = Some(t.clone());
        t
    }

    /// Gradient accumulated on a bound leaf, if any.
    pub fn grad(&self, id: ParamId) -> Option<Vec<f64>> {
        self.leaves.borrow()[id.0].as_ref().and_then(|t| t.grad())
    }

    /// All gradients, indexed like the store.
    pub fn grads(&self) -> Vec<Option<Vec<f64>>> {
        self.leaves
            .borrow()
            .iter()
            .map(|l| l.as_ref().and_then(|t| t.grad()))
            .collect()
    }
}
