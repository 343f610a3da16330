//! Small parameterized building blocks shared by the model modules.

use rand::Rng;

use super::param::{Binder, Init, ParamId, ParamStore};
use super::tensor::Tensor;

/// Affine map `x W + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let w = store.register(&format!("{name}.w"), in_dim, out_dim, Init::XavierUniform, rng);
        let b = bias.then(|| store.register(&format!("{name}.b"), 1, out_dim, Init::Zeros, rng));
        Linear { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, binder: &Binder, x: &Tensor) -> Tensor {
        let y = x.matmul(&binder.leaf(self.w));
        match self.b {
            Some(b) => y.add(&binder.leaf(b)),
            None => y,
        }
    }
}

/// Two-layer perceptron with a ReLU between the layers.
#[derive(Debug, Clone)]
pub struct Perceptron2 {
    pub l1: Linear,
    pub l2: Linear,
}

impl Perceptron2 {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        Perceptron2 {
            l1: Linear::new(store, &format!("{name}.l1"), in_dim, hidden, true, rng),
            l2: Linear::new(store, &format!("{name}.l2"), hidden, out_dim, true, rng),
        }
    }

    pub fn forward(&self, binder: &Binder, x: &Tensor) -> Tensor {
        self.l2.forward(binder, &self.l1.forward(binder, x).relu())
    }
}

/// Layer normalization over the last dimension with learned gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, rng: &mut R) -> Self {
        LayerNorm {
            gain: store.register(&format!("{name}.gain"), 1, dim, Init::Const(1.0), rng),
            bias: store.register(&format!("{name}.bias"), 1, dim, Init::Zeros, rng),
            eps: 1e-5,
        }
    }

    pub fn forward(&self, binder: &Binder, x: &Tensor) -> Tensor {
        x.layer_norm_rows(self.eps)
            .mul(&binder.leaf(self.gain))
            .add(&binder.leaf(self.bias))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn layer_norm_affine_override() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        let ln = LayerNorm::new(&mut s, "ln", 4, &mut rng);
        // gain 0, bias 5 -> all 5 regardless of input
        s.entry_mut(ln.gain).data = vec![0.0; 4];
        s.entry_mut(ln.bias).data = vec![5.0; 4];
        let b = Binder::new(&s, false);
        let x = Tensor::constant(2, 4, vec![3.0, -1.0, 2.0, 0.5, 9.0, 9.0, 1.0, 4.0]);
        for v in ln.forward(&b, &x).data() {
            assert!((v - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_shapes() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        let l = Linear::new(&mut s, "lin", 3, 5, true, &mut rng);
        let b = Binder::new(&s, false);
        let y = l.forward(&b, &Tensor::zeros(2, 3));
        assert_eq!(y.shape(), (2, 5));
    }
}
