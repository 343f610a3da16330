//! Central finite-difference verification of analytic gradients.

use std::fmt;

use crate::error::{Error, Result};

use super::param::{Binder, ParamStore};
use super::tensor::Tensor;

/// Default perturbation step for central differences in 64-bit.
pub const DEFAULT_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Per-parameter max relative error `(name, err)`.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} max_rel_err={:.3e} tolerance={:.1e}",
            if self.pass() { "PASS" } else { "FAIL" },
            self.max_rel_err,
            self.tolerance
        )?;
        for (name, err) in &self.per_param {
            writeln!(f, "  {name}: {err:.3e}")?;
        }
        Ok(())
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compare analytic gradients of `f` against central differences for every
/// scalar in `store`. `f` must be deterministic (dropout off); this is
/// verified by running the forward pass twice before checking.
pub fn grad_check<F>(
    store: &mut ParamStore,
    tolerance: f64,
    step: f64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&Binder) -> Result<Tensor>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let binder = Binder::new(store, false);
        Ok(f(&binder)?.item())
    };
    let l1 = eval(store)?;
    let l2 = eval(store)?;
    if l1.to_bits() != l2.to_bits() {
        return Err(Error::Contract(
            "grad_check requires a deterministic forward pass (nondeterministic results observed)"
                .into(),
        ));
    }

    let analytic: Vec<Option<Vec<f64>>> = {
        let binder = Binder::new(store, true);
        let loss = f(&binder)?;
        loss.backward()?;
        binder.grads()
    };

    let mut per_param = Vec::with_capacity(store.len());
    let mut max_err: f64 = 0.0;
    for idx in 0..store.len() {
        let (name, n_vals) = {
            let e = &store.iter().nth(idx).unwrap().1;
            (e.name.clone(), e.data.len())
        };
        let zeros;
        let a = match &analytic[idx] {
            Some(g) => g,
            None => {
                zeros = vec![0.0; n_vals];
                &zeros
            }
        };
        let mut worst: f64 = 0.0;
        for k in 0..n_vals {
            let orig = store.iter().nth(idx).unwrap().1.data[k];
            set_at(store, idx, k, orig + step);
            let lp = eval(store)?;
            set_at(store, idx, k, orig - step);
            let lm = eval(store)?;
            set_at(store, idx, k, orig);
            let numeric = (lp - lm) / (2.0 * step);
            worst = worst.max(rel_err(a[k], numeric));
        }
        max_err = max_err.max(worst);
        per_param.push((name, worst));
    }
    Ok(GradCheckReport {
        per_param,
        max_rel_err: max_err,
        tolerance,
    })
}

fn set_at(store: &mut ParamStore, idx: usize, k: usize, v: f64) {
    let id = store.iter().nth(idx).unwrap().0;
    store.entry_mut(id).data[k] = v;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::layers::Linear;
    use crate::numeric::param::{Init, ParamStore};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn linear_layer_passes_at_1e4() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "lin", 3, 2, true, &mut rng);
        let x = Tensor::randn(4, 3, 1.0, &mut rng);
        let report = grad_check(&mut store, 1e-4, DEFAULT_STEP, |b| {
            Ok(lin.forward(b, &x).powf(2.0).sum())
        })
        .unwrap();
        assert!(report.pass(), "{report}");
    }

    #[test]
    fn softmax_cross_entropy_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let w = store.register("logits", 1, 5, Init::Normal(1.0), &mut rng);
        let report = grad_check(&mut store, 1e-3, DEFAULT_STEP, |b| {
            let ls = b.leaf(w).log_softmax_rows();
            Ok(ls.slice_cols(2, 3).neg().sum())
        })
        .unwrap();
        assert!(report.pass(), "{report}");
    }

    #[test]
    fn nondeterministic_fragment_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        store.register("w", 1, 2, Init::Const(1.0), &mut rng);
        let err = grad_check(&mut store, 1e-3, DEFAULT_STEP, |_| {
            let mut trng = rand::thread_rng();
            let x = Tensor::randn(1, 2, 1.0, &mut trng);
            Ok(x.sum())
        })
        .unwrap_err();
        assert!(err.to_string().contains("deterministic"), "{err}");
    }

    #[test]
    fn all_core_ops_pass_gradcheck() {
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let mut store = ParamStore::new();
        let a = store.register("a", 3, 4, Init::Normal(0.8), &mut rng);
        let b2 = store.register("b", 4, 3, Init::Normal(0.8), &mut rng);
        let report = grad_check(&mut store, 1e-3, DEFAULT_STEP, |bind| {
            let a = bind.leaf(a);
            let b = bind.leaf(b2);
            let m = a.matmul(&b); // 3x3
            let s = m.softmax_rows();
            let l = m.sigmoid().add_scalar(1.0).ln();
            let n = m.layer_norm_rows(1e-5);
            let mixed = s
                .add(&l)
                .mul(&n.exp().clamp(0.2, 4.0))
                .sub(&m.leaky_relu(0.1))
                .div(&m.powf(2.0).add_scalar(1.0).sqrt());
            let t = mixed.transpose().sum_axis(0).sum_axis(1);
            Ok(t.add(&m.relu().mean()).sum())
        })
        .unwrap();
        assert!(report.pass(), "{report}");
    }
}
