//! Dense `f64` tensors with reverse-mode differentiation.
//!
//! The op set is exactly what the encoder needs: matrix products, row-bias
//! addition, softmax, layer normalization, GELU, tanh, embedding gather,
//! cross-entropy, dropout and column slicing for attention heads. Each
//! primitive's backward rule is checked against central differences in this
//! module's tests.

mod gradcheck;
mod graph;
mod params;
pub mod serialize;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, ParamCheck};
pub use graph::{gelu, Graph, Var, GELU_CUBIC, GELU_SQRT_2_OVER_PI, MASKED_SCORE};
pub use params::{Gradients, Param, ParamId, ParamStore};
pub use tensor::Tensor;

use rand::Rng;
use rand_distr::StandardNormal;

/// Normal(0, std) truncated to two standard deviations.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let z: f64 = rng.sample(StandardNormal);
            if z.abs() <= 2.0 {
                break z * std;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape product")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Reduce an arbitrary-shaped output to a scalar with fixed random
    /// weights, so that every output element's gradient is exercised.
    fn weighted_sum(g: &mut Graph, out: Var, seed: u64) -> Var {
        let shape = g.shape(out).to_vec();
        if shape.is_empty() {
            return out;
        }
        let n: usize = shape.iter().product();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat_cols = *shape.last().unwrap_or(&1);
        let rows = n / flat_cols.max(1);
        let w = Tensor::matrix(rows, flat_cols, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let w = g.constant(w);
        // sum_ij out_ij * w_ij = trace(out · wᵀ) computed as a cross-entropy-free
        // reduction: flatten both to 1×n and take a 1×1 product.
        let out_flat = reshape_row(g, out);
        let w_flat = reshape_row(g, w);
        g.matmul_t(out_flat, w_flat).unwrap()
    }

    fn reshape_row(g: &mut Graph, v: Var) -> Var {
        // Concatenate rows into a single 1×n row.
        let t = g.value(v).clone();
        let rows = t.rows();
        if rows == 1 && t.rank() == 2 {
            return v;
        }
        let parts: Vec<Var> = (0..rows)
            .map(|r| g.gather(v, &[r]).unwrap())
            .collect();
        g.concat_cols(&parts).unwrap()
    }

    fn check<F>(shapes: &[&[usize]], seed: u64, build: F)
    where
        F: Fn(&mut Graph, &[Var]) -> Var,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let ids: Vec<ParamId> = shapes
            .iter()
            .enumerate()
            .map(|(i, s)| store.add(format!("p{i}"), rand_tensor(&mut rng, s), true).unwrap())
            .collect();
        let objective = |p: &ParamStore, want: bool| {
            let mut g = Graph::new(p);
            let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
            let out = build(&mut g, &vars);
            let loss = weighted_sum(&mut g, out, seed ^ 0x5eed);
            let l = g.value(loss).item();
            Ok((l, if want { Some(g.backward(loss)?) } else { None }))
        };
        let report = grad_check(&store, objective, 1e-5, 1e-6).unwrap();
        assert!(report.passed(), "grad check failed:\n{report}");
    }

    #[test]
    fn matmul_grad() {
        check(&[&[3, 4], &[4, 2]], 1, |g, v| g.matmul(v[0], v[1]).unwrap());
        check(&[&[3, 4], &[5, 4]], 2, |g, v| g.matmul_t(v[0], v[1]).unwrap());
    }

    #[test]
    fn add_scale_bias_grad() {
        check(&[&[2, 3], &[2, 3]], 3, |g, v| {
            let s = g.add(v[0], v[1]).unwrap();
            g.scale(s, -1.7)
        });
        check(&[&[4, 3], &[3]], 4, |g, v| g.add_row(v[0], v[1]).unwrap());
    }

    #[test]
    fn softmax_grad() {
        check(&[&[3, 5]], 5, |g, v| g.softmax(v[0]));
    }

    #[test]
    fn layer_norm_grad() {
        for seed in 6..9 {
            check(&[&[3, 6], &[6], &[6]], seed, |g, v| g.layer_norm(v[0], v[1], v[2], 1e-12).unwrap());
        }
    }

    #[test]
    fn activations_grad() {
        check(&[&[2, 7]], 10, |g, v| g.gelu(v[0]));
        check(&[&[2, 7]], 11, |g, v| g.tanh(v[0]));
    }

    #[test]
    fn gather_grad_with_repeats() {
        check(&[&[5, 3]], 12, |g, v| g.gather(v[0], &[4, 0, 4, 2]).unwrap());
    }

    #[test]
    fn cross_entropy_grad() {
        check(&[&[4, 6]], 13, |g, v| g.cross_entropy(v[0], &[0, 5, 2, 2]).unwrap());
    }

    #[test]
    fn slice_concat_grad() {
        check(&[&[3, 6]], 14, |g, v| {
            let a = g.slice_cols(v[0], 0, 2).unwrap();
            let b = g.slice_cols(v[0], 3, 3).unwrap();
            g.concat_cols(&[b, a]).unwrap()
        });
    }

    #[test]
    fn dropout_grad_with_fixed_mask() {
        check(&[&[3, 4]], 15, |g, v| {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            g.dropout(v[0], 0.3, &mut rng)
        });
    }

    #[test]
    fn faulty_backward_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut store = ParamStore::new();
        let id = store.add("x", rand_tensor(&mut rng, &[2, 3]), true).unwrap();
        let objective = |p: &ParamStore, want: bool| {
            let mut g = Graph::new(p);
            let x = g.param(id);
            let y = g.faulty_tanh(x);
            let loss = weighted_sum(&mut g, y, 1);
            let l = g.value(loss).item();
            Ok((l, if want { Some(g.backward(loss)?) } else { None }))
        };
        let report = grad_check(&store, objective, 1e-5, 1e-4).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures().count(), 1);
    }

    #[test]
    fn linear_function_is_exact() {
        let mut store = ParamStore::new();
        let id = store
            .add("w", Tensor::matrix(1, 3, vec![0.3, -1.0, 2.0]).unwrap(), true)
            .unwrap();
        let objective = |p: &ParamStore, want: bool| {
            let mut g = Graph::new(p);
            let w = g.param(id);
            let x = g.constant(Tensor::matrix(1, 3, vec![1.5, 2.0, -0.25]).unwrap());
            let y = g.matmul_t(w, x).unwrap();
            let l = g.value(y).item();
            Ok((l, if want { Some(g.backward(y)?) } else { None }))
        };
        let report = grad_check(&store, objective, 1e-5, 1e-8).unwrap();
        assert!(report.passed(), "{report}");
        assert!(report.params[0].max_rel_err < 1e-9);
    }

    #[test]
    fn square_derivative() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::matrix(1, 1, vec![3.0]).unwrap(), true).unwrap();
        let mut g = Graph::new(&store);
        let x = g.param(id);
        let y = g.matmul(x, x).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(id).unwrap().data(), &[6.0]);
    }

    #[test]
    fn softmax_cross_entropy_gradient_is_probs_minus_onehot() {
        let mut store = ParamStore::new();
        let logits = Tensor::matrix(1, 3, vec![0.2, -1.0, 0.7]).unwrap();
        let id = store.add("z", logits.clone(), true).unwrap();
        let mut g = Graph::new(&store);
        let z = g.param(id);
        let loss = g.cross_entropy(z, &[2]).unwrap();
        let grads = g.backward(loss).unwrap();
        let mut probs = logits.data().to_vec();
        graph::softmax_in_place(&mut probs);
        probs[2] -= 1.0;
        for (a, b) in grads.get(id).unwrap().data().iter().zip(&probs) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_forms() {
        let mut g = Graph::detached();
        let z = g.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        let s = g.softmax(z);
        assert_eq!(g.value(s).data(), &[0.5, 0.5]);

        let x = g.constant(Tensor::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap());
        let i = g.constant(Tensor::identity(2));
        let y = g.matmul(i, x).unwrap();
        assert_eq!(g.value(y), g.value(x));

        for v in [2usize, 7, 50] {
            let u = g.constant(Tensor::zeros(&[3, v]));
            let ce = g.cross_entropy(u, &[0, 1, v - 1]).unwrap();
            assert!((g.value(ce).item() - (v as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let x = rand_tensor(&mut rng, &[3, 5]);
            let c = rng.gen_range(-50.0..50.0);
            let shifted = Tensor::new(x.shape().to_vec(), x.data().iter().map(|v| v + c).collect()).unwrap();
            let mut g = Graph::detached();
            let a = g.constant(x);
            let b = g.constant(shifted);
            let sa = g.softmax(a);
            let sb = g.softmax(b);
            assert!(g.value(sa).max_abs_diff(g.value(sb)) < 1e-12);
            for r in 0..3 {
                let s: f64 = g.value(sa).row(r).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_norm_standardizes_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let mut g = Graph::detached();
        let x = g.constant(rand_tensor(&mut rng, &[4, 16]));
        let gamma = g.constant(Tensor::full(&[16], 1.0));
        let beta = g.constant(Tensor::zeros(&[16]));
        let y = g.layer_norm(x, gamma, beta, 1e-12).unwrap();
        for r in 0..4 {
            let row = g.value(y).row(r);
            let mean = row.iter().sum::<f64>() / 16.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gather_gradient_lands_only_on_gathered_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut store = ParamStore::new();
        let id = store.add("t", rand_tensor(&mut rng, &[6, 2]), true).unwrap();
        let mut g = Graph::new(&store);
        let t = g.param(id);
        let rows = g.gather(t, &[1, 4, 1]).unwrap();
        let loss = g.cross_entropy(rows, &[0, 1, 1]).unwrap();
        let grads = g.backward(loss).unwrap();
        let gt = grads.get(id).unwrap();
        for r in 0..6 {
            let nonzero = gt.row(r).iter().any(|v| *v != 0.0);
            assert_eq!(nonzero, r == 1 || r == 4, "row {r}");
        }
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut g = Graph::detached();
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let b = g.constant(Tensor::zeros(&[2, 3]));
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul") && err.contains("[2, 3]"), "{err}");
        let c = g.constant(Tensor::zeros(&[3, 2]));
        assert!(g.add(a, c).is_err());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::zeros(&[2, 2]), true).unwrap();
        let mut g = Graph::new(&store);
        let x = g.param(id);
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn zero_rate_dropout_is_identity_and_draws_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let before = rng.clone().gen::<u64>();
        let mut g = Graph::detached();
        let x = g.constant(Tensor::zeros(&[2, 2]));
        let y = g.dropout(x, 0.0, &mut rng);
        assert_eq!(x, y);
        assert_eq!(rng.gen::<u64>(), before);
    }
}
