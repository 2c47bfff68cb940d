mod common;

use common::{max_abs_diff, normal_vec, qp_projection};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sparsecomm::activations::{
    adaptive_sparse, project_simplex, sparsemax_backward, GateFn, GateWidths, IdentityGate, MonotoneGate,
};
use sparsecomm::tensor::ParamStore;

fn logits(seed: u64, d: usize) -> Vec<f64> {
    normal_vec(&mut ChaCha8Rng::seed_from_u64(seed), d, 3.0)
}

/// A gate with every parameter redrawn from N(0, 1), signs included.
fn random_gate(seed: u64) -> (ParamStore, MonotoneGate) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let gate = MonotoneGate::new(&mut store, "gate", GateWidths::default(), &mut rng);
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = store.value(id).len();
        store.value_mut(id).as_mut_slice().copy_from_slice(&normal_vec(&mut rng, n, 1.0));
    }
    (store, gate)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn projection_matches_qp_oracle(seed in any::<u64>(), d in 2usize..=8) {
        let z = logits(seed, d);
        let y = project_simplex(&z).unwrap();
        let oracle = qp_projection(&z);
        prop_assert!(max_abs_diff(y.weights(), &oracle) <= 1e-9, "z={z:?} y={:?} oracle={oracle:?}", y.weights());
        let total: f64 = y.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(y.weights().iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn projection_is_translation_invariant(seed in any::<u64>(), d in 1usize..=8, shift in -50.0f64..50.0) {
        let z = logits(seed, d);
        let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
        let a = project_simplex(&z).unwrap();
        let b = project_simplex(&shifted).unwrap();
        prop_assert!(max_abs_diff(a.weights(), b.weights()) <= 1e-12);
    }

    #[test]
    fn projection_backward_matches_finite_differences(seed in any::<u64>(), d in 2usize..=8) {
        let z = logits(seed, d);
        let up = normal_vec(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed), d, 1.0);
        let y = project_simplex(&z).unwrap();
        let grad = sparsemax_backward(&y, &up).unwrap();
        let h = 1e-6;
        let objective = |z: &[f64]| -> (f64, Vec<usize>) {
            let y = project_simplex(z).unwrap();
            (y.weights().iter().zip(&up).map(|(a, b)| a * b).sum(), y.support().to_vec())
        };
        for i in 0..d {
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let ((fp, sp), (fm, sm)) = (objective(&zp), objective(&zm));
            prop_assume!(sp == y.support() && sm == y.support());
            let fd = (fp - fm) / (2.0 * h);
            let scale = grad[i].abs().max(fd.abs()).max(1e-2);
            prop_assert!((grad[i] - fd).abs() / scale <= 1e-5, "entry {i}: {} vs {fd}", grad[i]);
        }
    }

    #[test]
    fn monotone_gate_preserves_strict_order(seed in any::<u64>(), d in 2usize..=8) {
        let (store, gate) = random_gate(seed);
        let z = logits(seed.wrapping_add(1), d);
        let out = gate.bind(&store).gate(&z).unwrap();
        for i in 0..d {
            for j in 0..d {
                if z[i] > z[j] {
                    prop_assert!(out[i] > out[j], "z[{i}]={} > z[{j}]={} but G gives {} <= {}", z[i], z[j], out[i], out[j]);
                }
            }
        }
    }

    #[test]
    fn gate_commutes_with_permutation(seed in any::<u64>(), d in 2usize..=8) {
        let (store, gate) = random_gate(seed);
        let z = logits(seed.wrapping_add(2), d);
        let mut perm: Vec<usize> = (0..d).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..d).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<f64> = perm.iter().map(|&p| z[p]).collect();
        let a = gate.bind(&store).gate(&z).unwrap();
        let b = gate.bind(&store).gate(&permuted).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            prop_assert!((b[k] - a[p]).abs() <= 1e-9 * a[p].abs().max(1.0));
        }
    }

    #[test]
    fn support_shrinks_as_gamma_grows(seed in any::<u64>(), d in 2usize..=8) {
        let z = logits(seed, d);
        let sizes: Vec<usize> = [0.01, 0.1, 1.0, 10.0, 1000.0]
            .iter()
            .map(|&g| adaptive_sparse(&z, &IdentityGate, g).unwrap().support_size())
            .collect();
        prop_assert!(sizes.windows(2).all(|w| w[1] <= w[0]), "{sizes:?}");
    }
}

#[test]
fn extreme_gamma_reaches_one_hot_and_uniform() {
    for seed in 0..100 {
        let z = logits(seed, 2 + (seed as usize) % 7);
        let d = z.len();
        let argmax = (0..d).max_by(|&a, &b| z[a].total_cmp(&z[b])).unwrap();
        let sharp = adaptive_sparse(&z, &IdentityGate, 1e3).unwrap();
        let mut one_hot = vec![0.0; d];
        one_hot[argmax] = 1.0;
        assert_eq!(sharp.weights(), &one_hot[..], "z={z:?}");

        let gamma = 1e-3;
        let flat = adaptive_sparse(&z, &IdentityGate, gamma).unwrap();
        assert_eq!(flat.support_size(), d);
        let mean = z.iter().sum::<f64>() / d as f64;
        for (w, v) in flat.weights().iter().zip(&z) {
            let expected = 1.0 / d as f64 + gamma * (v - mean);
            assert!((w - expected).abs() <= 1e-12, "z={z:?}");
        }
    }
}
