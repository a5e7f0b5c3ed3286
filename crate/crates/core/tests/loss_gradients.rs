mod common;

use common::{direct_loss, fd_relative_error, gaussian, random_batch};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlalign::realignment::data::{mat_vec, random_orthogonal};
use xlalign::realignment::{contrastive_loss, contrastive_loss_grad, task_loss_grad, RealignBatch, ToyTaskHead};

#[test]
fn gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let worst = (0..100)
        .map(|_| fd_relative_error(&random_batch(&mut rng), 1e-4))
        .fold(0.0, f64::max);
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn four_vector_batch_against_direct_sum() {
    let b = RealignBatch::new(
        vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]],
        vec![(0, 1), (2, 3)],
    );
    let l = contrastive_loss(&b).unwrap();
    assert!((l - direct_loss(&b)).abs() < 1e-12);
    assert!((l - 9.0796e-5).abs() < 1e-9);
}

#[test]
fn task_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (k, d, n) = (rng.random_range(2..6), rng.random_range(1..8), rng.random_range(1..10));
        let mut head = ToyTaskHead::zeros(k, d);
        head.weights = gaussian(&mut rng, k * d);
        head.bias = gaussian(&mut rng, k);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut rng, d)).collect();
        let ys: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let g = task_loss_grad(&head, &xs, &ys).unwrap();
        let loss = |h: &ToyTaskHead, xs: &[Vec<f64>]| task_loss_grad(h, xs, &ys).unwrap().loss;
        let eps = 1e-5;
        for p in 0..k * d {
            let (mut a, mut b) = (head.clone(), head.clone());
            a.weights[p] += eps;
            b.weights[p] -= eps;
            let num = (loss(&a, &xs) - loss(&b, &xs)) / (2.0 * eps);
            assert!((num - g.d_weights[p]).abs() < 1e-7, "weight {p}");
        }
        for c in 0..k {
            let (mut a, mut b) = (head.clone(), head.clone());
            a.bias[c] += eps;
            b.bias[c] -= eps;
            let num = (loss(&a, &xs) - loss(&b, &xs)) / (2.0 * eps);
            assert!((num - g.d_bias[c]).abs() < 1e-7, "bias {c}");
        }
        for i in 0..n {
            for j in 0..d {
                let (mut a, mut b) = (xs.clone(), xs.clone());
                a[i][j] += eps;
                b[i][j] -= eps;
                let num = (loss(&head, &a) - loss(&head, &b)) / (2.0 * eps);
                assert!((num - g.d_inputs[i][j]).abs() < 1e-7, "input {i},{j}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn loss_properties(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_batch(&mut rng);
        let (loss, grads) = contrastive_loss_grad(&b).unwrap();
        prop_assert!(loss >= 0.0);
        prop_assert!((loss - direct_loss(&b)).abs() <= 1e-10 * loss.max(1.0));

        for (v, g) in b.vectors.iter().zip(&grads) {
            let dot: f64 = v.iter().zip(g).map(|(a, c)| a * c).sum();
            let scale = v.iter().map(|a| a * a).sum::<f64>().sqrt() * g.iter().map(|a| a * a).sum::<f64>().sqrt();
            prop_assert!(dot.abs() <= 1e-8 * scale.max(1.0), "dot {}", dot);
        }

        let mut rescaled = b.clone();
        for v in &mut rescaled.vectors {
            let s: f64 = rng.random_range(0.01..100.0);
            v.iter_mut().for_each(|x| *x *= s);
        }
        prop_assert!((contrastive_loss(&rescaled).unwrap() - loss).abs() < 1e-10);

        let dim = b.vectors[0].len();
        let q = random_orthogonal(dim, &mut rng);
        let mut rotated = b.clone();
        for v in &mut rotated.vectors {
            *v = mat_vec(&q, v);
        }
        prop_assert!((contrastive_loss(&rotated).unwrap() - loss).abs() < 1e-10);
    }

    #[test]
    fn singleton_batch_is_zero(a in prop::collection::vec(-5.0f64..5.0, 3), b in prop::collection::vec(-5.0f64..5.0, 3)) {
        prop_assume!(a.iter().any(|&x| x != 0.0) && b.iter().any(|&x| x != 0.0));
        let (l, g) = contrastive_loss_grad(&RealignBatch::new(vec![a, b], vec![(0, 1)])).unwrap();
        prop_assert_eq!(l, 0.0);
        prop_assert!(g.iter().flatten().all(|&x| x == 0.0));
    }
}
