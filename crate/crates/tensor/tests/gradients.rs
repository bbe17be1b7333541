use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soundlm_tensor::gradcheck::{check_case, GradCase};
use soundlm_tensor::{check_gradients, Conv1dAttrs, Graph, OpKind, Tensor, TensorError};

#[test]
fn every_primitive_matches_finite_differences() {
    for kind in OpKind::ALL {
        let r = check_gradients(kind, 10, 1e-3, 2024);
        assert!(r.passed, "{kind}: {r:?}");
        assert!(!r.vacuous);
    }
}

#[test]
fn sum_has_unit_gradient() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&Tensor::new(vec![3], vec![1.0, -2.0, 5.0]).unwrap().with_grad(true));
    let y = g.sum(x);
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);
}

#[test]
fn constant_root_gives_zero_gradient() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap().with_grad(true));
    let c = g.constant(vec![1], vec![4.0]).unwrap();
    let zero = g.scale(x, 0.0);
    let s = g.sum(zero);
    let y = g.add(s, c).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 0.0]);
}

#[test]
fn fan_out_accumulates() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&Tensor::scalar(3.0).with_grad(true));
    let y = g.add(x, x).unwrap();
    g.backward(y).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[2.0]);
}

#[test]
fn non_scalar_root_and_empty_graph_are_errors() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(&Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().with_grad(true));
    let y = g.sqr(x);
    assert_eq!(g.backward(y), Err(TensorError::NonScalarRoot(vec![2])));

    let mut g = Graph::<f64>::new();
    let c = g.constant(vec![2], vec![1.0, 2.0]).unwrap();
    let s = g.sum(c);
    assert_eq!(g.backward(s), Err(TensorError::EmptyGraph));
    assert_eq!(g.differentiable_len(), 0);
}

#[test]
fn l1_of_conv_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let x = Tensor::<f64>::from_fn(vec![1, 2, 16], |_| rng.random_range(-1.0..1.0)).with_grad(true);
        let k = Tensor::<f64>::from_fn(vec![3, 2, 5], |_| rng.random_range(-1.0..1.0)).with_grad(true);
        let target = Tensor::<f64>::from_fn(vec![1, 3, 7], |_| rng.random_range(-1.0..1.0));
        let case = GradCase::new(vec![x, k, target], |g, v| {
            let y = g.conv1d(v[0], v[1], None, Conv1dAttrs::new(2, 1))?;
            g.l1(y, v[2])
        });
        let err = check_case(&case, &mut rng).unwrap().unwrap();
        assert!(err < 1e-3, "{err}");
    }
}

fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0)).with_grad(true)
}

#[test]
fn strided_and_dilated_stack_matches_finite_differences() {
    // Down/up-sampling pair with the padding scheme used by the codec, plus a
    // dilated residual branch, over a batch of two.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (s, dil) in [(2usize, 1usize), (4, 3), (2, 9)] {
        let t = 4 * s * 3;
        let inputs = vec![
            randn(&mut rng, &[2, 2, t]),
            randn(&mut rng, &[3, 2, 2 * s]),
            randn(&mut rng, &[3]),
            randn(&mut rng, &[3, 3, 3]),
            randn(&mut rng, &[3, 2, 2 * s]),
            randn(&mut rng, &[2]),
        ];
        let case = GradCase::new(inputs, move |g, v| {
            let down = g.conv1d(v[0], v[1], Some(v[2]), Conv1dAttrs::new(s, s / 2))?;
            let a = g.gelu(down);
            let r = g.conv1d(a, v[3], None, Conv1dAttrs::new(1, dil).dilated(dil))?;
            let h = g.add(down, r)?;
            g.conv_transpose1d(h, v[4], Some(v[5]), Conv1dAttrs::new(s, s / 2))
        });
        let err = check_case(&case, &mut rng).unwrap().unwrap();
        assert!(err < 1e-3, "stride {s} dilation {dil}: {err}");
    }
}

#[test]
fn identical_runs_are_bit_identical() {
    let run = || {
        let mut g = Graph::<f32>::new();
        let x = g.leaf(&Tensor::from_fn(vec![2, 3, 20], |i| (i as f32 * 0.31).sin()).with_grad(true));
        let w = g.leaf(&Tensor::from_fn(vec![4, 3, 4], |i| (i as f32 * 0.17).cos()).with_grad(true));
        let y = g.conv1d(x, w, None, Conv1dAttrs::new(2, 1)).unwrap();
        let z = g.gelu(y);
        let s = g.mean(z);
        g.backward(s).unwrap();
        (g.value(z).to_vec(), g.grad(x).unwrap().to_vec(), g.grad(w).unwrap().to_vec())
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn conv_output_length_formula(t in 1usize..64, k in 1usize..8, stride in 1usize..5, pad in 0usize..4) {
        prop_assume!(t + 2 * pad >= k);
        let mut g = Graph::<f32>::new();
        let x = g.constant(vec![1, 1, t], vec![0.5; t]).unwrap();
        let w = g.constant(vec![1, 1, k], vec![1.0; k]).unwrap();
        let y = g.conv1d(x, w, None, Conv1dAttrs::new(stride, pad)).unwrap();
        prop_assert_eq!(g.shape(y)[2], (t + 2 * pad - k) / stride + 1);
    }
}
