//! Central finite-difference checks of analytic gradients, run in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::ops::{Conv1dAttrs, OpKind, StftAttrs, WindowKind};
use crate::tensor::Tensor;

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-4;
/// Denominator floor of the relative error, so near-zero derivatives are
/// compared on an absolute scale of `REL_FLOOR · tolerance`.
pub const REL_FLOOR: f64 = 1e-3;

type Build = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>;

/// Inputs plus the function under test. `reference`, when set, is the
/// function whose finite differences the analytic gradient should match
/// (used for surrogate-gradient ops such as straight-through).
pub struct GradCase {
    pub inputs: Vec<Tensor<f64>>,
    pub build: Build,
    pub reference: Option<Build>,
}

impl GradCase {
    pub fn new(inputs: Vec<Tensor<f64>>, build: impl Fn(&mut Graph<f64>, &[Var]) -> Result<Var> + 'static) -> Self {
        Self {
            inputs,
            build: Box::new(build),
            reference: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub op: String,
    pub trials: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// No input required a gradient, so nothing was compared.
    pub vacuous: bool,
    pub failure: Option<String>,
}

fn weighted_sum(g: &Graph<f64>, out: Var, weights: &[f64]) -> f64 {
    g.value(out).iter().zip(weights).map(|(a, b)| a * b).sum()
}

fn eval(build: &Build, inputs: &[Tensor<f64>], weights: &[f64]) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t)).collect();
    let out = build(&mut g, &vars)?;
    Ok(weighted_sum(&g, out, weights))
}

/// Max relative error over every differentiable input element, or `None`
/// when no input requires a gradient.
pub fn check_case(case: &GradCase, rng: &mut impl Rng) -> Result<Option<f64>> {
    if !case.inputs.iter().any(Tensor::requires_grad) {
        return Ok(None);
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = case.inputs.iter().map(|t| g.leaf(t)).collect();
    let out = (case.build)(&mut g, &vars)?;
    let weights: Vec<f64> = (0..g.value(out).len()).map(|_| rng.sample(StandardNormal)).collect();
    let w = g.constant(g.shape(out).to_vec(), weights.clone())?;
    let prod = g.mul(out, w)?;
    let loss = g.sum(prod);
    g.backward(loss)?;

    let reference = case.reference.as_ref().unwrap_or(&case.build);
    let mut worst = 0.0f64;
    let mut inputs = case.inputs.clone();
    for (i, &v) in vars.iter().enumerate() {
        if !case.inputs[i].requires_grad() {
            continue;
        }
        let analytic = g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        for j in 0..inputs[i].numel() {
            let x0 = inputs[i].data()[j];
            inputs[i].data_mut()[j] = x0 + FD_STEP;
            let up = eval(reference, &inputs, &weights)?;
            inputs[i].data_mut()[j] = x0 - FD_STEP;
            let down = eval(reference, &inputs, &weights)?;
            inputs[i].data_mut()[j] = x0;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let denom = analytic[j].abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max((analytic[j] - numeric).abs() / denom);
        }
    }
    Ok(Some(worst))
}

fn randn(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| scale * rng.sample::<f64, _>(StandardNormal)).with_grad(true)
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi)).with_grad(true)
}

/// A random small instance of `kind`.
pub fn random_case(kind: OpKind, rng: &mut ChaCha8Rng) -> GradCase {
    match kind {
        OpKind::Add => GradCase::new(vec![randn(rng, &[3, 4], 1.0), randn(rng, &[3, 4], 1.0)], |g, v| g.add(v[0], v[1])),
        OpKind::Sub => GradCase::new(vec![randn(rng, &[3, 4], 1.0), randn(rng, &[3, 4], 1.0)], |g, v| g.sub(v[0], v[1])),
        OpKind::Mul => GradCase::new(vec![randn(rng, &[3, 4], 1.0), randn(rng, &[3, 4], 1.0)], |g, v| g.mul(v[0], v[1])),
        OpKind::Scale => {
            let c: f64 = rng.random_range(-2.0..2.0);
            GradCase::new(vec![randn(rng, &[5], 1.0)], move |g, v| Ok(g.scale(v[0], c)))
        }
        OpKind::AddBias => GradCase::new(vec![randn(rng, &[3, 4], 1.0), randn(rng, &[4], 1.0)], |g, v| g.add_bias(v[0], v[1])),
        OpKind::Sqr => GradCase::new(vec![randn(rng, &[6], 1.0)], |g, v| Ok(g.sqr(v[0]))),
        OpKind::Sqrt => GradCase::new(vec![uniform(rng, &[6], 0.5, 2.0)], |g, v| Ok(g.sqrt(v[0]))),
        OpKind::Log => GradCase::new(vec![uniform(rng, &[6], 0.2, 3.0)], |g, v| Ok(g.log(v[0], 1e-5))),
        OpKind::Gelu => GradCase::new(vec![randn(rng, &[8], 2.0)], |g, v| Ok(g.gelu(v[0]))),
        OpKind::Dropout => {
            let seed: u64 = rng.random();
            GradCase::new(vec![randn(rng, &[10], 1.0)], move |g, v| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                g.dropout(v[0], 0.3, &mut r)
            })
        }
        OpKind::MatMul => GradCase::new(vec![randn(rng, &[3, 4], 1.0), randn(rng, &[4, 5], 1.0)], |g, v| g.matmul(v[0], v[1])),
        OpKind::BatchMatMul => {
            let tb: bool = rng.random();
            let b_shape = if tb { [2, 5, 4] } else { [2, 4, 5] };
            GradCase::new(vec![randn(rng, &[2, 3, 4], 1.0), randn(rng, &b_shape, 1.0)], move |g, v| {
                g.batch_matmul(v[0], v[1], tb)
            })
        }
        OpKind::Conv1d => {
            let attrs = Conv1dAttrs::new(rng.random_range(1..=2), rng.random_range(0..=2)).dilated(rng.random_range(1..=2));
            GradCase::new(
                vec![randn(rng, &[2, 3, 9], 1.0), randn(rng, &[4, 3, 3], 0.5), randn(rng, &[4], 0.5)],
                move |g, v| g.conv1d(v[0], v[1], Some(v[2]), attrs),
            )
        }
        OpKind::ConvTranspose1d => {
            let stride = rng.random_range(1..=3);
            let attrs = Conv1dAttrs::new(stride, rng.random_range(0..=1));
            GradCase::new(
                vec![randn(rng, &[2, 3, 5], 1.0), randn(rng, &[3, 2, 4], 0.5), randn(rng, &[2], 0.5)],
                move |g, v| g.conv_transpose1d(v[0], v[1], Some(v[2]), attrs),
            )
        }
        OpKind::LayerNorm => GradCase::new(
            vec![randn(rng, &[3, 6], 1.0), randn(rng, &[6], 1.0), randn(rng, &[6], 1.0)],
            |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5),
        ),
        OpKind::Softmax => GradCase::new(vec![randn(rng, &[3, 5], 1.0)], |g, v| Ok(g.softmax(v[0]))),
        OpKind::CausalMask => GradCase::new(vec![randn(rng, &[2, 4, 4], 1.0)], |g, v| {
            let m = g.causal_mask(v[0])?;
            Ok(g.softmax(m))
        }),
        OpKind::Embedding => {
            let ids: Vec<usize> = (0..5).map(|_| rng.random_range(0..6)).collect();
            GradCase::new(vec![randn(rng, &[6, 3], 1.0)], move |g, v| g.embedding(v[0], &ids))
        }
        OpKind::Reshape => GradCase::new(vec![randn(rng, &[2, 6], 1.0)], |g, v| g.reshape(v[0], &[3, 4])),
        OpKind::Permute => GradCase::new(vec![randn(rng, &[2, 3, 4], 1.0)], |g, v| g.permute(v[0], &[2, 0, 1])),
        OpKind::Sum => GradCase::new(vec![randn(rng, &[7], 1.0)], |g, v| Ok(g.sum(v[0]))),
        OpKind::Mean => GradCase::new(vec![randn(rng, &[7], 1.0)], |g, v| Ok(g.mean(v[0]))),
        OpKind::CrossEntropy => {
            let mut targets: Vec<Option<usize>> = (0..4).map(|_| Some(rng.random_range(0..5))).collect();
            targets[rng.random_range(0..4)] = None;
            GradCase::new(vec![randn(rng, &[4, 6], 1.5)], move |g, v| g.cross_entropy(v[0], &targets, 5))
        }
        OpKind::L1 => {
            let a = randn(rng, &[10], 1.0);
            // keep every |a − b| well away from the kink at zero
            let b = Tensor::from_fn(vec![10], |i| {
                let d: f64 = rng.random_range(0.05..1.0);
                a.data()[i] + if rng.random::<bool>() { d } else { -d }
            })
            .with_grad(true);
            GradCase::new(vec![a, b], |g, v| g.l1(v[0], v[1]))
        }
        OpKind::StftMagnitude => {
            let window = if rng.random::<bool>() { WindowKind::Hann } else { WindowKind::Rectangular };
            let attrs = StftAttrs {
                window,
                ..StftAttrs::new(16, rng.random_range(4..=16))
            };
            GradCase::new(vec![randn(rng, &[2, 40], 1.0)], move |g, v| g.stft_magnitude(v[0], attrs))
        }
        OpKind::StraightThrough => {
            let replacement: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            let mut case = GradCase::new(vec![randn(rng, &[6], 1.0)], move |g, v| {
                g.straight_through(v[0], replacement.clone())
            });
            // the surrogate Jacobian is the identity
            case.reference = Some(Box::new(|g, v| Ok(g.scale(v[0], 1.0))));
            case
        }
    }
}

/// Runs `trials` random instances of `kind`; failures are reported, not raised.
pub fn check_gradients(kind: OpKind, trials: usize, tolerance: f64, seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(kind as u64 + 1);
    let mut report = GradCheckReport {
        op: kind.name().to_string(),
        trials,
        max_rel_error: 0.0,
        tolerance,
        passed: true,
        vacuous: false,
        failure: None,
    };
    for _ in 0..trials {
        let case = random_case(kind, &mut rng);
        match check_case(&case, &mut rng) {
            Ok(Some(e)) => report.max_rel_error = report.max_rel_error.max(e),
            Ok(None) => report.vacuous = true,
            Err(e) => {
                report.failure = Some(e.to_string());
                report.passed = false;
            }
        }
    }
    report.passed &= report.max_rel_error < tolerance;
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_inputs_are_a_vacuous_pass() {
        let case = GradCase::new(vec![Tensor::<f64>::from_fn(vec![3], |i| i as f64)], |g, v| Ok(g.gelu(v[0])));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(check_case(&case, &mut rng).unwrap(), None);
    }

    #[test]
    fn wrong_gradient_is_caught() {
        // straight-through without its surrogate reference: the analytic
        // identity gradient disagrees with the true (zero) derivative.
        let mut case = random_case(OpKind::StraightThrough, &mut ChaCha8Rng::seed_from_u64(3));
        case.reference = None;
        let e = check_case(&case, &mut ChaCha8Rng::seed_from_u64(4)).unwrap().unwrap();
        assert!(e > 0.5);
    }

    #[test]
    fn report_is_deterministic() {
        let a = check_gradients(OpKind::Conv1d, 3, 1e-3, 11);
        let b = check_gradients(OpKind::Conv1d, 3, 1e-3, 11);
        assert_eq!(a, b);
    }
}
