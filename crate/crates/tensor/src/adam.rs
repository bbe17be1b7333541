use crate::error::{Result, TensorError};
use crate::params::ParamSet;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter moment estimates plus the shared step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T: Real = f32> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>, cfg: AdamConfig) -> Self {
        let zeros = || params.iter().map(|(_, t)| vec![T::zero(); t.numel()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        }
    }
}

/// One bias-corrected Adam update. Gradients are zeroed afterwards.
/// Parameters with `requires_grad == false` are left untouched.
pub fn adam_step<T: Real>(params: &mut ParamSet<T>, state: &mut AdamState<T>) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(TensorError::Invalid(format!(
            "adam: state tracks {} parameters, set has {}",
            state.m.len(),
            params.len()
        )));
    }
    for (i, (name, p)) in params.iter().enumerate() {
        if p.requires_grad() && p.grad().is_none() {
            return Err(TensorError::MissingGrad(name.to_string()));
        }
        if state.m[i].len() != p.numel() {
            return Err(TensorError::Invalid(format!("adam: state for `{name}` has the wrong length")));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::of(state.beta1), T::of(state.beta2));
    let c1 = T::of(1.0 - state.beta1.powi(t));
    let c2 = T::of(1.0 - state.beta2.powi(t));
    let (lr, eps) = (T::of(state.lr), T::of(state.eps));
    for (i, (_, p)) in params.iter_mut().enumerate() {
        if !p.requires_grad() {
            continue;
        }
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let (data, grad) = p.parts_mut();
        let grad = grad.expect("checked above");
        for j in 0..data.len() {
            let gj = grad[j];
            m[j] = b1 * m[j] + (T::one() - b1) * gj;
            v[j] = b2 * v[j] + (T::one() - b2) * gj * gj;
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            data[j] = data[j] - lr * mhat / (vhat.sqrt() + eps);
            grad[j] = T::zero();
        }
    }
    Ok(())
}

/// Learning-rate schedule applied on top of the base rate.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear warm-up to the base rate, then decay proportional to `1/sqrt(step)`.
    InverseSqrt { warmup: u64 },
}

impl LrSchedule {
    /// Rate for the 1-based `step`.
    pub fn lr_at(self, base: f64, step: u64) -> f64 {
        let s = step.max(1) as f64;
        match self {
            LrSchedule::Constant => base,
            LrSchedule::InverseSqrt { warmup } => {
                let w = warmup.max(1) as f64;
                if s < w {
                    base * s / w
                } else {
                    base * (w / s).sqrt()
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    fn single(theta: f64, grad: f64) -> ParamSet<f64> {
        let mut ps = ParamSet::new();
        let id = ps.add("theta", Tensor::scalar(theta));
        ps.get_mut(id).accumulate_grad(&[grad]).unwrap();
        ps
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = single(0.7, 0.0);
        let mut st = AdamState::new(&ps, AdamConfig::default());
        adam_step(&mut ps, &mut st).unwrap();
        assert_eq!(ps.iter().next().unwrap().1.data(), &[0.7]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut ps = single(1.0, 1.0);
        let mut st = AdamState::new(&ps, AdamConfig::default());
        adam_step(&mut ps, &mut st).unwrap();
        // mhat = 1, vhat = 1 → Δ = lr / (1 + eps)
        let want = 1.0 - 3e-4 / (1.0 + 1e-8);
        let got = ps.iter().next().unwrap().1.data()[0];
        assert!((got - want).abs() < 1e-15);
        assert_eq!(ps.iter().next().unwrap().1.grad(), Some(&[0.0][..]));
    }

    #[test]
    fn two_steps_match_hand_computation() {
        let (g, lr, b1, b2, eps) = (0.5f64, 3e-4, 0.9f64, 0.999f64, 1e-8);
        let mut theta = 1.0f64;
        let (mut m, mut v) = (0.0, 0.0);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            theta -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        let mut ps = single(1.0, g);
        let id = ps.ids().next().unwrap();
        let mut st = AdamState::new(&ps, AdamConfig::default());
        adam_step(&mut ps, &mut st).unwrap();
        ps.get_mut(id).accumulate_grad(&[g]).unwrap();
        adam_step(&mut ps, &mut st).unwrap();
        assert!((ps.get(id).data()[0] - theta).abs() < 1e-10);
        assert_eq!(st.t, 2);
    }

    #[test]
    fn missing_grad_names_parameter() {
        let mut ps = ParamSet::<f32>::new();
        ps.add("decoder.w", Tensor::scalar(1.0));
        let mut st = AdamState::new(&ps, AdamConfig::default());
        let err = adam_step(&mut ps, &mut st).unwrap_err();
        assert_eq!(err, TensorError::MissingGrad("decoder.w".into()));
    }

    #[test]
    fn inverse_sqrt_schedule_peaks_at_warmup() {
        let s = LrSchedule::InverseSqrt { warmup: 100 };
        assert!((s.lr_at(1.0, 50) - 0.5).abs() < 1e-12);
        assert!((s.lr_at(1.0, 100) - 1.0).abs() < 1e-12);
        assert!((s.lr_at(1.0, 400) - 0.5).abs() < 1e-12);
    }
}
