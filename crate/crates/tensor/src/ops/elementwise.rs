use crate::error::{shape_err, Result};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::real::Real;
use rand::Rng;

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

pub fn gelu<T: Real>(x: T) -> T {
    let c = T::of(SQRT_2_OVER_PI);
    let u = c * (x + T::of(GELU_C) * x * x * x);
    T::of(0.5) * x * (T::one() + u.tanh())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::of(SQRT_2_OVER_PI);
    let a = T::of(GELU_C);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + T::of(3.0) * a * x * x);
    T::of(0.5) * (T::one() + t) + T::of(0.5) * x * (T::one() - t * t) * du
}

impl<T: Real> Graph<T> {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return shape_err(
                op,
                format!("operand shapes differ: {:?} vs {:?}", self.shape(a), self.shape(b)),
            );
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Var {
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        self.push(shape, value, op, &[a, b])
    }

    fn map(&mut self, x: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        self.push(shape, value, op, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        self.map(x, |v| v * c, Op::Scale(x, c))
    }

    pub fn sqr(&mut self, x: Var) -> Var {
        self.map(x, |v| v * v, Op::Sqr(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.map(x, |v| v.sqrt(), Op::Sqrt(x))
    }

    /// `ln(x + eps)`.
    pub fn log(&mut self, x: Var, eps: T) -> Var {
        self.map(x, |v| (v + eps).ln(), Op::Log(x, eps))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.map(x, gelu, Op::Gelu(x))
    }

    /// Adds a 1-D `bias` along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap();
        if self.shape(bias) != [n] {
            return shape_err(
                "add_bias",
                format!("bias shape {:?} must be [{n}] for input {:?}", self.shape(bias), self.shape(x)),
            );
        }
        let b = self.value(bias);
        let value = self
            .value(x)
            .chunks_exact(n)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &c)| v + c))
            .collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, value, Op::AddBias(x, bias), &[x, bias]))
    }

    /// Inverted dropout: zeroes entries with probability `p`, rescales the rest.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut (impl Rng + ?Sized)) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(crate::TensorError::Attrs {
                op: "dropout",
                detail: format!("rate must lie in [0, 1), got {p}"),
            });
        }
        if p == 0.0 {
            return Ok(self.scale(x, T::one()));
        }
        let keep = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> = (0..self.value(x).len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let value = self.value(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, value, Op::Dropout(x, mask), &[x]))
    }
}

pub(crate) fn backward<T: Real>(op: &Op<T>, out: &[T], g: &[T], sink: &mut GradSink<'_, T>) {
    match op {
        Op::Add(a, b) => {
            sink.add(*a, g);
            sink.add(*b, g);
        }
        Op::Sub(a, b) => {
            sink.add(*a, g);
            if let Some(s) = sink.slot(*b) {
                s.iter_mut().zip(g).for_each(|(d, &v)| *d = *d - v);
            }
        }
        Op::Mul(a, b) => {
            let (va, vb) = (sink.value(*a), sink.value(*b));
            if let Some(s) = sink.slot(*a) {
                for ((d, &gi), &y) in s.iter_mut().zip(g).zip(vb) {
                    *d = *d + gi * y;
                }
            }
            if let Some(s) = sink.slot(*b) {
                for ((d, &gi), &x) in s.iter_mut().zip(g).zip(va) {
                    *d = *d + gi * x;
                }
            }
        }
        Op::Scale(x, c) => {
            if let Some(s) = sink.slot(*x) {
                s.iter_mut().zip(g).for_each(|(d, &v)| *d = *d + v * *c);
            }
        }
        Op::AddBias(x, bias) => {
            sink.add(*x, g);
            if let Some(s) = sink.slot(*bias) {
                let n = s.len();
                for row in g.chunks_exact(n) {
                    s.iter_mut().zip(row).for_each(|(d, &v)| *d = *d + v);
                }
            }
        }
        Op::Sqr(x) => {
            let vx = sink.value(*x);
            if let Some(s) = sink.slot(*x) {
                for ((d, &gi), &v) in s.iter_mut().zip(g).zip(vx) {
                    *d = *d + gi * T::of(2.0) * v;
                }
            }
        }
        Op::Sqrt(x) => {
            if let Some(s) = sink.slot(*x) {
                for ((d, &gi), &y) in s.iter_mut().zip(g).zip(out) {
                    *d = *d + gi / (T::of(2.0) * y);
                }
            }
        }
        Op::Log(x, eps) => {
            let vx = sink.value(*x);
            if let Some(s) = sink.slot(*x) {
                for ((d, &gi), &v) in s.iter_mut().zip(g).zip(vx) {
                    *d = *d + gi / (v + *eps);
                }
            }
        }
        Op::Gelu(x) => {
            let vx = sink.value(*x);
            if let Some(s) = sink.slot(*x) {
                for ((d, &gi), &v) in s.iter_mut().zip(g).zip(vx) {
                    *d = *d + gi * gelu_grad(v);
                }
            }
        }
        Op::Dropout(x, mask) => {
            if let Some(s) = sink.slot(*x) {
                for ((d, &gi), &m) in s.iter_mut().zip(g).zip(mask) {
                    *d = *d + gi * m;
                }
            }
        }
        _ => unreachable!("not an elementwise op"),
    }
}
