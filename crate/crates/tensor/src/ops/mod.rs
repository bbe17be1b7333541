//! The primitive set, with a name-based dispatcher for generic callers.

mod conv;
mod elementwise;
mod linalg;
mod nn;
mod shape;
mod spectral;

use std::fmt;
use std::str::FromStr;

pub use conv::Conv1dAttrs;
pub use elementwise::{gelu, gelu_grad};
pub(crate) use nn::softmax_row;
pub use spectral::{StftAttrs, WindowKind};

use crate::error::{Result, TensorError};
use crate::graph::{GradSink, Graph, Node, Op, Var};
use crate::real::Real;

pub(crate) fn backprop<T: Real>(node: &Node<T>, g: &[T], sink: &mut GradSink<'_, T>) {
    let out = &node.value;
    match &node.op {
        Op::Leaf | Op::Constant => {}
        op @ (Op::Add(..)
        | Op::Sub(..)
        | Op::Mul(..)
        | Op::Scale(..)
        | Op::AddBias(..)
        | Op::Sqr(..)
        | Op::Sqrt(..)
        | Op::Log(..)
        | Op::Gelu(..)
        | Op::Dropout(..)) => elementwise::backward(op, out, g, sink),
        op @ (Op::MatMul { .. } | Op::BatchMatMul { .. }) => linalg::backward(op, g, sink),
        op @ (Op::Conv1d { .. } | Op::ConvTranspose1d { .. }) => conv::backward(op, g, sink),
        op @ (Op::Reshape(..) | Op::Permute { .. }) => shape::backward(op, g, sink),
        op @ Op::StftMag { .. } => spectral::backward(op, out, g, sink),
        op => nn::backward(op, out, g, sink),
    }
}

/// Every registered primitive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Scale,
    AddBias,
    Sqr,
    Sqrt,
    Log,
    Gelu,
    Dropout,
    MatMul,
    BatchMatMul,
    Conv1d,
    ConvTranspose1d,
    LayerNorm,
    Softmax,
    CausalMask,
    Embedding,
    Reshape,
    Permute,
    Sum,
    Mean,
    CrossEntropy,
    L1,
    StftMagnitude,
    StraightThrough,
}

impl OpKind {
    pub const ALL: [OpKind; 26] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::AddBias,
        OpKind::Sqr,
        OpKind::Sqrt,
        OpKind::Log,
        OpKind::Gelu,
        OpKind::Dropout,
        OpKind::MatMul,
        OpKind::BatchMatMul,
        OpKind::Conv1d,
        OpKind::ConvTranspose1d,
        OpKind::LayerNorm,
        OpKind::Softmax,
        OpKind::CausalMask,
        OpKind::Embedding,
        OpKind::Reshape,
        OpKind::Permute,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::CrossEntropy,
        OpKind::L1,
        OpKind::StftMagnitude,
        OpKind::StraightThrough,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::AddBias => "add_bias",
            OpKind::Sqr => "sqr",
            OpKind::Sqrt => "sqrt",
            OpKind::Log => "log",
            OpKind::Gelu => "gelu",
            OpKind::Dropout => "dropout",
            OpKind::MatMul => "matmul",
            OpKind::BatchMatMul => "batch_matmul",
            OpKind::Conv1d => "conv1d",
            OpKind::ConvTranspose1d => "conv_transpose1d",
            OpKind::LayerNorm => "layer_norm",
            OpKind::Softmax => "softmax",
            OpKind::CausalMask => "causal_mask",
            OpKind::Embedding => "embedding",
            OpKind::Reshape => "reshape",
            OpKind::Permute => "permute",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::CrossEntropy => "cross_entropy",
            OpKind::L1 => "l1",
            OpKind::StftMagnitude => "stft_magnitude",
            OpKind::StraightThrough => "straight_through",
        }
    }

    fn arity(self) -> std::ops::RangeInclusive<usize> {
        match self {
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::AddBias | OpKind::MatMul => 2..=2,
            OpKind::BatchMatMul | OpKind::L1 => 2..=2,
            OpKind::Conv1d | OpKind::ConvTranspose1d => 2..=3,
            OpKind::LayerNorm => 3..=3,
            _ => 1..=1,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| TensorError::UnknownOp(s.to_string()))
    }
}

/// Attributes for [`Graph::forward_op`].
#[derive(Clone, Debug, PartialEq)]
pub enum OpAttrs {
    None,
    Scale(f64),
    Log { eps: f64 },
    Dropout { rate: f64, seed: u64 },
    BatchMatMul { transpose_b: bool },
    Conv(Conv1dAttrs),
    LayerNorm { eps: f64 },
    Embedding { ids: Vec<usize> },
    Reshape(Vec<usize>),
    Permute(Vec<usize>),
    CrossEntropy { targets: Vec<Option<usize>>, classes: usize },
    Stft(StftAttrs),
    StraightThrough(Vec<f64>),
}

impl<T: Real> Graph<T> {
    /// Applies `kind` to `inputs`, checking arity and attribute kind.
    pub fn forward_op(&mut self, kind: OpKind, inputs: &[Var], attrs: &OpAttrs) -> Result<Var> {
        if !kind.arity().contains(&inputs.len()) {
            return Err(TensorError::Attrs {
                op: kind.name(),
                detail: format!("expected {:?} inputs, got {}", kind.arity(), inputs.len()),
            });
        }
        let bad = || TensorError::Attrs {
            op: kind.name(),
            detail: format!("attributes {attrs:?} do not apply"),
        };
        let x = inputs[0];
        let y = inputs.get(1).copied();
        match (kind, attrs) {
            (OpKind::Add, OpAttrs::None) => self.add(x, y.unwrap()),
            (OpKind::Sub, OpAttrs::None) => self.sub(x, y.unwrap()),
            (OpKind::Mul, OpAttrs::None) => self.mul(x, y.unwrap()),
            (OpKind::Scale, OpAttrs::Scale(c)) => Ok(self.scale(x, T::of(*c))),
            (OpKind::AddBias, OpAttrs::None) => self.add_bias(x, y.unwrap()),
            (OpKind::Sqr, OpAttrs::None) => Ok(self.sqr(x)),
            (OpKind::Sqrt, OpAttrs::None) => Ok(self.sqrt(x)),
            (OpKind::Log, OpAttrs::Log { eps }) => Ok(self.log(x, T::of(*eps))),
            (OpKind::Gelu, OpAttrs::None) => Ok(self.gelu(x)),
            (OpKind::Dropout, OpAttrs::Dropout { rate, seed }) => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*seed);
                self.dropout(x, *rate, &mut rng)
            }
            (OpKind::MatMul, OpAttrs::None) => self.matmul(x, y.unwrap()),
            (OpKind::BatchMatMul, OpAttrs::BatchMatMul { transpose_b }) => {
                self.batch_matmul(x, y.unwrap(), *transpose_b)
            }
            (OpKind::Conv1d, OpAttrs::Conv(a)) => self.conv1d(x, y.unwrap(), inputs.get(2).copied(), *a),
            (OpKind::ConvTranspose1d, OpAttrs::Conv(a)) => {
                self.conv_transpose1d(x, y.unwrap(), inputs.get(2).copied(), *a)
            }
            (OpKind::LayerNorm, OpAttrs::LayerNorm { eps }) => {
                self.layer_norm(x, inputs[1], inputs[2], T::of(*eps))
            }
            (OpKind::Softmax, OpAttrs::None) => Ok(self.softmax(x)),
            (OpKind::CausalMask, OpAttrs::None) => self.causal_mask(x),
            (OpKind::Embedding, OpAttrs::Embedding { ids }) => self.embedding(x, ids),
            (OpKind::Reshape, OpAttrs::Reshape(s)) => self.reshape(x, s),
            (OpKind::Permute, OpAttrs::Permute(p)) => self.permute(x, p),
            (OpKind::Sum, OpAttrs::None) => Ok(self.sum(x)),
            (OpKind::Mean, OpAttrs::None) => Ok(self.mean(x)),
            (OpKind::CrossEntropy, OpAttrs::CrossEntropy { targets, classes }) => {
                self.cross_entropy(x, targets, *classes)
            }
            (OpKind::L1, OpAttrs::None) => self.l1(x, y.unwrap()),
            (OpKind::StftMagnitude, OpAttrs::Stft(a)) => self.stft_magnitude(x, *a),
            (OpKind::StraightThrough, OpAttrs::StraightThrough(r)) => {
                self.straight_through(x, r.iter().map(|&v| T::of(v)).collect())
            }
            _ => Err(bad()),
        }
    }
}
