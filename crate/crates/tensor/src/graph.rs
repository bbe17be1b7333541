//! Define-by-run tape. Every op appends a node whose inputs are already on
//! the tape, so reverse index order is a valid reverse topological order.

use rustfft::num_complex::Complex;

use crate::error::{Result, TensorError};
use crate::kernels::Window;
use crate::real::Real;
use crate::tensor::{numel, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) struct Node<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub op: Op<T>,
    pub requires_grad: bool,
}

pub(crate) enum Op<T> {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddBias(Var, Var),
    Sqr(Var),
    Sqrt(Var),
    Log(Var, T),
    Gelu(Var),
    Dropout(Var, Vec<T>),
    MatMul {
        a: Var,
        b: Var,
        m: usize,
        k: usize,
        n: usize,
    },
    BatchMatMul {
        a: Var,
        b: Var,
        batch: usize,
        m: usize,
        k: usize,
        n: usize,
        transpose_b: bool,
    },
    Conv1d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        batch: usize,
        win: Window,
        cout: usize,
    },
    ConvTranspose1d {
        x: Var,
        w: Var,
        bias: Option<Var>,
        batch: usize,
        win: Window,
        cin: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        rstd: Vec<T>,
    },
    Softmax(Var),
    CausalMask(Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Reshape(Var),
    Permute {
        x: Var,
        perm: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        classes: usize,
        probs: Vec<T>,
        count: usize,
    },
    L1(Var, Var),
    StftMag {
        x: Var,
        batch: usize,
        len: usize,
        frames: usize,
        fft: usize,
        hop: usize,
        window: Vec<T>,
        spectra: Vec<Complex<T>>,
    },
    StraightThrough(Var),
}

/// Reverse-mode tape over scalars of type `T`.
pub struct Graph<T: Real = f32> {
    pub(crate) nodes: Vec<Node<T>>,
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Lazily-allocated gradient slots handed to per-op backward rules.
pub(crate) struct GradSink<'a, T> {
    pub nodes: &'a [Node<T>],
    grads: &'a mut [Option<Vec<T>>],
}

impl<'a, T: Real> GradSink<'a, T> {
    /// Gradient buffer for `v`, or `None` when `v` does not need one.
    pub fn slot(&mut self, v: Var) -> Option<&mut [T]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        let len = node.value.len();
        Some(
            self.grads[v.0]
                .get_or_insert_with(|| vec![T::zero(); len])
                .as_mut_slice(),
        )
    }

    pub fn value(&self, v: Var) -> &'a [T] {
        &self.nodes[v.0].value
    }

    pub fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Adds `g` elementwise into the gradient of `v`.
    pub fn add(&mut self, v: Var, g: &[T]) {
        if let Some(s) = self.slot(v) {
            s.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b);
        }
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Records a leaf holding a copy of `t`; it is differentiable iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.nodes.push(Node {
            shape: t.shape().to_vec(),
            value: t.data().to_vec(),
            op: Op::Leaf,
            requires_grad: t.requires_grad(),
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a differentiable leaf regardless of the tensor's flag.
    pub fn param(&mut self, t: &Tensor<T>) -> Var {
        let v = self.leaf(t);
        self.nodes[v.0].requires_grad = true;
        v
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, shape: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, inputs: &[Var]) -> Var {
        debug_assert_eq!(numel(&shape), value.len());
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            shape,
            value,
            op: if requires_grad { op } else { Op::Constant },
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape is valid")
    }

    /// Scalar value of a single-element node.
    pub fn item(&self, v: Var) -> T {
        self.nodes[v.0].value[0]
    }

    /// Number of nodes that take part in differentiation.
    pub fn differentiable_len(&self) -> usize {
        self.nodes.iter().filter(|n| n.requires_grad).count()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gradient of the last `backward` root with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Backpropagates from a scalar root through every differentiable node, in
    /// exact reverse recording order. Gradients accumulate across fan-out.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let root_node = &self.nodes[root.0];
        if root_node.value.len() != 1 {
            return Err(TensorError::NonScalarRoot(root_node.shape.clone()));
        }
        if !root_node.requires_grad {
            return Err(TensorError::EmptyGraph);
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[root.0] = Some(vec![T::one()]);
        for i in (0..=root.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            {
                let (nodes, grads) = (&self.nodes, &mut self.grads);
                let mut sink = GradSink { nodes, grads };
                crate::ops::backprop(&nodes[i], &g, &mut sink);
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }
}
