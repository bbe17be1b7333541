use crate::error::{shape_err, Result};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::real::Real;
use crate::tensor::numel;

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// For each output position, the flat index it reads in the input.
fn permute_index(in_shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let n = numel(&out_shape);
    let mut idx = vec![0usize; out_shape.len()];
    let mut map = Vec::with_capacity(n);
    for _ in 0..n {
        map.push(idx.iter().zip(perm).map(|(&i, &p)| i * in_strides[p]).sum());
        for ax in (0..idx.len()).rev() {
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    map
}

impl<T: Real> Graph<T> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        if shape.is_empty() || shape.contains(&0) || numel(shape) != self.value(x).len() {
            return shape_err(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape(x)),
            );
        }
        let value = self.value(x).to_vec();
        Ok(self.push(shape.to_vec(), value, Op::Reshape(x), &[x]))
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(&mut self, x: Var, perm: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let mut seen = vec![false; s.len()];
        let valid = perm.len() == s.len()
            && perm.iter().all(|&p| p < s.len() && !std::mem::replace(&mut seen[p], true));
        if !valid {
            return shape_err("permute", format!("{perm:?} is not a permutation of the axes of {s:?}"));
        }
        let map = permute_index(&s, perm);
        let vx = self.value(x);
        let value = map.iter().map(|&i| vx[i]).collect();
        let out_shape = perm.iter().map(|&p| s[p]).collect();
        let op = Op::Permute {
            x,
            perm: perm.to_vec(),
        };
        Ok(self.push(out_shape, value, op, &[x]))
    }

    /// Swaps the last two axes.
    pub fn transpose_last(&mut self, x: Var) -> Result<Var> {
        let r = self.shape(x).len();
        if r < 2 {
            return shape_err("transpose", format!("need rank ≥ 2, got {:?}", self.shape(x)));
        }
        let mut perm: Vec<usize> = (0..r).collect();
        perm.swap(r - 2, r - 1);
        self.permute(x, &perm)
    }
}

pub(crate) fn backward<T: Real>(op: &Op<T>, g: &[T], sink: &mut GradSink<'_, T>) {
    match op {
        Op::Reshape(x) => sink.add(*x, g),
        Op::Permute { x, perm } => {
            let in_shape = sink.nodes[x.0].shape.clone();
            if let Some(dx) = sink.slot(*x) {
                for (o, i) in permute_index(&in_shape, perm).into_iter().enumerate() {
                    dx[i] = dx[i] + g[o];
                }
            }
        }
        _ => unreachable!("not a shape op"),
    }
}
