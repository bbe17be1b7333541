use crate::error::{shape_err, Result, TensorError};
use crate::graph::{GradSink, Graph, Op, Var};
use crate::real::Real;

fn last_dim<T: Real>(g: &Graph<T>, x: Var) -> usize {
    *g.shape(x).last().unwrap()
}

impl<T: Real> Graph<T> {
    /// Normalizes over the last axis, then applies `gamma`/`beta` of that length.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let d = last_dim(self, x);
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return shape_err(
                "layer_norm",
                format!(
                    "gamma {:?} / beta {:?} must be [{d}] for input {:?}",
                    self.shape(gamma),
                    self.shape(beta),
                    self.shape(x)
                ),
            );
        }
        let (vx, vg, vb) = (self.value(x), self.value(gamma), self.value(beta));
        let rows = vx.len() / d;
        let mut out = vec![T::zero(); vx.len()];
        let mut mean = Vec::with_capacity(rows);
        let mut rstd = Vec::with_capacity(rows);
        let inv_d = T::one() / T::of(d as f64);
        for (row, orow) in vx.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            let mu = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() * inv_d;
            let r = T::one() / (var + eps).sqrt();
            for i in 0..d {
                orow[i] = (row[i] - mu) * r * vg[i] + vb[i];
            }
            mean.push(mu);
            rstd.push(r);
        }
        let shape = self.shape(x).to_vec();
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            mean,
            rstd,
        };
        Ok(self.push(shape, out, op, &[x, gamma, beta]))
    }

    /// Softmax over the last axis. `-inf` entries receive probability zero.
    pub fn softmax(&mut self, x: Var) -> Var {
        let d = last_dim(self, x);
        let mut out = self.value(x).to_vec();
        out.chunks_exact_mut(d).for_each(softmax_row);
        let shape = self.shape(x).to_vec();
        self.push(shape, out, Op::Softmax(x), &[x])
    }

    /// Sets entries above the diagonal of the trailing `[T, T]` block to `-inf`.
    pub fn causal_mask(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() < 2 || s[s.len() - 1] != s[s.len() - 2] {
            return shape_err("causal_mask", format!("trailing dims of {s:?} must be square"));
        }
        let t = s[s.len() - 1];
        let mut out = self.value(x).to_vec();
        for block in out.chunks_exact_mut(t * t) {
            for i in 0..t {
                for v in &mut block[i * t + i + 1..(i + 1) * t] {
                    *v = T::neg_infinity();
                }
            }
        }
        let shape = s.to_vec();
        Ok(self.push(shape, out, Op::CausalMask(x), &[x]))
    }

    /// Row lookup: `table: [V, D]`, `ids` of length N → `[N, D]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table);
        if s.len() != 2 {
            return shape_err("embedding", format!("table must be [V, D], got {s:?}"));
        }
        let (v, d) = (s[0], s[1]);
        if ids.is_empty() {
            return shape_err("embedding", "empty id list");
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return shape_err("embedding", format!("id {bad} out of range for vocabulary {v}"));
        }
        let vt = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&vt[i * d..(i + 1) * d]);
        }
        let op = Op::Embedding {
            table,
            ids: ids.to_vec(),
        };
        Ok(self.push(vec![ids.len(), d], out, op, &[table]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().copied().sum::<T>();
        self.push(vec![1], vec![s], Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let s = v.iter().copied().sum::<T>() / T::of(v.len() as f64);
        self.push(vec![1], vec![s], Op::Mean(x), &[x])
    }

    /// Mean cross-entropy of `logits: [N, V]` against `targets` (`None` = ignored).
    /// Only the first `classes` columns enter the softmax.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[Option<usize>], classes: usize) -> Result<Var> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != targets.len() {
            return shape_err(
                "cross_entropy",
                format!("logits {s:?} must be [N, V] with N = {} targets", targets.len()),
            );
        }
        let (n, v) = (s[0], s[1]);
        if classes == 0 || classes > v {
            return Err(TensorError::Attrs {
                op: "cross_entropy",
                detail: format!("classes {classes} must lie in 1..={v}"),
            });
        }
        if let Some(bad) = targets.iter().flatten().find(|&&t| t >= classes) {
            return shape_err("cross_entropy", format!("target {bad} out of range for {classes} classes"));
        }
        let count = targets.iter().flatten().count();
        if count == 0 {
            return Err(TensorError::Invalid("cross_entropy: every position is ignored".into()));
        }
        let vl = self.value(logits);
        let mut probs = vec![T::zero(); n * classes];
        let mut total = 0.0f64;
        for i in 0..n {
            let Some(t) = targets[i] else { continue };
            let row = &vl[i * v..i * v + classes];
            let p = &mut probs[i * classes..(i + 1) * classes];
            p.copy_from_slice(row);
            let max = p.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for x in p.iter_mut() {
                *x = (*x - max).exp();
                z = z + *x;
            }
            p.iter_mut().for_each(|x| *x = *x / z);
            total += (z.ln() + max - row[t]).f64();
        }
        let loss = T::of(total / count as f64);
        let op = Op::CrossEntropy {
            logits,
            targets: targets.to_vec(),
            classes,
            probs,
            count,
        };
        Ok(self.push(vec![1], vec![loss], op, &[logits]))
    }

    /// Mean absolute difference.
    pub fn l1(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return shape_err("l1", format!("operand shapes differ: {:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        let (va, vb) = (self.value(a), self.value(b));
        let s = va.iter().zip(vb).map(|(&x, &y)| (x - y).abs()).sum::<T>() / T::of(va.len() as f64);
        Ok(self.push(vec![1], vec![s], Op::L1(a, b), &[a, b]))
    }

    /// Forward value is `replacement`; the backward pass copies the incoming
    /// gradient to `x` unchanged.
    pub fn straight_through(&mut self, x: Var, replacement: Vec<T>) -> Result<Var> {
        if replacement.len() != self.value(x).len() {
            return shape_err(
                "straight_through",
                format!("replacement has {} values for input {:?}", replacement.len(), self.shape(x)),
            );
        }
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, replacement, Op::StraightThrough(x), &[x]))
    }
}

pub(crate) fn softmax_row<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        z = z + *x;
    }
    row.iter_mut().for_each(|x| *x = *x / z);
}

pub(crate) fn backward<T: Real>(op: &Op<T>, out: &[T], g: &[T], sink: &mut GradSink<'_, T>) {
    match op {
        Op::LayerNorm {
            x,
            gamma,
            beta,
            mean,
            rstd,
        } => {
            let (vx, vg) = (sink.value(*x), sink.value(*gamma));
            let d = vg.len();
            let inv_d = T::one() / T::of(d as f64);
            if let Some(db) = sink.slot(*beta) {
                for grow in g.chunks_exact(d) {
                    db.iter_mut().zip(grow).for_each(|(a, &b)| *a = *a + b);
                }
            }
            if let Some(dg) = sink.slot(*gamma) {
                for (r, (grow, xrow)) in g.chunks_exact(d).zip(vx.chunks_exact(d)).enumerate() {
                    for i in 0..d {
                        dg[i] = dg[i] + grow[i] * (xrow[i] - mean[r]) * rstd[r];
                    }
                }
            }
            if let Some(dx) = sink.slot(*x) {
                let mut xhat = vec![T::zero(); d];
                let mut dxhat = vec![T::zero(); d];
                for r in 0..mean.len() {
                    let xrow = &vx[r * d..(r + 1) * d];
                    let grow = &g[r * d..(r + 1) * d];
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for i in 0..d {
                        xhat[i] = (xrow[i] - mean[r]) * rstd[r];
                        dxhat[i] = grow[i] * vg[i];
                        m1 = m1 + dxhat[i];
                        m2 = m2 + dxhat[i] * xhat[i];
                    }
                    m1 = m1 * inv_d;
                    m2 = m2 * inv_d;
                    let drow = &mut dx[r * d..(r + 1) * d];
                    for i in 0..d {
                        drow[i] = drow[i] + rstd[r] * (dxhat[i] - m1 - xhat[i] * m2);
                    }
                }
            }
        }
        Op::Softmax(x) => {
            let d = *sink.nodes[x.0].shape.last().unwrap();
            if let Some(dx) = sink.slot(*x) {
                for ((drow, yrow), grow) in dx.chunks_exact_mut(d).zip(out.chunks_exact(d)).zip(g.chunks_exact(d)) {
                    let s = yrow.iter().zip(grow).map(|(&y, &gi)| y * gi).sum::<T>();
                    for i in 0..d {
                        drow[i] = drow[i] + yrow[i] * (grow[i] - s);
                    }
                }
            }
        }
        Op::CausalMask(x) => {
            if let Some(dx) = sink.slot(*x) {
                for ((d, &gi), &o) in dx.iter_mut().zip(g).zip(out) {
                    if o != T::neg_infinity() {
                        *d = *d + gi;
                    }
                }
            }
        }
        Op::Embedding { table, ids } => {
            if let Some(dt) = sink.slot(*table) {
                let d = g.len() / ids.len();
                for (r, &i) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[i * d + j] = dt[i * d + j] + g[r * d + j];
                    }
                }
            }
        }
        Op::Sum(x) => {
            if let Some(dx) = sink.slot(*x) {
                dx.iter_mut().for_each(|d| *d = *d + g[0]);
            }
        }
        Op::Mean(x) => {
            if let Some(dx) = sink.slot(*x) {
                let c = g[0] / T::of(dx.len() as f64);
                dx.iter_mut().for_each(|d| *d = *d + c);
            }
        }
        Op::CrossEntropy {
            logits,
            targets,
            classes,
            probs,
            count,
        } => {
            if let Some(dl) = sink.slot(*logits) {
                let v = dl.len() / targets.len();
                let c = g[0] / T::of(*count as f64);
                for (i, t) in targets.iter().enumerate() {
                    let Some(t) = *t else { continue };
                    for j in 0..*classes {
                        let mut p = probs[i * classes + j];
                        if j == t {
                            p = p - T::one();
                        }
                        dl[i * v + j] = dl[i * v + j] + c * p;
                    }
                }
            }
        }
        Op::L1(a, b) => {
            let (va, vb) = (sink.value(*a), sink.value(*b));
            let c = g[0] / T::of(va.len() as f64);
            let sign = |x: T, y: T| {
                if x > y {
                    c
                } else if x < y {
                    -c
                } else {
                    T::zero()
                }
            };
            if let Some(da) = sink.slot(*a) {
                for i in 0..da.len() {
                    da[i] = da[i] + sign(va[i], vb[i]);
                }
            }
            if let Some(db) = sink.slot(*b) {
                for i in 0..db.len() {
                    db[i] = db[i] - sign(va[i], vb[i]);
                }
            }
        }
        Op::StraightThrough(x) => sink.add(*x, g),
        _ => unreachable!("not an nn op"),
    }
}
