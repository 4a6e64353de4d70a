//! Reverse-mode differentiation over a per-sample tape.
//!
//! A [`Graph`] records every intermediate value together with the op that
//! produced it. Parameters enter as borrowed leaves, so building a graph
//! never copies model weights. [`Graph::backward`] walks the tape in reverse
//! and returns the vector-Jacobian products for every node that depends on a
//! parameter.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Param,
    Constant,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    /// `[R×C] + [1×C]`, the row vector added to every row.
    AddRow(Var, Var),
    Relu(Var),
    RowSoftmax(Var),
    MaskedRowMax { input: Var, argrow: Vec<usize> },
    /// Row lookup; `None` ids produce a zero row and receive no gradient.
    Embedding { table: Var, ids: Vec<Option<usize>> },
    SliceCols { input: Var, start: usize },
    MeanRows(Var),
    ConcatCols(Var, Var),
    MulConst { input: Var, factor: Vec<f64> },
    SoftmaxCrossEntropy { logits: Var, target: usize, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Trainable leaf borrowed from the model.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Param, true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Constant, false)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.push(Cow::Borrowed(t), Op::Constant, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// The leaf registered for exactly this tensor (by address), if any.
    pub fn param_var(&self, t: &Tensor) -> Option<Var> {
        self.nodes.iter().position(|n| {
            matches!(n.op, Op::Param) && matches!(&n.value, Cow::Borrowed(b) if std::ptr::eq(*b, t))
        })
        .map(Var)
    }

    /// Total gradient of `t` over every leaf that borrows it; zeros if the
    /// tensor never entered the graph.
    pub fn param_grad(&self, grads: &Gradients, t: &Tensor) -> Vec<f64> {
        let mut out = vec![0.0; t.len()];
        for (i, n) in self.nodes.iter().enumerate() {
            let hit = matches!(n.op, Op::Param) && matches!(&n.value, Cow::Borrowed(b) if std::ptr::eq(*b, t));
            if let (true, Some(g)) = (hit, grads.get(Var(i))) {
                out.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
        out
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::matmul(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Cow::Owned(out), Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let out = tensor::transpose(self.value(a))?;
        let ng = self.needs(a);
        Ok(self.push(Cow::Owned(out), Op::Transpose(a), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = tensor::add(self.value(a), self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Cow::Owned(out), Op::Add(a, b), ng))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (av, rv) = (self.value(a), self.value(row));
        if av.rank() != 2 || rv.shape() != [1, av.cols()] {
            return Err(Error::dim("add_row", av.shape(), rv.shape()));
        }
        let c = av.cols();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + rv.data()[i % c])
            .collect();
        let out = Tensor::new(av.shape(), data)?;
        let ng = self.needs(a) || self.needs(row);
        Ok(self.push(Cow::Owned(out), Op::AddRow(a, row), ng))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = tensor::relu(self.value(a));
        let ng = self.needs(a);
        self.push(Cow::Owned(out), Op::Relu(a), ng)
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let out = tensor::row_softmax(self.value(a))?;
        let ng = self.needs(a);
        Ok(self.push(Cow::Owned(out), Op::RowSoftmax(a), ng))
    }

    /// Returns the `1×L` maxima and the winning row per column.
    pub fn masked_rowwise_max(&mut self, a: Var, mask: &[bool]) -> Result<(Var, Vec<usize>)> {
        let (out, argrow) = tensor::masked_rowwise_max(self.value(a), mask)?;
        let ng = self.needs(a);
        let v = self.push(
            Cow::Owned(out),
            Op::MaskedRowMax {
                input: a,
                argrow: argrow.clone(),
            },
            ng,
        );
        Ok((v, argrow))
    }

    pub fn embedding(&mut self, table: Var, ids: &[Option<usize>]) -> Result<Var> {
        let tv = self.value(table);
        if tv.rank() != 2 || ids.is_empty() {
            return Err(Error::dim("embedding", tv.shape(), &[ids.len()]));
        }
        let (rows, n) = (tv.shape()[0], tv.shape()[1]);
        let mut data = vec![0.0; ids.len() * n];
        for (j, id) in ids.iter().enumerate() {
            if let Some(id) = *id {
                if id >= rows {
                    return Err(Error::Data(format!("token id {id} outside table of {rows} rows")));
                }
                data[j * n..(j + 1) * n].copy_from_slice(tv.row(id));
            }
        }
        let out = Tensor::new(&[ids.len(), n], data)?;
        let ng = self.needs(table);
        Ok(self.push(
            Cow::Owned(out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if av.rank() != 2 || len == 0 || start + len > av.cols() {
            return Err(Error::dim("slice_cols", av.shape(), &[start, len]));
        }
        let data = (0..av.rows())
            .flat_map(|i| av.row(i)[start..start + len].iter().copied())
            .collect();
        let out = Tensor::new(&[av.rows(), len], data)?;
        let ng = self.needs(a);
        Ok(self.push(Cow::Owned(out), Op::SliceCols { input: a, start }, ng))
    }

    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.rank() != 2 {
            return Err(Error::dim("mean_rows", av.shape(), &[]));
        }
        let (r, c) = (av.rows(), av.cols());
        let mut sum = vec![0.0; c];
        for i in 0..r {
            sum.iter_mut().zip(av.row(i)).for_each(|(s, v)| *s += v);
        }
        sum.iter_mut().for_each(|s| *s /= r as f64);
        let out = Tensor::new(&[1, c], sum)?;
        let ng = self.needs(a);
        Ok(self.push(Cow::Owned(out), Op::MeanRows(a), ng))
    }

    /// Concatenates two single-row tensors.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.rows() != 1 || bv.rows() != 1 {
            return Err(Error::dim("concat_cols", av.shape(), bv.shape()));
        }
        let mut data = av.data().to_vec();
        data.extend_from_slice(bv.data());
        let out = Tensor::new(&[1, data.len()], data)?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Cow::Owned(out), Op::ConcatCols(a, b), ng))
    }

    /// Elementwise product with a fixed factor (dropout masks).
    pub fn mul_const(&mut self, a: Var, factor: Vec<f64>) -> Result<Var> {
        let av = self.value(a);
        if factor.len() != av.len() {
            return Err(Error::dim("mul_const", av.shape(), &[factor.len()]));
        }
        let data = av.data().iter().zip(&factor).map(|(x, f)| x * f).collect();
        let out = Tensor::new(av.shape(), data)?;
        let ng = self.needs(a);
        Ok(self.push(Cow::Owned(out), Op::MulConst { input: a, factor }, ng))
    }

    /// `−log softmax(logits)[target]` for a `1×K` logit row, as a `1×1` node.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let lv = self.value(logits);
        if lv.rank() != 2 || lv.rows() != 1 {
            return Err(Error::dim("softmax_cross_entropy", lv.shape(), &[1]));
        }
        if target >= lv.cols() {
            return Err(Error::Data(format!(
                "answer class {target} out of range for {} classes",
                lv.cols()
            )));
        }
        let mut probs = lv.data().to_vec();
        tensor::softmax_in_place(&mut probs);
        let max = lv.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lv.data().iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let loss = lse - lv.data()[target];
        let ng = self.needs(logits);
        Ok(self.push(
            Cow::Owned(Tensor::new(&[1, 1], vec![loss])?),
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            },
            ng,
        ))
    }

    /// Backpropagates from a scalar node with seed 1.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.value(root).len() != 1 {
            return Err(Error::dim("backward", self.value(root).shape(), &[1]));
        }
        self.backward_with(root, &[1.0])
    }

    /// Backpropagates an arbitrary upstream gradient `seed` (same shape as
    /// `root`), i.e. computes `seedᵀ·J` for every ancestor.
    pub fn backward_with(&self, root: Var, seed: &[f64]) -> Result<Gradients> {
        if seed.len() != self.value(root).len() {
            return Err(Error::dim("backward", self.value(root).shape(), &[seed.len()]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(seed.to_vec());
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<'_>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        match &node.op {
            Op::Param | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (p, q, r) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if self.needs(*a) {
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; p * q];
                    for i in 0..p {
                        for k in 0..q {
                            let mut s = 0.0;
                            for j in 0..r {
                                s += g[i * r + j] * bv.data()[k * r + j];
                            }
                            da[i * q + k] = s;
                        }
                    }
                    accumulate(grads, *a, &da);
                }
                if self.needs(*b) {
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; q * r];
                    for i in 0..p {
                        for k in 0..q {
                            let aik = av.data()[i * q + k];
                            let row = &mut db[k * r..(k + 1) * r];
                            for (d, gv) in row.iter_mut().zip(&g[i * r..(i + 1) * r]) {
                                *d += aik * gv;
                            }
                        }
                    }
                    accumulate(grads, *b, &db);
                }
            }
            Op::Transpose(a) => {
                let (p, q) = (out.shape()[0], out.shape()[1]);
                let mut da = vec![0.0; p * q];
                for i in 0..p {
                    for j in 0..q {
                        da[j * p + i] = g[i * q + j];
                    }
                }
                accumulate(grads, *a, &da);
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    accumulate(grads, *a, g);
                }
                if self.needs(*b) {
                    accumulate(grads, *b, g);
                }
            }
            Op::AddRow(a, row) => {
                if self.needs(*a) {
                    accumulate(grads, *a, g);
                }
                if self.needs(*row) {
                    let c = out.cols();
                    let mut dr = vec![0.0; c];
                    for chunk in g.chunks(c) {
                        dr.iter_mut().zip(chunk).for_each(|(d, v)| *d += v);
                    }
                    accumulate(grads, *row, &dr);
                }
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let da: Vec<f64> = g
                    .iter()
                    .zip(x)
                    .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                accumulate(grads, *a, &da);
            }
            Op::RowSoftmax(a) => {
                let c = out.cols();
                let mut da = vec![0.0; g.len()];
                for ((y, gy), d) in out.data().chunks(c).zip(g.chunks(c)).zip(da.chunks_mut(c)) {
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for ((dv, yv), gv) in d.iter_mut().zip(y).zip(gy) {
                        *dv = yv * (gv - dot);
                    }
                }
                accumulate(grads, *a, &da);
            }
            Op::MaskedRowMax { input, argrow } => {
                let c = out.cols();
                let mut da = vec![0.0; self.value(*input).len()];
                for (j, &t) in argrow.iter().enumerate() {
                    da[t * c + j] = g[j];
                }
                accumulate(grads, *input, &da);
            }
            Op::Embedding { table, ids } => {
                let tv = self.value(*table);
                let n = tv.cols();
                let mut dt = vec![0.0; tv.len()];
                for (j, id) in ids.iter().enumerate() {
                    if let Some(id) = *id {
                        let dst = &mut dt[id * n..(id + 1) * n];
                        dst.iter_mut()
                            .zip(&g[j * n..(j + 1) * n])
                            .for_each(|(d, v)| *d += v);
                    }
                }
                accumulate(grads, *table, &dt);
            }
            Op::SliceCols { input, start } => {
                let iv = self.value(*input);
                let (ic, len) = (iv.cols(), out.cols());
                let mut da = vec![0.0; iv.len()];
                for i in 0..iv.rows() {
                    da[i * ic + start..i * ic + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                }
                accumulate(grads, *input, &da);
            }
            Op::MeanRows(a) => {
                let av = self.value(*a);
                let r = av.rows() as f64;
                let da: Vec<f64> = (0..av.rows())
                    .flat_map(|_| g.iter().map(move |v| v / r))
                    .collect();
                accumulate(grads, *a, &da);
            }
            Op::ConcatCols(a, b) => {
                let na = self.value(*a).len();
                if self.needs(*a) {
                    accumulate(grads, *a, &g[..na]);
                }
                if self.needs(*b) {
                    accumulate(grads, *b, &g[na..]);
                }
            }
            Op::MulConst { input, factor } => {
                let da: Vec<f64> = g.iter().zip(factor).map(|(a, b)| a * b).collect();
                accumulate(grads, *input, &da);
            }
            Op::SoftmaxCrossEntropy {
                logits,
                target,
                probs,
            } => {
                let mut dl: Vec<f64> = probs.iter().map(|p| p * g[0]).collect();
                dl[*target] -= g[0];
                accumulate(grads, *logits, &dl);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut grads[v.0] {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(g.to_vec()),
    }
}

#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; `None` if no path exists.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central-difference VJP of a single-input graph builder.
    fn numeric_vjp(
        x: &Tensor,
        seed: &[f64],
        f: impl Fn(&mut Graph<'_>, Var) -> Var,
    ) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|i| {
                let eval = |delta: f64| {
                    let mut xp = x.clone();
                    xp.data_mut()[i] += delta;
                    let mut g = Graph::new();
                    let v = g.param(&xp);
                    let out = f(&mut g, v);
                    let val = g.value(out).data().to_vec();
                    val.iter().zip(seed).map(|(a, b)| a * b).sum::<f64>()
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            })
            .collect()
    }

    fn check_op(x: &Tensor, f: impl Fn(&mut Graph<'_>, Var) -> Var) {
        let mut g = Graph::new();
        let v = g.param(x);
        let out = f(&mut g, v);
        let seed: Vec<f64> = (0..g.value(out).len()).map(|i| 0.3 + 0.17 * i as f64).collect();
        let grads = g.backward_with(out, &seed).unwrap();
        let analytic = grads.get(v).unwrap();
        let numeric = numeric_vjp(x, &seed, f);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() < 1e-6, "analytic {a} numeric {n}");
        }
    }

    fn sample() -> Tensor {
        Tensor::from_rows(&[&[0.3, -1.2, 0.7], &[1.1, 0.4, -0.5]])
    }

    #[test]
    fn matmul_backward_matches_numeric() {
        let b = Tensor::from_rows(&[&[0.2, 0.5], &[-0.3, 0.8], &[1.0, -0.4]]);
        check_op(&sample(), |g, v| {
            let c = g.constant(b.clone());
            g.matmul(v, c).unwrap()
        });
        let a = Tensor::from_rows(&[&[0.2, 0.5], &[-0.3, 0.8]]);
        check_op(&sample(), |g, v| {
            let c = g.constant(a.clone());
            g.matmul(c, v).unwrap()
        });
    }

    #[test]
    fn softmax_and_transpose_backward() {
        check_op(&sample(), |g, v| g.row_softmax(v).unwrap());
        check_op(&sample(), |g, v| g.transpose(v).unwrap());
    }

    #[test]
    fn small_ops_backward() {
        check_op(&sample(), |g, v| g.mean_rows(v).unwrap());
        check_op(&sample(), |g, v| g.slice_cols(v, 1, 2).unwrap());
        check_op(&sample(), |g, v| g.mul_const(v, vec![2.0, 0.0, 1.0, -1.0, 0.5, 3.0]).unwrap());
        check_op(&sample(), |g, v| g.relu(v));
        let row = Tensor::row_vector(&[1.0, 2.0, 3.0]);
        check_op(&sample(), |g, v| {
            let r = g.constant(row.clone());
            g.add_row(v, r).unwrap()
        });
        check_op(&Tensor::row_vector(&[0.4, -0.2, 1.3]), |g, v| g.softmax_cross_entropy(v, 1).unwrap());
    }

    #[test]
    fn relu_gate() {
        let x = Tensor::row_vector(&[3.0, -1.0, 0.0]);
        let mut g = Graph::new();
        let v = g.param(&x);
        let r = g.relu(v);
        let grads = g.backward_with(r, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(grads.get(v).unwrap(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn masked_max_routes_to_one_row_per_column() {
        let c = Tensor::from_rows(&[&[1.0, 5.0, 0.0], &[2.0, 0.0, 0.0], &[9.0, 9.0, 9.0]]);
        let mut g = Graph::new();
        let v = g.param(&c);
        let (m, arg) = g.masked_rowwise_max(v, &[true, true, false]).unwrap();
        assert_eq!(arg, vec![1, 0, 0]);
        let seed = [0.5, -2.0, 3.0];
        let grads = g.backward_with(m, &seed).unwrap();
        let d = grads.get(v).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = (0..3).map(|t| d[t * 3 + j]).collect();
            assert_eq!(col.iter().filter(|x| **x != 0.0).count(), 1);
            assert_eq!(col.iter().sum::<f64>(), seed[j]);
        }
    }

    #[test]
    fn embedding_padding_gets_no_gradient() {
        let table = Tensor::from_rows(&[&[1.0, 2.0], &[3.0, 4.0], &[0.0, 0.0]]);
        let mut g = Graph::new();
        let t = g.param(&table);
        let e = g.embedding(t, &[Some(1), None, Some(1)]).unwrap();
        assert_eq!(g.value(e).row(1), &[0.0, 0.0]);
        let grads = g.backward_with(e, &[1.0; 6]).unwrap();
        assert_eq!(grads.get(t).unwrap(), &[0.0, 0.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn param_lookup_by_address() {
        let a = Tensor::zeros(&[1, 2]);
        let b = Tensor::zeros(&[1, 2]);
        let mut g = Graph::new();
        let va = g.param(&a);
        let vb = g.param(&b);
        assert_eq!(g.param_var(&a), Some(va));
        assert_eq!(g.param_var(&b), Some(vb));
        let c = Tensor::zeros(&[1, 2]);
        assert_eq!(g.param_var(&c), None);
    }

    #[test]
    fn cross_entropy_rejects_bad_target() {
        let x = Tensor::row_vector(&[0.0, 0.0]);
        let mut g = Graph::new();
        let v = g.param(&x);
        assert!(matches!(g.softmax_cross_entropy(v, 2), Err(Error::Data(_))));
    }
}
