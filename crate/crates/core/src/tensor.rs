//! Dense row-major `f64` tensors and the forward kernels the model needs.
//!
//! All reductions run left to right in index order, so results are bitwise
//! reproducible for a given input.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    /// Accumulated gradient, same length as `data`. Present only on
    /// trainable tensors between a backward pass and the optimizer step.
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::dim("tensor", shape, &[data.len()]));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dim("tensor", shape, &[data.len()]));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n]).expect("zeros: positive extents")
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![value; n]).expect("full: positive extents")
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(&[rows.len(), cols], data).expect("from_rows")
    }

    pub fn row_vector(values: &[f64]) -> Self {
        Self::new(&[1, values.len()], values.to_vec()).expect("row_vector: nonempty")
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows of a matrix; a rank-1 tensor counts as a single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    /// Extent of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().expect("nonempty shape")
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn get2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient slot, creating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.data.len());
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn expect_matrix(op: &'static str, t: &Tensor, other: &Tensor) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::dim(op, t.shape(), other.shape()));
    }
    Ok((t.shape[0], t.shape[1]))
}

/// Standard matrix product `a · b`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (p, q) = expect_matrix("matmul", a, b)?;
    let (q2, r) = expect_matrix("matmul", b, a)?;
    if q != q2 {
        return Err(Error::dim("matmul", a.shape(), b.shape()));
    }
    let mut out = vec![0.0; p * r];
    matmul_into(&a.data, &b.data, &mut out, p, q, r);
    Tensor::new(&[p, r], out)
}

/// `out += a[p×q] · b[q×r]`, accumulating over `q` in index order.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], p: usize, q: usize, r: usize) {
    for i in 0..p {
        let orow = &mut out[i * r..(i + 1) * r];
        for k in 0..q {
            let aik = a[i * q + k];
            let brow = &b[k * r..(k + 1) * r];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

pub fn transpose(a: &Tensor) -> Result<Tensor> {
    let (p, q) = expect_matrix("transpose", a, a)?;
    let mut out = vec![0.0; p * q];
    for i in 0..p {
        for j in 0..q {
            out[j * p + i] = a.data[i * q + j];
        }
    }
    Tensor::new(&[q, p], out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape != b.shape {
        return Err(Error::dim("add", a.shape(), b.shape()));
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Tensor::new(&a.shape, data)
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Tensor::new(&x.shape, data).expect("same shape")
}

/// Softmax over the last axis with per-row max subtraction.
pub fn row_softmax(x: &Tensor) -> Result<Tensor> {
    let cols = x.cols();
    if cols == 0 {
        return Err(Error::dim("row_softmax", x.shape(), &[1]));
    }
    let mut out = x.data.clone();
    for row in out.chunks_mut(cols) {
        softmax_in_place(row);
    }
    Tensor::new(&x.shape, out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Column-wise maximum over the rows of `c` whose mask entry is true.
///
/// Returns the `1×L` maxima and, per column, the winning row. Ties go to
/// the lowest row index.
pub fn masked_rowwise_max(c: &Tensor, mask: &[bool]) -> Result<(Tensor, Vec<usize>)> {
    if c.rank() != 2 || mask.len() != c.shape[0] {
        return Err(Error::dim("masked_rowwise_max", c.shape(), &[mask.len()]));
    }
    let first = mask.iter().position(|&m| m).ok_or(Error::EmptyQuestion)?;
    let cols = c.shape[1];
    let mut values = c.row(first).to_vec();
    let mut argrow = vec![first; cols];
    for (t, _) in mask.iter().enumerate().skip(first + 1).filter(|(_, &m)| m) {
        for (j, &v) in c.row(t).iter().enumerate() {
            if v > values[j] {
                values[j] = v;
                argrow[j] = t;
            }
        }
    }
    Ok((Tensor::new(&[1, cols], values)?, argrow))
}
