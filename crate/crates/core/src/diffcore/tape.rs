use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use super::tensor::{matmul, matmul_nt, matmul_tn};
use super::{DiffError, Gradients, ParamId, ParamStore, Real, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Binary sparse matrix in CSR form, used for adjacency products.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsePattern {
    n_rows: usize,
    n_cols: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    // Transposed pattern for the backward product.
    t_offsets: Vec<usize>,
    t_indices: Vec<u32>,
}

impl SparsePattern {
    /// Builds from per-row column lists. Columns must be `< n_cols`.
    pub fn from_rows(n_cols: usize, rows: &[Vec<u32>]) -> Result<Self, DiffError> {
        let n_rows = rows.len();
        let mut offsets = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        let mut col_counts = vec![0usize; n_cols];
        for row in rows {
            for &c in row {
                if c as usize >= n_cols {
                    return Err(DiffError::Index { index: c as usize, len: n_cols });
                }
                col_counts[c as usize] += 1;
                indices.push(c);
            }
            offsets.push(indices.len());
        }
        let mut t_offsets = Vec::with_capacity(n_cols + 1);
        t_offsets.push(0);
        for c in 0..n_cols {
            t_offsets.push(t_offsets[c] + col_counts[c]);
        }
        let mut fill = t_offsets.clone();
        let mut t_indices = vec![0u32; indices.len()];
        for (r, row) in rows.iter().enumerate() {
            for &c in row {
                t_indices[fill[c as usize]] = r as u32;
                fill[c as usize] += 1;
            }
        }
        Ok(SparsePattern { n_rows, n_cols, offsets, indices, t_offsets, t_indices })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn row(&self, r: usize) -> &[u32] {
        &self.indices[self.offsets[r]..self.offsets[r + 1]]
    }

    #[cfg(test)]
    fn t_row(&self, c: usize) -> &[u32] {
        &self.t_indices[self.t_offsets[c]..self.t_offsets[c + 1]]
    }
}

fn sparse_product<T: Real>(offsets: &[usize], indices: &[u32], h: &Tensor<T>) -> Tensor<T> {
    let n_out = offsets.len() - 1;
    let f = h.cols();
    let mut out = Vec::with_capacity(n_out * f);
    let mut acc = vec![0f64; f];
    for i in 0..n_out {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for &j in &indices[offsets[i]..offsets[i + 1]] {
            for (s, &v) in acc.iter_mut().zip(h.row(j as usize)) {
                *s += v.as_f64();
            }
        }
        out.extend(acc.iter().map(|&v| T::of(v)));
    }
    Tensor::matrix(n_out, f, out).expect("sparse product shape")
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRowBroadcast(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    SumRows(Var),
    SelectRows(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Scale(Var, T),
    AddScalar(Var),
    Sum(Var),
    Mean(Var),
    Dropout(Var, Vec<T>),
    SparseMatMul(Arc<SparsePattern>, Var),
    BceWithLogits { logits: Var, targets: Vec<T>, weights: Vec<T> },
    SquaredError { pred: Var, targets: Vec<T>, weights: Vec<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records one forward computation and replays it backwards.
///
/// Parameters are borrowed read-only; [`Tape::backward`] returns a fresh
/// gradient buffer so several tapes can run side by side against one store.
pub struct Tape<'p, T: Real = f32> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Tape { params, nodes: Vec::new(), param_vars: HashMap::new() }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    fn require_matrix(&self, op: &'static str, v: Var) -> Result<(), DiffError> {
        if self.nodes[v.0].value.is_matrix() {
            Ok(())
        } else {
            Err(DiffError::Rank { op, shape: self.shape(v).to_vec() })
        }
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> DiffError {
        DiffError::ShapeMismatch { op, left: self.shape(a).to_vec(), right: self.shape(b).to_vec() }
    }

    /// Constant input; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Parameter leaf. Repeated calls for the same id return the same node so
    /// gradients from every use accumulate into one buffer.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let value = self.params.get(id).clone();
        let v = self.push(value, Op::Param(id), true);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.require_matrix("matmul", a)?;
        self.require_matrix("matmul", b)?;
        if self.value(a).cols() != self.value(b).rows() {
            return Err(self.mismatch("matmul", a, b));
        }
        let out = matmul(self.value(a), self.value(b));
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), g))
    }

    /// Elementwise sum. A `1 × c` right operand is broadcast over the rows of
    /// the left operand.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let g = self.grad_flag(&[a, b]);
        if sa == sb {
            let mut out = self.value(a).clone();
            out.add_assign(self.value(b));
            return Ok(self.push(out, Op::Add(a, b), g));
        }
        if sa.len() == 2 && sb.len() == 2 && sb[0] == 1 && sa[1] == sb[1] {
            let bias = self.value(b).data().to_vec();
            let mut out = self.value(a).clone();
            for row in out.data_mut().chunks_mut(sa[1]) {
                for (x, &bv) in row.iter_mut().zip(&bias) {
                    *x += bv;
                }
            }
            return Ok(self.push(out, Op::AddRowBroadcast(a, b), g));
        }
        Err(self.mismatch("add", a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("sub", a, b));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x - y).collect();
        let out = Tensor::from_vec(self.shape(a), data)?;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), g))
    }

    /// Hadamard product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("mul", a, b));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::from_vec(self.shape(a), data)?;
        let g = self.grad_flag(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), g))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let g = self.grad_flag(&[a]);
        self.push(out, Op::Sigmoid(a), g)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| v.tanh());
        let g = self.grad_flag(&[a]);
        self.push(out, Op::Tanh(a), g)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        let g = self.grad_flag(&[a]);
        self.push(out, Op::Relu(a), g)
    }

    /// Column-wise sum over rows: `N × c → 1 × c`. Each column is summed in
    /// ascending value order, so the result is independent of row order.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var, DiffError> {
        self.require_matrix("sum_rows", a)?;
        let t = self.value(a);
        let c = t.cols();
        let mut column = Vec::with_capacity(t.rows());
        let mut acc = Vec::with_capacity(c);
        for j in 0..c {
            column.clear();
            column.extend((0..t.rows()).map(|r| t.row(r)[j].as_f64()));
            column.sort_unstable_by(f64::total_cmp);
            acc.push(column.iter().sum::<f64>());
        }
        let out = Tensor::matrix(1, c, acc.into_iter().map(T::of).collect())?;
        let g = self.grad_flag(&[a]);
        Ok(self.push(out, Op::SumRows(a), g))
    }

    pub fn select_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var, DiffError> {
        self.require_matrix("select_rows", a)?;
        let t = self.value(a);
        let mut data = Vec::with_capacity(rows.len() * t.cols());
        for &r in rows {
            if r >= t.rows() {
                return Err(DiffError::Index { index: r, len: t.rows() });
            }
            data.extend_from_slice(t.row(r));
        }
        let out = Tensor::matrix(rows.len(), t.cols(), data)?;
        let g = self.grad_flag(&[a]);
        Ok(self.push(out, Op::SelectRows(a, rows.to_vec()), g))
    }

    /// Concatenation along the last dimension.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let first = *parts.first().ok_or(DiffError::Empty("concat_cols"))?;
        let rows = self.value(first).rows();
        for &p in parts {
            self.require_matrix("concat_cols", p)?;
            if self.value(p).rows() != rows {
                return Err(self.mismatch("concat_cols", first, p));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::matrix(rows, cols, data)?;
        let g = self.grad_flag(parts);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), g))
    }

    /// Stacks matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let first = *parts.first().ok_or(DiffError::Empty("concat_rows"))?;
        let cols = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            self.require_matrix("concat_rows", p)?;
            if self.value(p).cols() != cols {
                return Err(self.mismatch("concat_rows", first, p));
            }
            rows += self.value(p).rows();
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::matrix(rows, cols, data)?;
        let g = self.grad_flag(parts);
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), g))
    }

    pub fn scale(&mut self, a: Var, k: T) -> Var {
        let out = self.value(a).map(|v| v * k);
        let g = self.grad_flag(&[a]);
        self.push(out, Op::Scale(a, k), g)
    }

    pub fn add_scalar(&mut self, a: Var, k: T) -> Var {
        let out = self.value(a).map(|v| v + k);
        let g = self.grad_flag(&[a]);
        self.push(out, Op::AddScalar(a), g)
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let neg = self.scale(a, -T::one());
        self.add_scalar(neg, T::one())
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().map(|v| v.as_f64()).sum();
        let g = self.grad_flag(&[a]);
        self.push(Tensor::scalar(T::of(s)), Op::Sum(a), g)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, DiffError> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(DiffError::Empty("mean"));
        }
        let s: f64 = t.data().iter().map(|v| v.as_f64()).sum();
        let out = Tensor::scalar(T::of(s / t.len() as f64));
        let g = self.grad_flag(&[a]);
        Ok(self.push(out, Op::Mean(a), g))
    }

    /// Inverted dropout. Identity when `p == 0` or outside training.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, train: bool, rng: &mut R) -> Result<Var, DiffError> {
        if !(0.0..1.0).contains(&p) {
            return Err(DiffError::Argument(format!("dropout probability {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let keep = T::of(1.0 / (1.0 - p));
        let mask: Vec<T> =
            (0..self.value(a).len()).map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep }).collect();
        let data = self.value(a).data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let out = Tensor::from_vec(self.shape(a), data)?;
        let g = self.grad_flag(&[a]);
        Ok(self.push(out, Op::Dropout(a, mask), g))
    }

    /// `S · h` for a binary sparse `S`.
    pub fn sparse_matmul(&mut self, s: Arc<SparsePattern>, h: Var) -> Result<Var, DiffError> {
        self.require_matrix("sparse_matmul", h)?;
        if s.n_cols() != self.value(h).rows() {
            return Err(DiffError::ShapeMismatch {
                op: "sparse_matmul",
                left: vec![s.n_rows(), s.n_cols()],
                right: self.shape(h).to_vec(),
            });
        }
        let out = sparse_product(&s.offsets, &s.indices, self.value(h));
        let g = self.grad_flag(&[h]);
        Ok(self.push(out, Op::SparseMatMul(s, h), g))
    }

    /// `Σ w · BCE(σ(logit), target)` in the stable log-sum-exp form.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[T], weights: &[T]) -> Result<Var, DiffError> {
        self.check_targets("bce_with_logits", logits, targets, weights)?;
        let s: f64 = self
            .value(logits)
            .data()
            .iter()
            .zip(targets)
            .zip(weights)
            .map(|((&x, &y), &w)| {
                let (x, y, w) = (x.as_f64(), y.as_f64(), w.as_f64());
                if w == 0.0 {
                    0.0
                } else {
                    w * (x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
                }
            })
            .sum();
        let g = self.grad_flag(&[logits]);
        Ok(self.push(
            Tensor::scalar(T::of(s)),
            Op::BceWithLogits { logits, targets: targets.to_vec(), weights: weights.to_vec() },
            g,
        ))
    }

    /// `Σ w · (pred - target)²`.
    pub fn squared_error(&mut self, pred: Var, targets: &[T], weights: &[T]) -> Result<Var, DiffError> {
        self.check_targets("squared_error", pred, targets, weights)?;
        let s: f64 = self
            .value(pred)
            .data()
            .iter()
            .zip(targets)
            .zip(weights)
            .map(|((&p, &y), &w)| {
                let d = p.as_f64() - y.as_f64();
                w.as_f64() * d * d
            })
            .sum();
        let g = self.grad_flag(&[pred]);
        Ok(self.push(
            Tensor::scalar(T::of(s)),
            Op::SquaredError { pred, targets: targets.to_vec(), weights: weights.to_vec() },
            g,
        ))
    }

    fn check_targets(&self, op: &'static str, v: Var, targets: &[T], weights: &[T]) -> Result<(), DiffError> {
        let n = self.value(v).len();
        if targets.len() != n || weights.len() != n {
            return Err(DiffError::ShapeMismatch {
                op,
                left: self.shape(v).to_vec(),
                right: vec![targets.len(), weights.len()],
            });
        }
        Ok(())
    }

    /// Reverse sweep from a scalar root; returns gradients for every parameter
    /// of the store (zero for parameters the root does not depend on).
    pub fn backward(&self, root: Var) -> Result<Gradients<T>, DiffError> {
        let root_value = self.value(root);
        if root_value.len() != 1 {
            return Err(DiffError::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Tensor::full(root_value.shape(), T::one()));
        let mut out = Gradients::zeros_like(self.params);

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.get_mut(*id).add_assign(&g),
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        let ga = matmul_nt(&g, self.value(*b));
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.nodes[b.0].needs_grad {
                        let gb = matmul_tn(self.value(*a), &g);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::AddRowBroadcast(a, b) => {
                    let c = g.cols();
                    let mut acc = vec![0f64; c];
                    for r in 0..g.rows() {
                        for (s, &v) in acc.iter_mut().zip(g.row(r)) {
                            *s += v.as_f64();
                        }
                    }
                    let gb = Tensor::matrix(1, c, acc.into_iter().map(T::of).collect())?;
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let va = self.value(*a);
                    let vb = self.value(*b);
                    let ga = zip_map(&g, vb, |x, y| x * y);
                    let gb = zip_map(&g, va, |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Sigmoid(a) => {
                    let ga = zip_map(&g, &node.value, |gv, s| gv * s * (T::one() - s));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = zip_map(&g, &node.value, |gv, t| gv * (T::one() - t * t));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = zip_map(&g, self.value(*a), |gv, x| if x > T::zero() { gv } else { T::zero() });
                    accumulate(&mut grads, *a, ga);
                }
                Op::SumRows(a) => {
                    let rows = self.value(*a).rows();
                    let mut data = Vec::with_capacity(rows * g.len());
                    for _ in 0..rows {
                        data.extend_from_slice(g.data());
                    }
                    accumulate(&mut grads, *a, Tensor::from_vec(self.shape(*a), data)?);
                }
                Op::SelectRows(a, rows) => {
                    let mut ga = Tensor::zeros(self.shape(*a));
                    let c = ga.cols();
                    for (k, &r) in rows.iter().enumerate() {
                        let dst = &mut ga.data_mut()[r * c..(r + 1) * c];
                        for (d, &v) in dst.iter_mut().zip(g.row(k)) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        let mut data = Vec::with_capacity(g.rows() * pc);
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row(r)[offset..offset + pc]);
                        }
                        offset += pc;
                        if self.nodes[p.0].needs_grad {
                            accumulate(&mut grads, p, Tensor::from_vec(self.shape(p), data)?);
                        }
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        if self.nodes[p.0].needs_grad {
                            let data = g.data()[start..start + len].to_vec();
                            accumulate(&mut grads, p, Tensor::from_vec(self.shape(p), data)?);
                        }
                        start += len;
                    }
                }
                Op::Scale(a, k) => {
                    let k = *k;
                    accumulate(&mut grads, *a, g.map(|v| v * k));
                }
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Sum(a) => {
                    let gv = g.data()[0];
                    accumulate(&mut grads, *a, Tensor::full(self.shape(*a), gv));
                }
                Op::Mean(a) => {
                    let n = T::of(self.value(*a).len() as f64);
                    let gv = g.data()[0] / n;
                    accumulate(&mut grads, *a, Tensor::full(self.shape(*a), gv));
                }
                Op::Dropout(a, mask) => {
                    let data = g.data().iter().zip(mask).map(|(&x, &m)| x * m).collect();
                    accumulate(&mut grads, *a, Tensor::from_vec(g.shape(), data)?);
                }
                Op::SparseMatMul(s, h) => {
                    let gh = sparse_product(&s.t_offsets, &s.t_indices, &g);
                    accumulate(&mut grads, *h, gh);
                }
                Op::BceWithLogits { logits, targets, weights } => {
                    let gv = g.data()[0];
                    let data = self
                        .value(*logits)
                        .data()
                        .iter()
                        .zip(targets)
                        .zip(weights)
                        .map(|((&x, &y), &w)| gv * w * (sigmoid(x) - y))
                        .collect();
                    accumulate(&mut grads, *logits, Tensor::from_vec(self.shape(*logits), data)?);
                }
                Op::SquaredError { pred, targets, weights } => {
                    let gv = g.data()[0];
                    let two = T::of(2.0);
                    let data = self
                        .value(*pred)
                        .data()
                        .iter()
                        .zip(targets)
                        .zip(weights)
                        .map(|((&p, &y), &w)| gv * two * w * (p - y))
                        .collect();
                    accumulate(&mut grads, *pred, Tensor::from_vec(self.shape(*pred), data)?);
                }
            }
        }
        Ok(out)
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data).expect("zip_map shape")
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}
