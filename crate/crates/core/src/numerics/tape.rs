//! Reverse-mode differentiation over a linear record of 2D tensor ops.
//!
//! Every op appends a node; node order is therefore a topological order and
//! `backward` walks it once in reverse.

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm, Tensor};
use super::{NumericsError, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Sigmoid(Var),
    Relu(Var),
    Silu(Var),
    Softplus(Var),
    Log(Var),
    Square(Var),
    Recip(Var),
    LogAddExp(Var, Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    SumAll(Var),
    MeanAll(Var),
    SumRows(Var),
    SumCols(Var),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Parameter leaves bound onto a tape for one forward pass.
#[derive(Clone, Debug)]
pub struct Bindings {
    vars: Vec<Var>,
}

impl Bindings {
    pub fn get(&self, id: ParamId) -> Var {
        self.vars[id.index()]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros if `v` does not influence the loss.
    pub fn of(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Gradients for every bound parameter, in store order.
    pub fn for_params(&self, bindings: &Bindings) -> Vec<Tensor> {
        bindings.vars.iter().map(|&v| self.of(v)).collect()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant or input leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records every parameter of `store` as a leaf.
    pub fn bind(&mut self, store: &ParamStore) -> Bindings {
        let vars = store
            .values()
            .iter()
            .map(|t| self.leaf(t.clone()))
            .collect();
        Bindings { vars }
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> NumericsError {
        NumericsError::ShapeMismatch {
            op,
            lhs: self.val(a).shape().to_vec(),
            rhs: self.val(b).shape().to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).matmul(self.val(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).add(self.val(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).sub(self.val(b))?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).mul(self.val(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// `a[m, n] + row[1, n]` broadcast over the leading axis.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.val(a), self.val(row));
        x.expect_2d("add_row")?;
        if r.len() != x.cols() {
            return Err(self.mismatch("add_row", a, row));
        }
        let mut out = x.clone();
        let c = x.cols();
        for chunk in out.data_mut().chunks_mut(c.max(1)) {
            for (o, b) in chunk.iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// `a[m, n] * s[m, 1]`, scaling each row by its own factor.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var> {
        let (x, f) = (self.val(a), self.val(s));
        x.expect_2d("scale_rows")?;
        if f.len() != x.rows() {
            return Err(self.mismatch("scale_rows", a, s));
        }
        let mut out = x.clone();
        let c = x.cols();
        if c > 0 {
            for (chunk, k) in out.data_mut().chunks_mut(c).zip(f.data()) {
                for o in chunk.iter_mut() {
                    *o *= k;
                }
            }
        }
        Ok(self.push(out, Op::ScaleRows(a, s)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.val(a).scale(c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.val(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a))
    }

    /// Column-wise concatenation of 2D operands with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.val(parts[0]).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.val(p);
            t.expect_2d("concat_cols")?;
            if t.rows() != rows {
                return Err(self.mismatch("concat_cols", parts[0], p));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.val(p).row(i));
            }
        }
        let out = Tensor::new(&[rows, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Row-wise concatenation of 2D operands with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.val(parts[0]).cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.val(p);
            t.expect_2d("concat_rows")?;
            if t.cols() != cols {
                return Err(self.mismatch("concat_rows", parts[0], p));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(&[rows, cols], data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.val(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| x * sigmoid(x));
        self.push(out, Op::Silu(a))
    }

    /// `log(1 + exp(x))`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.val(a).map(softplus);
        self.push(out, Op::Softplus(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let x = self.val(a);
        if x.data().iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(NumericsError::NonFinite("log"));
        }
        let out = x.map(f64::ln);
        Ok(self.push(out, Op::Log(a)))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.val(a).map(|x| x * x);
        self.push(out, Op::Square(a))
    }

    /// Elementwise `1 / x`; zero or non-finite inputs are rejected.
    pub fn recip(&mut self, a: Var) -> Result<Var> {
        let x = self.val(a);
        if x.data().iter().any(|&v| v == 0.0 || !v.is_finite()) {
            return Err(NumericsError::NonFinite("recip"));
        }
        let out = x.map(|v| 1.0 / v);
        Ok(self.push(out, Op::Recip(a)))
    }

    /// Elementwise `log(exp(a) + exp(b))`.
    pub fn log_add_exp(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.val(a).zip_map(self.val(b), "log_add_exp", |x, y| {
            let m = x.max(y);
            m + ((x - m).exp() + (y - m).exp()).ln()
        })?;
        Ok(self.push(out, Op::LogAddExp(a, b)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let out = self.val(a).softmax_rows()?;
        Ok(self.push(out, Op::SoftmaxRows(a)))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.val(a);
        x.expect_2d("log_softmax_rows")?;
        let mut out = x.clone();
        let c = x.cols();
        for row in out.data_mut().chunks_mut(c) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        Ok(self.push(out, Op::LogSoftmaxRows(a)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.val(a).sum());
        self.push(out, Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.val(a).mean());
        self.push(out, Op::MeanAll(a))
    }

    /// Sum over the leading axis: `[m, n] -> [1, n]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.val(a);
        x.expect_2d("sum_rows")?;
        let c = x.cols();
        let mut out = vec![0.0; c];
        for i in 0..x.rows() {
            for (o, v) in out.iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        let out = Tensor::new(&[1, c], out)?;
        Ok(self.push(out, Op::SumRows(a)))
    }

    /// Mean over the leading axis: `[m, n] -> [1, n]`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let m = self.val(a).rows();
        if m == 0 {
            return Err(NumericsError::Empty("mean_rows"));
        }
        let s = self.sum_rows(a)?;
        Ok(self.scale(s, 1.0 / m as f64))
    }

    /// Sum over the trailing axis: `[m, n] -> [m, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let x = self.val(a);
        x.expect_2d("sum_cols")?;
        let c = x.cols();
        let out: Vec<f64> = (0..x.rows())
            .map(|i| if c == 0 { 0.0 } else { x.row(i).iter().sum() })
            .collect();
        let out = Tensor::new(&[x.rows(), 1], out)?;
        Ok(self.push(out, Op::SumCols(a)))
    }

    /// Selects rows `idx` of a 2D operand (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let x = self.val(a);
        x.expect_2d("gather_rows")?;
        let c = x.cols();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= x.rows() {
                return Err(NumericsError::IndexOutOfRange {
                    index: i,
                    len: x.rows(),
                });
            }
            data.extend_from_slice(x.row(i));
        }
        let out = Tensor::new(&[idx.len(), c], data)?;
        Ok(self.push(out, Op::GatherRows(a, idx.to_vec())))
    }

    /// Sums row `p` of `a` into output row `idx[p]`; output has `rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, idx: &[usize], rows: usize) -> Result<Var> {
        let x = self.val(a);
        x.expect_2d("scatter_add_rows")?;
        if idx.len() != x.rows() {
            return Err(NumericsError::ShapeMismatch {
                op: "scatter_add_rows",
                lhs: x.shape().to_vec(),
                rhs: vec![idx.len()],
            });
        }
        let c = x.cols();
        let mut out = Tensor::zeros(&[rows, c]);
        for (p, &i) in idx.iter().enumerate() {
            if i >= rows {
                return Err(NumericsError::IndexOutOfRange {
                    index: i,
                    len: rows,
                });
            }
            let src = x.row(p);
            for (o, v) in out.row_mut(i).iter_mut().zip(src) {
                *o += v;
            }
        }
        Ok(self.push(out, Op::ScatterAddRows(a, idx.to_vec())))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.val(loss);
        if !lv.is_scalar() {
            return Err(NumericsError::NonScalarLoss(lv.shape().to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for id in (0..n).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            self.propagate(&node.op, &node.value, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self
                .nodes
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
        })
    }

    fn propagate(
        &self,
        op: &Op,
        out: &Tensor,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        let mut acc = |v: Var, d: Tensor| -> Result<()> {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&d),
                slot @ None => {
                    *slot = Some(d);
                    Ok(())
                }
            }
        };
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.val(*a), self.val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                let mut da = vec![0.0; m * k];
                gemm(m, n, k, g.data(), false, bv.data(), true, &mut da, 0.0);
                let mut db = vec![0.0; k * n];
                gemm(k, m, n, av.data(), true, g.data(), false, &mut db, 0.0);
                acc(*a, Tensor::new(&[m, k], da)?)?;
                acc(*b, Tensor::new(&[k, n], db)?)?;
            }
            Op::Add(a, b) => {
                acc(*a, g.clone())?;
                acc(*b, g.clone())?;
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone())?;
                acc(*b, g.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                acc(*a, g.mul(self.val(*b))?)?;
                acc(*b, g.mul(self.val(*a))?)?;
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone())?;
                let c = g.cols();
                let mut dr = vec![0.0; c];
                for i in 0..g.rows() {
                    for (o, v) in dr.iter_mut().zip(g.row(i)) {
                        *o += v;
                    }
                }
                let shape = self.val(*row).shape().to_vec();
                acc(*row, Tensor::new(&shape, dr)?)?;
            }
            Op::ScaleRows(a, s) => {
                let (x, f) = (self.val(*a), self.val(*s));
                let c = x.cols();
                let mut da = g.clone();
                let mut ds = vec![0.0; x.rows()];
                for i in 0..x.rows() {
                    let k = f.data()[i];
                    let gi = &g.data()[i * c..(i + 1) * c];
                    ds[i] = gi.iter().zip(x.row(i)).map(|(a, b)| a * b).sum();
                    for v in da.row_mut(i) {
                        *v *= k;
                    }
                }
                acc(*a, da)?;
                acc(*s, Tensor::new(f.shape(), ds)?)?;
            }
            Op::Scale(a, c) => acc(*a, g.scale(*c))?,
            Op::AddScalar(a) => acc(*a, g.clone())?,
            Op::ConcatCols(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for p in parts {
                    let w = self.val(*p).cols();
                    let mut d = Vec::with_capacity(rows * w);
                    for i in 0..rows {
                        d.extend_from_slice(&g.row(i)[offset..offset + w]);
                    }
                    acc(*p, Tensor::new(&[rows, w], d)?)?;
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut start = 0;
                for p in parts {
                    let len = self.val(*p).len();
                    let shape = self.val(*p).shape().to_vec();
                    acc(
                        *p,
                        Tensor::new(&shape, g.data()[start..start + len].to_vec())?,
                    )?;
                    start += len;
                }
            }
            Op::Sigmoid(a) => acc(*a, g.zip_map(out, "sigmoid", |g, y| g * y * (1.0 - y))?)?,
            Op::Relu(a) => acc(
                *a,
                g.zip_map(self.val(*a), "relu", |g, x| if x > 0.0 { g } else { 0.0 })?,
            )?,
            Op::Silu(a) => acc(
                *a,
                g.zip_map(self.val(*a), "silu", |g, x| {
                    let s = sigmoid(x);
                    g * s * (1.0 + x * (1.0 - s))
                })?,
            )?,
            Op::Softplus(a) => acc(
                *a,
                g.zip_map(self.val(*a), "softplus", |g, x| g * sigmoid(x))?,
            )?,
            Op::Log(a) => acc(*a, g.zip_map(self.val(*a), "log", |g, x| g / x)?)?,
            Op::Square(a) => acc(*a, g.zip_map(self.val(*a), "square", |g, x| 2.0 * g * x)?)?,
            Op::Recip(a) => acc(*a, g.zip_map(out, "recip", |g, y| -g * y * y)?)?,
            Op::LogAddExp(a, b) => {
                let (x, y) = (self.val(*a), self.val(*b));
                acc(*a, g.mul(&x.zip_map(y, "lae", |x, y| sigmoid(x - y))?)?)?;
                acc(*b, g.mul(&y.zip_map(x, "lae", |y, x| sigmoid(y - x))?)?)?;
            }
            Op::SoftmaxRows(a) => {
                let mut d = g.clone();
                for i in 0..out.rows() {
                    let y = out.row(i);
                    let dot: f64 = g.row(i).iter().zip(y).map(|(a, b)| a * b).sum();
                    for (j, v) in d.row_mut(i).iter_mut().enumerate() {
                        *v = y[j] * (*v - dot);
                    }
                }
                acc(*a, d)?;
            }
            Op::LogSoftmaxRows(a) => {
                let mut d = g.clone();
                for i in 0..out.rows() {
                    let total: f64 = g.row(i).iter().sum();
                    let y = out.row(i);
                    for (j, v) in d.row_mut(i).iter_mut().enumerate() {
                        *v -= y[j].exp() * total;
                    }
                }
                acc(*a, d)?;
            }
            Op::SumAll(a) => {
                let shape = self.val(*a).shape().to_vec();
                acc(*a, Tensor::full(&shape, g.item()))?;
            }
            Op::MeanAll(a) => {
                let x = self.val(*a);
                acc(*a, Tensor::full(x.shape(), g.item() / x.len() as f64))?;
            }
            Op::SumRows(a) => {
                let x = self.val(*a);
                let mut d = Tensor::zeros(x.shape());
                for i in 0..x.rows() {
                    d.row_mut(i).copy_from_slice(g.data());
                }
                acc(*a, d)?;
            }
            Op::SumCols(a) => {
                let x = self.val(*a);
                let mut d = Tensor::zeros(x.shape());
                for i in 0..x.rows() {
                    let gi = g.data()[i];
                    for v in d.row_mut(i) {
                        *v = gi;
                    }
                }
                acc(*a, d)?;
            }
            Op::GatherRows(a, idx) => {
                let x = self.val(*a);
                let mut d = Tensor::zeros(x.shape());
                for (p, &i) in idx.iter().enumerate() {
                    for (o, v) in d.row_mut(i).iter_mut().zip(g.row(p)) {
                        *o += v;
                    }
                }
                acc(*a, d)?;
            }
            Op::ScatterAddRows(a, idx) => {
                let x = self.val(*a);
                let c = x.cols();
                let mut d = Vec::with_capacity(x.len());
                for &i in idx {
                    d.extend_from_slice(&g.data()[i * c..(i + 1) * c]);
                }
                acc(*a, Tensor::new(x.shape(), d)?)?;
            }
        }
        Ok(())
    }

    /// Current value of a bound parameter as seen by this tape.
    pub fn param_value(&self, b: &Bindings, id: ParamId) -> &Tensor {
        self.val(b.get(id))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
