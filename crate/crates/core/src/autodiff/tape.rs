use super::tensor::{gemm, Tensor};
use super::AutodiffError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise kinds. Binary kinds accept equal shapes or a `1×1` operand on either side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Square,
    Tanh,
    Relu,
    Sigmoid,
    Softplus,
    Sqrt,
}

impl Elementwise {
    pub fn is_binary(self) -> bool {
        matches!(self, Self::Add | Self::Sub | Self::Mul | Self::Div)
    }

    fn name(self) -> &'static str {
        match self {
            Self::Add => "add",
            Self::Sub => "sub",
            Self::Mul => "mul",
            Self::Div => "div",
            Self::Neg => "neg",
            Self::Exp => "exp",
            Self::Log => "log",
            Self::Square => "square",
            Self::Tanh => "tanh",
            Self::Relu => "relu",
            Self::Sigmoid => "sigmoid",
            Self::Softplus => "softplus",
            Self::Sqrt => "sqrt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
}

/// Reduction axis. `Rows` collapses the row dimension (result `1×cols`),
/// `Cols` collapses the column dimension (result `rows×1`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    All,
    Rows,
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    /// `x · wᵀ + b` with `w: out×in`, `b: 1×out`.
    Affine(Var, Var, Var),
    Binary(Elementwise, Var, Var),
    Unary(Elementwise, Var),
    Scale(Var, f64),
    Offset(Var, f64),
    Clamp(Var, f64, f64),
    Reduce(Reduction, Axis, Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize, usize),
    RowNorm(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Affine(..) => "affine",
            Op::Binary(k, ..) | Op::Unary(k, _) => k.name(),
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Clamp(..) => "clamp",
            Op::Reduce(..) => "reduce",
            Op::Concat(_) => "concat",
            Op::SliceCols(..) => "slice",
            Op::RowNorm(_) => "row_norm",
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Constant => vec![],
            Op::MatMul(a, b) | Op::Binary(_, a, b) => vec![*a, *b],
            Op::Affine(x, w, b) => vec![*x, *w, *b],
            Op::Unary(_, a)
            | Op::Scale(a, _)
            | Op::Offset(a, _)
            | Op::Clamp(a, ..)
            | Op::Reduce(_, _, a)
            | Op::SliceCols(a, ..)
            | Op::RowNorm(a) => vec![*a],
            Op::Concat(parts) => parts.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Define-by-run record of a computation. Node ids are insertion order, so
/// every node's inputs precede it.
#[derive(Clone, Debug, Default)]
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

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> Result<f64, AutodiffError> {
        self.value(v).item()
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(Op::Leaf, value, true)
    }

    /// Input that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(Op::Constant, value, false)
    }

    /// Copies the current value of `v` as a constant, cutting the gradient path.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn push_raw(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var, AutodiffError> {
        let value = eval(&op, &self.nodes)?;
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(op, value, requires_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::MatMul(a, b))
    }

    /// Dense layer `x · wᵀ + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Affine(x, w, b))
    }

    /// Generic elementwise entry point; `b` is required exactly for binary kinds.
    pub fn elementwise(
        &mut self,
        kind: Elementwise,
        a: Var,
        b: Option<Var>,
    ) -> Result<Var, AutodiffError> {
        match (kind.is_binary(), b) {
            (true, Some(b)) => self.push(Op::Binary(kind, a, b)),
            (false, None) => self.push(Op::Unary(kind, a)),
            _ => Err(AutodiffError::Arity { op: kind.name() }),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Binary(Elementwise::Add, a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Binary(Elementwise::Sub, a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Binary(Elementwise::Mul, a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Binary(Elementwise::Div, a, b))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Unary(Elementwise::Neg, a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Unary(Elementwise::Exp, a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Unary(Elementwise::Log, a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Unary(Elementwise::Square, a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Unary(Elementwise::Tanh, a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Unary(Elementwise::Relu, a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Unary(Elementwise::Sigmoid, a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Unary(Elementwise::Softplus, a))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::Unary(Elementwise::Sqrt, a))
    }

    /// Multiplies by a fixed scalar.
    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var, AutodiffError> {
        self.push(Op::Scale(a, factor))
    }

    /// Adds a fixed scalar.
    pub fn offset(&mut self, a: Var, shift: f64) -> Result<Var, AutodiffError> {
        self.push(Op::Offset(a, shift))
    }

    /// Clamps into `[lo, hi]`; gradient is zero where the clamp is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, AutodiffError> {
        self.push(Op::Clamp(a, lo, hi))
    }

    pub fn reduce(&mut self, kind: Reduction, a: Var, axis: Axis) -> Result<Var, AutodiffError> {
        self.push(Op::Reduce(kind, axis, a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.reduce(Reduction::Sum, a, Axis::All)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.reduce(Reduction::Mean, a, Axis::All)
    }

    /// Column-wise concatenation preserving the order of `parts`.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        self.push(Op::Concat(parts.to_vec()))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        self.push(Op::SliceCols(a, start, end))
    }

    /// Euclidean norm of each row, `rows×1`. Subgradient zero at the origin.
    pub fn row_norm(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.push(Op::RowNorm(a))
    }

    /// Recomputes every node with some leaf or constant values replaced.
    pub fn replay(&self, overrides: &[(Var, Tensor)]) -> Result<Tape, AutodiffError> {
        let mut out = Tape {
            nodes: Vec::with_capacity(self.nodes.len()),
        };
        for (i, node) in self.nodes.iter().enumerate() {
            let value = match node.op {
                Op::Leaf | Op::Constant => match overrides.iter().find(|(v, _)| v.0 == i) {
                    Some((_, t)) => {
                        if t.shape() != node.value.shape() {
                            return Err(AutodiffError::ShapeMismatch {
                                op: "replay",
                                left: node.value.shape(),
                                right: t.shape(),
                            });
                        }
                        t.clone()
                    }
                    None => node.value.clone(),
                },
                _ => eval(&node.op, &out.nodes)?,
            };
            out.nodes.push(Node {
                op: node.op.clone(),
                value,
                requires_grad: node.requires_grad,
            });
        }
        Ok(out)
    }

    /// Reverse accumulation from a scalar node in a single pass over the tape.
    pub fn backward(&self, loss: Var) -> Result<GradientMap, AutodiffError> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(AutodiffError::NotScalar { shape });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        grads.resize(self.nodes.len(), None);
        Ok(GradientMap {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    gemm(false, g, true, bv, buf(grads, *a, av.shape()), 1.0);
                }
                if self.wants(*b) {
                    gemm(true, av, false, g, buf(grads, *b, bv.shape()), 1.0);
                }
            }
            Op::Affine(x, w, b) => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                if self.wants(*x) {
                    gemm(false, g, false, wv, buf(grads, *x, xv.shape()), 1.0);
                }
                if self.wants(*w) {
                    gemm(true, g, false, xv, buf(grads, *w, wv.shape()), 1.0);
                }
                if self.wants(*b) {
                    let db = buf(grads, *b, (1, g.cols()));
                    for r in 0..g.rows() {
                        for (d, gv) in db.data_mut().iter_mut().zip(g.row_slice(r)) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Binary(kind, a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let at = |k: usize, t: &Tensor| {
                    if t.is_scalar() {
                        t.data()[0]
                    } else {
                        t.data()[k]
                    }
                };
                let n = g.len();
                if self.wants(*a) {
                    let local: Vec<f64> = (0..n)
                        .map(|k| {
                            let gk = g.data()[k];
                            match kind {
                                Elementwise::Add | Elementwise::Sub => gk,
                                Elementwise::Mul => gk * at(k, bv),
                                Elementwise::Div => gk / at(k, bv),
                                _ => unreachable!(),
                            }
                        })
                        .collect();
                    accumulate(grads, *a, av.shape(), &local);
                }
                if self.wants(*b) {
                    let local: Vec<f64> = (0..n)
                        .map(|k| {
                            let gk = g.data()[k];
                            match kind {
                                Elementwise::Add => gk,
                                Elementwise::Sub => -gk,
                                Elementwise::Mul => gk * at(k, av),
                                Elementwise::Div => {
                                    let bk = at(k, bv);
                                    -gk * at(k, av) / (bk * bk)
                                }
                                _ => unreachable!(),
                            }
                        })
                        .collect();
                    accumulate(grads, *b, bv.shape(), &local);
                }
            }
            Op::Unary(kind, a) => {
                let x = self.value(*a);
                let local: Vec<f64> = x
                    .data()
                    .iter()
                    .zip(y.data())
                    .zip(g.data())
                    .map(|((&xv, &yv), &gv)| {
                        gv * match kind {
                            Elementwise::Neg => -1.0,
                            Elementwise::Exp => yv,
                            Elementwise::Log => 1.0 / xv,
                            Elementwise::Square => 2.0 * xv,
                            Elementwise::Tanh => 1.0 - yv * yv,
                            Elementwise::Relu => {
                                if xv > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Elementwise::Sigmoid => yv * (1.0 - yv),
                            Elementwise::Softplus => sigmoid(xv),
                            Elementwise::Sqrt => 0.5 / yv,
                            _ => unreachable!(),
                        }
                    })
                    .collect();
                accumulate(grads, *a, x.shape(), &local);
            }
            Op::Scale(a, f) => {
                let local: Vec<f64> = g.data().iter().map(|v| v * f).collect();
                accumulate(grads, *a, g.shape(), &local);
            }
            Op::Offset(a, _) => accumulate(grads, *a, g.shape(), g.data()),
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a);
                let local: Vec<f64> = x
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&xv, &gv)| if xv > *lo && xv < *hi { gv } else { 0.0 })
                    .collect();
                accumulate(grads, *a, x.shape(), &local);
            }
            Op::Reduce(kind, axis, a) => {
                let x = self.value(*a);
                let (rows, cols) = x.shape();
                let count = match axis {
                    Axis::All => rows * cols,
                    Axis::Rows => rows,
                    Axis::Cols => cols,
                } as f64;
                let scale = match kind {
                    Reduction::Sum => 1.0,
                    Reduction::Mean => 1.0 / count,
                };
                let dst = buf(grads, *a, x.shape());
                for r in 0..rows {
                    for c in 0..cols {
                        let gv = match axis {
                            Axis::All => g.data()[0],
                            Axis::Rows => g.data()[c],
                            Axis::Cols => g.data()[r],
                        };
                        dst.data_mut()[r * cols + c] += gv * scale;
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (rows, cols) = self.value(*p).shape();
                    if self.wants(*p) {
                        let dst = buf(grads, *p, (rows, cols));
                        for r in 0..rows {
                            let src = &g.row_slice(r)[offset..offset + cols];
                            for (d, s) in
                                dst.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(src)
                            {
                                *d += s;
                            }
                        }
                    }
                    offset += cols;
                }
            }
            Op::SliceCols(a, start, _) => {
                let (rows, cols) = self.value(*a).shape();
                let dst = buf(grads, *a, (rows, cols));
                let width = g.cols();
                for r in 0..rows {
                    for c in 0..width {
                        dst.data_mut()[r * cols + start + c] += g.get(r, c);
                    }
                }
            }
            Op::RowNorm(a) => {
                let x = self.value(*a);
                let (rows, cols) = x.shape();
                let dst = buf(grads, *a, (rows, cols));
                for r in 0..rows {
                    let norm = y.data()[r];
                    if norm == 0.0 {
                        continue;
                    }
                    let factor = g.data()[r] / norm;
                    for c in 0..cols {
                        dst.data_mut()[r * cols + c] += factor * x.get(r, c);
                    }
                }
            }
        }
    }
}

fn buf(grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize)) -> &mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}

/// Adds `local` (shaped like the op output) into the gradient of `v`, summing
/// when `v` was scalar-broadcast.
fn accumulate(grads: &mut [Option<Tensor>], v: Var, shape: (usize, usize), local: &[f64]) {
    let dst = buf(grads, v, shape);
    if dst.len() == local.len() {
        for (d, l) in dst.data_mut().iter_mut().zip(local) {
            *d += l;
        }
    } else {
        dst.data_mut()[0] += local.iter().sum::<f64>();
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

fn eval(op: &Op, nodes: &[Node]) -> Result<Tensor, AutodiffError> {
    let val = |v: &Var| &nodes[v.0].value;
    let out = match op {
        Op::Leaf | Op::Constant => unreachable!("inputs are pushed directly"),
        Op::MatMul(a, b) => val(a).matmul(val(b))?,
        Op::Affine(x, w, b) => {
            let (xv, wv, bv) = (val(x), val(w), val(b));
            if xv.cols() != wv.cols() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "affine",
                    left: xv.shape(),
                    right: wv.shape(),
                });
            }
            if bv.shape() != (1, wv.rows()) {
                return Err(AutodiffError::ShapeMismatch {
                    op: "affine bias",
                    left: wv.shape(),
                    right: bv.shape(),
                });
            }
            let mut out = Tensor::from_fn(xv.rows(), wv.rows(), |_, c| bv.data()[c]);
            gemm(false, xv, true, wv, &mut out, 1.0);
            out
        }
        Op::Binary(kind, a, b) => {
            let (av, bv) = (val(a), val(b));
            let shape = if av.shape() == bv.shape() || bv.is_scalar() {
                av.shape()
            } else if av.is_scalar() {
                bv.shape()
            } else {
                return Err(AutodiffError::ShapeMismatch {
                    op: kind.name(),
                    left: av.shape(),
                    right: bv.shape(),
                });
            };
            let at = |k: usize, t: &Tensor| {
                if t.is_scalar() {
                    t.data()[0]
                } else {
                    t.data()[k]
                }
            };
            if *kind == Elementwise::Div && bv.data().contains(&0.0) {
                return Err(AutodiffError::Domain {
                    op: "div",
                    detail: "division by zero".into(),
                });
            }
            Tensor::from_fn(shape.0, shape.1, |r, c| {
                let k = r * shape.1 + c;
                let (x, y) = (at(k, av), at(k, bv));
                match kind {
                    Elementwise::Add => x + y,
                    Elementwise::Sub => x - y,
                    Elementwise::Mul => x * y,
                    Elementwise::Div => x / y,
                    _ => unreachable!(),
                }
            })
        }
        Op::Unary(kind, a) => {
            let x = val(a);
            match kind {
                Elementwise::Log | Elementwise::Sqrt => {
                    if let Some(bad) = x.data().iter().find(|&&v| v <= 0.0) {
                        return Err(AutodiffError::Domain {
                            op: kind.name(),
                            detail: format!("input {bad} is not strictly positive"),
                        });
                    }
                }
                _ => {}
            }
            x.map(|v| match kind {
                Elementwise::Neg => -v,
                Elementwise::Exp => v.exp(),
                Elementwise::Log => v.ln(),
                Elementwise::Square => v * v,
                Elementwise::Tanh => v.tanh(),
                Elementwise::Relu => v.max(0.0),
                Elementwise::Sigmoid => sigmoid(v),
                Elementwise::Softplus => softplus(v),
                Elementwise::Sqrt => v.sqrt(),
                _ => unreachable!(),
            })
        }
        Op::Scale(a, f) => val(a).map(|v| v * f),
        Op::Offset(a, s) => val(a).map(|v| v + s),
        Op::Clamp(a, lo, hi) => val(a).map(|v| v.clamp(*lo, *hi)),
        Op::Reduce(kind, axis, a) => {
            let x = val(a);
            if x.is_empty() {
                return Err(AutodiffError::Empty { op: "reduce" });
            }
            let (rows, cols) = x.shape();
            let (mut out, count) = match axis {
                Axis::All => (Tensor::scalar(x.sum()), rows * cols),
                Axis::Rows => {
                    let mut t = Tensor::zeros(1, cols);
                    for r in 0..rows {
                        for (d, v) in t.data_mut().iter_mut().zip(x.row_slice(r)) {
                            *d += v;
                        }
                    }
                    (t, rows)
                }
                Axis::Cols => (
                    Tensor::from_fn(rows, 1, |r, _| x.row_slice(r).iter().sum()),
                    cols,
                ),
            };
            if *kind == Reduction::Mean {
                let n = count as f64;
                out.data_mut().iter_mut().for_each(|v| *v /= n);
            }
            out
        }
        Op::Concat(parts) => {
            let Some(first) = parts.first() else {
                return Err(AutodiffError::Empty { op: "concat" });
            };
            let rows = val(first).rows();
            for p in parts {
                if val(p).rows() != rows {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "concat",
                        left: val(first).shape(),
                        right: val(p).shape(),
                    });
                }
            }
            let cols: usize = parts.iter().map(|p| val(p).cols()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for p in parts {
                    data.extend_from_slice(val(p).row_slice(r));
                }
            }
            Tensor::new(rows, cols, data)?
        }
        Op::SliceCols(a, start, end) => {
            let x = val(a);
            if start > end || *end > x.cols() {
                return Err(AutodiffError::SliceBounds {
                    start: *start,
                    end: *end,
                    cols: x.cols(),
                });
            }
            x.slice_cols(*start, *end)
        }
        Op::RowNorm(a) => {
            let x = val(a);
            Tensor::from_fn(x.rows(), 1, |r, _| {
                x.row_slice(r).iter().map(|v| v * v).sum::<f64>().sqrt()
            })
        }
    };
    if !out.all_finite() {
        return Err(AutodiffError::NonFinite { op: op.name() });
    }
    Ok(out)
}

/// Gradients produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct GradientMap {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl GradientMap {
    /// Gradient of `v`, zero if `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    /// Gradient of `v` if any reached it.
    pub fn try_get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Takes ownership of the gradient buffer, leaving zero behind.
    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}
