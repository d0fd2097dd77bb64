use super::{Real, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<R> {
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Neg(Var),
    Scale(Var, R),
    Offset(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Square(Var),
    Clamp(Var, R, R),
    AddBias(Var, Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    GatherCols(Var, Vec<usize>),
    RepeatRows(Var, usize),
    Reshape(Var),
    Cosine(Var, Var),
}

#[derive(Debug)]
struct Node<R> {
    value: Tensor<R>,
    op: Option<Op<R>>,
    requires_grad: bool,
}

/// Single-threaded recording of a differentiable computation.
#[derive(Debug)]
pub struct Tape<R> {
    nodes: Vec<Node<R>>,
    zero_norm_events: usize,
}

impl<R: Real> Default for Tape<R> {
    fn default() -> Self {
        Self::new()
    }
}

fn dim_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::Dimension {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

/// Row count and width of a rank-1 or rank-2 tensor seen as a matrix.
fn as_rows<R: Real>(t: &Tensor<R>) -> Option<(usize, usize)> {
    match t.shape() {
        [d] => Some((1, *d)),
        [n, d] => Some((*n, *d)),
        _ => None,
    }
}

impl<R: Real> Tape<R> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            zero_norm_events: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of nodes that carry a backward rule.
    pub fn recorded_ops(&self) -> usize {
        self.nodes.iter().filter(|n| n.op.is_some()).count()
    }

    /// How many cosine rows hit the zero-norm rule on this tape.
    pub fn zero_norm_events(&self) -> usize {
        self.zero_norm_events
    }

    pub fn value(&self, v: Var) -> &Tensor<R> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn scalar_value(&self, v: Var) -> Result<R> {
        self.value(v).item()
    }

    pub fn leaf(&mut self, value: Tensor<R>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: None,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<R>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<R>) -> Var {
        self.leaf(value, false)
    }

    pub fn scalar(&mut self, value: R) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// Untracked copy of `v`: the stop-gradient.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn push(&mut self, value: Tensor<R>, op: Op<R>, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op: if requires_grad { Some(op) } else { None },
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(dim_err("matmul", ta.shape(), tb.shape()));
        }
        let out = ta.matmul(tb)?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// Elementwise binary op with scalar-vs-tensor broadcasting only.
    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(R, R) -> R) -> Result<Tensor<R>> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = if ta.shape() == tb.shape() || tb.numel() == 1 {
            ta.shape().to_vec()
        } else if ta.numel() == 1 {
            tb.shape().to_vec()
        } else {
            return Err(dim_err(name, ta.shape(), tb.shape()));
        };
        let n = shape.iter().product::<usize>();
        let (da, db) = (ta.data(), tb.data());
        let pick = |d: &[R], i: usize| if d.len() == 1 { d[0] } else { d[i] };
        let data = (0..n).map(|i| f(pick(da, i), pick(db, i))).collect();
        Tensor::new(shape, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    /// Elementwise minimum; ties route the adjoint to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("min", a, b, |x, y| if y < x { y } else { x })?;
        Ok(self.push(out, Op::Min(a, b), &[a, b]))
    }

    fn unary(&mut self, a: Var, f: impl Fn(R) -> R) -> Tensor<R> {
        let t = self.value(a);
        Tensor {
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let out = self.unary(a, |x| -x);
        self.push(out, Op::Neg(a), &[a])
    }

    pub fn scale(&mut self, a: Var, c: R) -> Var {
        let out = self.unary(a, |x| x * c);
        self.push(out, Op::Scale(a, c), &[a])
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: R) -> Var {
        let out = self.unary(a, |x| x + c);
        self.push(out, Op::Offset(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.unary(a, |x| if x > R::zero() { x } else { R::zero() });
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.unary(a, |x| x.tanh());
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.unary(a, |x| x.exp());
        self.push(out, Op::Exp(a), &[a])
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let out = self.unary(a, |x| x.ln());
        self.push(out, Op::Log(a), &[a])
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.unary(a, softplus);
        self.push(out, Op::Softplus(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.unary(a, |x| x * x);
        self.push(out, Op::Square(a), &[a])
    }

    /// Clamp into `[lo, hi]`; the adjoint is zero outside the open interval.
    pub fn clamp(&mut self, a: Var, lo: R, hi: R) -> Var {
        let out = self.unary(a, |x| x.max(lo).min(hi));
        self.push(out, Op::Clamp(a, lo, hi), &[a])
    }

    /// `x + bias` with `bias` (width `d`) broadcast over the rows of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let d = tx.cols();
        if tx.rank() == 0 || tb.numel() != d {
            return Err(dim_err("add_bias", tx.shape(), tb.shape()));
        }
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(d) {
            for (v, &b) in row.iter_mut().zip(tb.data()) {
                *v = *v + b;
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s: R = t.data().iter().copied().sum();
        let m = s / R::of(t.numel() as f64);
        self.push(Tensor::scalar(m), Op::Mean(a), &[a])
    }

    /// Row sums of an `n x d` matrix, shape `[n]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (_, d) = as_rows(t).ok_or_else(|| dim_err("sum_cols", t.shape(), &[]))?;
        let data: Vec<R> = t.data().chunks(d).map(|r| r.iter().copied().sum()).collect();
        let out = Tensor::vector(data);
        Ok(self.push(out, Op::SumCols(a), &[a]))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.rows() != tb.rows() {
            return Err(dim_err("concat_cols", ta.shape(), tb.shape()));
        }
        let (n, p, q) = (ta.rows(), ta.cols(), tb.cols());
        let mut data = Vec::with_capacity(n * (p + q));
        for i in 0..n {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let out = Tensor::new(vec![n, p + q], data)?;
        Ok(self.push(out, Op::ConcatCols(a, b), &[a, b]))
    }

    /// Columns `start..end` of an `n x d` matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || start >= end || end > t.cols() {
            return Err(dim_err("slice_cols", t.shape(), &[start, end]));
        }
        let n = t.rows();
        let mut data = Vec::with_capacity(n * (end - start));
        for i in 0..n {
            data.extend_from_slice(&t.row(i)[start..end]);
        }
        let out = Tensor::new(vec![n, end - start], data)?;
        Ok(self.push(out, Op::SliceCols(a, start), &[a]))
    }

    /// Picks `a[i, idx[i]]` for every row, shape `[n]`.
    pub fn gather_cols(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || t.rows() != idx.len() || idx.iter().any(|&j| j >= t.cols()) {
            return Err(dim_err("gather_cols", t.shape(), &[idx.len()]));
        }
        let data = idx.iter().enumerate().map(|(i, &j)| t.row(i)[j]).collect();
        let out = Tensor::vector(data);
        Ok(self.push(out, Op::GatherCols(a, idx.to_vec()), &[a]))
    }

    /// Repeats each row `times` times consecutively: `n x d -> (n*times) x d`.
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || times == 0 {
            return Err(dim_err("repeat_rows", t.shape(), &[times]));
        }
        let n = t.rows();
        let mut data = Vec::with_capacity(t.numel() * times);
        for i in 0..n {
            for _ in 0..times {
                data.extend_from_slice(t.row(i));
            }
        }
        let out = Tensor::new(vec![n * times, t.cols()], data)?;
        Ok(self.push(out, Op::RepeatRows(a, times), &[a]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    /// Cosine similarity of `x` and `y`. Vectors give a scalar, `n x d`
    /// matrices give one similarity per row (shape `[n]`). A row where
    /// either side has zero norm yields 0 with zero adjoint and bumps
    /// [`Tape::zero_norm_events`].
    pub fn cosine_similarity(&mut self, x: Var, y: Var) -> Result<Var> {
        let (tx, ty) = (self.value(x), self.value(y));
        let rows = as_rows(tx).filter(|_| tx.shape() == ty.shape());
        let (n, d) = rows.ok_or_else(|| dim_err("cosine_similarity", tx.shape(), ty.shape()))?;
        let mut data = Vec::with_capacity(n);
        let mut zero_rows = 0;
        for i in 0..n {
            let (a, b) = (&tx.data()[i * d..(i + 1) * d], &ty.data()[i * d..(i + 1) * d]);
            let (dot, na, nb) = dot_norms(a, b);
            if na == R::zero() || nb == R::zero() {
                zero_rows += 1;
                data.push(R::zero());
            } else {
                data.push(dot / (na * nb));
            }
        }
        let out = if tx.rank() == 1 {
            Tensor::scalar(data[0])
        } else {
            Tensor::vector(data)
        };
        self.zero_norm_events += zero_rows;
        Ok(self.push(out, Op::Cosine(x, y), &[x, y]))
    }

    /// Reverse sweep from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<R>> {
        let node = &self.nodes[loss.0];
        if node.value.numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                node.value.shape()
            )));
        }
        if !node.requires_grad {
            return Err(TensorError::Contract(
                "backward through a value that does not require grad".into(),
            ));
        }
        let mut grads: Vec<Option<Vec<R>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![R::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            let Some(op) = &node.op else { continue };
            let Some(g) = grads[i].take() else { continue };
            self.propagate(op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<R>>], v: Var) -> Option<&'g mut Vec<R>> {
        if !self.nodes[v.0].requires_grad {
            return None;
        }
        let n = self.nodes[v.0].value.numel();
        Some(grads[v.0].get_or_insert_with(|| vec![R::zero(); n]))
    }

    /// Accumulates `g * local(i)` into `v`, summing when `v` was broadcast.
    fn acc_elementwise(&self, grads: &mut [Option<Vec<R>>], v: Var, g: &[R], local: impl Fn(usize) -> R) {
        if let Some(dst) = self.acc(grads, v) {
            if dst.len() == 1 && g.len() > 1 {
                let s: R = g.iter().enumerate().map(|(i, &gi)| gi * local(i)).sum();
                dst[0] = dst[0] + s;
            } else {
                for (i, (d, &gi)) in dst.iter_mut().zip(g).enumerate() {
                    *d = *d + gi * local(i);
                }
            }
        }
    }

    fn propagate(&self, op: &Op<R>, out: &Tensor<R>, g: &[R], grads: &mut [Option<Vec<R>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        let pick = |d: &[R], i: usize| if d.len() == 1 { d[0] } else { d[i] };
        match op {
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if let Some(da) = self.acc(grads, *a) {
                    R::gemm(m, n, k, g, false, tb.data(), true, da, R::one());
                }
                if let Some(db) = self.acc(grads, *b) {
                    R::gemm(k, m, n, ta.data(), true, g, false, db, R::one());
                }
            }
            Op::Add(a, b) => {
                self.acc_elementwise(grads, *a, g, |_| R::one());
                self.acc_elementwise(grads, *b, g, |_| R::one());
            }
            Op::Sub(a, b) => {
                self.acc_elementwise(grads, *a, g, |_| R::one());
                self.acc_elementwise(grads, *b, g, |_| -R::one());
            }
            Op::Mul(a, b) => {
                let (da, db) = (val(*a), val(*b));
                self.acc_elementwise(grads, *a, g, |i| pick(db, i));
                self.acc_elementwise(grads, *b, g, |i| pick(da, i));
            }
            Op::Min(a, b) => {
                let (da, db) = (val(*a), val(*b));
                let a_wins = |i: usize| !(pick(db, i) < pick(da, i));
                self.acc_elementwise(grads, *a, g, |i| if a_wins(i) { R::one() } else { R::zero() });
                self.acc_elementwise(grads, *b, g, |i| if a_wins(i) { R::zero() } else { R::one() });
            }
            Op::Neg(a) => self.acc_elementwise(grads, *a, g, |_| -R::one()),
            Op::Scale(a, c) => self.acc_elementwise(grads, *a, g, |_| *c),
            Op::Offset(a) | Op::Reshape(a) => self.acc_elementwise(grads, *a, g, |_| R::one()),
            Op::Relu(a) => {
                let x = val(*a);
                self.acc_elementwise(grads, *a, g, |i| if x[i] > R::zero() { R::one() } else { R::zero() });
            }
            Op::Tanh(a) => {
                let y = out.data();
                self.acc_elementwise(grads, *a, g, |i| R::one() - y[i] * y[i]);
            }
            Op::Exp(a) => {
                let y = out.data();
                self.acc_elementwise(grads, *a, g, |i| y[i]);
            }
            Op::Log(a) => {
                let x = val(*a);
                self.acc_elementwise(grads, *a, g, |i| R::one() / x[i]);
            }
            Op::Softplus(a) => {
                let x = val(*a);
                self.acc_elementwise(grads, *a, g, |i| sigmoid(x[i]));
            }
            Op::Square(a) => {
                let x = val(*a);
                let two = R::of(2.0);
                self.acc_elementwise(grads, *a, g, |i| two * x[i]);
            }
            Op::Clamp(a, lo, hi) => {
                let x = val(*a);
                self.acc_elementwise(grads, *a, g, |i| {
                    if x[i] > *lo && x[i] < *hi {
                        R::one()
                    } else {
                        R::zero()
                    }
                });
            }
            Op::AddBias(x, bias) => {
                self.acc_elementwise(grads, *x, g, |_| R::one());
                if let Some(db) = self.acc(grads, *bias) {
                    let d = db.len();
                    for row in g.chunks(d) {
                        for (acc, &gi) in db.iter_mut().zip(row) {
                            *acc = *acc + gi;
                        }
                    }
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                let scale = match op {
                    Op::Mean(_) => g[0] / R::of(self.value(*a).numel() as f64),
                    _ => g[0],
                };
                if let Some(da) = self.acc(grads, *a) {
                    for d in da.iter_mut() {
                        *d = *d + scale;
                    }
                }
            }
            Op::SumCols(a) => {
                if let Some(da) = self.acc(grads, *a) {
                    let d = da.len() / g.len();
                    for (row, &gi) in da.chunks_mut(d).zip(g) {
                        for v in row {
                            *v = *v + gi;
                        }
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let p = self.value(*a).cols();
                let w = out.cols();
                if let Some(da) = self.acc(grads, *a) {
                    for (dst, row) in da.chunks_mut(p).zip(g.chunks(w)) {
                        for (d, &gi) in dst.iter_mut().zip(&row[..p]) {
                            *d = *d + gi;
                        }
                    }
                }
                if let Some(db) = self.acc(grads, *b) {
                    let q = w - p;
                    for (dst, row) in db.chunks_mut(q).zip(g.chunks(w)) {
                        for (d, &gi) in dst.iter_mut().zip(&row[p..]) {
                            *d = *d + gi;
                        }
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let d = self.value(*a).cols();
                let w = out.cols();
                if let Some(da) = self.acc(grads, *a) {
                    for (dst, row) in da.chunks_mut(d).zip(g.chunks(w)) {
                        for (dv, &gi) in dst[*start..*start + w].iter_mut().zip(row) {
                            *dv = *dv + gi;
                        }
                    }
                }
            }
            Op::GatherCols(a, idx) => {
                let d = self.value(*a).cols();
                if let Some(da) = self.acc(grads, *a) {
                    for (i, (&j, &gi)) in idx.iter().zip(g).enumerate() {
                        da[i * d + j] = da[i * d + j] + gi;
                    }
                }
            }
            Op::RepeatRows(a, times) => {
                let d = self.value(*a).cols();
                if let Some(da) = self.acc(grads, *a) {
                    for (i, chunk) in g.chunks(d * times).enumerate() {
                        let dst = &mut da[i * d..(i + 1) * d];
                        for row in chunk.chunks(d) {
                            for (dv, &gi) in dst.iter_mut().zip(row) {
                                *dv = *dv + gi;
                            }
                        }
                    }
                }
            }
            Op::Cosine(x, y) => {
                let (tx, ty) = (self.value(*x), self.value(*y));
                let d = tx.cols();
                let (xd, yd) = (tx.data(), ty.data());
                let mut gx = vec![R::zero(); xd.len()];
                let mut gy = vec![R::zero(); yd.len()];
                for (i, &gi) in g.iter().enumerate() {
                    let r = i * d..(i + 1) * d;
                    let (a, b) = (&xd[r.clone()], &yd[r.clone()]);
                    let (dot, na, nb) = dot_norms(a, b);
                    if na == R::zero() || nb == R::zero() {
                        continue;
                    }
                    let c = dot / (na * nb);
                    let inv = R::one() / (na * nb);
                    let (ca, cb) = (c / (na * na), c / (nb * nb));
                    for j in 0..d {
                        gx[r.start + j] = gi * (b[j] * inv - ca * a[j]);
                        gy[r.start + j] = gi * (a[j] * inv - cb * b[j]);
                    }
                }
                self.acc_elementwise(grads, *x, &gx, |_| R::one());
                self.acc_elementwise(grads, *y, &gy, |_| R::one());
            }
        }
    }
}

fn dot_norms<R: Real>(a: &[R], b: &[R]) -> (R, R, R) {
    let (mut dot, mut aa, mut bb) = (R::zero(), R::zero(), R::zero());
    for (&x, &y) in a.iter().zip(b) {
        dot = dot + x * y;
        aa = aa + x * x;
        bb = bb + y * y;
    }
    (dot, aa.sqrt(), bb.sqrt())
}

pub(crate) fn softplus<R: Real>(x: R) -> R {
    x.max(R::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<R> {
    grads: Vec<Option<Vec<R>>>,
}

impl<R: Real> Gradients<R> {
    /// Gradient of the loss w.r.t. `v`; `None` when `v` is untracked or
    /// unreachable from the loss.
    pub fn get(&self, v: Var) -> Option<&[R]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn get_tensor(&self, tape: &Tape<R>, v: Var) -> Option<Tensor<R>> {
        self.get(v)
            .map(|g| Tensor::new(tape.value(v).shape().to_vec(), g.to_vec()).expect("grad shape"))
    }
}
