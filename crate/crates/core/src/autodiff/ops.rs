use super::tensor::{gemm, Real, Tensor};
use super::AdError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul { a: Var, w: Var },
    Bmm { a: Var, b: Var, trans_b: bool, batch: usize, m: usize, k: usize, n: usize },
    Add { a: Var, b: Var },
    AddBias { a: Var, bias: Var },
    Scale { a: Var, s: T },
    AddConst { a: Var },
    Softmax { a: Var },
    LayerNorm { a: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    Gelu { a: Var },
    Embedding { table: Var, ids: Vec<usize> },
    Concat1 { a: Var, b: Var },
    Slice1 { a: Var, start: usize },
    SwapAxes12 { a: Var },
    Transpose { a: Var },
    Reshape { a: Var },
    Mse { a: Var, target: Vec<T> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<T>, count: usize, ignore: Option<usize> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Record of one forward pass.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients indexed by node.
pub struct Grads<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> AdError {
    AdError::ShapeMismatch {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

fn gelu_parts<T: Real>(x: T) -> (T, T) {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = T::lit(0.044715);
    let half = T::lit(0.5);
    let one = T::one();
    let inner = c * (x + k * x * x * x);
    let t = inner.tanh();
    let y = half * x * (one + t);
    let dy = half * (one + t) + half * x * (one - t * t) * c * (one + T::lit(3.0) * k * x * x);
    (y, dy)
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
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

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    /// A differentiable input.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// `a [.., k] · w [k, n] -> [.., n]`.
    pub fn matmul(&mut self, a: Var, w: Var) -> Result<Var, AdError> {
        let (av, wv) = (self.value(a), self.value(w));
        let k = av.cols();
        if wv.shape.len() != 2 || wv.shape[0] != k {
            return Err(mismatch("matmul", &av.shape, &wv.shape));
        }
        let (m, n) = (av.rows(), wv.shape[1]);
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, &av.data, false, &wv.data, false, &mut out, false);
        let mut shape = av.shape.clone();
        *shape.last_mut().unwrap() = n;
        let ng = self.ng(a) || self.ng(w);
        Ok(self.push(Tensor { shape, data: out }, Op::MatMul { a, w }, ng))
    }

    /// Batched product over the leading axis: `a [B, m, k] · b [B, k, n]`, or
    /// `a · bᵀ` with `b [B, n, k]` when `trans_b` is set.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, AdError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape.len() != 3 || bv.shape.len() != 3 || av.shape[0] != bv.shape[0] {
            return Err(mismatch("bmm", &av.shape, &bv.shape));
        }
        let (batch, m, k) = (av.shape[0], av.shape[1], av.shape[2]);
        let (kb, n) = if trans_b {
            (bv.shape[2], bv.shape[1])
        } else {
            (bv.shape[1], bv.shape[2])
        };
        if kb != k {
            return Err(mismatch("bmm", &av.shape, &bv.shape));
        }
        let mut out = vec![T::zero(); batch * m * n];
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &av.data[i * m * k..],
                false,
                &bv.data[i * k * n..],
                trans_b,
                &mut out[i * m * n..],
                false,
            );
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(
            Tensor {
                shape: vec![batch, m, n],
                data: out,
            },
            Op::Bmm {
                a,
                b,
                trans_b,
                batch,
                m,
                k,
                n,
            },
            ng,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape != bv.shape {
            return Err(mismatch("add", &av.shape, &bv.shape));
        }
        let data = av.data.iter().zip(&bv.data).map(|(x, y)| *x + *y).collect();
        let shape = av.shape.clone();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor { shape, data }, Op::Add { a, b }, ng))
    }

    /// `a [.., n] + bias [n]`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, AdError> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.shape.len() != 1 || bv.shape[0] != av.cols() {
            return Err(mismatch("add_bias", &av.shape, &bv.shape));
        }
        let n = av.cols();
        let data = av.data.iter().enumerate().map(|(i, x)| *x + bv.data[i % n]).collect();
        let shape = av.shape.clone();
        let ng = self.ng(a) || self.ng(bias);
        Ok(self.push(Tensor { shape, data }, Op::AddBias { a, bias }, ng))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let av = self.value(a);
        let data = av.data.iter().map(|x| *x * s).collect();
        let shape = av.shape.clone();
        let ng = self.ng(a);
        self.push(Tensor { shape, data }, Op::Scale { a, s }, ng)
    }

    /// Adds a constant whose shape equals `a`'s trailing axes, broadcasting
    /// over the leading ones. Used for masks and positional encodings.
    pub fn add_const(&mut self, a: Var, c: &Tensor<T>) -> Result<Var, AdError> {
        let av = self.value(a);
        let tail = &av.shape[av.shape.len().saturating_sub(c.shape.len())..];
        if c.shape.len() > av.shape.len() || tail != c.shape.as_slice() {
            return Err(mismatch("add_const", &av.shape, &c.shape));
        }
        let n = c.len();
        let data = av.data.iter().enumerate().map(|(i, x)| *x + c.data[i % n]).collect();
        let shape = av.shape.clone();
        let ng = self.ng(a);
        Ok(self.push(Tensor { shape, data }, Op::AddConst { a }, ng))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let n = av.cols();
        let mut data = av.data.clone();
        for row in data.chunks_mut(n) {
            let mx = row.iter().fold(T::neg_infinity(), |m, v| m.max(*v));
            let mut sum = T::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v = *v / sum;
            }
        }
        let shape = av.shape.clone();
        let ng = self.ng(a);
        self.push(Tensor { shape, data }, Op::Softmax { a }, ng)
    }

    /// Normalizes the last axis, then applies `gamma·x̂ + beta`.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var) -> Result<Var, AdError> {
        let (av, gv, bv) = (self.value(a), self.value(gamma), self.value(beta));
        let n = av.cols();
        if gv.shape != [n] || bv.shape != [n] {
            return Err(mismatch("layer_norm", &av.shape, &gv.shape));
        }
        let eps = T::lit(1e-5);
        let nf = T::from_usize(n).unwrap();
        let mut xhat = Vec::with_capacity(av.len());
        let mut rstd = Vec::with_capacity(av.rows());
        let mut out = Vec::with_capacity(av.len());
        for row in av.data.chunks(n) {
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / nf;
            let r = T::one() / (var + eps).sqrt();
            rstd.push(r);
            for (j, v) in row.iter().enumerate() {
                let xh = (*v - mean) * r;
                xhat.push(xh);
                out.push(xh * gv.data[j] + bv.data[j]);
            }
        }
        let shape = av.shape.clone();
        let ng = self.ng(a) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(
            Tensor { shape, data: out },
            Op::LayerNorm {
                a,
                gamma,
                beta,
                xhat,
                rstd,
            },
            ng,
        ))
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = av.data.iter().map(|x| gelu_parts(*x).0).collect();
        let shape = av.shape.clone();
        let ng = self.ng(a);
        self.push(Tensor { shape, data }, Op::Gelu { a }, ng)
    }

    /// Rows of `table [V, D]` selected by `ids`, shape `[ids.len(), D]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, AdError> {
        let tv = self.value(table);
        if tv.shape.len() != 2 {
            return Err(mismatch("embedding", &tv.shape, &[]));
        }
        let (v, d) = (tv.shape[0], tv.shape[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(AdError::IndexOutOfRange {
                    op: "embedding",
                    index: id,
                    bound: v,
                });
            }
            data.extend_from_slice(&tv.data[id * d..(id + 1) * d]);
        }
        let ng = self.ng(table);
        Ok(self.push(
            Tensor {
                shape: vec![ids.len(), d],
                data,
            },
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            ng,
        ))
    }

    /// Concatenation of `[B, La, D]` and `[B, Lb, D]` along axis 1.
    pub fn concat1(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape.len() != 3 || bv.shape.len() != 3 || av.shape[0] != bv.shape[0] || av.shape[2] != bv.shape[2] {
            return Err(mismatch("concat", &av.shape, &bv.shape));
        }
        let (bsz, la, lb, d) = (av.shape[0], av.shape[1], bv.shape[1], av.shape[2]);
        let mut data = Vec::with_capacity(bsz * (la + lb) * d);
        for i in 0..bsz {
            data.extend_from_slice(&av.data[i * la * d..(i + 1) * la * d]);
            data.extend_from_slice(&bv.data[i * lb * d..(i + 1) * lb * d]);
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(
            Tensor {
                shape: vec![bsz, la + lb, d],
                data,
            },
            Op::Concat1 { a, b },
            ng,
        ))
    }

    /// Positions `start..start+len` of axis 1 of a `[B, L, D]` tensor.
    pub fn slice1(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AdError> {
        let av = self.value(a);
        if av.shape.len() != 3 || start + len > av.shape[1] {
            return Err(AdError::IndexOutOfRange {
                op: "slice",
                index: start + len,
                bound: av.shape.get(1).copied().unwrap_or(0),
            });
        }
        let (bsz, l, d) = (av.shape[0], av.shape[1], av.shape[2]);
        let mut data = Vec::with_capacity(bsz * len * d);
        for i in 0..bsz {
            let base = (i * l + start) * d;
            data.extend_from_slice(&av.data[base..base + len * d]);
        }
        let ng = self.ng(a);
        Ok(self.push(
            Tensor {
                shape: vec![bsz, len, d],
                data,
            },
            Op::Slice1 { a, start },
            ng,
        ))
    }

    /// `[A, B, C, D] -> [A, C, B, D]`; splits or merges attention heads.
    pub fn swap_axes12(&mut self, a: Var) -> Result<Var, AdError> {
        let av = self.value(a);
        if av.shape.len() != 4 {
            return Err(mismatch("swap_axes12", &av.shape, &[]));
        }
        let [n0, n1, n2, n3] = [av.shape[0], av.shape[1], av.shape[2], av.shape[3]];
        let data = swap12(&av.data, n0, n1, n2, n3);
        let ng = self.ng(a);
        Ok(self.push(
            Tensor {
                shape: vec![n0, n2, n1, n3],
                data,
            },
            Op::SwapAxes12 { a },
            ng,
        ))
    }

    /// Matrix transpose of a 2-D tensor.
    pub fn transpose(&mut self, a: Var) -> Result<Var, AdError> {
        let av = self.value(a);
        if av.shape.len() != 2 {
            return Err(mismatch("transpose", &av.shape, &[]));
        }
        let (m, n) = (av.shape[0], av.shape[1]);
        let data = swap12(&av.data, 1, m, n, 1);
        let ng = self.ng(a);
        Ok(self.push(Tensor { shape: vec![n, m], data }, Op::Transpose { a }, ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, AdError> {
        let av = self.value(a);
        if shape.iter().product::<usize>() != av.len() {
            return Err(mismatch("reshape", &av.shape, shape));
        }
        let data = av.data.clone();
        let ng = self.ng(a);
        Ok(self.push(
            Tensor {
                shape: shape.to_vec(),
                data,
            },
            Op::Reshape { a },
            ng,
        ))
    }

    /// Mean squared error against a constant target.
    pub fn mse(&mut self, a: Var, target: &[T]) -> Result<Var, AdError> {
        let av = self.value(a);
        if av.len() != target.len() {
            return Err(mismatch("mse", &av.shape, &[target.len()]));
        }
        let n = T::from_usize(av.len().max(1)).unwrap();
        let loss = av.data.iter().zip(target).map(|(p, t)| (*p - *t) * (*p - *t)).sum::<T>() / n;
        let ng = self.ng(a);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Mse {
                a,
                target: target.to_vec(),
            },
            ng,
        ))
    }

    /// Mean token cross-entropy of `logits [N, V]` against `targets`, skipping
    /// rows whose target equals `ignore`. Zero when every row is ignored.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], ignore: Option<usize>) -> Result<Var, AdError> {
        let lv = self.value(logits);
        let v = lv.cols();
        if lv.rows() != targets.len() {
            return Err(mismatch("cross_entropy", &lv.shape, &[targets.len()]));
        }
        let mut probs = vec![T::zero(); lv.len()];
        let mut total = T::zero();
        let mut count = 0usize;
        for (r, (row, &t)) in lv.data.chunks(v).zip(targets).enumerate() {
            if Some(t) == ignore {
                continue;
            }
            if t >= v {
                return Err(AdError::IndexOutOfRange {
                    op: "cross_entropy",
                    index: t,
                    bound: v,
                });
            }
            let mx = row.iter().fold(T::neg_infinity(), |m, x| m.max(*x));
            let mut sum = T::zero();
            for (j, x) in row.iter().enumerate() {
                let e = (*x - mx).exp();
                probs[r * v + j] = e;
                sum += e;
            }
            for p in &mut probs[r * v..(r + 1) * v] {
                *p = *p / sum;
            }
            total += sum.ln() + mx - row[t];
            count += 1;
        }
        let loss = if count > 0 {
            total / T::from_usize(count).unwrap()
        } else {
            T::zero()
        };
        let ng = self.ng(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                count,
                ignore,
            },
            ng,
        ))
    }

    /// Exact reverse-mode gradients of the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>, AdError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(AdError::NonScalarLoss(lv.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Grads { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut Vec<T>> {
        if !self.nodes[v.0].needs_grad {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]))
    }

    fn backprop(&self, idx: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul { a, w } => {
                let (av, wv) = (self.value(*a), self.value(*w));
                let (m, k, n) = (av.rows(), av.cols(), wv.shape[1]);
                if let Some(ga) = self.acc(grads, *a) {
                    gemm(m, n, k, g, false, &wv.data, true, ga, true);
                }
                if let Some(gw) = self.acc(grads, *w) {
                    gemm(k, m, n, &av.data, true, g, false, gw, true);
                }
            }
            &Op::Bmm {
                a,
                b,
                trans_b,
                batch,
                m,
                k,
                n,
            } => {
                let (av, bv) = (self.value(a), self.value(b));
                if let Some(ga) = self.acc(grads, a) {
                    for i in 0..batch {
                        let gi = &g[i * m * n..];
                        let bi = &bv.data[i * k * n..];
                        // dA = dC·op(B)ᵀ
                        gemm(m, n, k, gi, false, bi, !trans_b, &mut ga[i * m * k..], true);
                    }
                }
                if let Some(gb) = self.acc(grads, b) {
                    for i in 0..batch {
                        let gi = &g[i * m * n..];
                        let ai = &av.data[i * m * k..];
                        if trans_b {
                            // dB [n, k] = dCᵀ·A
                            gemm(n, m, k, gi, true, ai, false, &mut gb[i * k * n..], true);
                        } else {
                            // dB [k, n] = Aᵀ·dC
                            gemm(k, m, n, ai, true, gi, false, &mut gb[i * k * n..], true);
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if let Some(gv) = self.acc(grads, v) {
                        gv.iter_mut().zip(g).for_each(|(x, y)| *x += *y);
                    }
                }
            }
            Op::AddBias { a, bias } => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += *y);
                }
                if let Some(gb) = self.acc(grads, *bias) {
                    let n = gb.len();
                    for row in g.chunks(n) {
                        gb.iter_mut().zip(row).for_each(|(x, y)| *x += *y);
                    }
                }
            }
            Op::Scale { a, s } => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += *y * *s);
                }
            }
            Op::AddConst { a } | Op::Reshape { a } => {
                if let Some(ga) = self.acc(grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += *y);
                }
            }
            Op::Softmax { a } => {
                if let Some(ga) = self.acc(grads, *a) {
                    let n = out.cols();
                    for ((gr, yr), dr) in g.chunks(n).zip(out.data.chunks(n)).zip(ga.chunks_mut(n)) {
                        let dot: T = gr.iter().zip(yr).map(|(x, y)| *x * *y).sum();
                        for j in 0..n {
                            dr[j] += yr[j] * (gr[j] - dot);
                        }
                    }
                }
            }
            Op::LayerNorm {
                a,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let n = out.cols();
                let gam = &self.value(*gamma).data;
                if let Some(ga) = self.acc(grads, *a) {
                    let nf = T::from_usize(n).unwrap();
                    for (r, ((gr, xr), dr)) in g.chunks(n).zip(xhat.chunks(n)).zip(ga.chunks_mut(n)).enumerate() {
                        let mut s1 = T::zero();
                        let mut s2 = T::zero();
                        for j in 0..n {
                            let d = gr[j] * gam[j];
                            s1 += d;
                            s2 += d * xr[j];
                        }
                        let k = rstd[r] / nf;
                        for j in 0..n {
                            let d = gr[j] * gam[j];
                            dr[j] += k * (nf * d - s1 - xr[j] * s2);
                        }
                    }
                }
                if let Some(gg) = self.acc(grads, *gamma) {
                    for (gr, xr) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            gg[j] += gr[j] * xr[j];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *beta) {
                    for gr in g.chunks(n) {
                        gb.iter_mut().zip(gr).for_each(|(x, y)| *x += *y);
                    }
                }
            }
            Op::Gelu { a } => {
                let av = &self.value(*a).data;
                if let Some(ga) = self.acc(grads, *a) {
                    for ((d, x), gy) in ga.iter_mut().zip(av).zip(g) {
                        *d += *gy * gelu_parts(*x).1;
                    }
                }
            }
            Op::Embedding { table, ids } => {
                if let Some(gt) = self.acc(grads, *table) {
                    let d = out.cols();
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..d {
                            gt[id * d + j] += g[r * d + j];
                        }
                    }
                }
            }
            Op::Concat1 { a, b } => {
                let (bsz, l, d) = (out.shape[0], out.shape[1], out.shape[2]);
                let la = self.shape(*a)[1];
                let lb = l - la;
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..bsz {
                        for (x, y) in ga[i * la * d..(i + 1) * la * d].iter_mut().zip(&g[i * l * d..]) {
                            *x += *y;
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for i in 0..bsz {
                        for (x, y) in gb[i * lb * d..(i + 1) * lb * d].iter_mut().zip(&g[(i * l + la) * d..]) {
                            *x += *y;
                        }
                    }
                }
            }
            Op::Slice1 { a, start } => {
                let (bsz, len, d) = (out.shape[0], out.shape[1], out.shape[2]);
                let l = self.shape(*a)[1];
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..bsz {
                        let base = (i * l + start) * d;
                        for (x, y) in ga[base..base + len * d].iter_mut().zip(&g[i * len * d..]) {
                            *x += *y;
                        }
                    }
                }
            }
            Op::SwapAxes12 { a } => {
                if let Some(ga) = self.acc(grads, *a) {
                    let s = &out.shape;
                    let back = swap12(g, s[0], s[1], s[2], s[3]);
                    ga.iter_mut().zip(&back).for_each(|(x, y)| *x += *y);
                }
            }
            Op::Transpose { a } => {
                if let Some(ga) = self.acc(grads, *a) {
                    let back = swap12(g, 1, out.shape[0], out.shape[1], 1);
                    ga.iter_mut().zip(&back).for_each(|(x, y)| *x += *y);
                }
            }
            Op::Mse { a, target } => {
                if let Some(ga) = self.acc(grads, *a) {
                    let av = &self.value(*a).data;
                    let k = T::lit(2.0) * g[0] / T::from_usize(av.len().max(1)).unwrap();
                    for ((d, p), t) in ga.iter_mut().zip(av).zip(target) {
                        *d += k * (*p - *t);
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                count,
                ignore,
            } => {
                if *count == 0 {
                    return;
                }
                if let Some(gl) = self.acc(grads, *logits) {
                    let v = self.value(*logits).cols();
                    let k = g[0] / T::from_usize(*count).unwrap();
                    for (r, &t) in targets.iter().enumerate() {
                        if Some(t) == *ignore {
                            continue;
                        }
                        for j in 0..v {
                            gl[r * v + j] += k * probs[r * v + j];
                        }
                        gl[r * v + t] -= k;
                    }
                }
            }
        }
    }
}

/// Swaps axes 1 and 2 of a contiguous `[n0, n1, n2, n3]` array.
fn swap12<T: Copy>(src: &[T], n0: usize, n1: usize, n2: usize, n3: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    for i0 in 0..n0 {
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                let base = ((i0 * n1 + i1) * n2 + i2) * n3;
                out.extend_from_slice(&src[base..base + n3]);
            }
        }
    }
    out
}
