use super::{Activation, Array, ParamGrads, ParamStore, Scalar};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Differentiable primitive kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Dense,
    Activation,
    Sigmoid,
    Gather,
    Reshape,
    Concat,
    BatchedMatmul,
}

impl OpKind {
    pub fn parse(s: &str) -> Option<OpKind> {
        Some(match s {
            "dense" => OpKind::Dense,
            "activation" => OpKind::Activation,
            "sigmoid" => OpKind::Sigmoid,
            "gather" => OpKind::Gather,
            "reshape" => OpKind::Reshape,
            "concat" => OpKind::Concat,
            "batched_matmul" => OpKind::BatchedMatmul,
            _ => return None,
        })
    }
}

enum Op {
    Leaf,
    Param(usize),
    Dense { x: Var, w: Var, b: Var },
    Act { x: Var, act: Activation },
    Sigmoid { x: Var },
    Gather { x: Var, idx: Vec<usize> },
    Reshape { x: Var },
    Concat { a: Var, b: Var },
    Bmm { a: Var, b: Var },
}

impl Op {
    fn kind(&self) -> Option<OpKind> {
        Some(match self {
            Op::Leaf | Op::Param(_) => return None,
            Op::Dense { .. } => OpKind::Dense,
            Op::Act { .. } => OpKind::Activation,
            Op::Sigmoid { .. } => OpKind::Sigmoid,
            Op::Gather { .. } => OpKind::Gather,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Concat { .. } => OpKind::Concat,
            Op::Bmm { .. } => OpKind::BatchedMatmul,
        })
    }
}

struct Node<T> {
    // `None` for parameters, which are read from the store.
    value: Option<Array<T>>,
    op: Op,
}

/// Records a forward computation over parameters of one [`ParamStore`].
pub struct Tape<'p, T: Scalar> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_vars: Vec<Option<Var>>,
    fault: Option<OpKind>,
}

fn rows_of(shape: &[usize]) -> usize {
    shape[..shape.len().saturating_sub(1)].iter().product()
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
            fault: None,
        }
    }

    /// Scales the input gradients of every `kind` op by 1.5 during backward.
    /// Exists so gradient checking can be shown to catch a broken backward.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, kind: Option<OpKind>) {
        self.fault = kind;
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array<T> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(a), _) => a,
            (None, Op::Param(id)) => self.params.value(*id),
            _ => unreachable!("only parameter nodes borrow their value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, value: Array<T>, op: Op, name: &str) -> Result<Var> {
        value.ensure_finite(name)?;
        self.nodes.push(Node { value: Some(value), op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Array<T>) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, name: &str) -> Result<Var> {
        let id = self.params.id(name)?;
        if let Some(v) = self.param_vars[id] {
            return Ok(v);
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id] = Some(v);
        Ok(v)
    }

    /// `x·W + b` over the last axis of `x`; `W` is I×O, `b` has O entries.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x).to_vec(), self.shape(w).to_vec(), self.shape(b).to_vec());
        let i = *xs.last().unwrap_or(&0);
        if ws.len() != 2 || ws[0] != i || bs != [ws[1]] {
            return Err(Error::shape("dense", format!("W [{i}, O], b [O]"), format!("W {ws:?}, b {bs:?}")));
        }
        let o = ws[1];
        let rows = rows_of(&xs);
        let mut out = vec![T::zero(); rows * o];
        for row in out.chunks_mut(o) {
            row.copy_from_slice(self.value(b).data());
        }
        T::matmul(rows, i, o, self.value(x).data(), false, self.value(w).data(), false, &mut out, true);
        let mut shape = xs;
        *shape.last_mut().unwrap() = o;
        self.push(Array::new(&shape, out)?, Op::Dense { x, w, b }, "dense")
    }

    pub fn activation(&mut self, x: Var, act: Activation) -> Result<Var> {
        if act == Activation::None {
            return Ok(x);
        }
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| act.apply(v)).collect();
        let out = Array::new(xv.shape(), data)?;
        self.push(out, Op::Act { x, act }, "activation")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| sigmoid(v)).collect();
        let out = Array::new(xv.shape(), data)?;
        self.push(out, Op::Sigmoid { x }, "sigmoid")
    }

    /// Row gather: `x` is treated as R×C; output row `r` is `x[idx[r]]`.
    /// `lead` gives the leading output shape, whose product must be `idx.len()`.
    pub fn gather(&mut self, x: Var, idx: &[usize], lead: &[usize]) -> Result<Var> {
        let xs = self.shape(x);
        let c = *xs.last().unwrap_or(&1);
        let r = rows_of(xs);
        if lead.iter().product::<usize>() != idx.len() {
            return Err(Error::shape("gather", idx.len(), format!("{lead:?}")));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::invalid(format!("gather index {bad} out of range for {r} rows")));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let mut shape = lead.to_vec();
        shape.push(c);
        self.push(Array::new(&shape, data)?, Op::Gather { x, idx: idx.to_vec() }, "gather")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        self.push(out, Op::Reshape { x }, "reshape")
    }

    /// Concatenation along the last axis, `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
            return Err(Error::shape("concat", format!("{sa:?}"), format!("{sb:?}")));
        }
        let (ca, cb) = (av.last_dim(), bv.last_dim());
        if cb == 0 {
            return Ok(a);
        }
        if ca == 0 {
            return Ok(b);
        }
        let rows = rows_of(sa);
        let mut data = Vec::with_capacity(rows * (ca + cb));
        for r in 0..rows {
            data.extend_from_slice(&av.data()[r * ca..(r + 1) * ca]);
            data.extend_from_slice(&bv.data()[r * cb..(r + 1) * cb]);
        }
        let mut shape = sa.to_vec();
        *shape.last_mut().unwrap() = ca + cb;
        self.push(Array::new(&shape, data)?, Op::Concat { a, b }, "concat")
    }

    /// Per-batch matrix product: `a` is B×P×Q, `b` is B×Q×C.
    pub fn batched_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("batched_matmul", format!("[B, P, Q] x [B, Q, C], a {sa:?}"), format!("b {sb:?}")));
        }
        let (bn, p, q, c) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![T::zero(); bn * p * c];
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        for i in 0..bn {
            T::matmul(
                p,
                q,
                c,
                &ad[i * p * q..(i + 1) * p * q],
                false,
                &bd[i * q * c..(i + 1) * q * c],
                false,
                &mut out[i * p * c..(i + 1) * p * c],
                false,
            );
        }
        self.push(Array::new(&[bn, p, c], out)?, Op::Bmm { a, b }, "batched_matmul")
    }

    /// Reverse pass from `out` seeded with `seed` (the upstream gradient).
    /// Returns gradients for every parameter of the store, zero where unused.
    pub fn backward(&self, out: Var, seed: Array<T>) -> Result<ParamGrads<T>> {
        if seed.shape() != self.shape(out) {
            return Err(Error::shape("backward seed", format!("{:?}", self.shape(out)), format!("{:?}", seed.shape())));
        }
        let mut grads: Vec<Option<Array<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        let mut pgrads = ParamGrads::zeros_like(self.params);

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let corrupt = self.fault.is_some() && node.op.kind() == self.fault;
            let mut acc = |v: Var, mut d: Array<T>| {
                if corrupt {
                    d.scale(T::of(1.5));
                }
                match &mut grads[v.0] {
                    Some(existing) => existing.add_assign(&d),
                    slot => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => pgrads.0[*id].add_assign(&g),
                Op::Dense { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (i_dim, o) = (wv.shape()[0], wv.shape()[1]);
                    let rows = rows_of(xv.shape());
                    let mut dx = Array::zeros(xv.shape());
                    T::matmul(rows, o, i_dim, g.data(), false, wv.data(), true, dx.data_mut(), false);
                    let mut dw = Array::zeros(wv.shape());
                    T::matmul(i_dim, rows, o, xv.data(), true, g.data(), false, dw.data_mut(), false);
                    let mut db = Array::zeros(&[o]);
                    for row in g.data().chunks(o) {
                        for (acc_b, &v) in db.data_mut().iter_mut().zip(row) {
                            *acc_b += v;
                        }
                    }
                    acc(*x, dx);
                    acc(*w, dw);
                    acc(*b, db);
                }
                Op::Act { x, act } => {
                    let y = node.value.as_ref().unwrap();
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&gv, &yv)| gv * act.derivative_from_output(yv))
                        .collect();
                    acc(*x, Array::new(g.shape(), data)?);
                }
                Op::Sigmoid { x } => {
                    let y = node.value.as_ref().unwrap();
                    let data = g
                        .data()
                        .iter()
                        .zip(y.data())
                        .map(|(&gv, &yv)| gv * yv * (T::one() - yv))
                        .collect();
                    acc(*x, Array::new(g.shape(), data)?);
                }
                Op::Gather { x, idx } => {
                    let xv = self.value(*x);
                    let c = xv.last_dim();
                    let mut dx = Array::zeros(xv.shape());
                    let d = dx.data_mut();
                    for (r, &src) in idx.iter().enumerate() {
                        for (a, &b) in d[src * c..(src + 1) * c].iter_mut().zip(&g.data()[r * c..(r + 1) * c]) {
                            *a += b;
                        }
                    }
                    acc(*x, dx);
                }
                Op::Reshape { x } => {
                    let shape = self.shape(*x).to_vec();
                    acc(*x, g.reshape(&shape)?);
                }
                Op::Concat { a, b } => {
                    let (sa, sb) = (self.shape(*a).to_vec(), self.shape(*b).to_vec());
                    let (ca, cb) = (*sa.last().unwrap(), *sb.last().unwrap());
                    let rows = rows_of(&sa);
                    let mut da = Vec::with_capacity(rows * ca);
                    let mut db = Vec::with_capacity(rows * cb);
                    for row in g.data().chunks(ca + cb) {
                        da.extend_from_slice(&row[..ca]);
                        db.extend_from_slice(&row[ca..]);
                    }
                    acc(*a, Array::new(&sa, da)?);
                    acc(*b, Array::new(&sb, db)?);
                }
                Op::Bmm { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (bn, p, q) = (av.shape()[0], av.shape()[1], av.shape()[2]);
                    let c = bv.shape()[2];
                    let mut da = Array::zeros(av.shape());
                    let mut db = Array::zeros(bv.shape());
                    for i in 0..bn {
                        let gi = &g.data()[i * p * c..(i + 1) * p * c];
                        T::matmul(
                            p,
                            c,
                            q,
                            gi,
                            false,
                            &bv.data()[i * q * c..(i + 1) * q * c],
                            true,
                            &mut da.data_mut()[i * p * q..(i + 1) * p * q],
                            false,
                        );
                        T::matmul(
                            q,
                            p,
                            c,
                            &av.data()[i * p * q..(i + 1) * p * q],
                            true,
                            gi,
                            false,
                            &mut db.data_mut()[i * q * c..(i + 1) * q * c],
                            false,
                        );
                    }
                    acc(*a, da);
                    acc(*b, db);
                }
            }
        }
        for g in &pgrads.0 {
            g.ensure_finite("backward")?;
        }
        Ok(pgrads)
    }
}

/// Logistic function, split by sign so neither branch overflows.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
