//! Reverse-mode tape. Every operation appends one node holding its value and
//! the recipe for its adjoint; `backward` walks the nodes once, in reverse.
//!
//! Min/max style operations send the whole adjoint to a single source: the
//! first argument on ties for elementwise ops, the lowest row index on ties
//! for segment reductions.

use std::sync::Arc;

use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node of a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Linear { x: usize, w: usize, b: usize },
    Relu(usize),
    Softplus(usize),
    ExpNeg(usize),
    Min(usize, usize),
    Max(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    MulScalar { x: usize, s: usize },
    SegmentSum { x: usize, seg: Arc<[usize]> },
    /// Output element `i` is copied from input element `src[i]`.
    Pick { x: usize, src: Vec<usize> },
    GatherRows { x: usize, idx: Arc<[usize]> },
    Concat { xs: Vec<usize> },
    ConcatCols { xs: Vec<usize> },
    ProdRows(usize),
    MeanRows(usize),
    Reshape(usize),
    SumAll(usize),
    MeanAll(usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    no_grad: bool,
    kink_gap: f64,
}

/// Adjoints for every node reached by a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not influence the output.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => Tensor::raw(self.shapes[v.0].clone(), g.clone()),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            no_grad: false,
            kink_gap: f64::INFINITY,
        }
    }

    /// A tape on which leaves do not require gradients (forward evaluation only).
    pub fn inference() -> Self {
        Tape {
            no_grad: true,
            ..Tape::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest distance to a min/max tie or ReLU kink seen so far.
    pub fn kink_gap(&self) -> f64 {
        self.kink_gap
    }

    fn note_gap(&mut self, gap: f64) {
        if gap < self.kink_gap {
            self.kink_gap = gap;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let requires_grad = match op {
            Op::Leaf => !self.no_grad,
            Op::Constant => false,
            _ => inputs.iter().any(|&i| self.nodes[i].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, &[])
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant, &[])
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn val(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// `x · w + b` with the bias broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || bs.len() != 1 || xs[1] != ws[0] || ws[1] != bs[0] {
            return Err(Error::shape("linear", format!("x {xs:?}, w {ws:?}, b {bs:?}")));
        }
        let (n, inp, out) = (xs[0], ws[0], ws[1]);
        let (xv, wv, bv) = (self.val(x).data(), self.val(w).data(), self.val(b).data());
        let mut y = Vec::with_capacity(n * out);
        for i in 0..n {
            y.extend_from_slice(bv);
            let row = &mut y[i * out..(i + 1) * out];
            for k in 0..inp {
                let a = xv[i * inp + k];
                if a != 0.0 {
                    for (r, &wk) in row.iter_mut().zip(&wv[k * out..(k + 1) * out]) {
                        *r += a * wk;
                    }
                }
            }
        }
        Ok(self.push(Tensor::raw(vec![n, out], y), Op::Linear { x: x.0, w: w.0, b: b.0 }, &[x.0, w.0, b.0]))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.val(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let shape = t.shape().to_vec();
        self.push(Tensor::raw(shape, data), op, &[x.0])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let gap = self.val(x).data().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        self.note_gap(gap);
        self.map(x, |v| v.max(0.0), Op::Relu(x.0))
    }

    /// `ln(1 + e^x)`.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.map(x, softplus, Op::Softplus(x.0))
    }

    /// `e^(-x)`.
    pub fn exp_neg(&mut self, x: Var) -> Var {
        self.map(x, |v| (-v).exp(), Op::ExpNeg(x.0))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, |v| v * c, Op::Scale(x.0, c))
    }

    fn zip(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        same_shape(name, self.val(a), self.val(b))?;
        let data = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::raw(shape, data), op, &[a.0, b.0]))
    }

    fn note_pair_gap(&mut self, a: Var, b: Var) {
        let gap = self
            .val(a)
            .data()
            .iter()
            .zip(self.val(b).data())
            .fold(f64::INFINITY, |m, (x, y)| m.min((x - y).abs()));
        self.note_gap(gap);
    }

    pub fn ewise_min(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip("ewise_min", a, b, |x, y| if y < x { y } else { x }, Op::Min(a.0, b.0))?;
        self.note_pair_gap(a, b);
        Ok(v)
    }

    pub fn ewise_max(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.zip("ewise_max", a, b, |x, y| if y > x { y } else { x }, Op::Max(a.0, b.0))?;
        self.note_pair_gap(a, b);
        Ok(v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("add", a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("sub", a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip("mul", a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.val(b).data().iter().any(|d| d.abs() < 1e-300) {
            return Err(Error::DivByZero("div"));
        }
        self.zip("div", a, b, |x, y| x / y, Op::Div(a.0, b.0))
    }

    /// Multiplies every entry of `x` by the one-element tensor `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        if self.val(s).len() != 1 {
            return Err(Error::shape("mul_scalar", format!("scalar operand has shape {:?}", self.shape(s))));
        }
        let c = self.val(s).data()[0];
        let t = self.val(x);
        let data = t.data().iter().map(|&v| v * c).collect();
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::raw(shape, data), Op::MulScalar { x: x.0, s: s.0 }, &[x.0, s.0]))
    }

    fn check_segments(&self, op: &'static str, x: Var, seg: &[usize], k: usize) -> Result<(usize, usize)> {
        let (n, d) = self.val(x).as_matrix();
        if self.shape(x).len() != 2 || seg.len() != n {
            return Err(Error::shape(op, format!("x {:?} with {} segment ids", self.shape(x), seg.len())));
        }
        if let Some(&bad) = seg.iter().find(|&&s| s >= k) {
            return Err(Error::OutOfRange { op, index: bad, bound: k });
        }
        Ok((n, d))
    }

    /// Row `s` of the `[k, d]` output is the sum of rows of `x` with segment id `s`,
    /// accumulated in ascending row order.
    pub fn segment_sum(&mut self, x: Var, seg: impl Into<Arc<[usize]>>, k: usize) -> Result<Var> {
        let seg: Arc<[usize]> = seg.into();
        let (n, d) = self.check_segments("segment_sum", x, &seg, k)?;
        let xv = self.val(x).data();
        let mut out = vec![0.0; k * d];
        for i in 0..n {
            let s = seg[i];
            for (o, &v) in out[s * d..(s + 1) * d].iter_mut().zip(&xv[i * d..(i + 1) * d]) {
                *o += v;
            }
        }
        Ok(self.push(Tensor::raw(vec![k, d], out), Op::SegmentSum { x: x.0, seg }, &[x.0]))
    }

    fn segment_pick(&mut self, x: Var, seg: &[usize], k: usize, take_max: bool) -> Result<Var> {
        let name = if take_max { "segment_max" } else { "segment_min" };
        let (n, d) = self.check_segments(name, x, seg, k)?;
        let xv = self.val(x).data();
        let mut src: Vec<Option<usize>> = vec![None; k * d];
        let mut gap = f64::INFINITY;
        let mut runner_up = vec![f64::NAN; k * d];
        for i in 0..n {
            let s = seg[i];
            for c in 0..d {
                let v = xv[i * d + c];
                let slot = &mut src[s * d + c];
                match *slot {
                    None => *slot = Some(i * d + c),
                    Some(j) => {
                        let cur = xv[j];
                        let better = if take_max { v > cur } else { v < cur };
                        if better {
                            runner_up[s * d + c] = cur;
                            *slot = Some(i * d + c);
                        } else {
                            let r = &mut runner_up[s * d + c];
                            let closer = r.is_nan() || (v - cur).abs() < (*r - cur).abs();
                            if closer {
                                *r = v;
                            }
                        }
                    }
                }
            }
        }
        let mut picked = Vec::with_capacity(k * d);
        let mut data = Vec::with_capacity(k * d);
        for (slot, &r) in src.iter().zip(&runner_up) {
            let j = match slot {
                Some(j) => *j,
                None => return Err(Error::EmptySegment(picked.len() / d.max(1))),
            };
            if !r.is_nan() {
                gap = gap.min((xv[j] - r).abs());
            }
            picked.push(j);
            data.push(xv[j]);
        }
        self.note_gap(gap);
        Ok(self.push(Tensor::raw(vec![k, d], data), Op::Pick { x: x.0, src: picked }, &[x.0]))
    }

    /// Per-segment dimension-wise minimum; every segment must be non-empty.
    pub fn segment_min(&mut self, x: Var, seg: &[usize], k: usize) -> Result<Var> {
        self.segment_pick(x, seg, k, false)
    }

    /// Per-segment dimension-wise maximum; every segment must be non-empty.
    pub fn segment_max(&mut self, x: Var, seg: &[usize], k: usize) -> Result<Var> {
        self.segment_pick(x, seg, k, true)
    }

    /// Rows of `x` (1-D tensors are one value per row) selected by `idx`.
    pub fn gather_rows(&mut self, x: Var, idx: impl Into<Arc<[usize]>>) -> Result<Var> {
        let idx: Arc<[usize]> = idx.into();
        let t = self.val(x);
        let (n, d) = match t.shape().len() {
            1 => (t.shape()[0], 1),
            2 => (t.shape()[0], t.shape()[1]),
            _ => return Err(Error::shape("gather_rows", format!("{:?}", t.shape()))),
        };
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::OutOfRange { op: "gather_rows", index: bad, bound: n });
        }
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx.iter() {
            data.extend_from_slice(&t.data()[i * d..(i + 1) * d]);
        }
        let shape = if t.shape().len() == 1 { vec![idx.len()] } else { vec![idx.len(), d] };
        Ok(self.push(Tensor::raw(shape, data), Op::GatherRows { x: x.0, idx }, &[x.0]))
    }

    /// Concatenation of 1-D tensors in argument order.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &x in xs {
            if self.shape(x).len() != 1 {
                return Err(Error::shape("concat", format!("input of shape {:?}", self.shape(x))));
            }
            data.extend_from_slice(self.val(x).data());
        }
        let ids: Vec<usize> = xs.iter().map(|v| v.0).collect();
        Ok(self.push(Tensor::raw(vec![data.len()], data), Op::Concat { xs: ids.clone() }, &ids))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let rows = xs.first().map_or(0, |&x| self.shape(x).first().copied().unwrap_or(0));
        let mut width = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.len() != 2 || s[0] != rows {
                return Err(Error::shape("concat_cols", format!("input of shape {s:?}, expected {rows} rows")));
            }
            width += s[1];
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &x in xs {
                data.extend_from_slice(self.val(x).row(r));
            }
        }
        let ids: Vec<usize> = xs.iter().map(|v| v.0).collect();
        Ok(self.push(Tensor::raw(vec![rows, width], data), Op::ConcatCols { xs: ids.clone() }, &ids))
    }

    /// Row products: `[n, d] -> [n]`, and `[d] -> []` for a vector.
    pub fn prod_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.val(x);
        let shape = match t.shape().len() {
            1 => vec![],
            2 => vec![t.shape()[0]],
            _ => return Err(Error::shape("prod", format!("{:?}", t.shape()))),
        };
        let (n, d) = t.as_matrix();
        let data = (0..n).map(|i| t.data()[i * d..(i + 1) * d].iter().product()).collect();
        Ok(self.push(Tensor::raw(shape, data), Op::ProdRows(x.0), &[x.0]))
    }

    /// Product of the entries of a 1-D tensor, as a scalar.
    pub fn prod_reduce(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).len() != 1 {
            return Err(Error::shape("prod_reduce", format!("{:?}", self.shape(x))));
        }
        self.prod_rows(x)
    }

    /// Column means of a `[k, d]` matrix.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.val(x);
        if t.shape().len() != 2 || t.shape()[0] == 0 {
            return Err(Error::shape("mean_rows", format!("{:?}", t.shape())));
        }
        let (k, d) = (t.shape()[0], t.shape()[1]);
        let mut out = vec![0.0; d];
        for i in 0..k {
            for (o, &v) in out.iter_mut().zip(t.row(i)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= k as f64);
        Ok(self.push(Tensor::raw(vec![d], out), Op::MeanRows(x.0), &[x.0]))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.val(x).reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x.0), &[x.0]))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.val(x).data().iter().sum();
        self.push(Tensor::raw(vec![], vec![s]), Op::SumAll(x.0), &[x.0])
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let t = self.val(x);
        if t.is_empty() {
            return Err(Error::Empty("mean_all"));
        }
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        Ok(self.push(Tensor::raw(vec![], vec![m]), Op::MeanAll(x.0), &[x.0]))
    }

    /// Adjoints of the one-element output `out` with respect to every node.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        if self.val(out).len() != 1 {
            return Err(Error::shape("backward", format!("output shape {:?} is not scalar", self.shape(out))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(vec![1.0]);
        for i in (0..=out.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &gy, &mut grads);
            }
            grads[i] = Some(gy);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, node: &Node, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let wants = |i: usize| nodes[i].requires_grad;
        fn acc<'g>(nodes: &[Node], grads: &'g mut [Option<Vec<f64>>], i: usize) -> &'g mut Vec<f64> {
            grads[i].get_or_insert_with(|| vec![0.0; nodes[i].value.len()])
        }
        let ewise = |grads: &mut [Option<Vec<f64>>], i: usize, f: &dyn Fn(usize) -> f64| {
            if wants(i) {
                let g = acc(nodes, grads, i);
                for (j, gj) in g.iter_mut().enumerate() {
                    *gj += gy[j] * f(j);
                }
            }
        };
        match node.op {
            Op::Leaf | Op::Constant => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (nodes[x].value.data(), nodes[w].value.data());
                let (inp, out) = (nodes[w].value.shape()[0], nodes[w].value.shape()[1]);
                let n = nodes[x].value.shape()[0];
                if wants(x) {
                    let g = acc(nodes, grads, x);
                    for r in 0..n {
                        let gr = &gy[r * out..(r + 1) * out];
                        for k in 0..inp {
                            let wk = &wv[k * out..(k + 1) * out];
                            g[r * inp + k] += gr.iter().zip(wk).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
                if wants(w) {
                    let g = acc(nodes, grads, w);
                    for r in 0..n {
                        let gr = &gy[r * out..(r + 1) * out];
                        for k in 0..inp {
                            let a = xv[r * inp + k];
                            if a != 0.0 {
                                for (gw, &gv) in g[k * out..(k + 1) * out].iter_mut().zip(gr) {
                                    *gw += a * gv;
                                }
                            }
                        }
                    }
                }
                if wants(b) {
                    let g = acc(nodes, grads, b);
                    for r in 0..n {
                        for (gb, &gv) in g.iter_mut().zip(&gy[r * out..(r + 1) * out]) {
                            *gb += gv;
                        }
                    }
                }
            }
            Op::Relu(x) => {
                let xv = nodes[x].value.data();
                ewise(grads, x, &|j| if xv[j] > 0.0 { 1.0 } else { 0.0 });
            }
            Op::Softplus(x) => {
                let xv = nodes[x].value.data();
                ewise(grads, x, &|j| sigmoid(xv[j]));
            }
            Op::ExpNeg(x) => {
                let yv = node.value.data();
                ewise(grads, x, &|j| -yv[j]);
            }
            Op::Min(a, b) | Op::Max(a, b) => {
                let is_min = matches!(node.op, Op::Min(..));
                let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
                // Second argument wins only on strict improvement.
                let second = |j: usize| if is_min { bv[j] < av[j] } else { bv[j] > av[j] };
                ewise(grads, a, &|j| if second(j) { 0.0 } else { 1.0 });
                ewise(grads, b, &|j| if second(j) { 1.0 } else { 0.0 });
            }
            Op::Add(a, b) => {
                ewise(grads, a, &|_| 1.0);
                ewise(grads, b, &|_| 1.0);
            }
            Op::Sub(a, b) => {
                ewise(grads, a, &|_| 1.0);
                ewise(grads, b, &|_| -1.0);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
                ewise(grads, a, &|j| bv[j]);
                ewise(grads, b, &|j| av[j]);
            }
            Op::Div(a, b) => {
                let (av, bv) = (nodes[a].value.data(), nodes[b].value.data());
                ewise(grads, a, &|j| 1.0 / bv[j]);
                ewise(grads, b, &|j| -av[j] / (bv[j] * bv[j]));
            }
            Op::Scale(x, c) => ewise(grads, x, &|_| c),
            Op::MulScalar { x, s } => {
                let c = nodes[s].value.data()[0];
                ewise(grads, x, &|_| c);
                if wants(s) {
                    let xv = nodes[x].value.data();
                    let d: f64 = gy.iter().zip(xv).map(|(g, v)| g * v).sum();
                    acc(nodes, grads, s)[0] += d;
                }
            }
            Op::SegmentSum { x, ref seg } => {
                if wants(x) {
                    let d = node.value.shape()[1];
                    let g = acc(nodes, grads, x);
                    for (i, &s) in seg.iter().enumerate() {
                        for (gx, &gv) in g[i * d..(i + 1) * d].iter_mut().zip(&gy[s * d..(s + 1) * d]) {
                            *gx += gv;
                        }
                    }
                }
            }
            Op::Pick { x, ref src } => {
                if wants(x) {
                    let g = acc(nodes, grads, x);
                    for (o, &j) in src.iter().enumerate() {
                        g[j] += gy[o];
                    }
                }
            }
            Op::GatherRows { x, ref idx } => {
                if wants(x) {
                    let d = if node.value.shape().len() == 1 { 1 } else { node.value.shape()[1] };
                    let g = acc(nodes, grads, x);
                    for (r, &i) in idx.iter().enumerate() {
                        for (gx, &gv) in g[i * d..(i + 1) * d].iter_mut().zip(&gy[r * d..(r + 1) * d]) {
                            *gx += gv;
                        }
                    }
                }
            }
            Op::Concat { ref xs } => {
                let mut off = 0;
                for &x in xs {
                    let len = nodes[x].value.len();
                    if wants(x) {
                        for (gx, &gv) in acc(nodes, grads, x).iter_mut().zip(&gy[off..off + len]) {
                            *gx += gv;
                        }
                    }
                    off += len;
                }
            }
            Op::ConcatCols { ref xs } => {
                let width = node.value.shape()[1];
                let rows = node.value.shape()[0];
                let mut off = 0;
                for &x in xs {
                    let w = nodes[x].value.shape()[1];
                    if wants(x) {
                        let g = acc(nodes, grads, x);
                        for r in 0..rows {
                            for c in 0..w {
                                g[r * w + c] += gy[r * width + off + c];
                            }
                        }
                    }
                    off += w;
                }
            }
            Op::ProdRows(x) => {
                if wants(x) {
                    let (n, d) = nodes[x].value.as_matrix();
                    let xv = nodes[x].value.data();
                    let g = acc(nodes, grads, x);
                    // Prefix/suffix products: no division, so zeros are safe.
                    let mut suffix = vec![1.0; d + 1];
                    for r in 0..n {
                        let row = &xv[r * d..(r + 1) * d];
                        for c in (0..d).rev() {
                            suffix[c] = suffix[c + 1] * row[c];
                        }
                        let mut prefix = 1.0;
                        for c in 0..d {
                            g[r * d + c] += gy[r] * prefix * suffix[c + 1];
                            prefix *= row[c];
                        }
                    }
                }
            }
            Op::MeanRows(x) => {
                if wants(x) {
                    let (k, d) = (nodes[x].value.shape()[0], nodes[x].value.shape()[1]);
                    let g = acc(nodes, grads, x);
                    for i in 0..k {
                        for c in 0..d {
                            g[i * d + c] += gy[c] / k as f64;
                        }
                    }
                }
            }
            Op::Reshape(x) => ewise(grads, x, &|_| 1.0),
            Op::SumAll(x) => {
                if wants(x) {
                    acc(nodes, grads, x).iter_mut().for_each(|g| *g += gy[0]);
                }
            }
            Op::MeanAll(x) => {
                if wants(x) {
                    let n = nodes[x].value.len() as f64;
                    acc(nodes, grads, x).iter_mut().for_each(|g| *g += gy[0] / n);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn linear_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[1, 2], &[1.0, 2.0]));
        let eye = tape.leaf(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
        let zero_b = tape.leaf(t(&[2], &[0.0, 0.0]));
        let y = tape.linear(x, eye, zero_b).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);

        let zw = tape.leaf(Tensor::zeros(&[2, 2]));
        let b = tape.leaf(t(&[2], &[3.0, 4.0]));
        let y2 = tape.linear(x, zw, b).unwrap();
        assert_eq!(tape.value(y2).data(), &[3.0, 4.0]);
        let s = tape.sum_all(y2);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(b).data(), &[1.0, 1.0]);

        assert!(matches!(tape.linear(b, eye, zero_b), Err(Error::Shape { .. })));
    }

    #[test]
    fn pointwise_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[-1.0, 2.0]));
        let r = tape.relu(x);
        assert_eq!(tape.value(r).data(), &[0.0, 2.0]);
        let z = tape.leaf(t(&[], &[0.0]));
        let sp = tape.softplus(z);
        assert!((tape.value(sp).item() - std::f64::consts::LN_2).abs() < 1e-15);
        let e = tape.exp_neg(z);
        assert_eq!(tape.value(e).item(), 1.0);
        let big = tape.leaf(t(&[1], &[800.0]));
        let spb = tape.softplus(big);
        assert_eq!(tape.value(spb).data(), &[800.0]);
    }

    #[test]
    fn ewise_min_examples_and_tie_rule() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2], &[2.0, 3.0]));
        let b = tape.leaf(t(&[2], &[1.0, 4.0]));
        let m = tape.ewise_min(a, b).unwrap();
        assert_eq!(tape.value(m).data(), &[1.0, 3.0]);
        let m2 = tape.ewise_min(a, a).unwrap();
        assert_eq!(tape.value(m2).data(), &[2.0, 3.0]);
        let c = tape.leaf(t(&[3], &[0.5, 2.0, 7.0]));
        let d = tape.leaf(t(&[3], &[3.0, 0.1, 7.0]));
        let m3 = tape.ewise_min(c, d).unwrap();
        assert_eq!(tape.value(m3).data(), &[0.5, 0.1, 7.0]);
        let s = tape.sum_all(m3);
        let g = tape.backward(s).unwrap();
        // Tie at index 2 goes to the first argument.
        assert_eq!(g.wrt(c).data(), &[1.0, 0.0, 1.0]);
        assert_eq!(g.wrt(d).data(), &[0.0, 1.0, 0.0]);
        assert_eq!(tape.kink_gap(), 0.0);
    }

    #[test]
    fn div_guards_zero() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[1], &[1.0]));
        let z = tape.leaf(t(&[1], &[0.0]));
        assert!(matches!(tape.div(a, z), Err(Error::DivByZero(_))));
        let other = tape.leaf(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.add(a, other), Err(Error::Shape { .. })));
    }

    #[test]
    fn segment_sum_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[3, 1], &[1.0, 2.0, 3.0]));
        let s = tape.segment_sum(x, vec![0, 0, 1], 2).unwrap();
        assert_eq!(tape.value(s).data(), &[3.0, 3.0]);
        let all = tape.segment_sum(x, vec![0, 0, 0], 1).unwrap();
        assert_eq!(tape.value(all).data(), &[6.0]);
        let gap = tape.segment_sum(x, vec![0, 2, 2], 3).unwrap();
        assert_eq!(tape.value(gap).data(), &[1.0, 0.0, 5.0]);
        assert!(matches!(tape.segment_sum(x, vec![0, 3, 0], 3), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn segment_min_max_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2, 2], &[1.0, 5.0, 3.0, 2.0]));
        let mn = tape.segment_min(x, &[0, 0], 1).unwrap();
        let mx = tape.segment_max(x, &[0, 0], 1).unwrap();
        assert_eq!(tape.value(mn).data(), &[1.0, 2.0]);
        assert_eq!(tape.value(mx).data(), &[3.0, 5.0]);
        let id = tape.segment_min(x, &[0, 1], 2).unwrap();
        assert_eq!(tape.value(id).data(), &[1.0, 5.0, 3.0, 2.0]);
        let same = tape.leaf(t(&[2, 2], &[4.0, 4.0, 4.0, 4.0]));
        let smin = tape.segment_min(same, &[0, 0], 1).unwrap();
        assert_eq!(tape.value(smin).data(), &[4.0, 4.0]);
        let s = tape.sum_all(smin);
        let g = tape.backward(s).unwrap();
        // Ties go to the lowest row.
        assert_eq!(g.wrt(same).data(), &[1.0, 1.0, 0.0, 0.0]);
        assert!(matches!(tape.segment_min(x, &[0, 0], 2), Err(Error::EmptySegment(1))));
    }

    #[test]
    fn concat_prod_mean_examples() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[2], &[1.0, 2.0]));
        let b = tape.leaf(t(&[1], &[3.0]));
        let c = tape.concat(&[a, b]).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0]);
        let single = tape.concat(&[a]).unwrap();
        assert_eq!(tape.value(single).data(), &[1.0, 2.0]);
        let copies = tape.concat(&[a, a, a]).unwrap();
        assert_eq!(tape.shape(copies), &[6]);

        for (v, want) in [(vec![2.0, 3.0], 6.0), (vec![1.0; 4], 1.0), (vec![2.0, 0.5, 4.0], 4.0)] {
            let x = tape.leaf(Tensor::vector(v).unwrap());
            let p = tape.prod_reduce(x).unwrap();
            assert_eq!(tape.value(p).item(), want);
            assert!(tape.shape(p).is_empty());
        }

        let m = tape.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let mr = tape.mean_rows(m).unwrap();
        assert_eq!(tape.value(mr).data(), &[2.0, 3.0]);
        let one = tape.leaf(t(&[1, 2], &[5.0, 6.0]));
        let mr1 = tape.mean_rows(one).unwrap();
        assert_eq!(tape.value(mr1).data(), &[5.0, 6.0]);
    }

    #[test]
    fn prod_adjoint_with_a_zero_entry() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[4], &[2.0, 0.0, 3.0, 5.0]));
        let p = tape.prod_reduce(x).unwrap();
        let g = tape.backward(p).unwrap();
        // Cofactors: product of all other entries.
        assert_eq!(g.wrt(x).data(), &[0.0, 30.0, 0.0, 0.0]);
    }

    #[test]
    fn backward_needs_scalar_output() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn inference_tape_records_no_gradients() {
        let mut tape = Tape::inference();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        let s = tape.sum_all(x);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[0.0, 0.0]);
    }
}
