//! Small parameter containers shared by the encoder and the score heads.
//!
//! Containers are generic over the leaf type so the same layout holds plain
//! tensors (checkpoints, inference), tape handles (training) or optimizer state.

use std::convert::Infallible;

use rand::Rng;

use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

/// Visits every leaf with its dotted name, building a new container.
pub trait ParamTree<T> {
    type Out<U>;

    fn try_map<U, E>(&self, prefix: &str, f: &mut dyn FnMut(&str, &T) -> Result<U, E>) -> Result<Self::Out<U>, E>;

    fn map<U>(&self, prefix: &str, f: &mut dyn FnMut(&str, &T) -> U) -> Self::Out<U> {
        match self.try_map::<U, Infallible>(prefix, &mut |n, t| Ok(f(n, t))) {
            Ok(v) => v,
            Err(e) => match e {},
        }
    }

    fn for_each(&self, prefix: &str, f: &mut dyn FnMut(&str, &T)) {
        self.map(prefix, &mut |n, t| f(n, t));
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform(±1/√fan_in) weights, zero biases.
pub(crate) fn init_linear(rng: &mut impl Rng, inp: usize, out: usize) -> Linear {
    let bound = 1.0 / (inp as f64).sqrt();
    let w = (0..inp * out).map(|_| rng.gen_range(-bound..bound)).collect();
    Linear {
        w: Tensor::raw(vec![inp, out], w),
        b: Tensor::zeros(&[out]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T = Tensor> {
    /// `[in, out]`
    pub w: T,
    /// `[out]`
    pub b: T,
}

impl<T> ParamTree<T> for Linear<T> {
    type Out<U> = Linear<U>;

    fn try_map<U, E>(&self, prefix: &str, f: &mut dyn FnMut(&str, &T) -> Result<U, E>) -> Result<Linear<U>, E> {
        Ok(Linear {
            w: f(&join(prefix, "w"), &self.w)?,
            b: f(&join(prefix, "b"), &self.b)?,
        })
    }
}

impl Linear {
    pub fn zeros(inp: usize, out: usize) -> Self {
        Linear {
            w: Tensor::zeros(&[inp, out]),
            b: Tensor::zeros(&[out]),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.w.shape()[0], self.w.shape()[1])
    }

    /// Applies the layer to a single row.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let (inp, out) = self.dims();
        debug_assert_eq!(x.len(), inp);
        let w = self.w.data();
        let mut y = self.b.data().to_vec();
        for (k, &a) in x.iter().enumerate() {
            for (yo, &wk) in y.iter_mut().zip(&w[k * out..(k + 1) * out]) {
                *yo += a * wk;
            }
        }
        y
    }
}

impl Linear<Var> {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.linear(x, self.w, self.b)
    }
}

/// Two layers with a ReLU in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T = Tensor> {
    pub l1: Linear<T>,
    pub l2: Linear<T>,
}

impl<T> ParamTree<T> for Mlp<T> {
    type Out<U> = Mlp<U>;

    fn try_map<U, E>(&self, prefix: &str, f: &mut dyn FnMut(&str, &T) -> Result<U, E>) -> Result<Mlp<U>, E> {
        Ok(Mlp {
            l1: self.l1.try_map(&join(prefix, "l1"), f)?,
            l2: self.l2.try_map(&join(prefix, "l2"), f)?,
        })
    }
}

impl Mlp {
    pub fn init(rng: &mut impl Rng, inp: usize, hidden: usize, out: usize) -> Self {
        Mlp {
            l1: init_linear(rng, inp, hidden),
            l2: init_linear(rng, hidden, out),
        }
    }

    pub fn zeros(inp: usize, hidden: usize, out: usize) -> Self {
        Mlp {
            l1: Linear::zeros(inp, hidden),
            l2: Linear::zeros(hidden, out),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut h = self.l1.apply(x);
        h.iter_mut().for_each(|v| *v = v.max(0.0));
        self.l2.apply(&h)
    }
}

impl Mlp<Var> {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = self.l1.forward(tape, x)?;
        let h = tape.relu(h);
        self.l2.forward(tape, h)
    }
}

/// Registers every tensor of a tree as a tape leaf.
pub fn to_tape<P: ParamTree<Tensor>>(p: &P, tape: &mut Tape) -> P::Out<Var> {
    p.map("", &mut |_, t| tape.leaf(t.clone()))
}
