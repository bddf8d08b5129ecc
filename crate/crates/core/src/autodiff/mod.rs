//! Reverse-mode differentiation over the small primitive set used by the
//! reconstruction networks and training losses.
//!
//! A [`Tape`] records every operation in creation order, which is already a
//! topological order, so [`Tape::backward`] is a single reverse sweep. The
//! tape is never mutated by `backward`; calling it twice yields identical
//! gradients.

mod checkpoint;
mod conv;
mod optim;
mod tensor;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linear::LinearMap;
use crate::scalar::Scalar;
use crate::warp::WarpTable;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use conv::Padding;
pub use optim::{fan_in_uniform, Adam, AdamConfig, OptimizerState, Params};
pub use tensor::{Tensor, MAX_RANK};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Differentiable tensor handle; alias kept for readability in signatures.
pub type DTensor = Var;

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

enum Op<T: Scalar> {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, T),
    Relu(usize),
    Conv2d {
        x: usize,
        w: usize,
        b: Option<usize>,
        padding: Padding,
        padded: Vec<T>,
    },
    Concat(Vec<usize>),
    Mean(usize),
    Sum(usize),
    Abs(usize),
    Square(usize),
    Sqrt(usize),
    Linear(usize, Arc<dyn LinearMap<T>>),
}

impl<T: Scalar> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Relu(..) => "relu",
            Op::Conv2d { .. } => "conv2d",
            Op::Concat(..) => "concat",
            Op::Mean(..) => "mean",
            Op::Sum(..) => "sum",
            Op::Abs(..) => "abs",
            Op::Square(..) => "square",
            Op::Sqrt(..) => "sqrt",
            Op::Linear(_, m) => m.name(),
        }
    }
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// influence the loss.
    pub fn get(&self, v: Var) -> Result<Tensor<T>> {
        match self.grads.get(v.0) {
            Some(Some(g)) => Ok(g.clone()),
            Some(None) => Ok(Tensor::zeros(&self.shapes[v.0])),
            None => Err(Error::UnknownNode(v.0)),
        }
    }

    pub fn collect(&self, vars: &[Var]) -> Result<Vec<Tensor<T>>> {
        vars.iter().map(|&v| self.get(v)).collect()
    }
}

/// Single-owner record of a forward computation.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> Result<&Node<T>> {
        self.nodes.get(v.0).ok_or(Error::UnknownNode(v.0))
    }

    /// Records an input. Leaves are differentiable; treat them as constants
    /// simply by not reading their gradient.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn image(&mut self, img: &Image<T>) -> Var {
        self.leaf(Tensor::from_image(img))
    }

    pub fn value(&self, v: Var) -> Result<&Tensor<T>> {
        Ok(&self.node(v)?.value)
    }

    pub fn shape(&self, v: Var) -> Result<&[usize]> {
        Ok(self.node(v)?.value.shape())
    }

    pub fn image_value(&self, v: Var) -> Result<Image<T>> {
        self.node(v)?.value.to_image()
    }

    pub fn scalar_value(&self, v: Var) -> Result<T> {
        self.node(v)?.value.item()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(&Tensor<T>, &Tensor<T>)> {
        let (x, y) = (&self.node(a)?.value, &self.node(b)?.value);
        if x.shape() != y.shape() {
            return Err(shape_err(op, format!("{:?} vs {:?}", x.shape(), y.shape())));
        }
        Ok((x, y))
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (x, y) = self.same_shape(op, a, b)?;
        let data = x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    fn unary(&self, a: Var, f: impl Fn(T) -> T) -> Result<Tensor<T>> {
        Ok(self.node(a)?.value.map(f))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "add", |p, q| p + q)?;
        Ok(self.push(v, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "sub", |p, q| p - q)?;
        Ok(self.push(v, Op::Sub(a.0, b.0)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, "mul", |p, q| p * q)?;
        Ok(self.push(v, Op::Mul(a.0, b.0)))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let v = self.unary(a, |p| p * s)?;
        Ok(self.push(v, Op::Scale(a.0, s)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.unary(a, |p| p.max(T::zero()))?;
        Ok(self.push(v, Op::Relu(a.0)))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let v = self.unary(a, |p| p.abs())?;
        Ok(self.push(v, Op::Abs(a.0)))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let v = self.unary(a, |p| p * p)?;
        Ok(self.push(v, Op::Square(a.0)))
    }

    /// Elementwise square root; inputs must be positive.
    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let t = &self.node(a)?.value;
        if t.data().iter().any(|&v| v <= T::zero()) {
            return Err(Error::InvalidParameter("sqrt of a non-positive value".into()));
        }
        let v = t.map(|p| p.sqrt());
        Ok(self.push(v, Op::Sqrt(a.0)))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a)?.value.data().iter().copied().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(a.0)))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = &self.node(a)?.value;
        let s: T = t.data().iter().copied().sum();
        let m = s / T::from_usize_lossy(t.len());
        Ok(self.push(Tensor::scalar(m), Op::Mean(a.0)))
    }

    /// Sum of several same-shaped values.
    pub fn add_all(&mut self, vars: &[Var]) -> Result<Var> {
        let (&first, rest) = vars
            .split_first()
            .ok_or_else(|| shape_err("add_all", "no operands".into()))?;
        rest.iter().try_fold(first, |acc, &v| self.add(acc, v))
    }

    /// `x` of shape `[ci, h, w]` convolved with `w` of shape `[co, ci, k, k]`
    /// plus optional bias `[co]`; output `[co, h, w]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, padding: Padding) -> Result<Var> {
        let xs = self.shape(x)?.to_vec();
        let ws = self.shape(w)?.to_vec();
        let (&[ci, h, wd], &[co, wci, k, k2]) = (xs.as_slice(), ws.as_slice()) else {
            return Err(shape_err("conv2d", format!("input {xs:?}, weight {ws:?}")));
        };
        if wci != ci || k != k2 || k % 2 == 0 {
            return Err(shape_err("conv2d", format!("input {xs:?}, weight {ws:?}")));
        }
        if let Some(b) = b {
            if self.shape(b)? != [co] {
                return Err(shape_err("conv2d", format!("bias {:?} for {co} outputs", self.shape(b)?)));
            }
        }
        let d = conv::ConvDims { ci, co, h, w: wd, k };
        let padded = conv::pad(self.node(x)?.value.data(), &d, padding);
        let bias = match b {
            Some(b) => Some(self.node(b)?.value.data()),
            None => None,
        };
        let out = conv::forward(&padded, self.node(w)?.value.data(), bias, &d);
        let value = Tensor::new(vec![co, h, wd], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                x: x.0,
                w: w.0,
                b: b.map(|b| b.0),
                padding,
                padded,
            },
        ))
    }

    /// Concatenates rank-3 values along the channel axis.
    pub fn concat_channels(&mut self, vars: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        let mut channels = 0;
        let mut hw: Option<(usize, usize)> = None;
        for &v in vars {
            let t = &self.node(v)?.value;
            let &[c, h, w] = t.shape() else {
                return Err(shape_err("concat", format!("rank-3 expected, got {:?}", t.shape())));
            };
            if *hw.get_or_insert((h, w)) != (h, w) {
                return Err(shape_err("concat", format!("spatial {:?} vs {:?}", hw.unwrap(), (h, w))));
            }
            channels += c;
            data.extend_from_slice(t.data());
        }
        let (h, w) = hw.ok_or_else(|| shape_err("concat", "no operands".into()))?;
        let value = Tensor::new(vec![channels, h, w], data)?;
        Ok(self.push(value, Op::Concat(vars.iter().map(|v| v.0).collect())))
    }

    /// Applies a fixed linear map to a rank-3 value; backward uses its adjoint.
    pub fn linear(&mut self, x: Var, map: Arc<dyn LinearMap<T>>) -> Result<Var> {
        let img = self.node(x)?.value.to_image()?;
        let out = map.apply(&img)?;
        Ok(self.push(Tensor::from_image(&out), Op::Linear(x.0, map)))
    }

    /// Bilinear upsampling by an integer factor.
    pub fn upsample(&mut self, x: Var, factor: usize) -> Result<Var> {
        let &[_, h, w] = self.shape(x)? else {
            return Err(shape_err("upsample", format!("rank-3 expected, got {:?}", self.shape(x)?)));
        };
        if factor == 0 {
            return Err(Error::InvalidParameter("upsample factor must be >= 1".into()));
        }
        let table: Arc<dyn LinearMap<T>> = Arc::new(WarpTable::upsample(h, w, factor));
        self.linear(x, table)
    }

    /// Vector-Jacobian products of the scalar `loss` with respect to every
    /// node recorded up to and including `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let root = self.node(loss)?;
        if root.value.len() != 1 {
            return Err(Error::NonScalarLoss(root.value.shape().to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(root.value.shape(), T::one()));

        fn acc<T: Scalar>(grads: &mut [Option<Tensor<T>>], i: usize, g: Tensor<T>) {
            match &mut grads[i] {
                Some(e) => e.add_assign(&g),
                slot => *slot = Some(g),
            }
        }

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let val = |j: usize| &self.nodes[j].value;
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let ga = zip(&g, val(*b), |u, q| u * q);
                    let gb = zip(&g, val(*a), |u, p| u * p);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    acc(&mut grads, *a, g.map(|u| u * s));
                }
                Op::Relu(a) => {
                    acc(&mut grads, *a, zip(&g, val(*a), |u, p| if p > T::zero() { u } else { T::zero() }));
                }
                Op::Abs(a) => {
                    acc(&mut grads, *a, zip(&g, val(*a), |u, p| u * signum0(p)));
                }
                Op::Square(a) => {
                    let two = T::c(2.0);
                    acc(&mut grads, *a, zip(&g, val(*a), |u, p| two * u * p));
                }
                Op::Sqrt(a) => {
                    let half = T::c(0.5);
                    acc(&mut grads, *a, zip(&g, &node.value, |u, r| half * u / r));
                }
                Op::Sum(a) => {
                    let u = g.data()[0];
                    acc(&mut grads, *a, Tensor::filled(val(*a).shape(), u));
                }
                Op::Mean(a) => {
                    let t = val(*a);
                    let u = g.data()[0] / T::from_usize_lossy(t.len());
                    acc(&mut grads, *a, Tensor::filled(t.shape(), u));
                }
                Op::Conv2d {
                    x,
                    w,
                    b,
                    padding,
                    padded,
                } => {
                    let (xs, ws) = (val(*x).shape(), val(*w).shape());
                    let d = conv::ConvDims {
                        ci: xs[0],
                        co: ws[0],
                        h: xs[1],
                        w: xs[2],
                        k: ws[2],
                    };
                    let (gxp, gw, gb) = conv::backward(padded, val(*w).data(), g.data(), &d);
                    let gx = conv::unpad_adjoint(&gxp, &d, *padding);
                    acc(&mut grads, *x, Tensor::new(xs.to_vec(), gx)?);
                    acc(&mut grads, *w, Tensor::new(ws.to_vec(), gw)?);
                    if let Some(b) = b {
                        acc(&mut grads, *b, Tensor::new(vec![d.co], gb)?);
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let t = val(p);
                        let gp = g.data()[off..off + t.len()].to_vec();
                        off += t.len();
                        acc(&mut grads, p, Tensor::new(t.shape().to_vec(), gp)?);
                    }
                }
                Op::Linear(a, map) => {
                    let gi = map.adjoint(&g.to_image()?)?;
                    acc(&mut grads, *a, Tensor::from_image(&gi));
                }
            }
            grads[i] = Some(g);
        }
        if let Some((i, _)) = grads
            .iter()
            .enumerate()
            .find(|(_, g)| g.as_ref().is_some_and(|g| !g.is_finite()))
        {
            return Err(Error::NonFinite(format!("gradient of {} node {i}", self.nodes[i].op.name())));
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}

#[inline]
fn signum0<T: Scalar>(p: T) -> T {
    if p > T::zero() {
        T::one()
    } else if p < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn zip<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&p, &q)| f(p, q)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same shape by construction")
}
