use std::sync::Arc;

use super::kernels;
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

const UNTRACKED: usize = usize::MAX;

/// A value produced on a [`Tape`].
///
/// Cloning is cheap: the tensor is shared.
#[derive(Clone, Debug)]
pub struct Var<T: Scalar = f32> {
    id: usize,
    value: Arc<Tensor<T>>,
}

impl<T: Scalar> Var<T> {
    pub fn value(&self) -> &Tensor<T> {
        &self.value
    }

    pub fn shared(&self) -> Arc<Tensor<T>> {
        Arc::clone(&self.value)
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }
}

enum Node<T: Scalar> {
    Leaf,
    Constant,
    Conv2d {
        input: usize,
        input_value: Arc<Tensor<T>>,
        weight: usize,
        weight_value: Arc<Tensor<T>>,
        bias: usize,
    },
    MaxPool {
        input: usize,
        input_shape: Vec<usize>,
        argmax: Vec<u8>,
    },
    Upsample {
        input: usize,
    },
    Relu {
        input: usize,
        output: Arc<Tensor<T>>,
    },
    Add {
        a: usize,
        b: usize,
    },
    Mul {
        a: usize,
        a_value: Arc<Tensor<T>>,
        b: usize,
        b_value: Arc<Tensor<T>>,
    },
    L1Sum {
        a: usize,
        b: usize,
        sign: Vec<i8>,
        shape: Vec<usize>,
    },
}

/// Ordered record of executed operations, replayed backwards by
/// [`Tape::backward`].
///
/// A tape created with [`Tape::no_grad`] records nothing, so intermediate
/// tensors are freed as soon as their `Var`s are dropped.
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    recording: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            recording: true,
        }
    }

    pub fn no_grad() -> Self {
        Tape {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, node: Node<T>, value: Tensor<T>) -> Var<T> {
        self.push_shared(node, Arc::new(value))
    }

    fn push_shared(&mut self, node: Node<T>, value: Arc<Tensor<T>>) -> Var<T> {
        if !self.recording {
            return Var {
                id: UNTRACKED,
                value,
            };
        }
        self.nodes.push(node);
        Var {
            id: self.nodes.len() - 1,
            value,
        }
    }

    fn tracked(&self, v: &Var<T>) -> bool {
        v.id != UNTRACKED && !matches!(self.nodes[v.id], Node::Constant)
    }

    /// A differentiable input (typically a parameter).
    pub fn leaf(&mut self, value: Tensor<T>) -> Var<T> {
        self.push(Node::Leaf, value)
    }

    pub fn leaf_shared(&mut self, value: Arc<Tensor<T>>) -> Var<T> {
        self.push_shared(Node::Leaf, value)
    }

    /// An input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var<T> {
        self.push(Node::Constant, value)
    }

    pub fn conv2d(&mut self, input: &Var<T>, weight: &Var<T>, bias: &Var<T>) -> Result<Var<T>> {
        let out = kernels::conv2d_forward(input.value(), weight.value(), Some(bias.value()))?;
        let node = Node::Conv2d {
            input: input.id,
            input_value: input.shared(),
            weight: weight.id,
            weight_value: weight.shared(),
            bias: bias.id,
        };
        Ok(self.push(node, out))
    }

    pub fn maxpool2x2(&mut self, input: &Var<T>) -> Result<Var<T>> {
        let (out, argmax) = kernels::maxpool2x2_forward(input.value())?;
        let node = Node::MaxPool {
            input: input.id,
            input_shape: input.shape().to_vec(),
            argmax: if self.recording { argmax } else { Vec::new() },
        };
        Ok(self.push(node, out))
    }

    pub fn upsample_nearest2x(&mut self, input: &Var<T>) -> Result<Var<T>> {
        let out = kernels::upsample2x_forward(input.value())?;
        Ok(self.push(Node::Upsample { input: input.id }, out))
    }

    pub fn relu(&mut self, input: &Var<T>) -> Var<T> {
        let out = Arc::new(input.value().map(|v| if v > T::zero() { v } else { T::zero() }));
        let node = Node::Relu {
            input: input.id,
            output: Arc::clone(&out),
        };
        self.push_shared(node, out)
    }

    pub fn add(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        a.value().check_same_shape("add", b.value())?;
        let data = a
            .value()
            .data()
            .iter()
            .zip(b.value().data())
            .map(|(&x, &y)| x + y)
            .collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.push(Node::Add { a: a.id, b: b.id }, out))
    }

    pub fn mul(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        a.value().check_same_shape("mul_elementwise", b.value())?;
        let data = a
            .value()
            .data()
            .iter()
            .zip(b.value().data())
            .map(|(&x, &y)| x * y)
            .collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        let node = Node::Mul {
            a: a.id,
            a_value: a.shared(),
            b: b.id,
            b_value: b.shared(),
        };
        Ok(self.push(node, out))
    }

    /// `sum |a - b|` as a one-element tensor. The subgradient at `a == b` is 0.
    pub fn l1_sum(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        a.value().check_same_shape("l1_sum", b.value())?;
        let mut total = T::zero();
        let mut sign = Vec::with_capacity(if self.recording { a.value().numel() } else { 0 });
        for (&x, &y) in a.value().data().iter().zip(b.value().data()) {
            let d = x - y;
            total += d.abs();
            if self.recording {
                sign.push(if d > T::zero() {
                    1
                } else if d < T::zero() {
                    -1
                } else {
                    0
                });
            }
        }
        let node = Node::L1Sum {
            a: a.id,
            b: b.id,
            sign,
            shape: a.shape().to_vec(),
        };
        Ok(self.push(node, Tensor::scalar(total)))
    }

    /// Backpropagates from a one-element output with seed 1.
    pub fn backward(&self, output: &Var<T>) -> Result<Gradients<T>> {
        if output.value().numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be a scalar, got shape {:?}", output.shape()),
            ));
        }
        self.backward_with(output, Tensor::ones(output.shape().to_vec()))
    }

    /// Backpropagates an arbitrary upstream gradient `seed` (shape of `output`).
    pub fn backward_with(&self, output: &Var<T>, seed: Tensor<T>) -> Result<Gradients<T>> {
        if output.id == UNTRACKED {
            return Err(Error::InvalidArgument(
                "backward on a value that was not recorded".into(),
            ));
        }
        output.value().check_same_shape("backward seed", &seed)?;
        let mut grads: Vec<Option<Tensor<T>>> = Vec::new();
        grads.resize_with(output.id + 1, || None);
        grads[output.id] = Some(seed);

        for id in (0..=output.id).rev() {
            let node = &self.nodes[id];
            if matches!(node, Node::Leaf | Node::Constant) {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            match node {
                Node::Leaf | Node::Constant => unreachable!(),
                Node::Conv2d {
                    input,
                    input_value,
                    weight,
                    weight_value,
                    bias,
                } => {
                    if self.wants(*input) {
                        let gi = kernels::conv2d_backward_input(&g, weight_value)?;
                        accumulate(&mut grads, *input, gi)?;
                    }
                    if self.wants(*weight) || self.wants(*bias) {
                        let (gw, gb) =
                            kernels::conv2d_backward_params(input_value, weight_value.shape(), &g)?;
                        if self.wants(*weight) {
                            accumulate(&mut grads, *weight, gw)?;
                        }
                        if self.wants(*bias) {
                            accumulate(&mut grads, *bias, gb)?;
                        }
                    }
                }
                Node::MaxPool {
                    input,
                    input_shape,
                    argmax,
                } => {
                    if self.wants(*input) {
                        let gi = kernels::maxpool2x2_backward(&g, argmax, input_shape)?;
                        accumulate(&mut grads, *input, gi)?;
                    }
                }
                Node::Upsample { input } => {
                    if self.wants(*input) {
                        accumulate(&mut grads, *input, kernels::upsample2x_backward(&g)?)?;
                    }
                }
                Node::Relu { input, output } => {
                    if self.wants(*input) {
                        let data = g
                            .data()
                            .iter()
                            .zip(output.data())
                            .map(|(&gv, &o)| if o > T::zero() { gv } else { T::zero() })
                            .collect();
                        accumulate(&mut grads, *input, Tensor::new(g.shape().to_vec(), data)?)?;
                    }
                }
                Node::Add { a, b } => {
                    if self.wants(*a) {
                        accumulate(&mut grads, *a, g.clone())?;
                    }
                    if self.wants(*b) {
                        accumulate(&mut grads, *b, g)?;
                    }
                }
                Node::Mul {
                    a,
                    a_value,
                    b,
                    b_value,
                } => {
                    let scaled = |other: &Tensor<T>| -> Result<Tensor<T>> {
                        let data = g
                            .data()
                            .iter()
                            .zip(other.data())
                            .map(|(&gv, &o)| gv * o)
                            .collect();
                        Tensor::new(g.shape().to_vec(), data)
                    };
                    if self.wants(*a) {
                        accumulate(&mut grads, *a, scaled(b_value)?)?;
                    }
                    if self.wants(*b) {
                        accumulate(&mut grads, *b, scaled(a_value)?)?;
                    }
                }
                Node::L1Sum { a, b, sign, shape } => {
                    let up = g.item()?;
                    let ga = Tensor::new(
                        shape.clone(),
                        sign.iter()
                            .map(|&s| match s {
                                1 => up,
                                -1 => -up,
                                _ => T::zero(),
                            })
                            .collect(),
                    )?;
                    if self.wants(*b) {
                        accumulate(&mut grads, *b, ga.map(|v| -v))?;
                    }
                    if self.wants(*a) {
                        accumulate(&mut grads, *a, ga)?;
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, id: usize) -> bool {
        id != UNTRACKED && !matches!(self.nodes[id], Node::Constant)
    }

    /// True if gradients can flow into `v`.
    pub fn requires_grad(&self, v: &Var<T>) -> bool {
        self.tracked(v)
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: usize, g: Tensor<T>) -> Result<()> {
    match &mut grads[id] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Gradients of one backward pass, indexed by the leaves that produced them.
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: &Var<T>) -> Option<&Tensor<T>> {
        self.grads.get(v.id).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of its shape when nothing flowed into it.
    pub fn wrt(&self, v: &Var<T>) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(v.shape().to_vec()))
    }
}
