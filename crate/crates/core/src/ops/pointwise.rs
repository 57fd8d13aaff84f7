use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementwise<T> {
    Relu,
    Sigmoid,
    Add,
    Sub,
    Mul,
    Scale(T),
}

/// Dispatches one pointwise primitive. Unary ops take one operand, binary ops two.
pub fn elementwise<T: Scalar>(op: Elementwise<T>, operands: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let arity = match op {
        Elementwise::Relu | Elementwise::Sigmoid | Elementwise::Scale(_) => 1,
        _ => 2,
    };
    if operands.len() != arity {
        return Err(invalid!("{:?} takes {} operand(s), got {}", op, arity, operands.len()));
    }
    match op {
        Elementwise::Relu => Ok(relu(operands[0])),
        Elementwise::Sigmoid => Ok(sigmoid(operands[0])),
        Elementwise::Scale(s) => Ok(scale(operands[0], s)),
        Elementwise::Add => add(operands[0], operands[1]),
        Elementwise::Sub => sub(operands[0], operands[1]),
        Elementwise::Mul => mul(operands[0], operands[1]),
    }
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

#[inline]
pub(crate) fn sigmoid_scalar<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(sigmoid_scalar)
}

pub fn scale<T: Scalar>(x: &Tensor<T>, s: T) -> Tensor<T> {
    x.map(|v| v * s)
}

fn broadcast<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    if b.len() == 1 && b.rank() == 0 {
        let s = b.item();
        return Ok(a.map(|v| f(v, s)));
    }
    if a.len() == 1 && a.rank() == 0 {
        let s = a.item();
        return Ok(b.map(|v| f(s, v)));
    }
    Err(invalid!(
        "shapes {:?} and {:?} are not broadcast-compatible",
        a.shape(),
        b.shape()
    ))
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    broadcast(a, b, |x, y| x + y)
}

pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    broadcast(a, b, |x, y| x - y)
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    broadcast(a, b, |x, y| x * y)
}
