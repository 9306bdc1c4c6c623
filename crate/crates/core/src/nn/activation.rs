use super::{Real, Tensor4};
use crate::error::{Error, Result};

pub fn relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

pub fn sigmoid<T: Real>(x: T) -> T {
    // Split by sign so exp never overflows.
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    output: Option<Tensor4<T>>,
}

impl<T: Real> Relu<T> {
    pub fn new() -> Self {
        Relu { output: None }
    }

    pub fn forward(&mut self, x: &Tensor4<T>) -> Tensor4<T> {
        let y = x.map(relu);
        self.output = Some(y.clone());
        y
    }

    /// In-place forward; keeps a copy of the output for backward.
    pub fn forward_owned(&mut self, mut x: Tensor4<T>) -> Tensor4<T> {
        x.data.iter_mut().for_each(|v| *v = relu(*v));
        self.output = Some(x.clone());
        x
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let y = self
            .output
            .take()
            .ok_or_else(|| Error::InvalidArgument("relu backward before forward".into()))?;
        if y.dims != dy.dims {
            return Err(Error::Shape(format!("relu gradient dims {:?}", dy.dims)));
        }
        // Output > 0 exactly where input > 0; reuse its buffer for the gradient.
        let mut g = y;
        for (o, &d) in g.data.iter_mut().zip(&dy.data) {
            *o = if *o > T::zero() { d } else { T::zero() };
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid<T> {
    output: Option<Tensor4<T>>,
}

impl<T: Real> Sigmoid<T> {
    pub fn new() -> Self {
        Sigmoid { output: None }
    }

    pub fn forward(&mut self, x: &Tensor4<T>) -> Tensor4<T> {
        let y = x.map(sigmoid);
        self.output = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let y = self
            .output
            .take()
            .ok_or_else(|| Error::InvalidArgument("sigmoid backward before forward".into()))?;
        if y.dims != dy.dims {
            return Err(Error::Shape(format!("sigmoid gradient dims {:?}", dy.dims)));
        }
        let data = y
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&s, &g)| g * s * (T::one() - s))
            .collect();
        Tensor4::from_vec(y.dims, data)
    }
}
