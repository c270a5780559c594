use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Arithmetic the forward pass needs; implemented for `f64` and for double-double
/// numbers used by the finite-difference oracle.
pub trait Scalar:
    Copy
    + Debug
    + PartialOrd
    + From<f64>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
{
    fn exp(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn exp(self) -> f64 {
        f64::exp(self)
    }
}

impl Scalar for twofloat::TwoFloat {
    fn exp(self) -> Self {
        twofloat::TwoFloat::exp(self)
    }
}

/// Dense row-major array of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Option<Self> {
        (shape.iter().product::<usize>() == data.len()).then(|| Tensor { shape: shape.to_vec(), data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// `out = W x` for `W` of shape `[rows, cols]`.
#[cfg(test)]
pub(crate) fn matvec(w: &Tensor, x: &[f64], out: &mut [f64]) {
    let c = w.cols();
    debug_assert_eq!(x.len(), c);
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&w.data[r * c..(r + 1) * c], x);
    }
}

/// `out = W x` for a row-major `W` with `cols` columns.
pub(crate) fn matvec_slice<S: Scalar>(w: &[S], cols: usize, x: &[S], out: &mut [S]) {
    debug_assert_eq!(x.len(), cols);
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&w[r * cols..(r + 1) * cols], x);
    }
}

/// `out += W^T g`.
pub(crate) fn matvec_t_acc(w: &Tensor, g: &[f64], out: &mut [f64]) {
    let c = w.cols();
    for (r, &gr) in g.iter().enumerate() {
        if gr != 0.0 {
            axpy(gr, &w.data[r * c..(r + 1) * c], out);
        }
    }
}

/// `grad += g x^T`.
pub(crate) fn outer_acc(grad: &mut Tensor, g: &[f64], x: &[f64]) {
    let c = grad.cols();
    for (r, &gr) in g.iter().enumerate() {
        if gr != 0.0 {
            axpy(gr, x, &mut grad.data[r * c..(r + 1) * c]);
        }
    }
}

#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::from(0.0);
    for (&x, &y) in a.iter().zip(b) {
        acc = acc + x * y;
    }
    acc
}

#[inline]
pub(crate) fn axpy<S: Scalar>(a: S, x: &[S], y: &mut [S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_layer_gradient_is_outer_product() {
        // y = W x, L = g . y  =>  dL/dW = g x^T, dL/dx = W^T g
        let w = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 0.5, 3.0, 0.0, -1.0]).unwrap();
        let x = [0.2, -0.7, 1.5];
        let g = [2.0, -1.0];
        let mut y = [0.0; 2];
        matvec(&w, &x, &mut y);
        let expect = [1.0 * 0.2 + 2.0 * 0.7 + 0.75, 0.6 - 1.5];
        for (a, b) in y.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let mut gw = Tensor::zeros(&[2, 3]);
        outer_acc(&mut gw, &g, &x);
        assert_eq!(gw.data, vec![0.4, -1.4, 3.0, -0.2, 0.7, -1.5]);
        let mut gx = [0.0; 3];
        matvec_t_acc(&w, &g, &mut gx);
        assert_eq!(gx, [2.0 - 3.0, -4.0, 1.0 + 1.0]);
    }
}
