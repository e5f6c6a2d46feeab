//! Dense tensors and the primitive numeric operations every layer is built
//! from.
//!
//! Tensors are row-major flat arrays of `f64` with a rank between 1 and 4.
//! They are plain values: operations take references and return fresh
//! tensors, so sharing a tensor across threads for reading is always safe.
//! Broadcasting is deliberately minimal — a rank-1 vector may be broadcast
//! over the trailing axis of a higher-rank tensor, nothing else.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Shape of a tensor: 1 to 4 positive extents, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shape {
    dims: Vec<usize>,
}

impl Shape {
    pub fn new(dims: &[usize]) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(Error::InvalidShape(format!(
                "rank must be 1..=4, got {} ({dims:?})",
                dims.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidShape(format!(
                "every extent must be >= 1, got {dims:?}"
            )));
        }
        let mut count = 1usize;
        for &d in dims {
            count = count
                .checked_mul(d)
                .ok_or_else(|| Error::InvalidShape(format!("element count overflow: {dims:?}")))?;
        }
        Ok(Shape {
            dims: dims.to_vec(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Dense n-dimensional array of `f64` in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

/// Element-wise unary function kinds. Layers store one of these as their
/// activation; `None` at the layer level means identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Neg,
}

impl Unary {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Exp => x.exp(),
            Unary::Neg => -x,
        }
    }

    /// Derivative expressed in terms of the pre-activation input.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Unary::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Unary::Exp => x.exp(),
            Unary::Neg => -1.0,
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Axis-reduction kinds for [`Tensor::reduce`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    Max,
    /// Index of the maximum; ties resolve to the lowest index.
    Argmax,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.element_count() {
            return Err(Error::InvalidShape(format!(
                "data length {} does not match shape {:?} ({} elements)",
                data.len(),
                shape.dims(),
                shape.element_count()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        Tensor::new(Shape::new(dims)?, data)
    }

    /// Every element set to `value`.
    pub fn full(shape: Shape, value: f64) -> Tensor {
        let n = shape.element_count();
        Tensor {
            shape,
            data: vec![value; n],
        }
    }

    pub fn zeros(dims: &[usize]) -> Result<Tensor> {
        Ok(Tensor::full(Shape::new(dims)?, 0.0))
    }

    /// Deterministic normal draws with mean 0 and standard deviation `std`,
    /// in row-major order from a fresh SplitMix64 stream (see `rng`).
    pub fn rng_normal(shape: Shape, seed: u64, std: f64) -> Result<Tensor> {
        if std <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "rng_normal requires std > 0, got {std}"
            )));
        }
        let mut rng = Rng::from_seed(seed);
        let n = shape.element_count();
        let data = (0..n).map(|_| rng.normal() * std).collect();
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Flat index for a rank-2 tensor.
    #[inline]
    pub fn idx2(&self, i: usize, j: usize) -> usize {
        i * self.dims()[1] + j
    }

    /// Flat index for a rank-3 tensor.
    #[inline]
    pub fn idx3(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.dims()[1] + i) * self.dims()[2] + j
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[self.idx2(i, j)]
    }

    #[inline]
    pub fn at3(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx3(c, i, j)]
    }

    /// Row `i` of a rank-2 tensor as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.dims()[1];
        &self.data[i * w..(i + 1) * w]
    }

    /// Reinterpret the data with a new shape of equal element count.
    pub fn reshaped(&self, dims: &[usize]) -> Result<Tensor> {
        let shape = Shape::new(dims)?;
        if shape.element_count() != self.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.dims().to_vec(),
                right: dims.to_vec(),
            });
        }
        Ok(Tensor {
            shape,
            data: self.data.clone(),
        })
    }

    /// Matrix product of two rank-2 tensors: `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.rank() != 2 || other.shape.rank() != 2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        }
        let (m, k) = (self.dims()[0], self.dims()[1]);
        let (k2, n) = (other.dims()[0], other.dims()[1]);
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += a * brow[j];
                }
            }
        }
        Tensor::from_vec(&[m, n], out)
    }

    /// Matrix–vector product: `[m,k] x [k] -> [m]`.
    pub fn matvec(&self, v: &Tensor) -> Result<Tensor> {
        if self.shape.rank() != 2 || v.shape.rank() != 1 || self.dims()[1] != v.len() {
            return Err(Error::ShapeMismatch {
                op: "matvec",
                left: self.dims().to_vec(),
                right: v.dims().to_vec(),
            });
        }
        let (m, k) = (self.dims()[0], self.dims()[1]);
        let mut out = vec![0.0; m];
        for i in 0..m {
            let row = &self.data[i * k..(i + 1) * k];
            out[i] = row.iter().zip(&v.data).map(|(a, b)| a * b).sum();
        }
        Tensor::from_vec(&[m], out)
    }

    /// Transposed matrix–vector product: `[m,k]^T x [m] -> [k]`.
    pub fn matvec_t(&self, v: &Tensor) -> Result<Tensor> {
        if self.shape.rank() != 2 || v.shape.rank() != 1 || self.dims()[0] != v.len() {
            return Err(Error::ShapeMismatch {
                op: "matvec_t",
                left: self.dims().to_vec(),
                right: v.dims().to_vec(),
            });
        }
        let (m, k) = (self.dims()[0], self.dims()[1]);
        let mut out = vec![0.0; k];
        for i in 0..m {
            let a = v.data[i];
            if a == 0.0 {
                continue;
            }
            let row = &self.data[i * k..(i + 1) * k];
            for j in 0..k {
                out[j] += a * row[j];
            }
        }
        Tensor::from_vec(&[k], out)
    }

    fn binary(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.dims() == other.dims() {
            let data = self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Ok(Tensor {
                shape: self.shape.clone(),
                data,
            });
        }
        // Trailing-axis broadcast: rank-1 `other` repeated over leading axes.
        let last = *self.dims().last().unwrap();
        if other.shape.rank() == 1 && other.len() == last {
            let data = self
                .data
                .iter()
                .enumerate()
                .map(|(i, &a)| f(a, other.data[i % last]))
                .collect();
            return Ok(Tensor {
                shape: self.shape.clone(),
                data,
            });
        }
        Err(Error::ShapeMismatch {
            op,
            left: self.dims().to_vec(),
            right: other.dims().to_vec(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.binary(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&a| a * s).collect(),
        }
    }

    pub fn map(&self, kind: Unary) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| kind.apply(x)).collect(),
        }
    }

    /// Element-wise map with an arbitrary scalar function (internal helper;
    /// the public enum-dispatch path is [`Tensor::map`]).
    pub(crate) fn map_scalar(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Softmax along `axis`: per slice, `y_i = exp(x_i - max) / sum_j exp(x_j - max)`.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        self.check_axis(axis)?;
        let mut out = self.data.clone();
        self.for_each_lane(axis, |stride, start, len| {
            let mut max = f64::NEG_INFINITY;
            for i in 0..len {
                max = max.max(out[start + i * stride]);
            }
            let mut sum = 0.0;
            for i in 0..len {
                let e = (out[start + i * stride] - max).exp();
                out[start + i * stride] = e;
                sum += e;
            }
            for i in 0..len {
                out[start + i * stride] /= sum;
            }
        });
        Ok(Tensor {
            shape: self.shape.clone(),
            data: out,
        })
    }

    /// Collapse `axis` with the given reduction.
    pub fn reduce(&self, kind: Reduce, axis: usize) -> Result<Tensor> {
        self.check_axis(axis)?;
        let in_dims = self.dims();
        let out_dims: Vec<usize> = in_dims
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != axis)
            .map(|(_, &d)| d)
            .collect();
        // Reducing a rank-1 tensor yields a single-element rank-1 tensor.
        let out_dims = if out_dims.is_empty() { vec![1] } else { out_dims };
        let mut out = Vec::with_capacity(out_dims.iter().product());
        self.for_each_lane(axis, |stride, start, len| {
            let lane = (0..len).map(|i| self.data[start + i * stride]);
            let v = match kind {
                Reduce::Sum => lane.sum(),
                Reduce::Mean => lane.sum::<f64>() / len as f64,
                Reduce::Max => lane.fold(f64::NEG_INFINITY, f64::max),
                Reduce::Argmax => {
                    let mut best = 0usize;
                    let mut best_v = f64::NEG_INFINITY;
                    for (i, v) in lane.enumerate() {
                        if v > best_v {
                            best_v = v;
                            best = i;
                        }
                    }
                    best as f64
                }
            };
            out.push(v);
        });
        Tensor::from_vec(&out_dims, out)
    }

    /// Index of the maximum element of a rank-1 tensor (lowest index wins ties).
    pub fn argmax1(&self) -> usize {
        let mut best = 0usize;
        let mut best_v = f64::NEG_INFINITY;
        for (i, &v) in self.data.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        best
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Concatenate two rank-1 tensors.
    pub fn concat1(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape.rank() != 1 || other.shape.rank() != 1 {
            return Err(Error::ShapeMismatch {
                op: "concat1",
                left: self.dims().to_vec(),
                right: other.dims().to_vec(),
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Tensor::from_vec(&[self.len() + other.len()], data)
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis >= self.shape.rank() {
            return Err(Error::InvalidAxis {
                axis,
                shape: self.dims().to_vec(),
            });
        }
        Ok(())
    }

    /// Visit every lane along `axis` as (stride, start offset, lane length).
    fn for_each_lane(&self, axis: usize, mut f: impl FnMut(usize, usize, usize)) {
        let dims = self.dims();
        let len = dims[axis];
        let stride: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let inner = stride;
        let block = len * stride;
        for o in 0..outer {
            for i in 0..inner {
                f(stride, o * block + i, len);
            }
        }
    }
}

/// Outer product of two rank-1 tensors: `[m] x [n] -> [m,n]`.
pub fn outer(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape().rank() != 1 || b.shape().rank() != 1 {
        return Err(Error::ShapeMismatch {
            op: "outer",
            left: a.dims().to_vec(),
            right: b.dims().to_vec(),
        });
    }
    let (m, n) = (a.len(), b.len());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let av = a.data()[i];
        for j in 0..n {
            out[i * n + j] = av * b.data()[j];
        }
    }
    Tensor::from_vec(&[m, n], out)
}
