//! Dense row-major `f64` tensor.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense n-dimensional array of `f64` in row-major order.
///
/// Rank 0 (`shape == []`) is a scalar. The `requires_grad` flag marks
/// the tensor as a differentiable leaf when placed on a [`super::Tape`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    /// Validating constructor: checks the shape/data length invariant and
    /// rejects non-finite values.
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                detail: format!("shape {shape:?} implies {numel} values, got {}", data.len()),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain {
                op: "from_vec",
                detail: format!("non-finite value {v}"),
            });
        }
        Ok(Self {
            shape,
            data,
            requires_grad: false,
        })
    }

    /// Internal constructor for op outputs; skips validation on the hot
    /// path but keeps the length invariant in debug builds.
    pub(crate) fn new_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape,
            data,
            requires_grad: false,
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::new_unchecked(vec![], vec![v])
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Self::new_unchecked(shape, vec![0.0; numel])
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self::new_unchecked(vec![data.len()], data)
    }

    /// Builds a `(rows.len(), width)` matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * width);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(Error::ShapeMismatch {
                    op: "from_rows",
                    detail: format!("row {i} has length {}, expected {width}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Tensor::from_vec(vec![rows.len(), width], data)
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Scalar value; panics if the tensor is not rank 0.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on non-scalar tensor");
        self.data[0]
    }

    /// Number of rows when interpreted as a matrix; a 1-D tensor is a
    /// single row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    /// Row width: last dimension for rank >= 1, 1 for scalars.
    pub fn row_len(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[r * w..(r + 1) * w]
    }

    pub fn has_nan(&self) -> bool {
        self.data.iter().any(|v| v.is_nan())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// l2 norm of the flattened data.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `(n, k) x (k, m) -> (n, m)` matrix product on plain values.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (n, k) = as_matrix_dims(self, "matmul lhs")?;
        let (k2, m) = as_matrix_dims(other, "matmul rhs")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!("inner dims {k} vs {k2}"),
            });
        }
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for l in 0..k {
                let a = self.data[i * k + l];
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &other.data[l * m..(l + 1) * m];
                let out_row = &mut out[i * m..(i + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor::new_unchecked(vec![n, m], out))
    }

    /// Matrix transpose; 1-D input becomes a `(d, 1)` column.
    pub fn transposed(&self) -> Tensor {
        let (n, m) = match self.shape.as_slice() {
            [n, m] => (*n, *m),
            [d] => return Tensor::new_unchecked(vec![*d, 1], self.data.clone()),
            _ => panic!("transpose on rank-{} tensor", self.rank()),
        };
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = self.data[i * m + j];
            }
        }
        Tensor::new_unchecked(vec![m, n], out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::new_unchecked(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op: "zip_map",
                detail: format!("{:?} vs {:?}", self.shape, other.shape),
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor::new_unchecked(self.shape.clone(), data))
    }
}

pub(crate) fn as_matrix_dims(t: &Tensor, ctx: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [n, m] => Ok((*n, *m)),
        [m] => Ok((1, *m)),
        other => Err(Error::ShapeMismatch {
            op: ctx,
            detail: format!("expected matrix, got shape {other:?}"),
        }),
    }
}
