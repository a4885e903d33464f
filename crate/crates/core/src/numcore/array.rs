use serde::{Deserialize, Serialize};

use super::NumError;

/// Row-major dense array of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseArray {
    pub fn zeros(shape: &[usize]) -> Self {
        DenseArray {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NumError> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || n != data.len() {
            return Err(NumError::ShapeMismatch {
                context: "from_vec".into(),
                expected: shape.to_vec(),
                actual: vec![data.len()],
            });
        }
        Ok(DenseArray {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Wraps a 1-D vector.
    pub fn vector(data: Vec<f64>) -> Self {
        DenseArray {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Extent of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    /// Number of rows when viewed as `[len / last_dim, last_dim]`.
    pub fn rows(&self) -> usize {
        self.data.len() / self.last_dim().max(1)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.last_dim();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.last_dim();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, NumError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NumError::ShapeMismatch {
                context: "reshape".into(),
                expected: shape.to_vec(),
                actual: self.shape,
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &DenseArray) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseArray {
        DenseArray {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub(crate) fn expect_shape(&self, expected: &[usize], context: &str) -> Result<(), NumError> {
        if self.shape != expected {
            return Err(NumError::ShapeMismatch {
                context: context.into(),
                expected: expected.to_vec(),
                actual: self.shape.clone(),
            });
        }
        Ok(())
    }
}

/// `out[n, p] (+)= a[n, m] · b[m, p]`.
pub(crate) fn matmul_into(out: &mut [f64], a: &[f64], b: &[f64], n: usize, m: usize, p: usize) {
    for i in 0..n {
        let orow = &mut out[i * p..(i + 1) * p];
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * p..(k + 1) * p];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// `out[m, p] += aᵀ · b` with `a[n, m]`, `b[n, p]`.
pub(crate) fn matmul_at_b_acc(out: &mut [f64], a: &[f64], b: &[f64], n: usize, m: usize, p: usize) {
    for i in 0..n {
        let brow = &b[i * p..(i + 1) * p];
        for k in 0..m {
            let aik = a[i * m + k];
            if aik == 0.0 {
                continue;
            }
            let orow = &mut out[k * p..(k + 1) * p];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
}

/// `out[n, m] += a · bᵀ` with `a[n, p]`, `b[m, p]`.
pub(crate) fn matmul_a_bt_acc(out: &mut [f64], a: &[f64], b: &[f64], n: usize, p: usize, m: usize) {
    for i in 0..n {
        let arow = &a[i * p..(i + 1) * p];
        for j in 0..m {
            let brow = &b[j * p..(j + 1) * p];
            out[i * m + j] += arow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}
