//! Dense row-major tensors and the forward kernels the autodiff graph is built on.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array with an optional gradient buffer of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
    grad: Option<Vec<S>>,
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || len != data.len() {
            return Err(Error::Shape { shape, len: data.len() });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("tensor construction".into()));
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    /// Shape-checked constructor for internal kernels whose outputs are
    /// finite-checked by the caller.
    fn raw(shape: Vec<usize>, data: Vec<S>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data,
            grad: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor::raw(shape.to_vec(), vec![S::zero(); len])
    }

    pub fn full(shape: &[usize], value: S) -> Self {
        let len = shape.iter().product();
        Tensor::raw(shape.to_vec(), vec![value; len])
    }

    pub fn scalar(value: S) -> Result<Self> {
        Tensor::new(vec![1], vec![value])
    }

    pub fn vector(data: Vec<S>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    /// Builds a matrix from equal-length rows.
    pub fn matrix(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Contract("ragged matrix rows".into()));
        }
        Tensor::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Tensor::new(shape.to_vec(), data.iter().map(|&x| S::of(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.as_f64()).collect()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<S> {
        match self.data.as_slice() {
            [x] => Ok(*x),
            _ => Err(Error::Contract(format!(
                "expected a scalar, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> &mut [S] {
        let len = self.data.len();
        self.grad.get_or_insert_with(|| vec![S::zero(); len])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = S::zero());
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Interprets the tensor as a matrix: rank-2 as is, rank-1 as a single row.
    pub fn as_matrix_dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [n] => (1, *n),
            [m, n] => (*m, *n),
            _ => (
                self.shape[..self.shape.len() - 1].iter().product(),
                *self.shape.last().unwrap(),
            ),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.numel() || shape.contains(&0) {
            return Err(Error::dim("reshape", &self.shape, shape));
        }
        Ok(Tensor::raw(shape.to_vec(), self.data.clone()))
    }

    pub fn transpose(&self) -> Result<Self> {
        let [m, n] = self.dims2("transpose")?;
        let mut out = vec![S::zero(); m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor::raw(vec![n, m], out))
    }

    fn dims2(&self, op: &'static str) -> Result<[usize; 2]> {
        match self.shape.as_slice() {
            [m, n] => Ok([*m, *n]),
            _ => Err(Error::dim(op, &self.shape, &[])),
        }
    }

    /// Standard matrix product of two rank-2 tensors.
    pub fn matmul(&self, other: &Tensor<S>) -> Result<Self> {
        let (m, n) = match self.shape.as_slice() {
            [m, n] => (*m, *n),
            _ => return Err(Error::dim("matmul", &self.shape, &other.shape)),
        };
        let p = match other.shape.as_slice() {
            [n2, p] if *n2 == n => *p,
            _ => return Err(Error::dim("matmul", &self.shape, &other.shape)),
        };
        let out = matmul_raw(&self.data, &other.data, m, n, p);
        checked(Tensor::raw(vec![m, p], out), "matmul")
    }

    /// `M[m×n] · v[n] -> [m]`.
    pub fn matvec(&self, v: &Tensor<S>) -> Result<Self> {
        let [m, n] = self.dims2("matvec")?;
        if v.shape != [n] {
            return Err(Error::dim("matvec", &self.shape, &v.shape));
        }
        let out = matmul_raw(&self.data, &v.data, m, n, 1);
        checked(Tensor::raw(vec![m], out), "matvec")
    }

    /// `v[m] · M[m×n] -> [n]`.
    pub fn vecmat(&self, m: &Tensor<S>) -> Result<Self> {
        let [rows, cols] = m.dims2("vecmat")?;
        if self.shape != [rows] {
            return Err(Error::dim("vecmat", &self.shape, &m.shape));
        }
        let out = matmul_raw(&self.data, &m.data, 1, rows, cols);
        checked(Tensor::raw(vec![cols], out), "vecmat")
    }

    pub fn zip_map(&self, other: &Tensor<S>, op: &'static str, f: impl Fn(S, S) -> S) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim(op, &self.shape, &other.shape));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        checked(Tensor::raw(self.shape.clone(), data), op)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Tensor::raw(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    /// Adds `bias[n]` to every row of a matrix interpretation of `self`.
    pub fn add_row_broadcast(&self, bias: &Tensor<S>) -> Result<Self> {
        let (_, n) = self.as_matrix_dims();
        if bias.shape != [n] {
            return Err(Error::dim("add_row_broadcast", &self.shape, &bias.shape));
        }
        let data = self
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bias.data[i % n])
            .collect();
        checked(Tensor::raw(self.shape.clone(), data), "add_row_broadcast")
    }

    pub fn activation(&self, kind: Activation) -> Result<Self> {
        if !self.is_finite() {
            return Err(Error::NonFinite(format!("{kind:?} input")));
        }
        Ok(self.map(|x| kind.apply(x)))
    }

    pub fn sum(&self) -> S {
        self.data.iter().copied().sum()
    }
}

fn checked<S: Scalar>(t: Tensor<S>, op: &str) -> Result<Tensor<S>> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(op.to_string()))
    }
}

/// `a[m×n] · b[n×p]`, i-k-j loop order.
pub(crate) fn matmul_raw<S: Scalar>(a: &[S], b: &[S], m: usize, n: usize, p: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * p];
    for i in 0..m {
        let row = &mut out[i * p..(i + 1) * p];
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == S::zero() {
                continue;
            }
            let brow = &b[k * p..(k + 1) * p];
            for (o, &bkj) in row.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    out
}

/// `aᵀ · b` where `a` is `[n×m]` and `b` is `[n×p]`, giving `[m×p]`.
pub(crate) fn matmul_tn_raw<S: Scalar>(a: &[S], b: &[S], n: usize, m: usize, p: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * p];
    for k in 0..n {
        let brow = &b[k * p..(k + 1) * p];
        for i in 0..m {
            let aki = a[k * m + i];
            if aki == S::zero() {
                continue;
            }
            let row = &mut out[i * p..(i + 1) * p];
            for (o, &bkj) in row.iter_mut().zip(brow) {
                *o += aki * bkj;
            }
        }
    }
    out
}

/// `a · bᵀ` where `a` is `[m×n]` and `b` is `[p×n]`, giving `[m×p]`.
pub(crate) fn matmul_nt_raw<S: Scalar>(a: &[S], b: &[S], m: usize, n: usize, p: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * p];
    for i in 0..m {
        let arow = &a[i * n..(i + 1) * n];
        for j in 0..p {
            let brow = &b[j * n..(j + 1) * n];
            out[i * p + j] = arow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
        }
    }
    out
}

/// Elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => x.max(S::zero()),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y` (and input `x` for relu).
    pub fn derivative<S: Scalar>(self, x: S, y: S) -> S {
        match self {
            Activation::Relu => {
                if x > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Sigmoid => y * (S::one() - y),
            Activation::Tanh => S::one() - y * y,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

pub fn sigmoid<S: Scalar>(x: S) -> S {
    // Split by sign so exp never overflows.
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Softmax over the positions where `mask` is true; masked positions get exactly 0.
pub fn masked_softmax<S: Scalar>(logits: &Tensor<S>, mask: &[bool]) -> Result<Tensor<S>> {
    if logits.numel() != mask.len() {
        return Err(Error::dim("masked_softmax", logits.shape(), &[mask.len()]));
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite("masked_softmax input".into()));
    }
    let max = logits
        .data()
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&x, _)| x)
        .fold(None, |acc: Option<S>, x| Some(acc.map_or(x, |a| a.max(x))))
        .ok_or(Error::EmptySequence("masked_softmax: all positions masked"))?;
    let mut out: Vec<S> = logits
        .data()
        .iter()
        .zip(mask)
        .map(|(&x, &m)| if m { (x - max).exp() } else { S::zero() })
        .collect();
    let total: S = out.iter().copied().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Ok(Tensor::raw(logits.shape().to_vec(), out))
}
