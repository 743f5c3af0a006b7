//! Dense row-major matrices, trainable parameters and a central-difference
//! gradient checker.
//!
//! Everything is `f64`. Gradients are derived by hand per layer and per loss;
//! there is no tape or graph here, only storage plus the few kernels the
//! model needs.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The seedable generator threaded through every stochastic operation.
///
/// ChaCha with 8 rounds: output is fixed by the seed on every platform.
pub type DetRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> DetRng {
    DetRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            values: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major values, rejecting bad lengths and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (values.len(), 1),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "element {pos} of a {rows}x{cols} matrix"
            )));
        }
        Ok(Matrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut values = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::ShapeMismatch {
                    op: "from_rows",
                    left: (r, c),
                    right: (1, row.len()),
                });
            }
            values.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, values)
    }

    pub fn column(values: &[f64]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            values: values.to_vec(),
        }
    }

    /// Entries drawn uniformly from `(-scale, scale)`.
    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut DetRng) -> Self {
        let values = (0..rows * cols)
            .map(|_| rng.random_range(-scale..scale))
            .collect();
        Matrix { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.values.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        matmul(self, other)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Matrix {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `out = self · x` for a matrix and a dense vector.
    pub(crate) fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), x);
        }
    }

    /// `out += selfᵀ · y`.
    pub(crate) fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
    }

    /// `self += y · xᵀ` (gradient of a matvec w.r.t. the matrix).
    pub(crate) fn add_outer(&mut self, y: &[f64], x: &[f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(x.len(), self.cols);
        let cols = self.cols;
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let row = &mut self.values[r * cols..(r + 1) * cols];
            for (g, &xc) in row.iter_mut().zip(x) {
                *g += yr * xc;
            }
        }
    }

    pub(crate) fn add_assign_slice(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.values.len());
        for (a, b) in self.values.iter_mut().zip(x) {
            *a += b;
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_finite(m: Matrix, op: &str) -> Result<Matrix> {
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::NonFinite(format!("result of {op}")))
    }
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::ShapeMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let orow = &mut out.values[i * b.cols..(i + 1) * b.cols];
        for (p, &aip) in a.row(i).iter().enumerate() {
            for (o, &bpj) in orow.iter_mut().zip(b.row(p)) {
                *o += aip * bpj;
            }
        }
    }
    check_finite(out, "matmul")
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Subgradient of relu; 0 at the kink.
pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Mul,
    Tanh,
    Sigmoid,
    Relu,
}

impl Elementwise {
    pub fn arity(self) -> usize {
        match self {
            Elementwise::Add | Elementwise::Mul => 2,
            _ => 1,
        }
    }
}

/// Applies `op` elementwise. Binary ops take two equally shaped inputs,
/// unary ops take one.
pub fn elementwise(op: Elementwise, inputs: &[&Matrix]) -> Result<Matrix> {
    if inputs.len() != op.arity() {
        return Err(Error::LengthMismatch {
            left: op.arity(),
            right: inputs.len(),
        });
    }
    let a = inputs[0];
    let out = match op {
        Elementwise::Tanh => a.map(f64::tanh),
        Elementwise::Sigmoid => a.map(sigmoid),
        Elementwise::Relu => a.map(relu),
        Elementwise::Add | Elementwise::Mul => {
            let b = inputs[1];
            if a.shape() != b.shape() {
                return Err(Error::ShapeMismatch {
                    op: if op == Elementwise::Add { "add" } else { "mul" },
                    left: a.shape(),
                    right: b.shape(),
                });
            }
            let values = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| if op == Elementwise::Add { x + y } else { x * y })
                .collect();
            Matrix {
                rows: a.rows,
                cols: a.cols,
                values,
            }
        }
    };
    check_finite(out, "elementwise op")
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }
}

/// Anything that owns an ordered list of [`Param`]s.
pub trait Parameterized {
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_scalars(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

impl Parameterized for Vec<Param> {
    fn params(&self) -> Vec<&Param> {
        self.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.iter_mut().collect()
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares the analytic gradients already stored in `target` against
/// central differences of `f` and returns the largest relative error.
///
/// Every scalar of every parameter is perturbed by `±epsilon` in turn and
/// restored afterwards, so `target` is unchanged on return.
pub fn grad_check<T, F>(f: F, target: &mut T, epsilon: f64) -> Result<f64>
where
    T: Parameterized + ?Sized,
    F: FnMut(&T) -> f64,
{
    grad_check_report(f, target, epsilon).map(|r| r.max_rel_error)
}

/// Per-element comparison summary from [`grad_check_report`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Largest `|a - n| / (rel_tol * max(|a|, |n|) + roundoff)` with
    /// `rel_tol = 1e-6` and `roundoff = 8 * f64::EPSILON * max(|f|, 1) / epsilon`,
    /// the cancellation error of a central difference. Below 1 means every
    /// element agrees up to floating-point resolution.
    pub max_roundoff_ratio: f64,
    pub elements: usize,
}

pub fn grad_check_report<T, F>(mut f: F, target: &mut T, epsilon: f64) -> Result<GradCheckReport>
where
    T: Parameterized + ?Sized,
    F: FnMut(&T) -> f64,
{
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::config("epsilon", "must be positive"));
    }
    let f0 = f(target);
    let roundoff = 8.0 * f64::EPSILON * f0.abs().max(1.0) / epsilon;
    let counts: Vec<usize> = target.params().iter().map(|p| p.value.len()).collect();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        max_roundoff_ratio: 0.0,
        elements: 0,
    };
    for (pi, &n) in counts.iter().enumerate() {
        for e in 0..n {
            let x = target.params()[pi].value.values[e];
            target.params_mut()[pi].value.values[e] = x + epsilon;
            let plus = f(target);
            target.params_mut()[pi].value.values[e] = x - epsilon;
            let minus = f(target);
            target.params_mut()[pi].value.values[e] = x;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "function value while perturbing parameter {pi}, element {e}"
                )));
            }
            let numeric = (plus - minus) / (2.0 * epsilon);
            let analytic = target.params()[pi].grad.values[e];
            let diff = (analytic - numeric).abs();
            report.max_rel_error = report.max_rel_error.max(relative_error(analytic, numeric));
            report.max_abs_error = report.max_abs_error.max(diff);
            let allowed = 1e-6 * analytic.abs().max(numeric.abs()) + roundoff;
            report.max_roundoff_ratio = report.max_roundoff_ratio.max(diff / allowed);
            report.elements += 1;
        }
    }
    Ok(report)
}
