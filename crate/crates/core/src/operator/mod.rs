//! Parametrized linear operators accessed only through matrix-vector products.
//!
//! An [`Operator`] implementation supplies `A(θ) v`, `A(θ)^T v` and the
//! parameter pullback `θ ↦ ∇_θ ⟨w̄, A(θ) v⟩`. [`MatVecOperator`] wraps an
//! implementation and counts every product so that the complexity contracts of
//! the Krylov adjoints can be asserted.

mod dense;
mod kernel;
mod sparse;
mod wave;

use std::ops::Deref;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::Vector;

pub use dense::{hilbert_matrix, make_dense_operator, make_hilbert_operator, DenseOperator};
pub use kernel::{make_rbf_kernel_operator, rbf_params, RbfKernelOperator};
pub use sparse::{
    parse_matrix_market, read_matrix_market, write_matrix_market, CsrMatrix, SparseOperator,
};
pub use wave::{make_wave_operator, WaveOperator};

/// Flat parameter vector `θ`. Entries are finite by construction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteParameter { index });
        }
        Ok(Self(values))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `θ + step · direction`, used by finite-difference checks.
    pub fn perturbed(&self, direction: &[f64], step: f64) -> Result<Self> {
        if direction.len() != self.0.len() {
            return Err(Error::Dimension(format!(
                "direction has length {}, parameters have length {}",
                direction.len(),
                self.0.len()
            )));
        }
        Self::new(
            self.0
                .iter()
                .zip(direction)
                .map(|(t, d)| t + step * d)
                .collect(),
        )
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A square operator `A(θ)` of fixed dimension, exposed through products only.
///
/// Implementations must be immutable and callable from several threads.
pub trait Operator: Send + Sync {
    fn dim(&self) -> usize;

    fn num_params(&self) -> usize;

    /// `out = A(θ) v`.
    fn matvec(&self, theta: &[f64], v: &[f64], out: &mut [f64]);

    /// `out = A(θ)^T v`.
    fn matvec_transpose(&self, theta: &[f64], v: &[f64], out: &mut [f64]);

    /// Adds `∇_θ ⟨w̄, A(θ) v⟩` into `grad`.
    fn vjp_params(&self, theta: &[f64], v: &[f64], w_bar: &[f64], grad: &mut [f64]);

    /// Exact diagonal of `A(θ)`, when cheaply available.
    fn diagonal(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn is_symmetric(&self) -> bool;
}

/// Counting wrapper around an [`Operator`].
///
/// `apply` and `apply_transpose` each increment the matvec counter by one;
/// `vjp_params` increments a separate counter.
pub struct MatVecOperator {
    inner: Box<dyn Operator>,
    applies: AtomicU64,
    transpose_applies: AtomicU64,
    vjps: AtomicU64,
}

impl std::fmt::Debug for MatVecOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MatVecOperator")
            .field("dim", &self.dim())
            .field("num_params", &self.num_params())
            .field("is_symmetric", &self.is_symmetric())
            .field("matvecs", &self.matvec_count())
            .finish()
    }
}

impl MatVecOperator {
    pub fn new(inner: impl Operator + 'static) -> Self {
        Self {
            inner: Box::new(inner),
            applies: AtomicU64::new(0),
            transpose_applies: AtomicU64::new(0),
            vjps: AtomicU64::new(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    pub fn is_symmetric(&self) -> bool {
        self.inner.is_symmetric()
    }

    pub fn inner(&self) -> &dyn Operator {
        self.inner.as_ref()
    }

    /// Validates `θ` and `v` against the operator shape.
    pub fn check_inputs(&self, theta: &ParamVector, v: &Vector) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "operator expects {} parameters, got {}",
                self.num_params(),
                theta.len()
            )));
        }
        if v.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "operator has dimension {}, vector has length {}",
                self.dim(),
                v.len()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, theta: &ParamVector, v: &Vector) -> Vector {
        assert_eq!(v.len(), self.dim(), "apply: vector length");
        self.applies.fetch_add(1, Ordering::Relaxed);
        let mut out = Vector::zeros(self.dim());
        self.inner.matvec(theta, v.as_slice(), out.as_mut_slice());
        out
    }

    pub fn apply_transpose(&self, theta: &ParamVector, v: &Vector) -> Vector {
        assert_eq!(v.len(), self.dim(), "apply_transpose: vector length");
        self.transpose_applies.fetch_add(1, Ordering::Relaxed);
        let mut out = Vector::zeros(self.dim());
        self.inner
            .matvec_transpose(theta, v.as_slice(), out.as_mut_slice());
        out
    }

    /// Gradient of `θ ↦ ⟨w̄, A(θ) v⟩`.
    pub fn vjp_params(&self, theta: &ParamVector, v: &Vector, w_bar: &Vector) -> Vector {
        let mut grad = Vector::zeros(self.num_params());
        self.vjp_params_into(theta, v, w_bar, &mut grad);
        grad
    }

    /// Accumulating form of [`Self::vjp_params`]; allocates nothing.
    pub fn vjp_params_into(&self, theta: &ParamVector, v: &Vector, w_bar: &Vector, grad: &mut Vector) {
        assert_eq!(v.len(), self.dim(), "vjp_params: v length");
        assert_eq!(w_bar.len(), self.dim(), "vjp_params: w_bar length");
        assert_eq!(grad.len(), self.num_params(), "vjp_params: gradient length");
        self.vjps.fetch_add(1, Ordering::Relaxed);
        self.inner
            .vjp_params(theta, v.as_slice(), w_bar.as_slice(), grad.as_mut_slice());
    }

    pub fn diagonal(&self, theta: &ParamVector) -> Option<Vector> {
        self.inner.diagonal(theta).map(Vector::from_vec)
    }

    /// Total products of either orientation.
    pub fn matvec_count(&self) -> u64 {
        self.apply_count() + self.transpose_count()
    }

    pub fn apply_count(&self) -> u64 {
        self.applies.load(Ordering::Relaxed)
    }

    pub fn transpose_count(&self) -> u64 {
        self.transpose_applies.load(Ordering::Relaxed)
    }

    pub fn vjp_count(&self) -> u64 {
        self.vjps.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.applies.store(0, Ordering::Relaxed);
        self.transpose_applies.store(0, Ordering::Relaxed);
        self.vjps.store(0, Ordering::Relaxed);
    }

    /// Materializes `A(θ)` column by column. Test and oracle use only; the
    /// products are not counted.
    pub fn to_dense(&self, theta: &ParamVector) -> crate::Matrix {
        let n = self.dim();
        let mut m = crate::Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.inner.matvec(theta, &e, &mut col);
            m.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        m
    }
}
