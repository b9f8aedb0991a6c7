//! Dense reference computations, used as oracles by the experiments.

use nalgebra::{Cholesky, SymmetricEigen};

use crate::error::{Error, Result};
use crate::operator::{MatVecOperator, ParamVector};
use crate::{Matrix, Vector};

/// `exp(A)` from a truncated Taylor series on `A / 2^s` with `‖A‖₁ / 2^s ≤ 1/2`,
/// followed by `s` squarings. Independent of the Padé routine.
pub fn expm_taylor(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let norm = a.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a * 2f64.powi(-s);
    let mut term = Matrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..=30 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if term.amax() <= f64::EPSILON * 1e-3 * sum.amax() {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `V f(Λ) V^T` for a dense symmetric matrix.
pub fn sym_funm(a: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let eig = SymmetricEigen::new(a.clone());
    let v = &eig.eigenvectors;
    let scaled = Matrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * f(eig.eigenvalues[j]));
    scaled * v.transpose()
}

/// `log det A` from a Cholesky factorization.
pub fn cholesky_logdet(a: &Matrix) -> Result<f64> {
    let chol = Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite {
        index: 0,
        value: f64::NAN,
    })?;
    Ok(2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Contracts a dense matrix cotangent `Ā` with `∂A/∂θ` column by column:
/// `Σ_q vjp(θ, e_q, Ā e_q)`.
pub fn contract_with_params(op: &MatVecOperator, theta: &ParamVector, a_bar: &Matrix) -> Vector {
    let n = op.dim();
    let mut grad = Vector::zeros(op.num_params());
    let mut e = Vector::zeros(n);
    for q in 0..n {
        e[q] = 1.0;
        op.vjp_params_into(theta, &e, &a_bar.column(q).into_owned(), &mut grad);
        e[q] = 0.0;
    }
    grad
}

/// Pullback of `A ↦ exp(tA) w` for a dense `A`: `t · L(tA^T, ȳ w^T)`, read off
/// the augmented block exponential.
pub fn expm_action_pullback(a: &Matrix, t: f64, w: &Vector, y_bar: &Vector) -> Matrix {
    let n = a.nrows();
    let at = a.transpose() * t;
    let mut block = Matrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&at);
    block.view_mut((n, n), (n, n)).copy_from(&at);
    block.view_mut((0, n), (n, n)).copy_from(&(y_bar * w.transpose()));
    expm_taylor(&block).view((0, n), (n, n)) * t
}
