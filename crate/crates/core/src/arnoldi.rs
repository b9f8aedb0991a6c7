//! Arnoldi factorization `A Q = Q H + r e_K^T`, `Q e_1 = c v`, and its adjoint.
//!
//! With `c = 1/‖v‖`, `Q^T Q = I`, `Q^T r = 0` and `H` upper Hessenberg, the
//! adjoint equations are
//!
//! ```text
//! Z_Q = ∇_Q ρ + A^T Λ - Λ H^T + λ e_1^T + Q Γ + r γ^T
//! Z_H = ∇_H ρ - Q^T Λ                        (on entries i <= j + 1)
//! Z_r = ∇_r ρ - Λ e_K + Q γ
//! Z_c = ∇_c ρ - v^T λ
//! ```
//!
//! with `Γ` symmetric. Entries of `Z_H` below the first subdiagonal carry a
//! multiplier for the structural zeros of `H` and are never solved for.
//!
//! Gradients: `∇_A ρ = Λ Q^T` and `∇_v ρ = -c λ`. The sign of the latter
//! follows from `Q e_1 - c v = 0` entering the Lagrangian with `+λ`; it is
//! confirmed by finite differences in the tests.

use crate::error::{Error, Result};
use crate::lanczos::{Breakdown, LanczosFactorization};
use crate::operator::{MatVecOperator, ParamVector};
use crate::{Matrix, Vector};

pub use crate::lanczos::BREAKDOWN_TOL;

#[derive(Debug, Clone)]
pub struct ArnoldiFactorization {
    /// `N × K`, orthonormal columns.
    pub q: Matrix,
    /// `K × K` upper Hessenberg.
    pub h: Matrix,
    /// Unnormalized next direction.
    pub r: Vector,
    pub c: f64,
    pub init_vector: Vector,
    /// `‖A q_1‖`.
    pub norm_estimate: f64,
    pub reorthogonalized: bool,
}

impl ArnoldiFactorization {
    pub fn steps(&self) -> usize {
        self.h.nrows()
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// The same Krylov data viewed as an Arnoldi factorization with a
    /// symmetric tridiagonal `H`, so that the re-projected adjoint applies.
    pub fn from_lanczos(fact: &LanczosFactorization) -> Self {
        let k = fact.steps();
        let mut h = Matrix::zeros(k, k);
        for j in 0..k {
            h[(j, j)] = fact.diag[j];
            if j + 1 < k {
                h[(j + 1, j)] = fact.offdiag[j];
                h[(j, j + 1)] = fact.offdiag[j];
            }
        }
        ArnoldiFactorization {
            q: fact.basis(),
            h,
            r: &fact.vectors[k] * fact.offdiag[k - 1],
            c: 1.0 / fact.init_norm,
            init_vector: fact.init_vector.clone(),
            norm_estimate: fact.norm_estimate,
            reorthogonalized: fact.reorthogonalized,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArnoldiCotangents {
    pub grad_q: Matrix,
    pub grad_h: Matrix,
    pub grad_r: Vector,
    pub grad_c: f64,
}

impl ArnoldiCotangents {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            grad_q: Matrix::zeros(n, k),
            grad_h: Matrix::zeros(k, k),
            grad_r: Vector::zeros(n),
            grad_c: 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.grad_q
            .amax()
            .max(self.grad_h.amax())
            .max(self.grad_r.amax())
            .max(self.grad_c.abs())
    }

    fn check(&self, fact: &ArnoldiFactorization) -> Result<()> {
        let (n, k) = (fact.dim(), fact.steps());
        if self.grad_q.shape() == (n, k) && self.grad_h.shape() == (k, k) && self.grad_r.len() == n {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "cotangents do not match a {k}-step factorization of dimension {n}"
            )))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArnoldiAdjointState {
    /// `Λ`, `N × K`.
    pub big_lambda: Matrix,
    pub lambda: Vector,
    pub gamma: Vector,
    /// The symmetric `Γ` appearing in `Z_Q`.
    pub gamma_sym: Matrix,
}

/// Runs the iteration; a breakdown at step `k < K` truncates the result to
/// `k` steps (with `r` holding the vanishing residual) and reports
/// `Some((k, residual, threshold))`.
pub(crate) fn arnoldi_run(
    op: &MatVecOperator,
    theta: &ParamVector,
    v: &Vector,
    steps: usize,
    reorthogonalize: bool,
) -> Result<(ArnoldiFactorization, Option<Breakdown>)> {
    op.check_inputs(theta, v)?;
    let n = op.dim();
    if steps == 0 || steps > n {
        return Err(Error::InvalidArgument(format!("Arnoldi needs 1 <= K <= N = {n}, got K = {steps}")));
    }
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidArgument("initial vector must be non-zero and finite".into()));
    }
    let c = 1.0 / norm;
    let mut q = Matrix::zeros(n, steps);
    let mut h = Matrix::zeros(steps, steps);
    q.set_column(0, &(v * c));
    let mut norm_estimate = 0.0;
    let mut threshold = 0.0;

    for k in 0..steps {
        let mut u = op.apply(theta, &q.column(k).into_owned());
        if k == 0 {
            norm_estimate = u.norm();
            threshold = BREAKDOWN_TOL * norm_estimate;
        }
        for i in 0..=k {
            let s = q.column(i).dot(&u);
            h[(i, k)] = s;
            u.axpy(-s, &q.column(i), 1.0);
        }
        if reorthogonalize {
            for i in 0..=k {
                let s = q.column(i).dot(&u);
                h[(i, k)] += s;
                u.axpy(-s, &q.column(i), 1.0);
            }
        }
        if k + 1 == steps {
            let fact = ArnoldiFactorization {
                q,
                h,
                r: u,
                c,
                init_vector: v.clone(),
                norm_estimate,
                reorthogonalized: reorthogonalize,
            };
            return Ok((fact, None));
        }
        let beta = u.norm();
        if beta <= threshold || !beta.is_finite() {
            let kept = k + 1;
            let fact = ArnoldiFactorization {
                q: q.columns(0, kept).into_owned(),
                h: h.view((0, 0), (kept, kept)).into_owned(),
                r: u,
                c,
                init_vector: v.clone(),
                norm_estimate,
                reorthogonalized: reorthogonalize,
            };
            return Ok((fact, Some((kept, beta, threshold))));
        }
        h[(k + 1, k)] = beta;
        q.set_column(k + 1, &(u / beta));
    }
    unreachable!("loop returns at k = steps - 1")
}

/// `K` Arnoldi steps from `v` using exactly `K` products with `A`.
pub fn arnoldi_forward(
    op: &MatVecOperator,
    theta: &ParamVector,
    v: &Vector,
    steps: usize,
    reorthogonalize: bool,
) -> Result<ArnoldiFactorization> {
    match arnoldi_run(op, theta, v, steps, reorthogonalize)? {
        (_, Some((step, residual, threshold))) => Err(Error::Breakdown {
            step,
            residual,
            threshold,
        }),
        (fact, None) => Ok(fact),
    }
}

/// Solves the adjoint system column by column from the last one, returning
/// `(∇_v ρ, ∇_θ ρ, state)`. With `reproject`, each new column of `Λ` is
/// projected so that `Z_H` holds to working precision.
///
/// Uses exactly `K` transpose products and `K` parameter pullbacks.
pub fn arnoldi_adjoint(
    op: &MatVecOperator,
    theta: &ParamVector,
    fact: &ArnoldiFactorization,
    cot: &ArnoldiCotangents,
    reproject: bool,
) -> Result<(Vector, Vector, ArnoldiAdjointState)> {
    op.check_inputs(theta, &fact.init_vector)?;
    cot.check(fact)?;
    let (n, k) = (fact.dim(), fact.steps());
    let (q, h, r) = (&fact.q, &fact.h, &fact.r);
    let threshold = BREAKDOWN_TOL * fact.norm_estimate;

    let gamma = cot.grad_h.column(k - 1) - q.tr_mul(&cot.grad_r);
    let mut big_lambda = Matrix::zeros(n, k);
    let mut last = &cot.grad_r + q * &gamma;
    if reproject {
        let defect = q.tr_mul(&last) - cot.grad_h.column(k - 1);
        last -= q * defect;
    }
    big_lambda.set_column(k - 1, &last);

    let qt_gq = q.tr_mul(&cot.grad_q);
    let gh_ht = &cot.grad_h * h.transpose();
    let mut s = Matrix::zeros(k, k);
    let mut grad_theta = Vector::zeros(op.num_params());
    let mut lambda = Vector::zeros(n);

    for j in (0..k).rev() {
        let lam_j = big_lambda.column(j).into_owned();
        let w = op.apply_transpose(theta, &lam_j);
        op.vjp_params_into(theta, &q.column(j).into_owned(), &lam_j, &mut grad_theta);

        let qtw = q.tr_mul(&w);
        for i in 0..=j {
            let mut sij = -qt_gq[(i, j)] + gh_ht[(i, j)] - qtw[i];
            if j == 0 {
                sij -= fact.c * cot.grad_c;
            }
            s[(i, j)] = sij;
            s[(j, i)] = sij;
        }

        let mut rhs = cot.grad_q.column(j) + w + q * s.column(j);
        rhs.axpy(gamma[j], r, 1.0);
        for l in j..k {
            rhs.axpy(-h[(j, l)], &big_lambda.column(l), 1.0);
        }

        if j == 0 {
            lambda = -rhs;
            break;
        }
        let sub = h[(j, j - 1)];
        if sub.abs() <= threshold {
            return Err(Error::Breakdown {
                step: j,
                residual: sub,
                threshold,
            });
        }
        rhs /= sub;
        if reproject {
            let qj = q.columns(0, j + 1);
            let defect = qj.tr_mul(&rhs) - cot.grad_h.view((0, j - 1), (j + 1, 1));
            rhs -= qj * defect;
        }
        big_lambda.set_column(j - 1, &rhs);
    }

    let grad_v = &lambda * (-fact.c);
    let state = ArnoldiAdjointState {
        big_lambda,
        lambda,
        gamma,
        gamma_sym: s,
    };
    Ok((grad_v, grad_theta, state))
}

/// Frobenius norms of `Z_Q`, `Z_H` (on its solved support), `Z_r`, and `|Z_c|`.
#[derive(Debug, Clone, Copy)]
pub struct ArnoldiResiduals {
    pub z_q: f64,
    pub z_h: f64,
    pub z_r: f64,
    pub z_c: f64,
}

impl ArnoldiResiduals {
    pub fn max(&self) -> f64 {
        self.z_q.max(self.z_h).max(self.z_r).max(self.z_c)
    }
}

/// Evaluates the adjoint equations literally at `state`.
pub fn arnoldi_adjoint_residuals(
    op: &MatVecOperator,
    theta: &ParamVector,
    fact: &ArnoldiFactorization,
    cot: &ArnoldiCotangents,
    state: &ArnoldiAdjointState,
) -> ArnoldiResiduals {
    let (n, k) = (fact.dim(), fact.steps());
    let (q, h) = (&fact.q, &fact.h);
    let lam = &state.big_lambda;

    let mut at_lam = Matrix::zeros(n, k);
    for j in 0..k {
        at_lam.set_column(j, &op.apply_transpose(theta, &lam.column(j).into_owned()));
    }
    let mut z_q = &cot.grad_q + at_lam - lam * h.transpose() + q * &state.gamma_sym + &fact.r * state.gamma.transpose();
    let mut first = z_q.column_mut(0);
    first += &state.lambda;

    let qt_lam = q.tr_mul(lam);
    let z_h = (0..k)
        .flat_map(|j| (0..k.min(j + 2)).map(move |i| (i, j)))
        .map(|(i, j)| (cot.grad_h[(i, j)] - qt_lam[(i, j)]).powi(2))
        .sum::<f64>()
        .sqrt();
    let z_r = (&cot.grad_r - lam.column(k - 1) + q * &state.gamma).norm();
    let z_c = (cot.grad_c - fact.init_vector.dot(&state.lambda)).abs();
    ArnoldiResiduals {
        z_q: z_q.norm(),
        z_h,
        z_r,
        z_c,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::make_dense_operator;

    #[test]
    fn identity_single_step() {
        let (op, theta) = make_dense_operator(&Matrix::identity(2, 2)).unwrap();
        let fact = arnoldi_forward(&op, &theta, &Vector::from_vec(vec![1.0, 0.0]), 1, true).unwrap();
        assert_eq!(fact.q, Matrix::from_column_slice(2, 1, &[1.0, 0.0]));
        assert_eq!(fact.h[(0, 0)], 1.0);
        assert_eq!(fact.r, Vector::zeros(2));
        assert_eq!(fact.c, 1.0);
    }

    #[test]
    fn shift_matrix_full_rank() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let (op, theta) = make_dense_operator(&a).unwrap();
        let fact = arnoldi_forward(&op, &theta, &Vector::from_vec(vec![1.0, 0.0]), 2, true).unwrap();
        assert_eq!(fact.q, Matrix::identity(2, 2));
        assert_eq!(fact.h, a);
        assert_eq!(fact.r, Vector::zeros(2));
        assert_eq!(op.apply_count(), 2);
    }

    #[test]
    fn early_breakdown_is_an_error() {
        let (op, theta) = make_dense_operator(&Matrix::identity(3, 3)).unwrap();
        let res = arnoldi_forward(&op, &theta, &Vector::from_vec(vec![1.0, 0.0, 0.0]), 2, false);
        assert!(matches!(res, Err(Error::Breakdown { step: 1, .. })));
    }

    #[test]
    fn zero_cotangents_give_zero_state() {
        let a = Matrix::from_fn(5, 5, |i, j| ((3 * i + 7 * j) % 11) as f64 / 11.0 - 0.4);
        let (op, theta) = make_dense_operator(&a).unwrap();
        let v = Vector::from_fn(5, |i, _| 1.0 + i as f64);
        let fact = arnoldi_forward(&op, &theta, &v, 4, true).unwrap();
        let cot = ArnoldiCotangents::zeros(5, 4);
        let (gv, gt, state) = arnoldi_adjoint(&op, &theta, &fact, &cot, true).unwrap();
        assert_eq!(gv.amax(), 0.0);
        assert_eq!(gt.amax(), 0.0);
        assert_eq!(state.big_lambda.amax(), 0.0);
        assert_eq!(arnoldi_adjoint_residuals(&op, &theta, &fact, &cot, &state).max(), 0.0);
    }
}
