//! Differentiable `f(A) v` and `v^T f(A) v`.
//!
//! Lanczos path: `f(A) v ≈ ‖v‖ X f(T) e_1`. Arnoldi path:
//! `exp(tA) v ≈ c^{-1} Q exp(tH) e_1`. Each forward call keeps its
//! factorization and the small-matrix pullback; the pullback consumes them.
//!
//! Both paths reorthogonalize, so both pullbacks go through the Arnoldi
//! adjoint with re-projection. The plain Lanczos recursion divides by `b_k`
//! at every step and loses all accuracy once the `b_k` get small.
//!
//! A breakdown before the requested `K` means an invariant subspace was
//! found. The approximation is then exact with fewer steps, so the result is
//! returned with the effective `K` and the breakdown step in [`FunmMeta`].

use crate::arnoldi::{arnoldi_adjoint, arnoldi_run, ArnoldiCotangents, ArnoldiFactorization};
use crate::dense_funm::{expm_hessenberg_e1, funm_sym_e1, ExpmPullback, ScalarFunction, SmallMatrix, Structure, SymFunmPullback};
use crate::error::{Error, Result};
use crate::lanczos::{lanczos_run, LanczosFactorization};
use crate::operator::{MatVecOperator, ParamVector};
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FunmMeta {
    pub requested_steps: usize,
    /// Steps actually used.
    pub steps: usize,
    pub breakdown_step: Option<usize>,
}

enum Tape {
    Lanczos {
        fact: LanczosFactorization,
        coeffs: Vector,
        small: SymFunmPullback,
    },
    Arnoldi {
        fact: ArnoldiFactorization,
        coeffs: Vector,
        small: ExpmPullback,
    },
}

/// Value of `f(A) v` with a single-use pullback.
pub struct FunmResult<'a> {
    pub value: Vector,
    pub meta: FunmMeta,
    op: &'a MatVecOperator,
    theta: ParamVector,
    tape: Tape,
}

impl std::fmt::Debug for FunmResult<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FunmResult").field("value", &self.value).field("meta", &self.meta).finish()
    }
}

impl FunmResult<'_> {
    /// `(∇_v ρ, ∇_θ ρ)` for `ρ = ⟨ȳ, value⟩`.
    pub fn pullback(self, y_bar: &Vector) -> Result<(Vector, Vector)> {
        if y_bar.len() != self.value.len() {
            return Err(Error::Dimension(format!(
                "cotangent has length {}, expected {}",
                y_bar.len(),
                self.value.len()
            )));
        }
        match self.tape {
            Tape::Lanczos { fact, coeffs, small } => {
                let k = fact.steps();
                let n = fact.dim();
                let norm = fact.init_norm;
                let mut cot = ArnoldiCotangents::zeros(n, k);
                let mut g_bar = Vector::zeros(k);
                for i in 0..k {
                    cot.grad_q.set_column(i, &(y_bar * (norm * coeffs[i])));
                    g_bar[i] = norm * fact.vectors[i].dot(y_bar);
                }
                let (mut grad_v, grad_theta) = tridiagonal_vjp(self.op, &self.theta, &fact, cot, &small.pullback(&g_bar))?;
                grad_v.axpy(y_bar.dot(&self.value) / norm, &fact.vectors[0], 1.0);
                Ok((grad_v, grad_theta))
            }
            Tape::Arnoldi { fact, coeffs, small } => {
                let (n, k) = (fact.dim(), fact.steps());
                let inv_c = 1.0 / fact.c;
                let mut cot = ArnoldiCotangents::zeros(n, k);
                cot.grad_q = y_bar * coeffs.transpose() * inv_c;
                cot.grad_h = small.pullback(&(fact.q.tr_mul(y_bar) * inv_c))?;
                cot.grad_c = -inv_c * y_bar.dot(&self.value);
                let (grad_v, grad_theta, _) = arnoldi_adjoint(self.op, &self.theta, &fact, &cot, fact.reorthogonalized)?;
                Ok((grad_v, grad_theta))
            }
        }
    }
}

/// Pullback through a reorthogonalized Lanczos factorization, given the
/// basis cotangent in `cot` and the symmetric cotangent of `T`.
fn tridiagonal_vjp(
    op: &MatVecOperator,
    theta: &ParamVector,
    fact: &LanczosFactorization,
    mut cot: ArnoldiCotangents,
    t_bar: &Matrix,
) -> Result<(Vector, Vector)> {
    let k = t_bar.nrows();
    for j in 0..k {
        cot.grad_h[(j, j)] = t_bar[(j, j)];
        if j + 1 < k {
            cot.grad_h[(j + 1, j)] = t_bar[(j, j + 1)];
            cot.grad_h[(j, j + 1)] = t_bar[(j, j + 1)];
        }
    }
    let arnoldi = ArnoldiFactorization::from_lanczos(fact);
    let (grad_v, grad_theta, _) = arnoldi_adjoint(op, theta, &arnoldi, &cot, true)?;
    Ok((grad_v, grad_theta))
}

fn lanczos_funm_core(
    op: &MatVecOperator,
    theta: &ParamVector,
    v: &Vector,
    steps: usize,
    f: &ScalarFunction,
) -> Result<(LanczosFactorization, Vector, SymFunmPullback, FunmMeta)> {
    let (fact, broke) = lanczos_run(op, theta, v, steps, true)?;
    let (coeffs, small) = funm_sym_e1(f, &fact.tridiagonal())?;
    let meta = FunmMeta {
        requested_steps: steps,
        steps: fact.steps(),
        breakdown_step: broke.map(|b| b.0),
    };
    Ok((fact, coeffs, small, meta))
}

/// `f(A) v ≈ ‖v‖ X f(T) e_1` from `K` reorthogonalized Lanczos steps.
pub fn funm_lanczos<'a>(
    op: &'a MatVecOperator,
    theta: &ParamVector,
    v: &Vector,
    steps: usize,
    f: &ScalarFunction,
) -> Result<FunmResult<'a>> {
    let (fact, coeffs, small, meta) = lanczos_funm_core(op, theta, v, steps, f)?;
    let value = fact.basis() * &coeffs * fact.init_norm;
    Ok(FunmResult {
        value,
        meta,
        op,
        theta: theta.clone(),
        tape: Tape::Lanczos { fact, coeffs, small },
    })
}

/// `exp(tA) v ≈ ‖v‖ Q exp(tH) e_1` from `K` reorthogonalized Arnoldi steps.
/// The pullback re-projects the adjoint.
pub fn funm_arnoldi_exp<'a>(
    op: &'a MatVecOperator,
    theta: &ParamVector,
    v: &Vector,
    t: f64,
    steps: usize,
) -> Result<FunmResult<'a>> {
    if !t.is_finite() {
        return Err(Error::InvalidArgument("time must be finite".into()));
    }
    let (fact, broke) = arnoldi_run(op, theta, v, steps, true)?;
    let h = SmallMatrix::new(fact.h.clone(), Structure::UpperHessenberg)?;
    let (coeffs, small) = expm_hessenberg_e1(&h, t)?;
    let value = &fact.q * &coeffs / fact.c;
    let meta = FunmMeta {
        requested_steps: steps,
        steps: fact.steps(),
        breakdown_step: broke.map(|b| b.0),
    };
    Ok(FunmResult {
        value,
        meta,
        op,
        theta: theta.clone(),
        tape: Tape::Arnoldi { fact, coeffs, small },
    })
}

/// `v^T f(A) v ≈ ‖v‖² e_1^T f(T) e_1` with a single-use pullback.
pub struct QuadraticForm<'a> {
    pub value: f64,
    pub meta: FunmMeta,
    op: &'a MatVecOperator,
    theta: ParamVector,
    fact: LanczosFactorization,
    first_coeff: f64,
    small: SymFunmPullback,
}

impl std::fmt::Debug for QuadraticForm<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QuadraticForm").field("value", &self.value).field("meta", &self.meta).finish()
    }
}

impl QuadraticForm<'_> {
    /// `(∇_v ρ, ∇_θ ρ)` for `ρ = ρ̄ · value`.
    pub fn pullback(self, rho_bar: f64) -> Result<(Vector, Vector)> {
        let k = self.fact.steps();
        let n = self.fact.dim();
        let norm2 = self.fact.init_norm * self.fact.init_norm;
        let mut g_bar = Vector::zeros(k);
        g_bar[0] = rho_bar * norm2;
        let cot = ArnoldiCotangents::zeros(n, k);
        let (mut grad_v, grad_theta) = tridiagonal_vjp(self.op, &self.theta, &self.fact, cot, &self.small.pullback(&g_bar))?;
        grad_v.axpy(2.0 * rho_bar * self.first_coeff, &self.fact.init_vector, 1.0);
        Ok((grad_v, grad_theta))
    }
}

pub fn quadratic_form_funm<'a>(
    op: &'a MatVecOperator,
    theta: &ParamVector,
    v: &Vector,
    steps: usize,
    f: &ScalarFunction,
) -> Result<QuadraticForm<'a>> {
    let (fact, coeffs, small, meta) = lanczos_funm_core(op, theta, v, steps, f)?;
    let value = fact.init_norm * fact.init_norm * coeffs[0];
    Ok(QuadraticForm {
        value,
        meta,
        op,
        theta: theta.clone(),
        fact,
        first_coeff: coeffs[0],
        small,
    })
}
