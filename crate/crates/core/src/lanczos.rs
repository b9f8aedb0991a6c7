//! Lanczos tridiagonalization and its adjoint.
//!
//! The forward pass produces unit vectors `x_1..x_{K+1}` and coefficients
//! `a_k`, `b_k` with
//!
//! ```text
//! -b_{k-1} x_{k-1} + (A - a_k I) x_k - b_k x_{k+1} = 0,   x_1 = v / ‖v‖.
//! ```
//!
//! The adjoint pass runs the same three-term structure backwards in `k` and
//! solves for multipliers `λ_0..λ_K`, `μ_k`, `ν_k` such that every adjoint
//! equation
//!
//! ```text
//! Z_{x_k} = -b_k λ_{k+1} + (A^T - a_k) λ_k - b_{k-1} λ_{k-1}
//!           + ∇_{x_k}ρ + μ_{k-1} x_k + ν_k x_{k+1} + ν_{k-1} x_{k-1}
//! Z_{a_k} = ∇_{a_k}ρ - λ_k^T x_k
//! Z_{b_k} = ∇_{b_k}ρ - λ_{k+1}^T x_k - λ_k^T x_{k+1}
//! ```
//!
//! vanishes (`b_0 = 1`, `x_0 = 0`, `λ_{K+1} = 0`, `μ_0 = ν_0 = 0`). The gradients are
//! then `∇_v ρ = (λ_0 - (λ_0^T x_1) x_1) / ‖v‖` and `∇_A ρ = Σ_k λ_k x_k^T`;
//! the latter is never formed and instead contracted with the parameter
//! pullback of the operator one step at a time.

use crate::dense_funm::SmallMatrix;
use crate::error::{Error, Result};
use crate::operator::{MatVecOperator, ParamVector};
use crate::{Matrix, Vector};

/// Relative threshold on `b_k` below which the recursion is declared broken down.
pub const BREAKDOWN_TOL: f64 = 1e-14;

/// Output of [`lanczos_forward`].
#[derive(Debug, Clone)]
pub struct LanczosFactorization {
    /// `x_1, ..., x_{K+1}`.
    pub vectors: Vec<Vector>,
    /// `a_1, ..., a_K`.
    pub diag: Vec<f64>,
    /// `b_1, ..., b_K`.
    pub offdiag: Vec<f64>,
    pub init_vector: Vector,
    pub init_norm: f64,
    /// `‖A x_1‖`, the scale used for breakdown detection.
    pub norm_estimate: f64,
    /// Set when the Krylov space became invariant at step `K`. Then
    /// `b_K = 0` and `x_{K+1} = 0` are constants of the forward map.
    pub exhausted: bool,
    pub reorthogonalized: bool,
}

impl LanczosFactorization {
    /// Number of completed steps `K`.
    pub fn steps(&self) -> usize {
        self.diag.len()
    }

    pub fn dim(&self) -> usize {
        self.init_vector.len()
    }

    /// The `K × K` tridiagonal matrix `T` built from `a_1..a_K`, `b_1..b_{K-1}`.
    pub fn tridiagonal(&self) -> SmallMatrix {
        let k = self.steps();
        SmallMatrix::tridiagonal(&self.diag, &self.offdiag[..k - 1])
            .expect("factorization shapes are consistent")
    }

    /// `[x_1, ..., x_K]` as an `N × K` matrix.
    pub fn basis(&self) -> Matrix {
        Matrix::from_columns(&self.vectors[..self.steps()])
    }
}

/// Gradients of a loss with respect to every output of the forward pass.
#[derive(Debug, Clone)]
pub struct LanczosCotangents {
    pub grad_vectors: Vec<Vector>,
    pub grad_diag: Vec<f64>,
    pub grad_offdiag: Vec<f64>,
}

impl LanczosCotangents {
    pub fn zeros(n: usize, k: usize) -> Self {
        Self {
            grad_vectors: vec![Vector::zeros(n); k + 1],
            grad_diag: vec![0.0; k],
            grad_offdiag: vec![0.0; k],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.grad_vectors
            .iter()
            .map(|g| g.amax())
            .chain(self.grad_diag.iter().map(|x| x.abs()))
            .chain(self.grad_offdiag.iter().map(|x| x.abs()))
            .fold(0.0, f64::max)
    }

    fn check(&self, fact: &LanczosFactorization) -> Result<()> {
        let k = fact.steps();
        let ok = self.grad_vectors.len() == k + 1
            && self.grad_diag.len() == k
            && self.grad_offdiag.len() == k
            && self.grad_vectors.iter().all(|g| g.len() == fact.dim());
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "cotangents do not match a {}-step factorization of dimension {}",
                k,
                fact.dim()
            )))
        }
    }
}

/// Multipliers of the adjoint system, recorded for inspection.
#[derive(Debug, Clone)]
pub struct LanczosAdjointState {
    /// `λ_0, ..., λ_K`.
    pub multipliers: Vec<Vector>,
    /// `μ_1..μ_K` and `ν_1..ν_K` as they appear in the adjoint equations.
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    /// The rescaled `μ̃_k = μ_k / b_k` and `ν̃_k = ν_k / b_k` used by the recursion.
    pub mu_tilde: Vec<f64>,
    pub nu_tilde: Vec<f64>,
}

fn breakdown(step: usize, residual: f64, threshold: f64) -> Error {
    Error::Breakdown {
        step,
        residual,
        threshold,
    }
}

/// `(step, residual norm, threshold)` at a breakdown.
pub(crate) type Breakdown = (usize, f64, f64);

/// Runs the recursion; on breakdown at step `k` the factorization is truncated
/// to `k` steps, marked exhausted, and `Some(k)` is returned alongside it.
pub(crate) fn lanczos_run(
    op: &MatVecOperator,
    theta: &ParamVector,
    v: &Vector,
    steps: usize,
    reorthogonalize: bool,
) -> Result<(LanczosFactorization, Option<Breakdown>)> {
    if !op.is_symmetric() {
        return Err(Error::NotSymmetric("the Lanczos iteration"));
    }
    op.check_inputs(theta, v)?;
    let n = op.dim();
    if steps == 0 || steps > n {
        return Err(Error::InvalidArgument(format!("Lanczos needs 1 <= K <= N = {n}, got K = {steps}")));
    }
    let init_norm = v.norm();
    if !(init_norm > 0.0) || !init_norm.is_finite() {
        return Err(Error::InvalidArgument("initial vector must be non-zero and finite".into()));
    }

    let mut vectors = Vec::with_capacity(steps + 1);
    vectors.push(v / init_norm);
    let mut diag = Vec::with_capacity(steps);
    let mut offdiag: Vec<f64> = Vec::with_capacity(steps);
    let mut norm_estimate = 0.0;
    let mut threshold = 0.0;
    let mut broke = None;

    for k in 0..steps {
        let mut u = op.apply(theta, &vectors[k]);
        if k == 0 {
            norm_estimate = u.norm();
            threshold = BREAKDOWN_TOL * norm_estimate;
        } else {
            u.axpy(-offdiag[k - 1], &vectors[k - 1], 1.0);
        }
        let a = vectors[k].dot(&u);
        u.axpy(-a, &vectors[k], 1.0);
        if reorthogonalize {
            for x in &vectors {
                let s = x.dot(&u);
                u.axpy(-s, x, 1.0);
            }
        }
        diag.push(a);
        let b = u.norm();
        if b <= threshold || !b.is_finite() {
            broke = Some((k + 1, b, threshold));
            offdiag.push(0.0);
            vectors.push(Vector::zeros(n));
            break;
        }
        offdiag.push(b);
        vectors.push(u / b);
    }

    Ok((
        LanczosFactorization {
            vectors,
            diag,
            offdiag,
            init_vector: v.clone(),
            init_norm,
            norm_estimate,
            exhausted: broke.is_some(),
            reorthogonalized: reorthogonalize,
        },
        broke,
    ))
}

/// `K` steps of Lanczos from `v`, consuming exactly `K` products with `A`.
///
/// A vanishing `b_k` is an error, except at `k = N` where the whole space has
/// been spanned: the result is then marked [`LanczosFactorization::exhausted`].
pub fn lanczos_forward(
    op: &MatVecOperator,
    theta: &ParamVector,
    v: &Vector,
    steps: usize,
    reorthogonalize: bool,
) -> Result<LanczosFactorization> {
    let (fact, broke) = lanczos_run(op, theta, v, steps, reorthogonalize)?;
    match broke {
        Some((step, residual, threshold)) if step < op.dim() => Err(breakdown(step, residual, threshold)),
        _ => Ok(fact),
    }
}

struct StepRecord<'a> {
    k: usize,
    lambda: &'a Vector,
    mu_tilde: f64,
    nu_tilde: f64,
    b: f64,
}

/// Backward recursion shared by [`lanczos_adjoint`] and [`lanczos_vjp`].
/// Returns `(∇_v ρ, ∇_θ ρ, λ_0)`.
fn solve_adjoint(
    op: &MatVecOperator,
    theta: &ParamVector,
    fact: &LanczosFactorization,
    cot: &LanczosCotangents,
    mut record: impl FnMut(StepRecord<'_>),
) -> Result<(Vector, Vector, Vector)> {
    op.check_inputs(theta, &fact.init_vector)?;
    cot.check(fact)?;
    let steps = fact.steps();
    let n = fact.dim();
    let x = &fact.vectors;
    let threshold = BREAKDOWN_TOL * fact.norm_estimate;

    let mut grad_theta = Vector::zeros(op.num_params());
    let mut zeta = -&cot.grad_vectors[steps];
    let mut lambda_next = Vector::zeros(n);
    let mut lambda = Vector::zeros(n);

    for k in (0..steps).rev() {
        let (a, b) = (fact.diag[k], fact.offdiag[k]);
        let terminal = fact.exhausted && k + 1 == steps;
        // ξ_k = ζ_{k+1} / b_k; in the exhausted case x_{K+1} and b_K are constants
        let xi = if terminal {
            Vector::zeros(n)
        } else {
            if b.abs() <= threshold {
                return Err(breakdown(k + 1, b, threshold));
            }
            &zeta / b
        };
        let mu_tilde = cot.grad_offdiag[k] - lambda_next.dot(&x[k]) + x[k + 1].dot(&xi);
        let nu_tilde = cot.grad_diag[k] + x[k].dot(&xi);

        lambda.copy_from(&x[k + 1]);
        lambda *= mu_tilde;
        lambda.axpy(nu_tilde, &x[k], 1.0);
        lambda -= &xi;

        let at_lambda = op.apply_transpose(theta, &lambda);
        op.vjp_params_into(theta, &x[k], &lambda, &mut grad_theta);

        // ζ_k = -∇_{x_k}ρ - A^T λ_k + a_k λ_k + b_k λ_{k+1} - b_k ν̃_k x_{k+1}
        zeta.copy_from(&cot.grad_vectors[k]);
        zeta += &at_lambda;
        zeta.neg_mut();
        zeta.axpy(a, &lambda, 1.0);
        zeta.axpy(b, &lambda_next, 1.0);
        zeta.axpy(-b * nu_tilde, &x[k + 1], 1.0);

        record(StepRecord {
            k: k + 1,
            lambda: &lambda,
            mu_tilde,
            nu_tilde,
            b,
        });
        std::mem::swap(&mut lambda, &mut lambda_next);
    }

    // Z_{x_1} = 0 with b_0 = 1 gives λ_0 = -ζ_1
    let lambda0 = -zeta;
    let x1 = &x[0];
    let mut grad_v = lambda0.clone();
    grad_v.axpy(-lambda0.dot(x1), x1, 1.0);
    grad_v /= fact.init_norm;
    Ok((grad_v, grad_theta, lambda0))
}

/// Solves the adjoint system and returns `(∇_v ρ, ∇_θ ρ, state)`.
///
/// Consumes exactly `K` transpose products and `K` parameter pullbacks.
pub fn lanczos_adjoint(
    op: &MatVecOperator,
    theta: &ParamVector,
    fact: &LanczosFactorization,
    cot: &LanczosCotangents,
) -> Result<(Vector, Vector, LanczosAdjointState)> {
    let steps = fact.steps();
    let n = fact.dim();
    let mut state = LanczosAdjointState {
        multipliers: vec![Vector::zeros(n); steps + 1],
        mu: vec![0.0; steps],
        nu: vec![0.0; steps],
        mu_tilde: vec![0.0; steps],
        nu_tilde: vec![0.0; steps],
    };
    let (grad_v, grad_theta, lambda0) = solve_adjoint(op, theta, fact, cot, |rec| {
        let i = rec.k - 1;
        state.multipliers[rec.k].copy_from(rec.lambda);
        state.mu_tilde[i] = rec.mu_tilde;
        state.nu_tilde[i] = rec.nu_tilde;
        state.mu[i] = rec.b * rec.mu_tilde;
        state.nu[i] = rec.b * rec.nu_tilde;
    })?;
    state.multipliers[0] = lambda0;
    Ok((grad_v, grad_theta, state))
}

/// Gradient-only adjoint: `(∇_v ρ, ∇_θ ρ)` with `O(N + |θ|)` working memory
/// on top of the stored factorization.
pub fn lanczos_vjp(
    op: &MatVecOperator,
    theta: &ParamVector,
    fact: &LanczosFactorization,
    cot: &LanczosCotangents,
) -> Result<(Vector, Vector)> {
    let (grad_v, grad_theta, _) = solve_adjoint(op, theta, fact, cot, |_| {})?;
    Ok((grad_v, grad_theta))
}

/// Norms of the adjoint equations evaluated at a solved state.
#[derive(Debug, Clone)]
pub struct LanczosResiduals {
    /// `‖Z_{x_k}‖` for `k = 1..K+1`.
    pub z_x: Vec<f64>,
    /// `|Z_{a_k}|` for `k = 1..K`.
    pub z_a: Vec<f64>,
    /// `|Z_{b_k}|` for `k = 1..K`.
    pub z_b: Vec<f64>,
}

impl LanczosResiduals {
    pub fn max(&self) -> f64 {
        self.z_x
            .iter()
            .chain(&self.z_a)
            .chain(&self.z_b)
            .copied()
            .fold(0.0, f64::max)
    }
}

/// Evaluates every adjoint equation literally at `state`.
pub fn lanczos_adjoint_residuals(
    op: &MatVecOperator,
    theta: &ParamVector,
    fact: &LanczosFactorization,
    cot: &LanczosCotangents,
    state: &LanczosAdjointState,
) -> LanczosResiduals {
    let steps = fact.steps();
    let n = fact.dim();
    let x = &fact.vectors;
    let lam = &state.multipliers;
    let zero = Vector::zeros(n);
    let lambda_at = |k: usize| if k <= steps { &lam[k] } else { &zero };

    let mut z_x = vec![0.0; steps + 1];
    let mut z_a = vec![0.0; steps];
    let mut z_b = vec![0.0; steps];

    let last = -&lam[steps] * fact.offdiag[steps - 1]
        + &cot.grad_vectors[steps]
        + &x[steps] * state.mu[steps - 1]
        + &x[steps - 1] * state.nu[steps - 1];
    z_x[steps] = last.norm();

    for k in 1..=steps {
        let (a, b) = (fact.diag[k - 1], fact.offdiag[k - 1]);
        let b_prev = if k == 1 { 1.0 } else { fact.offdiag[k - 2] };
        let mut z = op.apply_transpose(theta, &lam[k]);
        z.axpy(-a, &lam[k], 1.0);
        z.axpy(-b, lambda_at(k + 1), 1.0);
        z.axpy(-b_prev, &lam[k - 1], 1.0);
        z += &cot.grad_vectors[k - 1];
        z.axpy(state.nu[k - 1], &x[k], 1.0);
        if k >= 2 {
            z.axpy(state.mu[k - 2], &x[k - 1], 1.0);
            z.axpy(state.nu[k - 2], &x[k - 2], 1.0);
        }
        z_x[k - 1] = z.norm();
        z_a[k - 1] = (cot.grad_diag[k - 1] - lam[k].dot(&x[k - 1])).abs();
        z_b[k - 1] = (cot.grad_offdiag[k - 1] - lambda_at(k + 1).dot(&x[k - 1]) - lam[k].dot(&x[k])).abs();
    }
    LanczosResiduals { z_x, z_a, z_b }
}
