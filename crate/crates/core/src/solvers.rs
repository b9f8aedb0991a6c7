//! Preconditioned conjugate gradients with an implicit adjoint, and a
//! pivoted-Cholesky preconditioner applied through the Woodbury identity.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::operator::{MatVecOperator, ParamVector};
use crate::{Matrix, Vector};

/// Approximate inverse `M ≈ A^{-1}` used by [`pcg_solve`].
pub trait Preconditioner: Send + Sync {
    fn apply(&self, r: &Vector) -> Vector;
}

/// `L L^T ≈ A` from greedy pivoted Cholesky.
#[derive(Debug, Clone)]
pub struct LowRankFactor {
    /// `N × R`.
    pub l: Matrix,
    pub pivot_order: Vec<usize>,
    /// `diag(A) - diag(L L^T)`.
    pub diag_residual: Vector,
}

impl LowRankFactor {
    pub fn rank(&self) -> usize {
        self.l.ncols()
    }
}

/// Greedy pivoted Cholesky of rank at most `rank`, always pivoting on the
/// largest remaining diagonal (lowest index on ties). Stops early once the
/// remaining diagonal is negligible. Reads the diagonal from the operator, or
/// from `N` unit-vector products when none is exposed, and then one column
/// product per pivot.
pub fn pivoted_cholesky(op: &MatVecOperator, theta: &ParamVector, rank: usize) -> Result<LowRankFactor> {
    let n = op.dim();
    op.check_inputs(theta, &Vector::zeros(n))?;
    if rank > n {
        return Err(Error::InvalidArgument(format!("rank {rank} exceeds dimension {n}")));
    }
    let mut d = match op.diagonal(theta) {
        Some(d) => d,
        None => Vector::from_fn(n, |i, _| {
            let mut e = Vector::zeros(n);
            e[i] = 1.0;
            op.apply(theta, &e)[i]
        }),
    };
    let scale = d.amax();
    let neg_tol = 1e-10 * scale.max(1.0);
    let stop_tol = f64::EPSILON * scale;
    let mut cols: Vec<Vector> = Vec::with_capacity(rank);
    let mut pivots = Vec::with_capacity(rank);

    for _ in 0..rank {
        if let Some((index, &value)) = d.iter().enumerate().find(|(_, &x)| x < -neg_tol) {
            return Err(Error::NotPositiveDefinite { index, value });
        }
        let mut p = 0;
        for i in 1..n {
            if d[i] > d[p] {
                p = i;
            }
        }
        let pivot = d[p];
        if pivot <= stop_tol {
            break;
        }
        let mut e = Vector::zeros(n);
        e[p] = 1.0;
        let mut col = op.apply(theta, &e);
        for c in &cols {
            col.axpy(-c[p], c, 1.0);
        }
        col /= pivot.sqrt();
        for &q in &pivots {
            col[q] = 0.0;
        }
        for i in 0..n {
            d[i] -= col[i] * col[i];
        }
        d[p] = 0.0;
        cols.push(col);
        pivots.push(p);
    }
    if let Some((index, &value)) = d.iter().enumerate().find(|(_, &x)| x < -neg_tol) {
        return Err(Error::NotPositiveDefinite { index, value });
    }
    let l = if cols.is_empty() {
        Matrix::zeros(n, 0)
    } else {
        Matrix::from_columns(&cols)
    };
    Ok(LowRankFactor {
        l,
        pivot_order: pivots,
        diag_residual: d,
    })
}

/// `(L L^T + σ² I)^{-1}` with the `R × R` capacitance matrix factored once.
#[derive(Debug, Clone)]
pub struct WoodburyPreconditioner {
    l: Matrix,
    sigma2: f64,
    capacitance: Option<Cholesky<f64, nalgebra::Dyn>>,
}

impl WoodburyPreconditioner {
    pub fn new(factor: &LowRankFactor, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidArgument("σ² must be positive".into()));
        }
        let r = factor.rank();
        let capacitance = if r == 0 {
            None
        } else {
            let c = factor.l.tr_mul(&factor.l) + Matrix::identity(r, r) * sigma2;
            Some(Cholesky::new(c).ok_or_else(|| Error::Singular("Woodbury capacitance matrix".into()))?)
        };
        Ok(Self {
            l: factor.l.clone(),
            sigma2,
            capacitance,
        })
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        let mut x = b.clone();
        if let Some(chol) = &self.capacitance {
            let y = chol.solve(&self.l.tr_mul(b));
            x -= &self.l * y;
        }
        x / self.sigma2
    }
}

impl Preconditioner for WoodburyPreconditioner {
    fn apply(&self, r: &Vector) -> Vector {
        self.solve(r)
    }
}

/// `(L L^T + σ² I)^{-1} b`.
pub fn woodbury_apply(factor: &LowRankFactor, sigma2: f64, b: &Vector) -> Result<Vector> {
    if b.len() != factor.l.nrows() {
        return Err(Error::Dimension(format!(
            "right-hand side has length {}, expected {}",
            b.len(),
            factor.l.nrows()
        )));
    }
    Ok(WoodburyPreconditioner::new(factor, sigma2)?.solve(b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgReport {
    pub solution: Vector,
    pub iterations: usize,
    pub final_residual_norm: f64,
    pub converged: bool,
    /// `‖r_i‖` for `i = 0..=iterations`.
    pub residual_history: Vec<f64>,
}

/// Implicit adjoint of a converged solve: for `x = A^{-1} b`, a cotangent
/// `x̄` gives `∇_b = A^{-1} x̄` and `∇_θ = -vjp(θ, x, ∇_b)`.
pub struct CgPullback<'a> {
    op: &'a MatVecOperator,
    theta: ParamVector,
    solution: Vector,
    precond: Option<&'a dyn Preconditioner>,
    tol_abs: f64,
    max_iter: usize,
}

impl std::fmt::Debug for CgPullback<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CgPullback").field("tol_abs", &self.tol_abs).field("max_iter", &self.max_iter).finish()
    }
}

impl CgPullback<'_> {
    /// Returns `(∇_b ρ, ∇_θ ρ, report of the adjoint solve)`.
    pub fn pullback(&self, x_bar: &Vector) -> Result<(Vector, Vector, CgReport)> {
        let report = run_pcg(self.op, &self.theta, x_bar, self.precond, self.tol_abs, self.max_iter, &mut |_, _| {})?;
        let grad_b = report.solution.clone();
        let grad_theta = -self.op.vjp_params(&self.theta, &self.solution, &grad_b);
        Ok((grad_b, grad_theta, report))
    }
}

fn run_pcg(
    op: &MatVecOperator,
    theta: &ParamVector,
    b: &Vector,
    precond: Option<&dyn Preconditioner>,
    tol_abs: f64,
    max_iter: usize,
    observer: &mut dyn FnMut(usize, &Vector),
) -> Result<CgReport> {
    if !op.is_symmetric() {
        return Err(Error::NotSymmetric("conjugate gradients"));
    }
    op.check_inputs(theta, b)?;
    if !(tol_abs > 0.0) {
        return Err(Error::InvalidArgument("tol_abs must be positive".into()));
    }
    let precondition = |r: &Vector| match precond {
        Some(m) => m.apply(r),
        None => r.clone(),
    };

    let mut x = Vector::zeros(b.len());
    let mut r = b.clone();
    let mut rnorm = r.norm();
    let mut history = vec![rnorm];
    observer(0, &x);
    let mut iterations = 0;
    if rnorm > tol_abs && max_iter > 0 {
        let mut z = precondition(&r);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        while iterations < max_iter {
            let ap = op.apply(theta, &p);
            let pap = p.dot(&ap);
            if !(pap > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    index: iterations,
                    value: pap,
                });
            }
            let alpha = rz / pap;
            x.axpy(alpha, &p, 1.0);
            r.axpy(-alpha, &ap, 1.0);
            iterations += 1;
            rnorm = r.norm();
            history.push(rnorm);
            observer(iterations, &x);
            if rnorm <= tol_abs {
                break;
            }
            z = precondition(&r);
            let rz_next = r.dot(&z);
            p *= rz_next / rz;
            p += &z;
            rz = rz_next;
        }
    }
    Ok(CgReport {
        solution: x,
        iterations,
        final_residual_norm: rnorm,
        converged: rnorm <= tol_abs,
        residual_history: history,
    })
}

/// Solves `A(θ) x = b` for SPD `A`, stopping once `‖b - A x‖ ≤ tol_abs` (the
/// recursively updated residual). Hitting `max_iter` is reported through
/// `converged = false`, not as an error.
pub fn pcg_solve<'a>(
    op: &'a MatVecOperator,
    theta: &ParamVector,
    b: &Vector,
    precond: Option<&'a dyn Preconditioner>,
    tol_abs: f64,
    max_iter: usize,
) -> Result<(CgReport, CgPullback<'a>)> {
    pcg_solve_observed(op, theta, b, precond, tol_abs, max_iter, |_, _| {})
}

/// [`pcg_solve`] with a callback receiving `(iteration, iterate)` after
/// every update, starting from the zero initial guess.
pub fn pcg_solve_observed<'a>(
    op: &'a MatVecOperator,
    theta: &ParamVector,
    b: &Vector,
    precond: Option<&'a dyn Preconditioner>,
    tol_abs: f64,
    max_iter: usize,
    mut observer: impl FnMut(usize, &Vector),
) -> Result<(CgReport, CgPullback<'a>)> {
    let report = run_pcg(op, theta, b, precond, tol_abs, max_iter, &mut observer)?;
    let pullback = CgPullback {
        op,
        theta: theta.clone(),
        solution: report.solution.clone(),
        precond,
        tol_abs,
        max_iter,
    };
    Ok((report, pullback))
}
