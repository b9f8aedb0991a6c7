//! Matrix-free differentiable linear algebra.
//!
//! The crate implements the Lanczos and Arnoldi iterations for operators that
//! are only reachable through matrix-vector products, together with the exact
//! reverse-mode adjoints of both iterations. Gradients of `f(A(θ)) v` with
//! respect to `v` and `θ` cost one transpose product and one parameter
//! vector-Jacobian product per Krylov step, the same budget as the forward pass.
//!
//! Layout:
//! - [`operator`]: the parametrized operator abstraction and shipped operators.
//! - [`dense_funm`]: small-matrix functions `H ↦ f(H) e_1` with pullbacks.
//! - [`lanczos`] / [`arnoldi`]: forward iterations and their adjoint solvers.
//! - [`funm_action`]: differentiable `f(A) v` and `v^T f(A) v`.
//! - [`stochastic`]: Hutchinson trace, log-determinant, diagonal estimation, sampling.
//! - [`solvers`]: preconditioned CG with implicit adjoint, pivoted Cholesky.
//! - [`experiments`]: the verification experiments driven by the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arnoldi;
pub mod dense_funm;
pub mod error;
pub mod experiments;
pub mod funm_action;
pub mod lanczos;
pub mod linalg;
pub mod operator;
pub mod solvers;
pub mod stochastic;

pub use arnoldi::{
    arnoldi_adjoint, arnoldi_adjoint_residuals, arnoldi_forward, ArnoldiAdjointState,
    ArnoldiCotangents, ArnoldiFactorization, ArnoldiResiduals,
};
pub use dense_funm::{
    expm_hessenberg_e1, funm_full, funm_sym_e1, Domain, ScalarFunction, SmallMatrix, Structure,
};
pub use error::{Error, Result};
pub use funm_action::{
    funm_arnoldi_exp, funm_lanczos, quadratic_form_funm, FunmMeta, FunmResult, QuadraticForm,
};
pub use lanczos::{
    lanczos_adjoint, lanczos_adjoint_residuals, lanczos_forward, lanczos_vjp,
    LanczosAdjointState, LanczosCotangents, LanczosFactorization, LanczosResiduals,
};
pub use operator::{
    make_dense_operator, make_hilbert_operator, make_rbf_kernel_operator, make_wave_operator,
    read_matrix_market, write_matrix_market, MatVecOperator, Operator, ParamVector,
};
pub use solvers::{
    pcg_solve, pivoted_cholesky, woodbury_apply, CgPullback, CgReport, LowRankFactor,
    Preconditioner, WoodburyPreconditioner,
};
pub use stochastic::{
    diagonal_estimate, hutchinson_trace, logdet_estimate, sample_inv_sqrt, DiagonalEstimate,
    LogdetEstimate, ProbeDistribution, ProbeStream, TraceEstimate,
};

/// Dense column vector used throughout the public API.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix used for Krylov bases and small projected matrices.
pub type Matrix = nalgebra::DMatrix<f64>;
