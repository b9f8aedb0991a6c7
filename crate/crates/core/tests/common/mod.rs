#![allow(dead_code, clippy::too_many_arguments)]

use krylov_adjoint::arnoldi::{arnoldi_forward, ArnoldiCotangents, ArnoldiFactorization};
use krylov_adjoint::lanczos::{lanczos_forward, LanczosCotangents, LanczosFactorization};
use krylov_adjoint::{MatVecOperator, Matrix, ParamVector, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn randn_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// `B B^T / n + I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let b = randn_matrix(rng, n, n);
    &b * b.transpose() / n as f64 + Matrix::identity(n, n)
}

pub fn random_points(rng: &mut ChaCha8Rng, m: usize, d: usize) -> Vec<Vec<f64>> {
    (0..m).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

pub fn vec_rel_err(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

/// Central difference of `f` along `t`, with `h = 1e-6 · scale`.
pub fn central_diff(scale: f64, f: impl Fn(f64) -> f64) -> f64 {
    let h = 1e-6 * scale;
    (f(h) - f(-h)) / (2.0 * h)
}

pub fn flatten_row_major(m: &Matrix) -> Vec<f64> {
    m.transpose().iter().copied().collect()
}

/// Symmetric random direction for a dense operator's flattened entries.
pub fn symmetric_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let d = randn_matrix(rng, n, n);
    flatten_row_major(&((&d + d.transpose()) * 0.5))
}

pub fn random_lanczos_cotangents(rng: &mut ChaCha8Rng, n: usize, k: usize, full_rank: bool) -> LanczosCotangents {
    let mut cot = LanczosCotangents {
        grad_vectors: (0..=k).map(|_| randn(rng, n)).collect(),
        grad_diag: (0..k).map(|_| rng.sample(StandardNormal)).collect(),
        grad_offdiag: (0..k).map(|_| rng.sample(StandardNormal)).collect(),
    };
    if full_rank {
        // x_{N+1} and b_N are not defined by the iteration at K = N
        cot.grad_vectors[k].fill(0.0);
        cot.grad_offdiag[k - 1] = 0.0;
    }
    cot
}

pub fn lanczos_loss(fact: &LanczosFactorization, cot: &LanczosCotangents) -> f64 {
    let mut s = 0.0;
    for (x, g) in fact.vectors.iter().zip(&cot.grad_vectors) {
        s += x.dot(g);
    }
    for (a, g) in fact.diag.iter().zip(&cot.grad_diag) {
        s += a * g;
    }
    for (b, g) in fact.offdiag.iter().zip(&cot.grad_offdiag) {
        s += b * g;
    }
    s
}

pub fn random_arnoldi_cotangents(rng: &mut ChaCha8Rng, n: usize, k: usize) -> ArnoldiCotangents {
    ArnoldiCotangents {
        grad_q: randn_matrix(rng, n, k),
        grad_h: Matrix::from_fn(k, k, |i, j| if i <= j + 1 { rng.sample(StandardNormal) } else { 0.0 }),
        grad_r: randn(rng, n),
        grad_c: rng.sample(StandardNormal),
    }
}

pub fn arnoldi_loss(fact: &ArnoldiFactorization, cot: &ArnoldiCotangents) -> f64 {
    fact.q.dot(&cot.grad_q) + fact.h.dot(&cot.grad_h) + fact.r.dot(&cot.grad_r) + fact.c * cot.grad_c
}

/// Directional finite differences of a Lanczos loss in `(θ, v)`.
pub fn lanczos_fd(
    op: &MatVecOperator,
    theta: &ParamVector,
    v: &Vector,
    k: usize,
    reorth: bool,
    cot: &LanczosCotangents,
    d_theta: &[f64],
    d_v: &Vector,
) -> (f64, f64) {
    let scale_t = 1.0 + theta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale_v = 1.0 + v.amax();
    let ft = central_diff(scale_t, |h| {
        let fact = lanczos_forward(op, &theta.perturbed(d_theta, h).unwrap(), v, k, reorth).unwrap();
        lanczos_loss(&fact, cot)
    });
    let fv = central_diff(scale_v, |h| {
        let fact = lanczos_forward(op, theta, &(v + d_v * h), k, reorth).unwrap();
        lanczos_loss(&fact, cot)
    });
    (ft, fv)
}

pub fn arnoldi_fd(
    op: &MatVecOperator,
    theta: &ParamVector,
    v: &Vector,
    k: usize,
    reorth: bool,
    cot: &ArnoldiCotangents,
    d_theta: &[f64],
    d_v: &Vector,
) -> (f64, f64) {
    let scale_t = 1.0 + theta.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale_v = 1.0 + v.amax();
    let ft = central_diff(scale_t, |h| {
        let fact = arnoldi_forward(op, &theta.perturbed(d_theta, h).unwrap(), v, k, reorth).unwrap();
        arnoldi_loss(&fact, cot)
    });
    let fv = central_diff(scale_v, |h| {
        let fact = arnoldi_forward(op, theta, &(v + d_v * h), k, reorth).unwrap();
        arnoldi_loss(&fact, cot)
    });
    (ft, fv)
}

/// `f(A)` for symmetric `A` from a dense eigendecomposition.
pub fn dense_sym_funm(a: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let eig = a.clone().symmetric_eigen();
    let fw = Matrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * fw * eig.eigenvectors.transpose()
}

/// `exp(A)` by scaling and squaring a 30-term Taylor series.
pub fn dense_expm(a: &Matrix) -> Matrix {
    let n = a.nrows();
    let norm = a.iter().fold(0.0f64, |m, x| m.max(x.abs())) * n as f64;
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(squarings);
    let mut term = Matrix::identity(n, n);
    let mut sum = term.clone();
    for j in 1..30 {
        term = &term * &scaled / j as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `log det A` of an SPD matrix via its Cholesky factor.
pub fn dense_logdet(a: &Matrix) -> f64 {
    let l = a.clone().cholesky().expect("SPD").l();
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}
