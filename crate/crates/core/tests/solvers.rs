mod common;

use common::*;
use krylov_adjoint::operator::rbf_params;
use krylov_adjoint::solvers::pcg_solve_observed;
use krylov_adjoint::{
    make_dense_operator, make_rbf_kernel_operator, pcg_solve, pivoted_cholesky, woodbury_apply, MatVecOperator, Matrix,
    ParamVector, Preconditioner, Vector, WoodburyPreconditioner,
};

fn rbf(m: usize, seed: u64, noise: f64) -> (MatVecOperator, ParamVector) {
    let mut r = rng(seed);
    let op = make_rbf_kernel_operator(&random_points(&mut r, m, 2), 16).unwrap();
    (op, rbf_params(0.3, 1.0, noise).unwrap())
}

/// Reference greedy pivoted Cholesky on a dense matrix.
fn dense_pivoted_cholesky(a: &Matrix, rank: usize) -> (Matrix, Vec<usize>) {
    let n = a.nrows();
    let mut l = Matrix::zeros(n, rank);
    let mut d = a.diagonal();
    let mut pivots = Vec::new();
    for j in 0..rank {
        let mut p = 0;
        for i in 1..n {
            if d[i] > d[p] {
                p = i;
            }
        }
        let pivot = d[p].sqrt();
        for i in 0..n {
            let mut x = a[(i, p)];
            for c in 0..j {
                x -= l[(i, c)] * l[(p, c)];
            }
            l[(i, j)] = x / pivot;
        }
        for i in 0..n {
            d[i] -= l[(i, j)] * l[(i, j)];
        }
        d[p] = 0.0;
        pivots.push(p);
    }
    (l, pivots)
}

#[test]
fn pivoted_cholesky_matches_dense_reference() {
    let (op, theta) = rbf(40, 50, 0.1);
    let a = op.to_dense(&theta);
    let mut previous = f64::INFINITY;
    for rank in [1, 3, 6, 10] {
        let f = pivoted_cholesky(&op, &theta, rank).unwrap();
        let (l, pivots) = dense_pivoted_cholesky(&a, rank);
        assert_eq!(f.pivot_order, pivots);
        assert!((&f.l - &l).amax() <= 1e-10, "rank {rank}");
        let residual = (&a - &f.l * f.l.transpose()).trace();
        assert!(residual <= previous);
        previous = residual;
    }
}

#[test]
fn pivoted_cholesky_invariants() {
    let (op, theta) = rbf(30, 51, 0.2);
    let a = op.to_dense(&theta);
    let f = pivoted_cholesky(&op, &theta, 8).unwrap();
    let want = a.diagonal() - (&f.l * f.l.transpose()).diagonal();
    assert!((&f.diag_residual - want).amax() <= 1e-12);
    assert!(f.diag_residual.iter().all(|&x| x >= -1e-12));
    for (j, &p) in f.pivot_order.iter().enumerate() {
        for c in j + 1..f.rank() {
            assert_eq!(f.l[(p, c)], 0.0, "pivot {j} column {c}");
        }
        assert!(f.diag_residual[p].abs() <= 1e-12);
    }
    assert!(pivoted_cholesky(&op, &theta, 31).is_err());
}

#[test]
fn woodbury_matches_dense_inverse() {
    let mut r = rng(52);
    let l = randn_matrix(&mut r, 20, 5);
    let sigma2 = 0.3;
    let factor = krylov_adjoint::LowRankFactor {
        l: l.clone(),
        pivot_order: (0..5).collect(),
        diag_residual: Vector::zeros(20),
    };
    let dense = (&l * l.transpose() + Matrix::identity(20, 20) * sigma2).try_inverse().unwrap();
    let b = randn(&mut r, 20);
    assert!(vec_rel_err(&woodbury_apply(&factor, sigma2, &b).unwrap(), &(&dense * &b)) <= 1e-12);
    let m = WoodburyPreconditioner::new(&factor, sigma2).unwrap();
    assert!(vec_rel_err(&m.apply(&b), &(&dense * &b)) <= 1e-12);
    assert!(WoodburyPreconditioner::new(&factor, 0.0).is_err());
}

#[test]
fn cg_pullback_matches_finite_differences() {
    let (op, theta) = rbf(60, 53, 0.3);
    let mut r = rng(53);
    let b = randn(&mut r, 60);
    let x_bar = randn(&mut r, 60);
    let solve = |t: &ParamVector, b: &Vector| pcg_solve(&op, t, b, None, 1e-10, 2000).unwrap().0.solution;
    let (report, pb) = pcg_solve(&op, &theta, &b, None, 1e-10, 2000).unwrap();
    assert!(report.converged);
    let (gb, gt, adjoint) = pb.pullback(&x_bar).unwrap();
    assert!(adjoint.converged);
    for j in 0..3 {
        let mut d = vec![0.0; 3];
        d[j] = 1.0;
        let fd = central_diff(1.0, |h| x_bar.dot(&solve(&theta.perturbed(&d, h).unwrap(), &b)));
        assert!(rel_err(gt[j], fd) <= 1e-4, "θ_{j}: {} vs {fd}", gt[j]);
    }
    let db = randn(&mut r, 60);
    let fd = central_diff(1.0, |h| x_bar.dot(&solve(&theta, &(&b + &db * h))));
    assert!(rel_err(gb.dot(&db), fd) <= 1e-4);
}

#[test]
fn cg_error_decreases_in_the_energy_norm() {
    let mut r = rng(54);
    let a = random_spd(&mut r, 30);
    let (op, theta) = make_dense_operator(&a).unwrap();
    let b = randn(&mut r, 30);
    let exact = a.clone().cholesky().unwrap().solve(&b);
    let mut errors = Vec::new();
    let (report, _) = pcg_solve_observed(&op, &theta, &b, None, 1e-10, 200, |_, x| {
        let e = &exact - x;
        errors.push(e.dot(&(&a * &e)).sqrt());
    })
    .unwrap();
    assert!(report.converged);
    assert_eq!(errors.len(), report.iterations + 1);
    assert_eq!(report.residual_history.len(), report.iterations + 1);
    for w in errors.windows(2) {
        assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-14);
    }
}

#[test]
fn preconditioning_helps_on_an_ill_conditioned_kernel() {
    let (op, theta) = rbf(150, 55, 1e-2);
    let eig = op.to_dense(&theta).symmetric_eigen().eigenvalues;
    let cond = eig.max() / eig.min();
    assert!(cond >= 1e4, "{cond:e}");
    let b = randn(&mut rng(55), 150);
    let tol = 1e-8 * b.norm();
    let (plain, _) = pcg_solve(&op, &theta, &b, None, tol, 5000).unwrap();
    let factor = pivoted_cholesky(&op, &theta, 20).unwrap();
    let m = WoodburyPreconditioner::new(&factor, 1e-4).unwrap();
    let (pre, _) = pcg_solve(&op, &theta, &b, Some(&m), tol, 5000).unwrap();
    assert!(plain.converged && pre.converged);
    assert!(pre.iterations < plain.iterations, "{} vs {}", pre.iterations, plain.iterations);
    let true_residual = (&b - op.apply(&theta, &pre.solution)).norm();
    assert!(true_residual <= 10.0 * tol);
}
