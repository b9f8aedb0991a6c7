use super::{MatVecOperator, Operator, ParamVector};
use crate::error::{Error, Result};
use crate::Matrix;

/// Dense `N × N` operator. When parametrized, `θ` is the row-major flattening
/// of the matrix and the stored matrix is ignored in favour of `θ`.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    n: usize,
    /// Row-major entries used when the operator carries no parameters.
    fixed: Option<Vec<f64>>,
    symmetric: bool,
}

impl DenseOperator {
    fn entries<'a>(&'a self, theta: &'a [f64]) -> &'a [f64] {
        self.fixed.as_deref().unwrap_or(theta)
    }
}

impl Operator for DenseOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn num_params(&self) -> usize {
        if self.fixed.is_some() {
            0
        } else {
            self.n * self.n
        }
    }

    fn matvec(&self, theta: &[f64], v: &[f64], out: &mut [f64]) {
        let m = self.entries(theta);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &m[i * self.n..(i + 1) * self.n];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    fn matvec_transpose(&self, theta: &[f64], v: &[f64], out: &mut [f64]) {
        let m = self.entries(theta);
        out.fill(0.0);
        for (i, &vi) in v.iter().enumerate() {
            let row = &m[i * self.n..(i + 1) * self.n];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
    }

    fn vjp_params(&self, _theta: &[f64], v: &[f64], w_bar: &[f64], grad: &mut [f64]) {
        if self.fixed.is_some() {
            return;
        }
        for (i, &wi) in w_bar.iter().enumerate() {
            let row = &mut grad[i * self.n..(i + 1) * self.n];
            for (g, vj) in row.iter_mut().zip(v) {
                *g += wi * vj;
            }
        }
    }

    fn diagonal(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let m = self.entries(theta);
        Some((0..self.n).map(|i| m[i * self.n + i]).collect())
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

fn flatten_row_major(m: &Matrix) -> Result<Vec<f64>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "dense operator needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Err(Error::Dimension("dense operator needs N >= 1".into()));
    }
    let n = m.nrows();
    Ok((0..n * n).map(|k| m[(k / n, k % n)]).collect())
}

/// Dense operator with `θ` equal to the row-major flattening of `m`.
///
/// `vjp_params(θ, v, w̄)` is the flattening of `w̄ v^T`. Symmetry is detected
/// by exact comparison of `m` with its transpose.
pub fn make_dense_operator(m: &Matrix) -> Result<(MatVecOperator, ParamVector)> {
    let flat = flatten_row_major(m)?;
    let symmetric = m == &m.transpose();
    let theta = ParamVector::new(flat)?;
    let op = DenseOperator {
        n: m.nrows(),
        fixed: None,
        symmetric,
    };
    Ok((MatVecOperator::new(op), theta))
}

/// `A_ij = 1 / (i + j + 1)` with 1-based `i, j`.
pub fn hilbert_matrix(n: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| 1.0 / ((i + 1) + (j + 1) + 1) as f64)
}

/// Symmetric Hilbert-type matrix `[1/(i+j+1)]` as an operator without free
/// parameters.
pub fn make_hilbert_operator(n: usize) -> Result<(MatVecOperator, ParamVector)> {
    if n == 0 {
        return Err(Error::Dimension("Hilbert operator needs N >= 1".into()));
    }
    let flat = flatten_row_major(&hilbert_matrix(n))?;
    let op = DenseOperator {
        n,
        fixed: Some(flat),
        symmetric: true,
    };
    Ok((MatVecOperator::new(op), ParamVector::empty()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vector;

    #[test]
    fn identity_applies_exactly() {
        let (op, theta) = make_dense_operator(&Matrix::identity(3, 3)).unwrap();
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(op.apply(&theta, &v), v);
        assert!(op.is_symmetric());
    }

    #[test]
    fn shift_matrix_and_its_transpose() {
        let m = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let (op, theta) = make_dense_operator(&m).unwrap();
        let v = Vector::from_vec(vec![0.0, 1.0]);
        assert_eq!(op.apply(&theta, &v), Vector::from_vec(vec![1.0, 0.0]));
        assert_eq!(op.apply_transpose(&theta, &v), Vector::from_vec(vec![0.0, 0.0]));
        assert!(!op.is_symmetric());
    }

    #[test]
    fn vjp_is_outer_product() {
        let (op, theta) = make_dense_operator(&Matrix::zeros(2, 2)).unwrap();
        let e1 = Vector::from_vec(vec![1.0, 0.0]);
        let e2 = Vector::from_vec(vec![0.0, 1.0]);
        // flattening of e_2 e_1^T: only entry (1, 0)
        let g = op.vjp_params(&theta, &e1, &e2);
        assert_eq!(g.as_slice(), &[0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(matches!(
            make_dense_operator(&Matrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn hilbert_entries() {
        let (op, theta) = make_hilbert_operator(1).unwrap();
        assert_eq!(op.to_dense(&theta)[(0, 0)], 1.0 / 3.0);
        let (op, theta) = make_hilbert_operator(2).unwrap();
        let a = op.to_dense(&theta);
        assert_eq!(a, Matrix::from_row_slice(2, 2, &[1.0 / 3.0, 0.25, 0.25, 0.2]));
        assert!(theta.is_empty());
        let (op, theta) = make_hilbert_operator(8).unwrap();
        let a = op.to_dense(&theta);
        assert_eq!(a, a.transpose());
        assert!(op.is_symmetric());
        assert!(make_hilbert_operator(0).is_err());
    }
}
