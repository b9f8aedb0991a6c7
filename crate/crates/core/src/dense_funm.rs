//! Functions of small dense matrices, `H ↦ f(H) e_1`, with exact pullbacks.
//!
//! Symmetric inputs go through an eigendecomposition and the pullback uses
//! the Daleckii–Krein (Loewner matrix) formula. Hessenberg or general inputs
//! support the exponential only: Padé(13) scaling and squaring forward, and
//! the block-triangular Fréchet identity backward.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// Where a [`ScalarFunction`] is defined on the real line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Real,
    Positive,
    NonNegative,
    /// `x > -1`
    AboveMinusOne,
}

impl Domain {
    pub fn contains(self, x: f64) -> bool {
        match self {
            Domain::Real => x.is_finite(),
            Domain::Positive => x > 0.0,
            Domain::NonNegative => x >= 0.0,
            Domain::AboveMinusOne => x > -1.0,
        }
    }
}

/// A real scalar function together with its analytic derivative.
#[derive(Clone, Copy)]
pub struct ScalarFunction {
    name: &'static str,
    value: fn(f64) -> f64,
    derivative: fn(f64) -> f64,
    domain: Domain,
}

impl std::fmt::Debug for ScalarFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarFunction({})", self.name)
    }
}

impl ScalarFunction {
    pub fn custom(
        name: &'static str,
        value: fn(f64) -> f64,
        derivative: fn(f64) -> f64,
        domain: Domain,
    ) -> Self {
        Self {
            name,
            value,
            derivative,
            domain,
        }
    }

    pub fn exp() -> Self {
        Self::custom("exp", f64::exp, f64::exp, Domain::Real)
    }

    pub fn log() -> Self {
        Self::custom("log", f64::ln, |x| 1.0 / x, Domain::Positive)
    }

    pub fn sqrt() -> Self {
        Self::custom("sqrt", f64::sqrt, |x| 0.5 / x.sqrt(), Domain::NonNegative)
    }

    /// `x^{-1/2}`
    pub fn inv_sqrt() -> Self {
        Self::custom("inv_sqrt", |x| 1.0 / x.sqrt(), |x| -0.5 / (x * x.sqrt()), Domain::Positive)
    }

    pub fn square() -> Self {
        Self::custom("square", |x| x * x, |x| 2.0 * x, Domain::Real)
    }

    pub fn log1p() -> Self {
        Self::custom("log1p", f64::ln_1p, |x| 1.0 / (1.0 + x), Domain::AboveMinusOne)
    }

    pub fn identity() -> Self {
        Self::custom("identity", |x| x, |_| 1.0, Domain::Real)
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }
}

/// Structural class of a [`SmallMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    SymmetricTridiagonal,
    /// `H_ij = 0` for `i > j + 1`.
    UpperHessenberg,
    General,
}

/// A small square matrix whose structural zeros are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallMatrix {
    entries: Matrix,
    structure: Structure,
}

impl SmallMatrix {
    pub fn new(entries: Matrix, structure: Structure) -> Result<Self> {
        let k = entries.nrows();
        if entries.ncols() != k {
            return Err(Error::Dimension(format!(
                "small matrix must be square, got {}x{}",
                k,
                entries.ncols()
            )));
        }
        let violates = |i: usize, j: usize| match structure {
            Structure::SymmetricTridiagonal => {
                (i.abs_diff(j) > 1 && entries[(i, j)] != 0.0) || entries[(i, j)] != entries[(j, i)]
            }
            Structure::UpperHessenberg => i > j + 1 && entries[(i, j)] != 0.0,
            Structure::General => false,
        };
        for i in 0..k {
            for j in 0..k {
                if violates(i, j) {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i}, {j}) breaks the declared {structure:?} structure"
                    )));
                }
            }
        }
        Ok(Self { entries, structure })
    }

    /// Symmetric tridiagonal matrix from its diagonal and off-diagonal.
    pub fn tridiagonal(diag: &[f64], offdiag: &[f64]) -> Result<Self> {
        let k = diag.len();
        if offdiag.len() + 1 != k.max(1) {
            return Err(Error::Dimension(format!(
                "tridiagonal with {} diagonal entries needs {} off-diagonal entries, got {}",
                k,
                k.saturating_sub(1),
                offdiag.len()
            )));
        }
        let mut m = Matrix::from_diagonal(&Vector::from_column_slice(diag));
        for (i, &b) in offdiag.iter().enumerate() {
            m[(i, i + 1)] = b;
            m[(i + 1, i)] = b;
        }
        Ok(Self {
            entries: m,
            structure: Structure::SymmetricTridiagonal,
        })
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }
}

fn checked_eigen(f: &ScalarFunction, h: &SmallMatrix) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    if h.structure != Structure::SymmetricTridiagonal {
        return Err(Error::InvalidArgument(
            "symmetric matrix functions need a symmetric tridiagonal input".into(),
        ));
    }
    if h.dim() == 0 {
        return Err(Error::Dimension("empty small matrix".into()));
    }
    let eig = SymmetricEigen::new(h.entries.clone());
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&w| !f.domain.contains(w)) {
        return Err(Error::Domain {
            function: f.name,
            eigenvalue: bad,
        });
    }
    Ok(eig)
}

/// Pullback of [`funm_sym_e1`].
#[derive(Debug, Clone)]
pub struct SymFunmPullback {
    vectors: Matrix,
    loewner: Matrix,
}

impl SymFunmPullback {
    /// Gradient with respect to `H`, symmetrized and restricted to the
    /// tridiagonal band. For an off-diagonal coefficient `b` that appears at
    /// `(i, i+1)` and `(i+1, i)`, the gradient is twice the returned entry.
    pub fn pullback(&self, y_bar: &Vector) -> Matrix {
        let k = self.vectors.nrows();
        assert_eq!(y_bar.len(), k, "cotangent length");
        let p = self.vectors.transpose() * y_bar;
        let q = self.vectors.row(0).transpose();
        let inner = Matrix::from_fn(k, k, |i, j| self.loewner[(i, j)] * p[i] * q[j]);
        let g = &self.vectors * inner * self.vectors.transpose();
        Matrix::from_fn(k, k, |i, j| {
            if i.abs_diff(j) > 1 {
                0.0
            } else {
                0.5 * (g[(i, j)] + g[(j, i)])
            }
        })
    }
}

/// Loewner matrix of first divided differences, with the derivative at the
/// midpoint for (near-)coincident eigenvalues.
fn loewner_matrix(f: &ScalarFunction, w: &Vector) -> Matrix {
    let k = w.len();
    Matrix::from_fn(k, k, |i, j| {
        let (a, b) = (w[i], w[j]);
        if i == j {
            f.derivative(a)
        } else if (a - b).abs() < 1e-10 * (1.0 + a.abs()) {
            f.derivative(0.5 * (a + b))
        } else {
            (f.value(a) - f.value(b)) / (a - b)
        }
    })
}

/// `y = f(H) e_1` for symmetric tridiagonal `H`, and its pullback.
pub fn funm_sym_e1(f: &ScalarFunction, h: &SmallMatrix) -> Result<(Vector, SymFunmPullback)> {
    let eig = checked_eigen(f, h)?;
    let fw = eig.eigenvalues.map(|w| f.value(w));
    let first_row = eig.eigenvectors.row(0).transpose();
    let y = &eig.eigenvectors * fw.component_mul(&first_row);
    let loewner = loewner_matrix(f, &eig.eigenvalues);
    Ok((
        y,
        SymFunmPullback {
            vectors: eig.eigenvectors,
            loewner,
        },
    ))
}

/// The full matrix `f(H) = V f(Λ) V^T` for symmetric tridiagonal `H`.
pub fn funm_full(f: &ScalarFunction, h: &SmallMatrix) -> Result<Matrix> {
    let eig = checked_eigen(f, h)?;
    let v = &eig.eigenvectors;
    let scaled = Matrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * f.value(eig.eigenvalues[j]));
    let m = scaled * v.transpose();
    Ok(0.5 * (&m + m.transpose()))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Largest 1-norm for which the degree-13 Padé approximant is accurate to
/// double precision without scaling.
const THETA13: f64 = 5.371920351148152;

fn one_norm(m: &Matrix) -> f64 {
    m.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::Overflow { norm });
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    // exp(A) for ‖A‖₁ beyond ~2^10 · 709 cannot be represented anyway
    if s > 1100 {
        return Err(Error::Overflow { norm });
    }
    let a = a * 2f64.powi(-s);
    let id = Matrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .ok_or_else(|| Error::Singular("Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::Overflow { norm });
    }
    Ok(r)
}

/// Pullback of [`expm_hessenberg_e1`].
#[derive(Debug, Clone)]
pub struct ExpmPullback {
    scaled: Matrix,
    t: f64,
}

impl ExpmPullback {
    /// `H̄ = t · L(tH^T, ȳ e_1^T)` with `L` the Fréchet derivative of the
    /// exponential, read off the top-right block of
    /// `exp([[tH^T, ȳ e_1^T], [0, tH^T]])`.
    pub fn pullback(&self, y_bar: &Vector) -> Result<Matrix> {
        let k = self.scaled.nrows();
        assert_eq!(y_bar.len(), k, "cotangent length");
        let xt = self.scaled.transpose();
        let mut block = Matrix::zeros(2 * k, 2 * k);
        block.view_mut((0, 0), (k, k)).copy_from(&xt);
        block.view_mut((k, k), (k, k)).copy_from(&xt);
        block.view_mut((0, k), (k, 1)).copy_from(y_bar);
        let e = expm(&block)?;
        Ok(e.view((0, k), (k, k)) * self.t)
    }
}

/// `y = exp(tH) e_1` for Hessenberg or general `H`, and its pullback.
pub fn expm_hessenberg_e1(h: &SmallMatrix, t: f64) -> Result<(Vector, ExpmPullback)> {
    if h.dim() == 0 {
        return Err(Error::Dimension("empty small matrix".into()));
    }
    let scaled = h.entries() * t;
    let e = expm(&scaled)?;
    Ok((e.column(0).into_owned(), ExpmPullback { scaled, t }))
}
