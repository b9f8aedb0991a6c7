use super::{MatVecOperator, Operator, ParamVector};
use crate::error::{Error, Result};

/// Square-exponential Gram matrix plus a noise ridge,
///
/// ```text
/// A_ij = s² exp(-‖x_i - x_j‖² / (2ℓ²)) + σ² δ_ij,   θ = (log ℓ, log s, log σ).
/// ```
///
/// Products are evaluated `block_rows` rows at a time; the full Gram matrix is
/// never stored.
#[derive(Debug, Clone)]
pub struct RbfKernelOperator {
    points: Vec<Vec<f64>>,
    block_rows: usize,
}

/// Log-parameters for an RBF kernel operator. A zero noise level maps to a
/// log-value whose square underflows to exactly zero.
pub fn rbf_params(lengthscale: f64, outputscale: f64, noise: f64) -> Result<ParamVector> {
    if lengthscale <= 0.0 || outputscale < 0.0 || noise < 0.0 {
        return Err(Error::InvalidArgument(
            "kernel scales must be positive (noise and outputscale may be zero)".into(),
        ));
    }
    let log_or_floor = |x: f64| if x == 0.0 { -800.0 } else { x.ln() };
    ParamVector::new(vec![lengthscale.ln(), log_or_floor(outputscale), log_or_floor(noise)])
}

struct Scales {
    inv_two_l2: f64,
    s2: f64,
    noise2: f64,
}

fn scales(theta: &[f64]) -> Scales {
    let l = theta[0].exp();
    Scales {
        inv_two_l2: 0.5 / (l * l),
        s2: (2.0 * theta[1]).exp(),
        noise2: (2.0 * theta[2]).exp(),
    }
}

impl RbfKernelOperator {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    fn sq_dist(&self, i: usize, j: usize) -> f64 {
        self.points[i]
            .iter()
            .zip(&self.points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Visits `(i, j, ‖x_i - x_j‖², k_ij)` for every row block, reusing one
    /// buffer of `block_rows × M` kernel values.
    fn for_each_block(&self, sc: &Scales, mut f: impl FnMut(usize, &[f64], &[f64])) {
        let m = self.points.len();
        let mut d2 = vec![0.0; self.block_rows * m];
        let mut k = vec![0.0; self.block_rows * m];
        let mut start = 0;
        while start < m {
            let rows = self.block_rows.min(m - start);
            for r in 0..rows {
                for j in 0..m {
                    let d = self.sq_dist(start + r, j);
                    d2[r * m + j] = d;
                    k[r * m + j] = sc.s2 * (-d * sc.inv_two_l2).exp();
                }
            }
            f(start, &d2[..rows * m], &k[..rows * m]);
            start += rows;
        }
    }
}

impl Operator for RbfKernelOperator {
    fn dim(&self) -> usize {
        self.points.len()
    }

    fn num_params(&self) -> usize {
        3
    }

    fn matvec(&self, theta: &[f64], v: &[f64], out: &mut [f64]) {
        let sc = scales(theta);
        let m = self.points.len();
        self.for_each_block(&sc, |start, _, k| {
            for (r, row) in k.chunks_exact(m).enumerate() {
                let i = start + r;
                out[i] = row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + sc.noise2 * v[i];
            }
        });
    }

    fn matvec_transpose(&self, theta: &[f64], v: &[f64], out: &mut [f64]) {
        self.matvec(theta, v, out);
    }

    fn vjp_params(&self, theta: &[f64], v: &[f64], w_bar: &[f64], grad: &mut [f64]) {
        let sc = scales(theta);
        let m = self.points.len();
        let (mut g_len, mut g_out) = (0.0, 0.0);
        self.for_each_block(&sc, |start, d2, k| {
            for r in 0..k.len() / m {
                let wi = w_bar[start + r];
                for j in 0..m {
                    let kij = k[r * m + j] * wi * v[j];
                    g_out += 2.0 * kij;
                    g_len += kij * d2[r * m + j] * 2.0 * sc.inv_two_l2;
                }
            }
        });
        let g_noise: f64 = 2.0 * sc.noise2 * w_bar.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        grad[0] += g_len;
        grad[1] += g_out;
        grad[2] += g_noise;
    }

    fn diagonal(&self, theta: &[f64]) -> Option<Vec<f64>> {
        let sc = scales(theta);
        Some(vec![sc.s2 + sc.noise2; self.points.len()])
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

/// RBF Gram operator on `points` (all of equal dimension), evaluated in row
/// blocks of `block_rows`.
pub fn make_rbf_kernel_operator(
    points: &[Vec<f64>],
    block_rows: usize,
) -> Result<MatVecOperator> {
    if points.is_empty() {
        return Err(Error::Dimension("kernel operator needs at least one point".into()));
    }
    if block_rows == 0 {
        return Err(Error::InvalidArgument("block_rows must be positive".into()));
    }
    let d = points[0].len();
    if points.iter().any(|p| p.len() != d) {
        return Err(Error::Dimension("kernel points have inconsistent dimension".into()));
    }
    Ok(MatVecOperator::new(RbfKernelOperator {
        points: points.to_vec(),
        block_rows,
    }))
}
