use super::{MatVecOperator, Operator, ParamVector};
use crate::error::{Error, Result};

/// First-order form of the wave equation `w_tt = ω² Δ w` on an `n × n` grid:
///
/// ```text
/// A(ω) = s · [[0, I], [diag(ω²) Δ, 0]]
/// ```
///
/// `Δ` is the 5-point Laplacian with spacing `h = 1/(n-1)`. Neumann boundaries
/// use ghost cells that copy the adjacent boundary value, which makes `Δ`
/// symmetric and annihilates constants. `s` is `dt_scale`. The Laplacian is
/// applied as a stencil; no matrix is stored.
#[derive(Debug, Clone)]
pub struct WaveOperator {
    n: usize,
    scale: f64,
    inv_h2: f64,
}

impl WaveOperator {
    pub fn grid_size(&self) -> usize {
        self.n
    }

    fn laplacian(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            for j in 0..n {
                let p = i * n + j;
                let c = u[p];
                let mut acc = 0.0;
                if i > 0 {
                    acc += u[p - n] - c;
                }
                if i + 1 < n {
                    acc += u[p + n] - c;
                }
                if j > 0 {
                    acc += u[p - 1] - c;
                }
                if j + 1 < n {
                    acc += u[p + 1] - c;
                }
                out[p] = acc * self.inv_h2;
            }
        }
    }
}

impl Operator for WaveOperator {
    fn dim(&self) -> usize {
        2 * self.n * self.n
    }

    fn num_params(&self) -> usize {
        self.n * self.n
    }

    fn matvec(&self, theta: &[f64], v: &[f64], out: &mut [f64]) {
        let m = self.n * self.n;
        let (top, bottom) = out.split_at_mut(m);
        self.laplacian(&v[..m], bottom);
        for (b, w) in bottom.iter_mut().zip(theta) {
            *b *= self.scale * w * w;
        }
        for (t, vb) in top.iter_mut().zip(&v[m..]) {
            *t = self.scale * vb;
        }
    }

    fn matvec_transpose(&self, theta: &[f64], v: &[f64], out: &mut [f64]) {
        let m = self.n * self.n;
        let (top, bottom) = out.split_at_mut(m);
        // bottom half of out is free scratch until the end
        for ((b, vb), w) in bottom.iter_mut().zip(&v[m..]).zip(theta) {
            *b = w * w * vb;
        }
        self.laplacian(bottom, top);
        for t in top.iter_mut() {
            *t *= self.scale;
        }
        for (b, vt) in bottom.iter_mut().zip(&v[..m]) {
            *b = self.scale * vt;
        }
    }

    fn vjp_params(&self, theta: &[f64], v: &[f64], w_bar: &[f64], grad: &mut [f64]) {
        let m = self.n * self.n;
        let mut lap = vec![0.0; m];
        self.laplacian(&v[..m], &mut lap);
        for p in 0..m {
            grad[p] += 2.0 * self.scale * theta[p] * w_bar[m + p] * lap[p];
        }
    }

    fn is_symmetric(&self) -> bool {
        false
    }
}

/// Wave operator of dimension `2n²` with `θ = ω`.
pub fn make_wave_operator(
    n: usize,
    omega: &[f64],
    dt_scale: f64,
) -> Result<(MatVecOperator, ParamVector)> {
    if n < 2 {
        return Err(Error::Dimension(format!("wave grid needs n >= 2, got {n}")));
    }
    if omega.len() != n * n {
        return Err(Error::Dimension(format!(
            "wave coefficient field has length {}, expected {}",
            omega.len(),
            n * n
        )));
    }
    if !dt_scale.is_finite() {
        return Err(Error::InvalidArgument("dt_scale must be finite".into()));
    }
    let h = 1.0 / (n - 1) as f64;
    let op = WaveOperator {
        n,
        scale: dt_scale,
        inv_h2: 1.0 / (h * h),
    };
    Ok((MatVecOperator::new(op), ParamVector::new(omega.to_vec())?))
}
