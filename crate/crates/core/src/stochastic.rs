//! Randomized estimators: Hutchinson trace, log-determinant with gradient,
//! diagonal estimation, and `A^{-1/2} ε` sampling.
//!
//! Probe `i` is generated from its own RNG seeded with a 64-bit mix of
//! `(seed, i)`, so estimates do not depend on evaluation order. Probes run on
//! the rayon pool and results are reduced in ascending probe order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dense_funm::ScalarFunction;
use crate::error::{Error, Result};
use crate::funm_action::{funm_lanczos, quadratic_form_funm};
use crate::operator::{MatVecOperator, ParamVector};
use crate::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeDistribution {
    #[default]
    Rademacher,
    Gaussian,
}

/// Deterministic, indexable family of random probe vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeStream {
    pub seed: u64,
    pub distribution: ProbeDistribution,
    pub dim: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl ProbeStream {
    pub fn new(seed: u64, distribution: ProbeDistribution, dim: usize) -> Self {
        Self {
            seed,
            distribution,
            dim,
        }
    }

    pub fn rademacher(seed: u64, dim: usize) -> Self {
        Self::new(seed, ProbeDistribution::Rademacher, dim)
    }

    pub fn gaussian(seed: u64, dim: usize) -> Self {
        Self::new(seed, ProbeDistribution::Gaussian, dim)
    }

    /// Probe number `index`; a pure function of `(seed, index, dim)`.
    pub fn probe(&self, index: usize) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(index as u64)));
        match self.distribution {
            ProbeDistribution::Rademacher => {
                Vector::from_fn(self.dim, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
            }
            ProbeDistribution::Gaussian => Vector::from_fn(self.dim, |_, _| rng.sample(StandardNormal)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√L`; zero when `L = 1`.
    pub std_error: f64,
    pub num_probes: usize,
    pub per_probe: Vec<f64>,
    /// Set when `L = 1` and no standard error is available.
    pub degenerate: bool,
}

impl TraceEstimate {
    fn from_samples(samples: Vec<f64>) -> Self {
        let l = samples.len();
        let mean = samples.iter().sum::<f64>() / l as f64;
        let std_error = if l > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (l - 1) as f64;
            (var / l as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            num_probes: l,
            per_probe: samples,
            degenerate: l == 1,
        }
    }
}

fn check_probes(probes: &ProbeStream, num_probes: usize) -> Result<()> {
    if num_probes == 0 {
        return Err(Error::InvalidArgument("at least one probe is required".into()));
    }
    if probes.dim == 0 {
        return Err(Error::Dimension("probe dimension must be positive".into()));
    }
    Ok(())
}

/// Evaluates `f` on probes `0..L` in parallel and returns results in probe order.
fn map_probes<T: Send>(
    probes: &ProbeStream,
    num_probes: usize,
    f: impl Fn(usize, &Vector) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    (0..num_probes)
        .into_par_iter()
        .map(|i| f(i, &probes.probe(i)))
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Hutchinson estimate of `E[form(v)]` over `L` probes.
pub fn hutchinson_trace(
    form: impl Fn(&Vector) -> Result<f64> + Sync,
    probes: &ProbeStream,
    num_probes: usize,
) -> Result<TraceEstimate> {
    check_probes(probes, num_probes)?;
    let samples = map_probes(probes, num_probes, |i, v| {
        let x = form(v)?;
        if x.is_finite() {
            Ok(x)
        } else {
            Err(Error::NonFiniteProbe { index: i })
        }
    })?;
    Ok(TraceEstimate::from_samples(samples))
}

/// Per-component mean and standard error of a vector-valued estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalEstimate {
    pub mean: Vector,
    pub std_error: Vector,
    pub num_probes: usize,
}

impl DiagonalEstimate {
    fn from_samples(samples: &[Vector], dim: usize) -> Self {
        let l = samples.len();
        let mut mean = Vector::zeros(dim);
        for s in samples {
            mean += s;
        }
        mean /= l as f64;
        let mut std_error = Vector::zeros(dim);
        if l > 1 {
            for s in samples {
                std_error += (s - &mean).map(|x| x * x);
            }
            std_error = std_error.map(|x| (x / ((l - 1) * l) as f64).sqrt());
        }
        Self {
            mean,
            std_error,
            num_probes: l,
        }
    }
}

/// Stochastic diagonal `E[v ∘ A v]`.
pub fn diagonal_estimate(
    op: &MatVecOperator,
    theta: &ParamVector,
    probes: &ProbeStream,
    num_probes: usize,
) -> Result<DiagonalEstimate> {
    check_probes(probes, num_probes)?;
    op.check_inputs(theta, &Vector::zeros(probes.dim))?;
    let samples = map_probes(probes, num_probes, |_, v| Ok(v.component_mul(&op.apply(theta, v))))?;
    Ok(DiagonalEstimate::from_samples(&samples, probes.dim))
}

/// `log det A ≈ mean_ℓ v_ℓ^T log(A) v_ℓ` with `K`-step Lanczos quadrature.
/// Holds the probe configuration so the gradient reuses the same probes.
#[derive(Debug)]
pub struct LogdetEstimate<'a> {
    pub estimate: TraceEstimate,
    op: &'a MatVecOperator,
    theta: ParamVector,
    steps: usize,
    probes: ProbeStream,
}

impl LogdetEstimate<'_> {
    /// Gradient of `ρ̄ · estimate` with respect to `θ` for the same probes,
    /// with the per-component standard error across probes. Each probe's
    /// factorization is recomputed rather than stored.
    pub fn pullback(&self, rho_bar: f64) -> Result<DiagonalEstimate> {
        let log = ScalarFunction::log();
        let l = self.estimate.num_probes;
        let grads = map_probes(&self.probes, l, |_, v| {
            let q = quadratic_form_funm(self.op, &self.theta, v, self.steps, &log)?;
            Ok(q.pullback(rho_bar)?.1)
        })?;
        Ok(DiagonalEstimate::from_samples(&grads, self.op.num_params()))
    }
}

pub fn logdet_estimate<'a>(
    op: &'a MatVecOperator,
    theta: &ParamVector,
    steps: usize,
    probes: &ProbeStream,
    num_probes: usize,
) -> Result<LogdetEstimate<'a>> {
    check_probes(probes, num_probes)?;
    if probes.dim != op.dim() {
        return Err(Error::Dimension(format!(
            "probe dimension {} does not match operator dimension {}",
            probes.dim,
            op.dim()
        )));
    }
    let log = ScalarFunction::log();
    let samples = map_probes(probes, num_probes, |_, v| {
        Ok(quadratic_form_funm(op, theta, v, steps, &log)?.value)
    })?;
    Ok(LogdetEstimate {
        estimate: TraceEstimate::from_samples(samples),
        op,
        theta: theta.clone(),
        steps,
        probes: *probes,
    })
}

/// `A^{-1/2} ε` via `K` Lanczos steps.
pub fn sample_inv_sqrt(op: &MatVecOperator, theta: &ParamVector, steps: usize, eps: &Vector) -> Result<Vector> {
    Ok(funm_lanczos(op, theta, eps, steps, &ScalarFunction::inv_sqrt())?.value)
}
