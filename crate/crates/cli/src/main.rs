use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use krylov_adjoint::experiments::{
    bench_csv, bench_matvecs, check_bench, check_hilbert, check_wave, hilbert_accuracy, hilbert_csv, logdet_demo, wave_csv,
    wave_demo, Projection,
};
use krylov_adjoint::{make_hilbert_operator, read_matrix_market};

/// Verification experiments for Krylov adjoints. Results are written as CSV.
#[derive(Parser, Debug)]
#[command(name = "krylov-adjoint", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Jacobian accuracy of the full-rank Arnoldi reconstruction of Hilbert matrices, N = 1..=n.
    HilbertAccuracy {
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..=12))]
        n: u64,
        /// Only the re-projected adjoint (default: both modes).
        #[arg(long, conflicts_with = "no_reproject")]
        reproject: bool,
        /// Only the adjoint without re-projection.
        #[arg(long)]
        no_reproject: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Operator-product counts and wall times of forward and adjoint passes.
    BenchMatvecs {
        /// Matrix Market file; the builtin Hilbert matrix of size --n otherwise.
        #[arg(long)]
        mtx: Option<PathBuf>,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 50, 100])]
        k: Vec<usize>,
        #[command(flatten)]
        reorth: Reorth,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Krylov sweep of exp(tA)w_0 and its ω-gradient on the wave operator.
    WaveDemo {
        #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(2..=16))]
        n: u64,
        #[arg(long, default_value_t = 0.1)]
        t: f64,
        /// Krylov sizes; defaults to powers of two up to 2n².
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Stochastic log-determinant of an RBF Gram matrix with gradient checks.
    LogdetDemo {
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..=200))]
        n: u64,
        #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
        k: u64,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
        l: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Args, Debug)]
struct Output {
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Output {
    fn write(&self, csv: &str) -> Result<()> {
        match &self.out {
            Some(path) => std::fs::write(path, csv).with_context(|| format!("writing {}", path.display())),
            None => {
                print!("{csv}");
                Ok(())
            }
        }
    }
}

#[derive(Args, Debug)]
struct Reorth {
    /// Full reorthogonalization in the forward pass.
    #[arg(long, conflicts_with = "no_reorth")]
    reorth: bool,
    /// No reorthogonalization (default for benchmarks).
    #[arg(long)]
    no_reorth: bool,
}

fn positive(ks: &[usize]) -> Result<()> {
    if ks.contains(&0) {
        bail!("--k values must be positive");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::HilbertAccuracy {
            n,
            reproject,
            no_reproject,
            out,
        } => {
            let modes = match (reproject, no_reproject) {
                (true, _) => vec![Projection::On],
                (_, true) => vec![Projection::Off],
                _ => vec![Projection::On, Projection::Off],
            };
            let rows = hilbert_accuracy(n as usize, &modes)?;
            out.write(&hilbert_csv(&rows))?;
            check_hilbert(&rows).map_err(anyhow::Error::msg)
        }
        Command::BenchMatvecs {
            mtx,
            n,
            k,
            reorth,
            seed,
            out,
        } => {
            positive(&k)?;
            let (op, theta) = match &mtx {
                Some(path) => read_matrix_market(path).with_context(|| format!("reading {}", path.display()))?,
                None => make_hilbert_operator(n as usize)?,
            };
            if let Some(&bad) = k.iter().find(|&&k| k > op.dim()) {
                bail!("K = {bad} exceeds the operator dimension {}", op.dim());
            }
            let rows = bench_matvecs(&op, &theta, &k, reorth.reorth && !reorth.no_reorth, seed)?;
            out.write(&bench_csv(&rows))?;
            check_bench(&rows).map_err(anyhow::Error::msg)
        }
        Command::WaveDemo { n, t, k, seed, out } => {
            if t <= 0.0 || !t.is_finite() {
                bail!("--t must be positive");
            }
            let n = n as usize;
            let dim = 2 * n * n;
            let ks = if k.is_empty() {
                let mut ks: Vec<usize> = std::iter::successors(Some(2), |k| Some(k * 2)).take_while(|&k| k < dim).collect();
                ks.push(dim);
                ks
            } else {
                k
            };
            positive(&ks)?;
            if let Some(&bad) = ks.iter().find(|&&k| k > dim) {
                bail!("K = {bad} exceeds the operator dimension {dim}");
            }
            let rows = wave_demo(n, t, &ks, seed)?;
            out.write(&wave_csv(&rows))?;
            check_wave(&rows, dim).map_err(anyhow::Error::msg)
        }
        Command::LogdetDemo { n, k, l, seed, out } => {
            if k > n {
                bail!("--k must not exceed --n");
            }
            let report = logdet_demo(n as usize, k as usize, l as usize, seed)?;
            out.write(&report.csv())?;
            report.check().map_err(anyhow::Error::msg)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("check failed: {e:#}");
            ExitCode::FAILURE
        }
    }
}
