//! Independent validation oracles: seeded Monte Carlo simulation of the
//! finite-sample LSE covariance, and brute-force search over small candidate
//! design families.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::basis::RegressionBasis;
use crate::designs::Design;
use crate::error::{Error, Result};
use crate::kernels::{CovarianceKernel, SingularPolicy};
use crate::moments;
use crate::optimality::Criterion;

const BLOCK: usize = 4096;

#[derive(Clone, Debug, Serialize)]
pub struct SimulationConfig {
    /// number of replications
    pub n_rep: usize,
    /// deterministic stream seed; per-block substreams are derived from it
    pub seed: u64,
    /// exact design points
    pub points: Vec<f64>,
}

impl SimulationConfig {
    pub fn new(points: Vec<f64>, seed: u64) -> Self {
        SimulationConfig {
            n_rep: 100_000,
            seed,
            points,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub empirical: Vec<Vec<f64>>,
    pub exact: Vec<Vec<f64>>,
    pub standard_errors: Vec<Vec<f64>>,
    /// max entrywise |empirical − exact| / SE
    pub max_z: f64,
    pub n_rep: usize,
    pub seed: u64,
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulates `n_rep` correlated Gaussian error vectors, computes the ordinary
/// LSE each time, and compares the empirical covariance with the exact one.
///
/// Replications run in fixed blocks whose generators are derived from the
/// seed, so results are bit-reproducible regardless of scheduling.
pub fn simulate_lse_cov(
    config: &SimulationConfig,
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
) -> Result<McReport> {
    let n = config.points.len();
    let m = basis.dim();
    if n < m {
        return Err(Error::InvalidDesign(format!(
            "need at least m = {m} points, got {n}"
        )));
    }
    if kernel.is_singular_on_diagonal() {
        return Err(Error::SmoothingRequired {
            context: "sampling from a singular kernel",
        });
    }
    let sigma = DMatrix::from_fn(n, n, |i, j| kernel.eval(config.points[i], config.points[j]));
    let mean_diag = sigma.trace() / n as f64;
    let mut chol = None;
    for &jitter in &[0.0, 1e-14, 1e-12, 1e-10] {
        let candidate = &sigma + DMatrix::identity(n, n) * (jitter * mean_diag);
        if let Some(c) = candidate.cholesky() {
            chol = Some(c);
            break;
        }
    }
    let chol = chol.ok_or_else(|| {
        Error::NotPositiveDefinite("kernel Gram matrix is not PSD within jitter budget".into())
    })?;
    let lower = chol.l();

    let mut x = DMatrix::zeros(n, m);
    for (i, &p) in config.points.iter().enumerate() {
        x.set_row(i, &basis.eval(p)?.transpose());
    }
    let xtx = x.transpose() * &x;
    let (xtx_inv, _) = moments::sym_inverse(&xtx)?;
    let a = xtx_inv * x.transpose(); // m×n; θ̂ = A ε

    let exact = &a * &sigma * a.transpose();

    let mut sum = DMatrix::<f64>::zeros(m, m);
    let mut z = DVector::<f64>::zeros(n);
    let mut done = 0usize;
    let mut block_idx = 0u64;
    while done < config.n_rep {
        let count = BLOCK.min(config.n_rep - done);
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(config.seed ^ block_idx));
        for _ in 0..count {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let eps = &lower * &z;
            let theta = &a * eps;
            sum.ger(1.0, &theta, &theta, 1.0);
        }
        done += count;
        block_idx += 1;
    }
    let sum = (&sum + sum.transpose()) * 0.5;
    let empirical = sum / config.n_rep as f64;

    let mut max_z = 0.0f64;
    let mut se = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let var = (exact[(i, i)] * exact[(j, j)] + exact[(i, j)].powi(2))
                / config.n_rep as f64;
            se[(i, j)] = var.sqrt();
            max_z = max_z.max((empirical[(i, j)] - exact[(i, j)]).abs() / se[(i, j)]);
        }
    }
    let rows = |mat: &DMatrix<f64>| -> Vec<Vec<f64>> {
        mat.row_iter().map(|r| r.iter().cloned().collect()).collect()
    };
    Ok(McReport {
        empirical: rows(&empirical),
        exact: rows(&exact),
        standard_errors: rows(&se),
        max_z,
        n_rep: config.n_rep,
        seed: config.seed,
    })
}

#[derive(Debug)]
pub struct BruteForceResult {
    pub best: Design,
    pub best_value: f64,
    /// every evaluated candidate with its criterion value
    pub table: Vec<(Design, f64)>,
    /// candidates skipped for singular moment matrices
    pub skipped: usize,
}

/// Exhaustively evaluates Φ(D(ξ)) over a finite candidate family.
pub fn brute_force_best_design(
    candidates: &[Design],
    basis: &RegressionBasis,
    kernel: &CovarianceKernel,
    criterion: &Criterion,
    policy: SingularPolicy,
) -> Result<BruteForceResult> {
    let mut table = Vec::new();
    let mut skipped = 0usize;
    for cand in candidates {
        match moments::cov_matrix(cand, basis, kernel, policy) {
            Ok(ms) => {
                let v = criterion.value(&ms.covariance);
                if v.is_finite() {
                    table.push((cand.clone(), v));
                } else {
                    skipped += 1;
                }
            }
            Err(Error::SingularMoment { .. }) | Err(Error::NotPositiveDefinite(_)) => {
                skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    let best = table
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::InvalidDesign("no feasible candidate".into()))?;
    Ok(BruteForceResult {
        best: best.0.clone(),
        best_value: best.1,
        table,
        skipped,
    })
}

/// Symmetric two- and three-point candidate designs on [−1, 1]:
/// {−a, a; ½, ½} and {−a, 0, a; w, 1−2w, w} for a on a grid of `grid_n`
/// points and w on a grid with step `weight_step`.
pub fn symmetric_candidates(grid_n: usize, weight_step: f64) -> Vec<Design> {
    let mut out = Vec::new();
    let half = (grid_n - 1) / 2;
    for i in 1..=half {
        let a = i as f64 / half as f64;
        out.push(Design::new(vec![-a, a], vec![0.5, 0.5]).expect("symmetric pair"));
        let mut w = weight_step;
        while w < 0.5 - 1e-12 {
            out.push(
                Design::new(vec![-a, 0.0, a], vec![w, 1.0 - 2.0 * w, w])
                    .expect("symmetric triple"),
            );
            w += weight_step;
        }
    }
    out
}
