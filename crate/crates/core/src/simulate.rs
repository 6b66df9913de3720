//! Seeded Gaussian path synthesis.
//!
//! Randomness comes from a counter-based generator: every Gaussian variate is
//! a pure function of `(seed, path, step)`, so ensembles are bit-identical
//! under rerun and under any parallel schedule. Uniforms are mapped to
//! Gaussians by inverse-CDF, keeping the stream order-independent.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{DiscreteKernel, TimeGrid};

/// SplitMix64 finaliser; a strong 64-bit mixer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const STEP_SALT: u64 = 0xd1b5_4a32_d192_ed03;

/// Uniform variate in (0,1) for the given (seed, path, step) triple.
///
/// Splitting rule: a per-path stream key is derived by mixing the seed with a
/// Weyl-sequence offset of the path index; the step index is mixed into the
/// stream key the same way. No state is carried between calls.
#[inline]
pub fn uniform_at(seed: u64, path: u64, step: u64) -> f64 {
    let stream = mix64(seed ^ STREAM_SALT.wrapping_mul(path.wrapping_add(1)));
    let bits = mix64(stream ^ STEP_SALT.wrapping_mul(step.wrapping_add(1)));
    // 53 explicit bits, shifted into (0,1) to keep the inverse CDF finite.
    ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
}

/// Standard normal variate for the given (seed, path, step) triple.
#[inline]
pub fn normal_at(seed: u64, path: u64, step: u64) -> f64 {
    inverse_normal_cdf(uniform_at(seed, path, step))
}

/// Acklam's rational approximation to the standard normal quantile,
/// relative error below 1.2e-9 across (0,1).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// How an ensemble was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthesisMethod {
    Kernel,
    Cholesky,
    External,
}

/// A seeded collection of sampled paths on a grid. `paths[(p, j)]` is the
/// value of path p at node t_j; every path starts at 0.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub grid: TimeGrid,
    pub process_name: String,
    /// n_paths x (n + 1) node values.
    pub paths: DMatrix<f64>,
    pub seed: u64,
    pub method: SynthesisMethod,
    /// Generating Brownian cell increments (n_paths x n), kept by the kernel
    /// synthesiser so prediction martingales can be rebuilt from them.
    pub increments: Option<DMatrix<f64>>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.paths.ncols()
    }

    pub fn value(&self, path: usize, node: usize) -> f64 {
        self.paths[(path, node)]
    }

    /// Increments of path p across cell c, from node values.
    pub fn path_increments(&self, p: usize) -> Vec<f64> {
        (0..self.n_nodes() - 1)
            .map(|c| self.paths[(p, c + 1)] - self.paths[(p, c)])
            .collect()
    }

    /// Wrap node values produced outside the synthesisers.
    pub fn from_values(grid: TimeGrid, name: &str, paths: DMatrix<f64>, seed: u64) -> Result<Self> {
        if paths.ncols() != grid.n_cells() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "paths have {} nodes, grid has {}",
                paths.ncols(),
                grid.n_cells() + 1
            )));
        }
        Ok(PathEnsemble {
            grid,
            process_name: name.to_string(),
            paths,
            seed,
            method: SynthesisMethod::External,
            increments: None,
        })
    }
}

/// Independent Gaussian increments with variance Delta_j per cell:
/// `out[(p, c)] ~ N(0, Delta_c)`, each entry a pure function of
/// (seed, p, c).
pub fn sample_increments(grid: &TimeGrid, n_paths: usize, seed: u64) -> DMatrix<f64> {
    let n = grid.n_cells();
    let sqrt_w: Vec<f64> = grid.cell_weights().iter().map(|d| d.sqrt()).collect();
    let rows: Vec<Vec<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            (0..n)
                .map(|c| sqrt_w[c] * normal_at(seed, p as u64, c as u64))
                .collect()
        })
        .collect();
    let mut out = DMatrix::zeros(n_paths, n);
    for (p, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            out[(p, c)] = *v;
        }
    }
    out
}

/// Time-domain synthesis: P[p][i] = sum_c Z[i][c] dW[p][c].
pub fn synthesize_from_kernel(
    dk: &DiscreteKernel,
    increments: &DMatrix<f64>,
    name: &str,
    seed: u64,
) -> Result<PathEnsemble> {
    let n = dk.n_cells();
    if increments.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "increment matrix has {} cells, kernel grid has {}",
            increments.ncols(),
            n
        )));
    }
    // paths = dW * Z^T  ((p x n) * (n x (n+1)))
    let paths = increments * dk.values().transpose();
    Ok(PathEnsemble {
        grid: dk.grid.clone(),
        process_name: name.to_string(),
        paths,
        seed,
        method: SynthesisMethod::Kernel,
        increments: Some(increments.clone()),
    })
}

/// Convenience: sample increments and synthesise in one step.
pub fn simulate_kernel(
    dk: &DiscreteKernel,
    n_paths: usize,
    seed: u64,
    name: &str,
) -> Result<PathEnsemble> {
    let dw = sample_increments(&dk.grid, n_paths, seed);
    synthesize_from_kernel(dk, &dw, name, seed)
}

/// Exact sampler from a covariance matrix given on the interior + terminal
/// nodes (t_1..t_n). Node 0 is prepended as 0. Jitter eps*I with
/// eps = 1e-12 * trace/n is added before factorisation, escalated once to
/// 1e-10 * trace/n; beyond that the matrix is reported as not factorable.
pub fn synthesize_cholesky(
    grid: &TimeGrid,
    cov: &DMatrix<f64>,
    n_paths: usize,
    seed: u64,
    name: &str,
) -> Result<PathEnsemble> {
    let n = grid.n_cells();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "covariance must be {n}x{n} (interior + terminal nodes), got {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let scale = cov.trace() / n as f64;
    let mut factor = None;
    if cov.iter().all(|&v| v == 0.0) {
        factor = Some(DMatrix::zeros(n, n));
    } else {
        for eps in [0.0, 1e-12 * scale, 1e-10 * scale] {
            let jittered = cov + DMatrix::identity(n, n) * eps;
            if let Some(chol) = nalgebra::Cholesky::new(jittered) {
                factor = Some(chol.l());
                break;
            }
        }
    }
    let l = factor.ok_or_else(|| {
        Error::FactorizationFailure(
            "covariance not positive semidefinite within jitter 1e-10 * trace/n".into(),
        )
    })?;
    let gauss = DMatrix::from_fn(n_paths, n, |p, c| normal_at(seed, p as u64, c as u64));
    let interior = gauss * l.transpose();
    let mut paths = DMatrix::zeros(n_paths, n + 1);
    for p in 0..n_paths {
        for j in 0..n {
            paths[(p, j + 1)] = interior[(p, j)];
        }
    }
    Ok(PathEnsemble {
        grid: grid.clone(),
        process_name: name.to_string(),
        paths,
        seed,
        method: SynthesisMethod::Cholesky,
        increments: None,
    })
}
