//! Critical values for max-type statistics: closed form under independence
//! and simulation, optionally with block-correlated Gaussians.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::variance::SigmaC;

/// Replications per independently seeded simulation chunk.
const CHUNK: usize = 8192;
const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sidedness {
    #[default]
    TwoSided,
    OneSidedUpper,
}

impl Sidedness {
    /// The quantity maximized for a signed standardized statistic.
    #[inline]
    pub fn fold(self, z: f64) -> f64 {
        match self {
            Sidedness::TwoSided => z.abs(),
            Sidedness::OneSidedUpper => z,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Sidedness::TwoSided => "two_sided",
            Sidedness::OneSidedUpper => "one_sided_upper",
        }
    }
}

impl fmt::Display for Sidedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Sidedness {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two" | "two_sided" | "two-sided" => Ok(Sidedness::TwoSided),
            "upper" | "one_sided_upper" | "one-sided" => Ok(Sidedness::OneSidedUpper),
            _ => Err(Error::InvalidConfig(format!("unknown sidedness `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CriticalMethod {
    #[default]
    Analytic,
    /// Independent standard normals.
    Simulated { reps: usize, seed: u64 },
    /// Block-correlated normals from the grid correlation matrices; only
    /// meaningful for threshold searches, elsewhere equivalent to `Simulated`.
    SimulatedSigmaC { reps: usize, seed: u64 },
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// `(1 - alpha)` quantile of the maximum of `n` independent `|Z|` (two-sided)
/// or `Z` (one-sided).
pub fn analytic_critical_value(n: usize, alpha: f64, sided: Sidedness) -> Result<f64> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::InvalidConfig(
            "number of comparisons must be at least 1".into(),
        ));
    }
    // per-comparison tail 1 - (1 - alpha)^{1/n}, computed without cancellation
    let tail = -((1.0 - alpha).ln() / n as f64).exp_m1();
    let tail = match sided {
        Sidedness::TwoSided => tail / 2.0,
        Sidedness::OneSidedUpper => tail,
    };
    Ok(-standard_normal().inverse_cdf(tail))
}

fn standard_normal() -> Normal {
    Normal::standard()
}

/// Critical values for every `alpha`; a simulated method draws one sample
/// and reads all quantiles from it.
pub fn critical_values(
    n: usize,
    alphas: &[f64],
    sided: Sidedness,
    method: CriticalMethod,
    sigma_c: Option<&[SigmaC]>,
) -> Result<Vec<f64>> {
    for &a in alphas {
        check_alpha(a)?;
    }
    match method {
        CriticalMethod::Analytic => alphas
            .iter()
            .map(|&a| analytic_critical_value(n, a, sided))
            .collect(),
        CriticalMethod::Simulated { reps, seed } => {
            let mut sample = simulate_max_gaussian(n, reps, seed, None, sided)?;
            sample.sort_by(f64::total_cmp);
            Ok(alphas
                .iter()
                .map(|&a| quantile_sorted(&sample, 1.0 - a))
                .collect())
        }
        CriticalMethod::SimulatedSigmaC { reps, seed } => {
            let mut sample = simulate_max_gaussian(n, reps, seed, sigma_c, sided)?;
            sample.sort_by(f64::total_cmp);
            Ok(alphas
                .iter()
                .map(|&a| quantile_sorted(&sample, 1.0 - a))
                .collect())
        }
    }
}

pub fn critical_value(
    n: usize,
    alpha: f64,
    sided: Sidedness,
    method: CriticalMethod,
    sigma_c: Option<&[SigmaC]>,
) -> Result<f64> {
    critical_values(n, &[alpha], sided, method, sigma_c).map(|v| v[0])
}

/// Inverse empirical CDF: smallest order statistic with cumulative
/// frequency at least `p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Draws `reps` realizations of the maximum of `n` standard normals
/// (absolute values when two-sided). With `sigma_c`, the normals are
/// correlated within each block and independent across blocks; the block
/// dimensions must add up to `n`.
///
/// Replications are split into fixed-size chunks seeded from
/// `(seed, chunk index)`, so the output does not depend on thread count.
pub fn simulate_max_gaussian(
    n: usize,
    reps: usize,
    seed: u64,
    sigma_c: Option<&[SigmaC]>,
    sided: Sidedness,
) -> Result<Vec<f64>> {
    if reps == 0 {
        return Err(Error::InvalidConfig("reps must be at least 1".into()));
    }
    if n == 0 {
        return Err(Error::InvalidConfig(
            "number of comparisons must be at least 1".into(),
        ));
    }
    let factors = match sigma_c {
        Some(blocks) => {
            let dim: usize = blocks.iter().map(SigmaC::dim).sum();
            if dim != n {
                return Err(Error::InvalidConfig(format!(
                    "covariance blocks cover {dim} comparisons, expected {n}"
                )));
            }
            let mut out = Vec::with_capacity(blocks.len());
            for b in blocks {
                let f = b.sqrt_factor(PSD_TOL)?;
                let k = f.nrows();
                let rows: Vec<f64> = (0..k)
                    .flat_map(|i| (0..k).map(move |j| (i, j)))
                    .map(|(i, j)| f[(i, j)])
                    .collect();
                out.push((k, rows));
            }
            Some(out)
        }
        None => None,
    };

    let n_chunks = reps.div_ceil(CHUNK);
    let chunks: Vec<Vec<f64>> = (0..n_chunks)
        .into_par_iter()
        .map(|ci| {
            let len = CHUNK.min(reps - ci * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, ci as u64));
            let mut out = Vec::with_capacity(len);
            let mut g = Vec::new();
            for _ in 0..len {
                let mut m = f64::NEG_INFINITY;
                match &factors {
                    None => {
                        for _ in 0..n {
                            let z: f64 = rng.sample(StandardNormal);
                            m = m.max(sided.fold(z));
                        }
                    }
                    Some(blocks) => {
                        for (k, rows) in blocks {
                            g.clear();
                            g.extend((0..*k).map(|_| rng.sample::<f64, _>(StandardNormal)));
                            for i in 0..*k {
                                let z: f64 =
                                    rows[i * k..(i + 1) * k].iter().zip(&g).map(|(a, b)| a * b).sum();
                                m = m.max(sided.fold(z));
                            }
                        }
                    }
                }
                out.push(m);
            }
            out
        })
        .collect();
    Ok(chunks.concat())
}
