//! Error-variance estimates near a threshold and the standardization scales
//! built from them.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Median of a chi-square(1) variable; converts a median of squared
/// residuals into a variance scale.
const CHI2_1_MEDIAN: f64 = 0.454_936_423_119_572_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    pub sigma_e_sq: f64,
    /// Residuals actually averaged (missing residuals are not counted).
    pub n_window: usize,
    pub truncation_level: Option<f64>,
}

/// Mean of squared residuals over `|x - c| <= b`.
pub fn sigma_e_sq_known(resid: &[Option<f64>], x: &[f64], c: f64, b: f64) -> Result<VarianceEstimate> {
    window_mean(resid, x, c, b, |e2| e2).map(|(s, n)| VarianceEstimate {
        sigma_e_sq: s,
        n_window: n,
        truncation_level: None,
    })
}

/// Mean of `min(a, e^2)` over `|x - c| <= b`. A level of `+inf` disables
/// the clipping.
pub fn sigma_e_sq_truncated(
    resid: &[Option<f64>],
    x: &[f64],
    c: f64,
    b: f64,
    level: f64,
) -> Result<VarianceEstimate> {
    if !(level >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "truncation level must be nonnegative, got {level}"
        )));
    }
    window_mean(resid, x, c, b, |e2| e2.min(level)).map(|(s, n)| VarianceEstimate {
        sigma_e_sq: s,
        n_window: n,
        truncation_level: Some(level),
    })
}

fn window_mean(
    resid: &[Option<f64>],
    x: &[f64],
    c: f64,
    b: f64,
    phi: impl Fn(f64) -> f64,
) -> Result<(f64, usize)> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for (e, &xt) in resid.iter().zip(x) {
        if let Some(e) = e {
            if (xt - c).abs() <= b {
                acc += phi(e * e);
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::EmptyWindow {
            threshold: c,
            bandwidth: b,
        });
    }
    Ok((acc / n as f64, n))
}

/// `T b sum_t (w_t^+ - w_t^-)^2 sigma_e^2`.
pub fn v_sq(w_plus: &[f64], w_minus: &[f64], sigma_e_sq: f64, t: usize, b: f64) -> f64 {
    let ss: f64 = w_plus.iter().zip(w_minus).map(|(p, m)| (p - m) * (p - m)).sum();
    t as f64 * b * ss * sigma_e_sq
}

/// Variance of the centred statistic of unit `j`:
/// `(1 - 1/N)^2 v_j^2 + sum_{i != j} v_i^2 / N^2`.
pub fn v_tilde_sq(v_sqs: &[f64], j: usize) -> Result<f64> {
    let n = v_sqs.len();
    if n < 2 {
        return Err(Error::SingleUnit);
    }
    if j >= n {
        return Err(Error::InvalidConfig(format!(
            "unit index {j} out of range for {n} units"
        )));
    }
    let nf = n as f64;
    let others: f64 = v_sqs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != j)
        .map(|(_, v)| v)
        .sum();
    let lead = 1.0 - 1.0 / nf;
    Ok(lead * lead * v_sqs[j] + others / (nf * nf))
}

/// Default truncation level for squared residuals of one unit:
/// `s^2 max(9, 3 log^{1/2}(N K))` with `s^2` the median-based robust variance.
pub fn default_truncation_level(resid: &[Option<f64>], n_units: usize, n_grid: usize) -> f64 {
    let mut sq: Vec<f64> = resid.iter().flatten().map(|e| e * e).collect();
    if sq.is_empty() {
        return f64::INFINITY;
    }
    let scale = median_in_place(&mut sq) / CHI2_1_MEDIAN;
    let nk = (n_units.max(1) * n_grid.max(1)) as f64;
    scale * 9f64.max(3.0 * nk.ln().max(0.0).sqrt())
}

pub(crate) fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    assert!(n > 0, "median of empty slice");
    let mid = n / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Correlation matrix of one unit's standardized grid statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaC {
    dim: usize,
    entries: Vec<f64>,
}

impl SigmaC {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        SigmaC { dim, entries }
    }

    /// Builds the matrix from combined weight vectors `w(c_i) = w^+(c_i) - w^-(c_i)`
    /// and per-grid-point error variances. The variance of a pair is taken as
    /// the geometric mean of the two, so `T b` and the variances cancel
    /// against the normalization.
    pub fn from_weights(weights: &[Vec<f64>], sigma_e_sq: &[f64]) -> Result<Self> {
        let k = weights.len();
        if sigma_e_sq.len() != k {
            return Err(Error::InvalidConfig(
                "one variance per grid point required".into(),
            ));
        }
        let norms: Vec<f64> = weights
            .iter()
            .map(|w| w.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let mut m = SigmaC::identity(k);
        for i in 0..k {
            for j in (i + 1)..k {
                let cross: f64 = weights[i].iter().zip(&weights[j]).map(|(a, b)| a * b).sum();
                let r = if cross == 0.0 {
                    0.0
                } else {
                    (cross / (norms[i] * norms[j])).clamp(-1.0, 1.0)
                };
                m.entries[i * k + j] = r;
                m.entries[j * k + i] = r;
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        SymmetricEigen::new(self.to_matrix())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Symmetric square root `V diag(sqrt(max(l, 0))) V^T`; fails when an
    /// eigenvalue is below `-tol`.
    pub fn sqrt_factor(&self, tol: f64) -> Result<DMatrix<f64>> {
        let eig = SymmetricEigen::new(self.to_matrix());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -tol {
            return Err(Error::NotPositiveSemidefinite(min));
        }
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
        Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
    }
}

/// Grid correlation matrix for one unit: weights are recomputed at every
/// grid point with bandwidth `b`.
pub fn sigma_c_matrix(
    x: &[f64],
    grid: &[f64],
    b: f64,
    kernel: crate::kernel::Kernel,
    sigma_e_sq: &[f64],
) -> Result<SigmaC> {
    let weights = grid
        .iter()
        .map(|&c| crate::estimator::JumpWeights::new(x, c, b, kernel).map(|w| w.combined()))
        .collect::<Result<Vec<_>>>()?;
    SigmaC::from_weights(&weights, sigma_e_sq)
}
