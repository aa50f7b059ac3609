//! Per-unit one-sided local linear fits and jump estimates.

use crate::error::{Error, Result};
use crate::kernel::{checked_side_sums, local_weights, Kernel, Side};

/// Per-unit estimate bundle at a single threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitJumpFit {
    pub unit_id: String,
    pub c: f64,
    pub b: f64,
    /// Always `mu_plus - mu_minus`.
    pub gamma_hat: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub slope_plus: f64,
    pub slope_minus: f64,
    /// Standardization scale of `(T b)^{1/2} gamma_hat`; filled in once the
    /// error variance is known.
    pub v_hat: Option<f64>,
    pub eff_obs_plus: usize,
    pub eff_obs_minus: usize,
    pub n_obs: usize,
}

impl UnitJumpFit {
    pub fn eff_obs(&self) -> usize {
        self.eff_obs_plus + self.eff_obs_minus
    }

    /// `(T_j b_j)^{1/2}`.
    pub fn root_tb(&self) -> f64 {
        (self.n_obs as f64 * self.b).sqrt()
    }

    /// `(T_j b_j)^{1/2} gamma_hat / v_hat`, when `v_hat` is set.
    pub fn standardized(&self) -> Option<f64> {
        self.v_hat.map(|v| self.root_tb() * self.gamma_hat / v)
    }

    /// `(T_j b_j)^{-1/2} v_hat`, the standard error of `gamma_hat`.
    pub fn std_err(&self) -> Option<f64> {
        self.v_hat.map(|v| v / self.root_tb())
    }
}

/// Both one-sided weight vectors at one threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpWeights {
    pub c: f64,
    pub b: f64,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

impl JumpWeights {
    pub fn new(x: &[f64], c: f64, b: f64, kernel: Kernel) -> Result<Self> {
        Ok(JumpWeights {
            c,
            b,
            plus: local_weights(x, c, b, kernel, Side::Plus)?,
            minus: local_weights(x, c, b, kernel, Side::Minus)?,
        })
    }

    /// `w^+ - w^-`, the weights of the jump estimate.
    pub fn combined(&self) -> Vec<f64> {
        self.plus.iter().zip(&self.minus).map(|(p, m)| p - m).collect()
    }

    /// `sum_t (w_t^+ - w_t^-)^2`.
    pub fn sum_sq_combined(&self) -> f64 {
        self.plus
            .iter()
            .zip(&self.minus)
            .map(|(p, m)| (p - m) * (p - m))
            .sum()
    }

    pub fn mu_plus(&self, y: &[f64]) -> f64 {
        dot(&self.plus, y)
    }

    pub fn mu_minus(&self, y: &[f64]) -> f64 {
        dot(&self.minus, y)
    }

    pub fn gamma(&self, y: &[f64]) -> f64 {
        self.mu_plus(y) - self.mu_minus(y)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Weighted least squares line on one side of `c`. Returns the fitted
/// value at `c` and the slope, solved from the centred 2x2 normal equations.
pub fn fit_one_sided(y: &[f64], x: &[f64], c: f64, b: f64, kernel: Kernel, side: Side) -> Result<(f64, f64)> {
    check_lengths(y, x)?;
    let sums = checked_side_sums(x, c, b, kernel, side)?;
    let [s0, s1, s2] = sums.s;
    let (mut t0, mut t1) = (0.0, 0.0);
    for (&yt, &xt) in y.iter().zip(x) {
        if !side.contains(xt, c) {
            continue;
        }
        let d = xt - c;
        let k = kernel.eval(d / b);
        if k > 0.0 {
            t0 += k * yt;
            t1 += k * d * yt;
        }
    }
    let den = sums.denominator();
    Ok(((s2 * t0 - s1 * t1) / den, (s0 * t1 - s1 * t0) / den))
}

/// Jump estimate `mu(c+) - mu(c-)` from one-sided local linear fits.
/// `v_hat` is left unset.
pub fn estimate_jump(
    unit_id: &str,
    y: &[f64],
    x: &[f64],
    c: f64,
    b: f64,
    kernel: Kernel,
) -> Result<UnitJumpFit> {
    check_lengths(y, x)?;
    let weights = JumpWeights::new(x, c, b, kernel)?;
    Ok(fit_from_weights(unit_id, y, x, &weights, kernel))
}

pub(crate) fn fit_from_weights(
    unit_id: &str,
    y: &[f64],
    x: &[f64],
    weights: &JumpWeights,
    kernel: Kernel,
) -> UnitJumpFit {
    let mu_plus = weights.mu_plus(y);
    let mu_minus = weights.mu_minus(y);
    let slope = |side| {
        fit_one_sided(y, x, weights.c, weights.b, kernel, side)
            .map(|(_, s)| s)
            .unwrap_or(f64::NAN)
    };
    UnitJumpFit {
        unit_id: unit_id.to_string(),
        c: weights.c,
        b: weights.b,
        gamma_hat: mu_plus - mu_minus,
        mu_plus,
        mu_minus,
        slope_plus: slope(Side::Plus),
        slope_minus: slope(Side::Minus),
        v_hat: None,
        eff_obs_plus: effective_obs(&weights.plus),
        eff_obs_minus: effective_obs(&weights.minus),
        n_obs: y.len(),
    }
}

/// Number of strictly nonzero weights.
pub fn effective_obs(weights: &[f64]) -> usize {
    weights.iter().filter(|w| **w != 0.0).count()
}

/// Residuals from a two-sided local linear smoother evaluated at every
/// sample point. With `jump_removal = Some((c, gamma))` the outcome is first
/// adjusted to `y - gamma 1{x >= c}`. Points whose local design is
/// degenerate yield `None`.
pub fn smooth_residuals(
    y: &[f64],
    x: &[f64],
    b_pilot: f64,
    kernel: Kernel,
    jump_removal: Option<(f64, f64)>,
) -> Result<Vec<Option<f64>>> {
    smooth_residuals_floored(y, x, b_pilot, kernel, jump_removal, 0)
}

/// As [`smooth_residuals`], but the bandwidth at each point is widened when
/// needed so that its window holds at least `min_points` observations
/// (counting the point itself).
pub fn smooth_residuals_floored(
    y: &[f64],
    x: &[f64],
    b_pilot: f64,
    kernel: Kernel,
    jump_removal: Option<(f64, f64)>,
    min_points: usize,
) -> Result<Vec<Option<f64>>> {
    pilot_residuals(y, x, b_pilot, kernel, jump_removal, min_points, false)
}

/// As [`smooth_residuals_floored`], with each residual divided by
/// `(1 - 2 l_tt + sum_s l_ts^2)^{1/2}`, where `l_t` are the smoother weights
/// at `x_t`. For homoskedastic noise the squared residuals are then unbiased
/// for the error variance.
pub fn smooth_residuals_adjusted(
    y: &[f64],
    x: &[f64],
    b_pilot: f64,
    kernel: Kernel,
    jump_removal: Option<(f64, f64)>,
    min_points: usize,
) -> Result<Vec<Option<f64>>> {
    pilot_residuals(y, x, b_pilot, kernel, jump_removal, min_points, true)
}

fn pilot_residuals(
    y: &[f64],
    x: &[f64],
    b_pilot: f64,
    kernel: Kernel,
    jump_removal: Option<(f64, f64)>,
    min_points: usize,
    adjust: bool,
) -> Result<Vec<Option<f64>>> {
    check_lengths(y, x)?;
    if !(b_pilot > 0.0) || !b_pilot.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "pilot bandwidth must be positive, got {b_pilot}"
        )));
    }
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let xs: Vec<f64> = order.iter().map(|&i| x[i]).collect();
    let ys: Vec<f64> = order
        .iter()
        .map(|&i| match jump_removal {
            Some((c, g)) if x[i] >= c => y[i] - g,
            _ => y[i],
        })
        .collect();

    let mut resid = vec![None; n];
    let mut any = false;
    for (pos, &orig) in order.iter().enumerate() {
        let x0 = xs[pos];
        let h = if min_points > 1 {
            b_pilot.max(knn_radius(&xs, pos, min_points))
        } else {
            b_pilot
        };
        let lo = xs.partition_point(|&v| v < x0 - h);
        let hi = xs.partition_point(|&v| v <= x0 + h);
        if let Some((fit, shrink)) = local_linear_at(&xs[lo..hi], &ys[lo..hi], x0, h, kernel) {
            let e = ys[pos] - fit;
            resid[orig] = match adjust {
                false => Some(e),
                true if shrink > 1e-8 => Some(e / shrink.sqrt()),
                true => None,
            };
            any = true;
        }
    }
    if !any {
        return Err(Error::DegenerateEverywhere);
    }
    Ok(resid)
}

/// Distance from `xs[pos]` to its `m`-th nearest point in the sorted slice,
/// the point itself counting as the first.
fn knn_radius(xs: &[f64], pos: usize, m: usize) -> f64 {
    let x0 = xs[pos];
    let (mut lo, mut hi) = (pos, pos + 1);
    let mut radius: f64 = 0.0;
    let mut count = 1;
    while count < m && (lo > 0 || hi < xs.len()) {
        let left = if lo > 0 { x0 - xs[lo - 1] } else { f64::INFINITY };
        let right = if hi < xs.len() { xs[hi] - x0 } else { f64::INFINITY };
        if left <= right {
            lo -= 1;
            radius = radius.max(left);
        } else {
            hi += 1;
            radius = radius.max(right);
        }
        count += 1;
    }
    radius
}

/// Local linear fit at `x0` together with the residual shrinkage factor
/// `1 - 2 l_0 + sum_s l_s^2` of the observation located at `x0`.
fn local_linear_at(xs: &[f64], ys: &[f64], x0: f64, h: f64, kernel: Kernel) -> Option<(f64, f64)> {
    let (mut s0, mut s1, mut s2, mut t0, mut t1) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (&xt, &yt) in xs.iter().zip(ys) {
        let d = xt - x0;
        let k = kernel.eval(d / h);
        if k > 0.0 {
            s0 += k;
            s1 += k * d;
            s2 += k * d * d;
            t0 += k * yt;
            t1 += k * d * yt;
            lo = lo.min(xt);
            hi = hi.max(xt);
        }
    }
    let den = s0 * s2 - s1 * s1;
    if !(lo < hi) || den <= 1e-12 * s0 * s2 {
        return None;
    }
    let ss: f64 = xs
        .iter()
        .map(|&xt| {
            let d = xt - x0;
            let l = kernel.eval(d / h) * (s2 - d * s1) / den;
            l * l
        })
        .sum();
    let own = kernel.eval(0.0) * s2 / den;
    Some(((s2 * t0 - s1 * t1) / den, 1.0 - 2.0 * own + ss))
}

fn check_lengths(y: &[f64], x: &[f64]) -> Result<()> {
    if y.len() != x.len() {
        return Err(Error::InvalidConfig(format!(
            "y has {} values but x has {}",
            y.len(),
            x.len()
        )));
    }
    Ok(())
}
