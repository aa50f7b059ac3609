//! MSE-type plugin bandwidths for the jump estimator.
//!
//! The selector balances the squared leading bias of the one-sided local
//! linear difference against its variance:
//!
//! ```text
//! b = C(K) [ (s_+^2 + s_-^2) / (f(c) D^2) ]^{1/5} T^{-1/5},
//! C(K) = (V_K / B_K^2)^{1/5}
//! ```
//!
//! where `D` is the difference of one-sided second derivatives at `c`,
//! `B_K` and `V_K` are the boundary bias and variance constants of the
//! kernel. Side variances and curvatures come from global quartic fits on
//! each side; `f(c)` is a Gaussian kernel density estimate with Silverman's
//! rule. `D^2` is floored at `(0.1 sd(y) / range^2)^2`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::Kernel;

pub const DEFAULT_BOUNDS: (f64, f64) = (0.02, 0.5);
const MIN_OBS: usize = 20;
const MIN_OBS_PER_SIDE: usize = 5;
const CURVATURE_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthMode {
    Fixed(f64),
    Plugin,
    PooledPlugin,
}

/// Bandwidth selection rule. `bounds` are fractions of each unit's x-range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthPolicy {
    pub mode: BandwidthMode,
    pub bounds: (f64, f64),
}

impl BandwidthPolicy {
    pub fn fixed(b: f64) -> Self {
        BandwidthPolicy {
            mode: BandwidthMode::Fixed(b),
            bounds: DEFAULT_BOUNDS,
        }
    }

    pub fn plugin() -> Self {
        BandwidthPolicy {
            mode: BandwidthMode::Plugin,
            bounds: DEFAULT_BOUNDS,
        }
    }

    pub fn pooled() -> Self {
        BandwidthPolicy {
            mode: BandwidthMode::PooledPlugin,
            bounds: DEFAULT_BOUNDS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidConfig(format!("bad bandwidth bounds [{lo}, {hi}]")));
        }
        if let BandwidthMode::Fixed(b) = self.mode {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "fixed bandwidth must be positive, got {b}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for BandwidthPolicy {
    fn default() -> Self {
        Self::plugin()
    }
}

impl fmt::Display for BandwidthPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            BandwidthMode::Fixed(b) => write!(f, "fixed:{b}"),
            BandwidthMode::Plugin => f.write_str("auto"),
            BandwidthMode::PooledPlugin => f.write_str("pooled"),
        }
    }
}

impl FromStr for BandwidthPolicy {
    type Err = Error;

    /// `auto`, `pooled` or `fixed:<value>`.
    fn from_str(s: &str) -> Result<Self> {
        let p = match s {
            "auto" | "plugin" => Self::plugin(),
            "pooled" => Self::pooled(),
            _ => match s.strip_prefix("fixed:") {
                Some(v) => Self::fixed(
                    v.trim()
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("cannot parse bandwidth `{v}`")))?,
                ),
                None => return Err(Error::InvalidConfig(format!("unknown bandwidth policy `{s}`"))),
            },
        };
        p.validate()?;
        Ok(p)
    }
}

/// `(V_K / B_K^2)^{1/5}` for one-sided local linear estimation at a boundary.
pub fn boundary_constant(kernel: Kernel) -> f64 {
    let [k0, k1, k2, k3] = kernel.upper_moments::<4>();
    let den = k0 * k2 - k1 * k1;
    let bias = (k2 * k2 - k1 * k3) / den;
    // Simpson on [0, 1]; the integrand is a polynomial of degree <= 6.
    let n = 600;
    let h = 1.0 / n as f64;
    let g = |u: f64| {
        let k = kernel.eval(u);
        let a = k2 - u * k1;
        a * a * k * k
    };
    let mut acc = g(0.0) + g(1.0);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * h);
    }
    let var = acc * h / 3.0 / (den * den);
    (var / (bias * bias)).powf(0.2)
}

/// Plugin bandwidth for a jump at `c`, clamped to `bounds` (fractions of
/// the x-range).
pub fn plugin_bandwidth(y: &[f64], x: &[f64], c: f64, kernel: Kernel, bounds: (f64, f64)) -> Result<f64> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::InvalidConfig("y and x lengths differ".into()));
    }
    let n_plus = x.iter().filter(|&&v| v >= c).count();
    let n_minus = n - n_plus;
    if n < MIN_OBS || n_plus < MIN_OBS_PER_SIDE || n_minus < MIN_OBS_PER_SIDE {
        return Err(Error::TooFewObservations(format!(
            "{n} observations ({n_minus} below, {n_plus} above c = {c}); need {MIN_OBS} with {MIN_OBS_PER_SIDE} per side"
        )));
    }
    let (xmin, xmax) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    let range = xmax - xmin;
    if !(range > 0.0) {
        return Err(Error::TooFewObservations("covariate has no spread".into()));
    }
    let (lo, hi) = (bounds.0 * range, bounds.1 * range);

    let plus = quartic_fit(y, x, c, range, true)?;
    let minus = quartic_fit(y, x, c, range, false)?;
    let density = density_at(x, c);
    let sd_y = std_dev(y);

    let diff = plus.curvature - minus.curvature;
    let floor = CURVATURE_FLOOR * sd_y / (range * range);
    let curv_sq = (diff * diff).max(floor * floor);
    let ratio = (plus.resid_var + minus.resid_var) / (density * curv_sq);
    let b = boundary_constant(kernel) * ratio.powf(0.2) * (n as f64).powf(-0.2);
    // zero density or zero curvature and variance: take the widest window
    Ok(if b.is_finite() { b.clamp(lo, hi) } else { hi })
}

/// Geometric mean of per-unit bandwidths.
pub fn pooled_bandwidth(per_unit: &[f64]) -> Result<f64> {
    if per_unit.is_empty() {
        return Err(Error::InvalidConfig("no bandwidths to pool".into()));
    }
    if per_unit.iter().any(|b| !(*b > 0.0)) {
        return Err(Error::InvalidConfig("bandwidths must be positive".into()));
    }
    let mean_log = per_unit.iter().map(|b| b.ln()).sum::<f64>() / per_unit.len() as f64;
    Ok(mean_log.exp())
}

/// Clamp `b` to a unit's admissible interval.
pub fn clamp_to_unit(b: f64, x: &[f64], bounds: (f64, f64)) -> f64 {
    let (xmin, xmax) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
        (a.min(v), b.max(v))
    });
    let range = xmax - xmin;
    if range > 0.0 {
        b.clamp(bounds.0 * range, bounds.1 * range)
    } else {
        b
    }
}

struct SideFit {
    curvature: f64,
    resid_var: f64,
}

fn quartic_fit(y: &[f64], x: &[f64], c: f64, range: f64, plus: bool) -> Result<SideFit> {
    let mut xtx = DMatrix::<f64>::zeros(5, 5);
    let mut xty = DVector::<f64>::zeros(5);
    let mut rows = Vec::new();
    for (&yt, &xt) in y.iter().zip(x) {
        if (xt >= c) != plus {
            continue;
        }
        let d = (xt - c) / range;
        let p = [1.0, d, d * d, d * d * d, d * d * d * d];
        for i in 0..5 {
            xty[i] += p[i] * yt;
            for j in 0..5 {
                xtx[(i, j)] += p[i] * p[j];
            }
        }
        rows.push((p, yt));
    }
    let beta = xtx
        .svd(true, true)
        .solve(&xty, 1e-14)
        .map_err(|e| Error::TooFewObservations(format!("quartic fit failed: {e}")))?;
    let rss: f64 = rows
        .iter()
        .map(|(p, yt)| {
            let fit: f64 = p.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            (yt - fit) * (yt - fit)
        })
        .sum();
    let dof = rows.len().saturating_sub(5).max(1) as f64;
    Ok(SideFit {
        curvature: 2.0 * beta[2] / (range * range),
        resid_var: rss / dof,
    })
}

fn density_at(x: &[f64], c: f64) -> f64 {
    let n = x.len() as f64;
    let sd = std_dev(x);
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * n.powf(-0.2);
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    norm * x
        .iter()
        .map(|&v| (-0.5 * ((v - c) / h).powi(2)).exp())
        .sum::<f64>()
}

fn quantile_sorted(s: &[f64], p: f64) -> f64 {
    let pos = p * (s.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < s.len() {
        s[i] + frac * (s[i + 1] - s[i])
    } else {
        s[i]
    }
}

pub(crate) fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / n).sqrt()
}
