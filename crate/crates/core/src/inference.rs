//! Max-type statistics for existence and homogeneity of jumps, the per-unit
//! pipelines that feed them, and the grid search for unknown thresholds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::bandwidth::{clamp_to_unit, plugin_bandwidth, pooled_bandwidth, BandwidthMode, BandwidthPolicy};
use crate::critical::{critical_values, CriticalMethod, Sidedness};
use crate::error::{Error, Result};
use crate::estimator::{fit_from_weights, smooth_residuals_adjusted, JumpWeights, UnitJumpFit};
use crate::kernel::Kernel;
use crate::panel::{PanelData, Unit};
use crate::variance::{
    default_truncation_level, median_in_place, sigma_e_sq_known, sigma_e_sq_truncated, v_sq, v_tilde_sq,
    SigmaC, VarianceEstimate,
};

/// Relative floor applied to standardization scales.
const V_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Center {
    #[default]
    Mean,
    Median,
}

impl Center {
    pub fn name(self) -> &'static str {
        match self {
            Center::Mean => "mean",
            Center::Median => "median",
        }
    }

    pub fn apply(self, values: &[f64]) -> f64 {
        match self {
            Center::Mean => values.iter().sum::<f64>() / values.len() as f64,
            Center::Median => median_in_place(&mut values.to_vec()),
        }
    }
}

impl fmt::Display for Center {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Center {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Center::Mean),
            "median" => Ok(Center::Median),
            _ => Err(Error::InvalidConfig(format!("unknown center `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestKind {
    Existence,
    Homogeneity,
    ExistenceUnknownThreshold,
}

impl TestKind {
    pub fn name(self) -> &'static str {
        match self {
            TestKind::Existence => "existence",
            TestKind::Homogeneity => "homogeneity",
            TestKind::ExistenceUnknownThreshold => "existence_unknown_threshold",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Known threshold locations.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdSpec {
    Common(f64),
    PerUnit(BTreeMap<String, f64>),
}

impl ThresholdSpec {
    pub fn for_unit(&self, id: &str) -> Option<f64> {
        match self {
            ThresholdSpec::Common(c) => Some(*c),
            ThresholdSpec::PerUnit(m) => m.get(id).copied(),
        }
    }
}

impl Default for ThresholdSpec {
    fn default() -> Self {
        ThresholdSpec::Common(0.0)
    }
}

/// Clipping of squared residuals in the grid-search variance.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Truncation {
    /// Level from the robust residual scale of each unit.
    #[default]
    Auto,
    Level(f64),
    Off,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    pub kernel: Kernel,
    pub bandwidth: BandwidthPolicy,
    pub sidedness: Sidedness,
    /// Centering of the homogeneity statistic.
    pub center: Center,
    pub alphas: Vec<f64>,
    pub critical: CriticalMethod,
    pub threshold: ThresholdSpec,
    /// Residuals for known thresholds are smoothed with `b T^{-e}`, `e` this value.
    pub known_pilot_exponent: f64,
    /// Residuals for the threshold search are smoothed with `b T^{-e}`.
    pub pilot_exponent: f64,
    /// Minimum observations in each pilot smoothing window.
    pub pilot_min_points: usize,
    pub truncation: Truncation,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            kernel: Kernel::default(),
            bandwidth: BandwidthPolicy::default(),
            sidedness: Sidedness::TwoSided,
            center: Center::Mean,
            alphas: vec![0.10, 0.05, 0.01],
            critical: CriticalMethod::Analytic,
            threshold: ThresholdSpec::default(),
            known_pilot_exponent: 0.0,
            pilot_exponent: 0.1,
            pilot_min_points: 10,
            truncation: Truncation::Auto,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        self.bandwidth.validate()?;
        if self.alphas.is_empty() {
            return Err(Error::InvalidConfig("at least one alpha is required".into()));
        }
        if let Some(&a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidAlpha(a));
        }
        let exps = [self.pilot_exponent, self.known_pilot_exponent];
        if exps.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return Err(Error::InvalidConfig("pilot exponent must be nonnegative".into()));
        }
        if let Truncation::Level(a) = self.truncation {
            if !(a > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "truncation level must be positive, got {a}"
                )));
            }
        }
        match self.critical {
            CriticalMethod::Simulated { reps, .. } | CriticalMethod::SimulatedSigmaC { reps, .. }
                if reps == 0 =>
            {
                Err(Error::InvalidConfig("simulation reps must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedUnit {
    pub unit_id: String,
    pub reason: String,
}

/// One row of a report: a unit's estimate and its standardized statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitStat {
    pub unit_id: String,
    pub threshold: f64,
    pub bandwidth: f64,
    pub gamma_hat: f64,
    /// The standardized quantity: `gamma_hat` itself, or its deviation from
    /// the cross-unit center for homogeneity.
    pub deviation: f64,
    /// `v_hat`, or the centred scale for homogeneity.
    pub scale: f64,
    /// `(T_j b_j)^{-1/2}` times `scale`.
    pub std_err: f64,
    /// Signed standardized statistic.
    pub stat: f64,
    pub n_obs: usize,
    pub eff_obs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub alphas: Vec<f64>,
    pub critical_values: Vec<f64>,
    pub reject: Vec<bool>,
    pub per_unit: Vec<UnitStat>,
    pub skipped: Vec<SkippedUnit>,
    pub sidedness: Sidedness,
    pub center: Option<Center>,
    /// Number of statistics entering the maximum.
    pub n_comparisons: usize,
    pub warnings: Vec<String>,
}

impl TestResult {
    pub fn n_effective(&self) -> usize {
        self.per_unit.len()
    }

    fn index_of(&self, alpha: f64) -> Option<usize> {
        self.alphas.iter().position(|a| (a - alpha).abs() < 1e-12)
    }

    pub fn critical_value(&self, alpha: f64) -> Option<f64> {
        self.index_of(alpha).map(|i| self.critical_values[i])
    }

    pub fn rejects(&self, alpha: f64) -> Option<bool> {
        self.index_of(alpha).map(|i| self.reject[i])
    }
}

/// Standardized statistics `(T_j b_j)^{1/2} gamma_j / v_j`.
pub fn standardized_stats(fits: &[UnitJumpFit]) -> Result<Vec<f64>> {
    fits.iter()
        .map(|f| match f.v_hat {
            Some(v) if v > 0.0 && v.is_finite() => Ok(f.root_tb() * f.gamma_hat / v),
            _ => Err(Error::ZeroVariance(f.unit_id.clone())),
        })
        .collect()
}

fn fold_max(stats: impl IntoIterator<Item = f64>, sided: Sidedness) -> Option<f64> {
    stats.into_iter().map(|z| sided.fold(z)).reduce(f64::max)
}

pub fn stat_existence(fits: &[UnitJumpFit], sided: Sidedness) -> Result<f64> {
    let z = standardized_stats(fits)?;
    fold_max(z, sided).ok_or_else(|| Error::AllUnitsSkipped("no unit statistics".into()))
}

/// Per-unit centred quantities of the homogeneity statistic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteredStat {
    pub deviation: f64,
    pub v_tilde: f64,
    pub stat: f64,
}

pub fn centered_stats(fits: &[UnitJumpFit], center: Center) -> Result<Vec<CenteredStat>> {
    if fits.len() < 2 {
        return Err(Error::SingleUnit);
    }
    // validates every v_hat
    standardized_stats(fits)?;
    let gammas: Vec<f64> = fits.iter().map(|f| f.gamma_hat).collect();
    let v_sqs: Vec<f64> = fits.iter().map(|f| f.v_hat.map_or(0.0, |v| v * v)).collect();
    let mid = center.apply(&gammas);
    fits.iter()
        .enumerate()
        .map(|(j, f)| {
            let v_tilde = v_tilde_sq(&v_sqs, j)?.sqrt();
            let deviation = f.gamma_hat - mid;
            Ok(CenteredStat {
                deviation,
                v_tilde,
                stat: f.root_tb() * deviation / v_tilde,
            })
        })
        .collect()
}

pub fn stat_homogeneity(fits: &[UnitJumpFit], center: Center, sided: Sidedness) -> Result<f64> {
    let c = centered_stats(fits, center)?;
    Ok(fold_max(c.iter().map(|s| s.stat), sided).unwrap_or(0.0))
}

fn y_scale(y: &[f64]) -> f64 {
    let m = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn floored_scale(v_sq: f64, y: &[f64]) -> f64 {
    v_sq.max(0.0).sqrt().max(V_FLOOR * y_scale(y))
}

fn pilot_bandwidth(b: f64, t: usize, exponent: f64) -> f64 {
    b * (t as f64).powf(-exponent)
}

/// Resolves one bandwidth per unit at the given evaluation points.
fn resolve_bandwidths(units: &[Unit], at: &[Option<f64>], cfg: &TestConfig) -> Vec<Result<f64>> {
    let policy = &cfg.bandwidth;
    match policy.mode {
        BandwidthMode::Fixed(b) => units.iter().map(|_| Ok(b)).collect(),
        BandwidthMode::Plugin | BandwidthMode::PooledPlugin => {
            let own: Vec<Result<f64>> = units
                .par_iter()
                .zip(at.par_iter())
                .map(|(u, c)| match c {
                    Some(c) => plugin_bandwidth(&u.y, &u.x, *c, cfg.kernel, policy.bounds),
                    None => Err(Error::InvalidConfig(format!("no threshold for unit {}", u.id))),
                })
                .collect();
            if policy.mode == BandwidthMode::Plugin {
                return own;
            }
            let ok: Vec<f64> = own.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
            match pooled_bandwidth(&ok) {
                Ok(pooled) => units
                    .iter()
                    .zip(at)
                    .zip(own)
                    .map(|((u, c), r)| match (c, r) {
                        (None, r) => r,
                        (Some(_), _) => Ok(clamp_to_unit(pooled, &u.x, policy.bounds)),
                    })
                    .collect(),
                Err(_) => own,
            }
        }
    }
}

/// Error variance near a known threshold: residuals from a local linear
/// smoother of `y - gamma_hat 1{x >= c}`, averaged over `|x - c| <= b`.
pub fn known_error_variance(
    unit: &Unit,
    c: f64,
    b: f64,
    gamma_hat: f64,
    cfg: &TestConfig,
) -> Result<VarianceEstimate> {
    let resid = smooth_residuals_adjusted(
        &unit.y,
        &unit.x,
        pilot_bandwidth(b, unit.len(), cfg.known_pilot_exponent),
        cfg.kernel,
        Some((c, gamma_hat)),
        cfg.pilot_min_points,
    )?;
    sigma_e_sq_known(&resid, &unit.x, c, b)
}

/// Full known-threshold pipeline for one unit: weights, jump estimate,
/// error variance and `v_hat`.
pub fn fit_unit_known(unit: &Unit, c: f64, b: f64, cfg: &TestConfig) -> Result<UnitJumpFit> {
    let weights = JumpWeights::new(&unit.x, c, b, cfg.kernel)?;
    let mut fit = fit_from_weights(&unit.id, &unit.y, &unit.x, &weights, cfg.kernel);
    let sigma = known_error_variance(unit, c, b, fit.gamma_hat, cfg)?;
    let vsq = v_sq(&weights.plus, &weights.minus, sigma.sigma_e_sq, unit.len(), b);
    fit.v_hat = Some(floored_scale(vsq, &unit.y));
    Ok(fit)
}

/// Per-unit fits for every unit that admits one; the rest are reported
/// with the reason they were skipped.
pub fn fit_panel_known(panel: &PanelData, cfg: &TestConfig) -> Result<(Vec<UnitJumpFit>, Vec<SkippedUnit>)> {
    cfg.validate()?;
    let at: Vec<Option<f64>> = panel.iter().map(|u| cfg.threshold.for_unit(&u.id)).collect();
    let bws = resolve_bandwidths(&panel.units, &at, cfg);
    let outcomes: Vec<Result<UnitJumpFit>> = panel
        .units
        .par_iter()
        .zip(at.par_iter())
        .zip(bws.into_par_iter())
        .map(|((u, c), b)| {
            let c = c.ok_or_else(|| Error::InvalidConfig("no threshold given for this unit".into()))?;
            fit_unit_known(u, c, b?, cfg)
        })
        .collect();
    let mut fits = Vec::new();
    let mut skipped = Vec::new();
    for (u, r) in panel.iter().zip(outcomes) {
        match r {
            Ok(f) => fits.push(f),
            Err(e) => skipped.push(SkippedUnit {
                unit_id: u.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    Ok((fits, skipped))
}

fn decide(
    kind: TestKind,
    statistic: f64,
    n: usize,
    cfg: &TestConfig,
    sigma_c: Option<&[SigmaC]>,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let method = match (kind, cfg.critical) {
        (TestKind::ExistenceUnknownThreshold, m) => m,
        (_, CriticalMethod::SimulatedSigmaC { reps, seed }) => CriticalMethod::Simulated { reps, seed },
        (_, m) => m,
    };
    let q = critical_values(n, &cfg.alphas, cfg.sidedness, method, sigma_c)?;
    let reject = q.iter().map(|q| statistic > *q).collect();
    Ok((q, reject))
}

fn all_skipped(skipped: &[SkippedUnit]) -> Error {
    let detail = skipped
        .iter()
        .take(3)
        .map(|s| format!("{}: {}", s.unit_id, s.reason))
        .collect::<Vec<_>>()
        .join("; ");
    Error::AllUnitsSkipped(detail)
}

/// Existence of jumps at known thresholds.
pub fn test_existence(panel: &PanelData, cfg: &TestConfig) -> Result<TestResult> {
    let (fits, skipped) = fit_panel_known(panel, cfg)?;
    if fits.is_empty() {
        return Err(all_skipped(&skipped));
    }
    let z = standardized_stats(&fits)?;
    let statistic = fold_max(z.iter().copied(), cfg.sidedness).unwrap_or(0.0);
    let (critical_values, reject) = decide(TestKind::Existence, statistic, fits.len(), cfg, None)?;
    let per_unit = fits
        .iter()
        .zip(&z)
        .map(|(f, &stat)| {
            let v = f.v_hat.unwrap_or(f64::NAN);
            UnitStat {
                unit_id: f.unit_id.clone(),
                threshold: f.c,
                bandwidth: f.b,
                gamma_hat: f.gamma_hat,
                deviation: f.gamma_hat,
                scale: v,
                std_err: v / f.root_tb(),
                stat,
                n_obs: f.n_obs,
                eff_obs: f.eff_obs(),
            }
        })
        .collect();
    Ok(TestResult {
        kind: TestKind::Existence,
        statistic,
        alphas: cfg.alphas.clone(),
        critical_values,
        reject,
        per_unit,
        skipped,
        sidedness: cfg.sidedness,
        center: None,
        n_comparisons: fits.len(),
        warnings: Vec::new(),
    })
}

/// Homogeneity of jump sizes across units at known thresholds.
pub fn test_homogeneity(panel: &PanelData, cfg: &TestConfig) -> Result<TestResult> {
    let (fits, skipped) = fit_panel_known(panel, cfg)?;
    if fits.is_empty() {
        return Err(all_skipped(&skipped));
    }
    let cs = centered_stats(&fits, cfg.center)?;
    let statistic = fold_max(cs.iter().map(|s| s.stat), cfg.sidedness).unwrap_or(0.0);
    let (critical_values, reject) = decide(TestKind::Homogeneity, statistic, fits.len(), cfg, None)?;
    let per_unit = fits
        .iter()
        .zip(&cs)
        .map(|(f, s)| UnitStat {
            unit_id: f.unit_id.clone(),
            threshold: f.c,
            bandwidth: f.b,
            gamma_hat: f.gamma_hat,
            deviation: s.deviation,
            scale: s.v_tilde,
            std_err: s.v_tilde / f.root_tb(),
            stat: s.stat,
            n_obs: f.n_obs,
            eff_obs: f.eff_obs(),
        })
        .collect();
    Ok(TestResult {
        kind: TestKind::Homogeneity,
        statistic,
        alphas: cfg.alphas.clone(),
        critical_values,
        reject,
        per_unit,
        skipped,
        sidedness: cfg.sidedness,
        center: Some(cfg.center),
        n_comparisons: fits.len(),
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub c: f64,
    pub gamma_hat: f64,
    pub sigma_e_sq: f64,
    pub v_hat: f64,
    /// Signed standardized statistic.
    pub stat: f64,
    pub eff_obs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitSearch {
    pub unit_id: String,
    pub bandwidth: f64,
    pub n_obs: usize,
    pub truncation_level: f64,
    /// One entry per grid point; `None` where the grid point admits no fit.
    pub points: Vec<Option<GridPoint>>,
    /// Grid index of the estimated threshold.
    pub best: usize,
}

impl UnitSearch {
    pub fn best_point(&self) -> &GridPoint {
        self.points[self.best].as_ref().expect("best grid point is valid")
    }

    pub fn c_hat(&self) -> f64 {
        self.best_point().c
    }

    /// Signed statistic at the estimated threshold.
    pub fn max_stat(&self) -> f64 {
        self.best_point().stat
    }

    pub fn n_valid(&self) -> usize {
        self.points.iter().filter(|p| p.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearchResult {
    pub grid: Vec<f64>,
    pub units: Vec<UnitSearch>,
    pub skipped: Vec<SkippedUnit>,
    pub statistic: f64,
    pub alphas: Vec<f64>,
    pub critical_values: Vec<f64>,
    pub reject: Vec<bool>,
    pub sidedness: Sidedness,
    /// Valid (unit, grid point) pairs entering the maximum.
    pub n_comparisons: usize,
    pub warnings: Vec<String>,
}

impl ThresholdSearchResult {
    pub fn c_hats(&self) -> Vec<(String, f64)> {
        self.units
            .iter()
            .map(|u| (u.unit_id.clone(), u.c_hat()))
            .collect()
    }

    /// Report view with one row per unit at its estimated threshold.
    pub fn to_test_result(&self) -> TestResult {
        let per_unit = self
            .units
            .iter()
            .map(|u| {
                let p = u.best_point();
                let root_tb = (u.n_obs as f64 * u.bandwidth).sqrt();
                UnitStat {
                    unit_id: u.unit_id.clone(),
                    threshold: p.c,
                    bandwidth: u.bandwidth,
                    gamma_hat: p.gamma_hat,
                    deviation: p.gamma_hat,
                    scale: p.v_hat,
                    std_err: p.v_hat / root_tb,
                    stat: p.stat,
                    n_obs: u.n_obs,
                    eff_obs: p.eff_obs,
                }
            })
            .collect();
        TestResult {
            kind: TestKind::ExistenceUnknownThreshold,
            statistic: self.statistic,
            alphas: self.alphas.clone(),
            critical_values: self.critical_values.clone(),
            reject: self.reject.clone(),
            per_unit,
            skipped: self.skipped.clone(),
            sidedness: self.sidedness,
            center: None,
            n_comparisons: self.n_comparisons,
            warnings: self.warnings.clone(),
        }
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("threshold grid is empty".into()));
    }
    if grid.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidConfig(
            "threshold grid has non-finite values".into(),
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(
            "threshold grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Smallest gap between consecutive grid points; `None` for one point.
pub fn min_grid_spacing(grid: &[f64]) -> Option<f64> {
    grid.windows(2).map(|w| w[1] - w[0]).reduce(f64::min)
}

fn grid_median(grid: &[f64]) -> f64 {
    let k = grid.len();
    if k % 2 == 1 {
        grid[k / 2]
    } else {
        0.5 * (grid[k / 2 - 1] + grid[k / 2])
    }
}

/// Index of the largest folded statistic; the smallest index wins ties.
fn first_argmax(stats: impl IntoIterator<Item = Option<f64>>, sided: Sidedness) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, z) in stats.into_iter().enumerate() {
        if let Some(z) = z {
            let v = sided.fold(z);
            if best.is_none_or(|(_, m)| v > m) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

struct UnitSearchOutcome {
    search: UnitSearch,
    block_weights: Option<(Vec<Vec<f64>>, Vec<f64>)>,
}

fn search_unit(
    unit: &Unit,
    grid: &[f64],
    b: f64,
    n_units: usize,
    cfg: &TestConfig,
    keep_weights: bool,
) -> Result<UnitSearchOutcome> {
    let t = unit.len();
    let resid = smooth_residuals_adjusted(
        &unit.y,
        &unit.x,
        pilot_bandwidth(b, t, cfg.pilot_exponent),
        cfg.kernel,
        None,
        cfg.pilot_min_points,
    )?;
    let level = match cfg.truncation {
        Truncation::Auto => default_truncation_level(&resid, n_units, grid.len()),
        Truncation::Level(a) => a,
        Truncation::Off => f64::INFINITY,
    };
    let mut block_w = Vec::new();
    let mut block_s = Vec::new();
    let root_tb = (t as f64 * b).sqrt();
    let points: Vec<Option<GridPoint>> = grid
        .iter()
        .map(|&c| {
            let w = JumpWeights::new(&unit.x, c, b, cfg.kernel).ok()?;
            let sigma = sigma_e_sq_truncated(&resid, &unit.x, c, b, level).ok()?;
            let gamma_hat = w.gamma(&unit.y);
            let v_hat = floored_scale(v_sq(&w.plus, &w.minus, sigma.sigma_e_sq, t, b), &unit.y);
            let eff_obs =
                crate::estimator::effective_obs(&w.plus) + crate::estimator::effective_obs(&w.minus);
            if keep_weights {
                block_w.push(w.combined());
                block_s.push(sigma.sigma_e_sq);
            }
            Some(GridPoint {
                c,
                gamma_hat,
                sigma_e_sq: sigma.sigma_e_sq,
                v_hat,
                stat: root_tb * gamma_hat / v_hat,
                eff_obs,
            })
        })
        .collect();
    let best =
        first_argmax(points.iter().map(|p| p.as_ref().map(|p| p.stat)), cfg.sidedness).ok_or_else(|| {
            Error::InsufficientSupport {
                side: crate::kernel::Side::Plus,
                threshold: grid[0],
                reason: "no grid point admits a local linear fit",
            }
        })?;
    Ok(UnitSearchOutcome {
        search: UnitSearch {
            unit_id: unit.id.clone(),
            bandwidth: b,
            n_obs: t,
            truncation_level: level,
            points,
            best,
        },
        block_weights: keep_weights.then_some((block_w, block_s)),
    })
}

/// Existence test with unknown thresholds: every unit is scanned over the
/// grid, its threshold estimated by the arg max, and the overall maximum
/// compared against critical values for all valid (unit, grid point) pairs.
pub fn search_thresholds(panel: &PanelData, grid: &[f64], cfg: &TestConfig) -> Result<ThresholdSearchResult> {
    cfg.validate()?;
    validate_grid(grid)?;
    let at = vec![Some(grid_median(grid)); panel.n_units()];
    let bws = resolve_bandwidths(&panel.units, &at, cfg);
    let keep = matches!(cfg.critical, CriticalMethod::SimulatedSigmaC { .. });
    let n_units = panel.n_units();
    let outcomes: Vec<Result<UnitSearchOutcome>> = panel
        .units
        .par_iter()
        .zip(bws.into_par_iter())
        .map(|(u, b)| search_unit(u, grid, b?, n_units, cfg, keep))
        .collect();

    let mut units = Vec::new();
    let mut skipped = Vec::new();
    let mut blocks = Vec::new();
    for (u, r) in panel.iter().zip(outcomes) {
        match r {
            Ok(o) => {
                if let Some((w, s)) = o.block_weights {
                    blocks.push(SigmaC::from_weights(&w, &s)?);
                }
                units.push(o.search);
            }
            Err(e) => skipped.push(SkippedUnit {
                unit_id: u.id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    if units.is_empty() {
        return Err(all_skipped(&skipped));
    }
    let statistic = units
        .iter()
        .map(|u| cfg.sidedness.fold(u.max_stat()))
        .fold(f64::NEG_INFINITY, f64::max);
    let n_comparisons: usize = units.iter().map(UnitSearch::n_valid).sum();

    let mut warnings = Vec::new();
    if let Some(gap) = min_grid_spacing(grid) {
        let max_b = units.iter().map(|u| u.bandwidth).fold(0.0, f64::max);
        if gap <= 2.0 * max_b {
            warnings.push(format!(
                "grid spacing {gap} is at most twice the largest bandwidth {max_b}; \
                 grid statistics are correlated and the independent critical value is conservative"
            ));
        }
    }
    let sigma_c = keep.then_some(blocks.as_slice());
    let (critical_values, reject) = decide(
        TestKind::ExistenceUnknownThreshold,
        statistic,
        n_comparisons,
        cfg,
        sigma_c,
    )?;
    Ok(ThresholdSearchResult {
        grid: grid.to_vec(),
        units,
        skipped,
        statistic,
        alphas: cfg.alphas.clone(),
        critical_values,
        reject,
        sidedness: cfg.sidedness,
        n_comparisons,
        warnings,
    })
}
