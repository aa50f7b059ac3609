//! Seeded Monte Carlo studies of size, power and threshold accuracy.

use rayon::prelude::*;

use crate::dgp::{gen_dgp, DgpConfig};
use crate::error::{Error, Result};
use crate::inference::{
    search_thresholds, test_existence, test_homogeneity, TestConfig, TestKind, ThresholdSpec,
};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub reps: usize,
    pub alphas: Vec<f64>,
    pub base_seed: u64,
}

impl McConfig {
    pub fn new(reps: usize, base_seed: u64) -> Self {
        McConfig {
            reps,
            alphas: vec![0.10, 0.05, 0.01],
            base_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if let Some(&a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidAlpha(a));
        }
        Ok(())
    }
}

/// Whether thresholds are treated as known or searched over a grid.
#[derive(Debug, Clone, PartialEq)]
pub enum ThresholdMode {
    Known,
    Grid(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizePowerTable {
    pub kind: TestKind,
    pub dgp: u8,
    pub n_units: usize,
    pub t: usize,
    pub reps: usize,
    pub failed_reps: usize,
    pub alphas: Vec<f64>,
    pub rejections: Vec<usize>,
}

impl SizePowerTable {
    fn completed(&self) -> usize {
        self.reps - self.failed_reps
    }

    pub fn rates(&self) -> Vec<f64> {
        let n = self.completed().max(1) as f64;
        self.rejections.iter().map(|&r| r as f64 / n).collect()
    }

    /// Binomial standard errors of the rates.
    pub fn std_errs(&self) -> Vec<f64> {
        let n = self.completed().max(1) as f64;
        self.rates().iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect()
    }

    pub fn rate(&self, alpha: f64) -> Option<f64> {
        let i = self.alphas.iter().position(|a| (a - alpha).abs() < 1e-12)?;
        Some(self.rates()[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    pub dgp: u8,
    pub n_units: usize,
    pub t: usize,
    pub reps: usize,
    pub failed_reps: usize,
    /// Mean of `|c_hat - c0|` over all replications and units.
    pub mean_abs_err: f64,
    /// Mean over replications of the largest error across units.
    pub mean_max_err: f64,
    /// Largest error seen anywhere.
    pub max_abs_err: f64,
}

fn rep_config(dgp: &DgpConfig, mc: &McConfig, r: usize) -> DgpConfig {
    DgpConfig {
        seed: derive_seed(mc.base_seed, r as u64),
        ..dgp.clone()
    }
}

/// Rejection frequencies of the chosen test over `mc.reps` fresh panels.
/// Replication `r` draws its panel from a seed derived from
/// `(base_seed, r)`, so the table does not depend on execution order.
pub fn run_size_power(
    dgp: &DgpConfig,
    mc: &McConfig,
    kind: TestKind,
    mode: &ThresholdMode,
    test: &TestConfig,
) -> Result<SizePowerTable> {
    dgp.validate()?;
    mc.validate()?;
    let mut cfg = test.clone();
    cfg.alphas = mc.alphas.clone();
    cfg.threshold = ThresholdSpec::Common(dgp.threshold);
    cfg.validate()?;
    match (kind, mode) {
        (TestKind::ExistenceUnknownThreshold, ThresholdMode::Known) => {
            return Err(Error::InvalidConfig("a threshold search needs a grid".into()))
        }
        (TestKind::Existence | TestKind::Homogeneity, ThresholdMode::Grid(_)) => {
            return Err(Error::InvalidConfig(format!("{kind} test uses known thresholds")))
        }
        _ => {}
    }

    let outcomes: Vec<Option<Vec<bool>>> = (0..mc.reps)
        .into_par_iter()
        .map(|r| {
            let sim = gen_dgp(&rep_config(dgp, mc, r)).ok()?;
            let reject = match (kind, mode) {
                (TestKind::Existence, _) => test_existence(&sim.panel, &cfg).ok()?.reject,
                (TestKind::Homogeneity, _) => test_homogeneity(&sim.panel, &cfg).ok()?.reject,
                (TestKind::ExistenceUnknownThreshold, ThresholdMode::Grid(g)) => {
                    search_thresholds(&sim.panel, g, &cfg).ok()?.reject
                }
                _ => unreachable!("checked above"),
            };
            Some(reject)
        })
        .collect();

    let mut rejections = vec![0usize; mc.alphas.len()];
    let mut failed = 0;
    for o in &outcomes {
        match o {
            Some(rej) => rej
                .iter()
                .zip(&mut rejections)
                .for_each(|(r, n)| *n += usize::from(*r)),
            None => failed += 1,
        }
    }
    Ok(SizePowerTable {
        kind,
        dgp: dgp.dgp,
        n_units: dgp.n_units,
        t: dgp.t,
        reps: mc.reps,
        failed_reps: failed,
        alphas: mc.alphas.clone(),
        rejections,
    })
}

/// Accuracy of the grid-search threshold estimates.
pub fn run_threshold_accuracy(
    dgp: &DgpConfig,
    mc: &McConfig,
    grid: &[f64],
    test: &TestConfig,
) -> Result<AccuracyTable> {
    dgp.validate()?;
    mc.validate()?;
    let mut cfg = test.clone();
    cfg.alphas = mc.alphas.clone();
    cfg.validate()?;
    let outcomes: Vec<Option<Vec<f64>>> = (0..mc.reps)
        .into_par_iter()
        .map(|r| {
            let sim = gen_dgp(&rep_config(dgp, mc, r)).ok()?;
            let res = search_thresholds(&sim.panel, grid, &cfg).ok()?;
            let errs = res
                .units
                .iter()
                .map(|u| {
                    let j = sim
                        .panel
                        .units
                        .iter()
                        .position(|v| v.id == u.unit_id)
                        .expect("unit exists");
                    (u.c_hat() - sim.thresholds[j]).abs()
                })
                .collect();
            Some(errs)
        })
        .collect();

    let mut failed = 0;
    let (mut sum, mut count, mut sum_max, mut max_all) = (0.0, 0usize, 0.0, 0.0f64);
    for o in &outcomes {
        match o {
            Some(errs) if !errs.is_empty() => {
                sum += errs.iter().sum::<f64>();
                count += errs.len();
                let m = errs.iter().copied().fold(0.0, f64::max);
                sum_max += m;
                max_all = max_all.max(m);
            }
            _ => failed += 1,
        }
    }
    let done = mc.reps - failed;
    Ok(AccuracyTable {
        dgp: dgp.dgp,
        n_units: dgp.n_units,
        t: dgp.t,
        reps: mc.reps,
        failed_reps: failed,
        mean_abs_err: if count > 0 { sum / count as f64 } else { f64::NAN },
        mean_max_err: if done > 0 { sum_max / done as f64 } else { f64::NAN },
        max_abs_err: max_all,
    })
}
