//! Synthetic panels: `Y = cos X + sin U + gamma 1{X >= c0} + sigma(X, U) eps`
//! with `U = V X`, `V ~ U[-1, 1]`, under six designs for `X` and `eps`.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::panel::{PanelData, Unit};
use crate::seed::derive_seed;

/// How jump sizes are assigned to units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaScheme {
    /// All jumps zero.
    Null,
    /// `round(fraction N)` random units get `scale T^{-2/5} (ln N)^{1/2} B_j`,
    /// `B_j ~ U[2, 10]`.
    SparsePower { fraction: f64, scale: f64 },
    /// Every unit gets a jump of the same form.
    Accuracy { scale: f64 },
}

impl GammaScheme {
    pub fn power() -> Self {
        GammaScheme::SparsePower {
            fraction: 0.1,
            scale: 1.0,
        }
    }

    pub fn accuracy() -> Self {
        GammaScheme::Accuracy { scale: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    /// Design number, 1 to 6.
    pub dgp: u8,
    pub n_units: usize,
    pub t: usize,
    pub seed: u64,
    pub beta: f64,
    pub ma_lag: usize,
    pub gamma_scheme: GammaScheme,
    pub threshold: f64,
}

impl DgpConfig {
    pub fn new(dgp: u8, n_units: usize, t: usize, seed: u64) -> Self {
        DgpConfig {
            dgp,
            n_units,
            t,
            seed,
            beta: 1.5,
            ma_lag: 100,
            gamma_scheme: GammaScheme::Null,
            threshold: 0.0,
        }
    }

    pub fn with_gammas(mut self, scheme: GammaScheme) -> Self {
        self.gamma_scheme = scheme;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=6).contains(&self.dgp) {
            return Err(Error::InvalidConfig(format!(
                "dgp must be 1 to 6, got {}",
                self.dgp
            )));
        }
        if self.n_units == 0 || self.t == 0 || self.ma_lag == 0 {
            return Err(Error::InvalidConfig(
                "N, T and the MA lag must be at least 1".into(),
            ));
        }
        if !(self.beta > 0.5) {
            return Err(Error::InvalidConfig(format!(
                "beta must exceed 0.5, got {}",
                self.beta
            )));
        }
        if !self.threshold.is_finite() {
            return Err(Error::InvalidConfig("threshold must be finite".into()));
        }
        match self.gamma_scheme {
            GammaScheme::SparsePower { fraction, .. } if !(0.0..=1.0).contains(&fraction) => Err(
                Error::InvalidConfig(format!("fraction must lie in [0, 1], got {fraction}")),
            ),
            _ => Ok(()),
        }
    }
}

/// A generated panel with its true jump sizes and locations, plus the
/// latent variable and raw errors for diagnostics.
#[derive(Debug, Clone)]
pub struct SimPanel {
    pub panel: PanelData,
    pub gammas: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub latent: Vec<Vec<f64>>,
    pub errors: Vec<Vec<f64>>,
}

/// `a_k ∝ (k + 1)^{-(beta + 1)}`, `k = 0..=lag`, scaled to unit sum of squares.
pub fn ma_coefficients(beta: f64, lag: usize) -> Vec<f64> {
    let mut a: Vec<f64> = (0..=lag).map(|k| ((k + 1) as f64).powf(-(beta + 1.0))).collect();
    let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    a.iter_mut().for_each(|v| *v /= norm);
    a
}

/// Truncated MA(inf) series of length `t` with standard normal innovations;
/// the first `lag` values are burn-in and dropped.
pub fn gen_ma_inf<R: Rng + ?Sized>(t: usize, beta: f64, lag: usize, rng: &mut R) -> Vec<f64> {
    let a = ma_coefficients(beta, lag);
    let eta: Vec<f64> = (0..t + lag).map(|_| rng.sample(StandardNormal)).collect();
    (lag..t + lag)
        .map(|s| a.iter().enumerate().map(|(k, ak)| ak * eta[s - k]).sum())
        .collect()
}

/// Heteroskedastic scale `1 + (3/8 - |x|/4) (3/2)^{2u}`. Outside
/// `|x| <= 3/2` the expression can turn negative; its magnitude is used.
pub fn sigma_het(x: f64, u: f64) -> f64 {
    (1.0 + (0.375 - 0.25 * x.abs()) * 1.5f64.powf(2.0 * u)).abs()
}

/// Jump sizes `scale T^{-2/5} (ln N)^{1/2} B_j` for `round(fraction N)`
/// randomly chosen units (half-up rounding), zero elsewhere.
pub fn inject_jumps<R: Rng + ?Sized>(n: usize, t: usize, fraction: f64, scale: f64, rng: &mut R) -> Vec<f64> {
    let count = ((fraction * n as f64 + 0.5).floor() as usize).min(n);
    let magnitude = scale * (t as f64).powf(-0.4) * (n as f64).ln().sqrt();
    let b = Uniform::new_inclusive(2.0, 10.0).expect("valid range");
    let mut gammas = vec![0.0; n];
    let mut chosen = sample(rng, n, count).into_vec();
    chosen.sort_unstable();
    for j in chosen {
        gammas[j] = magnitude * rng.sample(b);
    }
    gammas
}

/// Loading offset, idiosyncratic divisor and time-effect sd per design.
fn factor_shape(dgp: u8) -> (f64, f64, f64) {
    match dgp {
        4 => (2.0, 8.0, 0.0),
        5 => (2.0, 4.0, 0.0),
        6 => (2.0, 4.0, 0.5),
        _ => (0.0, 1.0, 0.0),
    }
}

pub fn gen_dgp(cfg: &DgpConfig) -> Result<SimPanel> {
    cfg.validate()?;
    let (n, t) = (cfg.n_units, cfg.t);
    let stream = |k: u64| ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, k));

    let mut rng = stream(0);
    let gammas = match cfg.gamma_scheme {
        GammaScheme::Null => vec![0.0; n],
        GammaScheme::SparsePower { fraction, scale } => inject_jumps(n, t, fraction, scale, &mut rng),
        GammaScheme::Accuracy { scale } => inject_jumps(n, t, 1.0, scale, &mut rng),
    };

    let factor = cfg.dgp >= 2;
    let heteroskedastic = cfg.dgp != 2;
    let (offset, idio_div, nu_sd) = factor_shape(cfg.dgp);
    let (f_eps, f_x, nu) = if factor {
        let mut rng = stream(1);
        let f_eps = gen_ma_inf(t, cfg.beta, cfg.ma_lag, &mut rng);
        let f_x = gen_ma_inf(t, cfg.beta, cfg.ma_lag, &mut rng);
        let nu = if nu_sd > 0.0 {
            let d = Normal::new(0.0, nu_sd).expect("valid sd");
            (0..t).map(|_| rng.sample(d)).collect()
        } else {
            vec![0.0; t]
        };
        (f_eps, f_x, nu)
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };

    let unif = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let mut units = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    let mut errors = Vec::with_capacity(n);
    for (j, &gamma) in gammas.iter().enumerate() {
        let mut rng = stream(2 + j as u64);
        let (x, eps): (Vec<f64>, Vec<f64>) = if factor {
            let lam_eps: f64 = rng.sample(StandardNormal);
            let lam_x: f64 = rng.sample(StandardNormal);
            let u_eps = gen_ma_inf(t, cfg.beta, cfg.ma_lag, &mut rng);
            let u_x = gen_ma_inf(t, cfg.beta, cfg.ma_lag, &mut rng);
            let x = (0..t)
                .map(|s| 0.25 * ((lam_x + offset) * f_x[s] + u_x[s] / idio_div))
                .collect();
            let eps = (0..t)
                .map(|s| (lam_eps + offset) * f_eps[s] + nu[s] + u_eps[s] / idio_div)
                .collect();
            (x, eps)
        } else {
            let x = (0..t).map(|_| rng.sample(unif)).collect();
            let eps = (0..t).map(|_| rng.sample(StandardNormal)).collect();
            (x, eps)
        };
        let u: Vec<f64> = x.iter().map(|xs| rng.sample(unif) * xs).collect();
        let y = (0..t)
            .map(|s| {
                let sigma = if heteroskedastic {
                    sigma_het(x[s], u[s])
                } else {
                    1.0
                };
                debug_assert!(sigma >= 0.0);
                let jump = if x[s] >= cfg.threshold { gamma } else { 0.0 };
                x[s].cos() + u[s].sin() + jump + sigma * eps[s]
            })
            .collect();
        units.push(Unit::new(format!("u{j}"), y, x)?);
        latent.push(u);
        errors.push(eps);
    }
    Ok(SimPanel {
        panel: PanelData::new(units),
        gammas,
        thresholds: vec![cfg.threshold; n],
        latent,
        errors,
    })
}
