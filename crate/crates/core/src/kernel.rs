//! Kernels on [-1, 1] and one-sided local linear weights.
//!
//! The plus side of a threshold `c` holds every point with `x >= c`, the
//! minus side every point with `x < c`. A point sitting exactly on `c`
//! therefore belongs to the plus side.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Relative cutoff on the weight denominator `S2*S0 - S1^2`.
const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    #[default]
    Uniform,
    Triangular,
    Epanechnikov,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::Uniform, Kernel::Triangular, Kernel::Epanechnikov];

    /// Kernel value; zero outside the closed support [-1, 1].
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        let a = x.abs();
        if !(a <= 1.0) {
            return 0.0;
        }
        match self {
            Kernel::Uniform => 0.5,
            Kernel::Triangular => 1.0 - a,
            Kernel::Epanechnikov => 0.75 * (1.0 - x * x),
        }
    }

    /// Closed-form one-sided moments `K_l^+ = int_0^1 x^l K(x) dx` for
    /// `l = 0, 1, 2` and their mirror images on [-1, 0].
    pub fn moments(self) -> KernelMoments {
        let k_plus = self.upper_moments::<3>();
        KernelMoments {
            k_plus,
            k_minus: [k_plus[0], -k_plus[1], k_plus[2]],
        }
    }

    /// `int_0^1 x^l K(x) dx` for `l < N`.
    pub(crate) fn upper_moments<const N: usize>(self) -> [f64; N] {
        let mut out = [0.0; N];
        for (l, m) in out.iter_mut().enumerate() {
            let l = l as f64;
            *m = match self {
                Kernel::Uniform => 0.5 / (l + 1.0),
                Kernel::Triangular => 1.0 / (l + 1.0) - 1.0 / (l + 2.0),
                Kernel::Epanechnikov => 0.75 * (1.0 / (l + 1.0) - 1.0 / (l + 3.0)),
            };
        }
        out
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Uniform => "uniform",
            Kernel::Triangular => "triangular",
            Kernel::Epanechnikov => "epanechnikov",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "rectangular" => Ok(Kernel::Uniform),
            "triangular" | "triangle" => Ok(Kernel::Triangular),
            "epanechnikov" | "epa" => Ok(Kernel::Epanechnikov),
            other => Err(Error::InvalidConfig(format!("unknown kernel `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelMoments {
    pub k_plus: [f64; 3],
    pub k_minus: [f64; 3],
}

impl KernelMoments {
    /// `K_2 K_0 / K_1^2` on the plus side; exceeds one for every
    /// nonnegative kernel by Cauchy-Schwarz.
    pub fn plus_ratio(&self) -> f64 {
        self.k_plus[2] * self.k_plus[0] / (self.k_plus[1] * self.k_plus[1])
    }

    pub fn minus_ratio(&self) -> f64 {
        self.k_minus[2] * self.k_minus[0] / (self.k_minus[1] * self.k_minus[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    #[inline]
    pub fn contains(self, x: f64, c: f64) -> bool {
        match self {
            Side::Plus => x >= c,
            Side::Minus => x < c,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Plus => "plus",
            Side::Minus => "minus",
        })
    }
}

/// One-sided sums `S_l = sum_t (x_t - c)^l K((x_t - c)/b) 1{side}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SideSums {
    pub s: [f64; 3],
}

impl SideSums {
    #[inline]
    pub fn denominator(&self) -> f64 {
        self.s[2] * self.s[0] - self.s[1] * self.s[1]
    }
}

pub fn side_sums(x: &[f64], c: f64, b: f64, kernel: Kernel, side: Side) -> SideSums {
    let mut s = [0.0; 3];
    for &xt in x {
        if !side.contains(xt, c) {
            continue;
        }
        let d = xt - c;
        let k = kernel.eval(d / b);
        if k > 0.0 {
            s[0] += k;
            s[1] += d * k;
            s[2] += d * d * k;
        }
    }
    SideSums { s }
}

/// Checks that `side` carries at least two distinct points with positive
/// kernel weight and a well-conditioned denominator; returns the sums.
pub(crate) fn checked_side_sums(x: &[f64], c: f64, b: f64, kernel: Kernel, side: Side) -> Result<SideSums> {
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "bandwidth must be positive, got {b}"
        )));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut s = [0.0; 3];
    for &xt in x {
        if !side.contains(xt, c) {
            continue;
        }
        let d = xt - c;
        let k = kernel.eval(d / b);
        if k > 0.0 {
            s[0] += k;
            s[1] += d * k;
            s[2] += d * d * k;
            lo = lo.min(xt);
            hi = hi.max(xt);
        }
    }
    if !(lo < hi) {
        return Err(Error::InsufficientSupport {
            side,
            threshold: c,
            reason: "fewer than two distinct points inside the kernel window",
        });
    }
    let sums = SideSums { s };
    if sums.denominator() <= DEGENERACY_TOL * s[0] * s[2] {
        return Err(Error::InsufficientSupport {
            side,
            threshold: c,
            reason: "collinear local design",
        });
    }
    Ok(sums)
}

/// One-sided local linear weights at `c`.
///
/// The returned vector has the length of `x`; entries off `side` or outside
/// the kernel window are exactly zero. The weights reproduce affine
/// functions: `sum w = 1` and `sum (x - c) w = 0`.
pub fn local_weights(x: &[f64], c: f64, b: f64, kernel: Kernel, side: Side) -> Result<Vec<f64>> {
    let sums = checked_side_sums(x, c, b, kernel, side)?;
    let [_, s1, s2] = sums.s;
    let den = sums.denominator();
    Ok(x.iter()
        .map(|&xt| {
            if !side.contains(xt, c) {
                return 0.0;
            }
            let d = xt - c;
            let k = kernel.eval(d / b);
            if k > 0.0 {
                k * (s2 - d * s1) / den
            } else {
                0.0
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn kernel_values() {
        assert_eq!(Kernel::Uniform.eval(0.0), 0.5);
        assert_eq!(Kernel::Epanechnikov.eval(0.0), 0.75);
        for k in Kernel::ALL {
            assert_eq!(k.eval(1.5), 0.0);
            assert_eq!(k.eval(-1.0001), 0.0);
            assert!(k.eval(0.3) > 0.0);
        }
        assert_eq!(Kernel::Uniform.eval(1.0), 0.5);
    }

    #[test]
    fn kernels_integrate_to_one() {
        for k in Kernel::ALL {
            // piecewise smooth on [-1, 0] and [0, 1]
            let total = simpson(|x| k.eval(x), -1.0, 0.0, 2000) + simpson(|x| k.eval(x), 0.0, 1.0, 2000);
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn moments_match_quadrature() {
        for k in Kernel::ALL {
            let m = k.moments();
            for l in 0..3 {
                let plus = simpson(|x| x.powi(l as i32) * k.eval(x), 0.0, 1.0, 2000);
                let minus = simpson(|x| x.powi(l as i32) * k.eval(x), -1.0, 0.0, 2000);
                assert_abs_diff_eq!(m.k_plus[l], plus, epsilon = 1e-10);
                assert_abs_diff_eq!(m.k_minus[l], minus, epsilon = 1e-10);
            }
            assert_abs_diff_eq!(m.k_plus[0] + m.k_minus[0], 1.0, epsilon = 1e-15);
            assert!(m.plus_ratio() > 1.0);
            assert!(m.minus_ratio() > 1.0);
        }
    }

    #[test]
    fn closed_form_moments() {
        let u = Kernel::Uniform.moments();
        assert_abs_diff_eq!(u.k_plus[0], 0.5);
        assert_abs_diff_eq!(u.k_plus[1], 0.25);
        assert_abs_diff_eq!(u.k_plus[2], 1.0 / 6.0);
        assert_abs_diff_eq!(u.plus_ratio(), 4.0 / 3.0, epsilon = 1e-14);
        let e = Kernel::Epanechnikov.moments();
        assert_abs_diff_eq!(e.k_plus[0], 0.5);
        assert_abs_diff_eq!(e.k_plus[1], 0.1875);
        assert_abs_diff_eq!(e.k_plus[2], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn side_sums_example() {
        let x = [0.2, 0.4, -0.3, 0.9];
        let p = side_sums(&x, 0.0, 0.5, Kernel::Uniform, Side::Plus);
        assert_abs_diff_eq!(p.s[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.s[1], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(p.s[2], 0.1, epsilon = 1e-15);
        let m = side_sums(&x, 0.0, 0.5, Kernel::Uniform, Side::Minus);
        assert_abs_diff_eq!(m.s[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m.s[1], -0.15, epsilon = 1e-15);
        assert_abs_diff_eq!(m.s[2], 0.045, epsilon = 1e-15);
        let empty = side_sums(&[5.0], 0.0, 0.5, Kernel::Uniform, Side::Plus);
        assert_eq!(empty.s, [0.0; 3]);
    }

    #[test]
    fn weights_example_matches_two_point_interpolation() {
        let x = [0.2, 0.4, -0.3, 0.9];
        let w = local_weights(&x, 0.0, 0.5, Kernel::Uniform, Side::Plus).unwrap();
        // Line through (0.2, y1), (0.4, y2) evaluated at 0 is 2*y1 - y2.
        let expected = [2.0, -1.0, 0.0, 0.0];
        for (a, b) in w.iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn point_on_threshold_is_plus_side() {
        let x = [0.0, 0.1, -0.1, -0.2];
        let p = side_sums(&x, 0.0, 0.5, Kernel::Uniform, Side::Plus);
        assert_abs_diff_eq!(p.s[0], 1.0);
        let m = side_sums(&x, 0.0, 0.5, Kernel::Uniform, Side::Minus);
        assert_abs_diff_eq!(m.s[0], 1.0);
    }

    #[test]
    fn collinear_design_is_rejected() {
        let err = local_weights(&[0.1, 0.1, 0.1], 0.0, 0.5, Kernel::Uniform, Side::Plus).unwrap_err();
        assert!(matches!(err, Error::InsufficientSupport { side: Side::Plus, .. }));
        let err = local_weights(&[0.1, 0.2], 0.0, 0.5, Kernel::Uniform, Side::Minus).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientSupport {
                side: Side::Minus,
                ..
            }
        ));
    }

    #[test]
    fn triangular_edge_points_carry_no_weight() {
        // x = 0.5 sits on the edge of the window where the triangular kernel vanishes
        let err = local_weights(&[0.2, 0.5], 0.0, 0.5, Kernel::Triangular, Side::Plus).unwrap_err();
        assert!(matches!(err, Error::InsufficientSupport { .. }));
    }

    #[test]
    fn non_positive_bandwidth_rejected() {
        assert!(local_weights(&[0.1, 0.2], 0.0, 0.0, Kernel::Uniform, Side::Plus).is_err());
    }
}
