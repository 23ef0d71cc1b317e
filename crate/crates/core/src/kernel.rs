//! Bump profiles for the point kernel and the mollifier.

use alloc::vec::Vec;

use crate::env::unit_ball_volume;
use crate::error::{Error, Result};

/// Default peak value of the point kernel.
pub const DEFAULT_ZETA_AMPLITUDE: f64 = 0.6;
/// Exponent of the profile `(1 - |y|^2/r^2)^p`.
pub const PROFILE_POWER: u32 = 4;

/// User-facing kernel and quadrature settings.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KernelConfig {
    pub zeta_amplitude: f64,
    /// Quadrature nodes per axis across the mollifier's support.
    pub quad_order: usize,
    /// Gauss–Legendre nodes per lattice cell and axis.
    pub quad_points_per_cell: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            zeta_amplitude: DEFAULT_ZETA_AMPLITUDE,
            quad_order: 24,
            quad_points_per_cell: 2,
        }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta_amplitude > 0.0 && self.zeta_amplitude.is_finite()) {
            return Err(Error::Config(alloc::format!(
                "zeta amplitude must be positive, got {}",
                self.zeta_amplitude
            )));
        }
        if self.quad_points_per_cell == 0
            || self.quad_order < self.quad_points_per_cell
            || self.quad_order % self.quad_points_per_cell != 0
        {
            return Err(Error::Config(alloc::format!(
                "quadrature order {} must be a positive multiple of points per cell {}",
                self.quad_order, self.quad_points_per_cell
            )));
        }
        Ok(())
    }
}

/// Derived kernel constants for a given dimension and range.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KernelParams {
    pub dim: usize,
    pub zeta_radius: f64,
    pub rho_radius: f64,
    pub zeta_amplitude: f64,
    pub profile_power: u32,
    /// Constant `C` with `rho(y) = C (1 - |y|^2/r^2)^4` and unit integral.
    pub rho_norm: f64,
    /// Largest L1 norm of `d^alpha rho` over `|alpha| = k`, for k = 0..=3.
    pub derivative_norms: [f64; 4],
    /// `max(1, derivative_norms)`.
    pub m: f64,
}

impl KernelParams {
    pub fn new(dim: usize, range: f64, zeta_amplitude: f64) -> Self {
        let r = range / 8.0;
        let unit = unit_derivative_norms(dim);
        // rho is a probability density, so its own L1 norm is exactly 1
        let derivative_norms =
            core::array::from_fn(|k| if k == 0 { 1.0 } else { unit[k] / libm::pow(r, k as f64) });
        let m = derivative_norms.iter().fold(1.0f64, |a, &b| a.max(b));
        KernelParams {
            dim,
            zeta_radius: r,
            rho_radius: r,
            zeta_amplitude,
            profile_power: PROFILE_POWER,
            rho_norm: unit_rho_norm(dim) / libm::pow(r, dim as f64),
            derivative_norms,
            m,
        }
    }

    #[inline]
    pub fn zeta(&self, dist2: f64) -> f64 {
        let t = 1.0 - dist2 / (self.zeta_radius * self.zeta_radius);
        if t <= 0.0 {
            0.0
        } else {
            let t2 = t * t;
            self.zeta_amplitude * t2 * t2
        }
    }

    /// Radius of the region a field evaluation reads.
    pub fn dependence_radius(&self) -> f64 {
        self.zeta_radius + self.rho_radius
    }
}

/// `C_D = 1 / integral over the unit ball of (1-|y|^2)^4`.
pub fn unit_rho_norm(dim: usize) -> f64 {
    // integral = |S^{D-1}| * int_0^1 s^{D-1}(1-s^2)^4 ds = (D V_D) * B(D/2, 5)/2
    let d = dim as f64;
    let beta = gamma(d / 2.0) * gamma(5.0) / gamma(d / 2.0 + 5.0);
    1.0 / (d * unit_ball_volume(dim) * beta / 2.0)
}

fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// `d^alpha` of the unit profile `C (1-|y|^2)^4`, where `alpha` is given as a
/// list of up to three axis indices.
pub fn unit_rho_derivative(c: f64, y: &[f64], axes: &[usize]) -> f64 {
    let s2: f64 = y.iter().map(|v| v * v).sum();
    let u = 1.0 - s2;
    if u <= 0.0 {
        return 0.0;
    }
    let delta = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    match *axes {
        [] => c * u * u * u * u,
        [i] => -8.0 * c * u * u * u * y[i],
        [i, j] => c * (48.0 * u * u * y[i] * y[j] - 8.0 * u * u * u * delta(i, j)),
        [i, j, k] => {
            c * (-192.0 * u * y[i] * y[j] * y[k]
                + 48.0 * u * u * (delta(i, k) * y[j] + delta(j, k) * y[i] + delta(i, j) * y[k]))
        }
        _ => panic!("derivatives above order 3 are not provided"),
    }
}

/// Non-increasing multi-indices of order `k`, as axis lists. Permutation symmetry
/// of the radial profile makes these representative of all `|alpha| = k`.
fn representative_axes(dim: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(dim: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for a in start..dim {
            cur.push(a);
            rec(dim, k, a, cur, out);
            cur.pop();
        }
    }
    rec(dim, k, 0, &mut cur, &mut out);
    out
}

fn orthant_integral(dim: usize, n: usize, axes: &[usize], c: f64) -> f64 {
    // midpoint rule on [0,1]^D, times 2^D by reflection symmetry of |d^alpha rho|
    let h = 1.0 / n as f64;
    let mut idx = alloc::vec![0usize; dim];
    let mut y = alloc::vec![0.0; dim];
    let mut acc = 0.0;
    loop {
        let mut s2 = 0.0;
        for k in 0..dim {
            y[k] = (idx[k] as f64 + 0.5) * h;
            s2 += y[k] * y[k];
        }
        if s2 < 1.0 {
            acc += unit_rho_derivative(c, &y, axes).abs();
        }
        let mut k = dim;
        loop {
            if k == 0 {
                return acc * libm::pow(h, dim as f64) * libm::pow(2.0, dim as f64);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
        }
    }
}

fn grid_size(dim: usize) -> usize {
    match dim {
        2 => 1024,
        3 => 128,
        4 => 40,
        _ => 16,
    }
}

/// Max L1 norm of `d^alpha rho_1` over `|alpha| = k`, k = 0..=3, for the unit-radius mollifier.
///
/// Midpoint rule with one Richardson step.
pub fn unit_derivative_norms(dim: usize) -> [f64; 4] {
    let c = unit_rho_norm(dim);
    let n = grid_size(dim);
    core::array::from_fn(|k| {
        representative_axes(dim, k)
            .iter()
            .map(|axes| {
                let coarse = orthant_integral(dim, n / 2, axes, c);
                let fine = orthant_integral(dim, n, axes, c);
                (4.0 * fine - coarse) / 3.0
            })
            .fold(0.0, f64::max)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn norm_constant_in_two_dimensions() {
        assert!((unit_rho_norm(2) - 5.0 / PI).abs() < 1e-14);
    }

    #[test]
    fn unit_norms_match_closed_forms() {
        let n = unit_derivative_norms(2);
        assert!((n[0] - 1.0).abs() < 1e-6, "{}", n[0]);
        // int |d_1 rho| = 8 C * 4 * int_0^1 s^2 (1-s^2)^3 ds = 2560 / (315 pi)
        let exact = 2560.0 / (315.0 * PI);
        assert!((n[1] - exact).abs() / exact < 1e-6, "{} {}", n[1], exact);
    }

    #[test]
    fn unit_norms_3d_integrate_to_one() {
        let n = unit_derivative_norms(3);
        assert!((n[0] - 1.0).abs() < 1e-5, "{}", n[0]);
        assert!(n[3] > n[2] && n[2] > n[1]);
    }

    #[test]
    fn normalization_scales_with_radius() {
        let small = KernelParams::new(2, 1.0, 0.6);
        assert!(small.m > 2.7e4 && small.m < 2.8e4, "{}", small.m);
        let large = KernelParams::new(2, 32.0, 0.6);
        assert_eq!(large.m, 1.0);
        assert!(large.derivative_norms[3] < 1.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let c = 1.3;
        let y = [0.21, -0.34];
        let h = 1e-5;
        for i in 0..2 {
            let mut yp = y;
            let mut ym = y;
            yp[i] += h;
            ym[i] -= h;
            let fd = (unit_rho_derivative(c, &yp, &[]) - unit_rho_derivative(c, &ym, &[])) / (2.0 * h);
            assert!((fd - unit_rho_derivative(c, &y, &[i])).abs() < 1e-8);
            for j in 0..2 {
                let fd2 = (unit_rho_derivative(c, &yp, &[j]) - unit_rho_derivative(c, &ym, &[j])) / (2.0 * h);
                assert!((fd2 - unit_rho_derivative(c, &y, &[j, i])).abs() < 1e-7);
                for k in 0..2 {
                    let fd3 = (unit_rho_derivative(c, &yp, &[j, k]) - unit_rho_derivative(c, &ym, &[j, k]))
                        / (2.0 * h);
                    assert!((fd3 - unit_rho_derivative(c, &y, &[j, k, i])).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zeta_profile() {
        let k = KernelParams::new(2, 8.0, 0.6);
        assert_eq!(k.zeta(0.0), 0.6);
        assert_eq!(k.zeta(1.0), 0.0);
        assert!((k.zeta(0.25) - 0.6 * 0.75f64.powi(4)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_quadrature() {
        let mut c = KernelConfig::default();
        c.quad_order = 25;
        assert!(c.validate().is_err());
        assert!(KernelConfig::default().validate().is_ok());
    }
}
