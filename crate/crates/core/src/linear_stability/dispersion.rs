//! Electrostatic dielectric function with the Landau prescription and a
//! root finder for the least-damped (or fastest-growing) mode.
//!
//! `ε(ω, k) = 1 - (q²/k²) ∫ F0'(v) / (v - ω/k) dv`. For `Im ω > 0` the
//! integral runs along the real axis. Below it the analytic continuation is
//! obtained by moving the contour to `Im v = -c` under the pole, which is
//! legitimate because the Gaussian-mixture profiles are entire.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::integrate_gk;
use crate::profile::Profile;

fn contour_integral(profile: &Profile, zeta: Complex64, power: i32) -> Complex64 {
    let c = (-zeta.im).max(0.0) + 1.0;
    let (lo, hi) = profile.support_hint();
    let lo = lo.min(zeta.re - 10.0);
    let hi = hi.max(zeta.re + 10.0);
    let shift = Complex64::new(0.0, -c);
    let f = |t: f64| {
        let v = Complex64::new(t, 0.0) + shift;
        let d = v - zeta;
        profile.derivative_c(v) / d.powi(power)
    };
    integrate_gk(f, lo, hi, 1e-15, 1e-13, 4000).0
}

/// Dielectric function `ε(ω, k)` for charge `q`.
pub fn dielectric(profile: &Profile, k: f64, q: f64, omega: Complex64) -> Complex64 {
    let zeta = omega / k;
    1.0 - q * q / (k * k) * contour_integral(profile, zeta, 1)
}

fn dielectric_derivative(profile: &Profile, k: f64, q: f64, omega: Complex64) -> Complex64 {
    let zeta = omega / k;
    -(q * q) / (k * k * k) * contour_integral(profile, zeta, 2)
}

/// Rectangle of complex frequencies scanned for starting points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanWindow {
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub n_re: usize,
    pub n_im: usize,
}

impl ScanWindow {
    /// Window scaled to the profile: real frequencies up to the fastest
    /// resonant particles, damping rates down to a depth where the shifted
    /// contour stays well conditioned.
    pub fn for_profile(profile: &Profile, k: f64) -> Self {
        let comps = profile.components();
        let vmax = comps.iter().map(|g| g.mean.abs() + 4.0 * g.sigma).fold(0.0, f64::max);
        let smin = comps.iter().map(|g| g.sigma).fold(f64::INFINITY, f64::min);
        ScanWindow { re_max: k * vmax + 1.5, im_min: -(1.0f64).min(2.0 * k * smin), im_max: 1.5, n_re: 61, n_im: 41 }
    }
}

/// A converged root of the dielectric function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionRoot {
    pub omega_re: f64,
    pub omega_im: f64,
    /// `|ε|` at the root.
    pub residual: f64,
}

impl DispersionRoot {
    pub fn omega(&self) -> Complex64 {
        Complex64::new(self.omega_re, self.omega_im)
    }

    /// Exponential rate of the field energy, `2 Im ω`.
    pub fn energy_rate(&self) -> f64 {
        2.0 * self.omega_im
    }
}

fn newton(profile: &Profile, k: f64, q: f64, start: Complex64, win: &ScanWindow) -> Option<Complex64> {
    let mut w = start;
    for _ in 0..60 {
        let e = dielectric(profile, k, q, w);
        let de = dielectric_derivative(profile, k, q, w);
        if de.norm() == 0.0 || !de.is_finite() {
            return None;
        }
        let step = e / de;
        let step = if step.norm() > 0.5 { step * (0.5 / step.norm()) } else { step };
        w -= step;
        if !w.is_finite() || w.im < win.im_min - 0.5 || w.im > win.im_max + 1.0 || w.re.abs() > win.re_max + 1.0 {
            return None;
        }
        if step.norm() < 1e-13 * (1.0 + w.norm()) {
            let r = dielectric(profile, k, q, w).norm();
            return (r < 1e-9).then_some(w);
        }
    }
    None
}

/// Least-damped root of `ε(ω, k) = 0` for charge `q`: the converged root
/// with the largest imaginary part, preferring `Re ω >= 0` among mirror
/// pairs. Starting points are the local minima of `|ε|` on `window`.
pub fn dispersion_root_oracle(profile: &Profile, k: f64, q: f64, window: Option<ScanWindow>) -> Result<DispersionRoot> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Input(format!("wavenumber must be positive (got {k})")));
    }
    profile.validate()?;
    let win = window.unwrap_or_else(|| ScanWindow::for_profile(profile, k));
    let (nr, ni) = (win.n_re.max(3), win.n_im.max(3));
    let at = |i: usize, j: usize| {
        Complex64::new(
            -win.re_max + 2.0 * win.re_max * i as f64 / (nr - 1) as f64,
            win.im_min + (win.im_max - win.im_min) * j as f64 / (ni - 1) as f64,
        )
    };
    let grid: Vec<Vec<f64>> =
        (0..nr).map(|i| (0..ni).map(|j| dielectric(profile, k, q, at(i, j)).norm()).collect()).collect();
    let mut minima = Vec::new();
    for i in 0..nr {
        for j in 0..ni {
            let v = grid[i][j];
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) != (0, 0)
                        && a >= 0
                        && b >= 0
                        && (a as usize) < nr
                        && (b as usize) < ni
                        && grid[a as usize][b as usize] < v
                    {
                        is_min = false;
                    }
                }
            }
            if is_min {
                minima.push((at(i, j), v));
            }
        }
    }
    minima.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut roots: Vec<Complex64> = Vec::new();
    for (start, _) in &minima {
        if let Some(r) = newton(profile, k, q, *start, &win) {
            if r.im >= win.im_min - 1e-9 && !roots.iter().any(|x| (x - r).norm() < 1e-8) {
                roots.push(r);
            }
        }
    }
    let best = roots.into_iter().max_by(|a, b| {
        let da = a.im - b.im;
        if da.abs() > 1e-9 {
            da.total_cmp(&0.0)
        } else {
            a.re.total_cmp(&b.re)
        }
    });
    match best {
        Some(w) => Ok(DispersionRoot { omega_re: w.re, omega_im: w.im, residual: dielectric(profile, k, q, w).norm() }),
        None => Err(Error::NoRoot { minima: minima.iter().take(8).map(|(z, v)| (z.re, z.im, *v)).collect() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn landau_root_of_the_maxwellian() {
        let r = dispersion_root_oracle(&Profile::maxwellian(), 0.5, 1.0, None).unwrap();
        assert!((r.omega_re - 1.415_661_9).abs() < 1e-6, "{r:?}");
        assert!((r.omega_im + 0.153_359_5).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn long_wavelength_limit_follows_bohm_gross() {
        let k = 0.1;
        let r = dispersion_root_oracle(&Profile::maxwellian(), k, 1.0, None).unwrap();
        let bg = 1.0 + 1.5 * k * k;
        assert!((r.omega_re - bg).abs() / bg < 0.02, "{r:?}");
        assert!(r.omega_im.abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn symmetric_two_stream_root_is_purely_growing() {
        let r = dispersion_root_oracle(&Profile::two_stream(2.4, 1.0), 0.2, 1.0, None).unwrap();
        assert!(r.omega_re.abs() < 1e-8, "{r:?}");
        assert!((r.omega_im - 0.225_844).abs() < 1e-5, "{r:?}");
    }

    #[test]
    fn dielectric_is_continuous_across_the_real_axis() {
        let p = Profile::maxwellian();
        let a = dielectric(&p, 0.5, 1.0, Complex64::new(1.2, 1e-7));
        let b = dielectric(&p, 0.5, 1.0, Complex64::new(1.2, -1e-7));
        assert!((a - b).norm() < 1e-5);
    }

    #[test]
    fn empty_window_reports_scan_minima() {
        let win = ScanWindow { re_max: 0.2, im_min: 0.5, im_max: 0.6, n_re: 5, n_im: 3 };
        match dispersion_root_oracle(&Profile::maxwellian(), 0.5, 1.0, Some(win)) {
            Err(Error::NoRoot { minima }) => assert!(!minima.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }
}
