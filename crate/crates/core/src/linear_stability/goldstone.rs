//! Neutral modes generated by spatial translation, and the inhomogeneous
//! equilibria on which they are non-trivial.
//!
//! Translation invariance of the vector field implies that `∂x z0` is a
//! zero mode of the linearization at any equilibrium `z0`. The residual is
//! evaluated by directional central differencing of the nonlinear vector
//! field, so no inhomogeneous operator is assembled.
//!
//! The test equilibria are BGK states `f = G(v²/2 + q φ(x))` built from a
//! two-stream profile, whose energy dependence `G` continues analytically
//! to negative energies (trapped particles). The potential is a cosine
//! series whose wavenumber and higher harmonics are found by Newton
//! iteration on Gauss's law.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bracket::StateTangent;
use crate::dynamics::rhs;
use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::grid::PhaseSpace;
use crate::state::State;

/// Continuous symmetries available as neutral-mode generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryGenerator {
    XTranslation,
}

/// Infinitesimal generator `∂x z` of the translation group acting on `z`.
pub fn symmetry_direction(z: &State, ps: &PhaseSpace) -> StateTangent {
    StateTangent {
        df: ps.dx_phase(&z.f),
        de: z.e.iter().map(|e| ps.dx_field(e)).collect(),
        db: z.b.as_ref().map(|b| ps.dx_field(b)),
    }
}

fn state_max_abs(z: &State) -> f64 {
    z.max_abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeutralModeReport {
    /// `||L(δz)|| / ||δz||` with `δz` the symmetry direction.
    pub residual: f64,
    /// Set when the symmetry direction vanishes (homogeneous equilibrium).
    pub trivial: bool,
    /// Relative equilibrium defect `||rhs(z0)|| / ||z0||`.
    pub rhs_residual: f64,
    pub direction_norm: f64,
}

/// Residual of the translation mode at an equilibrium (maximum norms).
pub fn neutral_mode_residual(
    eq: &Equilibrium,
    generator: SymmetryGenerator,
    ps: &PhaseSpace,
) -> Result<NeutralModeReport> {
    let SymmetryGenerator::XTranslation = generator;
    let z0 = eq.to_state(ps)?;
    let scale = state_max_abs(&z0).max(f64::MIN_POSITIVE);
    let r0 = rhs(&z0, ps, None)?.max_abs() / scale;
    let dz = symmetry_direction(&z0, ps);
    let dn = dz.max_abs();
    if eq.is_homogeneous() || dn <= 1e-13 * scale {
        return Ok(NeutralModeReport { residual: 0.0, trivial: true, rhs_residual: r0, direction_norm: dn });
    }
    let h = f64::EPSILON.cbrt() * scale / dn;
    let plus = rhs(&z0.axpy(h, &dz), ps, None)?;
    let minus = rhs(&z0.axpy(-h, &dz), ps, None)?;
    let mut l = plus;
    l.scaled_add(-1.0, &minus);
    Ok(NeutralModeReport {
        residual: l.max_abs() / (2.0 * h) / dn,
        trivial: false,
        rhs_residual: r0,
        direction_norm: dn,
    })
}

/// Periodic BGK equilibrium built on a two-stream energy profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BgkSolution {
    pub u0: f64,
    pub sigma: f64,
    pub q: f64,
    /// Wavenumber of the fundamental; the period is `2 pi / k`.
    pub k: f64,
    /// Cosine coefficients `a_1 … a_M` of the potential.
    pub coeffs: Vec<f64>,
    /// Maximum Gauss-law residual of the harmonic balance.
    pub residual: f64,
}

/// `G(e)` with `G(v^2/2)` equal to the two-stream profile.
fn energy_profile(u0: f64, sigma: f64, e: f64) -> f64 {
    let s2 = sigma * sigma;
    let y = 2.0 * u0 * u0 * e / (s2 * s2);
    let c = if y >= 0.0 { y.sqrt().cosh() } else { (-y).sqrt().cos() };
    (-(e + 0.5 * u0 * u0) / s2).exp() * c / (sigma * (2.0 * PI).sqrt())
}

struct Density {
    u0: f64,
    sigma: f64,
    v: Vec<f64>,
    dv: f64,
}

impl Density {
    fn new(u0: f64, sigma: f64) -> Self {
        let vm = u0.abs() + 14.0 * sigma;
        let n = 6001;
        let dv = 2.0 * vm / (n - 1) as f64;
        Density { u0, sigma, v: (0..n).map(|j| -vm + j as f64 * dv).collect(), dv }
    }

    /// `n(ψ) = ∫ G(v^2/2 + ψ) dv`.
    fn at(&self, psi: f64) -> f64 {
        let n = self.v.len();
        self.v
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
                w * energy_profile(self.u0, self.sigma, 0.5 * v * v + psi)
            })
            .sum::<f64>()
            * self.dv
    }
}

const SAMPLES: usize = 64;

fn potential(coeffs: &[f64], theta: f64) -> f64 {
    coeffs.iter().enumerate().map(|(m, a)| a * ((m + 1) as f64 * theta).cos()).sum()
}

fn harmonic_residual(dens: &Density, q: f64, k: f64, coeffs: &[f64]) -> Vec<f64> {
    let rho: Vec<f64> = (0..SAMPLES)
        .map(|l| {
            let th = 2.0 * PI * l as f64 / SAMPLES as f64;
            q * dens.at(q * potential(coeffs, th))
        })
        .collect();
    (1..=coeffs.len())
        .map(|m| {
            let proj: f64 = rho
                .iter()
                .enumerate()
                .map(|(l, r)| r * (m as f64 * 2.0 * PI * l as f64 / SAMPLES as f64).cos())
                .sum::<f64>()
                * 2.0
                / SAMPLES as f64;
            (m as f64 * k).powi(2) * coeffs[m - 1] - proj
        })
        .collect()
}

/// Solve for a BGK state whose potential has fundamental amplitude
/// `amplitude` and `harmonics` cosine modes.
pub fn two_stream_bgk(u0: f64, sigma: f64, q: f64, amplitude: f64, harmonics: usize) -> Result<BgkSolution> {
    if !(sigma > 0.0) || harmonics == 0 || !amplitude.is_finite() {
        return Err(Error::Input(
            "BGK construction needs sigma > 0, at least one harmonic and finite amplitude".into(),
        ));
    }
    let dens = Density::new(u0, sigma);
    let h = 1e-4;
    let dn0 = (dens.at(h) - dens.at(-h)) / (2.0 * h);
    let k2 = q * q * dn0;
    if k2 <= 0.0 {
        return Err(Error::Domain(format!(
            "profile admits no small-amplitude periodic BGK wave (q^2 dn/dpsi = {k2:.3e})"
        )));
    }
    let m = harmonics;
    let mut k = k2.sqrt();
    let mut coeffs = vec![0.0; m];
    coeffs[0] = amplitude;
    let unpack = |y: &DVector<f64>, coeffs: &mut Vec<f64>| -> f64 {
        for i in 1..m {
            coeffs[i] = y[i];
        }
        y[0]
    };
    let mut y = DVector::from_fn(m, |i, _| if i == 0 { k } else { 0.0 });
    for _ in 0..40 {
        k = unpack(&y, &mut coeffs);
        let r = DVector::from_vec(harmonic_residual(&dens, q, k, &coeffs));
        if r.amax() < 1e-13 {
            break;
        }
        let mut jac = DMatrix::zeros(m, m);
        for c in 0..m {
            let step = 1e-7 * y[c].abs().max(1e-3);
            let mut yp = y.clone();
            yp[c] += step;
            let mut cp = coeffs.clone();
            let kp = unpack(&yp, &mut cp);
            let rp = DVector::from_vec(harmonic_residual(&dens, q, kp, &cp));
            jac.set_column(c, &((rp - &r) / step));
        }
        let delta =
            jac.lu().solve(&r).ok_or_else(|| Error::Domain("singular Jacobian in the BGK harmonic balance".into()))?;
        y -= delta;
    }
    k = unpack(&y, &mut coeffs);
    let fin = harmonic_residual(&dens, q, k, &coeffs);
    let res = fin.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if !(res < 1e-10) || !(k > 0.0) {
        return Err(Error::Domain(format!("BGK harmonic balance did not converge (residual {res:.3e})")));
    }
    Ok(BgkSolution { u0, sigma, q, k, coeffs, residual: res })
}

impl BgkSolution {
    /// Spatial period of the wave.
    pub fn length(&self) -> f64 {
        2.0 * PI / self.k
    }

    pub fn potential(&self, x: f64) -> f64 {
        potential(&self.coeffs, self.k * x)
    }

    /// `E = -dφ/dx`.
    pub fn field(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(m, a)| {
                let mk = (m + 1) as f64 * self.k;
                a * mk * (mk * x).sin()
            })
            .sum()
    }

    /// The equilibrium sampled on a grid whose period matches the wave.
    pub fn state(&self, ps: &PhaseSpace) -> Result<State> {
        let l = ps.grid().length;
        if (l - self.length()).abs() > 1e-10 * l {
            return Err(Error::Input(format!("grid period {l} does not match the BGK wavelength {}", self.length())));
        }
        if (ps.q() - self.q).abs() > 0.0 {
            return Err(Error::Input("grid charge differs from the BGK charge".into()));
        }
        let mut z = State::zeros(ps);
        z.f = ps.phase_fn(|x, v, _| energy_profile(self.u0, self.sigma, 0.5 * v * v + self.q * self.potential(x)));
        z.e[0] = ps.spatial_fn(|x| self.field(x));
        Ok(z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseGrid;
    use crate::profile::Profile;

    #[test]
    fn energy_profile_reproduces_two_stream() {
        let p = Profile::two_stream(2.4, 1.0);
        for v in [-4.0, -1.0, 0.0, 0.7, 3.1] {
            assert!((energy_profile(2.4, 1.0, 0.5 * v * v) - p.value(v)).abs() < 1e-15);
        }
        // Continuation below zero energy stays positive for shallow wells.
        assert!(energy_profile(2.4, 1.0, -0.1) > 0.0);
    }

    #[test]
    fn small_amplitude_wavenumber_matches_linear_limit() {
        let s = two_stream_bgk(2.4, 1.0, 1.0, 1e-4, 3).unwrap();
        assert!((s.k - 0.516_89).abs() < 1e-4, "{}", s.k);
        assert!(two_stream_bgk(0.0, 1.0, 1.0, 1e-3, 2).is_err());
    }

    #[test]
    fn homogeneous_equilibrium_is_trivially_neutral() {
        let ps = PhaseSpace::new(PhaseGrid::es(4.0 * PI, 16, 6.0, 64)).unwrap();
        let eq = Equilibrium::from_profile(&Profile::maxwellian(), &ps).unwrap();
        let r = neutral_mode_residual(&eq, SymmetryGenerator::XTranslation, &ps).unwrap();
        assert!(r.trivial);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn bgk_state_is_a_discrete_equilibrium() {
        let s = two_stream_bgk(2.4, 1.0, 1.0, 0.05, 4).unwrap();
        let ps = PhaseSpace::new(PhaseGrid::es(s.length(), 32, 10.0, 256)).unwrap();
        let z = s.state(&ps).unwrap();
        let r = rhs(&z, &ps, None).unwrap().max_abs() / z.max_abs();
        assert!(r < 1e-6, "{r}");
        assert!(crate::dynamics::gauss_residual(&z, &ps).unwrap() < 1e-8);
    }
}
