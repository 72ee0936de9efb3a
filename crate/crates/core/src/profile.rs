//! Velocity profiles used as equilibria and initial conditions.
//!
//! Every built-in profile is a finite mixture of Gaussians, which keeps the
//! profile and its derivative entire functions of `v`; the dispersion oracle
//! relies on that to continue the dielectric function below the real axis.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Geometry, PhaseSpace};

/// One Gaussian component `weight * N(mean, sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub weight: f64,
    pub mean: f64,
    pub sigma: f64,
}

impl Gaussian {
    fn value(&self, v: f64) -> f64 {
        let s = (v - self.mean) / self.sigma;
        self.weight * (-0.5 * s * s).exp() / (self.sigma * (2.0 * PI).sqrt())
    }

    fn derivative(&self, v: f64) -> f64 {
        -(v - self.mean) / (self.sigma * self.sigma) * self.value(v)
    }

    fn value_c(&self, v: Complex64) -> Complex64 {
        let s = (v - self.mean) / self.sigma;
        (-0.5 * s * s).exp() * (self.weight / (self.sigma * (2.0 * PI).sqrt()))
    }

    fn derivative_c(&self, v: Complex64) -> Complex64 {
        -(v - self.mean) / (self.sigma * self.sigma) * self.value_c(v)
    }

    fn second_derivative_c(&self, v: Complex64) -> Complex64 {
        let s2 = self.sigma * self.sigma;
        let d = v - self.mean;
        (d * d / s2 - 1.0) / s2 * self.value_c(v)
    }
}

/// Unit-density velocity profile `F0(v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// Maxwellian with thermal speed `sigma` drifting at `drift`.
    Maxwellian {
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default)]
        drift: f64,
    },
    /// Two counter-propagating Maxwellian beams at `±u0`, half the density each.
    TwoStream {
        u0: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    /// Unit-temperature core plus a beam carrying `fraction` of the density.
    BumpOnTail { fraction: f64, velocity: f64, sigma: f64 },
    /// Arbitrary normalized Gaussian mixture.
    Mixture { components: Vec<Gaussian> },
}

fn one() -> f64 {
    1.0
}

impl Profile {
    pub fn maxwellian() -> Self {
        Profile::Maxwellian { sigma: 1.0, drift: 0.0 }
    }

    pub fn two_stream(u0: f64, sigma: f64) -> Self {
        Profile::TwoStream { u0, sigma }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Profile::Maxwellian { .. } => "maxwellian",
            Profile::TwoStream { .. } => "two_stream",
            Profile::BumpOnTail { .. } => "bump_on_tail",
            Profile::Mixture { .. } => "mixture",
        }
    }

    pub fn components(&self) -> Vec<Gaussian> {
        match *self {
            Profile::Maxwellian { sigma, drift } => vec![Gaussian { weight: 1.0, mean: drift, sigma }],
            Profile::TwoStream { u0, sigma } => {
                vec![Gaussian { weight: 0.5, mean: u0, sigma }, Gaussian { weight: 0.5, mean: -u0, sigma }]
            }
            Profile::BumpOnTail { fraction, velocity, sigma } => vec![
                Gaussian { weight: 1.0 - fraction, mean: 0.0, sigma: 1.0 },
                Gaussian { weight: fraction, mean: velocity, sigma },
            ],
            Profile::Mixture { ref components } => components.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let comps = self.components();
        if comps.is_empty() {
            return Err(Error::Input("profile has no components".into()));
        }
        for c in &comps {
            if !(c.sigma > 0.0 && c.sigma.is_finite()) {
                return Err(Error::Input(format!("profile width must be positive (got {})", c.sigma)));
            }
            if !(c.weight.is_finite() && c.mean.is_finite()) {
                return Err(Error::Input("profile parameters must be finite".into()));
            }
        }
        if let Profile::BumpOnTail { fraction, .. } = self {
            if !(0.0..1.0).contains(fraction) {
                return Err(Error::Input(format!("beam fraction must lie in [0, 1) (got {fraction})")));
            }
        }
        Ok(())
    }

    pub fn value(&self, v: f64) -> f64 {
        self.components().iter().map(|g| g.value(v)).sum()
    }

    pub fn derivative(&self, v: f64) -> f64 {
        self.components().iter().map(|g| g.derivative(v)).sum()
    }

    /// Analytic continuation of `F0` to complex velocity.
    pub fn value_c(&self, v: Complex64) -> Complex64 {
        self.components().iter().map(|g| g.value_c(v)).sum()
    }

    /// Analytic continuation of `F0'`.
    pub fn derivative_c(&self, v: Complex64) -> Complex64 {
        self.components().iter().map(|g| g.derivative_c(v)).sum()
    }

    /// Analytic continuation of `F0''`.
    pub fn second_derivative_c(&self, v: Complex64) -> Complex64 {
        self.components().iter().map(|g| g.second_derivative_c(v)).sum()
    }

    /// Smallest and largest component means, padded by the widest spread.
    pub fn support_hint(&self) -> (f64, f64) {
        let comps = self.components();
        let lo = comps.iter().map(|g| g.mean - 12.0 * g.sigma).fold(f64::INFINITY, f64::min);
        let hi = comps.iter().map(|g| g.mean + 12.0 * g.sigma).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Profile sampled on the 1D velocity nodes.
    pub fn sample_1d(&self, ps: &PhaseSpace) -> Array1<f64> {
        ps.v().mapv(|v| self.value(v))
    }

    /// Spatially uniform phase-space density. In the electromagnetic
    /// geometry the `v2` direction carries a unit Maxwellian.
    pub fn sample_phase(&self, ps: &PhaseSpace) -> Array2<f64> {
        let perp = Profile::maxwellian();
        match ps.geometry() {
            Geometry::Es1d1v => ps.phase_fn(|_, v, _| self.value(v)),
            Geometry::Em1d2v => ps.phase_fn(|_, v1, v2| self.value(v1) * perp.value(v2)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseGrid;
    use approx::assert_abs_diff_eq;

    #[test]
    fn profiles_are_normalized() {
        let ps = PhaseSpace::new(PhaseGrid::es(1.0, 4, 12.0, 801)).unwrap();
        for p in [
            Profile::maxwellian(),
            Profile::two_stream(2.4, 1.0),
            Profile::BumpOnTail { fraction: 0.1, velocity: 4.5, sigma: 0.5 },
        ] {
            let n: f64 = p.sample_1d(&ps).dot(ps.v_weights_1d());
            assert_abs_diff_eq!(n, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn complex_evaluation_matches_real_axis() {
        let p = Profile::two_stream(2.0, 0.8);
        for v in [-3.0, -0.4, 0.0, 1.3, 2.9] {
            let z = Complex64::new(v, 0.0);
            assert_abs_diff_eq!(p.value_c(z).re, p.value(v), epsilon = 1e-15);
            assert_abs_diff_eq!(p.derivative_c(z).re, p.derivative(v), epsilon = 1e-15);
            let h = 1e-5;
            let fd = (p.derivative(v + h) - p.derivative(v - h)) / (2.0 * h);
            assert_abs_diff_eq!(p.second_derivative_c(z).re, fd, epsilon = 1e-8);
        }
    }

    #[test]
    fn config_round_trip() {
        let p: Profile = serde_json::from_str(r#"{"kind":"two_stream","u0":3.0}"#).unwrap();
        assert_eq!(p, Profile::two_stream(3.0, 1.0));
        assert!(serde_json::from_str::<Profile>(r#"{"kind":"maxwellian","width":2}"#).is_err());
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(Profile::Maxwellian { sigma: 0.0, drift: 0.0 }.validate().is_err());
        assert!(Profile::BumpOnTail { fraction: 1.5, velocity: 3.0, sigma: 0.5 }.validate().is_err());
    }
}
