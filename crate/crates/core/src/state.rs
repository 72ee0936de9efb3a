//! The reduced Eulerian state `z = (f, E, B)`, its moments and the
//! conserved functionals evaluated by grid quadrature.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::grid::{remove_mean, Geometry, PhaseSpace};

/// Distribution function on the phase grid plus electromagnetic fields.
///
/// `f` has shape `(Nx, Nvel)`; `e` holds `E1` (and `E2` in the
/// electromagnetic geometry); `b` holds `B3` and is `None` in the
/// electrostatic geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub f: Array2<f64>,
    pub e: Vec<Array1<f64>>,
    pub b: Option<Array1<f64>>,
}

impl State {
    pub fn zeros(ps: &PhaseSpace) -> Self {
        let nx = ps.nx();
        State {
            f: Array2::zeros(ps.phase_shape()),
            e: vec![Array1::zeros(nx); ps.geometry().e_components()],
            b: ps.geometry().has_b().then(|| Array1::zeros(nx)),
        }
    }

    /// State with the given distribution and the zero-mean electric field
    /// solving Gauss's law; transverse fields start at zero.
    pub fn with_poisson_field(ps: &PhaseSpace, f: Array2<f64>) -> Result<Self> {
        ps.check_phase("f", &f)?;
        let rho = charge_density(&f, ps)?;
        let mut z = State::zeros(ps);
        z.e[0] = ps.poisson_field(&remove_mean(&rho));
        z.f = f;
        Ok(z)
    }

    pub fn validate(&self, ps: &PhaseSpace) -> Result<()> {
        ps.check_phase("f", &self.f)?;
        let geom = ps.geometry();
        if self.e.len() != geom.e_components() {
            return Err(shape_err("E components", geom.e_components(), self.e.len()));
        }
        for e in &self.e {
            ps.check_spatial("E", e)?;
        }
        match (&self.b, geom.has_b()) {
            (Some(b), true) => ps.check_spatial("B", b)?,
            (None, false) => {}
            (Some(_), false) => return Err(Error::Input("B present in the electrostatic geometry".into())),
            (None, true) => return Err(Error::Input("B3 missing in the electromagnetic geometry".into())),
        }
        if !self.is_finite() {
            return Err(Error::Input("state contains non-finite entries".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.f.iter().all(|x| x.is_finite())
            && self.e.iter().all(|e| e.iter().all(|x| x.is_finite()))
            && self.b.as_ref().is_none_or(|b| b.iter().all(|x| x.is_finite()))
    }

    /// `self + s * t`.
    pub fn axpy(&self, s: f64, t: &crate::bracket::StateTangent) -> State {
        let mut out = self.clone();
        out.f.scaled_add(s, &t.df);
        for (e, de) in out.e.iter_mut().zip(&t.de) {
            e.scaled_add(s, de);
        }
        if let (Some(b), Some(db)) = (out.b.as_mut(), t.db.as_ref()) {
            b.scaled_add(s, db);
        }
        out
    }

    /// Maximum absolute entry over all components.
    pub fn max_abs(&self) -> f64 {
        let mut m = self.f.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for e in &self.e {
            m = e.iter().fold(m, |a, x| a.max(x.abs()));
        }
        if let Some(b) = &self.b {
            m = b.iter().fold(m, |a, x| a.max(x.abs()));
        }
        m
    }
}

/// Charge and current densities.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub rho: Array1<f64>,
    pub j: Vec<Array1<f64>>,
}

impl Moments {
    pub fn of(f: &Array2<f64>, ps: &PhaseSpace) -> Result<Self> {
        Ok(Moments { rho: charge_density(f, ps)?, j: current_density(f, ps)? })
    }
}

/// `rho(x) = q * sum_v f w`, with the spatial mean removed when the grid
/// carries a neutralizing background.
pub fn charge_density(f: &Array2<f64>, ps: &PhaseSpace) -> Result<Array1<f64>> {
    ps.check_phase("f", f)?;
    let q = ps.q();
    let rho = ps.velocity_moment(f, |_, _| q);
    Ok(if ps.grid().background_neutralizing { remove_mean(&rho) } else { rho })
}

/// `j_k(x) = q * sum_v v_k f w`, one component per velocity dimension.
pub fn current_density(f: &Array2<f64>, ps: &PhaseSpace) -> Result<Vec<Array1<f64>>> {
    ps.check_phase("f", f)?;
    let q = ps.q();
    let mut j = vec![ps.velocity_moment(f, |v1, _| q * v1)];
    if ps.geometry() == Geometry::Em1d2v {
        j.push(ps.velocity_moment(f, |_, v2| q * v2));
    }
    Ok(j)
}

/// Kinetic part `sum 1/2 |v|^2 f w dx`.
pub fn kinetic_energy(f: &Array2<f64>, ps: &PhaseSpace) -> Result<f64> {
    ps.check_phase("f", f)?;
    Ok(ps.velocity_moment(f, |v1, v2| 0.5 * (v1 * v1 + v2 * v2)).sum() * ps.dx())
}

/// Field part `1/2 sum (|E|^2 + |B|^2) dx`.
pub fn field_energy(z: &State, ps: &PhaseSpace) -> f64 {
    let mut s: f64 = z.e.iter().map(|e| e.dot(e)).sum();
    if let Some(b) = &z.b {
        s += b.dot(b);
    }
    0.5 * s * ps.dx()
}

/// Total energy `H = kinetic + field`.
pub fn total_energy(z: &State, ps: &PhaseSpace) -> Result<f64> {
    z.validate(ps)?;
    Ok(kinetic_energy(&z.f, ps)? + field_energy(z, ps))
}

/// `sum f^p w dx`. Fractional powers require `f >= 0`.
pub fn casimir_lp(f: &Array2<f64>, ps: &PhaseSpace, p: f64) -> Result<f64> {
    ps.check_phase("f", f)?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Domain(format!("casimir exponent must be >= 1 (got {p})")));
    }
    let integer = p.fract() == 0.0 && p <= i32::MAX as f64;
    if !integer {
        if let Some(bad) = f.iter().find(|&&x| x < 0.0) {
            return Err(Error::Domain(format!("negative density {bad:e} with fractional exponent {p}")));
        }
    }
    let pow = |x: f64| if integer { x.powi(p as i32) } else { x.powf(p) };
    let w = ps.vel_weights();
    let s: f64 = f.outer_iter().map(|row| row.iter().zip(w.iter()).map(|(x, wj)| pow(*x) * wj).sum::<f64>()).sum();
    Ok(s * ps.dx())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseGrid;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn maxwellian(v: f64) -> f64 {
        (-0.5 * v * v).exp() / (2.0 * PI).sqrt()
    }

    fn es(nv: usize, neutral: bool) -> PhaseSpace {
        let mut g = PhaseGrid::es(4.0 * PI, 16, 6.0, nv);
        g.background_neutralizing = neutral;
        PhaseSpace::new(g).unwrap()
    }

    #[test]
    fn zero_distribution_has_zero_moments() {
        let ps = es(64, false);
        let f = Array2::zeros(ps.phase_shape());
        assert!(charge_density(&f, &ps).unwrap().iter().all(|&r| r == 0.0));
        assert!(current_density(&f, &ps).unwrap()[0].iter().all(|&r| r == 0.0));
        assert_eq!(casimir_lp(&f, &ps, 2.0).unwrap(), 0.0);
        assert_eq!(total_energy(&State::zeros(&ps), &ps).unwrap(), 0.0);
    }

    #[test]
    fn constant_distribution_integrates_exactly() {
        let ps = es(33, false);
        let f = Array2::from_elem(ps.phase_shape(), 0.7);
        for r in charge_density(&f, &ps).unwrap() {
            assert_abs_diff_eq!(r, 0.7 * 12.0, epsilon = 1e-12);
        }
        let ones = Array2::from_elem(ps.phase_shape(), 1.0);
        for p in [1.0, 2.5, 3.0] {
            assert_abs_diff_eq!(casimir_lp(&ones, &ps, p).unwrap(), 4.0 * PI * 12.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn maxwellian_moments() {
        let ps = es(64, false);
        let f = ps.phase_fn(|_, v, _| maxwellian(v));
        for r in charge_density(&f, &ps).unwrap() {
            assert_abs_diff_eq!(r, 1.0, epsilon = 1e-6);
        }
        for j in &current_density(&f, &ps).unwrap()[0] {
            assert_abs_diff_eq!(*j, 0.0, epsilon = 1e-14);
        }
        let drift = ps.phase_fn(|_, v, _| maxwellian(v - 0.3));
        let rho = charge_density(&drift, &ps).unwrap();
        let j = &current_density(&drift, &ps).unwrap()[0];
        for (r, jj) in rho.iter().zip(j.iter()) {
            assert_abs_diff_eq!(*jj, 0.3 * r, epsilon = 1e-6);
        }
    }

    #[test]
    fn energy_of_simple_states() {
        let ps = es(128, true);
        let mut z = State::zeros(&ps);
        z.e[0].fill(0.5);
        assert_abs_diff_eq!(total_energy(&z, &ps).unwrap(), 0.5 * 0.25 * 4.0 * PI, epsilon = 1e-12);
        let z = State::with_poisson_field(&ps, ps.phase_fn(|_, v, _| maxwellian(v))).unwrap();
        assert_abs_diff_eq!(total_energy(&z, &ps).unwrap(), 2.0 * PI, epsilon = 1e-6);
    }

    #[test]
    fn l2_casimir_of_maxwellian() {
        let ps = es(64, true);
        let f = ps.phase_fn(|_, v, _| maxwellian(v));
        let expect = 4.0 * PI / (2.0 * PI.sqrt());
        assert_abs_diff_eq!(casimir_lp(&f, &ps, 2.0).unwrap(), expect, epsilon = 1e-5);
    }

    #[test]
    fn fractional_exponent_rejects_negative_density() {
        let ps = es(8, true);
        let mut f = Array2::from_elem(ps.phase_shape(), 1.0);
        f[[0, 0]] = -1e-3;
        assert!(matches!(casimir_lp(&f, &ps, 1.5), Err(Error::Domain(_))));
        assert!(casimir_lp(&f, &ps, 2.0).is_ok());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let ps = es(8, true);
        let f = Array2::zeros((3, 8));
        assert!(matches!(charge_density(&f, &ps), Err(Error::Shape { .. })));
    }
}
