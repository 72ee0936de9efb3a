//! Stationary states used by the stability, Casimir and control analyses.

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use crate::dynamics::rhs;
use crate::error::{shape_err, Error, Result};
use crate::grid::PhaseSpace;
use crate::profile::Profile;
use crate::state::State;

/// An equilibrium `(F0, E0, B0)`.
///
/// Homogeneous equilibria store only the velocity profile `f0` on the
/// flattened velocity grid. Inhomogeneous ones also carry the full state;
/// `f0` is then the spatial average. The maximum of `|rhs|` is measured at
/// construction and kept in `rhs_residual`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    /// Profile name, `"custom"` for tabulated data or `"inhomogeneous"`.
    pub kind: String,
    pub f0: Array1<f64>,
    pub profile: Option<Profile>,
    pub state: Option<State>,
    pub rhs_residual: f64,
}

impl Equilibrium {
    pub fn from_profile(profile: &Profile, ps: &PhaseSpace) -> Result<Self> {
        profile.validate()?;
        let f = profile.sample_phase(ps);
        let mut eq = Self::custom(f.row(0).to_owned(), ps)?;
        eq.kind = profile.name().to_string();
        eq.profile = Some(profile.clone());
        Ok(eq)
    }

    /// Homogeneous equilibrium from tabulated values on the velocity grid.
    pub fn custom(f0: Array1<f64>, ps: &PhaseSpace) -> Result<Self> {
        if f0.len() != ps.nvel() {
            return Err(shape_err("F0", ps.nvel(), f0.len()));
        }
        if f0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("F0 contains non-finite entries".into()));
        }
        let mut eq = Equilibrium { kind: "custom".into(), f0, profile: None, state: None, rhs_residual: 0.0 };
        eq.rhs_residual = rhs(&eq.to_state(ps)?, ps, None)?.max_abs();
        Ok(eq)
    }

    /// Equilibrium from a full state; homogeneous if `f` does not vary in
    /// `x` and all fields vanish.
    pub fn from_state(z: State, ps: &PhaseSpace) -> Result<Self> {
        z.validate(ps)?;
        let f0 = z.f.mean_axis(Axis(0)).expect("nx > 0");
        let uniform = z.f.outer_iter().all(|row| row == f0.view())
            && z.e.iter().all(|e| e.iter().all(|&x| x == 0.0))
            && z.b.as_ref().is_none_or(|b| b.iter().all(|&x| x == 0.0));
        if uniform {
            return Self::custom(f0, ps);
        }
        let rhs_residual = rhs(&z, ps, None)?.max_abs();
        Ok(Equilibrium { kind: "inhomogeneous".into(), f0, profile: None, state: Some(z), rhs_residual })
    }

    pub fn is_homogeneous(&self) -> bool {
        self.state.is_none()
    }

    /// The equilibrium as a phase-space state.
    pub fn to_state(&self, ps: &PhaseSpace) -> Result<State> {
        if let Some(z) = &self.state {
            return Ok(z.clone());
        }
        if self.f0.len() != ps.nvel() {
            return Err(shape_err("F0", ps.nvel(), self.f0.len()));
        }
        let mut z = State::zeros(ps);
        for mut row in z.f.outer_iter_mut() {
            row.assign(&self.f0);
        }
        Ok(z)
    }
}
