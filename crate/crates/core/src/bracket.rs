//! Discrete Maxwell–Vlasov Lie–Poisson bracket and the Hamiltonian vector
//! field it induces.
//!
//! The bracket is the sum of a Vlasov canonical term, a magnetic twisting
//! term, the pure Maxwell curl terms and the field–particle coupling term,
//! each evaluated by grid quadrature. Functional derivatives may also carry
//! a vector-potential sector `d_a`, paired canonically with `E`, which is
//! how linear antenna couplings `∫ J·A` enter; the potential itself is never
//! reconstructed.
//!
//! In the electrostatic geometry the electric field lives in the zero-mean
//! subspace, so every field-sector derivative is projected onto zero mean
//! before it is paired. The vector field is the exact discrete adjoint of
//! the bracket under the grid pairing, so `<F', X_H> = {F, H}` holds to
//! rounding for every linear observable.

use ndarray::{Array1, Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::grid::{remove_mean, Geometry, PhaseSpace};
use crate::state::State;

/// Variational derivatives `(δF/δf, δF/δE, δF/δB)` of an observable, plus an
/// optional vector-potential sector `δF/δA`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDerivative {
    pub d_f: Array2<f64>,
    pub d_e: Vec<Array1<f64>>,
    pub d_b: Option<Array1<f64>>,
    pub d_a: Option<Vec<Array1<f64>>>,
}

impl FunctionalDerivative {
    pub fn zeros(ps: &PhaseSpace) -> Self {
        let z = State::zeros(ps);
        FunctionalDerivative { d_f: z.f, d_e: z.e, d_b: z.b, d_a: None }
    }

    /// Derivative of the total mass `∫∫ f`.
    pub fn total_mass(ps: &PhaseSpace) -> Self {
        let mut d = Self::zeros(ps);
        d.d_f.fill(1.0);
        d
    }

    /// Derivative of the total energy at `z`: `(|v|^2/2, E, B)`.
    pub fn energy(z: &State, ps: &PhaseSpace) -> Self {
        FunctionalDerivative {
            d_f: ps.phase_fn(|_, v1, v2| 0.5 * (v1 * v1 + v2 * v2)),
            d_e: z.e.clone(),
            d_b: z.b.clone(),
            d_a: None,
        }
    }

    /// Derivative of `∫∫ f^p`: `p f^(p-1)` in the kinetic sector only.
    pub fn lp_casimir(z: &State, p: f64) -> Self {
        let d_f = z.f.mapv(|x| if p == 1.0 { 1.0 } else { p * x.powf(p - 1.0) });
        FunctionalDerivative {
            d_f,
            d_e: z.e.iter().map(|e| Array1::zeros(e.len())).collect(),
            d_b: z.b.as_ref().map(|b| Array1::zeros(b.len())),
            d_a: None,
        }
    }

    pub fn validate(&self, ps: &PhaseSpace) -> Result<()> {
        ps.check_phase("d_f", &self.d_f)?;
        let geom = ps.geometry();
        if self.d_e.len() != geom.e_components() {
            return Err(shape_err("d_E components", geom.e_components(), self.d_e.len()));
        }
        for e in &self.d_e {
            ps.check_spatial("d_E", e)?;
        }
        match (&self.d_b, geom.has_b()) {
            (Some(b), true) => ps.check_spatial("d_B", b)?,
            (None, false) => {}
            (None, true) => return Err(Error::Input("d_B missing in the electromagnetic geometry".into())),
            (Some(_), false) => return Err(Error::Input("d_B given in the electrostatic geometry".into())),
        }
        if let Some(a) = &self.d_a {
            if a.len() != geom.e_components() {
                return Err(shape_err("d_A components", geom.e_components(), a.len()));
            }
            for c in a {
                ps.check_spatial("d_A", c)?;
            }
        }
        Ok(())
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        let lin = |x: &Array1<f64>, y: &Array1<f64>| x * a + y * b;
        let d_a = match (&self.d_a, &other.d_a) {
            (None, None) => None,
            (x, y) => {
                let n = self.d_e.len();
                let zero = vec![Array1::zeros(self.d_e[0].len()); n];
                let x = x.as_ref().unwrap_or(&zero);
                let y = y.as_ref().unwrap_or(&zero);
                Some(x.iter().zip(y).map(|(p, q)| lin(p, q)).collect())
            }
        };
        FunctionalDerivative {
            d_f: &self.d_f * a + &other.d_f * b,
            d_e: self.d_e.iter().zip(&other.d_e).map(|(x, y)| lin(x, y)).collect(),
            d_b: match (&self.d_b, &other.d_b) {
                (Some(x), Some(y)) => Some(lin(x, y)),
                _ => None,
            },
            d_a,
        }
    }
}

/// A tangent vector `ż = (df, dE, dB)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateTangent {
    pub df: Array2<f64>,
    pub de: Vec<Array1<f64>>,
    pub db: Option<Array1<f64>>,
}

impl StateTangent {
    pub fn zeros(ps: &PhaseSpace) -> Self {
        let z = State::zeros(ps);
        StateTangent { df: z.f, de: z.e, db: z.b }
    }

    pub fn scaled_add(&mut self, s: f64, other: &StateTangent) {
        self.df.scaled_add(s, &other.df);
        for (a, b) in self.de.iter_mut().zip(&other.de) {
            a.scaled_add(s, b);
        }
        if let (Some(a), Some(b)) = (self.db.as_mut(), other.db.as_ref()) {
            a.scaled_add(s, b);
        }
    }

    pub fn max_abs(&self) -> f64 {
        let mut m = self.df.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        for e in &self.de {
            m = e.iter().fold(m, |a, x| a.max(x.abs()));
        }
        if let Some(b) = &self.db {
            m = b.iter().fold(m, |a, x| a.max(x.abs()));
        }
        m
    }

    /// Maximum absolute difference between two tangents.
    pub fn max_diff(&self, other: &StateTangent) -> f64 {
        let mut d = self.clone();
        d.scaled_add(-1.0, other);
        d.max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.df.iter().all(|x| x.is_finite())
            && self.de.iter().all(|e| e.iter().all(|x| x.is_finite()))
            && self.db.as_ref().is_none_or(|b| b.iter().all(|x| x.is_finite()))
    }
}

/// Grid pairing `<F', ż>` of a derivative with a tangent (kinetic, electric
/// and magnetic sectors; the potential sector has no tangent counterpart).
pub fn pairing(d: &FunctionalDerivative, t: &StateTangent, ps: &PhaseSpace) -> f64 {
    let mut s = ps.phase_inner(&d.d_f, &t.df);
    for (a, b) in d.d_e.iter().zip(&t.de) {
        s += ps.spatial_inner(a, b);
    }
    if let (Some(a), Some(b)) = (&d.d_b, &t.db) {
        s += ps.spatial_inner(a, b);
    }
    s
}

/// Canonical bracket `{a, b}_{x,v} = ∂x a ∂v b − ∂v a ∂x b` pointwise on the
/// grid (`v` is `v1` in the electromagnetic geometry).
pub fn canonical_xv_bracket(a: &Array2<f64>, b: &Array2<f64>, ps: &PhaseSpace) -> Result<Array2<f64>> {
    ps.check_phase("a", a)?;
    ps.check_phase("b", b)?;
    let dxa = ps.dx_phase(a);
    let dxb = ps.dx_phase(b);
    let dva = ps.dv_phase(a, 0);
    let dvb = ps.dv_phase(b, 0);
    let mut out = Array2::zeros(a.dim());
    Zip::from(&mut out)
        .and(&dxa)
        .and(&dvb)
        .and(&dxb)
        .and(&dva)
        .for_each(|o, &xa, &vb, &xb, &va| *o = xa * vb - xb * va);
    Ok(out)
}

/// Individual contributions to the bracket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BracketTerms {
    pub vlasov: f64,
    pub magnetic: f64,
    pub maxwell: f64,
    pub coupling: f64,
    pub potential: f64,
}

impl BracketTerms {
    pub fn total(&self) -> f64 {
        self.vlasov + self.magnetic + self.maxwell + self.coupling + self.potential
    }
}

fn field_projection(ps: &PhaseSpace, e: &[Array1<f64>]) -> Vec<Array1<f64>> {
    match ps.geometry() {
        Geometry::Es1d1v => e.iter().map(remove_mean).collect(),
        Geometry::Em1d2v => e.to_vec(),
    }
}

struct Gradients {
    dx: Array2<f64>,
    dv: Vec<Array2<f64>>,
}

fn gradients(a: &Array2<f64>, ps: &PhaseSpace) -> Gradients {
    let dims = ps.geometry().velocity_dims();
    Gradients { dx: ps.dx_phase(a), dv: (0..dims).map(|d| ps.dv_phase(a, d)).collect() }
}

/// All four bracket terms (plus the potential sector) at state `z`.
pub fn mv_bracket_terms(
    fd: &FunctionalDerivative,
    gd: &FunctionalDerivative,
    z: &State,
    ps: &PhaseSpace,
) -> Result<BracketTerms> {
    fd.validate(ps)?;
    gd.validate(ps)?;
    z.validate(ps)?;
    let geom = ps.geometry();
    let q = ps.q();
    let dx = ps.dx();
    let w = ps.vel_weights();
    let ga = gradients(&fd.d_f, ps);
    let gb = gradients(&gd.d_f, ps);
    let fe = field_projection(ps, &fd.d_e);
    let ge = field_projection(ps, &gd.d_e);

    let mut terms = BracketTerms::default();
    let nvel = ps.nvel();
    for i in 0..ps.nx() {
        let mut vlasov = 0.0;
        let mut magnetic = 0.0;
        let mut coupling = 0.0;
        for j in 0..nvel {
            let wf = w[j] * z.f[[i, j]];
            let p = ga.dx[[i, j]] * gb.dv[0][[i, j]];
            let n = gb.dx[[i, j]] * ga.dv[0][[i, j]];
            vlasov += wf * (p - n);
            let (p, n) = match geom {
                Geometry::Es1d1v => (ge[0][i] * ga.dv[0][[i, j]], fe[0][i] * gb.dv[0][[i, j]]),
                Geometry::Em1d2v => (
                    ge[0][i] * ga.dv[0][[i, j]] + ge[1][i] * ga.dv[1][[i, j]],
                    fe[0][i] * gb.dv[0][[i, j]] + fe[1][i] * gb.dv[1][[i, j]],
                ),
            };
            coupling += wf * (p - n);
            if geom == Geometry::Em1d2v {
                let p = ga.dv[0][[i, j]] * gb.dv[1][[i, j]];
                let n = gb.dv[0][[i, j]] * ga.dv[1][[i, j]];
                magnetic += wf * (p - n);
            }
        }
        terms.vlasov += vlasov;
        terms.coupling += q * coupling;
        if let Some(b) = &z.b {
            terms.magnetic += q * b[i] * magnetic;
        }
    }
    terms.vlasov *= dx;
    terms.coupling *= dx;
    terms.magnetic *= dx;

    if geom == Geometry::Em1d2v {
        let (fb, gbf) = match (&fd.d_b, &gd.d_b) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Input("d_B required in the electromagnetic geometry".into())),
        };
        let dxfb = ps.dx_field(fb);
        let dxgb = ps.dx_field(gbf);
        terms.maxwell = (0..ps.nx()).map(|i| ge[1][i] * dxfb[i] - fe[1][i] * dxgb[i]).sum::<f64>() * dx;
    }

    if fd.d_a.is_some() || gd.d_a.is_some() {
        let zero = vec![Array1::zeros(ps.nx()); fe.len()];
        let fa = fd.d_a.as_ref().map(|a| field_projection(ps, a)).unwrap_or_else(|| zero.clone());
        let ga_ = gd.d_a.as_ref().map(|a| field_projection(ps, a)).unwrap_or(zero);
        let mut s = 0.0;
        for c in 0..fe.len() {
            for i in 0..ps.nx() {
                s += fa[c][i] * ge[c][i] - ga_[c][i] * fe[c][i];
            }
        }
        terms.potential = s * dx;
    }
    Ok(terms)
}

/// Discrete Maxwell–Vlasov bracket `{F, G}(z)`.
pub fn mv_bracket(fd: &FunctionalDerivative, gd: &FunctionalDerivative, z: &State, ps: &PhaseSpace) -> Result<f64> {
    Ok(mv_bracket_terms(fd, gd, z, ps)?.total())
}

/// Tangent `X_H(z)` with `<F', X_H> = {F, H}(z)` for every linear observable.
pub fn hamiltonian_vector_field(hd: &FunctionalDerivative, z: &State, ps: &PhaseSpace) -> Result<StateTangent> {
    hd.validate(ps)?;
    z.validate(ps)?;
    let geom = ps.geometry();
    let q = ps.q();
    let w = ps.vel_weights();
    let gh = gradients(&hd.d_f, ps);
    let he = field_projection(ps, &hd.d_e);
    let wf = &z.f * &w.view().insert_axis(ndarray::Axis(0));

    // Vlasov term: Dx^T(f ∂v1 h) - Dv1^T(w f ∂x h)/w
    let a = &z.f * &gh.dv[0];
    let mut df = -ps.dx_phase(&a);
    let kick = -(&wf * &gh.dx);

    // Coupling term: q Dvc^T(w f E_H,c)/w
    let nvel = ps.nvel();
    let mut per_dim: Vec<Array2<f64>> = (0..geom.velocity_dims())
        .map(|c| Array2::from_shape_fn(wf.dim(), |(i, j)| q * wf[[i, j]] * he[c][i]))
        .collect();
    per_dim[0] += &kick;

    // Magnetic twisting: q [Dv1^T(w f B ∂v2 h) - Dv2^T(w f B ∂v1 h)]/w
    if let (Geometry::Em1d2v, Some(b)) = (geom, &z.b) {
        for i in 0..ps.nx() {
            for j in 0..nvel {
                let s = q * wf[[i, j]] * b[i];
                per_dim[0][[i, j]] += s * gh.dv[1][[i, j]];
                per_dim[1][[i, j]] -= s * gh.dv[0][[i, j]];
            }
        }
    }
    for (c, g) in per_dim.iter().enumerate() {
        let t = ps.dv_transpose_phase(g, c);
        Zip::from(&mut df).and(&t).and_broadcast(w).for_each(|d, &tv, &wj| *d += tv / wj);
    }

    // Field sectors.
    let mut de: Vec<Array1<f64>> = (0..geom.e_components())
        .map(|c| {
            let m = Array1::from_shape_fn(ps.nx(), |i| (0..nvel).map(|j| wf[[i, j]] * gh.dv[c][[i, j]]).sum::<f64>());
            m * (-q)
        })
        .collect();
    if let Some(ha) = &hd.d_a {
        for (e, a) in de.iter_mut().zip(ha) {
            *e -= a;
        }
    }
    let mut db = None;
    if geom == Geometry::Em1d2v {
        let hb = hd.d_b.as_ref().ok_or_else(|| Error::Input("d_B missing".into()))?;
        de[1] -= &ps.dx_field(hb);
        db = Some(-ps.dx_field(&he[1]));
    }
    let de = field_projection(ps, &de);
    Ok(StateTangent { df, de, db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseGrid;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn smooth_derivative(ps: &PhaseSpace, seed: f64) -> FunctionalDerivative {
        let k = ps.grid().k1();
        let mut d = FunctionalDerivative::zeros(ps);
        d.d_f = ps.phase_fn(|x, v1, v2| {
            (k * x + seed).sin() * (0.3 * v1 + seed).cos() * (0.2 * v2 - seed).cos()
                + seed * v1 * v1 * 0.1
                + (2.0 * k * x).cos() * v2 * 0.2
        });
        for (c, e) in d.d_e.iter_mut().enumerate() {
            *e = ps.spatial_fn(|x| (k * x * (c + 1) as f64 + seed).cos() + 0.2);
        }
        if let Some(b) = d.d_b.as_mut() {
            *b = ps.spatial_fn(|x| (k * x - seed).sin());
        }
        d
    }

    fn smooth_state(ps: &PhaseSpace) -> State {
        let k = ps.grid().k1();
        let mut z = State::zeros(ps);
        z.f = ps.phase_fn(|x, v1, v2| (1.0 + 0.2 * (k * x).cos()) * (-0.5 * (v1 * v1 + v2 * v2)).exp());
        for e in z.e.iter_mut() {
            *e = ps.spatial_fn(|x| 0.1 * (k * x).sin());
        }
        if let Some(b) = z.b.as_mut() {
            *b = ps.spatial_fn(|x| 0.3 + 0.1 * (k * x).cos());
        }
        z
    }

    #[test]
    fn canonical_bracket_of_sine_and_kinetic_energy() {
        let l = 4.0 * PI;
        let ps = PhaseSpace::new(PhaseGrid::es(l, 64, 6.0, 128)).unwrap();
        let k = 2.0 * PI / l;
        let a = ps.phase_fn(|x, _, _| (k * x).sin());
        let b = ps.phase_fn(|_, v, _| 0.5 * v * v);
        let r = canonical_xv_bracket(&a, &b, &ps).unwrap();
        let expect = ps.phase_fn(|x, v, _| k * (k * x).cos() * v);
        for (x, y) in r.iter().zip(expect.iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-6);
        }
        let zero = canonical_xv_bracket(&a, &a, &ps).unwrap();
        assert!(zero.iter().all(|&x| x == 0.0));
        let c = ps.phase_fn(|x, _, _| (2.0 * k * x).cos());
        let r = canonical_xv_bracket(&a, &c, &ps).unwrap();
        assert!(r.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn bracket_is_antisymmetric_in_both_geometries() {
        for grid in [PhaseGrid::es(2.0 * PI, 8, 5.0, 16), PhaseGrid::em(2.0 * PI, 8, 5.0, 9)] {
            let ps = PhaseSpace::new(grid).unwrap();
            let z = smooth_state(&ps);
            let f = smooth_derivative(&ps, 0.3);
            let g = smooth_derivative(&ps, 1.1);
            let a = mv_bracket(&f, &g, &z, &ps).unwrap();
            let b = mv_bracket(&g, &f, &z, &ps).unwrap();
            assert_eq!(a, -b);
            assert_eq!(mv_bracket(&f, &f, &z, &ps).unwrap(), 0.0);
            assert!(a.abs() > 1e-6, "{a}");
        }
    }

    #[test]
    fn total_mass_is_annihilated() {
        for grid in [PhaseGrid::es(2.0 * PI, 8, 5.0, 16), PhaseGrid::em(2.0 * PI, 8, 5.0, 9)] {
            let ps = PhaseSpace::new(grid).unwrap();
            let z = smooth_state(&ps);
            let f = smooth_derivative(&ps, 0.7);
            let m = FunctionalDerivative::total_mass(&ps);
            assert!(mv_bracket(&f, &m, &z, &ps).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn vector_field_is_dual_to_bracket() {
        for grid in [PhaseGrid::es(2.0 * PI, 8, 5.0, 16), PhaseGrid::em(2.0 * PI, 8, 5.0, 9)] {
            let ps = PhaseSpace::new(grid).unwrap();
            let z = smooth_state(&ps);
            let h = smooth_derivative(&ps, 0.4);
            let f = smooth_derivative(&ps, 2.1);
            let x = hamiltonian_vector_field(&h, &z, &ps).unwrap();
            let lhs = pairing(&f, &x, &ps);
            let rhs = mv_bracket(&f, &h, &z, &ps).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn energy_flow_vanishes_at_homogeneous_maxwellian() {
        let ps = PhaseSpace::new(PhaseGrid::em(2.0 * PI, 8, 6.0, 24)).unwrap();
        let mut z = State::zeros(&ps);
        z.f = ps.phase_fn(|_, v1, v2| (-0.5 * (v1 * v1 + v2 * v2)).exp() / (2.0 * PI));
        let x = hamiltonian_vector_field(&FunctionalDerivative::energy(&z, &ps), &z, &ps).unwrap();
        assert!(x.max_abs() < 1e-12);
        let x0 = hamiltonian_vector_field(&FunctionalDerivative::zeros(&ps), &z, &ps).unwrap();
        assert_eq!(x0.max_abs(), 0.0);
    }

    #[test]
    fn missing_magnetic_derivative_is_an_input_error() {
        let ps = PhaseSpace::new(PhaseGrid::em(2.0 * PI, 4, 5.0, 5)).unwrap();
        let z = smooth_state(&ps);
        let mut f = smooth_derivative(&ps, 0.1);
        f.d_b = None;
        let g = smooth_derivative(&ps, 0.2);
        assert!(matches!(mv_bracket(&f, &g, &z, &ps), Err(Error::Input(_))));
    }
}
