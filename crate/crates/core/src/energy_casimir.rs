//! Energy–Casimir analysis of homogeneous electrostatic equilibria.
//!
//! For `F0` strictly decreasing in the particle energy `e = v²/2`, the
//! Casimir density `φ` with `φ'(F0(v)) = -v²/2` makes `(F0, 0)` a critical
//! point of `H + ∫∫φ(f)`. Its second variation is
//! `Q(δf, δE) = ∫∫ φ''(F0) δf² + ∫ δE²` with `φ''(F0(v)) = -v / F0'(v) > 0`.
//!
//! `φ'` and `s φ''` are tabulated as monotone cubics in `u = ln s`, which
//! reproduces the Maxwellian (`φ'` affine in `u`, `s φ''` constant) exactly.

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bracket::StateTangent;
use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::grid::{Geometry, PhaseSpace};
use crate::linalg::null_space;
use crate::linear_stability::{build_linear_operator, effective_projector, EffectiveProjector};
use crate::numerics::{gauss_legendre5, Pchip};
use crate::state::{total_energy, State};

/// Relative density below which velocity nodes are excluded from the
/// Casimir construction and the quadratic form.
pub const SUPPORT_FLOOR: f64 = 1e-12;

/// Casimir density `φ(s)` with first and second derivatives.
#[derive(Debug, Clone)]
pub struct CasimirProfile {
    phi1: Pchip,
    sphi2: Pchip,
    /// `[min, max]` of the tabulated densities.
    pub domain: (f64, f64),
}

impl CasimirProfile {
    /// Profile from tabulated `(s, φ'(s), φ''(s))` with `s` strictly
    /// increasing and positive.
    pub fn tabulated(s: &[f64], phi1: &[f64], phi2: &[f64]) -> Result<Self> {
        if s.len() < 2 || s.len() != phi1.len() || s.len() != phi2.len() {
            return Err(Error::Input("Casimir table needs at least two nodes and matching lengths".into()));
        }
        if s.iter().any(|x| !(*x > 0.0 && x.is_finite())) || s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Input("Casimir table densities must be positive and strictly increasing".into()));
        }
        if phi1.iter().chain(phi2).any(|x| !x.is_finite()) {
            return Err(Error::Input("Casimir table contains non-finite values".into()));
        }
        let u: Vec<f64> = s.iter().map(|x| x.ln()).collect();
        let g: Vec<f64> = s.iter().zip(phi2).map(|(a, b)| a * b).collect();
        let phi1 = Pchip::new(u.clone(), phi1.to_vec()).ok_or_else(|| Error::Input("bad Casimir table".into()))?;
        let sphi2 = Pchip::new(u, g).ok_or_else(|| Error::Input("bad Casimir table".into()))?;
        Ok(CasimirProfile { phi1, sphi2, domain: (s[0], s[s.len() - 1]) })
    }

    fn check(s: f64) -> Result<f64> {
        if s > 0.0 && s.is_finite() {
            Ok(s.ln())
        } else {
            Err(Error::Domain(format!("Casimir derivatives are defined for s > 0 (got {s})")))
        }
    }

    pub fn phi1(&self, s: f64) -> Result<f64> {
        Ok(self.phi1.eval(Self::check(s)?))
    }

    pub fn phi2(&self, s: f64) -> Result<f64> {
        Ok(self.sphi2.eval(Self::check(s)?) / s)
    }

    /// `φ(s) = ∫_0^s φ'`, with `φ(s) = 0` for `s <= 0`. Below the table
    /// `φ'` continues linearly in `ln s`.
    pub fn phi(&self, s: f64) -> f64 {
        if !(s > 0.0) {
            return 0.0;
        }
        let big_u = s.ln();
        let (u, _) = self.phi1.nodes();
        let u0 = u[0];
        let a = self.phi1.eval(u0);
        let b = self.phi1.derivative(u0);
        let tail = |t: f64| t.exp() * (a + b * (t - u0) - b);
        if big_u <= u0 {
            return tail(big_u);
        }
        let integrand = |t: f64| self.phi1.eval(t) * t.exp();
        let mut acc = tail(u0);
        let mut lo = u0;
        for &hi in u.iter().skip(1).chain(std::iter::once(&f64::INFINITY)) {
            let top = hi.min(big_u);
            if top > lo {
                acc += gauss_legendre5(integrand, lo, top);
            }
            if big_u <= hi {
                break;
            }
            lo = hi;
        }
        acc
    }
}

fn parabolic_vertex(v: &[f64], f: &[f64], j: usize) -> f64 {
    if j == 0 || j + 1 >= v.len() {
        return v[j];
    }
    let (a, b, c) = (f[j - 1], f[j], f[j + 1]);
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        return v[j];
    }
    v[j] + 0.5 * (a - c) / den * (v[j + 1] - v[j])
}

/// Casimir density adapted to a homogeneous electrostatic equilibrium.
///
/// `F0` must be even and strictly decreasing in `|v|` on its support
/// (`F0 > SUPPORT_FLOOR * max F0`). An increasing stretch yields
/// [`Error::NonMonotone`] carrying the stretch on `v >= 0`, mirrored to a
/// symmetric interval when it starts at the origin; a flat stretch yields
/// [`Error::DegenerateProfile`].
pub fn casimir_from_equilibrium(eq: &Equilibrium, ps: &PhaseSpace) -> Result<CasimirProfile> {
    if ps.geometry() != Geometry::Es1d1v {
        return Err(Error::Unsupported("Casimir construction is implemented for the electrostatic geometry".into()));
    }
    if !eq.is_homogeneous() {
        return Err(Error::Unsupported("Casimir construction about an inhomogeneous equilibrium".into()));
    }
    let nv = ps.nvel();
    let f0 = eq.f0.as_slice().expect("contiguous");
    if f0.len() != nv {
        return Err(crate::error::shape_err("F0", nv, f0.len()));
    }
    let fmax = f0.iter().copied().fold(0.0, f64::max);
    if !(fmax > 0.0) {
        return Err(Error::Domain("F0 has no positive values".into()));
    }
    if (0..nv).any(|j| (f0[j] - f0[nv - 1 - j]).abs() > 1e-10 * fmax) {
        return Err(Error::Domain("F0 must be even in v for an energy-dependent Casimir".into()));
    }
    let v = ps.v().as_slice().expect("contiguous");
    let floor = SUPPORT_FLOOR * fmax;
    // Nodes with v >= 0 in increasing v.
    let first = nv / 2;
    let idx: Vec<usize> = (first..nv).filter(|&j| f0[j] > floor).collect();
    if idx.len() < 2 {
        return Err(Error::Domain("F0 support holds fewer than two velocity nodes with v >= 0".into()));
    }
    let vs: Vec<f64> = idx.iter().map(|&j| v[j]).collect();
    let fs: Vec<f64> = idx.iter().map(|&j| f0[j]).collect();
    for i in 1..fs.len() {
        if fs[i] > fs[i - 1] {
            let start = i - 1;
            let mut end = i;
            while end + 1 < fs.len() && fs[end + 1] > fs[end] {
                end += 1;
            }
            let hi = parabolic_vertex(&vs, &fs, end);
            let at_origin = start == 0 && vs[0] <= ps.grid().dv();
            let lo = if at_origin { -hi } else { parabolic_vertex(&vs, &fs, start) };
            return Err(Error::NonMonotone { lo, hi });
        }
    }
    for i in 1..fs.len() {
        if fs[i] == fs[i - 1] {
            let mut end = i;
            while end + 1 < fs.len() && fs[end + 1] == fs[end] {
                end += 1;
            }
            return Err(Error::DegenerateProfile { lo: vs[i - 1], hi: vs[end] });
        }
    }
    // dF0/dv from the profile when it is known, else from the stencil.
    let stencil = ps.stencil().apply(f0);
    let dv = ps.grid().dv();
    let mut table: Vec<(f64, f64, f64)> = Vec::with_capacity(idx.len());
    for (i, &j) in idx.iter().enumerate() {
        let vj = v[j];
        let phi2 = if vj.abs() < 1e-12 * dv {
            let d2 = match &eq.profile {
                Some(p) => p.second_derivative_c(Complex64::new(0.0, 0.0)).re,
                None => (f0[j + 1] - 2.0 * f0[j] + f0[j - 1]) / (dv * dv),
            };
            if !(d2 < 0.0) {
                return Err(Error::DegenerateProfile { lo: 0.0, hi: 0.0 });
            }
            -1.0 / d2
        } else {
            let mut d = match &eq.profile {
                Some(p) => p.derivative(vj),
                None => stencil[j],
            };
            if !(d < 0.0) {
                // Stencil noise at the support edge; fall back to the secant.
                let prev = if i > 0 { fs[i - 1] } else { f0[j - 1] };
                let next = if i + 1 < fs.len() { fs[i + 1] } else { f0[j] };
                d = (next - prev) / (2.0 * dv);
            }
            if !(d < 0.0) {
                return Err(Error::DegenerateProfile { lo: vj, hi: vj });
            }
            -vj / d
        };
        table.push((f0[j], -0.5 * vj * vj, phi2));
    }
    table.reverse();
    let s: Vec<f64> = table.iter().map(|t| t.0).collect();
    let p1: Vec<f64> = table.iter().map(|t| t.1).collect();
    let p2: Vec<f64> = table.iter().map(|t| t.2).collect();
    CasimirProfile::tabulated(&s, &p1, &p2)
}

/// `max |v²/2 + φ'(f)|` over nodes where `f > SUPPORT_FLOOR * max f`, plus
/// `max |E|`: the first variation of `H + C` at the equilibrium.
pub fn first_variation_residual(eq: &Equilibrium, profile: &CasimirProfile, ps: &PhaseSpace) -> Result<f64> {
    let z = eq.to_state(ps)?;
    let fmax = z.f.iter().copied().fold(0.0, f64::max);
    let floor = SUPPORT_FLOOR * fmax;
    let coords = ps.vel_coords();
    let mut r = 0.0f64;
    for row in z.f.outer_iter() {
        for (j, &s) in row.iter().enumerate() {
            if s > floor {
                let e = 0.5 * (coords[j][0].powi(2) + coords[j][1].powi(2));
                r = r.max((e + profile.phi1(s)?).abs());
            }
        }
    }
    let field = z.e.iter().chain(z.b.iter()).flat_map(|a| a.iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(r + field)
}

/// `H(z) + ∫∫ φ(f)` on the grid.
pub fn energy_casimir_functional(z: &State, profile: &CasimirProfile, ps: &PhaseSpace) -> Result<f64> {
    let w = ps.vel_weights();
    let c: f64 =
        z.f.outer_iter()
            .map(|row| row.iter().zip(w.iter()).map(|(f, wj)| profile.phi(*f) * wj).sum::<f64>())
            .sum::<f64>()
            * ps.dx();
    Ok(total_energy(z, ps)? + c)
}

/// Diagonal second variation on the phase grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondVariation {
    /// `φ''(F0_j) Δx W_j` per velocity node, zero off the support.
    pub weights_f: Vec<f64>,
    /// `Δx` for every field sample.
    pub weight_e: f64,
    pub active: Vec<bool>,
}

impl SecondVariation {
    pub fn evaluate(&self, dz: &StateTangent) -> f64 {
        let qf: f64 =
            dz.df.outer_iter().map(|row| row.iter().zip(&self.weights_f).map(|(a, w)| w * a * a).sum::<f64>()).sum();
        let qe: f64 = dz.de.iter().flat_map(|e| e.iter()).map(|x| x * x).sum::<f64>() * self.weight_e;
        qf + qe
    }

    /// Form on the Fourier amplitudes `(δf̂, δÊ)` of mode `k`, for which
    /// `δf = Re(δf̂ e^{ikx})` gives `Q = Σ weights |amplitude|²`.
    pub fn mode(&self, k: f64, ps: &PhaseSpace) -> ModeForm {
        let half = 0.5 * ps.nx() as f64;
        let mut weights: Vec<f64> = self.weights_f.iter().map(|w| w * half).collect();
        weights.push(self.weight_e * half);
        let mut active = self.active.clone();
        active.push(true);
        ModeForm { k, weights, active, charge_weights: Some(ps.vel_weights().iter().map(|w| ps.q() * w).collect()) }
    }
}

/// Second variation of `H + C` at a homogeneous equilibrium.
pub fn second_variation_form(eq: &Equilibrium, profile: &CasimirProfile, ps: &PhaseSpace) -> Result<SecondVariation> {
    if eq.f0.len() != ps.nvel() {
        return Err(crate::error::shape_err("F0", ps.nvel(), eq.f0.len()));
    }
    let fmax = eq.f0.iter().copied().fold(0.0, f64::max);
    let floor = SUPPORT_FLOOR * fmax;
    let dx = ps.dx();
    let w = ps.vel_weights();
    let mut weights_f = vec![0.0; ps.nvel()];
    let mut active = vec![false; ps.nvel()];
    for (j, &s) in eq.f0.iter().enumerate() {
        if s > floor {
            weights_f[j] = profile.phi2(s)? * dx * w[j];
            active[j] = true;
        }
    }
    Ok(SecondVariation { weights_f, weight_e: dx, active })
}

/// Diagonal Hermitian form on the amplitudes of one Fourier mode, with the
/// last coordinate the field amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeForm {
    pub k: f64,
    pub weights: Vec<f64>,
    /// Coordinates that may carry a perturbation.
    pub active: Vec<bool>,
    /// `q W_j` per velocity node; when present the field amplitude is
    /// slaved to `δf̂` by Gauss's law `i k δÊ = Σ q W_j δf̂_j`.
    pub charge_weights: Option<Vec<f64>>,
}

impl ModeForm {
    /// Unconstrained diagonal form with every coordinate active.
    pub fn diagonal(k: f64, weights: Vec<f64>) -> Self {
        let active = vec![true; weights.len()];
        ModeForm { k, weights, active, charge_weights: None }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Columns spanning the admissible amplitudes.
    fn admissible(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        match &self.charge_weights {
            Some(qw) => {
                let free: Vec<usize> = (0..n - 1).filter(|&j| self.active[j]).collect();
                let mut c = DMatrix::zeros(n, free.len());
                let ik = Complex64::new(0.0, self.k);
                for (col, &j) in free.iter().enumerate() {
                    c[(j, col)] = Complex64::new(1.0, 0.0);
                    c[(n - 1, col)] = Complex64::new(qw[j], 0.0) / ik;
                }
                c
            }
            None => {
                let free: Vec<usize> = (0..n).filter(|&j| self.active[j]).collect();
                let mut c = DMatrix::zeros(n, free.len());
                for (col, &j) in free.iter().enumerate() {
                    c[(j, col)] = Complex64::new(1.0, 0.0);
                }
                c
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    PositiveDefinite,
    NegativeDefinite,
    Indefinite,
    Degenerate,
}

impl Verdict {
    pub fn describe(self) -> &'static str {
        match self {
            Verdict::PositiveDefinite | Verdict::NegativeDefinite => "formally stable",
            Verdict::Indefinite => "indefinite: no energy-Casimir stability conclusion",
            Verdict::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefinitenessReport {
    pub verdict: Verdict,
    pub description: String,
    /// Extreme eigenvalues of the form on the effective subspace in the
    /// Euclidean metric of the mode amplitudes.
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Dimension of the constrained, projected subspace.
    pub dimension: usize,
    pub projector_corank: usize,
}

/// Threshold on the normalized inertia eigenvalues in `[-1, 1]`.
pub const DEFINITENESS_TOL: f64 = 1e-10;

/// Verdict from the inertia of `Bᴴ B` with `B = |D|^{1/2} S`. Writing
/// `B = QR`, the restricted form `Bᴴ sign(D) B` is congruent to
/// `Qᴴ sign(D) Q`, whose eigenvalues lie in `[-1, 1]` however widely the
/// weights are spread, so the signs are resolved reliably.
fn inertia_verdict(weights: &[f64], basis: &DMatrix<Complex64>) -> Verdict {
    let n = weights.len();
    let b = DMatrix::from_fn(n, basis.ncols(), |i, j| basis[(i, j)] * weights[i].abs().sqrt());
    let sv = b.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > 1e3 * f64::EPSILON * smax) {
        return Verdict::Degenerate;
    }
    let q = b.qr().q();
    let signed = DMatrix::from_fn(n, q.ncols(), |i, j| q[(i, j)] * weights[i].signum());
    let m = q.adjoint() * signed;
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mu = m.symmetric_eigenvalues();
    let lo = mu.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo > DEFINITENESS_TOL {
        Verdict::PositiveDefinite
    } else if hi < -DEFINITENESS_TOL {
        Verdict::NegativeDefinite
    } else if lo < -DEFINITENESS_TOL && hi > DEFINITENESS_TOL {
        Verdict::Indefinite
    } else {
        Verdict::Degenerate
    }
}

/// Restriction of a mode form to Gauss-consistent amplitudes orthogonal to
/// the projector kernel, and its eigenvalue range.
pub fn definiteness_report(form: &ModeForm, projector: &EffectiveProjector) -> Result<DefinitenessReport> {
    let n = form.dim();
    if projector.dim() != n || form.active.len() != n {
        return Err(crate::error::shape_err("projector", n, projector.dim()));
    }
    let c = form.admissible();
    let s = if projector.corank > 0 && c.ncols() > 0 {
        let constraint = projector.kernel.adjoint() * &c;
        &c * null_space(&constraint, 1e-12)
    } else {
        c
    };
    let empty = DefinitenessReport {
        verdict: Verdict::Degenerate,
        description: Verdict::Degenerate.describe().into(),
        min_eigenvalue: 0.0,
        max_eigenvalue: 0.0,
        dimension: 0,
        projector_corank: projector.corank,
    };
    if s.ncols() == 0 {
        return Ok(empty);
    }
    let dimension = s.ncols();
    let basis = s.qr().q();
    let d = DVector::from_iterator(n, form.weights.iter().map(|w| Complex64::new(*w, 0.0)));
    let scaled = DMatrix::from_fn(n, basis.ncols(), |i, j| d[i] * basis[(i, j)]);
    let h = basis.adjoint() * scaled;
    let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigenvalues();
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let verdict = inertia_verdict(&form.weights, &basis);
    Ok(DefinitenessReport {
        verdict,
        description: verdict.describe().into(),
        min_eigenvalue: lo,
        max_eigenvalue: hi,
        dimension,
        projector_corank: projector.corank,
    })
}

/// Full energy–Casimir assessment of a homogeneous equilibrium at mode `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub k: f64,
    pub first_variation_residual: f64,
    pub definiteness: DefinitenessReport,
}

pub fn stability_report(eq: &Equilibrium, k: f64, ps: &PhaseSpace) -> Result<StabilityReport> {
    let profile = casimir_from_equilibrium(eq, ps)?;
    let residual = first_variation_residual(eq, &profile, ps)?;
    let form = second_variation_form(eq, &profile, ps)?.mode(k, ps);
    let projector = effective_projector(&build_linear_operator(eq, k, ps)?, 1e-10)?;
    if projector.defective {
        warn!("effective projector at k = {k} is defective");
    }
    Ok(StabilityReport { k, first_variation_residual: residual, definiteness: definiteness_report(&form, &projector)? })
}
