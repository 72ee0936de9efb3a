//! Semi-discrete nonlinear evolution, RK4 stepping and run diagnostics.
//!
//! The electric field is advanced with Ampère's law, so Gauss's law is a
//! monitored invariant rather than an imposed equation. In the
//! electrostatic geometry the mean current is removed, keeping `E` in the
//! zero-mean gauge fixed by the initial Poisson solve.

use std::fmt::Write as _;

use log::warn;
use ndarray::{Array1, Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bracket::StateTangent;
use crate::error::{Error, Result};
use crate::grid::{remove_mean, Geometry, PhaseSpace};
use crate::profile::Profile;
use crate::state::{casimir_lp, charge_density, current_density, total_energy, State};

/// Additional time-dependent contribution to the vector field, such as a
/// prescribed antenna current or a control channel.
pub trait Drive {
    /// Tangent added to the free vector field at `(z, t)`.
    fn contribution(&self, z: &State, t: f64, ps: &PhaseSpace) -> Result<Option<StateTangent>>;
}

/// The free system.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoDrive;

impl Drive for NoDrive {
    fn contribution(&self, _: &State, _: f64, _: &PhaseSpace) -> Result<Option<StateTangent>> {
        Ok(None)
    }
}

/// Prescribed current `amplitude(t) * profile(x)` entering Ampère's law.
pub struct ExternalCurrent<F: Fn(f64) -> f64> {
    pub profile: Vec<Array1<f64>>,
    pub amplitude: F,
}

impl<F: Fn(f64) -> f64> Drive for ExternalCurrent<F> {
    fn contribution(&self, _z: &State, t: f64, ps: &PhaseSpace) -> Result<Option<StateTangent>> {
        let u = (self.amplitude)(t);
        let j: Vec<Array1<f64>> = self.profile.iter().map(|p| p * u).collect();
        let mut out = StateTangent::zeros(ps);
        out.de = external_current_source(&j, ps)?;
        Ok(Some(out))
    }
}

/// Field-sector source `-j_ext` (mean-free in the electrostatic geometry).
pub fn external_current_source(j_ext: &[Array1<f64>], ps: &PhaseSpace) -> Result<Vec<Array1<f64>>> {
    let n = ps.geometry().e_components();
    if j_ext.len() != n {
        return Err(crate::error::shape_err("j_ext components", n, j_ext.len()));
    }
    j_ext
        .iter()
        .map(|j| {
            ps.check_spatial("j_ext", j)?;
            Ok(match ps.geometry() {
                Geometry::Es1d1v => -remove_mean(j),
                Geometry::Em1d2v => -j.clone(),
            })
        })
        .collect()
}

/// Vlasov–Maxwell vector field at `z`, optionally with a prescribed current.
pub fn rhs(z: &State, ps: &PhaseSpace, j_ext: Option<&[Array1<f64>]>) -> Result<StateTangent> {
    z.validate(ps).map_err(|e| match e {
        Error::Input(msg) if msg.contains("non-finite") => Error::NonFinite { step: 0 },
        other => other,
    })?;
    let q = ps.q();
    let coords = ps.vel_coords();
    let dxf = ps.dx_phase(&z.f);
    let d1f = ps.dv_phase(&z.f, 0);
    let mut df = Array2::zeros(z.f.dim());
    let j = current_density(&z.f, ps)?;
    let mut de: Vec<Array1<f64>>;
    let mut db = None;
    match ps.geometry() {
        Geometry::Es1d1v => {
            Zip::indexed(&mut df).and(&dxf).and(&d1f).for_each(|(i, jv), d, &fx, &fv| {
                *d = -coords[jv][0] * fx - q * z.e[0][i] * fv;
            });
            de = vec![-remove_mean(&j[0])];
        }
        Geometry::Em1d2v => {
            let d2f = ps.dv_phase(&z.f, 1);
            let b = z.b.as_ref().expect("validated");
            Zip::indexed(&mut df).and(&dxf).and(&d1f).and(&d2f).for_each(|(i, jv), d, &fx, &f1, &f2| {
                let [v1, v2] = coords[jv];
                let a1 = z.e[0][i] + v2 * b[i];
                let a2 = z.e[1][i] - v1 * b[i];
                *d = -v1 * fx - q * (a1 * f1 + a2 * f2);
            });
            de = vec![-&j[0], -ps.dx_field(b) - &j[1]];
            db = Some(-ps.dx_field(&z.e[1]));
        }
    }
    if let Some(jx) = j_ext {
        for (d, s) in de.iter_mut().zip(external_current_source(jx, ps)?) {
            *d += &s;
        }
    }
    let out = StateTangent { df, de, db };
    if !out.is_finite() {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok(out)
}

/// Free vector field plus the drive at time `t`.
pub fn driven_rhs(z: &State, t: f64, ps: &PhaseSpace, drive: &dyn Drive) -> Result<StateTangent> {
    let mut k = rhs(z, ps, None)?;
    if let Some(extra) = drive.contribution(z, t, ps)? {
        k.scaled_add(1.0, &extra);
    }
    Ok(k)
}

/// Largest stable RK4 step for the pseudospectral advection and the
/// velocity-space acceleration at `z`.
pub fn cfl_limit(z: &State, ps: &PhaseSpace) -> f64 {
    let g = ps.grid();
    let k_max = g.k1() * (g.nx / 2 - 1).max(1) as f64;
    let mut rate = k_max * g.v_max;
    let mut accel = z.e.iter().flat_map(|e| e.iter()).fold(0.0f64, |a, x| a.max(x.abs()));
    if let Some(b) = &z.b {
        accel += g.v_max * b.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    }
    // The stencil's largest eigenvalue magnitude is about 1.37 / dv.
    rate += 1.372 * ps.q().abs() * accel / g.dv();
    if rate == 0.0 {
        f64::INFINITY
    } else {
        2.8 / rate
    }
}

/// One classical Runge–Kutta step from time `t`.
pub fn step_rk4(z: &State, ps: &PhaseSpace, t: f64, dt: f64, drive: &dyn Drive) -> Result<State> {
    let k1 = driven_rhs(z, t, ps, drive)?;
    let k2 = driven_rhs(&z.axpy(0.5 * dt, &k1), t + 0.5 * dt, ps, drive)?;
    let k3 = driven_rhs(&z.axpy(0.5 * dt, &k2), t + 0.5 * dt, ps, drive)?;
    let k4 = driven_rhs(&z.axpy(dt, &k3), t + dt, ps, drive)?;
    let mut sum = k1;
    sum.scaled_add(2.0, &k2);
    sum.scaled_add(2.0, &k3);
    sum.scaled_add(1.0, &k4);
    let out = z.axpy(dt / 6.0, &sum);
    if !out.is_finite() {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok(out)
}

/// `max |dE1/dx - (rho - mean rho)|`. The divergence of `B3` vanishes
/// identically in the reduced geometry.
pub fn gauss_residual(z: &State, ps: &PhaseSpace) -> Result<f64> {
    z.validate(ps)?;
    let rho = remove_mean(&charge_density(&z.f, ps)?);
    let de = ps.dx_field(&z.e[0]);
    Ok(de.iter().zip(rho.iter()).fold(0.0f64, |a, (x, r)| a.max((x - r).abs())))
}

/// Field energy carried by Fourier mode `m` of every field component.
pub fn mode_energy(z: &State, ps: &PhaseSpace, m: usize) -> f64 {
    let n = ps.nx();
    if m == 0 || m >= n / 2 {
        return 0.0;
    }
    let mut fields: Vec<&Array1<f64>> = z.e.iter().collect();
    if let Some(b) = &z.b {
        fields.push(b);
    }
    let l = ps.grid().length;
    fields
        .into_iter()
        .map(|u| {
            let c: Complex64 = ps.spectral().coefficients(u.view())[m] / n as f64;
            l * c.norm_sqr()
        })
        .sum()
}

/// Shape of the initial perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// `f = F0(v) (1 + eps cos(k x))`.
    Density,
    /// `f = F0(v1 - eps cos(k x))`.
    Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    pub mode: usize,
    pub amplitude: f64,
    pub kind: PerturbationKind,
}

/// Everything needed to run a nonlinear scenario on a given grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub dt: f64,
    pub t_end: f64,
    pub perturbation: Perturbation,
    pub equilibrium: Profile,
    /// Record diagnostics every `cadence` steps.
    pub cadence: usize,
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            problems.push(format!("dt must be positive (got {})", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            problems.push(format!("t_end must be non-negative (got {})", self.t_end));
        }
        if !(self.perturbation.amplitude >= 0.0) {
            problems.push(format!("amplitude must be non-negative (got {})", self.perturbation.amplitude));
        }
        if self.cadence == 0 {
            problems.push("cadence must be at least 1".to_string());
        }
        if let Err(e) = self.equilibrium.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Input(problems.join("; ")))
        }
    }

    /// Perturbed equilibrium with the Poisson electric field.
    pub fn initial_state(&self, ps: &PhaseSpace) -> Result<State> {
        self.validate()?;
        let eq = self.equilibrium.sample_phase(ps);
        let k = ps.grid().k1() * self.perturbation.mode as f64;
        let eps = self.perturbation.amplitude;
        let f = match self.perturbation.kind {
            PerturbationKind::Density => {
                let mut f = eq;
                for (i, mut row) in f.outer_iter_mut().enumerate() {
                    row *= 1.0 + eps * (k * ps.x()[i]).cos();
                }
                f
            }
            PerturbationKind::Velocity => {
                let p = &self.equilibrium;
                let perp = Profile::maxwellian();
                let em = ps.geometry() == Geometry::Em1d2v;
                ps.phase_fn(|x, v1, v2| {
                    let base = p.value(v1 - eps * (k * x).cos());
                    if em {
                        base * perp.value(v2)
                    } else {
                        base
                    }
                })
            }
        };
        State::with_poisson_field(ps, f)
    }
}

/// One diagnostic record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub t: f64,
    pub energy: f64,
    pub casimir1: f64,
    pub casimir2: f64,
    pub gauss_residual: f64,
    pub mode_energy: [f64; 4],
    pub min_f: f64,
}

impl DiagnosticRow {
    pub fn of(z: &State, t: f64, ps: &PhaseSpace) -> Result<Self> {
        let mut modes = [0.0; 4];
        for (m, e) in modes.iter_mut().enumerate() {
            *e = mode_energy(z, ps, m + 1);
        }
        Ok(DiagnosticRow {
            t,
            energy: total_energy(z, ps)?,
            casimir1: casimir_lp(&z.f, ps, 1.0)?,
            casimir2: casimir_lp(&z.f, ps, 2.0)?,
            gauss_residual: gauss_residual(z, ps)?,
            mode_energy: modes,
            min_f: z.f.iter().copied().fold(f64::INFINITY, f64::min),
        })
    }
}

/// Time series of diagnostics, possibly cut short by an error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSeries {
    pub rows: Vec<DiagnosticRow>,
    pub error: Option<String>,
}

impl DiagnosticSeries {
    pub const CSV_HEADER: &'static str =
        "t,energy,casimir1,casimir2,gauss_residual,mode_energy_1,mode_energy_2,mode_energy_3,mode_energy_4,min_f";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let vals = [
                r.t,
                r.energy,
                r.casimir1,
                r.casimir2,
                r.gauss_residual,
                r.mode_energy[0],
                r.mode_energy[1],
                r.mode_energy[2],
                r.mode_energy[3],
                r.min_f,
            ];
            let line: Vec<String> = vals.iter().map(|v| format!("{v:.16e}")).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnostics serialize")
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// Mode energy series for Fourier mode `m` (1-based, at most 4).
    pub fn mode(&self, m: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.mode_energy[m - 1]).collect()
    }

    /// Largest relative deviation of a column from its initial value.
    pub fn max_relative_drift(&self, column: impl Fn(&DiagnosticRow) -> f64) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        let c0 = column(first);
        let scale = c0.abs().max(f64::MIN_POSITIVE);
        self.rows.iter().map(|r| (column(r) - c0).abs() / scale).fold(0.0, f64::max)
    }
}

/// Result of a run: diagnostics and the last state reached.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub series: DiagnosticSeries,
    pub final_state: State,
}

/// Run a scenario with no drive.
pub fn run(scenario: &ScenarioParams, ps: &PhaseSpace) -> Result<RunOutcome> {
    run_driven(scenario, ps, &NoDrive)
}

/// Run a scenario from its perturbed equilibrium under `drive`.
pub fn run_driven(scenario: &ScenarioParams, ps: &PhaseSpace, drive: &dyn Drive) -> Result<RunOutcome> {
    let z0 = scenario.initial_state(ps)?;
    Ok(run_from(z0, scenario.dt, scenario.t_end, scenario.cadence, ps, drive))
}

/// Integrate from `z0`. An integration failure ends the series early and is
/// recorded in [`DiagnosticSeries::error`].
pub fn run_from(z0: State, dt: f64, t_end: f64, cadence: usize, ps: &PhaseSpace, drive: &dyn Drive) -> RunOutcome {
    let steps = (t_end / dt).round() as usize;
    let mut series = DiagnosticSeries::default();
    let mut z = z0;
    let mut warned = false;
    let record = |z: &State, t: f64, series: &mut DiagnosticSeries| match DiagnosticRow::of(z, t, ps) {
        Ok(r) => {
            series.rows.push(r);
            true
        }
        Err(e) => {
            series.error = Some(e.to_string());
            false
        }
    };
    if !record(&z, 0.0, &mut series) {
        return RunOutcome { series, final_state: z };
    }
    for n in 0..steps {
        let t = n as f64 * dt;
        if !warned && dt > cfl_limit(&z, ps) {
            warn!("dt = {dt} exceeds the stability estimate {:.4e} at t = {t}", cfl_limit(&z, ps));
            warned = true;
        }
        match step_rk4(&z, ps, t, dt, drive) {
            Ok(next) => z = next,
            Err(e) => {
                let e = match e {
                    Error::NonFinite { .. } => Error::NonFinite { step: n + 1 },
                    other => other,
                };
                series.error = Some(e.to_string());
                return RunOutcome { series, final_state: z };
            }
        }
        if ((n + 1) % cadence == 0 || n + 1 == steps) && !record(&z, (n + 1) as f64 * dt, &mut series) {
            break;
        }
    }
    RunOutcome { series, final_state: z }
}

/// Ordinary least-squares slope and intercept of `y` against `t`.
pub fn linear_fit(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = t.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let tm = t.iter().sum::<f64>() / n as f64;
    let ym = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = t.iter().map(|a| (a - tm) * (a - tm)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = t.iter().zip(y).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let slope = sxy / sxx;
    Some((slope, ym - slope * tm))
}

/// Exponential rate of the local maxima of `energy` inside `[t_lo, t_hi]`,
/// from a log-linear fit. Used for oscillating, damped field energy.
pub fn fit_peak_rate(t: &[f64], energy: &[f64], t_lo: f64, t_hi: f64) -> Option<f64> {
    let mut pt = Vec::new();
    let mut pe = Vec::new();
    for i in 1..energy.len().saturating_sub(1) {
        if energy[i] > energy[i - 1] && energy[i] >= energy[i + 1] && t[i] >= t_lo && t[i] <= t_hi && energy[i] > 0.0 {
            // Parabolic refinement of the peak.
            let (a, b, c) = (energy[i - 1].ln(), energy[i].ln(), energy[i + 1].ln());
            let h = t[i + 1] - t[i];
            let denom = a - 2.0 * b + c;
            let (dt, peak) = if denom < 0.0 {
                let s = 0.5 * (a - c) / denom;
                (s * h, b - 0.25 * (a - c) * s)
            } else {
                (0.0, b)
            };
            pt.push(t[i] + dt);
            pe.push(peak);
        }
    }
    linear_fit(&pt, &pe).map(|(s, _)| s)
}

/// Exponential rate of `energy` from a log-linear fit over samples in
/// `[t_lo, t_hi]`. Used for monotone growth.
pub fn fit_log_rate(t: &[f64], energy: &[f64], t_lo: f64, t_hi: f64) -> Option<f64> {
    let (tt, ll): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(energy)
        .filter(|(a, e)| **a >= t_lo && **a <= t_hi && **e > 0.0)
        .map(|(a, e)| (*a, e.ln()))
        .unzip();
    linear_fit(&tt, &ll).map(|(s, _)| s)
}
