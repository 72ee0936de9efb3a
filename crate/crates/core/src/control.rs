//! Affine Hamiltonian controls `H_u = H + Σ u_a(t) B_a`.
//!
//! Two channel types are provided. A current coupling `B = ∫ J·A` enters
//! only through its vector-potential derivative, which the bracket turns
//! into the Ampère source `-J`. A Casimir-shaping channel
//! `B = ½ ∫∫ w f²` is quadratic in `f` and reshapes the kinetic Casimirs;
//! it is an extension beyond linear antenna couplings and is labelled as
//! such in reports.

use log::warn;
use nalgebra::DVector;
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::bracket::{hamiltonian_vector_field, mv_bracket, pairing, FunctionalDerivative, StateTangent};
use crate::dynamics::{rhs, Drive};
use crate::energy_casimir::{
    definiteness_report, second_variation_form, CasimirProfile, DefinitenessReport, ModeForm, SUPPORT_FLOOR,
};
use crate::equilibrium::Equilibrium;
use crate::error::{shape_err, Error, Result};
use crate::grid::PhaseSpace;
use crate::linalg::{pinv, rank};
use crate::linear_stability::{build_linear_operator, effective_projector, symmetry_direction, EffectiveProjector};
use crate::state::State;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    /// `B = ∫ J·A` with one spatial profile per electric component.
    CurrentCoupling { profile: Vec<Array1<f64>> },
    /// `B = ½ ∫∫ w f²` with a phase-grid weight.
    CasimirShaping { weight: Array2<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlChannel {
    pub label: String,
    pub kind: ChannelKind,
}

impl ControlChannel {
    pub fn current(label: impl Into<String>, profile: Vec<Array1<f64>>) -> Self {
        ControlChannel { label: label.into(), kind: ChannelKind::CurrentCoupling { profile } }
    }

    pub fn shaping(label: impl Into<String>, weight: Array2<f64>) -> Self {
        ControlChannel { label: label.into(), kind: ChannelKind::CasimirShaping { weight } }
    }

    pub fn validate(&self, ps: &PhaseSpace) -> Result<()> {
        match &self.kind {
            ChannelKind::CurrentCoupling { profile } => {
                let n = ps.geometry().e_components();
                if profile.len() != n {
                    return Err(shape_err("current profile components", n, profile.len()));
                }
                for p in profile {
                    ps.check_spatial("current profile", p)?;
                }
                if profile.iter().flat_map(|p| p.iter()).any(|x| !x.is_finite()) {
                    return Err(Error::Input(format!("channel {}: non-finite current profile", self.label)));
                }
            }
            ChannelKind::CasimirShaping { weight } => {
                ps.check_phase("shaping weight", weight)?;
                if weight.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Input(format!("channel {}: non-finite shaping weight", self.label)));
                }
            }
        }
        Ok(())
    }

    /// Whether the channel functional is quadratic (Casimir shaping).
    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, ChannelKind::CasimirShaping { .. })
    }

    /// Value of `B` at `z`; `None` for current couplings, whose functional
    /// needs the vector potential.
    pub fn value(&self, z: &State, ps: &PhaseSpace) -> Option<f64> {
        match &self.kind {
            ChannelKind::CurrentCoupling { .. } => None,
            ChannelKind::CasimirShaping { weight } => Some(0.5 * ps.phase_inner(&(weight * &z.f), &z.f)),
        }
    }
}

/// `δB_a/δz` at `z`.
pub fn channel_functional_derivative(ch: &ControlChannel, z: &State, ps: &PhaseSpace) -> Result<FunctionalDerivative> {
    ch.validate(ps)?;
    z.validate(ps)?;
    let mut d = FunctionalDerivative::zeros(ps);
    match &ch.kind {
        ChannelKind::CurrentCoupling { profile } => d.d_a = Some(profile.clone()),
        ChannelKind::CasimirShaping { weight } => d.d_f = weight * &z.f,
    }
    Ok(d)
}

/// Reduced control vector field `F_a(z) = X_{B_a}(z)`.
pub fn control_generator(ch: &ControlChannel, z: &State, ps: &PhaseSpace) -> Result<StateTangent> {
    hamiltonian_vector_field(&channel_functional_derivative(ch, z, ps)?, z, ps)
}

/// Time law of one control amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant {
        value: f64,
    },
    /// `values[i]` on `[times[i], times[i+1])`, the last value thereafter
    /// and zero before `times[0]`.
    PiecewiseConstant {
        times: Vec<f64>,
        values: Vec<f64>,
    },
    Sinusoidal {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match self {
            Schedule::Constant { value } if value.is_finite() => Ok(()),
            Schedule::PiecewiseConstant { times, values }
                if !times.is_empty()
                    && times.len() == values.len()
                    && times.windows(2).all(|w| w[1] > w[0])
                    && times.iter().chain(values).all(|x| x.is_finite()) =>
            {
                Ok(())
            }
            Schedule::Sinusoidal { amplitude, omega, phase }
                if [amplitude, omega, phase].iter().all(|x| x.is_finite()) =>
            {
                Ok(())
            }
            other => Err(Error::Input(format!("invalid control schedule {other:?}"))),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant { value } => *value,
            Schedule::PiecewiseConstant { times, values } => match times.iter().rposition(|&s| s <= t) {
                Some(i) => values[i],
                None => 0.0,
            },
            Schedule::Sinusoidal { amplitude, omega, phase } => amplitude * (omega * t + phase).sin(),
        }
    }

    /// Declared bound on `|u(t)|`.
    pub fn bound(&self) -> f64 {
        match self {
            Schedule::Constant { value } => value.abs(),
            Schedule::PiecewiseConstant { values, .. } => values.iter().fold(0.0f64, |a, x| a.max(x.abs())),
            Schedule::Sinusoidal { amplitude, .. } => amplitude.abs(),
        }
    }
}

/// Channels with their amplitudes, usable as a [`Drive`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledDrive {
    pub channels: Vec<ControlChannel>,
    pub schedule: Vec<Schedule>,
}

impl ControlledDrive {
    pub fn new(channels: Vec<ControlChannel>, schedule: Vec<Schedule>, ps: &PhaseSpace) -> Result<Self> {
        if channels.len() != schedule.len() {
            return Err(shape_err("control schedule", channels.len(), schedule.len()));
        }
        for c in &channels {
            c.validate(ps)?;
        }
        for s in &schedule {
            s.validate()?;
        }
        Ok(ControlledDrive { channels, schedule })
    }

    pub fn amplitudes(&self, t: f64) -> Vec<f64> {
        self.schedule.iter().map(|s| s.eval(t)).collect()
    }

    /// Instantaneous power `Σ u_a {H, B_a}(z)`.
    pub fn power(&self, z: &State, t: f64, ps: &PhaseSpace) -> Result<f64> {
        let h = FunctionalDerivative::energy(z, ps);
        let mut p = 0.0;
        for (ch, u) in self.channels.iter().zip(self.amplitudes(t)) {
            if u != 0.0 {
                p += u * mv_bracket(&h, &channel_functional_derivative(ch, z, ps)?, z, ps)?;
            }
        }
        Ok(p)
    }
}

impl Drive for ControlledDrive {
    fn contribution(&self, z: &State, t: f64, ps: &PhaseSpace) -> Result<Option<StateTangent>> {
        let mut out: Option<StateTangent> = None;
        for (ch, u) in self.channels.iter().zip(self.amplitudes(t)) {
            if u == 0.0 {
                continue;
            }
            let g = control_generator(ch, z, ps)?;
            match out.as_mut() {
                Some(acc) => acc.scaled_add(u, &g),
                None => {
                    let mut acc = StateTangent::zeros(ps);
                    acc.scaled_add(u, &g);
                    out = Some(acc);
                }
            }
        }
        Ok(out)
    }
}

/// `rhs(z) + Σ u_a(t) F_a(z)`.
pub fn controlled_rhs(z: &State, ps: &PhaseSpace, drive: &ControlledDrive, t: f64) -> Result<StateTangent> {
    let mut r = rhs(z, ps, None)?;
    if let Some(c) = drive.contribution(z, t, ps)? {
        r.scaled_add(1.0, &c);
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingReport {
    /// `<F_a(z0), ∂x z0>` in the grid L² pairing, a proxy for the effective
    /// symplectic pairing with the broken symmetry.
    pub value: f64,
    pub trivial: bool,
}

/// Pairing of a control generator with the translation direction.
pub fn symmetry_breaking_pairing(ch: &ControlChannel, eq: &Equilibrium, ps: &PhaseSpace) -> Result<PairingReport> {
    let z0 = eq.to_state(ps)?;
    if eq.is_homogeneous() {
        return Ok(PairingReport { value: 0.0, trivial: true });
    }
    let dz = symmetry_direction(&z0, ps);
    if dz.max_abs() == 0.0 {
        return Ok(PairingReport { value: 0.0, trivial: true });
    }
    let g = control_generator(ch, &z0, ps)?;
    let as_derivative = FunctionalDerivative { d_f: g.df, d_e: g.de, d_b: g.db, d_a: None };
    Ok(PairingReport { value: pairing(&as_derivative, &dz, ps), trivial: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub u: Vec<f64>,
    pub residual_before: f64,
    pub residual_after: f64,
    pub rank_deficient: bool,
}

/// `argmin_u ||g0 + Σ u_a g_a||`, minimum norm when the `g_a` are
/// dependent.
pub fn least_squares_shift(g0: &DVector<f64>, g: &[DVector<f64>]) -> Result<ShiftReport> {
    if g.is_empty() {
        return Err(Error::Input("equilibrium shift needs at least one channel".into()));
    }
    if g.iter().any(|c| c.len() != g0.len()) {
        return Err(shape_err("channel gradient", g0.len(), g.iter().map(|c| c.len()).max().unwrap_or(0)));
    }
    let m = nalgebra::DMatrix::from_columns(g);
    let r = rank(&m, 1e-12);
    let rank_deficient = r < g.len();
    if rank_deficient {
        warn!("channel gradients have rank {r} < {}; returning the minimum-norm shift", g.len());
    }
    let u = -(pinv(&m, 1e-12) * g0);
    let after = g0 + &m * &u;
    Ok(ShiftReport {
        u: u.iter().copied().collect(),
        residual_before: g0.norm(),
        residual_after: after.norm(),
        rank_deficient,
    })
}

/// Stack a derivative as a vector in the grid metric: kinetic entries
/// weighted by `sqrt(Δx W_j)` on `mask`, field and potential entries by
/// `sqrt(Δx)`.
fn stack(d: &FunctionalDerivative, mask: &Array2<bool>, ps: &PhaseSpace) -> DVector<f64> {
    let dx = ps.dx();
    let w = ps.vel_weights();
    let mut out = Vec::new();
    for ((i, j), x) in d.d_f.indexed_iter() {
        out.push(if mask[[i, j]] { x * (dx * w[j]).sqrt() } else { 0.0 });
    }
    let zero: Vec<Array1<f64>> = d.d_e.iter().map(|e| Array1::zeros(e.len())).collect();
    for e in d.d_e.iter().chain(d.d_a.as_ref().unwrap_or(&zero)) {
        out.extend(e.iter().map(|x| x * dx.sqrt()));
    }
    if let Some(b) = &d.d_b {
        out.extend(b.iter().map(|x| x * dx.sqrt()));
    }
    DVector::from_vec(out)
}

/// Controls that make `z0` a critical point of `H + C + Σ u_a B_a`, in the
/// least-squares sense over the support of `f0`.
pub fn solve_equilibrium_shift(
    eq: &Equilibrium,
    channels: &[ControlChannel],
    profile: &CasimirProfile,
    ps: &PhaseSpace,
) -> Result<ShiftReport> {
    let z0 = eq.to_state(ps)?;
    let fmax = z0.f.iter().copied().fold(0.0, f64::max);
    let mask = z0.f.mapv(|x| x > SUPPORT_FLOOR * fmax);
    let mut g0 = FunctionalDerivative::energy(&z0, ps);
    for ((i, j), x) in g0.d_f.indexed_iter_mut() {
        if mask[[i, j]] {
            *x += profile.phi1(z0.f[[i, j]])?;
        }
    }
    let g: Vec<DVector<f64>> = channels
        .iter()
        .map(|c| channel_functional_derivative(c, &z0, ps).map(|d| stack(&d, &mask, ps)))
        .collect::<Result<_>>()?;
    least_squares_shift(&stack(&g0, &mask, ps), &g)
}

/// Second-variation weights of a shaping channel on the amplitudes of one
/// Fourier mode (`w(v)` must not depend on `x`), matching
/// [`crate::energy_casimir::SecondVariation::mode`].
pub fn shaping_mode_weights(ch: &ControlChannel, ps: &PhaseSpace) -> Result<Option<Vec<f64>>> {
    ch.validate(ps)?;
    let weight = match &ch.kind {
        ChannelKind::CurrentCoupling { .. } => return Ok(None),
        ChannelKind::CasimirShaping { weight } => weight,
    };
    let row = weight.index_axis(Axis(0), 0);
    if weight.outer_iter().any(|r| r != row) {
        return Err(Error::Unsupported("mode-wise second variation needs an x-independent shaping weight".into()));
    }
    let half = 0.5 * ps.nx() as f64 * ps.dx();
    let w = ps.vel_weights();
    let mut out: Vec<f64> = row.iter().zip(w.iter()).map(|(a, wj)| a * wj * half).collect();
    out.push(0.0);
    Ok(Some(out))
}

/// `Q + Σ u_a δ²B_a` on mode amplitudes.
pub fn controlled_mode_form(form: &ModeForm, u: &[f64], channel_weights: &[Option<Vec<f64>>]) -> Result<ModeForm> {
    if u.len() != channel_weights.len() {
        return Err(shape_err("control amplitudes", channel_weights.len(), u.len()));
    }
    let mut out = form.clone();
    for (ua, w) in u.iter().zip(channel_weights) {
        if let Some(w) = w {
            if w.len() != out.dim() {
                return Err(shape_err("channel mode weights", out.dim(), w.len()));
            }
            for (a, b) in out.weights.iter_mut().zip(w) {
                *a += ua * b;
            }
        }
    }
    Ok(out)
}

/// Definiteness of `Q_u = Q + Σ u_a δ²B_a` at mode `k` about a homogeneous
/// equilibrium.
pub fn controlled_second_variation(
    eq: &Equilibrium,
    u: &[f64],
    channels: &[ControlChannel],
    profile: &CasimirProfile,
    k: f64,
    ps: &PhaseSpace,
) -> Result<DefinitenessReport> {
    let form = second_variation_form(eq, profile, ps)?.mode(k, ps);
    let weights: Vec<Option<Vec<f64>>> = channels.iter().map(|c| shaping_mode_weights(c, ps)).collect::<Result<_>>()?;
    let controlled = controlled_mode_form(&form, u, &weights)?;
    let projector = effective_projector(&build_linear_operator(eq, k, ps)?, 1e-10)?;
    definiteness_report(&controlled, &projector)
}

/// Stabilization certificate for one constructed marginal case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizationCertificate {
    pub k: f64,
    pub node_velocity: f64,
    /// Weight given to the form at the marginal node.
    pub delta: f64,
    pub target_u: f64,
    pub shift: ShiftReport,
    pub before: DefinitenessReport,
    pub after: DefinitenessReport,
    pub channel_note: String,
}

/// Controlled stabilization of a marginal form.
///
/// The Maxwellian mode form has the weight at the node nearest `v_node`
/// replaced by `-δ` (its original value), which makes it indefinite on the
/// Gauss-consistent space. A shaping channel `w(v) = exp(-(v - v_node)² /
/// (2 width²))` is attached, the first-variation defect is set to
/// `g0 = -u_t g_1` with `u_t = 2δ / c`, `c` the channel's mode weight at the
/// node, and `u*` is obtained from the least-squares shift. The controlled
/// form then has weight `+δ` at the node.
pub fn marginal_stabilization(
    eq: &Equilibrium,
    profile: &CasimirProfile,
    k: f64,
    v_node: f64,
    width: f64,
    ps: &PhaseSpace,
) -> Result<StabilizationCertificate> {
    if !(width > 0.0) {
        return Err(Error::Input("shaping width must be positive".into()));
    }
    let mut form = second_variation_form(eq, profile, ps)?.mode(k, ps);
    let v = ps.v();
    let j0 =
        (0..ps.nvel()).min_by(|&a, &b| (v[a] - v_node).abs().total_cmp(&(v[b] - v_node).abs())).expect("nonempty grid");
    if !form.active[j0] {
        return Err(Error::Domain(format!("node v = {} lies outside the support of F0", v[j0])));
    }
    let delta = form.weights[j0];
    form.weights[j0] = -delta;
    let w_row = Array1::from_iter(v.iter().map(|x| (-(x - v_node).powi(2) / (2.0 * width * width)).exp()));
    let weight = Array2::from_shape_fn((ps.nx(), ps.nvel()), |(_, j)| w_row[j]);
    let ch = ControlChannel::shaping("shaping", weight);
    let cw = shaping_mode_weights(&ch, ps)?.expect("shaping channel");
    let target_u = 2.0 * delta / cw[j0];
    let z0 = eq.to_state(ps)?;
    let fmax = z0.f.iter().copied().fold(0.0, f64::max);
    let mask = z0.f.mapv(|x| x > SUPPORT_FLOOR * fmax);
    let g1 = stack(&channel_functional_derivative(&ch, &z0, ps)?, &mask, ps);
    let g0 = &g1 * (-target_u);
    let shift = least_squares_shift(&g0, std::slice::from_ref(&g1))?;
    let projector: EffectiveProjector = effective_projector(&build_linear_operator(eq, k, ps)?, 1e-10)?;
    let before = definiteness_report(&form, &projector)?;
    let controlled = controlled_mode_form(&form, &shift.u, &[Some(cw)])?;
    let after = definiteness_report(&controlled, &projector)?;
    Ok(StabilizationCertificate {
        k,
        node_velocity: v[j0],
        delta,
        target_u,
        shift,
        before,
        after,
        channel_note: "quadratic Casimir-shaping channel (extension beyond linear antenna coupling)".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step_rk4;
    use crate::energy_casimir::{casimir_from_equilibrium, Verdict};
    use crate::grid::PhaseGrid;
    use crate::profile::Profile;
    use std::f64::consts::PI;

    fn ps() -> PhaseSpace {
        PhaseSpace::new(PhaseGrid::es(4.0 * PI, 16, 6.0, 64)).unwrap()
    }

    fn perturbed(ps: &PhaseSpace) -> State {
        let f = ps.phase_fn(|x, v, _| (1.0 + 0.05 * (0.5 * x).cos()) * (-0.5 * v * v).exp() / (2.0 * PI).sqrt());
        State::with_poisson_field(ps, f).unwrap()
    }

    #[test]
    fn current_generator_is_a_pure_field_source() {
        let ps = ps();
        let z = perturbed(&ps);
        let j = ps.spatial_fn(|x| (0.5 * x).sin() + 0.3);
        let g = control_generator(&ControlChannel::current("j", vec![j.clone()]), &z, &ps).unwrap();
        assert_eq!(g.df.iter().fold(0.0f64, |a, x| a.max(x.abs())), 0.0);
        let expect = -crate::grid::remove_mean(&j);
        assert!((&g.de[0] - &expect).iter().all(|x| x.abs() < 1e-14));
        let zero = control_generator(&ControlChannel::current("0", vec![Array1::zeros(16)]), &z, &ps).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn shaping_with_unit_weight_has_derivative_f() {
        let ps = ps();
        let z = perturbed(&ps);
        let ch = ControlChannel::shaping("w", Array2::ones((16, 64)));
        assert_eq!(channel_functional_derivative(&ch, &z, &ps).unwrap().d_f, z.f);
        let g = control_generator(&ch, &z, &ps).unwrap();
        let mass = ps.phase_inner(&Array2::ones((16, 64)), &g.df);
        assert!(mass.abs() < 1e-10);
    }

    #[test]
    fn zero_control_reduces_to_rhs() {
        let ps = ps();
        let z = perturbed(&ps);
        let j = ps.spatial_fn(|x| (0.5 * x).cos());
        let d = ControlledDrive::new(
            vec![ControlChannel::current("j", vec![j])],
            vec![Schedule::Constant { value: 0.0 }],
            &ps,
        )
        .unwrap();
        assert_eq!(controlled_rhs(&z, &ps, &d, 0.0).unwrap(), rhs(&z, &ps, None).unwrap());
    }

    #[test]
    fn schedules_evaluate_and_bound() {
        let p = Schedule::PiecewiseConstant { times: vec![0.0, 1.0], values: vec![2.0, -3.0] };
        assert_eq!((p.eval(-1.0), p.eval(0.5), p.eval(4.0), p.bound()), (0.0, 2.0, -3.0, 3.0));
        let s = Schedule::Sinusoidal { amplitude: 0.5, omega: 2.0, phase: 0.0 };
        assert!(s.eval(0.3).abs() <= s.bound());
        assert!(Schedule::PiecewiseConstant { times: vec![1.0, 0.0], values: vec![1.0, 1.0] }.validate().is_err());
    }

    #[test]
    fn power_balance_over_one_step() {
        let ps = ps();
        let z = perturbed(&ps);
        let j = ps.spatial_fn(|x| (0.5 * x).sin());
        let d = ControlledDrive::new(
            vec![ControlChannel::current("j", vec![j])],
            vec![Schedule::Constant { value: 0.2 }],
            &ps,
        )
        .unwrap();
        let dt = 0.01;
        let z1 = step_rk4(&z, &ps, 0.0, dt, &d).unwrap();
        let h0 = crate::state::total_energy(&z, &ps).unwrap();
        let h1 = crate::state::total_energy(&z1, &ps).unwrap();
        let zm = step_rk4(&z, &ps, 0.0, 0.5 * dt, &d).unwrap();
        let p = [d.power(&z, 0.0, &ps).unwrap(), d.power(&zm, 0.5 * dt, &ps).unwrap(), d.power(&z1, dt, &ps).unwrap()];
        let work = dt / 6.0 * (p[0] + 4.0 * p[1] + p[2]);
        assert!(((h1 - h0) - work).abs() <= 1e-6 * work.abs(), "{} {}", h1 - h0, work);
    }

    #[test]
    fn shift_projection_formula() {
        let g0 = DVector::from_vec(vec![1.0, 2.0, -1.0]);
        let g1 = &g0 * 3.0;
        let r = least_squares_shift(&g0, std::slice::from_ref(&g1)).unwrap();
        assert!((r.u[0] + g0.dot(&g1) / g1.dot(&g1)).abs() < 1e-14);
        assert!(r.residual_after < 1e-14);
        let dep = least_squares_shift(&g0, &[g1.clone(), g1]).unwrap();
        assert!(dep.rank_deficient && dep.residual_after < 1e-13);
        assert!((dep.u[0] - dep.u[1]).abs() < 1e-14);
    }

    #[test]
    fn matched_casimir_needs_no_shift_and_drift_is_reduced() {
        let ps = ps();
        let eq = Equilibrium::from_profile(&Profile::maxwellian(), &ps).unwrap();
        let c = casimir_from_equilibrium(&eq, &ps).unwrap();
        let vw = ps.phase_fn(|_, v, _| v);
        let ch = vec![ControlChannel::shaping("v", vw)];
        let r = solve_equilibrium_shift(&eq, &ch, &c, &ps).unwrap();
        assert!(r.u[0].abs() < 1e-12 && r.residual_before < 1e-12);
        let drift = Equilibrium::from_profile(&Profile::Maxwellian { sigma: 1.0, drift: 0.3 }, &ps).unwrap();
        let r = solve_equilibrium_shift(&drift, &ch, &c, &ps).unwrap();
        assert!(r.u[0] < 0.0 && r.residual_after < r.residual_before - 1e-3, "{r:?}");
    }

    #[test]
    fn linear_channels_leave_the_form_unchanged_and_witness_flips() {
        let ps = PhaseSpace::new(PhaseGrid::es(4.0 * PI, 16, 6.0, 128)).unwrap();
        let eq = Equilibrium::from_profile(&Profile::maxwellian(), &ps).unwrap();
        let c = casimir_from_equilibrium(&eq, &ps).unwrap();
        let j = ps.spatial_fn(|x| (0.5 * x).cos());
        let free = controlled_second_variation(&eq, &[], &[], &c, 0.5, &ps).unwrap();
        let lin =
            controlled_second_variation(&eq, &[3.0], &[ControlChannel::current("j", vec![j])], &c, 0.5, &ps).unwrap();
        assert_eq!(free, lin);
        let cert = marginal_stabilization(&eq, &c, 0.5, 1.0, 0.3, &ps).unwrap();
        assert_eq!(cert.before.verdict, Verdict::Indefinite);
        assert_eq!(cert.after.verdict, Verdict::PositiveDefinite);
        assert!((cert.shift.u[0] - cert.target_u).abs() < 1e-10 * cert.target_u);
    }
}
