//! Scenario runners. Each fills a [`Report`] with checks whose bounds are
//! fixed here, not in the configuration.

use std::f64::consts::PI;

use log::info;
use nalgebra::DVector;
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vmgeom::bracket::{mv_bracket, FunctionalDerivative};
use vmgeom::control::{marginal_stabilization, ControlChannel, ControlledDrive, Schedule};
use vmgeom::dynamics::{
    fit_log_rate, fit_peak_rate, run, run_driven, step_rk4, DiagnosticSeries, Perturbation, PerturbationKind,
    ScenarioParams,
};
use vmgeom::energy_casimir::{casimir_from_equilibrium, stability_report, Verdict};
use vmgeom::equilibrium::Equilibrium;
use vmgeom::gnh::{
    electromagnetic_two_mode_sr, free_particle_sr, gnh_iterate, solve_vector_field, ConstraintChain,
    PresymplecticSystem, DEFAULT_TOL,
};
use vmgeom::grid::{PhaseGrid, PhaseSpace};
use vmgeom::linear_stability::{
    build_linear_operator, dispersion_root_oracle, gauss_field, linearization_defect, neutral_mode_residual,
    two_stream_bgk, SymmetryGenerator,
};
use vmgeom::profile::{Gaussian, Profile};
use vmgeom::state::{total_energy, State};
use vmgeom::{Error, Result};

use crate::config::{RunConfig, Scenario};
use crate::elimination::{eliminate, largest_angle_sine, orthonormalize, random_system};
use crate::report::{Check, Relation, Report};

/// Relative error allowed between fitted and oracle rates.
pub const RATE_TOL: f64 = 0.05;
pub const GAUSS_TOL: f64 = 1e-6;
pub const EQUILIBRIUM_DRIFT_TOL: f64 = 1e-10;
/// Energy drift allowed over `t <= 20`.
pub const ENERGY_DRIFT_TOL: f64 = 1e-5;
pub const ENERGY_DRIFT_HORIZON: f64 = 20.0;
pub const BRACKET_ALGEBRA_TOL: f64 = 1e-12;
pub const MIN_CASIMIR_ORDER: f64 = 2.0;
/// Residual below which a Casimir counts as annihilated to rounding.
pub const ROUNDING_FLOOR: f64 = 1e-12;
pub const PRINCIPAL_ANGLE_TOL: f64 = 1e-8;
pub const FIRST_VARIATION_TOL: f64 = 1e-8;
pub const POWER_BALANCE_TOL: f64 = 1e-6;
pub const DEFECT_RATIO_TOL: f64 = 2.0;
pub const GOLDSTONE_R0_TOL: f64 = 1e-6;
pub const GOLDSTONE_FACTOR: f64 = 100.0;
pub const CONTROL_SEPARATION: f64 = 1e3;

pub fn anchor(s: Scenario) -> &'static str {
    match s {
        Scenario::Landau => {
            "nonlinear Maxwell–Vlasov flow of the Lie–Poisson bracket; Landau damping of the dielectric root"
        }
        Scenario::TwoStream => {
            "nonlinear Maxwell–Vlasov flow of the Lie–Poisson bracket; two-stream growth of the dielectric root"
        }
        Scenario::BracketCheck => {
            "complete Maxwell–Vlasov Lie–Poisson bracket: antisymmetry, bilinearity, Casimir annihilation"
        }
        Scenario::GnhDemo => "presymplectic constraint algorithm on unified Lagrangian-Hamiltonian encodings",
        Scenario::EcStability => "energy–Casimir formal stability of homogeneous equilibria",
        Scenario::ControlledStabilization => "controlled Lie–Poisson system and Casimir-shaping stabilization",
        Scenario::Convergence => "linearized Maxwell–Vlasov dynamics about an equilibrium; Goldstone translation modes",
    }
}

/// Report plus the time series or table written as CSV.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Report,
    pub diagnostics_csv: Option<String>,
}

pub fn run_scenario(cfg: &RunConfig) -> Outcome {
    let mut report = Report::new(cfg.scenario.name(), anchor(cfg.scenario), cfg.seed);
    let mut csv = None;
    let res = match cfg.scenario {
        Scenario::Landau => landau(cfg, &mut report, &mut csv),
        Scenario::TwoStream => two_stream(cfg, &mut report, &mut csv),
        Scenario::BracketCheck => bracket_check(cfg, &mut report, &mut csv),
        Scenario::GnhDemo => gnh_demo(cfg, &mut report, &mut csv),
        Scenario::EcStability => ec_stability(cfg, &mut report, &mut csv),
        Scenario::ControlledStabilization => controlled(cfg, &mut report, &mut csv),
        Scenario::Convergence => convergence(cfg, &mut report, &mut csv),
    };
    if let Err(e) = res {
        report.error = Some(e.to_string());
    }
    report.finish();
    Outcome { report, diagnostics_csv: csv }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn series_failed(series: &DiagnosticSeries) -> Result<()> {
    match &series.error {
        Some(e) => Err(Error::Input(format!("integration stopped: {e}"))),
        None => Ok(()),
    }
}

fn max_gauss(series: &DiagnosticSeries) -> f64 {
    series.rows.iter().map(|r| r.gauss_residual).fold(0.0, f64::max)
}

fn early_energy_drift(series: &DiagnosticSeries) -> f64 {
    let early = DiagnosticSeries {
        rows: series.rows.iter().copied().filter(|r| r.t <= ENERGY_DRIFT_HORIZON + 1e-12).collect(),
        error: None,
    };
    early.max_relative_drift(|r| r.energy)
}

/// Largest change of any diagnostic, relative to `max(|initial|, 1)`.
fn max_diagnostic_change(series: &DiagnosticSeries) -> f64 {
    let Some(first) = series.rows.first() else { return f64::NAN };
    let cols = |r: &vmgeom::dynamics::DiagnosticRow| {
        let mut v = vec![r.energy, r.casimir1, r.casimir2, r.gauss_residual, r.min_f];
        v.extend(r.mode_energy);
        v
    };
    let c0 = cols(first);
    series
        .rows
        .iter()
        .flat_map(|r| cols(r).into_iter().zip(c0.clone()).map(|(x, x0)| (x - x0).abs() / x0.abs().max(1.0)))
        .fold(0.0, f64::max)
}

fn landau_params(cfg: &RunConfig) -> ScenarioParams {
    let p = cfg.landau.clone().unwrap_or_default();
    ScenarioParams {
        dt: p.dt,
        t_end: p.t_end,
        perturbation: Perturbation { mode: p.mode, amplitude: p.amplitude, kind: PerturbationKind::Density },
        equilibrium: Profile::maxwellian(),
        cadence: p.cadence,
    }
}

fn landau(cfg: &RunConfig, rep: &mut Report, csv: &mut Option<String>) -> Result<()> {
    let p = cfg.landau.clone().unwrap_or_default();
    let ps = PhaseSpace::new(cfg.grid.phase_grid())?;
    let k = cfg.grid.k1() * p.mode as f64;
    let sp = landau_params(cfg);
    let root = dispersion_root_oracle(&sp.equilibrium, k, ps.q(), None)?;
    rep.result("k", k);
    rep.result("oracle_omega", [root.omega_re, root.omega_im]);
    rep.result("oracle_energy_rate", root.energy_rate());

    info!("landau: equilibrium run to t = {}", p.equilibrium_t_end);
    let quiet = ScenarioParams {
        t_end: p.equilibrium_t_end,
        perturbation: Perturbation { amplitude: 0.0, ..sp.perturbation },
        ..sp.clone()
    };
    let eq_run = run(&quiet, &ps)?;
    series_failed(&eq_run.series)?;
    let change = max_diagnostic_change(&eq_run.series);
    rep.result("equilibrium_max_diagnostic_change", change);
    rep.check(Check::new("equilibrium_diagnostics_constant", change, Relation::Le, EQUILIBRIUM_DRIFT_TOL));

    info!("landau: perturbed run to t = {}", p.t_end);
    let out = run(&sp, &ps)?;
    *csv = Some(out.series.to_csv());
    series_failed(&out.series)?;
    let rate = fit_peak_rate(&out.series.times(), &out.series.mode(p.mode), p.fit_window[0], p.fit_window[1])
        .unwrap_or(f64::NAN);
    let err = rel_err(rate, root.energy_rate());
    rep.result("fitted_energy_rate", rate);
    rep.check(Check::new("damping_rate_relative_error", err, Relation::Lt, RATE_TOL));
    rep.check(Check::new("max_gauss_residual", max_gauss(&out.series), Relation::Le, GAUSS_TOL));
    rep.check(Check::new("energy_drift_to_t20", early_energy_drift(&out.series), Relation::Le, ENERGY_DRIFT_TOL));
    Ok(())
}

fn two_stream(cfg: &RunConfig, rep: &mut Report, csv: &mut Option<String>) -> Result<()> {
    let p = cfg.two_stream.clone().unwrap_or_default();
    let ps = PhaseSpace::new(cfg.grid.phase_grid())?;
    let k = cfg.grid.k1() * p.mode as f64;
    let profile = Profile::two_stream(p.u0, p.sigma);
    let root = dispersion_root_oracle(&profile, k, ps.q(), None)?;
    rep.result("k", k);
    rep.result("oracle_omega", [root.omega_re, root.omega_im]);
    rep.result("oracle_energy_rate", root.energy_rate());
    let sp = ScenarioParams {
        dt: p.dt,
        t_end: p.t_end,
        perturbation: Perturbation { mode: p.mode, amplitude: p.amplitude, kind: PerturbationKind::Density },
        equilibrium: profile,
        cadence: p.cadence,
    };
    info!("two_stream: run to t = {}", p.t_end);
    let out = run(&sp, &ps)?;
    *csv = Some(out.series.to_csv());
    series_failed(&out.series)?;
    let rate = fit_log_rate(&out.series.times(), &out.series.mode(p.mode), p.fit_window[0], p.fit_window[1])
        .unwrap_or(f64::NAN);
    rep.result("fitted_energy_rate", rate);
    rep.check(Check::new("growth_rate_relative_error", rel_err(rate, root.energy_rate()), Relation::Lt, RATE_TOL));
    rep.check(Check::new("max_gauss_residual", max_gauss(&out.series), Relation::Le, GAUSS_TOL));
    rep.check(Check::new("energy_drift_to_t20", early_energy_drift(&out.series), Relation::Le, ENERGY_DRIFT_TOL));
    Ok(())
}

/// Random Fourier series in `x` with modes `0..=modes`.
fn random_series(rng: &mut impl Rng, k: f64, modes: usize) -> impl Fn(f64) -> f64 {
    let c: Vec<(f64, f64)> = (0..=modes).map(|_| (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    move |x| c.iter().enumerate().map(|(m, (a, b))| a * (m as f64 * k * x).cos() + b * (m as f64 * k * x).sin()).sum()
}

fn random_modes(rng: &mut impl Rng, ps: &PhaseSpace, modes: usize) -> Array1<f64> {
    ps.spatial_fn(random_series(rng, ps.grid().k1(), modes))
}

/// Smooth random functional derivative: low Fourier modes in `x` times
/// quadratics in the velocities, with random field sectors.
fn random_derivative(rng: &mut impl Rng, ps: &PhaseSpace) -> FunctionalDerivative {
    let vm = ps.grid().v_max;
    let k = ps.grid().k1();
    let c: Vec<[f64; 7]> = (0..3).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect();
    let d_f = ps.phase_fn(|x, v1, v2| {
        let (a, b) = (v1 / vm, v2 / vm);
        c.iter()
            .enumerate()
            .map(|(m, c)| {
                let ph = m as f64 * k * x;
                (c[0] * ph.cos() + c[1] * ph.sin()) * (c[2] + c[3] * a + c[4] * a * a + c[5] * b + c[6] * b * b)
            })
            .sum()
    });
    let ne = ps.geometry().e_components();
    let d_e = (0..ne).map(|_| random_modes(rng, ps, 2)).collect();
    let d_b = ps.geometry().has_b().then(|| random_modes(rng, ps, 2));
    let d_a = rng.random_bool(0.5).then(|| (0..ne).map(|_| random_modes(rng, ps, 2)).collect());
    FunctionalDerivative { d_f, d_e, d_b, d_a }
}

/// Positive smooth random state.
fn random_state(rng: &mut impl Rng, ps: &PhaseSpace) -> State {
    let mut z = State::zeros(ps);
    let m = random_series(rng, ps.grid().k1(), 2);
    // |m| <= 6, so the density stays positive.
    z.f = ps.phase_fn(|x, v1, v2| (1.0 + 0.1 * m(x)) * (-0.5 * (v1 * v1 + v2 * v2)).exp());
    for e in z.e.iter_mut() {
        *e = random_modes(rng, ps, 2);
    }
    if let Some(b) = z.b.as_mut() {
        *b = random_modes(rng, ps, 2);
    }
    z
}

fn bracket_check(cfg: &RunConfig, rep: &mut Report, csv: &mut Option<String>) -> Result<()> {
    let p = cfg.bracket_check.clone().unwrap_or_default();
    let g = cfg.grid;
    let es = PhaseSpace::new(g.phase_grid())?;
    let em = PhaseSpace::new(PhaseGrid::em(g.length, g.nx.min(16), g.v_max, (g.nv / 4).max(8)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = String::from("triple,geometry,antisymmetry,bilinearity\n");
    let (mut worst_anti, mut worst_bil) = (0.0f64, 0.0f64);
    for i in 0..p.triples {
        let ps = if i % 2 == 0 { &es } else { &em };
        let f = random_derivative(&mut rng, ps);
        let f2 = random_derivative(&mut rng, ps);
        let gd = random_derivative(&mut rng, ps);
        let z = random_state(&mut rng, ps);
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let fg = mv_bracket(&f, &gd, &z, ps)?;
        let gf = mv_bracket(&gd, &f, &z, ps)?;
        let anti = (fg + gf).abs() / fg.abs().max(1.0);
        let f2g = mv_bracket(&f2, &gd, &z, ps)?;
        let comb = f.combine(a, &f2, b);
        let scale = (a * fg).abs() + (b * f2g).abs();
        let left = (mv_bracket(&comb, &gd, &z, ps)? - a * fg - b * f2g).abs() / scale.max(1.0);
        let right = (mv_bracket(&gd, &comb, &z, ps)? + a * fg + b * f2g).abs() / scale.max(1.0);
        let bil = left.max(right);
        worst_anti = worst_anti.max(anti);
        worst_bil = worst_bil.max(bil);
        table.push_str(&format!("{i},{:?},{anti:.16e},{bil:.16e}\n", ps.geometry()));
    }
    *csv = Some(table);
    rep.result("triples", p.triples);
    rep.check(Check::new("max_antisymmetry_residual", worst_anti, Relation::Lt, BRACKET_ALGEBRA_TOL));
    rep.check(Check::new("max_bilinearity_residual", worst_bil, Relation::Lt, BRACKET_ALGEBRA_TOL));

    let ladder = casimir_ladder(g.length, g.v_max, &p.ladder)?;
    for (p_exp, res) in [(1.0, &ladder.p1), (2.0, &ladder.p2)] {
        let tag = format!("p{}", p_exp as u32);
        rep.result(&format!("casimir_{tag}_residuals"), res);
        if res.iter().all(|r| *r <= ROUNDING_FLOOR) {
            let worst = res.iter().copied().fold(0.0, f64::max);
            rep.result(&format!("casimir_{tag}_annihilation"), "exact to rounding at every resolution");
            rep.check(Check::new(format!("casimir_{tag}_max_residual"), worst, Relation::Le, ROUNDING_FLOOR));
        } else {
            let order = observed_order(res, &ladder.dv);
            rep.result(&format!("casimir_{tag}_orders"), &order);
            let min = order.iter().copied().fold(f64::INFINITY, f64::min);
            rep.check(Check::new(format!("casimir_{tag}_observed_order"), min, Relation::Ge, MIN_CASIMIR_ORDER));
        }
    }
    rep.result("ladder", &p.ladder);
    Ok(())
}

/// Casimir residuals `|{∫f^p, G}|` on a refinement ladder.
pub struct CasimirLadder {
    pub dv: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
}

pub fn casimir_ladder(length: f64, v_max: f64, ladder: &[[usize; 2]]) -> Result<CasimirLadder> {
    let mut out = CasimirLadder { dv: vec![], p1: vec![], p2: vec![] };
    for &[nx, nv] in ladder {
        let ps = PhaseSpace::new(PhaseGrid::es(length, nx, v_max, nv))?;
        let k = ps.grid().k1();
        // No parity in v, so nothing cancels by symmetry.
        let f = ps.phase_fn(|x, v, _| {
            let u = v - 0.2 - 0.3 * (k * x).sin();
            (1.0 + 0.1 * (k * x).cos() + 0.05 * (2.0 * k * x).sin()) * (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
        });
        let z = State::with_poisson_field(&ps, f)?;
        let mut gd = FunctionalDerivative::zeros(&ps);
        gd.d_f = ps.phase_fn(|x, v, _| (k * x + 0.3).sin() * (0.4 * v + 0.5).cos() + 0.2 * v * v * (2.0 * k * x).cos());
        gd.d_e[0] = ps.spatial_fn(|x| (k * x).cos() + 0.3 * (2.0 * k * x).sin());
        out.dv.push(ps.grid().dv());
        out.p1.push(mv_bracket(&FunctionalDerivative::lp_casimir(&z, 1.0), &gd, &z, &ps)?.abs());
        out.p2.push(mv_bracket(&FunctionalDerivative::lp_casimir(&z, 2.0), &gd, &z, &ps)?.abs());
    }
    Ok(out)
}

/// `log(r_i / r_{i+1}) / log(h_i / h_{i+1})` for consecutive levels.
pub fn observed_order(r: &[f64], h: &[f64]) -> Vec<f64> {
    r.windows(2).zip(h.windows(2)).map(|(r, h)| (r[0] / r[1]).ln() / (h[0] / h[1]).ln()).collect()
}

/// Largest stage-wise disagreement between the chain and the elimination,
/// or `None` when the stage structure differs.
fn compare_with_elimination(sys: &PresymplecticSystem, chain: &ConstraintChain) -> Option<f64> {
    let oracle = eliminate(&sys.omega, &sys.a, &sys.b, 1e-9);
    if oracle.dims() != chain.dims || oracle.empty_at != chain.empty_at {
        return None;
    }
    let mut worst = 0.0f64;
    for (st, eqs) in chain.stages.iter().zip(&oracle.stages) {
        let q = orthonormalize(&eqs.tangent(1e-9));
        worst = worst.max(largest_angle_sine(&st.subspace.directions, &q));
        worst = worst.max(eqs.residual(&st.subspace.basepoint));
    }
    Some(worst)
}

fn gnh_demo(cfg: &RunConfig, rep: &mut Report, csv: &mut Option<String>) -> Result<()> {
    let p = cfg.gnh_demo.clone().unwrap_or_default();
    let fp = free_particle_sr();
    let chain = gnh_iterate(&fp, DEFAULT_TOL)?;
    rep.check(Check::flag("free_particle_dims_3_2", chain.dims == [3, 2]));
    rep.check(Check::new("free_particle_stabilized_at", chain.stabilized_at as f64, Relation::Eq, 0.0));
    let xf = solve_vector_field(&fp, &chain, DEFAULT_TOL)?;
    rep.result("free_particle_system", &fp);
    rep.result("free_particle_chain", &chain);
    rep.result("free_particle_vector_field", &xf);

    let modes = [(p.em_modes[0][0], p.em_modes[0][1]), (p.em_modes[1][0], p.em_modes[1][1])];
    let em = electromagnetic_two_mode_sr(modes);
    let ec = gnh_iterate(&em, DEFAULT_TOL)?;
    let idx = |name: &str| em.labels.iter().position(|l| l == name).expect("label");
    // Stage C_0 annihilates both P_Φ; stage C_1 adds the Gauss relations
    // k (k Φ + Ȧ) = ρ, which are not yet normal to C_0.
    let momentum_stage = ec.stages.get(1).is_some_and(|s| {
        s.k == Some(0)
            && (1..=2).all(|m| {
                let i = idx(&format!("P_phi_{m}"));
                s.subspace.directions.row(i).norm() < 1e-10 && s.subspace.basepoint[i].abs() < 1e-10
            })
    });
    let gauss_vec = |m: usize, k: f64| {
        let mut g = DVector::zeros(em.n);
        g[idx(&format!("phi_{m}"))] = k * k;
        g[idx(&format!("A_dot_{m}"))] = k;
        g
    };
    let gauss_stage = ec.stages.get(2).is_some_and(|s| {
        s.k == Some(1)
            && modes.iter().enumerate().all(|(m, &(k, rho))| {
                let g = gauss_vec(m + 1, k);
                let normal_now = (s.subspace.directions.transpose() * &g).norm() < 1e-10;
                let on_set = (g.dot(&s.subspace.basepoint) - rho).abs() < 1e-10;
                let new = (ec.stages[1].subspace.directions.transpose() * &g).norm() > 1e-6;
                normal_now && on_set && new
            })
    });
    rep.check(Check::flag("em_momentum_stage_then_gauss_stage", momentum_stage && gauss_stage));
    let xe = solve_vector_field(&em, &ec, DEFAULT_TOL)?;
    rep.result("em_system", &em);
    rep.result("em_chain", &ec);
    rep.result("em_gauge_directions", xe.kernel.ncols());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = String::from("system,n,rank_omega,dims,oracle_agrees,max_discrepancy\n");
    let (mut agree, mut worst) = (0usize, 0.0f64);
    for i in 0..p.systems {
        let (omega, a, b) = random_system(&mut rng, p.max_dim);
        let rank = omega.rank(1e-9);
        let sys = PresymplecticSystem::new(omega, a, b, None)?;
        let chain = gnh_iterate(&sys, DEFAULT_TOL)?;
        let cmp = compare_with_elimination(&sys, &chain);
        if let Some(d) = cmp {
            worst = worst.max(d);
            if d < PRINCIPAL_ANGLE_TOL {
                agree += 1;
            }
        } else {
            worst = f64::INFINITY;
        }
        let dims: Vec<String> = chain.dims.iter().map(|d| d.to_string()).collect();
        table.push_str(&format!(
            "{i},{},{rank},{},{},{:.16e}\n",
            sys.n,
            dims.join(" "),
            cmp.is_some(),
            cmp.unwrap_or(f64::NAN)
        ));
    }
    *csv = Some(table);
    rep.result("random_systems", p.systems);
    rep.check(Check::new("random_systems_agreeing", agree as f64, Relation::Eq, p.systems as f64));
    rep.check(Check::new("max_principal_angle_sine", worst, Relation::Lt, PRINCIPAL_ANGLE_TOL));
    Ok(())
}

/// Location `v > 0` of the outer maximum of an even profile, by bisection
/// of its analytic derivative.
fn profile_peak(p: &Profile, hi: f64) -> f64 {
    let (mut a, mut b) = (1e-9, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if p.derivative(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn ec_stability(cfg: &RunConfig, rep: &mut Report, csv: &mut Option<String>) -> Result<()> {
    let p = cfg.ec_stability.clone().unwrap_or_default();
    let ps = PhaseSpace::new(cfg.grid.phase_grid())?;
    let k = cfg.grid.k1() * p.mode as f64;
    let eq = Equilibrium::from_profile(&Profile::maxwellian(), &ps)?;
    let st = stability_report(&eq, k, &ps)?;
    rep.check(Check::new("maxwellian_first_variation", st.first_variation_residual, Relation::Lt, FIRST_VARIATION_TOL));
    rep.check(Check::flag("maxwellian_positive_definite", st.definiteness.verdict == Verdict::PositiveDefinite));
    rep.check(Check::new("maxwellian_min_eigenvalue", st.definiteness.min_eigenvalue, Relation::Gt, 0.0));
    rep.result("maxwellian", &st);

    let ts = Profile::two_stream(p.two_stream_u0, 1.0);
    let peak = profile_peak(&ts, p.two_stream_u0 + 5.0);
    rep.result("two_stream_peak_velocity", peak);
    let tol = ps.grid().dv().powi(2);
    match casimir_from_equilibrium(&Equilibrium::from_profile(&ts, &ps)?, &ps) {
        Err(Error::NonMonotone { lo, hi }) => {
            rep.result("two_stream_error", Error::NonMonotone { lo, hi }.to_string());
            rep.result("two_stream_interval", [lo, hi]);
            let miss = (lo + peak).abs().max((hi - peak).abs());
            rep.check(Check::new("two_stream_interval_mismatch", miss, Relation::Le, tol));
        }
        other => {
            rep.result("two_stream_error", format!("{:?}", other.map(|_| "profile built")));
            rep.check(Check::flag("two_stream_interval_mismatch", false));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = String::from("draw,components,min_eigenvalue,verdict\n");
    let (mut pd, mut min_eig) = (0usize, f64::INFINITY);
    for i in 0..p.random_profiles {
        let n = rng.random_range(1..=3);
        let mut comps: Vec<Gaussian> = (0..n)
            .map(|_| Gaussian { weight: rng.random_range(0.1..1.0), mean: 0.0, sigma: rng.random_range(0.5..1.5) })
            .collect();
        let total: f64 = comps.iter().map(|c| c.weight).sum();
        for c in comps.iter_mut() {
            c.weight /= total;
        }
        let prof = Profile::Mixture { components: comps };
        let r = stability_report(&Equilibrium::from_profile(&prof, &ps)?, k, &ps)?;
        if r.definiteness.verdict == Verdict::PositiveDefinite {
            pd += 1;
        }
        min_eig = min_eig.min(r.definiteness.min_eigenvalue);
        table.push_str(&format!("{i},{n},{:.16e},{:?}\n", r.definiteness.min_eigenvalue, r.definiteness.verdict));
    }
    *csv = Some(table);
    rep.check(Check::new("monotone_profiles_positive_definite", pd as f64, Relation::Eq, p.random_profiles as f64));
    rep.result("monotone_profiles_min_eigenvalue", min_eig);
    Ok(())
}

/// Channels used by the power-balance and zero-control runs: a current
/// antenna and an `x`-dependent shaping weight.
fn demo_channels(ps: &PhaseSpace, k: f64) -> Vec<ControlChannel> {
    let j = ps.spatial_fn(|x| (k * x).sin());
    let w_x = ps.spatial_fn(|x| 1.0 + 0.5 * (k * x).cos());
    let w = Array2::from_shape_fn(ps.phase_shape(), |(i, _)| w_x[i]);
    vec![ControlChannel::current("antenna", vec![j]), ControlChannel::shaping("shaping", w)]
}

/// Per-step comparison of `ΔH` with the Simpson quadrature of the power
/// `Σ u_a {H, B_a}`. Returns the worst relative mismatch and rows
/// `(t, H, work, mismatch)`.
pub fn power_balance(
    z0: &State,
    drive: &ControlledDrive,
    dt: f64,
    steps: usize,
    ps: &PhaseSpace,
) -> Result<(f64, Vec<[f64; 4]>)> {
    let mut z = z0.clone();
    let mut h = total_energy(&z, ps)?;
    let mut worst = 0.0f64;
    let mut rows = Vec::with_capacity(steps);
    for n in 0..steps {
        let t = n as f64 * dt;
        let z1 = step_rk4(&z, ps, t, dt, drive)?;
        let zm = step_rk4(&z, ps, t, 0.5 * dt, drive)?;
        let pw = [drive.power(&z, t, ps)?, drive.power(&zm, t + 0.5 * dt, ps)?, drive.power(&z1, t + dt, ps)?];
        let work = dt / 6.0 * (pw[0] + 4.0 * pw[1] + pw[2]);
        let h1 = total_energy(&z1, ps)?;
        let mismatch = ((h1 - h) - work).abs() / work.abs();
        worst = worst.max(mismatch);
        rows.push([t + dt, h1, work, mismatch]);
        h = h1;
        z = z1;
    }
    Ok((worst, rows))
}

fn controlled(cfg: &RunConfig, rep: &mut Report, csv: &mut Option<String>) -> Result<()> {
    let p = cfg.controlled_stabilization.clone().unwrap_or_default();
    let ps = PhaseSpace::new(cfg.grid.phase_grid())?;
    let k = cfg.grid.k1() * p.mode as f64;
    let eq = Equilibrium::from_profile(&Profile::maxwellian(), &ps)?;
    let profile = casimir_from_equilibrium(&eq, &ps)?;
    let cert = marginal_stabilization(&eq, &profile, k, p.v_node, p.width, &ps)?;
    rep.check(Check::flag("marginal_before_indefinite", cert.before.verdict == Verdict::Indefinite));
    rep.check(Check::flag("controlled_after_positive_definite", cert.after.verdict == Verdict::PositiveDefinite));
    rep.check(Check::new("controlled_min_eigenvalue", cert.after.min_eigenvalue, Relation::Gt, 0.0));
    rep.result("certificate", &cert);

    info!("controlled_stabilization: power balance over {} steps", p.power_steps);
    let channels = demo_channels(&ps, k);
    let sinusoid = Schedule::Sinusoidal { amplitude: 0.5 * p.amplitude, omega: 1.0, phase: 0.0 };
    let drives = [
        (
            "combined",
            ControlledDrive::new(
                channels.clone(),
                vec![Schedule::Constant { value: p.amplitude }, sinusoid.clone()],
                &ps,
            )?,
        ),
        (
            "shaping",
            ControlledDrive::new(
                vec![channels[1].clone()],
                vec![Schedule::Constant { value: 0.5 * p.amplitude }],
                &ps,
            )?,
        ),
    ];
    let landau_cfg = RunConfig::defaults(Scenario::Landau);
    let landau = landau_params(&landau_cfg);
    let start =
        ScenarioParams { perturbation: Perturbation { amplitude: 0.05, ..landau.perturbation }, ..landau.clone() };
    let mut table = String::from("drive,t,energy,work,relative_mismatch\n");
    for (name, drive) in &drives {
        let (worst, rows) = power_balance(&start.initial_state(&ps)?, drive, p.power_dt, p.power_steps, &ps)?;
        for r in rows {
            table.push_str(&format!("{name},{:.16e},{:.16e},{:.16e},{:.16e}\n", r[0], r[1], r[2], r[3]));
        }
        rep.check(Check::new(
            format!("power_balance_{name}_max_relative_mismatch"),
            worst,
            Relation::Le,
            POWER_BALANCE_TOL,
        ));
    }
    *csv = Some(table);

    info!("controlled_stabilization: zero-control reduction");
    // Reference Landau scenario on its own grid, with and without a drive
    // whose amplitudes vanish identically.
    let lps = PhaseSpace::new(landau_cfg.grid.phase_grid())?;
    let lk = landau_cfg.grid.k1();
    let zero = ControlledDrive::new(
        demo_channels(&lps, lk),
        vec![Schedule::Constant { value: 0.0 }, Schedule::Constant { value: 0.0 }],
        &lps,
    )?;
    let free = run(&landau, &lps)?;
    let driven = run_driven(&landau, &lps, &zero)?;
    let identical = free.series == driven.series && free.final_state == driven.final_state;
    rep.check(Check::flag("zero_control_identical_to_free_run", identical));
    let lp = landau_cfg.landau.clone().unwrap_or_default();
    let rate = fit_peak_rate(&driven.series.times(), &driven.series.mode(lp.mode), lp.fit_window[0], lp.fit_window[1])
        .unwrap_or(f64::NAN);
    let root = dispersion_root_oracle(&landau.equilibrium, lk, lps.q(), None)?;
    rep.result("zero_control_fitted_rate", rate);
    rep.check(Check::new(
        "zero_control_rate_relative_error",
        rel_err(rate, root.energy_rate()),
        Relation::Lt,
        RATE_TOL,
    ));
    Ok(())
}

fn convergence(cfg: &RunConfig, rep: &mut Report, csv: &mut Option<String>) -> Result<()> {
    let p = cfg.convergence.clone().unwrap_or_default();
    let ps = PhaseSpace::new(cfg.grid.phase_grid())?;
    let k = cfg.grid.k1() * p.mode as f64;
    let eq = Equilibrium::from_profile(&Profile::maxwellian(), &ps)?;
    let op = build_linear_operator(&eq, k, &ps)?;
    let nv = ps.nvel();
    let df: Vec<Complex64> = ps.v().iter().zip(&eq.f0).map(|(v, f)| Complex64::new(f * (1.0 + 0.5 * v), 0.0)).collect();
    let mut xhat = DVector::from_element(nv + 1, Complex64::new(0.0, 0.0));
    for (j, d) in df.iter().enumerate() {
        xhat[j] = *d;
    }
    xhat[nv] = gauss_field(k, &df, &ps);
    let mut table = String::from("eps,defect\n");
    let mut defects = Vec::new();
    for &e in &p.eps {
        let d = linearization_defect(&eq, &op, &xhat, e, &ps)?;
        table.push_str(&format!("{e:.16e},{d:.16e}\n"));
        defects.push(d);
    }
    let hi = defects.iter().copied().fold(0.0, f64::max);
    let lo = defects.iter().copied().fold(f64::INFINITY, f64::min);
    rep.result("eps", &p.eps);
    rep.result("linearization_defects", &defects);
    rep.check(Check::flag("linearization_defect_finite_nonzero", defects.iter().all(|d| d.is_finite() && *d > 0.0)));
    rep.check(Check::new("linearization_defect_ratio", hi / lo, Relation::Le, DEFECT_RATIO_TOL));

    info!("convergence: BGK translation mode");
    let bgk = two_stream_bgk(2.4, 1.0, ps.q(), p.bgk_amplitude, p.bgk_harmonics)?;
    let gps = PhaseSpace::new(PhaseGrid::es(bgk.length(), p.bgk_nx, p.bgk_v_max, p.bgk_nv))?;
    let beq = Equilibrium::from_state(bgk.state(&gps)?, &gps)?;
    let nm = neutral_mode_residual(&beq, SymmetryGenerator::XTranslation, &gps)?;
    let kc = gps.grid().k1();
    let f =
        gps.phase_fn(|x, v, _| (1.0 + p.control_amplitude * (kc * x).cos()) * (-0.5 * v * v).exp() / (2.0 * PI).sqrt());
    let ctrl = Equilibrium::from_state(State::with_poisson_field(&gps, f)?, &gps)?;
    let nc = neutral_mode_residual(&ctrl, SymmetryGenerator::XTranslation, &gps)?;
    rep.result("bgk", &bgk);
    rep.result("bgk_neutral_mode", nm);
    rep.result("control_neutral_mode", nc);
    rep.check(Check::new("bgk_rhs_residual", nm.rhs_residual, Relation::Lt, GOLDSTONE_R0_TOL));
    rep.check(Check::new(
        "translation_residual_over_r0",
        nm.residual / nm.rhs_residual,
        Relation::Le,
        GOLDSTONE_FACTOR,
    ));
    rep.check(Check::new(
        "control_over_equilibrium_residual",
        nc.residual / nm.residual,
        Relation::Ge,
        CONTROL_SEPARATION,
    ));
    *csv = Some(table);
    Ok(())
}
