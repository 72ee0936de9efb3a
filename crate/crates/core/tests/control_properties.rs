//! Controlled dynamics: Hamiltonian structure, equivariance, power balance
//! and Casimir preservation of the control channels.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use vmgeom::bracket::{hamiltonian_vector_field, mv_bracket, pairing, FunctionalDerivative, StateTangent};
use vmgeom::control::{
    channel_functional_derivative, control_generator, controlled_rhs, ControlChannel, ControlledDrive, Schedule,
};
use vmgeom::dynamics::step_rk4;
use vmgeom::grid::{PhaseGrid, PhaseSpace};
use vmgeom::state::{casimir_lp, total_energy, State};

fn es(nx: usize, nv: usize) -> PhaseSpace {
    PhaseSpace::new(PhaseGrid::es(4.0 * PI, nx, 8.0, nv)).unwrap()
}

fn state(ps: &PhaseSpace, a: f64, phase: f64) -> State {
    let f = ps.phase_fn(|x, v, _| {
        let u = v - 0.2 * (0.5 * x + phase).sin();
        (1.0 + a * (0.5 * x + phase).cos()) * (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
    });
    State::with_poisson_field(ps, f).unwrap()
}

fn channels(ps: &PhaseSpace, phase: f64) -> Vec<ControlChannel> {
    let j = ps.spatial_fn(|x| (0.5 * x + phase).sin() + 0.3 * (x + phase).cos());
    let w = ps.phase_fn(|x, v, _| 1.0 + 0.5 * (0.5 * x + phase).cos() + 0.1 * v);
    vec![ControlChannel::current("j", vec![j]), ControlChannel::shaping("w", w)]
}

fn roll_rows(a: &Array2<f64>, s: usize) -> Array2<f64> {
    let n = a.nrows();
    let mut out = a.clone();
    for i in 0..n {
        out.row_mut((i + s) % n).assign(&a.row(i));
    }
    out
}

fn roll(a: &Array1<f64>, s: usize) -> Array1<f64> {
    let n = a.len();
    Array1::from_shape_fn(n, |i| a[(i + n - s) % n])
}

fn interior_diff(a: &StateTangent, b: &StateTangent, margin: usize) -> f64 {
    let nv = a.df.ncols();
    let df = (&a.df - &b.df)
        .axis_iter(Axis(1))
        .enumerate()
        .filter(|(j, _)| (margin..nv - margin).contains(j))
        .flat_map(|(_, c)| c.to_vec())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let de = a.de.iter().zip(&b.de).flat_map(|(x, y)| (x - y).to_vec()).fold(0.0f64, |m, x| m.max(x.abs()));
    df.max(de)
}

#[test]
fn controlled_rhs_is_the_vector_field_of_the_controlled_hamiltonian() {
    let ps = es(32, 128);
    let z = state(&ps, 0.1, 0.0);
    let chs = channels(&ps, 0.0);
    let u = [0.3, -0.2];
    let drive =
        ControlledDrive::new(chs.clone(), u.iter().map(|&value| Schedule::Constant { value }).collect(), &ps).unwrap();
    let mut hu = FunctionalDerivative::energy(&z, &ps);
    for (ch, &ua) in chs.iter().zip(&u) {
        hu = hu.combine(1.0, &channel_functional_derivative(ch, &z, &ps).unwrap(), ua);
    }
    let hvf = hamiltonian_vector_field(&hu, &z, &ps).unwrap();
    let r = controlled_rhs(&z, &ps, &drive, 0.0).unwrap();
    let d = interior_diff(&r, &hvf, 5);
    assert!(d < 1e-10, "interior mismatch {d:e}");
}

#[test]
fn controlled_energy_rate_is_the_bracket_power() {
    let ps = es(32, 128);
    let z = state(&ps, 0.1, 0.0);
    let drive = ControlledDrive::new(
        channels(&ps, 0.0),
        vec![Schedule::Constant { value: 0.2 }, Schedule::Constant { value: 0.1 }],
        &ps,
    )
    .unwrap();
    let power = drive.power(&z, 0.0, &ps).unwrap();
    let dt = 1e-3;
    let fwd = total_energy(&step_rk4(&z, &ps, 0.0, dt, &drive).unwrap(), &ps).unwrap();
    let back = total_energy(&step_rk4(&z, &ps, 0.0, -dt, &drive).unwrap(), &ps).unwrap();
    let rate = (fwd - back) / (2.0 * dt);
    assert!((rate - power).abs() <= 1e-4 * power.abs(), "dH/dt {rate:e} vs power {power:e}");
}

#[test]
fn current_channels_preserve_every_kinetic_casimir() {
    let ps = es(32, 128);
    let z = state(&ps, 0.1, 0.0);
    let ch = &channels(&ps, 0.0)[0];
    let g = control_generator(ch, &z, &ps).unwrap();
    assert_eq!(g.df.iter().fold(0.0f64, |m, x| m.max(x.abs())), 0.0);
    for p in [1.0, 2.0, 3.0] {
        let rate = pairing(&FunctionalDerivative::lp_casimir(&z, p), &g, &ps);
        assert_eq!(rate, 0.0);
    }
}

#[test]
fn shaping_channels_keep_the_l2_casimir_up_to_discretization_error() {
    // The shaping generator is a Hamiltonian vector field, so <dC, F> is
    // a bracket with a Casimir and vanishes in the continuum for any
    // weight, x-dependent or not. On the grid it is truncation error.
    let rate = |nx: usize, nv: usize| {
        let ps = es(nx, nv);
        let z = state(&ps, 0.1, 0.0);
        let w = ps.phase_fn(|x, _, _| 1.0 + 0.5 * (0.5 * x).cos());
        let ch = ControlChannel::shaping("w", w);
        let c = FunctionalDerivative::lp_casimir(&z, 2.0);
        let b = channel_functional_derivative(&ch, &z, &ps).unwrap();
        let scale = casimir_lp(&z.f, &ps, 2.0).unwrap();
        mv_bracket(&c, &b, &z, &ps).unwrap().abs() / scale
    };
    let coarse = rate(16, 64);
    let fine = rate(32, 128);
    assert!(fine < 1e-4, "{fine:e}");
    assert!(fine < coarse / 4.0 || fine < 1e-13, "{coarse:e} -> {fine:e}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn controlled_rhs_commutes_with_grid_translations(shift in 1usize..32, u0 in -1.0f64..1.0, u1 in -1.0f64..1.0) {
        let ps = es(32, 64);
        let z = state(&ps, 0.1, 0.3);
        let chs = channels(&ps, 0.3);
        let sched = vec![Schedule::Constant { value: u0 }, Schedule::Constant { value: u1 }];
        let r = controlled_rhs(&z, &ps, &ControlledDrive::new(chs.clone(), sched.clone(), &ps).unwrap(), 0.0).unwrap();

        let zs = State { f: roll_rows(&z.f, shift), e: z.e.iter().map(|e| roll(e, shift)).collect(), b: None };
        let chs_s: Vec<ControlChannel> = chs
            .iter()
            .map(|c| match &c.kind {
                vmgeom::control::ChannelKind::CurrentCoupling { profile } => {
                    ControlChannel::current(c.label.clone(), profile.iter().map(|p| roll(p, shift)).collect())
                }
                vmgeom::control::ChannelKind::CasimirShaping { weight } => {
                    ControlChannel::shaping(c.label.clone(), roll_rows(weight, shift))
                }
            })
            .collect();
        let rs = controlled_rhs(&zs, &ps, &ControlledDrive::new(chs_s, sched, &ps).unwrap(), 0.0).unwrap();
        let back = StateTangent { df: roll_rows(&r.df, shift), de: r.de.iter().map(|e| roll(e, shift)).collect(), db: None };
        let scale = r.max_abs().max(1.0);
        prop_assert!(rs.max_diff(&back) <= 1e-10 * scale, "{:e}", rs.max_diff(&back));
    }
}
