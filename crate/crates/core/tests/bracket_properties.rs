//! Algebraic properties of the discrete bracket on random smooth arguments.

use std::f64::consts::PI;

use ndarray::Array1;
use proptest::prelude::*;
use vmgeom::bracket::{hamiltonian_vector_field, mv_bracket, pairing, FunctionalDerivative};
use vmgeom::grid::{Geometry, PhaseGrid, PhaseSpace};
use vmgeom::state::State;

/// Coefficients of a smooth random derivative: four Fourier-in-x times
/// quadratic-in-v terms plus field components.
type Coeffs = ([f64; 8], [f64; 4]);

fn coeffs() -> impl Strategy<Value = Coeffs> {
    (prop::array::uniform8(-1.0f64..1.0), prop::array::uniform4(-1.0f64..1.0))
}

fn derivative(ps: &PhaseSpace, c: &Coeffs) -> FunctionalDerivative {
    let k = 2.0 * PI / ps.grid().length;
    let (a, e) = c;
    let mut d = FunctionalDerivative::zeros(ps);
    d.d_f = ps.phase_fn(|x, v1, v2| {
        (a[0] + a[1] * v1 + a[2] * v1 * v1) * (k * x + a[3]).sin()
            + (a[4] * v2 + a[5] * v1 * v2) * (2.0 * k * x).cos()
            + a[6] * (v1 * v1 + v2 * v2) * (k * x).cos()
            + a[7] * v1
    });
    for (m, de) in d.d_e.iter_mut().enumerate() {
        *de = ps.spatial_fn(|x| e[m] * (k * x).cos() + e[m + 1] * (2.0 * k * x).sin());
    }
    if let Some(b) = d.d_b.as_mut() {
        *b = ps.spatial_fn(|x| e[3] * (k * x + e[2]).sin());
    }
    d
}

fn state(ps: &PhaseSpace) -> State {
    let k = 2.0 * PI / ps.grid().length;
    let f = ps.phase_fn(|x, v1, v2| (1.0 + 0.2 * (k * x).cos()) * (-0.5 * (v1 * v1 + v2 * v2)).exp());
    let mut z = State::with_poisson_field(ps, f).unwrap();
    if let Some(b) = z.b.as_mut() {
        *b = ps.spatial_fn(|x| 0.3 + 0.1 * (k * x).sin());
        z.e[1] = ps.spatial_fn(|x| 0.05 * (k * x).cos());
    }
    z
}

fn grids() -> [PhaseSpace; 2] {
    [
        PhaseSpace::new(PhaseGrid::es(4.0 * PI, 16, 6.0, 48)).unwrap(),
        PhaseSpace::new(PhaseGrid::em(4.0 * PI, 8, 6.0, 16)).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn antisymmetric(f in coeffs(), g in coeffs()) {
        for ps in grids() {
            let z = state(&ps);
            let (df, dg) = (derivative(&ps, &f), derivative(&ps, &g));
            let fg = mv_bracket(&df, &dg, &z, &ps).unwrap();
            let gf = mv_bracket(&dg, &df, &z, &ps).unwrap();
            prop_assert!((fg + gf).abs() <= 1e-12 * fg.abs().max(1.0));
        }
    }

    #[test]
    fn bilinear(f in coeffs(), f2 in coeffs(), g in coeffs(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        for ps in grids() {
            let z = state(&ps);
            let (df, df2, dg) = (derivative(&ps, &f), derivative(&ps, &f2), derivative(&ps, &g));
            let lhs = mv_bracket(&df.combine(a, &df2, b), &dg, &z, &ps).unwrap();
            let x = a * mv_bracket(&df, &dg, &z, &ps).unwrap();
            let y = b * mv_bracket(&df2, &dg, &z, &ps).unwrap();
            prop_assert!((lhs - x - y).abs() <= 1e-12 * (x.abs() + y.abs()).max(1.0));
        }
    }

    #[test]
    fn vector_field_is_the_dual_of_the_bracket(f in coeffs(), h in coeffs()) {
        for ps in grids() {
            let z = state(&ps);
            let (df, dh) = (derivative(&ps, &f), derivative(&ps, &h));
            let x = hamiltonian_vector_field(&dh, &z, &ps).unwrap();
            let lhs = pairing(&df, &x, &ps);
            let rhs = mv_bracket(&df, &dh, &z, &ps).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-11 * rhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn mass_is_a_casimir(g in coeffs()) {
        for ps in grids() {
            let z = state(&ps);
            let b = mv_bracket(&FunctionalDerivative::total_mass(&ps), &derivative(&ps, &g), &z, &ps).unwrap();
            prop_assert!(b.abs() < 1e-12);
        }
    }
}

#[test]
fn l2_casimir_residual_decreases_under_refinement() {
    let residual = |nx: usize, nv: usize| {
        let ps = PhaseSpace::new(PhaseGrid::es(4.0 * PI, nx, 8.0, nv)).unwrap();
        let f = ps.phase_fn(|x, v, _| {
            let u = v - 0.2 - 0.3 * (0.5 * x).sin();
            (1.0 + 0.1 * (0.5 * x).cos()) * (-0.5 * u * u).exp()
        });
        let z = State::with_poisson_field(&ps, f).unwrap();
        let mut g = FunctionalDerivative::zeros(&ps);
        g.d_f = ps.phase_fn(|x, v, _| (0.5 * x + 0.3).sin() * (0.4 * v + 0.5).cos());
        g.d_e[0] = ps.spatial_fn(|x| (0.5 * x).cos());
        mv_bracket(&FunctionalDerivative::lp_casimir(&z, 2.0), &g, &z, &ps).unwrap().abs()
    };
    let r = [residual(16, 64), residual(32, 128), residual(64, 256)];
    assert!(r[1] < r[0] / 4.0 && r[2] < r[1] / 4.0, "{r:?}");
}

#[test]
fn electrostatic_field_derivatives_see_only_the_mean_free_part() {
    let ps = PhaseSpace::new(PhaseGrid::es(4.0 * PI, 16, 6.0, 32)).unwrap();
    assert_eq!(ps.geometry(), Geometry::Es1d1v);
    let z = state(&ps);
    let f = derivative(&ps, &([0.3, 0.1, -0.2, 0.4, 0.0, 0.0, 0.1, 0.2], [0.5, -0.3, 0.0, 0.0]));
    let mut shifted = f.clone();
    shifted.d_e[0] = &f.d_e[0] + &Array1::from_elem(16, 2.5);
    let g = FunctionalDerivative::energy(&z, &ps);
    let (a, b) = (mv_bracket(&f, &g, &z, &ps).unwrap(), mv_bracket(&shifted, &g, &z, &ps).unwrap());
    assert!((a - b).abs() <= 1e-14 * a.abs(), "{a} vs {b}");
}
