//! Constraint chains of random linear presymplectic systems.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use vmgeom::gnh::{gnh_iterate, solve_vector_field, PresymplecticSystem};

const TOL: f64 = 1e-10;

/// `Ω = M J Mᵀ` with `J` canonical of rank `2r`, `A = S + Sᵀ`, and
/// `b = -A z0` so that `z0` is a rest point and the chain is nonempty.
fn system() -> impl Strategy<Value = PresymplecticSystem> {
    (2usize..=6)
        .prop_flat_map(|n| {
            (
                Just(n),
                0..=n / 2,
                prop::collection::vec(-2i32..=2, n * n),
                prop::collection::vec(-2i32..=2, n * n),
                prop::collection::vec(-3i32..=3, n),
            )
        })
        .prop_filter_map("singular change of basis", |(n, r, m, s, z0)| {
            let m = DMatrix::from_iterator(n, n, m.into_iter().map(f64::from));
            if m.determinant().abs() < 0.5 {
                return None;
            }
            let mut j = DMatrix::zeros(n, n);
            for i in 0..r {
                j[(i, r + i)] = 1.0;
                j[(r + i, i)] = -1.0;
            }
            let omega = &m * j * m.transpose();
            let s = DMatrix::from_iterator(n, n, s.into_iter().map(f64::from));
            let a = &s + s.transpose();
            let b = -(&a * DVector::from_iterator(n, z0.into_iter().map(f64::from)));
            PresymplecticSystem::new(omega, a, b, None).ok()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chain_is_nested_and_dimensions_decrease(sys in system()) {
        let chain = gnh_iterate(&sys, TOL).unwrap();
        prop_assert_eq!(chain.empty_at, None);
        prop_assert_eq!(chain.dims[0], sys.n);
        prop_assert!(chain.dims.windows(2).all(|w| w[1] < w[0]));
        for w in chain.stages.windows(2) {
            let (outer, inner) = (&w[0].subspace, &w[1].subspace);
            prop_assert!(outer.contains(&inner.basepoint, 1e-8));
            for c in inner.directions.column_iter() {
                let p = &inner.basepoint + c;
                prop_assert!(outer.contains(&p, 1e-8));
            }
        }
    }

    #[test]
    fn vector_field_is_tangent_and_solves_the_equation(sys in system(), y in prop::collection::vec(-1.0f64..1.0, 6)) {
        let chain = gnh_iterate(&sys, TOL).unwrap();
        let fin = chain.final_subspace();
        let sol = solve_vector_field(&sys, &chain, TOL).unwrap();
        let y = DVector::from_iterator(fin.dim(), y.into_iter().take(fin.dim()).chain(std::iter::repeat(0.0)).take(fin.dim()));
        let z = fin.point(&y);
        let x = sol.eval(&z, &fin.basepoint);
        let residual = sys.omega.transpose() * &x - (&sys.a * &z + &sys.b);
        prop_assert!(residual.norm() < 1e-8 * (1.0 + z.norm()), "{}", residual.norm());
        let off = &x - &fin.directions * (fin.directions.transpose() * &x);
        prop_assert!(off.norm() < 1e-8 * (1.0 + x.norm()));
    }
}

#[test]
fn symplectic_harmonic_oscillator_is_unconstrained() {
    let omega = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let sys = PresymplecticSystem::new(omega, DMatrix::identity(2, 2), DVector::zeros(2), None).unwrap();
    let chain = gnh_iterate(&sys, TOL).unwrap();
    assert_eq!(chain.dims, vec![2]);
    assert_eq!(chain.stabilized_at, 0);
}
