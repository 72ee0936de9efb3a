//! Brute-force constraint elimination used as an independent check on the
//! presymplectic constraint chain.
//!
//! Constraint sets are kept as explicit equations `R z = s` and every step
//! is plain Gauss–Jordan elimination with partial pivoting: at `C = {R z = s}`
//! with tangent space `T = ker R`, the equation `Ωᵀ T y = A z + b` is
//! solvable iff `wᵀ (A z + b) = 0` for every `w` with `Tᵀ Ω w = 0`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Row-reduced `[M | rhs]`; returns the reduced rows, pivot columns and
/// whether some zero row has a nonzero right-hand side.
fn gauss_jordan(m: &DMatrix<f64>, rhs: &DVector<f64>, tol: f64) -> (DMatrix<f64>, DVector<f64>, Vec<usize>, bool) {
    let (rows, cols) = m.shape();
    let mut a = m.clone();
    let mut r = rhs.clone();
    let scale = a.iter().fold(0.0f64, |x, y| x.max(y.abs())).max(1.0);
    let cut = tol * scale;
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..cols {
        if row == rows {
            break;
        }
        let mut best = row;
        for i in row..rows {
            if a[(i, col)].abs() > a[(best, col)].abs() {
                best = i;
            }
        }
        if a[(best, col)].abs() <= cut {
            for i in row..rows {
                a[(i, col)] = 0.0;
            }
            continue;
        }
        a.swap_rows(row, best);
        r.swap_rows(row, best);
        let p = a[(row, col)];
        for j in 0..cols {
            a[(row, j)] /= p;
        }
        r[row] /= p;
        for i in 0..rows {
            if i != row {
                let f = a[(i, col)];
                if f != 0.0 {
                    for j in 0..cols {
                        a[(i, j)] -= f * a[(row, j)];
                    }
                    r[i] -= f * r[row];
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let rscale = r.iter().fold(0.0f64, |x, y| x.max(y.abs())).max(1.0);
    let inconsistent = (row..rows).any(|i| r[i].abs() > 1e3 * cut * rscale);
    let keep = pivots.len();
    (a.rows(0, keep).into_owned(), r.rows(0, keep).into_owned(), pivots, inconsistent)
}

/// Basis of `ker M` from its reduced row echelon form.
fn kernel(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let (red, _, pivots, _) = gauss_jordan(m, &DVector::zeros(m.nrows()), tol);
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let mut basis = DMatrix::zeros(n, free.len());
    for (k, &f) in free.iter().enumerate() {
        basis[(f, k)] = 1.0;
        for (row, &p) in pivots.iter().enumerate() {
            basis[(p, k)] = -red[(row, f)];
        }
    }
    basis
}

/// Affine set `{z : R z = s}` with independent rows.
#[derive(Debug, Clone)]
pub struct EquationSet {
    pub r: DMatrix<f64>,
    pub s: DVector<f64>,
}

impl EquationSet {
    pub fn dim(&self) -> usize {
        self.r.ncols() - self.r.nrows()
    }

    pub fn tangent(&self, tol: f64) -> DMatrix<f64> {
        kernel(&self.r, tol)
    }

    /// `‖R z - s‖` relative to `1 + ‖s‖`.
    pub fn residual(&self, z: &DVector<f64>) -> f64 {
        if self.r.nrows() == 0 {
            return 0.0;
        }
        (&self.r * z - &self.s).norm() / (1.0 + self.s.norm())
    }
}

/// Outcome of the elimination: the ambient space followed by every strictly
/// smaller constraint set, or `None` in `empty_at` when the equations became
/// inconsistent at that step.
#[derive(Debug, Clone)]
pub struct EliminationChain {
    pub stages: Vec<EquationSet>,
    pub empty_at: Option<usize>,
}

impl EliminationChain {
    pub fn dims(&self) -> Vec<usize> {
        self.stages.iter().map(EquationSet::dim).collect()
    }
}

pub fn eliminate(omega: &DMatrix<f64>, a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> EliminationChain {
    let n = omega.nrows();
    let mut cur = EquationSet { r: DMatrix::zeros(0, n), s: DVector::zeros(0) };
    let mut stages = vec![cur.clone()];
    for step in 0..=n + 1 {
        let t = cur.tangent(tol);
        let w = kernel(&(t.transpose() * omega), tol);
        let new_r = w.transpose() * a;
        let new_s = -(w.transpose() * b);
        let stacked_r = DMatrix::from_fn(cur.r.nrows() + new_r.nrows(), n, |i, j| {
            if i < cur.r.nrows() {
                cur.r[(i, j)]
            } else {
                new_r[(i - cur.r.nrows(), j)]
            }
        });
        let stacked_s =
            DVector::from_fn(stacked_r.nrows(), |i, _| if i < cur.s.len() { cur.s[i] } else { new_s[i - cur.s.len()] });
        let (r, s, _, inconsistent) = gauss_jordan(&stacked_r, &stacked_s, tol);
        if inconsistent {
            return EliminationChain { stages, empty_at: Some(step) };
        }
        if r.nrows() == cur.r.nrows() {
            break;
        }
        cur = EquationSet { r, s };
        stages.push(cur.clone());
    }
    EliminationChain { stages, empty_at: None }
}

/// Orthonormal basis of the column span (modified Gram–Schmidt).
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for c in m.column_iter() {
        let mut v = c.into_owned();
        for _ in 0..2 {
            for q in &cols {
                let d = q.dot(&v);
                v -= q * d;
            }
        }
        let nv = v.norm();
        if nv > 1e-10 * c.norm().max(1e-300) {
            cols.push(v / nv);
        }
    }
    if cols.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Sine of the largest principal angle between two equal-dimensional
/// column spans (orthonormal inputs).
pub fn largest_angle_sine(q1: &DMatrix<f64>, q2: &DMatrix<f64>) -> f64 {
    if q1.ncols() != q2.ncols() {
        return 1.0;
    }
    if q1.ncols() == 0 {
        return 0.0;
    }
    let resid = q2 - q1 * (q1.transpose() * q2);
    let r2 = q1 - q2 * (q2.transpose() * q1);
    let s = |m: DMatrix<f64>| m.singular_values().iter().fold(0.0f64, |a, x| a.max(*x));
    s(resid).max(s(r2))
}

/// Random presymplectic system with small integer data: `Ω = M J Mᵀ` for a
/// canonical `J` of random rank, symmetric `A`, and `b = -A z0` so that the
/// chain never ends empty.
pub fn random_system(rng: &mut impl Rng, max_dim: usize) -> (DMatrix<f64>, DMatrix<f64>, DVector<f64>) {
    let n = rng.random_range(2..=max_dim);
    let r = rng.random_range(0..=n / 2);
    let mut j = DMatrix::zeros(n, n);
    for i in 0..r {
        j[(i, r + i)] = 1.0;
        j[(r + i, i)] = -1.0;
    }
    let m = loop {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2i32..=2) as f64);
        if m.determinant().abs() > 0.5 {
            break m;
        }
    };
    let omega = &m * j * m.transpose();
    let s = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2i32..=2) as f64);
    let a = &s + s.transpose();
    let z0 = DVector::from_fn(n, |_, _| rng.random_range(-3i32..=3) as f64);
    let b = -(&a * z0);
    (omega, a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_of_rank_one() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let k = kernel(&m, 1e-12);
        assert_eq!(k.ncols(), 2);
        assert!((m * k).norm() < 1e-14);
    }

    #[test]
    fn inconsistent_equations_are_detected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let (_, _, _, bad) = gauss_jordan(&m, &DVector::from_vec(vec![1.0, 3.0]), 1e-12);
        assert!(bad);
        let (_, _, _, ok) = gauss_jordan(&m, &DVector::from_vec(vec![1.0, 2.0]), 1e-12);
        assert!(!ok);
    }

    #[test]
    fn free_particle_by_hand() {
        // (q, v, p), Ω = dq∧dp, H = p v - v²/2: one constraint p = v.
        let mut omega = DMatrix::zeros(3, 3);
        omega[(0, 2)] = 1.0;
        omega[(2, 0)] = -1.0;
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 1.0, 0.0]);
        let c = eliminate(&omega, &a, &DVector::zeros(3), 1e-10);
        assert_eq!(c.dims(), vec![3, 2]);
        assert_eq!(c.empty_at, None);
    }

    #[test]
    fn principal_angle_of_rotated_lines() {
        let t: f64 = 1e-3;
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[t.cos(), t.sin()]);
        assert!((largest_angle_sine(&a, &b) - t.sin()).abs() < 1e-15);
    }
}
