//! Rank-revealing helpers on dense real or complex matrices, all driven by
//! the SVD with a relative singular-value threshold.

use nalgebra::{ComplexField, DMatrix, SVD};

fn padded_svd<T: ComplexField<RealField = f64>>(a: &DMatrix<T>) -> SVD<T, nalgebra::Dyn, nalgebra::Dyn> {
    let (r, c) = a.shape();
    let m = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(a);
        p
    } else {
        a.clone()
    };
    SVD::new(m, true, true)
}

fn threshold(sv: &[f64], rtol: f64) -> f64 {
    let smax = sv.iter().copied().fold(0.0, f64::max);
    rtol * smax
}

/// Numerical rank: singular values above `rtol * sigma_max`.
pub fn rank<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, rtol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let svd = SVD::new(a.clone(), false, false);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let t = threshold(&sv, rtol);
    sv.iter().filter(|&&s| s > t && s > 0.0).count()
}

/// Orthonormal basis (columns) of the null space of `a`.
pub fn null_space<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, rtol: f64) -> DMatrix<T> {
    null_space_by(a, |sv| threshold(sv, rtol))
}

/// Null space with an absolute singular-value cutoff.
pub fn null_space_abs<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, atol: f64) -> DMatrix<T> {
    null_space_by(a, |_| atol)
}

fn null_space_by<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, cutoff: impl Fn(&[f64]) -> f64) -> DMatrix<T> {
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = padded_svd(a);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let t = cutoff(&sv);
    let v_t = svd.v_t.expect("requested");
    let cols: Vec<usize> = (0..sv.len()).filter(|&i| !(sv[i] > t && sv[i] > 0.0)).collect();
    let mut out = DMatrix::zeros(n, cols.len());
    for (k, &i) in cols.iter().enumerate() {
        for j in 0..n {
            out[(j, k)] = v_t[(i, j)].clone().conjugate();
        }
    }
    out
}

/// Orthonormal basis (columns) of the column space of `a`.
pub fn range_basis<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, rtol: f64) -> DMatrix<T> {
    range_basis_by(a, |sv| threshold(sv, rtol))
}

/// Column space with an absolute singular-value cutoff.
pub fn range_basis_abs<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, atol: f64) -> DMatrix<T> {
    range_basis_by(a, |_| atol)
}

fn range_basis_by<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, cutoff: impl Fn(&[f64]) -> f64) -> DMatrix<T> {
    let m = a.nrows();
    if a.ncols() == 0 || m == 0 {
        return DMatrix::zeros(m, 0);
    }
    let svd = SVD::new(a.clone(), true, false);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let t = cutoff(&sv);
    let u = svd.u.expect("requested");
    let cols: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > t && sv[i] > 0.0).collect();
    let mut out = DMatrix::zeros(m, cols.len());
    for (k, &i) in cols.iter().enumerate() {
        out.set_column(k, &u.column(i));
    }
    out
}

/// Moore–Penrose pseudo-inverse with the relative cutoff `rtol`.
pub fn pinv<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, rtol: f64) -> DMatrix<T> {
    pinv_by(a, |sv| threshold(sv, rtol))
}

/// Pseudo-inverse with an absolute singular-value cutoff.
pub fn pinv_abs<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, atol: f64) -> DMatrix<T> {
    pinv_by(a, |_| atol)
}

fn pinv_by<T: ComplexField<RealField = f64>>(a: &DMatrix<T>, cutoff: impl Fn(&[f64]) -> f64) -> DMatrix<T> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = SVD::new(a.clone(), true, true);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let t = cutoff(&sv);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let mut out = DMatrix::zeros(c, r);
    for (i, &s) in sv.iter().enumerate() {
        if s > t && s > 0.0 {
            let vi = v_t.row(i).adjoint();
            let ui = u.column(i).adjoint();
            out += (vi * ui) * T::from_real(1.0 / s);
        }
    }
    out
}

/// Largest sine of the principal angles between the column spaces of two
/// orthonormal bases of equal dimension: `||(I - U1 U1^H) U2||_2`.
pub fn max_principal_sine<T: ComplexField<RealField = f64>>(u1: &DMatrix<T>, u2: &DMatrix<T>) -> f64 {
    if u2.ncols() == 0 {
        return 0.0;
    }
    let resid = u2 - u1 * (u1.adjoint() * u2);
    SVD::new(resid, false, false).singular_values.iter().copied().fold(0.0, f64::max)
}
