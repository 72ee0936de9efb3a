//! Linearized electrostatic dynamics about homogeneous equilibria, spectra,
//! zero-frequency (neutral) subspaces and the consistency checks that tie
//! the linear operator to the nonlinear vector field.
//!
//! A perturbation of Fourier mode `k` is stored as the complex amplitudes
//! `(δf(v_0), …, δf(v_{Nv-1}), δE)`; the physical perturbation is the real
//! part of the amplitude times `exp(i k x)`.

mod dispersion;
mod goldstone;

pub use dispersion::{dielectric, dispersion_root_oracle, DispersionRoot, ScanWindow};
pub use goldstone::{
    neutral_mode_residual, symmetry_direction, two_stream_bgk, BgkSolution, NeutralModeReport, SymmetryGenerator,
};

use log::warn;
use nalgebra::{DMatrix, DVector, Schur};
use ndarray::Array1;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bracket::StateTangent;
use crate::dynamics::{fit_peak_rate, rhs};
use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::grid::{Geometry, PhaseSpace};
use crate::linalg::{null_space, null_space_abs};

/// Dense per-mode linear operator.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    pub k: f64,
    pub matrix: DMatrix<Complex64>,
    pub block_labels: Vec<String>,
    /// Linearized Gauss law as a row `c` with `c · x = 0` on consistent
    /// perturbations; absent for operators built from raw matrices.
    pub gauss: Option<DVector<Complex64>>,
}

impl LinearOperator {
    /// Wrap an arbitrary square matrix (no Gauss constraint).
    pub fn from_matrix(k: f64, matrix: DMatrix<Complex64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Input(format!("operator must be square (got {:?})", matrix.shape())));
        }
        let n = matrix.nrows();
        Ok(LinearOperator { k, block_labels: (0..n).map(|i| format!("x[{i}]")).collect(), matrix, gauss: None })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        &self.matrix * x
    }
}

fn check_mode(k: f64, ps: &PhaseSpace) -> Result<usize> {
    if ps.geometry() != Geometry::Es1d1v {
        return Err(Error::Unsupported("linear operator is implemented for the electrostatic geometry".into()));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::Input(format!("wavenumber must be positive (got {k}); the k = 0 mode is neutralized")));
    }
    let m = k / ps.grid().k1();
    let mr = m.round();
    if (m - mr).abs() > 1e-9 * m.max(1.0) || mr < 1.0 {
        return Err(Error::Input(format!("k = {k} is not a multiple of 2*pi/L = {}", ps.grid().k1())));
    }
    Ok(mr as usize)
}

/// Linearized Vlasov–Ampère operator for mode `k` about a homogeneous
/// equilibrium:
/// `dδf/dt = -i k v δf - q δE F0'(v)`, `dδE/dt = -q Σ_v w v δf`,
/// with `F0'` from the shared velocity stencil.
pub fn build_linear_operator(eq: &Equilibrium, k: f64, ps: &PhaseSpace) -> Result<LinearOperator> {
    check_mode(k, ps)?;
    if !eq.is_homogeneous() {
        return Err(Error::Unsupported("linear operator about an inhomogeneous equilibrium".into()));
    }
    let nv = ps.nvel();
    if eq.f0.len() != nv {
        return Err(crate::error::shape_err("F0", nv, eq.f0.len()));
    }
    let q = ps.q();
    let v = ps.v();
    let w = ps.vel_weights();
    let df0 = ps.stencil().apply(eq.f0.as_slice().expect("contiguous"));
    let mut m = DMatrix::zeros(nv + 1, nv + 1);
    for j in 0..nv {
        m[(j, j)] = Complex64::new(0.0, -k * v[j]);
        m[(j, nv)] = Complex64::new(-q * df0[j], 0.0);
        m[(nv, j)] = Complex64::new(-q * w[j] * v[j], 0.0);
    }
    let mut gauss = DVector::zeros(nv + 1);
    for j in 0..nv {
        gauss[j] = Complex64::new(-q * w[j], 0.0);
    }
    gauss[nv] = Complex64::new(0.0, k);
    let mut block_labels: Vec<String> = (0..nv).map(|j| format!("df[v={:.6}]", v[j])).collect();
    block_labels.push("dE".into());
    Ok(LinearOperator { k, matrix: m, block_labels, gauss: Some(gauss) })
}

/// Gauss-consistent field amplitude for a given `δf` amplitude.
pub fn gauss_field(k: f64, df: &[Complex64], ps: &PhaseSpace) -> Complex64 {
    let q = ps.q();
    let s: Complex64 = df.iter().zip(ps.vel_weights().iter()).map(|(a, w)| a * *w).sum();
    q * s / Complex64::new(0.0, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
    pub neutral: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub k: f64,
    /// Sorted by real part, largest first.
    pub eigenvalues: Vec<Eigenvalue>,
}

/// Threshold on `|Re λ|` below which an eigenvalue is flagged neutral.
pub const NEUTRAL_TOL: f64 = 1e-10;

impl Spectrum {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,re,im,neutral\n");
        for e in &self.eigenvalues {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e},{}\n", self.k, e.re, e.im, e.neutral));
        }
        s
    }

    pub fn max_growth(&self) -> f64 {
        self.eigenvalues.first().map_or(f64::NEG_INFINITY, |e| e.re)
    }

    /// Largest distance from any eigenvalue to the conjugate of its nearest
    /// partner; zero for spectra closed under conjugation.
    pub fn conjugation_defect(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|a| {
                self.eigenvalues
                    .iter()
                    .map(|b| ((a.re - b.re).powi(2) + (a.im + b.im).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }
}

fn eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), 1e-15, 200 * n.max(10))
        .ok_or_else(|| Error::Eigen(format!("Schur iteration failed for a {n}x{n} operator")))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

/// Full eigenvalue list of the operator.
pub fn spectrum(op: &LinearOperator) -> Result<Spectrum> {
    let ev = eigenvalues(&op.matrix).map_err(|e| Error::Eigen(format!("{e}; k = {}, dim = {}", op.k, op.dim())))?;
    let mut out: Vec<Eigenvalue> =
        ev.into_iter().map(|z| Eigenvalue { re: z.re, im: z.im, neutral: z.re.abs() < NEUTRAL_TOL }).collect();
    out.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(Spectrum { k: op.k, eigenvalues: out })
}

/// Orthogonal projector removing the zero-frequency directions of an
/// operator restricted to Gauss-consistent perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveProjector {
    pub matrix: DMatrix<Complex64>,
    /// Orthonormal basis of the removed directions.
    pub kernel: DMatrix<Complex64>,
    pub corank: usize,
    /// Set when a zero eigenvalue has larger algebraic than geometric
    /// multiplicity; the projector then removes only the null space.
    pub defective: bool,
}

impl EffectiveProjector {
    pub fn identity(n: usize) -> Self {
        EffectiveProjector {
            matrix: DMatrix::identity(n, n),
            kernel: DMatrix::zeros(n, 0),
            corank: 0,
            defective: false,
        }
    }

    /// Projector removing the span of the given columns.
    pub fn removing(directions: &DMatrix<Complex64>, tol: f64) -> Self {
        let n = directions.nrows();
        let kernel = crate::linalg::range_basis(directions, tol);
        let matrix = DMatrix::identity(n, n) - &kernel * kernel.adjoint();
        EffectiveProjector { corank: kernel.ncols(), matrix, kernel, defective: false }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Zero-frequency subspace of the operator on the Gauss-consistent
/// subspace and the projector onto its orthogonal complement.
///
/// Eigenvalues with `|λ| <= tol * ||L||` count as zero. For a real-frequency
/// (skew) discretization every eigenvalue has vanishing real part, so the
/// neutral flag of [`spectrum`] cannot be used here; only the genuine
/// zero modes are removed.
pub fn effective_projector(op: &LinearOperator, tol: f64) -> Result<EffectiveProjector> {
    let n = op.dim();
    let basis = match &op.gauss {
        Some(c) => null_space(&DMatrix::from_row_slice(1, n, c.as_slice()), 1e-13),
        None => DMatrix::identity(n, n),
    };
    let restricted = basis.adjoint() * &op.matrix * &basis;
    let scale = op.matrix.norm().max(f64::MIN_POSITIVE);
    let null = null_space_abs(&restricted, tol * scale);
    let geometric = null.ncols();
    let algebraic = eigenvalues(&restricted)?.iter().filter(|z| z.norm() <= tol.sqrt() * scale).count();
    let defective = algebraic > geometric;
    if defective {
        warn!(
            "defective zero-frequency cluster (algebraic {algebraic}, geometric {geometric}); projecting out the null space only"
        );
    }
    let kernel = &basis * null;
    let matrix = DMatrix::identity(n, n) - &kernel * kernel.adjoint();
    Ok(EffectiveProjector { corank: kernel.ncols(), matrix, kernel, defective })
}

/// RK4 integration of `dx/dt = L x`, returning samples every `cadence` steps.
pub fn evolve_linear(
    op: &LinearOperator,
    x0: &DVector<Complex64>,
    dt: f64,
    t_end: f64,
    cadence: usize,
) -> (Vec<f64>, Vec<DVector<Complex64>>) {
    let steps = (t_end / dt).round() as usize;
    let cadence = cadence.max(1);
    let mut x = x0.clone();
    let mut ts = vec![0.0];
    let mut xs = vec![x.clone()];
    let h = Complex64::new(dt, 0.0);
    for n in 0..steps {
        let k1 = op.apply(&x);
        let k2 = op.apply(&(&x + &k1 * (h * 0.5)));
        let k3 = op.apply(&(&x + &k2 * (h * 0.5)));
        let k4 = op.apply(&(&x + &k3 * h));
        let two = Complex64::new(2.0, 0.0);
        x += (k1 + k2 * two + k3 * two + k4) * (h / 6.0);
        if (n + 1) % cadence == 0 {
            ts.push((n + 1) as f64 * dt);
            xs.push(x.clone());
        }
    }
    (ts, xs)
}

/// Damping (or growth) rate of the field energy of the linear system
/// started from a density perturbation `δf = F0` with its Gauss field,
/// fitted to energy maxima in `[t_lo, t_hi]`.
pub fn linear_field_energy_rate(
    op: &LinearOperator,
    eq: &Equilibrium,
    ps: &PhaseSpace,
    dt: f64,
    t_lo: f64,
    t_hi: f64,
) -> Option<f64> {
    let nv = ps.nvel();
    let df: Vec<Complex64> = eq.f0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut x0 = DVector::zeros(nv + 1);
    for j in 0..nv {
        x0[j] = df[j];
    }
    x0[nv] = gauss_field(op.k, &df, ps);
    let (ts, xs) = evolve_linear(op, &x0, dt, t_hi, 1);
    // The even initial profile excites the mode and its mirror equally;
    // their beating makes the energy oscillate under the decay envelope.
    let energy: Vec<f64> = xs.iter().map(|x| x[nv].norm_sqr()).collect();
    fit_peak_rate(&ts, &energy, t_lo, t_hi)
}

/// Physical perturbation `Re(x̂ e^{ikx})` as a tangent on the phase grid.
pub fn mode_to_tangent(k: f64, xhat: &DVector<Complex64>, ps: &PhaseSpace) -> StateTangent {
    let nv = ps.nvel();
    let mut t = StateTangent::zeros(ps);
    for (i, &x) in ps.x().iter().enumerate() {
        let ph = Complex64::new(0.0, k * x).exp();
        for j in 0..nv {
            t.df[[i, j]] = (xhat[j] * ph).re;
        }
        t.de[0][i] = (xhat[nv] * ph).re;
    }
    t
}

/// `max |rhs(z0 + ε δz) - ε L δz| / ε^2` for the mode perturbation `x̂`.
pub fn linearization_defect(
    eq: &Equilibrium,
    op: &LinearOperator,
    xhat: &DVector<Complex64>,
    eps: f64,
    ps: &PhaseSpace,
) -> Result<f64> {
    let z0 = eq.to_state(ps)?;
    let dz = mode_to_tangent(op.k, xhat, ps);
    let lin = mode_to_tangent(op.k, &op.apply(xhat), ps);
    let r = rhs(&z0.axpy(eps, &dz), ps, None)?;
    let mut diff = r;
    diff.scaled_add(-eps, &lin);
    Ok(diff.max_abs() / (eps * eps))
}

/// Velocity derivative of `F0` with the shared stencil.
pub fn profile_derivative(f0: &Array1<f64>, ps: &PhaseSpace) -> Array1<f64> {
    Array1::from(ps.stencil().apply(f0.as_slice().expect("contiguous")))
}
