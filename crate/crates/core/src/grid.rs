//! Phase-space grids and the shared derivative machinery.
//!
//! Space is periodic on `[0, L)` with `Nx` uniform points and is
//! differentiated pseudospectrally. Each velocity dimension carries `Nv`
//! uniform nodes on `[-v_max, v_max]`, trapezoid weights, and a five-point
//! fourth-order stencil that becomes one-sided at the two boundaries.
//! Every module that differentiates or integrates goes through [`PhaseSpace`]
//! so the discrete adjoint relations are the same everywhere.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Reduced geometry of the phase space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    /// One space and one velocity dimension, electric field `E1` only.
    Es1d1v,
    /// One space and two velocity dimensions with `E1`, `E2` and `B3`.
    Em1d2v,
}

impl Geometry {
    pub fn velocity_dims(self) -> usize {
        match self {
            Geometry::Es1d1v => 1,
            Geometry::Em1d2v => 2,
        }
    }

    pub fn e_components(self) -> usize {
        self.velocity_dims()
    }

    pub fn has_b(self) -> bool {
        matches!(self, Geometry::Em1d2v)
    }
}

/// Grid parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub geometry: Geometry,
    /// Spatial period.
    pub length: f64,
    pub nx: usize,
    pub v_max: f64,
    /// Velocity nodes per velocity dimension.
    pub nv: usize,
    /// Particle charge.
    pub q: f64,
    pub background_neutralizing: bool,
}

impl PhaseGrid {
    pub fn es(length: f64, nx: usize, v_max: f64, nv: usize) -> Self {
        PhaseGrid { geometry: Geometry::Es1d1v, length, nx, v_max, nv, q: 1.0, background_neutralizing: true }
    }

    pub fn em(length: f64, nx: usize, v_max: f64, nv: usize) -> Self {
        PhaseGrid { geometry: Geometry::Em1d2v, ..Self::es(length, nx, v_max, nv) }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.nx < 4 || !self.nx.is_multiple_of(2) {
            problems.push(format!("nx must be even and >= 4 (got {})", self.nx));
        }
        if self.nv < 4 {
            problems.push(format!("nv must be >= 4 (got {})", self.nv));
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            problems.push(format!("v_max must be positive (got {})", self.v_max));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            problems.push(format!("length must be positive (got {})", self.length));
        }
        if !self.q.is_finite() {
            problems.push("q must be finite".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidGrid(problems.join("; ")))
        }
    }

    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.v_max / (self.nv - 1) as f64
    }

    /// Number of velocity points per spatial point (`Nv` or `Nv^2`).
    pub fn nvel(&self) -> usize {
        self.nv.pow(self.geometry.velocity_dims() as u32)
    }

    /// Fundamental wavenumber `2*pi/L`.
    pub fn k1(&self) -> f64 {
        2.0 * PI / self.length
    }
}

/// Pseudospectral first derivative on a periodic grid. The Nyquist mode is
/// dropped so the operator is exactly skew in exact arithmetic.
#[derive(Clone)]
pub struct SpectralDerivative {
    n: usize,
    ik: Vec<Complex64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpectralDerivative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralDerivative").field("n", &self.n).finish()
    }
}

impl SpectralDerivative {
    pub fn new(n: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let ik = (0..n).map(|m| Complex64::new(0.0, wavenumber(m, n, length))).collect();
        SpectralDerivative { n, ik, fwd, inv }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Complex Fourier coefficients normalized so that `u_i = sum_m c_m e^{i k_m x_i}`.
    pub fn coefficients(&self, u: ArrayView1<f64>) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    }

    /// Inverse of [`Self::coefficients`], keeping the real part.
    pub fn synthesize(&self, coeffs: &[Complex64]) -> Array1<f64> {
        let mut buf = coeffs.to_vec();
        self.inv.process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    fn apply_with(&self, u: ArrayView1<f64>, mult: impl Fn(usize) -> Complex64) -> Array1<f64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        let s = 1.0 / self.n as f64;
        for (m, c) in buf.iter_mut().enumerate() {
            *c *= mult(m) * s;
        }
        self.inv.process(&mut buf);
        buf.iter().map(|c| c.re).collect()
    }

    pub fn apply(&self, u: ArrayView1<f64>) -> Array1<f64> {
        self.apply_with(u, |m| self.ik[m])
    }

    /// Zero-mean antiderivative: the inverse of the derivative on the
    /// complement of the constant and Nyquist modes.
    pub fn antiderivative(&self, u: ArrayView1<f64>) -> Array1<f64> {
        self.apply_with(u, |m| {
            let ik = self.ik[m];
            if ik.im == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                1.0 / ik
            }
        })
    }
}

/// Signed wavenumber of FFT bin `m`; the Nyquist bin is mapped to zero.
pub fn wavenumber(m: usize, n: usize, length: f64) -> f64 {
    let k1 = 2.0 * PI / length;
    if 2 * m == n {
        0.0
    } else if 2 * m < n {
        k1 * m as f64
    } else {
        -k1 * (n - m) as f64
    }
}

/// Finite-difference weights (Fornberg) for the first derivative at `z`.
fn fornberg_first(z: f64, nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let m = 1usize;
    let mut c = vec![[0.0f64; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.iter().map(|w| w[1]).collect()
}

/// First-derivative stencil along one velocity dimension: fourth-order
/// central in the interior, one-sided near the boundary.
#[derive(Debug, Clone)]
pub struct VelocityStencil {
    n: usize,
    rows: Vec<(usize, Vec<f64>)>,
}

impl VelocityStencil {
    pub fn new(n: usize, dv: f64) -> Self {
        let width = n.min(5);
        let half = width / 2;
        let rows = (0..n)
            .map(|j| {
                let start = j.saturating_sub(half).min(n - width);
                let weights = if width == 5 && start + 2 == j {
                    vec![1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0]
                } else {
                    let nodes: Vec<f64> = (start..start + width).map(|k| k as f64 - j as f64).collect();
                    fornberg_first(0.0, &nodes)
                };
                (start, weights.into_iter().map(|w| w / dv).collect())
            })
            .collect();
        VelocityStencil { n, rows }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `out[j] = sum_k D[j,k] u[offset + k*stride]`.
    fn apply_strided(&self, u: &[f64], offset: usize, stride: usize, out: &mut [f64]) {
        for (j, (start, w)) in self.rows.iter().enumerate() {
            let mut acc = 0.0;
            for (m, wk) in w.iter().enumerate() {
                acc += wk * u[offset + (start + m) * stride];
            }
            out[offset + j * stride] = acc;
        }
    }

    /// `out[k] = sum_j D[j,k] u[offset + j*stride]`.
    fn apply_transpose_strided(&self, u: &[f64], offset: usize, stride: usize, out: &mut [f64]) {
        for k in 0..self.n {
            out[offset + k * stride] = 0.0;
        }
        for (j, (start, w)) in self.rows.iter().enumerate() {
            let uj = u[offset + j * stride];
            for (m, wk) in w.iter().enumerate() {
                out[offset + (start + m) * stride] += wk * uj;
            }
        }
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_strided(u, 0, 1, &mut out);
        out
    }

    pub fn apply_transpose(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_transpose_strided(u, 0, 1, &mut out);
        out
    }

    /// Dense matrix form, rows indexed by output node.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (j, (start, w)) in self.rows.iter().enumerate() {
            for (m, wk) in w.iter().enumerate() {
                d[j][start + m] = *wk;
            }
        }
        d
    }
}

/// Grid plus the derivative and quadrature operators built on it.
#[derive(Debug, Clone)]
pub struct PhaseSpace {
    grid: PhaseGrid,
    x: Array1<f64>,
    v: Array1<f64>,
    v_weights_1d: Array1<f64>,
    vel_weights: Array1<f64>,
    vel_coords: Vec<[f64; 2]>,
    dx_op: SpectralDerivative,
    dv_op: VelocityStencil,
}

impl PhaseSpace {
    pub fn new(grid: PhaseGrid) -> Result<Self> {
        grid.validate()?;
        let dx = grid.dx();
        let dv = grid.dv();
        let x = Array1::from_shape_fn(grid.nx, |i| i as f64 * dx);
        let v = Array1::from_shape_fn(grid.nv, |j| -grid.v_max + j as f64 * dv);
        let v_weights_1d = Array1::from_shape_fn(grid.nv, |j| if j == 0 || j == grid.nv - 1 { 0.5 * dv } else { dv });
        let (vel_weights, vel_coords) = match grid.geometry {
            Geometry::Es1d1v => (v_weights_1d.clone(), v.iter().map(|&vj| [vj, 0.0]).collect()),
            Geometry::Em1d2v => {
                let n = grid.nv;
                let w = Array1::from_shape_fn(n * n, |j| v_weights_1d[j / n] * v_weights_1d[j % n]);
                let c = (0..n * n).map(|j| [v[j / n], v[j % n]]).collect();
                (w, c)
            }
        };
        Ok(PhaseSpace {
            grid,
            x,
            v,
            v_weights_1d,
            vel_weights,
            vel_coords,
            dx_op: SpectralDerivative::new(grid.nx, grid.length),
            dv_op: VelocityStencil::new(grid.nv, dv),
        })
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn geometry(&self) -> Geometry {
        self.grid.geometry
    }

    pub fn nx(&self) -> usize {
        self.grid.nx
    }

    pub fn nvel(&self) -> usize {
        self.vel_weights.len()
    }

    pub fn dx(&self) -> f64 {
        self.grid.dx()
    }

    pub fn q(&self) -> f64 {
        self.grid.q
    }

    pub fn x(&self) -> &Array1<f64> {
        &self.x
    }

    /// One-dimensional velocity nodes.
    pub fn v(&self) -> &Array1<f64> {
        &self.v
    }

    /// One-dimensional trapezoid weights (including `dv`).
    pub fn v_weights_1d(&self) -> &Array1<f64> {
        &self.v_weights_1d
    }

    /// Quadrature weight of each flattened velocity point.
    pub fn vel_weights(&self) -> &Array1<f64> {
        &self.vel_weights
    }

    /// Velocity components `(v1, v2)` of each flattened velocity point.
    pub fn vel_coords(&self) -> &[[f64; 2]] {
        &self.vel_coords
    }

    pub fn spectral(&self) -> &SpectralDerivative {
        &self.dx_op
    }

    pub fn stencil(&self) -> &VelocityStencil {
        &self.dv_op
    }

    pub fn phase_shape(&self) -> (usize, usize) {
        (self.grid.nx, self.nvel())
    }

    pub fn check_phase(&self, what: &'static str, a: &Array2<f64>) -> Result<()> {
        if a.dim() != self.phase_shape() {
            return Err(shape_err(what, format!("{:?}", self.phase_shape()), format!("{:?}", a.dim())));
        }
        Ok(())
    }

    pub fn check_spatial(&self, what: &'static str, a: &Array1<f64>) -> Result<()> {
        if a.len() != self.grid.nx {
            return Err(shape_err(what, self.grid.nx, a.len()));
        }
        Ok(())
    }

    /// Evaluate `g(x, v1, v2)` on the phase grid.
    pub fn phase_fn(&self, g: impl Fn(f64, f64, f64) -> f64) -> Array2<f64> {
        Array2::from_shape_fn(self.phase_shape(), |(i, j)| {
            let [v1, v2] = self.vel_coords[j];
            g(self.x[i], v1, v2)
        })
    }

    pub fn spatial_fn(&self, g: impl Fn(f64) -> f64) -> Array1<f64> {
        self.x.mapv(g)
    }

    /// Spectral derivative of a spatial field.
    pub fn dx_field(&self, u: &Array1<f64>) -> Array1<f64> {
        self.dx_op.apply(u.view())
    }

    /// Spectral x-derivative of a phase-space function, column by column.
    pub fn dx_phase(&self, f: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(f.dim());
        for (col_in, mut col_out) in f.axis_iter(Axis(1)).zip(out.axis_iter_mut(Axis(1))) {
            col_out.assign(&self.dx_op.apply(col_in));
        }
        out
    }

    fn velocity_layout(&self, dim: usize) -> (usize, usize) {
        // (number of independent lines per x-row, stride along the line)
        match (self.grid.geometry, dim) {
            (Geometry::Es1d1v, 0) => (1, 1),
            (Geometry::Em1d2v, 0) => (self.grid.nv, self.grid.nv),
            (Geometry::Em1d2v, 1) => (self.grid.nv, 1),
            _ => panic!("velocity dimension {dim} out of range"),
        }
    }

    fn dv_generic(&self, f: &Array2<f64>, dim: usize, transpose: bool) -> Array2<f64> {
        let nv = self.grid.nv;
        let (lines, stride) = self.velocity_layout(dim);
        let mut out = Array2::zeros(f.dim());
        for (row_in, mut row_out) in f.outer_iter().zip(out.outer_iter_mut()) {
            let src = row_in.as_slice().expect("standard layout");
            let dst = row_out.as_slice_mut().expect("standard layout");
            for line in 0..lines {
                let offset = if stride == 1 { line * nv } else { line };
                if transpose {
                    self.dv_op.apply_transpose_strided(src, offset, stride, dst);
                } else {
                    self.dv_op.apply_strided(src, offset, stride, dst);
                }
            }
        }
        out
    }

    /// Stencil derivative along velocity dimension `dim` (0 for `v1`, 1 for `v2`).
    pub fn dv_phase(&self, f: &Array2<f64>, dim: usize) -> Array2<f64> {
        self.dv_generic(f, dim, false)
    }

    /// Transpose of [`Self::dv_phase`] as a matrix acting on velocity indices.
    pub fn dv_transpose_phase(&self, f: &Array2<f64>, dim: usize) -> Array2<f64> {
        self.dv_generic(f, dim, true)
    }

    /// `sum_v w(v) g(v) f(x, v)` for each `x`.
    pub fn velocity_moment(&self, f: &Array2<f64>, g: impl Fn(f64, f64) -> f64) -> Array1<f64> {
        let wg: Vec<f64> = self.vel_weights.iter().zip(&self.vel_coords).map(|(w, c)| w * g(c[0], c[1])).collect();
        f.outer_iter().map(|row| row.iter().zip(&wg).map(|(a, b)| a * b).sum()).collect()
    }

    /// Grid pairing `sum dx w(v) a b` of two phase-space functions.
    pub fn phase_inner(&self, a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let dx = self.dx();
        a.outer_iter()
            .zip(b.outer_iter())
            .map(|(ra, rb)| {
                ra.iter().zip(rb.iter()).zip(self.vel_weights.iter()).map(|((x, y), w)| x * y * w).sum::<f64>()
            })
            .sum::<f64>()
            * dx
    }

    /// Grid pairing `sum dx a b` of two spatial fields.
    pub fn spatial_inner(&self, a: &Array1<f64>, b: &Array1<f64>) -> f64 {
        a.dot(b) * self.dx()
    }

    /// Zero-mean antiderivative (periodic Poisson solve for `dE/dx = rho`).
    pub fn poisson_field(&self, rho: &Array1<f64>) -> Array1<f64> {
        self.dx_op.antiderivative(rho.view())
    }
}

/// Remove the spatial mean.
pub fn remove_mean(u: &Array1<f64>) -> Array1<f64> {
    let m = u.mean().unwrap_or(0.0);
    u.mapv(|x| x - m)
}
