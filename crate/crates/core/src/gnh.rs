//! Constraint algorithm for linear presymplectic systems.
//!
//! A system on `R^n` is a constant skew form `Ω(X, Y) = Xᵀ Ω Y` and a
//! quadratic energy `H(z) = ½ zᵀ A z + bᵀ z`. Hamilton's equation
//! `i_X Ω = dH` reads `Ωᵀ X = A z + b`. Starting from the whole space, the
//! chain `C_{k+1} = {z ∈ C_k : A z + b ∈ Ωᵀ(T C_k)}` is built from SVD
//! projectors until two consecutive sets coincide.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_principal_sine, null_space, null_space_abs, pinv_abs, range_basis, range_basis_abs};

/// Default relative rank tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

mod rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let r: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        (m.nrows(), m.ncols(), r).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let (nr, nc, r): (usize, usize, Vec<Vec<f64>>) = Deserialize::deserialize(d)?;
        if r.len() != nr || r.iter().any(|x| x.len() != nc) {
            return Err(serde::de::Error::custom("matrix rows do not match the declared shape"));
        }
        Ok(DMatrix::from_fn(nr, nc, |i, j| r[i][j]))
    }
}

mod vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

/// Linear presymplectic system `(R^n, Ω, H)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresymplecticSystem {
    pub n: usize,
    #[serde(with = "rows")]
    pub omega: DMatrix<f64>,
    #[serde(with = "rows")]
    pub a: DMatrix<f64>,
    #[serde(with = "vector")]
    pub b: DVector<f64>,
    pub labels: Vec<String>,
}

impl PresymplecticSystem {
    /// Validated system; `Ω` must be exactly skew and `A` exactly symmetric.
    pub fn new(omega: DMatrix<f64>, a: DMatrix<f64>, b: DVector<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let n = b.len();
        let mut problems = Vec::new();
        if omega.shape() != (n, n) {
            problems.push(format!("omega is {:?}, expected {n}x{n}", omega.shape()));
        }
        if a.shape() != (n, n) {
            problems.push(format!("A is {:?}, expected {n}x{n}", a.shape()));
        }
        if problems.is_empty() {
            if omega.transpose() != -&omega {
                problems.push("omega is not skew".into());
            }
            if a.transpose() != a {
                problems.push("A is not symmetric".into());
            }
        }
        if omega.iter().chain(a.iter()).chain(b.iter()).any(|x| !x.is_finite()) {
            problems.push("non-finite entries".into());
        }
        let labels = labels.unwrap_or_else(|| (0..n).map(|i| format!("z{i}")).collect());
        if labels.len() != n {
            problems.push(format!("{} labels for {n} coordinates", labels.len()));
        }
        if !problems.is_empty() {
            return Err(Error::Input(problems.join("; ")));
        }
        Ok(PresymplecticSystem { n, omega, a, b, labels })
    }

    fn dh(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.a * z + &self.b
    }

    fn scale(&self) -> f64 {
        self.omega.norm().max(self.a.norm()).max(self.b.norm()).max(1.0)
    }

    /// Rank cutoffs for images of `Ω` and of `A`.
    fn cutoffs(&self, tol: f64) -> (f64, f64) {
        let so = self.omega.norm().max(f64::MIN_POSITIVE);
        let sa = self.a.norm().max(f64::MIN_POSITIVE);
        (tol * so, tol * sa)
    }
}

/// `{basepoint + directions · y}` with orthonormal `directions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineSubspace {
    #[serde(with = "vector")]
    pub basepoint: DVector<f64>,
    #[serde(with = "rows")]
    pub directions: DMatrix<f64>,
}

impl AffineSubspace {
    pub fn whole(n: usize) -> Self {
        AffineSubspace { basepoint: DVector::zeros(n), directions: DMatrix::identity(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.directions.ncols()
    }

    /// Distance of `z` from the subspace.
    pub fn distance(&self, z: &DVector<f64>) -> f64 {
        let d = z - &self.basepoint;
        (&d - &self.directions * (self.directions.transpose() * &d)).norm()
    }

    pub fn contains(&self, z: &DVector<f64>, tol: f64) -> bool {
        self.distance(z) <= tol * (1.0 + z.norm())
    }

    /// Orthonormal normals: the complement of the direction space.
    pub fn normals(&self) -> DMatrix<f64> {
        let n = self.basepoint.len();
        if self.dim() == 0 {
            return DMatrix::identity(n, n);
        }
        null_space(&self.directions.transpose(), 1e-12)
    }

    /// Same set within `tol`: equal dimension, principal angles below
    /// `sqrt(tol)` and mutual basepoint membership.
    pub fn same_as(&self, other: &AffineSubspace, tol: f64) -> bool {
        self.dim() == other.dim()
            && max_principal_sine(&self.directions, &other.directions) < tol.sqrt()
            && self.contains(&other.basepoint, tol.sqrt())
            && other.contains(&self.basepoint, tol.sqrt())
    }

    /// Point of the subspace for coordinates `y`.
    pub fn point(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.basepoint + &self.directions * y
    }
}

/// One step of the chain with the constraints it added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintStage {
    /// Index `k` of `C_k`; `None` for the ambient space.
    pub k: Option<usize>,
    pub subspace: AffineSubspace,
    /// Human-readable linear constraints `Σ c_i z_i = r` in the system's
    /// labels, one per new normal direction.
    pub constraints: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintChain {
    /// The ambient space followed by every `C_k` that differs from its
    /// predecessor.
    pub stages: Vec<ConstraintStage>,
    /// Dimensions of `stages`.
    pub dims: Vec<usize>,
    /// `k` with `C_{k+1} = C_k`.
    pub stabilized_at: usize,
    /// Index `k` at which the constraint set became empty.
    pub empty_at: Option<usize>,
}

impl ConstraintChain {
    pub fn final_subspace(&self) -> &AffineSubspace {
        &self.stages.last().expect("chain holds the ambient space").subspace
    }
}

/// Row-reduced form of the constraint rows `normalᵀ`, for display.
fn reduced_rows(normal: &DMatrix<f64>) -> DMatrix<f64> {
    let mut r = normal.transpose();
    let (m, n) = r.shape();
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let (piv, val) =
            (row..m).map(|i| (i, r[(i, col)].abs())).fold((row, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        if val < 1e-9 {
            continue;
        }
        r.swap_rows(row, piv);
        let p = r[(row, col)];
        for j in 0..n {
            r[(row, j)] /= p;
        }
        for i in 0..m {
            if i != row {
                let f = r[(i, col)];
                if f != 0.0 {
                    for j in 0..n {
                        r[(i, j)] -= f * r[(row, j)];
                    }
                }
            }
        }
        row += 1;
    }
    r
}

fn describe(normal: &DMatrix<f64>, basepoint: &DVector<f64>, labels: &[String]) -> Vec<String> {
    reduced_rows(normal)
        .row_iter()
        .map(|c| {
            let terms: Vec<String> =
                c.iter().zip(labels).filter(|(x, _)| x.abs() > 1e-9).map(|(x, l)| format!("{x:+.4} {l}")).collect();
            let r = (c * basepoint)[0];
            format!("{} = {:.4}", terms.join(" "), if r.abs() < 1e-12 { 0.0 } else { r })
        })
        .collect()
}

/// Sub-solution set `{z ∈ sub : Az + b ∈ range(Ωᵀ T)}` for tangent space `T`.
fn restrict(
    sys: &PresymplecticSystem,
    sub: &AffineSubspace,
    tangent: &DMatrix<f64>,
    tol: f64,
) -> Option<AffineSubspace> {
    let n = sys.n;
    let (cut_o, cut_a) = sys.cutoffs(tol);
    let image = sys.omega.transpose() * tangent;
    let range = range_basis_abs(&image, cut_o);
    let perp = if range.ncols() == 0 { DMatrix::identity(n, n) } else { null_space(&range.transpose(), 1e-12) };
    if perp.ncols() == 0 {
        return Some(sub.clone());
    }
    let k = perp.transpose() * &sys.a * &sub.directions;
    let r = -(perp.transpose() * sys.dh(&sub.basepoint));
    let y = pinv_abs(&k, cut_a) * &r;
    let miss = (&k * &y - &r).norm();
    if miss > tol.sqrt() * sys.scale() * (1.0 + sub.basepoint.norm()) {
        return None;
    }
    let free = null_space_abs(&k, cut_a);
    let base = sub.point(&y);
    let dirs = &sub.directions * free;
    // Keep the basepoint orthogonal to the directions for stable reporting.
    let base = &base - &dirs * (dirs.transpose() * &base);
    Some(AffineSubspace { basepoint: base, directions: dirs })
}

/// Primary constraint set `C_0 = {z : Az + b ∈ range(Ω)}`.
pub fn primary_constraint(sys: &PresymplecticSystem, tol: f64) -> Option<AffineSubspace> {
    let whole = AffineSubspace::whole(sys.n);
    restrict(sys, &whole, &whole.directions, tol)
}

/// Full constraint chain.
pub fn gnh_iterate(sys: &PresymplecticSystem, tol: f64) -> Result<ConstraintChain> {
    let whole = AffineSubspace::whole(sys.n);
    let mut stages = vec![ConstraintStage { k: None, subspace: whole.clone(), constraints: vec![] }];
    let mut current = whole;
    for k in 0..=sys.n + 1 {
        let next = match restrict(sys, &current, &current.directions, tol) {
            Some(s) => s,
            None => {
                let dims = stages.iter().map(|s| s.subspace.dim()).collect();
                return Ok(ConstraintChain { stages, dims, stabilized_at: k, empty_at: Some(k) });
            }
        };
        if next.same_as(&current, tol) {
            let dims = stages.iter().map(|s| s.subspace.dim()).collect();
            let stabilized_at = k.saturating_sub(1);
            return Ok(ConstraintChain { stages, dims, stabilized_at, empty_at: None });
        }
        let new_normals = {
            let n_old = current.normals();
            let n_new = next.normals();
            // Normals of `next` not already normal to `current`.
            let resid = if n_old.ncols() == 0 { n_new.clone() } else { &n_new - &n_old * (n_old.transpose() * &n_new) };
            range_basis(&resid, 1e-8)
        };
        stages.push(ConstraintStage {
            k: Some(k),
            constraints: describe(&new_normals, &next.basepoint, &sys.labels),
            subspace: next.clone(),
        });
        current = next;
    }
    Err(Error::NoStabilization(sys.n + 1))
}

/// General solution `X(z) = x0 + M (z - basepoint) + kernel · ξ` on the
/// final constraint set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldSolution {
    #[serde(with = "vector")]
    pub x0: DVector<f64>,
    #[serde(with = "rows")]
    pub m: DMatrix<f64>,
    /// Orthonormal basis of `ker Ωᵀ ∩ T C_∞`.
    #[serde(with = "rows")]
    pub kernel: DMatrix<f64>,
}

impl VectorFieldSolution {
    pub fn eval(&self, z: &DVector<f64>, basepoint: &DVector<f64>) -> DVector<f64> {
        &self.x0 + &self.m * (z - basepoint)
    }
}

/// Tangent solution of `Ωᵀ X = Az + b` on the final constraint set.
pub fn solve_vector_field(sys: &PresymplecticSystem, chain: &ConstraintChain, tol: f64) -> Result<VectorFieldSolution> {
    if chain.empty_at.is_some() {
        return Err(Error::Input("constraint chain ended in the empty set".into()));
    }
    let fin = chain.final_subspace();
    let nmat = &fin.directions;
    let g = sys.omega.transpose() * nmat;
    let (cut_o, _) = sys.cutoffs(tol);
    let gp = pinv_abs(&g, cut_o);
    let lift = nmat * &gp;
    let x0 = &lift * sys.dh(&fin.basepoint);
    let m = &lift * &sys.a;
    // Residual at the basepoint and along every direction.
    let scale = sys.scale();
    let mut worst = (sys.omega.transpose() * &x0 - sys.dh(&fin.basepoint)).norm();
    for c in nmat.column_iter() {
        let dx = &m * c;
        worst = worst.max((sys.omega.transpose() * dx - &sys.a * c).norm());
    }
    if worst > tol.sqrt() * scale * (1.0 + fin.basepoint.norm()) {
        return Err(Error::Contradiction { residual: worst });
    }
    let kernel = nmat * null_space_abs(&g, cut_o);
    Ok(VectorFieldSolution { x0, m, kernel })
}

/// Free particle in unified coordinates `(q, v, p)`:
/// `Ω = dq ∧ dp`, `H = p v - v²/2`.
pub fn free_particle_sr() -> PresymplecticSystem {
    let mut omega = DMatrix::zeros(3, 3);
    omega[(0, 2)] = 1.0;
    omega[(2, 0)] = -1.0;
    let mut a = DMatrix::zeros(3, 3);
    a[(1, 2)] = 1.0;
    a[(2, 1)] = 1.0;
    a[(1, 1)] = -1.0;
    PresymplecticSystem::new(omega, a, DVector::zeros(3), Some(vec!["q".into(), "v".into(), "p".into()]))
        .expect("valid by construction")
}

/// Longitudinal electromagnetic field with two Fourier modes in unified
/// coordinates. Per mode `m` with wavenumber `k_m` and static charge
/// amplitude `ρ_m` the coordinates are `(Φ, A, Φ̇, Ȧ, P_Φ, P_A)`, the
/// Lagrangian is `½ E² - ρ Φ` with `E = -k Φ - Ȧ`, and
/// `H = P_Φ Φ̇ + P_A Ȧ - ½ (k Φ + Ȧ)² + ρ Φ`.
///
/// The chain has `P_Φ = 0` and `P_A = -E` at `C_0` and the Gauss relation
/// `k (k Φ + Ȧ) = ρ` at `C_1`.
pub fn electromagnetic_two_mode_sr(modes: [(f64, f64); 2]) -> PresymplecticSystem {
    let n = 12;
    let mut omega = DMatrix::zeros(n, n);
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    let mut labels = Vec::new();
    for (m, &(k, rho)) in modes.iter().enumerate() {
        let o = 6 * m;
        let (phi, aa, vphi, va, pphi, pa) = (o, o + 1, o + 2, o + 3, o + 4, o + 5);
        for (q, p) in [(phi, pphi), (aa, pa)] {
            omega[(q, p)] = 1.0;
            omega[(p, q)] = -1.0;
        }
        // P·v
        for (p, v) in [(pphi, vphi), (pa, va)] {
            a[(p, v)] += 1.0;
            a[(v, p)] += 1.0;
        }
        // -½ (kΦ + Ȧ)²
        a[(phi, phi)] -= k * k;
        a[(phi, va)] -= k;
        a[(va, phi)] -= k;
        a[(va, va)] -= 1.0;
        b[phi] = rho;
        for name in ["phi", "A", "phi_dot", "A_dot", "P_phi", "P_A"] {
            labels.push(format!("{name}_{}", m + 1));
        }
    }
    PresymplecticSystem::new(omega, a, b, Some(labels)).expect("valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canonical(m: usize) -> DMatrix<f64> {
        let mut o = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            o[(i, m + i)] = 1.0;
            o[(m + i, i)] = -1.0;
        }
        o
    }

    #[test]
    fn symplectic_systems_need_no_constraints() {
        let sys = PresymplecticSystem::new(canonical(2), DMatrix::identity(4, 4), DVector::zeros(4), None).unwrap();
        let c = gnh_iterate(&sys, DEFAULT_TOL).unwrap();
        assert_eq!((c.dims.clone(), c.stabilized_at), (vec![4], 0));
        let x = solve_vector_field(&sys, &c, DEFAULT_TOL).unwrap();
        assert_eq!(x.kernel.ncols(), 0);
        // q̇ = ∂H/∂p, ṗ = -∂H/∂q.
        let z = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let xz = x.eval(&z, &c.final_subspace().basepoint);
        assert!((xz - DVector::from_vec(vec![3.0, 4.0, -1.0, -2.0])).norm() < 1e-12);
    }

    #[test]
    fn statics_reduce_to_critical_points() {
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let sys = PresymplecticSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), b.clone(), None).unwrap();
        let c0 = primary_constraint(&sys, DEFAULT_TOL).unwrap();
        assert_eq!(c0.dim(), 0);
        assert!((c0.basepoint + b).norm() < 1e-12);
        let chain = gnh_iterate(&sys, DEFAULT_TOL).unwrap();
        let x = solve_vector_field(&sys, &chain, DEFAULT_TOL).unwrap();
        assert!(x.x0.norm() < 1e-12 && x.kernel.ncols() == 0);
    }

    #[test]
    fn free_particle_chain() {
        let sys = free_particle_sr();
        let c = gnh_iterate(&sys, DEFAULT_TOL).unwrap();
        assert_eq!(c.dims, vec![3, 2]);
        assert_eq!(c.stabilized_at, 0);
        let n = c.final_subspace().normals();
        // The normal is ±(0, 1, -1)/√2: p = v.
        assert!((n[(1, 0)] + n[(2, 0)]).abs() < 1e-12 && n[(0, 0)].abs() < 1e-12);
        let x = solve_vector_field(&sys, &c, DEFAULT_TOL).unwrap();
        let z = DVector::from_vec(vec![0.3, 1.7, 1.7]);
        let xz = x.eval(&z, &c.final_subspace().basepoint);
        assert!((xz - DVector::from_vec(vec![1.7, 0.0, 0.0])).norm() < 1e-12);
        assert_eq!(x.kernel.ncols(), 0);
    }

    #[test]
    fn inconsistent_system_has_empty_primary_set() {
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 0)] = 0.0;
        let sys = PresymplecticSystem::new(DMatrix::zeros(2, 2), a, DVector::from_vec(vec![1.0, 0.0]), None).unwrap();
        assert!(primary_constraint(&sys, DEFAULT_TOL).is_none());
        assert_eq!(gnh_iterate(&sys, DEFAULT_TOL).unwrap().empty_at, Some(0));
    }

    #[test]
    fn invalid_systems_list_all_problems() {
        let mut o = DMatrix::zeros(2, 2);
        o[(0, 1)] = 1.0;
        let mut a = DMatrix::zeros(2, 2);
        a[(0, 1)] = 1.0;
        let e = PresymplecticSystem::new(o, a, DVector::zeros(2), Some(vec!["x".into()])).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("skew") && msg.contains("symmetric") && msg.contains("labels"), "{msg}");
    }

    #[test]
    fn json_round_trip() {
        let sys = free_particle_sr();
        let back: PresymplecticSystem = serde_json::from_str(&serde_json::to_string(&sys).unwrap()).unwrap();
        assert_eq!(back, sys);
    }

    #[test]
    fn electromagnetic_chain_has_momentum_then_gauss_stage() {
        let sys = electromagnetic_two_mode_sr([(1.0, 0.3), (2.0, -0.2)]);
        let c = gnh_iterate(&sys, DEFAULT_TOL).unwrap();
        assert_eq!(c.dims, vec![12, 8, 6]);
        assert_eq!(c.stabilized_at, 1);
        let c0 = &c.stages[1];
        assert!(c0.constraints.iter().any(|s| s == "+1.0000 P_phi_1 = 0.0000"), "{:?}", c0.constraints);
        // Gauss: k (k Φ + Ȧ) = ρ holds on C_1 and is normal to it.
        let fin = c.final_subspace();
        for (m, (k, rho)) in [(1.0, 0.3), (2.0, -0.2)].into_iter().enumerate() {
            let mut g = DVector::zeros(12);
            g[6 * m] = k * k;
            g[6 * m + 3] = k;
            assert!((g.dot(&fin.basepoint) - rho).abs() < 1e-12);
            assert!((fin.directions.transpose() * &g).norm() < 1e-12);
        }
        let x = solve_vector_field(&sys, &c, DEFAULT_TOL).unwrap();
        // Gauge freedom: one free scalar-potential velocity per mode.
        assert_eq!(x.kernel.ncols(), 2);
        for col in x.kernel.column_iter() {
            assert!((col[2].powi(2) + col[8].powi(2) - 1.0).abs() < 1e-10);
        }
    }
}
