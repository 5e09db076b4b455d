//! Sets of the form `{z : G z ≤ g, M z = h, L_j z + c_j ∈ Q_j}` with second-order
//! cones `Q_j`. Linear optimization and projection over them are handled exactly when
//! no Lorentz block is present and by supporting-hyperplane cuts otherwise.

use crate::error::{check_dim, Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::numeric::{max_abs, push_row, row_vec, vconcat, vstack, ExtReal, Matrix, Vector};
use crate::qp::{project_polyhedron, PolyhedronRows};

/// Euclidean projection onto the second-order cone `{(y', y_m) : ‖y'‖ ≤ y_m}`.
pub fn project_soc(y: &Vector) -> Vector {
    let m = y.len();
    let ym = y[m - 1];
    let yp = y.rows(0, m - 1);
    let r = yp.norm();
    if r <= ym {
        return y.clone();
    }
    if r <= -ym {
        return Vector::zeros(m);
    }
    let s = 0.5 * (r + ym);
    let mut out = Vector::zeros(m);
    for i in 0..m - 1 {
        out[i] = s * yp[i] / r;
    }
    out[m - 1] = s;
    out
}

/// Distance from `y` to the second-order cone.
pub fn soc_violation(y: &Vector) -> f64 {
    (y - project_soc(y)).norm()
}

/// Projection of `p` onto `{y : M y + c ∈ Q}` for square invertible `M`.
///
/// Stationary points on the boundary satisfy `y(γ) = V(I + γΩ)⁻¹Vᵀr − M⁻¹c` with
/// `MᵀRM = VΩVᵀ`, `R = diag(1, …, 1, −1)`, `r = p + M⁻¹c`, and `γ ≥ 0` a root of
/// `h(γ) = Σ ωᵢζᵢ²/(1 + γωᵢ)²`, `ζ = Vᵀr`. Every candidate returned satisfies the
/// optimality conditions, so `None` only signals that no root was located.
fn project_affine_soc(b: &LorentzBlock, p: &Vector) -> Option<Vector> {
    let m = b.map.nrows();
    if !b.map.is_square() || m < 2 {
        return None;
    }
    let svd = b.map.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if !(svd.singular_values.min() > 1e-10 * smax) {
        return None;
    }
    let minv = b.map.clone().try_inverse()?;
    let scale = 1.0 + p.norm() + b.offset.norm();
    let shift = &minv * &b.offset;
    let r = p + &shift;
    let u_at = |y: &Vector| &b.map * y + &b.offset;
    if soc_violation(&u_at(p)) <= 1e-14 * scale {
        return Some(p.clone());
    }
    let mut rm = Matrix::identity(m, m);
    rm[(m - 1, m - 1)] = -1.0;
    let w = b.map.transpose() * &rm * &b.map;
    let eig = (0.5 * (&w + w.transpose())).symmetric_eigen();
    let (v, omega) = (eig.eigenvectors, eig.eigenvalues);
    let zeta = v.transpose() * &r;
    let y_of = |g: f64| -> Vector {
        let d = Vector::from_fn(m, |i, _| zeta[i] / (1.0 + g * omega[i]));
        &v * d - &shift
    };
    let h = |g: f64| -> f64 { (0..m).map(|i| omega[i] * zeta[i] * zeta[i] / (1.0 + g * omega[i]).powi(2)).sum() };
    let neg = omega.min();
    if !(neg < 0.0) {
        return None;
    }
    let pole = -1.0 / neg;
    let bisect = |mut lo: f64, mut hi: f64| -> f64 {
        let s_lo = h(lo).signum();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if h(mid).signum() == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut roots = Vec::new();
    if h(0.0) > 0.0 {
        let mut hi = pole * (1.0 - 1e-15);
        while h(hi) > 0.0 && hi > 0.0 {
            hi = 0.5 * (hi + pole);
            if hi >= pole {
                break;
            }
        }
        if h(hi) <= 0.0 {
            roots.push(bisect(0.0, hi));
        }
    }
    let grid: Vec<f64> = (0..=480).map(|k| pole + (1.0 + pole) * 10f64.powf(-16.0 + 0.05 * k as f64)).collect();
    for pair in grid.windows(2) {
        if h(pair[0]).signum() != h(pair[1]).signum() {
            roots.push(bisect(pair[0], pair[1]));
        }
    }
    let mut best: Option<(f64, Vector)> = None;
    let mut consider = |y: Vector| {
        let d = (&y - p).norm();
        if best.as_ref().is_none_or(|b| d < b.0) {
            best = Some((d, y));
        }
    };
    for g in roots {
        let y = y_of(g);
        let u = u_at(&y);
        let um = u[m - 1];
        let up = u.rows(0, m - 1).norm();
        if um > 0.0 && (up - um).abs() <= 1e-9 * (1.0 + um) {
            consider(y);
        }
    }
    // Apex: −M⁻ᵀr ∈ Q.
    let dual = -(minv.transpose() * &r);
    if soc_violation(&dual) <= 1e-10 * (1.0 + dual.norm()) {
        consider(-shift.clone());
    }
    best.map(|b| b.1)
}

/// Affine preimage constraint `map · z + offset ∈ Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct LorentzBlock {
    pub map: Matrix,
    pub offset: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConicOutcome {
    Optimal { x: Vector, value: f64 },
    Unbounded,
    Infeasible,
}

impl ConicOutcome {
    /// Optimal value in extended reals for a minimization.
    pub fn min_value(&self) -> ExtReal {
        match self {
            ConicOutcome::Optimal { value, .. } => ExtReal::Finite(*value),
            ConicOutcome::Unbounded => ExtReal::NegInf,
            ConicOutcome::Infeasible => ExtReal::PosInf,
        }
    }
}

/// Box used to detect unboundedness of cut-based conic programs.
const CONIC_BOX: f64 = 1e7;

/// `{z ∈ ℝⁿ : ineq·z ≤ ineq_rhs, eq·z = eq_rhs, L_j z + c_j ∈ Q}`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineConicSet {
    pub dim: usize,
    pub ineq: Matrix,
    pub ineq_rhs: Vector,
    pub eq: Matrix,
    pub eq_rhs: Vector,
    pub lorentz: Vec<LorentzBlock>,
    /// Set when the description is known to be empty.
    pub empty: bool,
}

impl AffineConicSet {
    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            ineq: Matrix::zeros(0, dim),
            ineq_rhs: Vector::zeros(0),
            eq: Matrix::zeros(0, dim),
            eq_rhs: Vector::zeros(0),
            lorentz: Vec::new(),
            empty: false,
        }
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            empty: true,
            ..Self::full(dim)
        }
    }

    pub fn polyhedron(ineq: Matrix, ineq_rhs: Vector, eq: Matrix, eq_rhs: Vector) -> Self {
        let dim = ineq.ncols().max(eq.ncols());
        let mut s = Self::full(dim);
        if ineq.nrows() > 0 {
            s.ineq = ineq;
            s.ineq_rhs = ineq_rhs;
        }
        if eq.nrows() > 0 {
            s.eq = eq;
            s.eq_rhs = eq_rhs;
        }
        s
    }

    /// Polyhedron given explicitly with its dimension, accepting empty row blocks.
    pub fn polyhedron_in(dim: usize, ineq: Matrix, ineq_rhs: Vector, eq: Matrix, eq_rhs: Vector) -> Self {
        let mut s = Self::full(dim);
        if ineq.nrows() > 0 {
            s.ineq = ineq;
            s.ineq_rhs = ineq_rhs;
        }
        if eq.nrows() > 0 {
            s.eq = eq;
            s.eq_rhs = eq_rhs;
        }
        s
    }

    /// The second-order cone itself in dimension `dim`.
    pub fn lorentz_cone(dim: usize) -> Self {
        let mut s = Self::full(dim);
        s.lorentz.push(LorentzBlock {
            map: Matrix::identity(dim, dim),
            offset: Vector::zeros(dim),
        });
        s
    }

    pub fn is_polyhedral(&self) -> bool {
        self.lorentz.is_empty()
    }

    pub fn add_ineq(&mut self, row: &Vector, rhs: f64) {
        self.ineq = push_row(&self.ineq, row);
        self.ineq_rhs = vconcat(&[&self.ineq_rhs, &Vector::from_element(1, rhs)]);
    }

    pub fn add_eq(&mut self, row: &Vector, rhs: f64) {
        self.eq = push_row(&self.eq, row);
        self.eq_rhs = vconcat(&[&self.eq_rhs, &Vector::from_element(1, rhs)]);
    }

    /// Intersection of two sets in the same space.
    pub fn intersect(&self, other: &AffineConicSet) -> Result<AffineConicSet> {
        check_dim("intersection", self.dim, other.dim)?;
        let mut out = self.clone();
        out.ineq = vstack(&[&self.ineq, &other.ineq], self.dim);
        out.ineq_rhs = vconcat(&[&self.ineq_rhs, &other.ineq_rhs]);
        out.eq = vstack(&[&self.eq, &other.eq], self.dim);
        out.eq_rhs = vconcat(&[&self.eq_rhs, &other.eq_rhs]);
        out.lorentz.extend(other.lorentz.iter().cloned());
        out.empty = self.empty || other.empty;
        Ok(out)
    }

    /// Preimage `{u : J u + q ∈ self}`.
    pub fn pullback(&self, j: &Matrix, q: &Vector) -> Result<AffineConicSet> {
        check_dim("pullback rows", self.dim, j.nrows())?;
        check_dim("pullback shift", self.dim, q.len())?;
        let n = j.ncols();
        let ineq = &self.ineq * j;
        let ineq_rhs = &self.ineq_rhs - &self.ineq * q;
        let eq = &self.eq * j;
        let eq_rhs = &self.eq_rhs - &self.eq * q;
        let lorentz = self
            .lorentz
            .iter()
            .map(|b| LorentzBlock {
                map: &b.map * j,
                offset: &b.offset + &b.map * q,
            })
            .collect();
        Ok(AffineConicSet {
            dim: n,
            ineq: if ineq.nrows() == 0 { Matrix::zeros(0, n) } else { ineq },
            ineq_rhs,
            eq: if eq.nrows() == 0 { Matrix::zeros(0, n) } else { eq },
            eq_rhs,
            lorentz,
            empty: self.empty,
        })
    }

    /// Cartesian product `self × other`.
    pub fn product(&self, other: &AffineConicSet) -> AffineConicSet {
        let n1 = self.dim;
        let n = n1 + other.dim;
        let embed = |m: &Matrix, first: bool| -> Matrix {
            let mut out = Matrix::zeros(m.nrows(), n);
            let off = if first { 0 } else { n1 };
            if m.nrows() > 0 {
                out.view_mut((0, off), (m.nrows(), m.ncols())).copy_from(m);
            }
            out
        };
        let ineq = vstack(&[&embed(&self.ineq, true), &embed(&other.ineq, false)], n);
        let eq = vstack(&[&embed(&self.eq, true), &embed(&other.eq, false)], n);
        let mut lorentz: Vec<LorentzBlock> = self
            .lorentz
            .iter()
            .map(|b| LorentzBlock {
                map: embed(&b.map, true),
                offset: b.offset.clone(),
            })
            .collect();
        lorentz.extend(other.lorentz.iter().map(|b| LorentzBlock {
            map: embed(&b.map, false),
            offset: b.offset.clone(),
        }));
        AffineConicSet {
            dim: n,
            ineq,
            ineq_rhs: vconcat(&[&self.ineq_rhs, &other.ineq_rhs]),
            eq,
            eq_rhs: vconcat(&[&self.eq_rhs, &other.eq_rhs]),
            lorentz,
            empty: self.empty || other.empty,
        }
    }

    /// Largest constraint violation at `z` (zero inside the set).
    pub fn violation(&self, z: &Vector) -> f64 {
        if self.empty {
            return f64::INFINITY;
        }
        let mut v: f64 = 0.0;
        for i in 0..self.ineq.nrows() {
            v = v.max(self.ineq.row(i).transpose().dot(z) - self.ineq_rhs[i]);
        }
        for i in 0..self.eq.nrows() {
            v = v.max((self.eq.row(i).transpose().dot(z) - self.eq_rhs[i]).abs());
        }
        for b in &self.lorentz {
            v = v.max(soc_violation(&(&b.map * z + &b.offset)));
        }
        v
    }

    /// Membership with absolute tolerance `tol·(1 + ‖z‖)`.
    pub fn contains(&self, z: &Vector, tol: f64) -> bool {
        !self.empty && z.len() == self.dim && self.violation(z) <= tol * (1.0 + z.norm())
    }

    fn rhs_scale(&self) -> f64 {
        1.0 + max_abs(&self.ineq_rhs)
            + max_abs(&self.eq_rhs)
            + self.lorentz.iter().map(|b| b.offset.norm()).sum::<f64>()
    }

    fn lp_with_cuts(&self, c: &Vector, cuts: &[(Vector, f64)], boxed: bool) -> Result<LinearProgram> {
        let n = self.dim;
        let mut ineq = self.ineq.clone();
        let mut rhs = self.ineq_rhs.clone();
        for (a, b) in cuts {
            ineq = push_row(&ineq, a);
            rhs = vconcat(&[&rhs, &Vector::from_element(1, *b)]);
        }
        let mut lp = LinearProgram::minimize(c.clone())
            .with_ineq(if ineq.nrows() == 0 { Matrix::zeros(0, n) } else { ineq }, rhs)
            .with_eq(self.eq.clone(), self.eq_rhs.clone());
        if boxed {
            lp.lower = vec![Some(-CONIC_BOX); n];
            lp.upper = vec![Some(CONIC_BOX); n];
        }
        Ok(lp)
    }

    /// Supporting-hyperplane cut separating `z` from the block `b`, if violated.
    fn soc_cut(b: &LorentzBlock, z: &Vector, tol: f64) -> Option<(Vector, f64)> {
        let y = &b.map * z + &b.offset;
        let p = project_soc(&y);
        let mut nvec = &y - &p;
        let nn = nvec.norm();
        if nn <= tol * (1.0 + y.norm()) {
            return None;
        }
        nvec /= nn;
        // ⟨n, L z + c⟩ ≤ 0 for every feasible z.
        let row = b.map.transpose() * &nvec;
        Some((row, -nvec.dot(&b.offset)))
    }

    /// Minimizes `⟨c, z⟩` over the set.
    pub fn minimize(&self, c: &Vector) -> Result<ConicOutcome> {
        check_dim("conic objective", self.dim, c.len())?;
        if self.empty {
            return Ok(ConicOutcome::Infeasible);
        }
        if self.lorentz.is_empty() {
            let r = solve_lp(&self.lp_with_cuts(c, &[], false)?)?;
            return Ok(match r.status {
                LpStatus::Optimal => ConicOutcome::Optimal {
                    value: r.value.to_f64(),
                    x: r.x,
                },
                LpStatus::Unbounded => ConicOutcome::Unbounded,
                LpStatus::Infeasible => ConicOutcome::Infeasible,
            });
        }
        let mut cuts: Vec<(Vector, f64)> = Vec::new();
        let tol = 1e-11;
        let mut last = None;
        for _ in 0..400 {
            let r = solve_lp(&self.lp_with_cuts(c, &cuts, true)?)?;
            if r.status == LpStatus::Infeasible {
                return Ok(ConicOutcome::Infeasible);
            }
            let x = r.x;
            let mut added = false;
            for b in &self.lorentz {
                if let Some(cut) = Self::soc_cut(b, &x, tol) {
                    cuts.push(cut);
                    added = true;
                }
            }
            if !added {
                if max_abs(&x) >= 0.999 * CONIC_BOX {
                    return Ok(ConicOutcome::Unbounded);
                }
                return Ok(ConicOutcome::Optimal {
                    value: c.dot(&x),
                    x,
                });
            }
            last = Some(x);
        }
        let x = last.expect("cutting-plane loop ran");
        if self.violation(&x) <= 1e-7 * (1.0 + x.norm()) {
            if max_abs(&x) >= 0.999 * CONIC_BOX {
                return Ok(ConicOutcome::Unbounded);
            }
            return Ok(ConicOutcome::Optimal {
                value: c.dot(&x),
                x,
            });
        }
        Err(Error::NumericalFailure("conic cutting-plane method did not converge".into()))
    }

    /// Supremum of `⟨v, z⟩`; `−∞` on the empty set.
    pub fn support(&self, v: &Vector) -> Result<ExtReal> {
        Ok(self.minimize(&(-v))?.min_value().neg())
    }

    /// Whether the set is nonempty.
    pub fn is_feasible(&self) -> Result<bool> {
        Ok(!matches!(self.minimize(&Vector::zeros(self.dim))?, ConicOutcome::Infeasible))
    }

    /// Some point of the set.
    pub fn feasible_point(&self) -> Result<Option<Vector>> {
        match self.minimize(&Vector::zeros(self.dim))? {
            ConicOutcome::Optimal { x, .. } => Ok(Some(x)),
            ConicOutcome::Infeasible => Ok(None),
            ConicOutcome::Unbounded => Ok(None),
        }
    }

    /// Euclidean projection of `y`.
    pub fn project(&self, y: &Vector) -> Result<Vector> {
        check_dim("conic projection", self.dim, y.len())?;
        if self.empty {
            return Err(Error::EmptySet);
        }
        if self.lorentz.is_empty() {
            return project_polyhedron(
                &PolyhedronRows {
                    ineq: &self.ineq,
                    ineq_rhs: &self.ineq_rhs,
                    eq: &self.eq,
                    eq_rhs: &self.eq_rhs,
                },
                y,
            );
        }
        // Single Lorentz block with identity map and no polyhedral rows: closed form.
        if self.lorentz.len() == 1 && self.ineq.nrows() == 0 && self.eq.nrows() == 0 {
            let b = &self.lorentz[0];
            if b.map.is_square() && (&b.map - Matrix::identity(self.dim, self.dim)).norm() == 0.0 {
                return Ok(project_soc(&(y + &b.offset)) - &b.offset);
            }
        }
        if self.lorentz.len() == 1 && self.ineq.nrows() == 0 && self.eq.nrows() == 0 {
            if let Some(x) = project_affine_soc(&self.lorentz[0], y) {
                return Ok(x);
            }
        }
        let mut ineq = self.ineq.clone();
        let mut rhs = self.ineq_rhs.clone();
        let tol = 1e-12 * self.rhs_scale();
        let mut x = y.clone();
        for _ in 0..2000 {
            x = project_polyhedron(
                &PolyhedronRows {
                    ineq: &ineq,
                    ineq_rhs: &rhs,
                    eq: &self.eq,
                    eq_rhs: &self.eq_rhs,
                },
                y,
            )?;
            let mut added = false;
            let mut worst: f64 = 0.0;
            for b in &self.lorentz {
                let z = &b.map * &x + &b.offset;
                worst = worst.max(soc_violation(&z));
                if let Some((a, c)) = Self::soc_cut(b, &x, tol) {
                    ineq = push_row(&ineq, &a);
                    rhs = vconcat(&[&rhs, &Vector::from_element(1, c)]);
                    added = true;
                }
            }
            if !added || worst <= 1e-11 * (1.0 + y.norm()) {
                return Ok(x);
            }
        }
        if self.violation(&x) <= 1e-7 * (1.0 + y.norm()) {
            return Ok(x);
        }
        Err(Error::NumericalFailure("conic projection did not converge".into()))
    }

    /// Distance from `y` to the set.
    pub fn dist(&self, y: &Vector) -> Result<f64> {
        Ok((y - self.project(y)?).norm())
    }

    /// Row `i` of the inequality block.
    pub fn ineq_row(&self, i: usize) -> Vector {
        row_vec(&self.ineq, i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{matrix, vector};
    use proptest::prelude::*;

    #[test]
    fn soc_projection_cases() {
        assert_eq!(project_soc(&vector(&[0.0, 0.0, -1.0])), Vector::zeros(3));
        let y = vector(&[1.0, 0.0, 1.0]);
        assert_eq!(project_soc(&y), y);
        let p = project_soc(&vector(&[2.0, 0.0, 0.0]));
        assert!((p - vector(&[1.0, 0.0, 1.0])).norm() < 1e-15);
    }

    #[test]
    fn halfspace_support_value() {
        let s = AffineConicSet::polyhedron(
            matrix(&[&[1.0, 0.0, -1.0]], 3),
            vector(&[-1.0]),
            Matrix::zeros(0, 3),
            Vector::zeros(0),
        );
        let v = s.support(&vector(&[1.0, 0.0, -1.0])).unwrap();
        assert!((v.to_f64() + 1.0).abs() < 1e-12);
        assert_eq!(s.support(&vector(&[1.0, 0.0, 0.0])).unwrap(), ExtReal::PosInf);
        assert_eq!(AffineConicSet::empty(3).support(&vector(&[1.0, 0.0, 0.0])).unwrap(), ExtReal::NegInf);
    }

    #[test]
    fn lorentz_linear_minimization() {
        // min −z₁ over Q³ ∩ {z₃ ≤ 1} is −1 at (1, 0, 1).
        let mut s = AffineConicSet::lorentz_cone(3);
        s.add_ineq(&vector(&[0.0, 0.0, 1.0]), 1.0);
        match s.minimize(&vector(&[-1.0, 0.0, 0.0])).unwrap() {
            ConicOutcome::Optimal { value, x } => {
                assert!((value + 1.0).abs() < 1e-6, "value {value}");
                assert!((x - vector(&[1.0, 0.0, 1.0])).norm() < 1e-3);
            }
            other => panic!("unexpected {other:?}"),
        }
        let q = AffineConicSet::lorentz_cone(3);
        assert_eq!(q.minimize(&vector(&[0.0, 0.0, -1.0])).unwrap(), ConicOutcome::Unbounded);
        assert!(matches!(
            q.minimize(&vector(&[0.0, 0.0, 1.0])).unwrap(),
            ConicOutcome::Optimal { .. }
        ));
    }

    #[test]
    fn lorentz_projection_with_extra_row() {
        let mut s = AffineConicSet::lorentz_cone(3);
        s.add_ineq(&vector(&[0.0, 1.0, 0.0]), -0.5);
        let y = vector(&[0.0, 0.0, -1.0]);
        let x = s.project(&y).unwrap();
        assert!(s.violation(&x) < 1e-9);
        // Obtuse-angle check against feasible points.
        for z in [vector(&[0.0, -1.0, 2.0]), vector(&[0.3, -0.5, 0.7])] {
            assert!((&y - &x).dot(&(&z - &x)) <= 1e-6);
        }
    }

    proptest! {
        #[test]
        fn soc_projection_properties(y in prop::array::uniform4(-3.0f64..3.0), z in prop::array::uniform3(-2.0f64..2.0)) {
            let y = vector(&y);
            let p = project_soc(&y);
            prop_assert!(soc_violation(&p) <= 1e-12);
            prop_assert!((project_soc(&p) - &p).norm() <= 1e-12);
            let mut z4 = vector(&[z[0], z[1], z[2], 0.0]);
            z4[3] = z4.rows(0, 3).norm() + 0.1;
            prop_assert!((&y - &p).dot(&(&z4 - &p)) <= 1e-10);
        }

        #[test]
        fn affine_soc_projection_solves_the_variational_inequality(
            a in prop::array::uniform9(-1.0f64..1.0),
            c in prop::array::uniform3(-1.0f64..1.0),
            p in prop::array::uniform3(-2.0f64..2.0),
            qs in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 20),
        ) {
            let map = Matrix::identity(3, 3) * 1.5 + Matrix::from_row_slice(3, 3, &a);
            prop_assume!(map.clone().svd(false, false).singular_values.min() > 0.1);
            let set = AffineConicSet {
                dim: 3,
                ineq: Matrix::zeros(0, 3),
                ineq_rhs: Vector::zeros(0),
                eq: Matrix::zeros(0, 3),
                eq_rhs: Vector::zeros(0),
                lorentz: vec![LorentzBlock { map: map.clone(), offset: vector(&c) }],
                empty: false,
            };
            let p = vector(&p);
            let y = set.project(&p).unwrap();
            prop_assert!(set.violation(&y) <= 1e-10);
            let minv = map.try_inverse().unwrap();
            for q in qs {
                // Feasible point M⁻¹(u − c) for u on or inside the cone.
                let u = vector(&[q[0], q[1], q[0].hypot(q[1]) + q[2].abs()]);
                let z = &minv * (u - vector(&c));
                prop_assert!((&p - &y).dot(&(&z - &y)) <= 1e-9 * (1.0 + (&z - &y).norm()));
            }
        }
    }
}
