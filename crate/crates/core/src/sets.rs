//! The catalog of convex target sets and their pointwise first- and second-order
//! objects: tangent, normal and critical cones, second-order tangent sets,
//! second subderivatives of indicators, and C²-reduction data.

use std::sync::Arc;

use crate::conic::{project_soc, AffineConicSet, ConicOutcome, LorentzBlock};
use crate::dd::{cone_generators, halfspaces_from_generators, Generators};
use crate::error::{check_dim, Error, Result};
use crate::numeric::{
    block_diag, lstsq, null_space, push_row, row_vec, sigma_min, vconcat, ExtReal, Matrix,
    TolerancePolicy, Vector,
};
use crate::smooth::{Monomial, Polynomial, PolynomialMap, SmoothMap};

/// A closed convex set in the catalog.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvexSetSpec {
    /// `{y : A y ≤ b, E y = e}`.
    Polyhedron {
        dim: usize,
        ineq: Matrix,
        ineq_rhs: Vector,
        eq: Matrix,
        eq_rhs: Vector,
    },
    /// `{(y', y_m) : ‖y'‖ ≤ y_m}` in `ℝ^dim`.
    SecondOrderCone { dim: usize },
    Product(Vec<ConvexSetSpec>),
    FullSpace { dim: usize },
    Empty { dim: usize },
}

impl ConvexSetSpec {
    pub fn polyhedron(dim: usize, ineq: Matrix, ineq_rhs: Vector, eq: Matrix, eq_rhs: Vector) -> Result<Self> {
        if ineq.nrows() > 0 {
            check_dim("polyhedron inequality columns", dim, ineq.ncols())?;
        }
        check_dim("polyhedron inequality rhs", ineq.nrows(), ineq_rhs.len())?;
        if eq.nrows() > 0 {
            check_dim("polyhedron equality columns", dim, eq.ncols())?;
        }
        check_dim("polyhedron equality rhs", eq.nrows(), eq_rhs.len())?;
        Ok(ConvexSetSpec::Polyhedron {
            dim,
            ineq: if ineq.nrows() == 0 { Matrix::zeros(0, dim) } else { ineq },
            ineq_rhs,
            eq: if eq.nrows() == 0 { Matrix::zeros(0, dim) } else { eq },
            eq_rhs,
        })
    }

    /// `ℝⁿ₋`.
    pub fn nonpositive_orthant(n: usize) -> Self {
        ConvexSetSpec::Polyhedron {
            dim: n,
            ineq: Matrix::identity(n, n),
            ineq_rhs: Vector::zeros(n),
            eq: Matrix::zeros(0, n),
            eq_rhs: Vector::zeros(0),
        }
    }

    /// `{y : ⟨a, y⟩ ≤ b}`.
    pub fn halfspace(a: &Vector, b: f64) -> Self {
        let n = a.len();
        ConvexSetSpec::Polyhedron {
            dim: n,
            ineq: Matrix::from_row_slice(1, n, a.as_slice()),
            ineq_rhs: Vector::from_element(1, b),
            eq: Matrix::zeros(0, n),
            eq_rhs: Vector::zeros(0),
        }
    }

    /// `{0} ⊂ ℝⁿ`.
    pub fn origin(n: usize) -> Self {
        ConvexSetSpec::Polyhedron {
            dim: n,
            ineq: Matrix::zeros(0, n),
            ineq_rhs: Vector::zeros(0),
            eq: Matrix::identity(n, n),
            eq_rhs: Vector::zeros(n),
        }
    }

    pub fn soc(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Invalid("second-order cone needs dimension at least 2".into()));
        }
        Ok(ConvexSetSpec::SecondOrderCone { dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSetSpec::Polyhedron { dim, .. }
            | ConvexSetSpec::SecondOrderCone { dim }
            | ConvexSetSpec::FullSpace { dim }
            | ConvexSetSpec::Empty { dim } => *dim,
            ConvexSetSpec::Product(f) => f.iter().map(|s| s.dim()).sum(),
        }
    }

    pub fn is_polyhedral(&self) -> bool {
        match self {
            ConvexSetSpec::SecondOrderCone { .. } => false,
            ConvexSetSpec::Product(f) => f.iter().all(|s| s.is_polyhedral()),
            _ => true,
        }
    }

    /// Exact description as an affine-conic set.
    pub fn as_conic(&self) -> AffineConicSet {
        match self {
            ConvexSetSpec::Polyhedron {
                dim,
                ineq,
                ineq_rhs,
                eq,
                eq_rhs,
            } => AffineConicSet::polyhedron_in(*dim, ineq.clone(), ineq_rhs.clone(), eq.clone(), eq_rhs.clone()),
            ConvexSetSpec::SecondOrderCone { dim } => AffineConicSet::lorentz_cone(*dim),
            ConvexSetSpec::FullSpace { dim } => AffineConicSet::full(*dim),
            ConvexSetSpec::Empty { dim } => AffineConicSet::empty(*dim),
            ConvexSetSpec::Product(f) => {
                let mut it = f.iter();
                let first = it.next().map(|s| s.as_conic()).unwrap_or_else(|| AffineConicSet::full(0));
                it.fold(first, |acc, s| acc.product(&s.as_conic()))
            }
        }
    }

    pub fn split<'a>(&'a self, y: &Vector) -> Vec<(&'a ConvexSetSpec, Vector)> {
        match self {
            ConvexSetSpec::Product(f) => {
                let mut k = 0;
                f.iter()
                    .map(|s| {
                        let d = s.dim();
                        let part = y.rows(k, d).into_owned();
                        k += d;
                        (s, part)
                    })
                    .collect()
            }
            _ => vec![(self, y.clone())],
        }
    }

    /// Euclidean projection.
    pub fn project(&self, y: &Vector) -> Result<Vector> {
        check_dim("projection argument", self.dim(), y.len())?;
        match self {
            ConvexSetSpec::SecondOrderCone { .. } => Ok(project_soc(y)),
            ConvexSetSpec::FullSpace { .. } => Ok(y.clone()),
            ConvexSetSpec::Empty { .. } => Err(Error::EmptySet),
            ConvexSetSpec::Polyhedron { .. } => self.as_conic().project(y),
            ConvexSetSpec::Product(_) => {
                let parts: Result<Vec<Vector>> =
                    self.split(y).into_iter().map(|(s, p)| s.project(&p)).collect();
                let parts = parts?;
                Ok(vconcat(&parts.iter().collect::<Vec<_>>()))
            }
        }
    }

    pub fn dist(&self, y: &Vector) -> Result<f64> {
        Ok((y - self.project(y)?).norm())
    }

    /// `sup ⟨v, y⟩` over the set; `−∞` for the empty set.
    pub fn support_function(&self, v: &Vector) -> Result<ExtReal> {
        check_dim("support argument", self.dim(), v.len())?;
        match self {
            ConvexSetSpec::Empty { .. } => Ok(ExtReal::NegInf),
            ConvexSetSpec::Product(_) => {
                let mut acc = ExtReal::zero();
                for (s, p) in self.split(v) {
                    let part = s.support_function(&p)?;
                    acc = acc.checked_add(&part)?;
                }
                Ok(acc)
            }
            _ => self.as_conic().support(v),
        }
    }

    /// Cheap infeasibility measure, equivalent to the distance up to constants:
    /// largest normalized row violation for polyhedra, exact distance for the cone.
    pub fn residual(&self, y: &Vector) -> f64 {
        match self {
            ConvexSetSpec::Polyhedron {
                ineq, ineq_rhs, eq, eq_rhs, ..
            } => {
                let mut worst: f64 = 0.0;
                for i in 0..ineq.nrows() {
                    let r = ineq.row(i);
                    let n = r.norm();
                    let v = r.transpose().dot(y) - ineq_rhs[i];
                    if n > 0.0 {
                        worst = worst.max(v / n);
                    } else if v > 0.0 {
                        return f64::INFINITY;
                    }
                }
                for i in 0..eq.nrows() {
                    let r = eq.row(i);
                    let n = r.norm();
                    let v = (r.transpose().dot(y) - eq_rhs[i]).abs();
                    if n > 0.0 {
                        worst = worst.max(v / n);
                    } else if v > 0.0 {
                        return f64::INFINITY;
                    }
                }
                worst
            }
            ConvexSetSpec::SecondOrderCone { .. } => crate::conic::soc_violation(y),
            ConvexSetSpec::FullSpace { .. } => 0.0,
            ConvexSetSpec::Empty { .. } => f64::INFINITY,
            ConvexSetSpec::Product(_) => self
                .split(y)
                .iter()
                .map(|(s, p)| s.residual(p))
                .fold(0.0, f64::max),
        }
    }

    /// `dist(y; set) ≤ tol`.
    pub fn member(&self, y: &Vector, tol: f64) -> bool {
        match self.dist(y) {
            Ok(d) => d <= tol,
            Err(_) => false,
        }
    }

    fn require_member(&self, y: &Vector, tol: &TolerancePolicy) -> Result<()> {
        check_dim("base point", self.dim(), y.len())?;
        if self.member(y, tol.cone(y.norm())) {
            Ok(())
        } else {
            Err(Error::PointNotInSet)
        }
    }
}

/// Position of a point relative to the second-order cone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SocPoint {
    Interior,
    Vertex,
    Boundary,
}

pub fn classify_soc(y: &Vector, tol: f64) -> SocPoint {
    let m = y.len();
    let r = y.rows(0, m - 1).norm();
    let ym = y[m - 1];
    let t = tol * (1.0 + y.norm());
    if y.norm() <= t {
        SocPoint::Vertex
    } else if r < ym - t {
        SocPoint::Interior
    } else {
        SocPoint::Boundary
    }
}

/// Outward normal direction `(ȳ'/‖ȳ'‖, −1)` at a nonzero boundary point.
pub fn soc_boundary_normal(y: &Vector) -> Vector {
    let m = y.len();
    let yp = y.rows(0, m - 1);
    let r = yp.norm();
    let mut d = Vector::zeros(m);
    if r > 0.0 {
        for i in 0..m - 1 {
            d[i] = yp[i] / r;
        }
    }
    d[m - 1] = -1.0;
    d
}

/// A closed convex cone with a halfspace/Lorentz description and, when polyhedral,
/// a generator description.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeRep {
    pub set: AffineConicSet,
    pub generators: Option<Generators>,
}

impl ConeRep {
    pub fn dim(&self) -> usize {
        self.set.dim
    }

    pub fn full(dim: usize) -> Self {
        Self::from_halfspaces(dim, Matrix::zeros(0, dim), Matrix::zeros(0, dim))
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_halfspaces(dim, Matrix::zeros(0, dim), Matrix::identity(dim, dim))
    }

    /// `{w : G w ≤ 0, M w = 0}` with generators computed by double description.
    pub fn from_halfspaces(dim: usize, ineq: Matrix, eq: Matrix) -> Self {
        let ineq = if ineq.nrows() == 0 { Matrix::zeros(0, dim) } else { ineq };
        let eq = if eq.nrows() == 0 { Matrix::zeros(0, dim) } else { eq };
        let gens = cone_generators(&ineq, &eq, dim);
        let set = AffineConicSet::polyhedron_in(dim, ineq.clone(), Vector::zeros(ineq.nrows()), eq.clone(), Vector::zeros(eq.nrows()));
        Self {
            set,
            generators: Some(gens),
        }
    }

    /// `cone(rays) + span(lineality)` with halfspaces from the polar generators.
    pub fn from_generators(g: Generators) -> Self {
        let dim = g.dim;
        let (ineq, eq) = halfspaces_from_generators(&g);
        let set = AffineConicSet::polyhedron_in(dim, ineq.clone(), Vector::zeros(ineq.nrows()), eq.clone(), Vector::zeros(eq.nrows()));
        Self {
            set,
            generators: Some(g),
        }
    }

    /// `ℝ₊ r`.
    pub fn ray(r: &Vector) -> Self {
        let dim = r.len();
        Self::from_generators(Generators {
            dim,
            rays: vec![r / r.norm()],
            lineality: vec![],
        })
    }

    /// The second-order cone (`negated = false`) or its negative.
    pub fn lorentz(dim: usize, negated: bool) -> Self {
        let mut set = AffineConicSet::full(dim);
        let s = if negated { -1.0 } else { 1.0 };
        set.lorentz.push(LorentzBlock {
            map: Matrix::identity(dim, dim) * s,
            offset: Vector::zeros(dim),
        });
        Self {
            set,
            generators: None,
        }
    }

    pub fn is_polyhedral(&self) -> bool {
        self.set.is_polyhedral()
    }

    pub fn contains(&self, w: &Vector, tol: f64) -> bool {
        self.set.contains(w, tol)
    }

    /// Whether the cone is `{0}`.
    pub fn is_trivial(&self) -> Result<bool> {
        if let Some(g) = &self.generators {
            return Ok(g.is_trivial());
        }
        // Nontrivial iff some coordinate can be moved off zero inside the unit box.
        let n = self.dim();
        let mut boxed = self.set.clone();
        for i in 0..n {
            let e = crate::numeric::unit(n, i);
            boxed.add_ineq(&e, 1.0);
            boxed.add_ineq(&(-&e), 1.0);
        }
        for i in 0..n {
            for s in [1.0, -1.0] {
                let c = crate::numeric::unit(n, i) * s;
                if let ConicOutcome::Optimal { value, .. } = boxed.minimize(&c)? {
                    if value < -1e-7 {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }

    /// Preimage `{u : J u ∈ K}`.
    pub fn pullback(&self, j: &Matrix) -> Result<ConeRep> {
        let set = self.set.pullback(j, &Vector::zeros(self.dim()))?;
        if set.is_polyhedral() {
            Ok(Self::from_halfspaces(set.dim, set.ineq, set.eq))
        } else {
            Ok(Self {
                set,
                generators: None,
            })
        }
    }

    /// `K ∩ {v}^⊥`.
    pub fn with_orthogonal(&self, v: &Vector) -> ConeRep {
        let mut set = self.set.clone();
        set.add_eq(v, 0.0);
        if set.is_polyhedral() {
            Self::from_halfspaces(set.dim, set.ineq, set.eq)
        } else {
            Self {
                set,
                generators: None,
            }
        }
    }

    pub fn product(parts: &[ConeRep]) -> ConeRep {
        let mut it = parts.iter();
        let Some(first) = it.next() else {
            return ConeRep::full(0);
        };
        let mut set = first.set.clone();
        for p in it {
            set = set.product(&p.set);
        }
        let generators = if parts.iter().all(|p| p.generators.is_some()) {
            let dim = set.dim;
            let mut g = Generators {
                dim,
                rays: vec![],
                lineality: vec![],
            };
            let mut off = 0;
            for p in parts {
                let pg = p.generators.as_ref().expect("checked above");
                let embed = |v: &Vector| {
                    let mut e = Vector::zeros(dim);
                    e.rows_mut(off, v.len()).copy_from(v);
                    e
                };
                g.rays.extend(pg.rays.iter().map(embed));
                g.lineality.extend(pg.lineality.iter().map(embed));
                off += p.dim();
            }
            Some(g)
        } else {
            None
        };
        ConeRep { set, generators }
    }

    /// Euclidean projection onto the cone.
    pub fn project(&self, w: &Vector) -> Result<Vector> {
        self.set.project(w)
    }

    /// `σ_K(v)`: 0 on the polar cone and `+∞` elsewhere.
    pub fn support(&self, v: &Vector) -> Result<ExtReal> {
        self.set.support(v)
    }
}

/// A second-order tangent set; `Empty` never arises for catalog sets.
#[derive(Clone, Debug, PartialEq)]
pub enum SecondTangentRep {
    Set(AffineConicSet),
    Empty { dim: usize },
}

impl SecondTangentRep {
    pub fn dim(&self) -> usize {
        match self {
            SecondTangentRep::Set(s) => s.dim,
            SecondTangentRep::Empty { dim } => *dim,
        }
    }

    pub fn as_set(&self) -> AffineConicSet {
        match self {
            SecondTangentRep::Set(s) => s.clone(),
            SecondTangentRep::Empty { dim } => AffineConicSet::empty(*dim),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, SecondTangentRep::Empty { .. })
    }

    pub fn contains(&self, u: &Vector, tol: f64) -> bool {
        match self {
            SecondTangentRep::Set(s) => s.contains(u, tol),
            SecondTangentRep::Empty { .. } => false,
        }
    }

    pub fn support(&self, v: &Vector) -> Result<ExtReal> {
        match self {
            SecondTangentRep::Set(s) => s.support(v),
            SecondTangentRep::Empty { .. } => Ok(ExtReal::NegInf),
        }
    }

    /// Preimage `{u : J u + q ∈ self}`.
    pub fn pullback(&self, j: &Matrix, q: &Vector) -> Result<SecondTangentRep> {
        match self {
            SecondTangentRep::Set(s) => Ok(SecondTangentRep::Set(s.pullback(j, q)?)),
            SecondTangentRep::Empty { .. } => Ok(SecondTangentRep::Empty { dim: j.ncols() }),
        }
    }
}

fn active_rows(ineq: &Matrix, rhs: &Vector, y: &Vector, tol: &TolerancePolicy) -> Vec<usize> {
    (0..ineq.nrows())
        .filter(|&i| {
            let a = row_vec(ineq, i);
            (a.dot(y) - rhs[i]).abs() <= tol.cone_tol * (1.0 + a.norm() * y.norm())
        })
        .collect()
}

fn rows_of(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), m.ncols());
    for (k, &i) in idx.iter().enumerate() {
        out.set_row(k, &m.row(i));
    }
    out
}

/// `T_Θ(ȳ)`.
pub fn tangent_cone(theta: &ConvexSetSpec, y: &Vector, tol: &TolerancePolicy) -> Result<ConeRep> {
    theta.require_member(y, tol)?;
    match theta {
        ConvexSetSpec::Polyhedron {
            dim, ineq, ineq_rhs, eq, ..
        } => {
            let act = active_rows(ineq, ineq_rhs, y, tol);
            Ok(ConeRep::from_halfspaces(*dim, rows_of(ineq, &act), eq.clone()))
        }
        ConvexSetSpec::SecondOrderCone { dim } => match classify_soc(y, tol.cone_tol) {
            SocPoint::Interior => Ok(ConeRep::full(*dim)),
            SocPoint::Vertex => Ok(ConeRep::lorentz(*dim, false)),
            SocPoint::Boundary => {
                let d = soc_boundary_normal(y);
                Ok(ConeRep::from_halfspaces(*dim, Matrix::from_row_slice(1, *dim, d.as_slice()), Matrix::zeros(0, *dim)))
            }
        },
        ConvexSetSpec::FullSpace { dim } => Ok(ConeRep::full(*dim)),
        ConvexSetSpec::Empty { .. } => Err(Error::PointNotInSet),
        ConvexSetSpec::Product(_) => {
            let parts: Result<Vec<ConeRep>> =
                theta.split(y).iter().map(|(s, p)| tangent_cone(s, p, tol)).collect();
            Ok(ConeRep::product(&parts?))
        }
    }
}

/// `N_Θ(ȳ)`, the polar of the tangent cone.
pub fn normal_cone(theta: &ConvexSetSpec, y: &Vector, tol: &TolerancePolicy) -> Result<ConeRep> {
    theta.require_member(y, tol)?;
    match theta {
        ConvexSetSpec::Polyhedron {
            dim, ineq, ineq_rhs, eq, ..
        } => {
            let act = active_rows(ineq, ineq_rhs, y, tol);
            let rays: Vec<Vector> = act
                .iter()
                .map(|&i| row_vec(ineq, i))
                .filter(|r| r.norm() > 0.0)
                .map(|r| &r / r.norm())
                .collect();
            let eqb = crate::numeric::row_space(eq, *dim, 1e-12);
            let lineality = (0..eqb.ncols()).map(|j| eqb.column(j).into_owned()).collect();
            Ok(ConeRep::from_generators(Generators {
                dim: *dim,
                rays,
                lineality,
            }))
        }
        ConvexSetSpec::SecondOrderCone { dim } => match classify_soc(y, tol.cone_tol) {
            SocPoint::Interior => Ok(ConeRep::zero(*dim)),
            SocPoint::Vertex => Ok(ConeRep::lorentz(*dim, true)),
            SocPoint::Boundary => Ok(ConeRep::ray(&soc_boundary_normal(y))),
        },
        ConvexSetSpec::FullSpace { dim } => Ok(ConeRep::zero(*dim)),
        ConvexSetSpec::Empty { .. } => Err(Error::PointNotInSet),
        ConvexSetSpec::Product(_) => {
            let parts: Result<Vec<ConeRep>> =
                theta.split(y).iter().map(|(s, p)| normal_cone(s, p, tol)).collect();
            Ok(ConeRep::product(&parts?))
        }
    }
}

fn require_normal(theta: &ConvexSetSpec, y: &Vector, lambda: &Vector, tol: &TolerancePolicy) -> Result<()> {
    check_dim("normal vector", theta.dim(), lambda.len())?;
    let n = normal_cone(theta, y, tol)?;
    if n.contains(lambda, tol.cone_tol) {
        Ok(())
    } else {
        Err(Error::NotANormal)
    }
}

/// `K_Θ(ȳ, λ) = T_Θ(ȳ) ∩ {λ}^⊥`.
pub fn critical_cone(theta: &ConvexSetSpec, y: &Vector, lambda: &Vector, tol: &TolerancePolicy) -> Result<ConeRep> {
    require_normal(theta, y, lambda, tol)?;
    critical_cone_unchecked(theta, y, lambda, tol)
}

fn critical_cone_unchecked(theta: &ConvexSetSpec, y: &Vector, lambda: &Vector, tol: &TolerancePolicy) -> Result<ConeRep> {
    let small = lambda.norm() <= tol.cone_tol * (1.0 + y.norm());
    match theta {
        ConvexSetSpec::SecondOrderCone { dim } => {
            let dim = *dim;
            match classify_soc(y, tol.cone_tol) {
                SocPoint::Interior => Ok(ConeRep::full(dim)),
                SocPoint::Boundary => {
                    if small {
                        tangent_cone(theta, y, tol)
                    } else {
                        let d = soc_boundary_normal(y);
                        Ok(ConeRep::from_halfspaces(dim, Matrix::zeros(0, dim), Matrix::from_row_slice(1, dim, d.as_slice())))
                    }
                }
                SocPoint::Vertex => {
                    if small {
                        return Ok(ConeRep::lorentz(dim, false));
                    }
                    let lp = lambda.rows(0, dim - 1).into_owned();
                    let lm = lambda[dim - 1];
                    if lp.norm() < -lm - tol.cone_tol * (1.0 + lambda.norm()) {
                        Ok(ConeRep::zero(dim))
                    } else {
                        // −λ on the boundary of Q; the critical cone is the opposite boundary ray.
                        let mut r = Vector::zeros(dim);
                        for i in 0..dim - 1 {
                            r[i] = lp[i] / lp.norm();
                        }
                        r[dim - 1] = 1.0;
                        Ok(ConeRep::ray(&r))
                    }
                }
            }
        }
        ConvexSetSpec::Product(_) => {
            let mut parts = Vec::new();
            let mut k = 0;
            for (s, p) in theta.split(y) {
                let d = s.dim();
                let l = lambda.rows(k, d).into_owned();
                parts.push(critical_cone_unchecked(s, &p, &l, tol)?);
                k += d;
            }
            Ok(ConeRep::product(&parts))
        }
        _ => {
            let t = tangent_cone(theta, y, tol)?;
            if small {
                Ok(t)
            } else {
                Ok(t.with_orthogonal(lambda))
            }
        }
    }
}

/// The quadratic reduction `g(y) = (‖y'‖² − y_m², −y_m)` of the second-order cone
/// onto `ℝ²₋`, valid near nonzero boundary points.
pub fn soc_reduction_map(dim: usize) -> PolynomialMap {
    let mut terms = Vec::new();
    for i in 0..dim {
        let mut e = vec![0u32; dim];
        e[i] = 2;
        terms.push(Monomial {
            coeff: if i + 1 == dim { -1.0 } else { 1.0 },
            exp: e,
        });
    }
    let mut e = vec![0u32; dim];
    e[dim - 1] = 1;
    PolynomialMap::new(
        dim,
        vec![
            Polynomial::new(terms),
            Polynomial::new(vec![Monomial { coeff: -1.0, exp: e }]),
        ],
    )
    .expect("well-formed reduction polynomial")
}

/// `T²_Θ(ȳ, u)`.
pub fn second_tangent(theta: &ConvexSetSpec, y: &Vector, u: &Vector, tol: &TolerancePolicy) -> Result<SecondTangentRep> {
    let t = tangent_cone(theta, y, tol)?;
    check_dim("second-order tangent direction", theta.dim(), u.len())?;
    if !t.contains(u, tol.cone_tol) {
        return Err(Error::NotTangent);
    }
    second_tangent_unchecked(theta, y, u, tol)
}

fn second_tangent_unchecked(theta: &ConvexSetSpec, y: &Vector, u: &Vector, tol: &TolerancePolicy) -> Result<SecondTangentRep> {
    match theta {
        ConvexSetSpec::Polyhedron {
            dim, ineq, ineq_rhs, eq, ..
        } => {
            let act: Vec<usize> = active_rows(ineq, ineq_rhs, y, tol)
                .into_iter()
                .filter(|&i| {
                    let a = row_vec(ineq, i);
                    a.dot(u).abs() <= tol.cone_tol * (1.0 + a.norm() * u.norm())
                })
                .collect();
            let rows = rows_of(ineq, &act);
            Ok(SecondTangentRep::Set(AffineConicSet::polyhedron_in(
                *dim,
                rows,
                Vector::zeros(act.len()),
                eq.clone(),
                Vector::zeros(eq.nrows()),
            )))
        }
        ConvexSetSpec::SecondOrderCone { dim } => match classify_soc(y, tol.cone_tol) {
            SocPoint::Interior => Ok(SecondTangentRep::Set(AffineConicSet::full(*dim))),
            SocPoint::Vertex => Ok(SecondTangentRep::Set(tangent_cone(theta, u, tol)?.set)),
            SocPoint::Boundary => {
                let g = soc_reduction_map(*dim);
                let jg = g.jacobian(y);
                let q = g.hessian(y).apply(u, u)?;
                let target = ConvexSetSpec::nonpositive_orthant(2);
                let gy = g.value(y);
                // Clamp the numerically tiny first coordinate onto the boundary of ℝ²₋.
                let gy = Vector::from_iterator(2, gy.iter().map(|v| v.min(0.0)));
                let inner = second_tangent_unchecked(&target, &gy, &(&jg * u), tol)?;
                inner.pullback(&jg, &q)
            }
        },
        ConvexSetSpec::FullSpace { dim } => Ok(SecondTangentRep::Set(AffineConicSet::full(*dim))),
        ConvexSetSpec::Empty { dim } => Ok(SecondTangentRep::Empty { dim: *dim }),
        ConvexSetSpec::Product(_) => {
            let mut acc: Option<AffineConicSet> = None;
            let mut k = 0;
            for (s, p) in theta.split(y) {
                let d = s.dim();
                let part = second_tangent_unchecked(s, &p, &u.rows(k, d).into_owned(), tol)?;
                k += d;
                let set = match part {
                    SecondTangentRep::Set(set) => set,
                    SecondTangentRep::Empty { .. } => return Ok(SecondTangentRep::Empty { dim: theta.dim() }),
                };
                acc = Some(match acc {
                    None => set,
                    Some(a) => a.product(&set),
                });
            }
            Ok(SecondTangentRep::Set(acc.unwrap_or_else(|| AffineConicSet::full(0))))
        }
    }
}

/// Closed form `(‖λ‖/‖ȳ‖)(‖u'‖² − u_m²)` at a nonzero boundary point of the second-order cone.
pub fn soc_boundary_d2(y: &Vector, lambda: &Vector, u: &Vector) -> f64 {
    let m = u.len();
    let up = u.rows(0, m - 1).norm_squared();
    (lambda.norm() / y.norm()) * (up - u[m - 1] * u[m - 1])
}

/// `d²δ_Θ(ȳ, λ)(u)`.
pub fn d2_indicator(theta: &ConvexSetSpec, y: &Vector, lambda: &Vector, u: &Vector, tol: &TolerancePolicy) -> Result<ExtReal> {
    require_normal(theta, y, lambda, tol)?;
    check_dim("second subderivative direction", theta.dim(), u.len())?;
    d2_indicator_unchecked(theta, y, lambda, u, tol)
}

fn d2_indicator_unchecked(theta: &ConvexSetSpec, y: &Vector, lambda: &Vector, u: &Vector, tol: &TolerancePolicy) -> Result<ExtReal> {
    if let ConvexSetSpec::Product(_) = theta {
        let mut acc = ExtReal::zero();
        let mut k = 0;
        for (s, p) in theta.split(y) {
            let d = s.dim();
            let part = d2_indicator_unchecked(s, &p, &lambda.rows(k, d).into_owned(), &u.rows(k, d).into_owned(), tol)?;
            acc = acc.checked_add(&part)?;
            k += d;
        }
        return Ok(acc);
    }
    let k = critical_cone_unchecked(theta, y, lambda, tol)?;
    if !k.contains(u, tol.cone_tol) {
        return Ok(ExtReal::PosInf);
    }
    match theta {
        ConvexSetSpec::SecondOrderCone { .. } if classify_soc(y, tol.cone_tol) == SocPoint::Boundary => {
            Ok(ExtReal::Finite(soc_boundary_d2(y, lambda, u)))
        }
        _ => Ok(ExtReal::zero()),
    }
}

/// Vector `c(u)` with `d²δ_Θ(ȳ, λ)(u) = ⟨λ, c(u)⟩` for every normal `λ` at `ȳ` whose
/// critical cone contains `u`.
pub fn curvature_vector(theta: &ConvexSetSpec, y: &Vector, u: &Vector, tol: &TolerancePolicy) -> Vector {
    match theta {
        ConvexSetSpec::Product(_) => {
            let mut parts = Vec::new();
            let mut k = 0;
            for (s, p) in theta.split(y) {
                let d = s.dim();
                parts.push(curvature_vector(s, &p, &u.rows(k, d).into_owned(), tol));
                k += d;
            }
            vconcat(&parts.iter().collect::<Vec<_>>())
        }
        ConvexSetSpec::SecondOrderCone { dim } if classify_soc(y, tol.cone_tol) == SocPoint::Boundary => {
            let d = soc_boundary_normal(y);
            let m = *dim;
            let qu = u.rows(0, m - 1).norm_squared() - u[m - 1] * u[m - 1];
            &d * (qu / (y.norm() * d.norm()))
        }
        _ => Vector::zeros(theta.dim()),
    }
}

/// Data `(h, Ξ, ȳ)` of a C²-cone reduction: locally the set is `{y : h(y) ∈ Ξ}`.
#[derive(Clone, Debug)]
pub struct ReductionData {
    pub h: Arc<dyn SmoothMap>,
    pub cone: ConvexSetSpec,
    pub base: Vector,
}

impl ReductionData {
    /// Checks `h(ȳ) ∈ Ξ` and full row rank of `∇h(ȳ)` (σ_min > 1e-8).
    pub fn new(h: Arc<dyn SmoothMap>, cone: ConvexSetSpec, base: Vector, tol: &TolerancePolicy) -> Result<Self> {
        check_dim("reduction base", h.input_dim(), base.len())?;
        check_dim("reduction cone", h.output_dim(), cone.dim())?;
        let hv = h.value(&base);
        if !cone.member(&hv, tol.cone(hv.norm())) {
            return Err(Error::PointNotInSet);
        }
        let s = sigma_min(&h.jacobian(&base));
        if s <= 1e-8 {
            return Err(Error::RankDeficient(s));
        }
        Ok(Self { h, cone, base })
    }

    /// The quadratic reduction of the second-order cone at a nonzero boundary point.
    pub fn soc_boundary(base: &Vector, tol: &TolerancePolicy) -> Result<Self> {
        let dim = base.len();
        if classify_soc(base, tol.cone_tol) != SocPoint::Boundary {
            return Err(Error::Invalid("reduction requires a nonzero boundary point".into()));
        }
        Self::new(
            Arc::new(soc_reduction_map(dim)),
            ConvexSetSpec::nonpositive_orthant(2),
            base.clone(),
            tol,
        )
    }
}

/// `⟨μ, ∇²h(ȳ)(w, w)⟩ + d²δ_Ξ(h(ȳ), μ)(∇h(ȳ) w)` with `λ = ∇h(ȳ)ᵀ μ`, `+∞` off the critical cone.
pub fn reduction_second_subderivative(r: &ReductionData, lambda: &Vector, w: &Vector, tol: &TolerancePolicy) -> Result<ExtReal> {
    check_dim("reduction multiplier", r.base.len(), lambda.len())?;
    check_dim("reduction direction", r.base.len(), w.len())?;
    let jh = r.h.jacobian(&r.base);
    let s = sigma_min(&jh);
    if s <= 1e-8 {
        return Err(Error::RankDeficient(s));
    }
    let mu = lstsq(&jh.transpose(), lambda);
    let resid = (jh.transpose() * &mu - lambda).norm();
    if resid > tol.eq(lambda.norm()) * 10.0 {
        return Err(Error::NotANormal);
    }
    let hv = r.h.value(&r.base).map(|v| if v.abs() <= tol.cone_tol { 0.0 } else { v });
    let hv = r.cone.project(&hv)?;
    let n = normal_cone(&r.cone, &hv, tol)?;
    if !n.contains(&mu, tol.cone_tol) {
        return Err(Error::NotANormal);
    }
    let k = critical_cone_unchecked(&r.cone, &hv, &mu, tol)?;
    let jw = &jh * w;
    if !k.contains(&jw, tol.cone_tol) {
        return Ok(ExtReal::PosInf);
    }
    let quad = r.h.hessian(&r.base).apply(w, w)?.dot(&mu);
    let inner = d2_indicator_unchecked(&r.cone, &hv, &mu, &jw, tol)?;
    ExtReal::Finite(quad).checked_add(&inner)
}

/// Basis of the orthogonal complement of `v` in `ℝⁿ` (as columns).
pub fn orthogonal_complement(v: &Vector) -> Matrix {
    let n = v.len();
    null_space(&Matrix::from_row_slice(1, n, v.as_slice()), n, 1e-12)
}

/// Block-diagonal lift of a list of matrices, re-exported for product handling.
pub fn product_matrix(blocks: &[Matrix]) -> Matrix {
    block_diag(blocks)
}

/// Appends `row` to `m`.
pub fn append_row(m: &Matrix, row: &Vector) -> Matrix {
    push_row(m, row)
}

/// Generators of `N_Θ(y)`; at the vertex of a second-order cone an inscribed polyhedral cone is used.
pub fn normal_generators(theta: &ConvexSetSpec, y: &Vector, tol: &TolerancePolicy) -> Result<Generators> {
    match theta {
        ConvexSetSpec::Product(blocks) => {
            let dim = theta.dim();
            let mut g = Generators {
                dim,
                rays: vec![],
                lineality: vec![],
            };
            let mut off = 0;
            for b in blocks {
                let d = b.dim();
                let bg = normal_generators(b, &y.rows(off, d).into_owned(), tol)?;
                let embed = |v: &Vector| {
                    let mut e = Vector::zeros(dim);
                    e.rows_mut(off, d).copy_from(v);
                    e
                };
                g.rays.extend(bg.rays.iter().map(embed));
                g.lineality.extend(bg.lineality.iter().map(embed));
                off += d;
            }
            Ok(g)
        }
        ConvexSetSpec::SecondOrderCone { dim } if classify_soc(y, tol.cone_tol) == SocPoint::Vertex => {
            let m = *dim;
            let mut rays = Vec::new();
            let count = if m == 2 { 2 } else if m == 3 { 96 } else { 2 * (m - 1) + (1usize << (m - 1).min(8)) };
            for k in 0..count {
                let mut d = Vector::zeros(m);
                if m == 2 {
                    d[0] = if k == 0 { 1.0 } else { -1.0 };
                } else if m == 3 {
                    let a = std::f64::consts::TAU * k as f64 / count as f64;
                    d[0] = a.cos();
                    d[1] = a.sin();
                } else if k < 2 * (m - 1) {
                    d[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
                } else {
                    let bits = k - 2 * (m - 1);
                    let s = 1.0 / ((m - 1).min(8) as f64).sqrt();
                    for i in 0..(m - 1).min(8) {
                        d[i] = if bits >> i & 1 == 0 { s } else { -s };
                    }
                }
                d[m - 1] = -1.0;
                rays.push(d / 2f64.sqrt());
            }
            Ok(Generators {
                dim: m,
                rays,
                lineality: vec![],
            })
        }
        _ => normal_cone(theta, y, tol)?
            .generators
            .ok_or_else(|| Error::Invalid("normal cone has no generator form".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::vector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    fn q3() -> ConvexSetSpec {
        ConvexSetSpec::soc(3).unwrap()
    }

    #[test]
    fn projection_examples() {
        let o = ConvexSetSpec::nonpositive_orthant(2);
        assert!((o.project(&vector(&[1.0, -1.0])).unwrap() - vector(&[0.0, -1.0])).norm() < 1e-12);
        assert!(q3().project(&vector(&[0.0, 0.0, -1.0])).unwrap().norm() < 1e-15);
        let h = ConvexSetSpec::halfspace(&vector(&[1.0, 1.0]), 0.0);
        assert!(h.project(&vector(&[1.0, 1.0])).unwrap().norm() < 1e-12);
        assert_eq!(ConvexSetSpec::Empty { dim: 2 }.project(&vector(&[1.0, 1.0])), Err(Error::EmptySet));
    }

    #[test]
    fn support_examples() {
        let o = ConvexSetSpec::nonpositive_orthant(2);
        assert_eq!(o.support_function(&vector(&[1.0, 0.0])).unwrap(), ExtReal::zero());
        assert_eq!(o.support_function(&vector(&[-1.0, 1.0])).unwrap(), ExtReal::PosInf);
        let h = ConvexSetSpec::halfspace(&vector(&[1.0, 0.0, -1.0]), -1.0);
        assert!(h.support_function(&vector(&[1.0, 0.0, -1.0])).unwrap().approx_eq(&ExtReal::Finite(-1.0), 1e-12));
        assert_eq!(ConvexSetSpec::Empty { dim: 1 }.support_function(&vector(&[1.0])).unwrap(), ExtReal::NegInf);
    }

    #[test]
    fn member_examples() {
        assert!(q3().member(&vector(&[1.0, 0.0, 1.0]), 1e-8));
        assert!(!ConvexSetSpec::nonpositive_orthant(2).member(&vector(&[0.1, 0.0]), 1e-8));
        assert!(ConvexSetSpec::origin(2).member(&vector(&[1e-10, 0.0]), 1e-8));
    }

    #[test]
    fn tangent_examples() {
        let t = tangent_cone(&ConvexSetSpec::nonpositive_orthant(2), &Vector::zeros(2), &tol()).unwrap();
        assert!(t.contains(&vector(&[-1.0, -2.0]), 1e-9) && !t.contains(&vector(&[1.0, 0.0]), 1e-9));
        let t = tangent_cone(&q3(), &vector(&[1.0, 0.0, 1.0]), &tol()).unwrap();
        assert!(t.contains(&vector(&[1.0, 5.0, 1.0]), 1e-9));
        assert!(!t.contains(&vector(&[1.0, 0.0, 0.9]), 1e-9));
        let t = tangent_cone(&q3(), &Vector::zeros(3), &tol()).unwrap();
        assert!(t.contains(&vector(&[3.0, 4.0, 5.0]), 1e-9) && !t.contains(&vector(&[3.0, 4.0, 4.9]), 1e-9));
        assert_eq!(tangent_cone(&q3(), &vector(&[1.0, 0.0, 0.0]), &tol()), Err(Error::PointNotInSet));
    }

    #[test]
    fn normal_examples() {
        let n = normal_cone(&ConvexSetSpec::nonpositive_orthant(2), &Vector::zeros(2), &tol()).unwrap();
        assert_eq!(n.generators.as_ref().unwrap().rays.len(), 2);
        assert!(n.contains(&vector(&[1.0, 2.0]), 1e-9));
        let n = normal_cone(&q3(), &vector(&[1.0, 0.0, 1.0]), &tol()).unwrap();
        assert!(n.contains(&vector(&[1.0, 0.0, -1.0]), 1e-9) && !n.contains(&vector(&[1.0, 0.1, -1.0]), 1e-9));
        let n = normal_cone(&q3(), &Vector::zeros(3), &tol()).unwrap();
        assert!(n.contains(&vector(&[0.3, 0.4, -0.5]), 1e-9) && !n.contains(&vector(&[0.3, 0.4, 0.5]), 1e-9));
    }

    #[test]
    fn critical_examples() {
        let k = critical_cone(&ConvexSetSpec::nonpositive_orthant(2), &Vector::zeros(2), &vector(&[1.0, 0.0]), &tol()).unwrap();
        assert!(k.contains(&vector(&[0.0, -1.0]), 1e-9) && !k.contains(&vector(&[-1.0, -1.0]), 1e-9));
        let k = critical_cone(&q3(), &vector(&[1.0, 0.0, 1.0]), &vector(&[1.0, 0.0, -1.0]), &tol()).unwrap();
        assert!(k.contains(&vector(&[2.0, -3.0, 2.0]), 1e-9) && !k.contains(&vector(&[1.0, 0.0, 2.0]), 1e-9));
        let k0 = critical_cone(&q3(), &vector(&[1.0, 0.0, 1.0]), &Vector::zeros(3), &tol()).unwrap();
        assert!(k0.contains(&vector(&[1.0, 0.0, 2.0]), 1e-9));
        assert_eq!(
            critical_cone(&q3(), &vector(&[1.0, 0.0, 1.0]), &vector(&[1.0, 0.0, 1.0]), &tol()),
            Err(Error::NotANormal)
        );
        let kv = critical_cone(&q3(), &Vector::zeros(3), &vector(&[1.0, 0.0, -1.0]), &tol()).unwrap();
        assert!(kv.contains(&vector(&[2.0, 0.0, 2.0]), 1e-9) && !kv.contains(&vector(&[0.0, 0.0, 1.0]), 1e-9));
    }

    #[test]
    fn second_tangent_examples() {
        let s = second_tangent(&ConvexSetSpec::nonpositive_orthant(2), &Vector::zeros(2), &vector(&[0.0, -1.0]), &tol()).unwrap();
        assert!(s.contains(&vector(&[-1.0, 5.0]), 1e-9) && !s.contains(&vector(&[1.0, 0.0]), 1e-9));
        let s = second_tangent(&q3(), &vector(&[1.0, 0.0, 1.0]), &vector(&[1.0, 1.0, 1.0]), &tol()).unwrap();
        assert!(s.contains(&vector(&[0.0, 7.0, 1.0]), 1e-9) && !s.contains(&vector(&[0.0, 0.0, 0.5]), 1e-9));
        let sv = s.support(&vector(&[1.0, 0.0, -1.0])).unwrap();
        assert!(sv.approx_eq(&ExtReal::Finite(-1.0), 1e-12));
        let s = second_tangent(&q3(), &Vector::zeros(3), &vector(&[1.0, 0.0, 1.0]), &tol()).unwrap();
        assert!(s.contains(&vector(&[0.0, 5.0, 1.0]), 1e-9) && !s.contains(&vector(&[1.0, 0.0, 0.5]), 1e-9));
        assert_eq!(
            second_tangent(&q3(), &vector(&[1.0, 0.0, 1.0]), &vector(&[1.0, 0.0, 0.0]), &tol()),
            Err(Error::NotTangent)
        );
    }

    #[test]
    fn d2_indicator_examples() {
        let v = d2_indicator(&ConvexSetSpec::nonpositive_orthant(2), &Vector::zeros(2), &vector(&[1.0, 0.0]), &vector(&[0.0, -1.0]), &tol()).unwrap();
        assert_eq!(v, ExtReal::zero());
        let y = vector(&[1.0, 0.0, 1.0]);
        let l = vector(&[1.0, 0.0, -1.0]);
        let v = d2_indicator(&q3(), &y, &l, &vector(&[1.0, 1.0, 1.0]), &tol()).unwrap();
        assert!(v.approx_eq(&ExtReal::Finite(1.0), 1e-12));
        let v = d2_indicator(&q3(), &y, &l, &vector(&[1.0, 0.0, 0.0]), &tol()).unwrap();
        assert_eq!(v, ExtReal::PosInf);
    }

    #[test]
    fn reduction_examples() {
        let id = ReductionData::new(
            Arc::new(PolynomialMap::identity(2)),
            ConvexSetSpec::nonpositive_orthant(2),
            Vector::zeros(2),
            &tol(),
        )
        .unwrap();
        let v = reduction_second_subderivative(&id, &vector(&[1.0, 0.0]), &vector(&[0.0, -1.0]), &tol()).unwrap();
        assert_eq!(v, ExtReal::zero());
        let v = reduction_second_subderivative(&id, &vector(&[1.0, 0.0]), &vector(&[-1.0, -1.0]), &tol()).unwrap();
        assert_eq!(v, ExtReal::PosInf);
        let y = vector(&[1.0, 0.0, 1.0]);
        let r = ReductionData::soc_boundary(&y, &tol()).unwrap();
        let v = reduction_second_subderivative(&r, &vector(&[1.0, 0.0, -1.0]), &vector(&[1.0, 1.0, 1.0]), &tol()).unwrap();
        assert!(v.approx_eq(&ExtReal::Finite(1.0), 1e-12));
        let degenerate = ReductionData::new(
            Arc::new(PolynomialMap::new(1, vec![Polynomial::new(vec![Monomial::new(1.0, &[2])])]).unwrap()),
            ConvexSetSpec::nonpositive_orthant(1),
            Vector::zeros(1),
            &tol(),
        );
        assert!(matches!(degenerate, Err(Error::RankDeficient(_))));
    }

    #[test]
    fn second_tangent_at_zero_direction_is_tangent_cone() {
        let y = vector(&[1.0, 0.0, 1.0]);
        let t = tangent_cone(&q3(), &y, &tol()).unwrap();
        let s = second_tangent(&q3(), &y, &Vector::zeros(3), &tol()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let z = Vector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            assert_eq!(t.contains(&z, 1e-9), s.contains(&z, 1e-9), "z = {z}");
        }
    }

    proptest! {
        #[test]
        fn polarity_by_lp(a in -1.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
            // Normals have zero support over the tangent cone; other vectors have +∞.
            for (theta, y) in [
                (q3(), vector(&[0.6, 0.8, 1.0])),
                (ConvexSetSpec::nonpositive_orthant(3), vector(&[0.0, -1.0, 0.0])),
            ] {
                let t = tangent_cone(&theta, &y, &tol()).unwrap();
                let n = normal_cone(&theta, &y, &tol()).unwrap();
                let v = vector(&[a, b, c]);
                let s = t.support(&v).unwrap();
                if n.contains(&v, 1e-9) {
                    prop_assert_eq!(s, ExtReal::zero());
                } else if n.set.violation(&v) > 1e-6 {
                    prop_assert_eq!(s, ExtReal::PosInf);
                }
            }
        }

        #[test]
        fn soc_closed_form_matches_reduction(u1 in -2.0f64..2.0, u2 in -2.0f64..2.0, s in 0.1f64..3.0, ang in 0.0f64..std::f64::consts::TAU) {
            let y = vector(&[ang.cos(), ang.sin(), 1.0]);
            let d = soc_boundary_normal(&y);
            let lam = &d * s;
            // Critical directions satisfy ⟨d, u⟩ = 0.
            let basis = orthogonal_complement(&d);
            let u = basis.column(0) * u1 + basis.column(1) * u2;
            let direct = d2_indicator(&q3(), &y, &lam, &u, &tol()).unwrap();
            let r = ReductionData::soc_boundary(&y, &tol()).unwrap();
            let via = reduction_second_subderivative(&r, &lam, &u, &tol()).unwrap();
            prop_assert!(direct.approx_eq(&via, 1e-9 * (1.0 + u.norm_squared() * s)));
            // Curvature vector reproduces the value, and it is nonnegative and 2-homogeneous.
            let c = curvature_vector(&q3(), &y, &u, &tol());
            prop_assert!((lam.dot(&c) - direct.to_f64()).abs() <= 1e-9 * (1.0 + direct.to_f64().abs()));
            prop_assert!(direct.to_f64() >= -1e-12);
            let twice = d2_indicator(&q3(), &y, &lam, &(&u * 2.0), &tol()).unwrap();
            prop_assert!((twice.to_f64() - 4.0 * direct.to_f64()).abs() <= 1e-9 * (1.0 + direct.to_f64().abs()));
            // Parabolic-regularity identity: d² = −σ_{T²}(λ).
            let t2 = second_tangent(&q3(), &y, &u, &tol()).unwrap();
            let sig = t2.support(&lam).unwrap();
            prop_assert!(direct.approx_eq(&sig.neg(), 1e-7 * (1.0 + direct.to_f64().abs())));
        }

        #[test]
        fn second_tangent_translation(z in prop::array::uniform3(-2.0f64..2.0), t in prop::array::uniform3(-2.0f64..2.0)) {
            let y = vector(&[1.0, 0.0, 1.0]);
            let u = vector(&[1.0, 1.0, 1.0]);
            let t2 = second_tangent(&q3(), &y, &u, &tol()).unwrap();
            let tc = tangent_cone(&q3(), &y, &tol()).unwrap();
            let z = vector(&z);
            let t = vector(&t);
            if t2.contains(&z, 1e-9) && tc.contains(&t, 1e-9) {
                prop_assert!(t2.contains(&(&z + &t), 1e-9));
            }
        }
    }

    #[test]
    fn cone_representations_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let theta = ConvexSetSpec::polyhedron(
            3,
            crate::numeric::matrix(&[&[1.0, 1.0, 0.0], &[0.0, 1.0, 1.0], &[1.0, -1.0, 0.5]], 3),
            Vector::zeros(3),
            Matrix::zeros(0, 3),
            Vector::zeros(0),
        )
        .unwrap();
        for cone in [
            tangent_cone(&theta, &Vector::zeros(3), &tol()).unwrap(),
            normal_cone(&theta, &Vector::zeros(3), &tol()).unwrap(),
        ] {
            let g = cone.generators.clone().unwrap();
            for _ in 0..100 {
                let mut w = Vector::zeros(3);
                for r in &g.rays {
                    w += r * rng.random_range(0.0..1.0);
                }
                for l in &g.lineality {
                    w += l * rng.random_range(-1.0..1.0);
                }
                assert!(cone.contains(&w, 1e-9));
            }
        }
    }
}
