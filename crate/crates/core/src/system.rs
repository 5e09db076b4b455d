//! Constraint systems `Ω = {x : f(x) ∈ Θ}` at a base pair `(x̄, v̄)`: first- and
//! second-order chain rules, the perturbed maps `S_w`, multiplier sets and
//! constraint-qualification diagnostics.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::conic::{AffineConicSet, ConicOutcome};
use crate::dd::polyhedron_generators;
use crate::error::{check_dim, Error, Result};
use crate::numeric::{BilinearMap, ExtReal, Matrix, TolerancePolicy, Vector};
use crate::qp::nnls;
use crate::sets::{
    classify_soc, critical_cone, normal_cone, normal_generators, second_tangent, soc_boundary_normal, tangent_cone, ConeRep, ConvexSetSpec,
    SecondTangentRep, SocPoint,
};
use crate::smooth::{HessianSource, SmoothMap};

#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub f: Arc<dyn SmoothMap>,
    pub theta: ConvexSetSpec,
}

impl ConstraintSystem {
    pub fn new(f: Arc<dyn SmoothMap>, theta: ConvexSetSpec) -> Result<Self> {
        check_dim("constraint map output vs. target set", theta.dim(), f.output_dim())?;
        Ok(Self { f, theta })
    }

    pub fn n(&self) -> usize {
        self.f.input_dim()
    }

    pub fn m(&self) -> usize {
        self.f.output_dim()
    }

    /// `dist(f(x); Θ)`.
    pub fn residual(&self, x: &Vector) -> Result<f64> {
        self.theta.dist(&self.f.value(x))
    }

    /// Projection onto `Ω` from `z`, by iterating projections onto linearizations of `Ω`.
    /// Fixed points satisfy the first-order optimality conditions of the projection problem.
    pub fn project_omega(&self, z: &Vector) -> Result<Vector> {
        check_dim("projection onto the constraint set", self.n(), z.len())?;
        let n = self.n();
        let theta = self.theta.as_conic();
        let tol = TolerancePolicy::default();
        let affine = self.f.polynomial().is_some_and(|p| p.degree() <= 1);
        let mut x = z.clone();
        let mut lambda = Vector::zeros(self.m());
        let mut penalty = 1.0;
        for _ in 0..200 {
            let fx = self.f.value(&x);
            let j = self.f.jacobian(&x);
            // Metric of the quadratic model: identity plus the constraint curvature at the
            // current multiplier estimate, with eigenvalues clamped away from zero.
            let mut metric = Matrix::identity(n, n);
            if lambda.norm() > 0.0 {
                metric += self.f.hessian(&x).contract(&lambda)?;
            }
            let eig = metric.symmetric_eigen();
            let scale = eig.eigenvalues.map(|e| 1.0 / e.max(1e-2).sqrt());
            let s = &eig.eigenvectors * Matrix::from_diagonal(&scale);
            // y − x = S y′ turns the model into a Euclidean projection of −Sᵀ(x − z).
            let js = &j * &s;
            let lin = theta.pullback(&js, &fx)?;
            let yp = match lin.project(&(-(s.transpose() * (&x - z)))) {
                Ok(p) => p,
                Err(Error::EmptySet) => return Err(Error::InfeasiblePoint(self.residual(&x)?)),
                Err(e) => return Err(e),
            };
            let d = &s * &yp;
            if affine {
                return Ok(&x + d);
            }
            let g = &yp + s.transpose() * (&x - z);
            lambda = self.model_multiplier(&(&fx + &j * &d), &(&j * &s), &(-g), &tol);
            penalty = f64::max(penalty, 2.0 * lambda.norm() + 1.0);
            let merit = |y: &Vector| 0.5 * (y - z).norm_squared() + penalty * self.theta.residual(&self.f.value(y));
            let base = merit(&x);
            let mut alpha = 1.0;
            let mut next = &x + &d;
            while alpha > 1e-3 {
                let trial = &x + &d * alpha;
                if merit(&trial) < base || self.theta.residual(&self.f.value(&trial)) <= 1e-14 * (1.0 + fx.norm()) || d.norm() * alpha <= 1e-14 * (1.0 + z.norm()) {
                    next = trial;
                    break;
                }
                alpha *= 0.5;
                next = trial;
            }
            let step = (&next - &x).norm();
            x = next;
            if step <= 1e-15 * (1.0 + z.norm()) {
                break;
            }
        }
        Ok(x)
    }

    /// Multiplier `λ ∈ N_Θ(y)` of a linearized model with `Aᵀλ ≈ r`, `y` the linearized value.
    fn model_multiplier(&self, y: &Vector, a: &Matrix, r: &Vector, tol: &TolerancePolicy) -> Vector {
        let m = self.m();
        let Ok(snap) = self.theta.project(y) else {
            return Vector::zeros(m);
        };
        let Ok(gens) = normal_generators(&self.theta, &snap, tol) else {
            return Vector::zeros(m);
        };
        if gens.is_trivial() {
            return Vector::zeros(m);
        }
        let g = gens.matrix();
        let free: Vec<bool> = (0..gens.rays.len()).map(|_| false).chain((0..gens.lineality.len()).map(|_| true)).collect();
        let mu = nnls(&(a.transpose() * &g), r, &free);
        g * mu
    }

    pub fn dist_omega(&self, z: &Vector) -> Result<f64> {
        Ok((z - self.project_omega(z)?).norm())
    }
}

/// A base pair with its derivative data cached at construction.
#[derive(Clone, Debug)]
pub struct BasePoint {
    pub x: Vector,
    pub v: Vector,
    /// `f(x̄)` snapped onto `Θ`.
    pub fx: Vector,
    pub jac: Matrix,
    pub hess: BilinearMap,
    pub feasible: bool,
    pub residual: f64,
    pub hessian_source: HessianSource,
}

impl BasePoint {
    pub fn new(cs: &ConstraintSystem, x: Vector, v: Vector, tol: &TolerancePolicy) -> Result<Self> {
        check_dim("base point", cs.n(), x.len())?;
        check_dim("base normal", cs.n(), v.len())?;
        let raw = cs.f.value(&x);
        let (fx, residual) = match cs.theta.project(&raw) {
            Ok(p) => {
                let d = (&raw - &p).norm();
                (p, d)
            }
            Err(Error::EmptySet) => (raw.clone(), f64::INFINITY),
            Err(e) => return Err(e),
        };
        let feasible = residual <= tol.cone(raw.norm());
        Ok(Self {
            jac: cs.f.jacobian(&x),
            hess: cs.f.hessian(&x),
            hessian_source: cs.f.hessian_source(),
            fx: if feasible { fx } else { raw },
            x,
            v,
            feasible,
            residual,
        })
    }

    pub fn require_feasible(&self) -> Result<()> {
        if self.feasible {
            Ok(())
        } else {
            Err(Error::InfeasiblePoint(self.residual))
        }
    }

    /// `∇²f(x̄)(w, w)`.
    pub fn quad(&self, w: &Vector) -> Result<Vector> {
        self.hess.apply(w, w)
    }
}

/// `T_Ω(x̄) = {w : ∇f(x̄) w ∈ T_Θ(f(x̄))}`.
pub fn tangent_cone_omega(cs: &ConstraintSystem, bp: &BasePoint, tol: &TolerancePolicy) -> Result<ConeRep> {
    bp.require_feasible()?;
    tangent_cone(&cs.theta, &bp.fx, tol)?.pullback(&bp.jac)
}

/// `K_Ω(x̄, v̄) = T_Ω(x̄) ∩ {v̄}^⊥`.
pub fn critical_cone_omega(cs: &ConstraintSystem, bp: &BasePoint, tol: &TolerancePolicy) -> Result<ConeRep> {
    let t = tangent_cone_omega(cs, bp, tol)?;
    if bp.v.norm() <= tol.cone_tol {
        return Ok(t);
    }
    let k = t.with_orthogonal(&bp.v);
    if k.is_polyhedral() {
        return Ok(k);
    }
    // Any multiplier λ gives K_Ω = {w : ∇f(x̄)w ∈ K_Θ(f(x̄), λ)}, often with a polyhedral description.
    match multiplier_set(cs, bp, tol)?.min_norm()? {
        Some(lambda) => match critical_cone(&cs.theta, &bp.fx, &lambda, tol) {
            Ok(kt) => kt.pullback(&bp.jac),
            Err(Error::NotANormal) => Ok(k),
            Err(e) => Err(e),
        },
        None => Ok(k),
    }
}

/// `N_Ω(x̄) = ∇f(x̄)* N_Θ(f(x̄))` as a membership test.
pub fn in_normal_cone_omega(cs: &ConstraintSystem, bp: &BasePoint, v: &Vector, tol: &TolerancePolicy) -> Result<bool> {
    bp.require_feasible()?;
    let n = normal_cone(&cs.theta, &bp.fx, tol)?;
    let jt = bp.jac.transpose();
    // The equalities are relaxed to a band so that tolerance-level inconsistencies pass.
    let band = tol.eq(v.norm()) * 10.0;
    let mut relaxed = n.set.clone();
    for i in 0..cs.n() {
        let r = jt.row(i).transpose();
        relaxed.add_ineq(&r, v[i] + band);
        relaxed.add_ineq(&(-&r), -v[i] + band);
    }
    relaxed.is_feasible()
}

/// `Λ(x̄, v̄) = {λ ∈ N_Θ(f(x̄)) : ∇f(x̄)* λ = v̄}`.
#[derive(Clone, Debug, PartialEq)]
pub enum MultiplierSet {
    Empty { dim: usize },
    Singleton(Vector),
    /// `{base + s·direction : s ∈ [lower, upper]}`; `upper = None` means unbounded.
    Ray {
        base: Vector,
        direction: Vector,
        lower: f64,
        upper: Option<f64>,
    },
    /// A slice of the normal cone by the affine equations, kept in `λ`-space.
    Slice(AffineConicSet),
}

impl MultiplierSet {
    pub fn dim(&self) -> usize {
        match self {
            MultiplierSet::Empty { dim } => *dim,
            MultiplierSet::Singleton(l) => l.len(),
            MultiplierSet::Ray { base, .. } => base.len(),
            MultiplierSet::Slice(s) => s.dim,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, MultiplierSet::Empty { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MultiplierSet::Empty { .. } => "empty",
            MultiplierSet::Singleton(_) => "singleton",
            MultiplierSet::Ray { .. } => "ray",
            MultiplierSet::Slice(s) if s.is_polyhedral() => "polyhedral-slice",
            MultiplierSet::Slice(_) => "conic-slice",
        }
    }

    pub fn as_set(&self) -> AffineConicSet {
        match self {
            MultiplierSet::Empty { dim } => AffineConicSet::empty(*dim),
            MultiplierSet::Singleton(l) => {
                let m = l.len();
                AffineConicSet::polyhedron_in(m, Matrix::zeros(0, m), Vector::zeros(0), Matrix::identity(m, m), l.clone())
            }
            MultiplierSet::Ray {
                base,
                direction,
                lower,
                upper,
            } => {
                let m = base.len();
                let comp = crate::sets::orthogonal_complement(direction);
                let mut s = AffineConicSet::full(m);
                for j in 0..comp.ncols() {
                    let c = comp.column(j).into_owned();
                    s.add_eq(&c, c.dot(base));
                }
                let d2 = direction.norm_squared();
                s.add_ineq(&(-direction), -(direction.dot(base) + lower * d2));
                if let Some(u) = upper {
                    s.add_ineq(direction, direction.dot(base) + u * d2);
                }
                s
            }
            MultiplierSet::Slice(s) => s.clone(),
        }
    }

    pub fn contains(&self, lambda: &Vector, tol: f64) -> bool {
        self.as_set().contains(lambda, tol)
    }

    /// `sup ⟨c, λ⟩` over the set with a maximizer when attained.
    pub fn maximize(&self, c: &Vector) -> Result<(ExtReal, Option<Vector>)> {
        match self {
            MultiplierSet::Empty { .. } => Ok((ExtReal::NegInf, None)),
            MultiplierSet::Singleton(l) => Ok((ExtReal::Finite(c.dot(l)), Some(l.clone()))),
            MultiplierSet::Ray {
                base,
                direction,
                lower,
                upper,
            } => {
                let slope = c.dot(direction);
                let at = |s: f64| base + direction * s;
                if slope < 0.0 || slope.abs() <= 1e-14 * (1.0 + c.norm() * direction.norm()) {
                    Ok((ExtReal::Finite(c.dot(&at(*lower))), Some(at(*lower))))
                } else {
                    match upper {
                        Some(u) => Ok((ExtReal::Finite(c.dot(&at(*u))), Some(at(*u)))),
                        None => Ok((ExtReal::PosInf, None)),
                    }
                }
            }
            MultiplierSet::Slice(s) => match s.minimize(&(-c))? {
                ConicOutcome::Optimal { x, value } => Ok((ExtReal::Finite(-value), Some(x))),
                ConicOutcome::Unbounded => Ok((ExtReal::PosInf, None)),
                ConicOutcome::Infeasible => Ok((ExtReal::NegInf, None)),
            },
        }
    }

    /// The face `{λ ∈ Λ : ⟨c, λ⟩ = value}` of maximizers.
    pub fn face(&self, c: &Vector, value: f64) -> MultiplierSet {
        match self {
            MultiplierSet::Empty { .. } | MultiplierSet::Singleton(_) => self.clone(),
            MultiplierSet::Ray {
                base,
                direction,
                lower,
                upper,
            } => {
                let slope = c.dot(direction);
                if slope.abs() <= 1e-14 * (1.0 + c.norm() * direction.norm()) {
                    self.clone()
                } else {
                    let s = if slope < 0.0 { *lower } else { upper.unwrap_or(*lower) };
                    MultiplierSet::Singleton(base + direction * s)
                }
            }
            MultiplierSet::Slice(s) => {
                let mut f = s.clone();
                f.add_eq(c, value);
                MultiplierSet::Slice(f)
            }
        }
    }

    /// Minimum-norm element.
    pub fn min_norm(&self) -> Result<Option<Vector>> {
        match self {
            MultiplierSet::Empty { .. } => Ok(None),
            MultiplierSet::Singleton(l) => Ok(Some(l.clone())),
            _ => {
                let s = self.as_set();
                match s.project(&Vector::zeros(s.dim)) {
                    Ok(p) => Ok(Some(p)),
                    Err(Error::EmptySet) => Ok(None),
                    Err(e) => Err(e),
                }
            }
        }
    }

    /// Extreme points of a bounded polyhedral multiplier set (empty list otherwise).
    pub fn vertices(&self) -> Vec<Vector> {
        match self {
            MultiplierSet::Empty { .. } => vec![],
            MultiplierSet::Singleton(l) => vec![l.clone()],
            MultiplierSet::Ray {
                base,
                direction,
                lower,
                upper,
            } => {
                let mut v = vec![base + direction * *lower];
                if let Some(u) = upper {
                    v.push(base + direction * *u);
                }
                v
            }
            MultiplierSet::Slice(s) if s.is_polyhedral() => {
                polyhedron_generators(&s.ineq, &s.ineq_rhs, &s.eq, &s.eq_rhs, s.dim).vertices
            }
            MultiplierSet::Slice(_) => vec![],
        }
    }
}

/// Exact description of `Λ(x̄, v̄)`; `Empty` when the system is inconsistent.
pub fn multiplier_set(cs: &ConstraintSystem, bp: &BasePoint, tol: &TolerancePolicy) -> Result<MultiplierSet> {
    bp.require_feasible()?;
    let m = cs.m();
    let jt = bp.jac.transpose();
    if let ConvexSetSpec::SecondOrderCone { .. } = cs.theta {
        if classify_soc(&bp.fx, tol.cone_tol) == SocPoint::Boundary {
            let d = soc_boundary_normal(&bp.fx);
            let g = &jt * &d;
            let gg = g.norm_squared();
            if gg <= 1e-24 {
                if bp.v.norm() <= tol.eq(1.0) {
                    return Ok(MultiplierSet::Ray {
                        base: Vector::zeros(m),
                        direction: d,
                        lower: 0.0,
                        upper: None,
                    });
                }
                return Ok(MultiplierSet::Empty { dim: m });
            }
            let s = g.dot(&bp.v) / gg;
            let resid = (&g * s - &bp.v).norm();
            if s < -tol.cone_tol || resid > tol.eq(bp.v.norm()) * 10.0 {
                return Ok(MultiplierSet::Empty { dim: m });
            }
            return Ok(MultiplierSet::Singleton(&d * s.max(0.0)));
        }
    }
    let n = normal_cone(&cs.theta, &bp.fx, tol)?;
    let mut set = n.set.clone();
    for i in 0..cs.n() {
        set.add_eq(&jt.row(i).transpose(), bp.v[i]);
    }
    // A point with the equations met to tolerance decides emptiness robustly.
    let Some(p) = set.feasible_point()? else {
        return Ok(MultiplierSet::Empty { dim: m });
    };
    if (&jt * &p - &bp.v).norm() > tol.eq(bp.v.norm()) * 1e3 {
        return Ok(MultiplierSet::Empty { dim: m });
    }
    // Singleton when the slice has zero width in every coordinate.
    let mut width: f64 = 0.0;
    for i in 0..m {
        let e = crate::numeric::unit(m, i);
        let hi = set.support(&e)?;
        let lo = set.support(&(-&e))?.neg();
        match (hi, lo) {
            (ExtReal::Finite(h), ExtReal::Finite(l)) => width = width.max(h - l),
            _ => width = f64::INFINITY,
        }
    }
    if width <= tol.eq(p.norm()) * 10.0 {
        return Ok(MultiplierSet::Singleton(p));
    }
    Ok(MultiplierSet::Slice(set))
}

/// `T²_Ω(x̄, w) = {u : ∇f(x̄) u + ∇²f(x̄)(w, w) ∈ T²_Θ(f(x̄), ∇f(x̄) w)}`.
pub fn second_tangent_omega(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, tol: &TolerancePolicy) -> Result<SecondTangentRep> {
    s_w_map(cs, bp, w, &Vector::zeros(cs.m()), tol)
}

/// `S_w(p) = {u : ∇f(x̄) u + ∇²f(x̄)(w, w) + p ∈ T²_Θ(f(x̄), ∇f(x̄) w)}`.
pub fn s_w_map(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, p: &Vector, tol: &TolerancePolicy) -> Result<SecondTangentRep> {
    bp.require_feasible()?;
    check_dim("direction", cs.n(), w.len())?;
    check_dim("perturbation", cs.m(), p.len())?;
    let jw = &bp.jac * w;
    let t2 = second_tangent(&cs.theta, &bp.fx, &jw, tol)?;
    t2.pullback(&bp.jac, &(bp.quad(w)? + p))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CqDiagnostics {
    pub mrcq: bool,
    /// Sampled modulus of metric subregularity; `+inf` when the ratio blows up.
    pub mscq_estimate: ExtReal,
    /// Largest ratio at each sampling radius.
    pub ratios: Vec<(f64, f64)>,
}

/// `N_Θ(f(x̄)) ∩ ker ∇f(x̄)* = {0}`.
pub fn mrcq(cs: &ConstraintSystem, bp: &BasePoint, tol: &TolerancePolicy) -> Result<bool> {
    bp.require_feasible()?;
    let n = normal_cone(&cs.theta, &bp.fx, tol)?;
    let mut set = n.set.clone();
    let jt = bp.jac.transpose();
    for i in 0..cs.n() {
        set.add_eq(&jt.row(i).transpose(), 0.0);
    }
    let cone = if set.is_polyhedral() {
        ConeRep::from_halfspaces(set.dim, set.ineq, set.eq)
    } else {
        ConeRep {
            set,
            generators: None,
        }
    };
    cone.is_trivial()
}

/// Basic qualification condition exactly, and the subregularity modulus by sampling
/// `dist(x; Ω) / dist(f(x); Θ)` at radii `1e-1 … 1e-8`.
pub fn cq_diagnostics(cs: &ConstraintSystem, bp: &BasePoint, tol: &TolerancePolicy, seed: u64) -> Result<CqDiagnostics> {
    let mrcq = mrcq(cs, bp, tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cs.n();
    let mut ratios = Vec::new();
    for k in 1..=8 {
        let r = 10f64.powi(-k);
        let mut worst: f64 = 0.0;
        for _ in 0..12 {
            let mut d = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let dn = d.norm();
            if dn == 0.0 {
                continue;
            }
            d /= dn;
            let x = &bp.x + d * (r * rng.random_range(0.5..1.0));
            let res = cs.residual(&x)?;
            if res <= 1e-300 {
                continue;
            }
            let dx = cs.dist_omega(&x)?;
            worst = worst.max(dx / res);
        }
        ratios.push((r, worst));
    }
    let last: Vec<f64> = ratios.iter().rev().take(3).map(|p| p.1).collect();
    let growing = last[0] > last[1] && last[1] > last[2];
    let mscq_estimate = if last[0] > 1e6 && growing {
        ExtReal::PosInf
    } else {
        ExtReal::Finite(ratios.iter().map(|p| p.1).fold(0.0, f64::max))
    };
    Ok(CqDiagnostics {
        mrcq,
        mscq_estimate,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::vector;
    use crate::smooth::{Monomial, Polynomial, PolynomialMap};

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    pub(crate) fn parabola(c: f64) -> ConstraintSystem {
        let _ = c;
        let f = PolynomialMap::new(
            2,
            vec![Polynomial::new(vec![Monomial::new(1.0, &[2, 0]), Monomial::new(-1.0, &[0, 1])])],
        )
        .unwrap();
        ConstraintSystem::new(Arc::new(f), ConvexSetSpec::nonpositive_orthant(1)).unwrap()
    }

    fn bp(cs: &ConstraintSystem, x: &[f64], v: &[f64]) -> BasePoint {
        BasePoint::new(cs, vector(x), vector(v), &tol()).unwrap()
    }

    fn identity(theta: ConvexSetSpec) -> ConstraintSystem {
        let n = theta.dim();
        ConstraintSystem::new(Arc::new(PolynomialMap::identity(n)), theta).unwrap()
    }

    fn diagonal() -> ConstraintSystem {
        let f = PolynomialMap::new(1, vec![Polynomial::coordinate(1, 0), Polynomial::coordinate(1, 0)]).unwrap();
        ConstraintSystem::new(Arc::new(f), ConvexSetSpec::nonpositive_orthant(2)).unwrap()
    }

    #[test]
    fn tangent_examples() {
        let cs = identity(ConvexSetSpec::nonpositive_orthant(2));
        let t = tangent_cone_omega(&cs, &bp(&cs, &[0.0, 0.0], &[1.0, 0.0]), &tol()).unwrap();
        assert!(t.contains(&vector(&[-1.0, -1.0]), 1e-9) && !t.contains(&vector(&[0.5, -1.0]), 1e-9));
        let cs = parabola(0.0);
        let t = tangent_cone_omega(&cs, &bp(&cs, &[0.0, 0.0], &[0.0, -1.0]), &tol()).unwrap();
        assert!(t.contains(&vector(&[5.0, 0.0]), 1e-9) && !t.contains(&vector(&[0.0, -1.0]), 1e-9));
        let cs = identity(ConvexSetSpec::soc(3).unwrap());
        let t = tangent_cone_omega(&cs, &bp(&cs, &[1.0, 0.0, 1.0], &[1.0, 0.0, -1.0]), &tol()).unwrap();
        assert!(t.contains(&vector(&[1.0, 9.0, 1.0]), 1e-9) && !t.contains(&vector(&[1.0, 0.0, 0.5]), 1e-9));
        let bad = BasePoint::new(&cs, vector(&[1.0, 0.0, 0.0]), vector(&[0.0, 0.0, 0.0]), &tol()).unwrap();
        assert!(matches!(tangent_cone_omega(&cs, &bad, &tol()), Err(Error::InfeasiblePoint(_))));
    }

    #[test]
    fn multiplier_examples() {
        let cs = parabola(0.0);
        let m = multiplier_set(&cs, &bp(&cs, &[0.0, 0.0], &[0.0, -1.0]), &tol()).unwrap();
        match m {
            MultiplierSet::Singleton(l) => assert!((l[0] - 1.0).abs() < 1e-12),
            other => panic!("expected singleton, found {other:?}"),
        }
        let cs = diagonal();
        let m = multiplier_set(&cs, &bp(&cs, &[0.0], &[1.0]), &tol()).unwrap();
        assert_eq!(m.kind(), "polyhedral-slice");
        let mut v = m.vertices();
        v.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(v.len(), 2);
        assert!((&v[0] - vector(&[0.0, 1.0])).norm() < 1e-9 && (&v[1] - vector(&[1.0, 0.0])).norm() < 1e-9);
        assert!(m.contains(&vector(&[0.3, 0.7]), 1e-9));
        let m = multiplier_set(&cs, &bp(&cs, &[0.0], &[-1.0]), &tol()).unwrap();
        assert!(m.is_empty());
        let cs = identity(ConvexSetSpec::soc(3).unwrap());
        let m = multiplier_set(&cs, &bp(&cs, &[1.0, 0.0, 1.0], &[1.0, 0.0, -1.0]), &tol()).unwrap();
        assert_eq!(m, MultiplierSet::Singleton(vector(&[1.0, 0.0, -1.0])));
    }

    #[test]
    fn second_tangent_examples() {
        let cs = parabola(0.0);
        let b = bp(&cs, &[0.0, 0.0], &[0.0, -1.0]);
        let t2 = second_tangent_omega(&cs, &b, &vector(&[1.0, 0.0]), &tol()).unwrap();
        assert!(t2.contains(&vector(&[7.0, 2.0]), 1e-9) && !t2.contains(&vector(&[0.0, 1.9]), 1e-9));
        let s = s_w_map(&cs, &b, &vector(&[1.0, 0.0]), &vector(&[1.0]), &tol()).unwrap();
        assert!(s.contains(&vector(&[0.0, 3.0]), 1e-9) && !s.contains(&vector(&[0.0, 2.9]), 1e-9));
        let s = s_w_map(&cs, &b, &vector(&[1.0, 0.0]), &vector(&[-2.0]), &tol()).unwrap();
        assert!(s.contains(&vector(&[0.0, 0.0]), 1e-9) && !s.contains(&vector(&[0.0, -0.1]), 1e-9));
        let t = tangent_cone_omega(&cs, &b, &tol()).unwrap();
        let t20 = second_tangent_omega(&cs, &b, &Vector::zeros(2), &tol()).unwrap();
        for z in [vector(&[1.0, 0.0]), vector(&[0.0, -1.0]), vector(&[-3.0, 2.0])] {
            assert_eq!(t.contains(&z, 1e-9), t20.contains(&z, 1e-9));
        }
        assert_eq!(second_tangent_omega(&cs, &b, &vector(&[0.0, -1.0]), &tol()), Err(Error::NotTangent));
    }

    #[test]
    fn cq_examples() {
        let cs = identity(ConvexSetSpec::nonpositive_orthant(2));
        let d = cq_diagnostics(&cs, &bp(&cs, &[0.0, 0.0], &[1.0, 0.0]), &tol(), 1).unwrap();
        assert!(d.mrcq);
        assert!(d.mscq_estimate.approx_eq(&ExtReal::Finite(1.0), 1e-6), "{:?}", d);
        let f = PolynomialMap::new(1, vec![Polynomial::new(vec![Monomial::new(1.0, &[2])])]).unwrap();
        let cs = ConstraintSystem::new(Arc::new(f), ConvexSetSpec::origin(1)).unwrap();
        let d = cq_diagnostics(&cs, &bp(&cs, &[0.0], &[0.0]), &tol(), 1).unwrap();
        assert!(!d.mrcq);
        assert_eq!(d.mscq_estimate, ExtReal::PosInf, "{:?}", d.ratios);
        let cs = parabola(0.0);
        assert!(mrcq(&cs, &bp(&cs, &[0.0, 0.0], &[0.0, -1.0]), &tol()).unwrap());
    }

    #[test]
    fn projection_onto_parabola_region() {
        let cs = parabola(0.0);
        let p = cs.project_omega(&vector(&[1.0, 0.0])).unwrap();
        assert!(cs.residual(&p).unwrap() < 1e-12);
        // Optimality: z − p is normal to the boundary x₂ = x₁².
        let g = vector(&[2.0 * p[0], -1.0]);
        let r = vector(&[1.0, 0.0]) - &p;
        assert!((r[0] * g[1] - r[1] * g[0]).abs() < 1e-9);
    }

    #[test]
    fn critical_cone_equivalence() {
        let cs = identity(ConvexSetSpec::soc(3).unwrap());
        let b = bp(&cs, &[1.0, 0.0, 1.0], &[1.0, 0.0, -1.0]);
        let k = critical_cone_omega(&cs, &b, &tol()).unwrap();
        let lam = vector(&[1.0, 0.0, -1.0]);
        let kt = crate::sets::critical_cone(&cs.theta, &b.fx, &lam, &tol()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let mut w = Vector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            if rng.random_bool(0.5) {
                w[2] = w[0];
            }
            assert_eq!(k.contains(&w, 1e-9), kt.contains(&(&b.jac * &w), 1e-9));
        }
    }

    #[test]
    fn outer_lipschitz_on_parabola() {
        let cs = parabola(0.0);
        let b = bp(&cs, &[0.0, 0.0], &[0.0, -1.0]);
        let w = vector(&[1.0, 0.0]);
        let s0 = second_tangent_omega(&cs, &b, &w, &tol()).unwrap().as_set();
        let kappa = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let p = vector(&[rng.random_range(-1.0..1.0)]);
            let sp = s_w_map(&cs, &b, &w, &p, &tol()).unwrap().as_set();
            // The boundary point on the u₂ axis is the unique vertex-like point of S_w(p).
            let u = sp.project(&Vector::zeros(2)).unwrap();
            assert!(s0.dist(&u).unwrap() <= kappa * p.norm() + 1e-9);
        }
    }
}
