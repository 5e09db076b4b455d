//! Graphical derivative of the normal-cone map of a constraint system and the
//! derivative of the metric projection onto a convex catalog set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::numeric::{vconcat, Matrix, TolerancePolicy, Vector};
use crate::sets::{
    classify_soc, critical_cone, normal_cone, orthogonal_complement, ConeRep, ConvexSetSpec, SocPoint,
};
use crate::subderivative::{dual_value, is_critical, D2Options};
use crate::system::{BasePoint, ConstraintSystem, MultiplierSet};

/// `DN_Θ(ȳ, λ)(u)`: empty, or `shift + cone`.
#[derive(Clone, Debug, PartialEq)]
pub enum DnSet {
    Empty { dim: usize },
    Affine { shift: Vector, cone: ConeRep },
}

impl DnSet {
    pub fn dim(&self) -> usize {
        match self {
            DnSet::Empty { dim } => *dim,
            DnSet::Affine { shift, .. } => shift.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, DnSet::Empty { .. })
    }

    pub fn contains(&self, q: &Vector, tol: f64) -> bool {
        match self {
            DnSet::Empty { .. } => false,
            DnSet::Affine { shift, cone } => cone.contains(&(q - shift), tol),
        }
    }
}

/// Normal cone of a polyhedral cone `{G w ≤ 0, M w = 0}` at one of its points.
fn polyhedral_cone_normal(k: &ConeRep, u: &Vector, tol: &TolerancePolicy) -> ConeRep {
    let dim = k.dim();
    let s = &k.set;
    let mut rays = Vec::new();
    for i in 0..s.ineq.nrows() {
        let a = s.ineq_row(i);
        if a.norm() > 0.0 && a.dot(u).abs() <= tol.cone_tol * (1.0 + a.norm() * u.norm()) {
            rays.push(&a / a.norm());
        }
    }
    let basis = crate::numeric::row_space(&s.eq, dim, 1e-12);
    let lineality = (0..basis.ncols()).map(|j| basis.column(j).into_owned()).collect();
    ConeRep::from_generators(crate::dd::Generators { dim, rays, lineality })
}

/// `DN_Θ(ȳ, λ)(u)`: the normal cone of `K_Θ(ȳ, λ)` at `u`, shifted at nonzero boundary
/// points of a second-order cone by `(‖λ‖/‖ȳ‖)(u', −u_m)`; empty for `u ∉ K_Θ(ȳ, λ)`.
pub fn dn_theta(theta: &ConvexSetSpec, y: &Vector, lambda: &Vector, u: &Vector, tol: &TolerancePolicy) -> Result<DnSet> {
    check_dim("graphical derivative direction", theta.dim(), u.len())?;
    let k = critical_cone(theta, y, lambda, tol)?;
    if !k.contains(u, tol.cone(u.norm())) {
        return Ok(DnSet::Empty { dim: theta.dim() });
    }
    if let ConvexSetSpec::Product(_) = theta {
        let mut shifts = Vec::new();
        let mut cones = Vec::new();
        let mut off = 0;
        for (s, p) in theta.split(y) {
            let d = s.dim();
            let part = dn_theta(s, &p, &lambda.rows(off, d).into_owned(), &u.rows(off, d).into_owned(), tol)?;
            match part {
                DnSet::Empty { .. } => return Ok(DnSet::Empty { dim: theta.dim() }),
                DnSet::Affine { shift, cone } => {
                    shifts.push(shift);
                    cones.push(cone);
                }
            }
            off += d;
        }
        return Ok(DnSet::Affine {
            shift: vconcat(&shifts.iter().collect::<Vec<_>>()),
            cone: ConeRep::product(&cones),
        });
    }
    let m = theta.dim();
    let mut shift = Vector::zeros(m);
    if let ConvexSetSpec::SecondOrderCone { .. } = theta {
        if classify_soc(y, tol.cone_tol) == SocPoint::Boundary {
            let s = lambda.norm() / y.norm();
            shift.copy_from(&(u * s));
            shift[m - 1] = -s * u[m - 1];
        }
    }
    let cone = if k.is_polyhedral() {
        polyhedral_cone_normal(&k, u, tol)
    } else {
        // The critical cone is the second-order cone itself.
        normal_cone(&ConvexSetSpec::SecondOrderCone { dim: m }, u, tol)?
    };
    Ok(DnSet::Affine { shift, cone })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GderMethod {
    UniqueMultiplierExact,
    FaceSampled,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GderAnswer {
    pub member: bool,
    /// Multiplier from `Λ(x̄, v̄, w)` realizing membership.
    pub lambda: Option<Vec<f64>>,
    /// Element of `DN_Θ(f(x̄), λ)(∇f(x̄)w)` with `q = ∇²⟨λ,f⟩(x̄)w + ∇f(x̄)*η`.
    pub eta: Option<Vec<f64>>,
    pub method: GderMethod,
    pub candidates: usize,
    pub reason: Option<String>,
}

const FACE_SAMPLES: usize = 20;

fn face_candidates(face: &MultiplierSet, point: Option<&Vector>, seed: u64) -> Result<Vec<Vector>> {
    let mut out: Vec<Vector> = point.into_iter().cloned().collect();
    let verts = face.vertices();
    out.extend(verts.iter().cloned());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match face {
        MultiplierSet::Ray {
            base,
            direction,
            lower,
            upper,
        } => {
            let hi = upper.unwrap_or(lower + 1.0 + base.norm() + lower.abs());
            for _ in 0..FACE_SAMPLES {
                let s = lower + (hi - lower) * rng.random::<f64>();
                out.push(base + direction * s);
            }
        }
        _ if verts.len() >= 2 => {
            for _ in 0..FACE_SAMPLES {
                let wts: Vec<f64> = verts.iter().map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
                let total: f64 = wts.iter().sum();
                let mut p = Vector::zeros(face.dim());
                for (v, c) in verts.iter().zip(&wts) {
                    p += v * (c / total);
                }
                out.push(p);
            }
        }
        _ => {
            if let Some(p) = face.min_norm()? {
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// Finds `η ∈ DN_Θ(f(x̄), λ)(∇f(x̄)w)` with `∇f(x̄)*η = q − ∇²⟨λ,f⟩(x̄)w`.
fn test_multiplier(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, q: &Vector, lambda: &Vector, tol: &TolerancePolicy) -> Result<Option<Vector>> {
    let jw = &bp.jac * w;
    let dn = match dn_theta(&cs.theta, &bp.fx, lambda, &jw, tol) {
        Ok(d) => d,
        Err(Error::NotANormal) => return Ok(None),
        Err(e) => return Err(e),
    };
    let DnSet::Affine { shift, cone } = dn else {
        return Ok(None);
    };
    let jt = bp.jac.transpose();
    let r = q - bp.hess.contract(lambda)? * w - &jt * &shift;
    let band = tol.eq(r.norm());
    let mut set = cone.set.clone();
    for i in 0..jt.nrows() {
        let row = jt.row(i).transpose();
        set.add_ineq(&row, r[i] + band);
        set.add_ineq(&(-&row), -r[i] + band);
    }
    Ok(set.feasible_point()?.map(|eta| eta + shift))
}

/// Membership of `q` in `DN_Ω(x̄, v̄)(w)` through the union over the multipliers that
/// attain the second subderivative at `w`.
pub fn dn_omega_membership(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, q: &Vector, seed: u64, tol: &TolerancePolicy) -> Result<GderAnswer> {
    check_dim("graphical derivative direction", cs.n(), w.len())?;
    check_dim("graphical derivative value", cs.n(), q.len())?;
    bp.require_feasible()?;
    if !is_critical(cs, bp, w, tol)? {
        return Ok(GderAnswer {
            member: false,
            lambda: None,
            eta: None,
            method: GderMethod::UniqueMultiplierExact,
            candidates: 0,
            reason: Some("empty: direction is not critical".into()),
        });
    }
    let d2 = dual_value(cs, bp, w, &D2Options::default(), tol)?;
    let Some(face) = d2.argmax else {
        return Ok(GderAnswer {
            member: false,
            lambda: None,
            eta: None,
            method: GderMethod::FaceSampled,
            candidates: 0,
            reason: Some("no maximizing multiplier".into()),
        });
    };
    let (method, candidates) = match &face {
        MultiplierSet::Singleton(l) => (GderMethod::UniqueMultiplierExact, vec![l.clone()]),
        _ => (GderMethod::FaceSampled, face_candidates(&face, d2.argmax_point.as_ref(), seed)?),
    };
    let results: Vec<Result<Option<Vector>>> = candidates.par_iter().map(|l| test_multiplier(cs, bp, w, q, l, tol)).collect();
    for (l, r) in candidates.iter().zip(results) {
        if let Some(eta) = r? {
            return Ok(GderAnswer {
                member: true,
                lambda: Some(l.as_slice().to_vec()),
                eta: Some(eta.as_slice().to_vec()),
                method,
                candidates: candidates.len(),
                reason: None,
            });
        }
    }
    Ok(GderAnswer {
        member: false,
        lambda: None,
        eta: None,
        method,
        candidates: candidates.len(),
        reason: Some("no tested multiplier admits a normal component".into()),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionDerivative {
    pub value: Vec<f64>,
    pub finite_difference: Vec<f64>,
    pub fd_error: f64,
}

fn projection_derivative_block(theta: &ConvexSetSpec, ubar: &Vector, w: &Vector, tol: &TolerancePolicy) -> Result<Vector> {
    if let ConvexSetSpec::Product(_) = theta {
        let mut parts = Vec::new();
        let mut off = 0;
        for (s, p) in theta.split(ubar) {
            let d = s.dim();
            parts.push(projection_derivative_block(s, &p, &w.rows(off, d).into_owned(), tol)?);
            off += d;
        }
        return Ok(vconcat(&parts.iter().collect::<Vec<_>>()));
    }
    let x = theta.project(ubar)?;
    let v = ubar - &x;
    if let ConvexSetSpec::SecondOrderCone { dim } = theta {
        if classify_soc(&x, tol.cone_tol) == SocPoint::Boundary && v.norm() > tol.cone(ubar.norm()) {
            // Resolvent of `z ↦ H z + N_K(z)` on the hyperplane `K = v^⊥`.
            let m = *dim;
            let s = v.norm() / x.norm();
            let mut h = Matrix::identity(m, m) * s;
            h[(m - 1, m - 1)] = -s;
            let b = orthogonal_complement(&(&v / v.norm()));
            let lhs = Matrix::identity(m - 1, m - 1) + b.transpose() * h * &b;
            let zeta = lhs.lu().solve(&(b.transpose() * w)).ok_or_else(|| Error::NumericalFailure("singular resolvent".into()))?;
            return Ok(b * zeta);
        }
    }
    critical_cone(theta, &x, &v, tol)?.project(w)
}

/// `DP_Ω(ū)(w) = (I + DN_Ω(x̄, v̄))⁻¹(w)` with `x̄ = P_Ω(ū)`, `v̄ = ū − x̄`, for
/// `Ω = {x : x ∈ Θ}`; cross-checked against a forward difference of the projection.
pub fn projection_derivative(cs: &ConstraintSystem, ubar: &Vector, w: &Vector, tol: &TolerancePolicy) -> Result<ProjectionDerivative> {
    check_dim("projection base", cs.n(), ubar.len())?;
    check_dim("projection direction", cs.n(), w.len())?;
    let n = cs.n();
    let identity = cs.m() == n
        && cs.f.polynomial().is_some_and(|p| p.degree() <= 1)
        && cs.f.value(&Vector::zeros(n)).norm() == 0.0
        && (cs.f.jacobian(&Vector::zeros(n)) - Matrix::identity(n, n)).norm() == 0.0;
    if !identity {
        return Err(Error::NonConvexUnsupported);
    }
    let value = projection_derivative_block(&cs.theta, ubar, w, tol)?;
    let h = 1e-7 * (1.0 + ubar.norm()) / (1.0 + w.norm());
    let p0 = cs.theta.project(ubar)?;
    let p1 = cs.theta.project(&(ubar + w * h))?;
    let fd = (p1 - p0) / h;
    Ok(ProjectionDerivative {
        fd_error: (&value - &fd).norm(),
        value: value.as_slice().to_vec(),
        finite_difference: fd.as_slice().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::vector;
    use crate::oracles::{gph_normal_tangent_sample, QuotientGrid};
    use crate::smooth::{Monomial, Polynomial, PolynomialMap};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    fn identity_system(theta: ConvexSetSpec) -> ConstraintSystem {
        ConstraintSystem::new(Arc::new(PolynomialMap::identity(theta.dim())), theta).unwrap()
    }

    fn parabola() -> (ConstraintSystem, BasePoint) {
        let f = PolynomialMap::new(
            2,
            vec![Polynomial::new(vec![Monomial::new(1.0, &[2, 0]), Monomial::new(-1.0, &[0, 1])])],
        )
        .unwrap();
        let cs = ConstraintSystem::new(Arc::new(f), ConvexSetSpec::nonpositive_orthant(1)).unwrap();
        let bp = BasePoint::new(&cs, Vector::zeros(2), vector(&[0.0, -1.0]), &tol()).unwrap();
        (cs, bp)
    }

    #[test]
    fn dn_theta_examples() {
        let o = ConvexSetSpec::nonpositive_orthant(2);
        let d = dn_theta(&o, &Vector::zeros(2), &vector(&[1.0, 0.0]), &vector(&[0.0, -1.0]), &tol()).unwrap();
        assert!(d.contains(&vector(&[7.0, 0.0]), 1e-9) && d.contains(&vector(&[-2.0, 0.0]), 1e-9));
        assert!(!d.contains(&vector(&[0.0, 1.0]), 1e-9));
        let q = ConvexSetSpec::soc(3).unwrap();
        let d = dn_theta(&q, &vector(&[1.0, 0.0, 1.0]), &vector(&[1.0, 0.0, -1.0]), &vector(&[1.0, 1.0, 1.0]), &tol()).unwrap();
        for s in [-2.0, 0.0, 3.0] {
            assert!(d.contains(&(vector(&[1.0, 1.0, -1.0]) + vector(&[1.0, 0.0, -1.0]) * s), 1e-9));
        }
        assert!(!d.contains(&vector(&[1.0, 1.0, 1.0]), 1e-9));
        let d = dn_theta(&o, &Vector::zeros(2), &vector(&[1.0, 0.0]), &vector(&[1.0, -1.0]), &tol()).unwrap();
        assert!(d.is_empty());
        assert_eq!(
            dn_theta(&o, &Vector::zeros(2), &vector(&[-1.0, 0.0]), &Vector::zeros(2), &tol()).unwrap_err(),
            Error::NotANormal
        );
    }

    #[test]
    fn membership_examples() {
        let cs = identity_system(ConvexSetSpec::nonpositive_orthant(2));
        let bp = BasePoint::new(&cs, Vector::zeros(2), vector(&[1.0, 0.0]), &tol()).unwrap();
        let a = dn_omega_membership(&cs, &bp, &vector(&[0.0, -1.0]), &vector(&[3.0, 0.0]), 0, &tol()).unwrap();
        assert!(a.member);
        assert_eq!(a.lambda, Some(vec![1.0, 0.0]));
        assert_eq!(a.method, GderMethod::UniqueMultiplierExact);
        assert!(!dn_omega_membership(&cs, &bp, &vector(&[0.0, -1.0]), &vector(&[0.0, 1.0]), 0, &tol()).unwrap().member);
        let off = dn_omega_membership(&cs, &bp, &vector(&[-1.0, 0.0]), &vector(&[0.0, 0.0]), 0, &tol()).unwrap();
        assert!(!off.member && off.reason.unwrap().starts_with("empty"));
        let (cs, bp) = parabola();
        assert!(dn_omega_membership(&cs, &bp, &vector(&[1.0, 0.0]), &vector(&[2.0, 5.0]), 0, &tol()).unwrap().member);
        assert!(!dn_omega_membership(&cs, &bp, &vector(&[1.0, 0.0]), &vector(&[1.0, 5.0]), 0, &tol()).unwrap().member);
        let w = dn_omega_membership(&cs, &bp, &vector(&[1.0, 0.0]), &vector(&[2.0, -4.0]), 0, &tol()).unwrap();
        let eta = w.eta.unwrap();
        assert!((eta[0] - 4.0).abs() < 1e-7);
    }

    #[test]
    fn degenerate_multipliers_use_face_sampling() {
        // Two copies of the same constraint: Λ is a segment.
        let f = PolynomialMap::new(
            1,
            vec![
                Polynomial::new(vec![Monomial::new(1.0, &[1])]),
                Polynomial::new(vec![Monomial::new(1.0, &[1])]),
            ],
        )
        .unwrap();
        let cs = ConstraintSystem::new(Arc::new(f), ConvexSetSpec::nonpositive_orthant(2)).unwrap();
        let bp = BasePoint::new(&cs, Vector::zeros(1), vector(&[1.0]), &tol()).unwrap();
        let a = dn_omega_membership(&cs, &bp, &vector(&[0.0]), &vector(&[5.0]), 3, &tol()).unwrap();
        assert!(a.member);
        assert_eq!(a.method, GderMethod::FaceSampled);
        assert!(dn_omega_membership(&cs, &bp, &vector(&[0.0]), &vector(&[-3.0]), 3, &tol()).unwrap().member);
        let off = dn_omega_membership(&cs, &bp, &vector(&[-1.0]), &vector(&[0.0]), 3, &tol()).unwrap();
        assert!(!off.member);
    }

    #[test]
    fn agrees_with_graph_oracle_on_orthant() {
        let cs = identity_system(ConvexSetSpec::nonpositive_orthant(2));
        let bp = BasePoint::new(&cs, Vector::zeros(2), vector(&[1.0, 0.0]), &tol()).unwrap();
        let g = QuotientGrid::default().with_samples(16).with_levels(7);
        for (w, q) in [([0.0, -1.0], [-2.0, 0.0]), ([0.0, 0.0], [1.0, 0.0]), ([0.0, 0.0], [0.0, -1.0]), ([0.0, -2.0], [1.0, 1.0])] {
            let (w, q) = (vector(&w), vector(&q));
            let exact = dn_omega_membership(&cs, &bp, &w, &q, 0, &tol()).unwrap().member;
            let oracle = gph_normal_tangent_sample(&cs, &bp, &w, &q, &g, &tol()).unwrap().member;
            assert_eq!(exact, oracle, "w={w:?} q={q:?}");
        }
    }

    #[test]
    fn projection_derivative_examples() {
        let cs = identity_system(ConvexSetSpec::nonpositive_orthant(2));
        let d = projection_derivative(&cs, &vector(&[1.0, -1.0]), &vector(&[3.0, -2.0]), &tol()).unwrap();
        assert_eq!(d.value, vec![0.0, -2.0]);
        let d = projection_derivative(&cs, &vector(&[-1.0, -1.0]), &vector(&[3.0, -2.0]), &tol()).unwrap();
        assert_eq!(d.value, vec![3.0, -2.0]);
        let q = identity_system(ConvexSetSpec::soc(3).unwrap());
        for w in [vector(&[1.0, 0.0, 1.0]), vector(&[0.0, 1.0, 0.0]), vector(&[0.3, -2.0, 1.1])] {
            let d = projection_derivative(&q, &vector(&[2.0, 0.0, 0.0]), &w, &tol()).unwrap();
            assert!(d.fd_error < 1e-4, "{d:?}");
        }
        let (p, _) = parabola();
        assert_eq!(projection_derivative(&p, &Vector::zeros(2), &Vector::zeros(2), &tol()).unwrap_err(), Error::NonConvexUnsupported);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn resolvent_decomposition_on_polyhedra(
            u in prop::collection::vec(-2.0f64..2.0, 3),
            w in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            let a = Matrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 0.0, 1.0, -1.0, -1.0, 0.0, 0.0]);
            let theta = ConvexSetSpec::polyhedron(3, a, vector(&[1.0, 0.5, 1.0]), Matrix::zeros(0, 3), Vector::zeros(0)).unwrap();
            let cs = identity_system(theta.clone());
            let (u, w) = (vector(&u), vector(&w));
            let d = projection_derivative(&cs, &u, &w, &tol()).unwrap();
            let dp = Vector::from_vec(d.value.clone());
            // w − DP(w) lies in DN(x̄, v̄)(DP(w)).
            let x = theta.project(&u).unwrap();
            let v = &u - &x;
            let dn = dn_theta(&theta, &x, &v, &dp, &tol()).unwrap();
            prop_assert!(dn.contains(&(&w - &dp), 1e-7));
            prop_assert!(d.fd_error < 1e-5, "{:?}", d);
        }

        #[test]
        fn soc_projection_derivative_matches_differences(
            u in prop::collection::vec(-2.0f64..2.0, 3),
            w in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            let u = vector(&u);
            let up = u.rows(0, 2).norm();
            prop_assume!((up - u[2].abs()).abs() > 1e-2 && up > 1e-2);
            let cs = identity_system(ConvexSetSpec::soc(3).unwrap());
            let d = projection_derivative(&cs, &u, &vector(&w), &tol()).unwrap();
            prop_assert!(d.fd_error < 1e-4, "{:?}", d);
        }
    }
}
