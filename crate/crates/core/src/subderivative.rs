//! Second subderivative of the indicator of a constraint system through its primal
//! (linear-conic) and dual (multiplier) programs, and the intersection rule.

use std::sync::Arc;

use serde::Serialize;

use crate::conic::{AffineConicSet, ConicOutcome, LorentzBlock};
use crate::error::{Error, Result};
use crate::numeric::{ExtReal, Matrix, TolerancePolicy, Vector};
use crate::sets::{curvature_vector, d2_indicator, second_tangent, ConvexSetSpec, SecondTangentRep};
use crate::smooth::PolynomialMap;
use crate::system::{critical_cone_omega, multiplier_set, s_w_map, BasePoint, ConstraintSystem, MultiplierSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Certificate {
    /// Primal and dual values agree within `lp_tol`.
    Exact,
    Approximate { gap: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct D2Value {
    pub value: ExtReal,
    /// The face of maximizing multipliers; `None` off the critical cone.
    pub argmax: Option<MultiplierSet>,
    /// One maximizer.
    pub argmax_point: Option<Vector>,
    pub certificate: Certificate,
    pub primal: Option<ExtReal>,
}

/// `ϑ(p) = inf {−⟨v̄, u⟩ : u ∈ S_w(p)}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationValue {
    pub p: Vector,
    pub value: ExtReal,
    pub attaining_u: Option<Vector>,
}

/// Restriction of the multiplier set to a ball, when requested.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct D2Options {
    pub radius: Option<f64>,
}

fn require_critical(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, tol: &TolerancePolicy) -> Result<()> {
    let k = critical_cone_omega(cs, bp, tol)?;
    if k.contains(w, tol.cone_tol) {
        Ok(())
    } else {
        Err(Error::NotCritical)
    }
}

pub fn is_critical(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, tol: &TolerancePolicy) -> Result<bool> {
    Ok(critical_cone_omega(cs, bp, tol)?.contains(w, tol.cone_tol))
}

/// Value function `ϑ(p)` of the perturbed primal program.
pub fn perturbation_value(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, p: &Vector, tol: &TolerancePolicy) -> Result<PerturbationValue> {
    require_critical(cs, bp, w, tol)?;
    let s = s_w_map(cs, bp, w, p, tol)?;
    let (value, attaining_u) = match &s {
        SecondTangentRep::Empty { .. } => (ExtReal::PosInf, None),
        SecondTangentRep::Set(set) => match set.minimize(&(-&bp.v))? {
            ConicOutcome::Optimal { x, value } => (ExtReal::Finite(value), Some(x)),
            ConicOutcome::Unbounded => (ExtReal::NegInf, None),
            ConicOutcome::Infeasible => (ExtReal::PosInf, None),
        },
    };
    Ok(PerturbationValue {
        p: p.clone(),
        value,
        attaining_u,
    })
}

/// `min −⟨v̄, u⟩` over `T²_Ω(x̄, w)`, i.e. `−σ_{T²_Ω(x̄,w)}(v̄)`.
pub fn primal_value(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, tol: &TolerancePolicy) -> Result<PerturbationValue> {
    perturbation_value(cs, bp, w, &Vector::zeros(cs.m()), tol)
}

/// Dual objective vector: `⟨λ, c⟩` equals `⟨λ, ∇²f(x̄)(w,w)⟩ + d²δ_Θ(f(x̄), λ)(∇f(x̄)w)` on `Λ`.
pub fn dual_objective(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, tol: &TolerancePolicy) -> Result<Vector> {
    let jw = &bp.jac * w;
    Ok(bp.quad(w)? + curvature_vector(&cs.theta, &bp.fx, &jw, tol))
}

/// Value of the dual objective at one multiplier.
pub fn dual_objective_at(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, lambda: &Vector, tol: &TolerancePolicy) -> Result<ExtReal> {
    let jw = &bp.jac * w;
    let q = bp.quad(w)?.dot(lambda);
    ExtReal::Finite(q).checked_add(&d2_indicator(&cs.theta, &bp.fx, lambda, &jw, tol)?)
}

fn restrict_to_ball(set: &AffineConicSet, r: f64) -> AffineConicSet {
    let m = set.dim;
    let mut map = Matrix::zeros(m + 1, m);
    for i in 0..m {
        map[(i, i)] = 1.0;
    }
    let mut offset = Vector::zeros(m + 1);
    offset[m] = r;
    let mut out = set.clone();
    out.lorentz.push(LorentzBlock { map, offset });
    out
}

/// `max_{λ ∈ Λ(x̄,v̄)} ⟨λ, ∇²f(x̄)(w,w)⟩ − σ_{T²_Θ(f(x̄),∇f(x̄)w)}(λ)`, with the argmax face.
pub fn dual_value(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, opts: &D2Options, tol: &TolerancePolicy) -> Result<D2Value> {
    require_critical(cs, bp, w, tol)?;
    let lambda = multiplier_set(cs, bp, tol)?;
    if lambda.is_empty() {
        return Err(Error::EmptyMultiplierSet);
    }
    let lambda = match opts.radius {
        Some(r) => {
            let s = restrict_to_ball(&lambda.as_set(), r);
            if !s.is_feasible()? {
                return Err(Error::EmptyMultiplierSet);
            }
            MultiplierSet::Slice(s)
        }
        None => lambda,
    };
    let c = dual_objective(cs, bp, w, tol)?;
    let (value, point) = lambda.maximize(&c)?;
    let argmax = value.finite().map(|v| lambda.face(&c, v));
    let primal = primal_value(cs, bp, w, tol)?.value;
    let certificate = match (value, primal) {
        (ExtReal::Finite(d), ExtReal::Finite(p)) => {
            let gap = (d - p).abs();
            if gap <= tol.lp_tol * (1.0 + d.abs()) {
                Certificate::Exact
            } else {
                Certificate::Approximate { gap }
            }
        }
        (d, p) if d == p => Certificate::Exact,
        _ => Certificate::Approximate { gap: f64::INFINITY },
    };
    Ok(D2Value {
        value,
        argmax,
        argmax_point: point,
        certificate,
        primal: Some(primal),
    })
}

/// `d²δ_Ω(x̄, v̄)(w)`: `+∞` off the critical cone, the dual value on it.
pub fn d2_delta_omega(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, opts: &D2Options, tol: &TolerancePolicy) -> Result<D2Value> {
    if !is_critical(cs, bp, w, tol)? {
        return Ok(D2Value {
            value: ExtReal::PosInf,
            argmax: None,
            argmax_point: None,
            certificate: Certificate::Exact,
            primal: None,
        });
    }
    dual_value(cs, bp, w, opts, tol)
}

/// Result of the intersection rule.
#[derive(Clone, Debug)]
pub struct IntersectionD2 {
    pub d2: D2Value,
    /// `T²_{Ω₁}(x̄, w) ∩ T²_{Ω₂}(x̄, w)`, when `w` is tangent to both sets.
    pub second_tangent: Option<SecondTangentRep>,
}

/// The diagonal system `x ↦ (x, x) ∈ Ω₁ × Ω₂` describing `Ω₁ ∩ Ω₂`.
pub fn diagonal_system(o1: &ConvexSetSpec, o2: &ConvexSetSpec) -> Result<ConstraintSystem> {
    let n = o1.dim();
    crate::error::check_dim("intersection operands", n, o2.dim())?;
    let id = PolynomialMap::identity(n);
    let f = id.stack(&id)?;
    ConstraintSystem::new(Arc::new(f), ConvexSetSpec::Product(vec![o1.clone(), o2.clone()]))
}

/// `d²δ_{Ω₁∩Ω₂}(x̄, v̄)(w)` through the diagonal system.
pub fn d2_intersection(
    o1: &ConvexSetSpec,
    o2: &ConvexSetSpec,
    x: &Vector,
    v: &Vector,
    w: &Vector,
    tol: &TolerancePolicy,
) -> Result<IntersectionD2> {
    let cs = diagonal_system(o1, o2)?;
    let bp = BasePoint::new(&cs, x.clone(), v.clone(), tol)?;
    let d2 = d2_delta_omega(&cs, &bp, w, &D2Options::default(), tol)?;
    let t1 = second_tangent(o1, x, w, tol);
    let t2 = second_tangent(o2, x, w, tol);
    let second_tangent = match (t1, t2) {
        (Ok(a), Ok(b)) => Some(match (a, b) {
            (SecondTangentRep::Set(a), SecondTangentRep::Set(b)) => SecondTangentRep::Set(a.intersect(&b)?),
            _ => SecondTangentRep::Empty { dim: x.len() },
        }),
        _ => None,
    };
    Ok(IntersectionD2 { d2, second_tangent })
}
