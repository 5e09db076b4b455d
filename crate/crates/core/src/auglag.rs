//! Augmented Lagrangian `𝓛(x, λ, ρ) = φ(x) + ρ/2 [dist(f(x) + λ/ρ; Θ)² − ‖λ/ρ‖²]`: values,
//! second semiderivatives through the Moreau envelope of `d²δ_Θ`, and the growth
//! threshold search over a grid of penalty parameters.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::numeric::{ExtReal, Matrix, TolerancePolicy, Vector};
use crate::optimality::{minimize_on_cone_sphere, sufficient_without_cq, GrowthReport, GrowthSampler, OptProblem};
use crate::sets::{classify_soc, critical_cone, normal_cone, orthogonal_complement, ConeRep, ConvexSetSpec, SocPoint};
use crate::system::BasePoint;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AugLagEval {
    pub rho: f64,
    pub value: f64,
    pub gradient: Vec<f64>,
}

fn require_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::NonpositiveRho(rho))
    }
}

pub fn eval_auglag(p: &OptProblem, x: &Vector, lambda: &Vector, rho: f64) -> Result<AugLagEval> {
    require_rho(rho)?;
    check_dim("augmented Lagrangian point", p.n(), x.len())?;
    check_dim("augmented Lagrangian multiplier", p.cs.m(), lambda.len())?;
    let y = p.cs.f.value(x) + lambda / rho;
    let r = &y - p.cs.theta.project(&y)?;
    let value = p.objective(x) + 0.5 * rho * (r.norm_squared() - (lambda / rho).norm_squared());
    let gradient = p.gradient(x) + p.cs.f.jacobian(x).transpose() * r * rho;
    Ok(AugLagEval {
        rho,
        value,
        gradient: gradient.as_slice().to_vec(),
    })
}

fn auglag_value(p: &OptProblem, x: &Vector, lambda: &Vector, rho: f64) -> f64 {
    eval_auglag(p, x, lambda, rho).map(|e| e.value).unwrap_or(f64::INFINITY)
}

/// `inf_z {d²δ_Θ(ȳ, λ)(z) + ρ‖z − u‖²}`.
pub fn moreau_envelope_of_d2(theta: &ConvexSetSpec, y: &Vector, lambda: &Vector, rho: f64, u: &Vector, tol: &TolerancePolicy) -> Result<ExtReal> {
    require_rho(rho)?;
    check_dim("envelope direction", theta.dim(), u.len())?;
    let k = critical_cone(theta, y, lambda, tol)?;
    if let ConvexSetSpec::Product(_) = theta {
        let mut acc = 0.0;
        let mut off = 0;
        for (s, p) in theta.split(y) {
            let d = s.dim();
            let part = moreau_envelope_of_d2(s, &p, &lambda.rows(off, d).into_owned(), rho, &u.rows(off, d).into_owned(), tol)?;
            acc += part.to_f64();
            off += d;
        }
        return Ok(ExtReal::Finite(acc));
    }
    if let ConvexSetSpec::SecondOrderCone { dim } = theta {
        let small = lambda.norm() <= tol.cone_tol * (1.0 + y.norm());
        if classify_soc(y, tol.cone_tol) == SocPoint::Boundary && !small {
            // PSD quadratic s(‖z'‖² − z_m²) on the hyperplane λ^⊥.
            let m = *dim;
            let s = lambda.norm() / y.norm();
            let mut h = Matrix::identity(m, m) * s;
            h[(m - 1, m - 1)] = -s;
            let b = orthogonal_complement(&(lambda / lambda.norm()));
            let hb = b.transpose() * &h * &b;
            let lhs = &hb + Matrix::identity(m - 1, m - 1) * rho;
            let zeta = lhs
                .cholesky()
                .ok_or_else(|| Error::NumericalFailure("envelope system is not positive definite".into()))?
                .solve(&(b.transpose() * u * rho));
            let z = &b * &zeta;
            return Ok(ExtReal::Finite(zeta.dot(&(&hb * &zeta)) + rho * (z - u).norm_squared()));
        }
    }
    Ok(ExtReal::Finite(rho * (u - k.project(u)?).norm_squared()))
}

/// `(x̄, λ̄)` solves `∇φ(x̄) + ∇f(x̄)*λ̄ = 0`, `λ̄ ∈ N_Θ(f(x̄))`.
fn require_kkt_pair(p: &OptProblem, x: &Vector, lambda: &Vector, tol: &TolerancePolicy) -> Result<BasePoint> {
    check_dim("multiplier", p.cs.m(), lambda.len())?;
    let bp = p.base_point(x, tol)?;
    bp.require_feasible()?;
    let stationarity = (p.gradient(x) + bp.jac.transpose() * lambda).norm();
    let normal = normal_cone(&p.cs.theta, &bp.fx, tol)?.contains(lambda, tol.cone(lambda.norm()));
    if stationarity > tol.eq(bp.v.norm()) || !normal {
        return Err(Error::KktViolated(stationarity));
    }
    Ok(bp)
}

fn d2_auglag_at(p: &OptProblem, bp: &BasePoint, hl: &Matrix, lambda: &Vector, rho: f64, w: &Vector, tol: &TolerancePolicy) -> Result<f64> {
    let env = moreau_envelope_of_d2(&p.cs.theta, &bp.fx, lambda, rho, &(&bp.jac * w), tol)?;
    Ok(w.dot(&(hl * w)) + env.to_f64())
}

/// `⟨∇²_{xx}L(x̄, λ̄)w, w⟩ + e_{1/2ρ}(d²δ_Θ(f(x̄), λ̄))(∇f(x̄)w)`.
pub fn d2_auglag(p: &OptProblem, x: &Vector, lambda: &Vector, rho: f64, w: &Vector, tol: &TolerancePolicy) -> Result<f64> {
    require_rho(rho)?;
    check_dim("direction", p.n(), w.len())?;
    let bp = require_kkt_pair(p, x, lambda, tol)?;
    let hl = p.lagrangian_hessian(x, lambda)?;
    d2_auglag_at(p, &bp, &hl, lambda, rho, w, tol)
}

/// `|𝓛(x̄ + tw, λ̄, ρ) − φ(x̄) − ½t² d²_x𝓛(w)|`.
pub fn expansion_residual(p: &OptProblem, x: &Vector, lambda: &Vector, rho: f64, w: &Vector, t: f64, tol: &TolerancePolicy) -> Result<f64> {
    let d2 = d2_auglag(p, x, lambda, rho, w, tol)?;
    Ok((auglag_value(p, &(x + w * t), lambda, rho) - p.objective(x) - 0.5 * t * t * d2).abs())
}

/// Richardson-extrapolated second difference `2(𝓛(x̄ + tw) − 𝓛(x̄) − t⟨∇𝓛(x̄), w⟩)/t²`.
pub fn fd_second_quotient(p: &OptProblem, x: &Vector, lambda: &Vector, rho: f64, w: &Vector) -> Result<f64> {
    let base = eval_auglag(p, x, lambda, rho)?;
    let slope = Vector::from_column_slice(&base.gradient).dot(w);
    let t = 1e-3 * (1.0 + x.norm()) / w.norm().max(1e-300);
    let q = |t: f64| 2.0 * (auglag_value(p, &(x + w * t), lambda, rho) - base.value - t * slope) / (t * t);
    Ok(2.0 * q(0.5 * t) - q(t))
}

pub const DEFAULT_RHO_GRID: [f64; 6] = [1.0, 2.0, 5.0, 10.0, 50.0, 100.0];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RhoEntry {
    pub rho: f64,
    /// `min_{‖w‖=1} d²_x𝓛(x̄, λ̄, ρ)(w)`.
    pub d2_min: ExtReal,
    pub d2_positive: bool,
    pub growth: GrowthReport,
}

impl RhoEntry {
    pub fn passed(&self) -> bool {
        self.d2_positive && self.growth.passed()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GrowthVerdicts {
    /// Single-multiplier sufficient condition.
    pub sufficient: bool,
    /// Second semiderivative positive definite at the largest grid `ρ`.
    pub d2_positive: bool,
    /// Sampled growth at the largest grid `ρ`.
    pub growth: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AugGrowthReport {
    /// Grid threshold: smallest grid `ρ` from which every larger grid entry passes.
    pub rho_bar: Option<f64>,
    pub entries: Vec<RhoEntry>,
    pub ell: f64,
    pub eps: f64,
    pub verdicts: GrowthVerdicts,
    pub agree: bool,
}

/// Growth of `x ↦ 𝓛(x, λ̄, ρ)` over the whole ball `IB_ε(x̄)` for each grid `ρ`, with
/// positivity of its second semiderivative and the single-multiplier sufficient condition.
#[allow(clippy::too_many_arguments)]
pub fn growth_threshold(
    p: &OptProblem,
    x: &Vector,
    lambda: &Vector,
    rho_grid: &[f64],
    ell: f64,
    eps: f64,
    samples: usize,
    seed: u64,
    tol: &TolerancePolicy,
) -> Result<AugGrowthReport> {
    if rho_grid.is_empty() {
        return Err(Error::Invalid("empty penalty grid".into()));
    }
    for &r in rho_grid {
        require_rho(r)?;
    }
    let bp = require_kkt_pair(p, x, lambda, tol)?;
    let hl = p.lagrangian_hessian(x, lambda)?;
    let sufficient = sufficient_without_cq(p, x, lambda, seed, tol)?.holds;
    let base_value = p.objective(x);
    let full = ConeRep::full(p.n());
    let entries: Vec<Result<RhoEntry>> = rho_grid
        .par_iter()
        .map(|&rho| {
            let q = |w: &Vector| d2_auglag_at(p, &bp, &hl, lambda, rho, w, tol).unwrap_or(f64::INFINITY);
            let m = minimize_on_cone_sphere(&full, &q, seed)?;
            let project = |z: &Vector| p.cs.project_omega(z).ok();
            let feasible = |_: &Vector| true;
            let value = |z: &Vector| auglag_value(p, z, lambda, rho);
            let sampler = GrowthSampler {
                center: x,
                eps,
                samples,
                seed,
                project: &project,
                feasible: &feasible,
                value: &value,
            };
            Ok(RhoEntry {
                rho,
                d2_positive: m.value > ExtReal::Finite(tol.oracle_tol),
                d2_min: m.value,
                growth: sampler.run(base_value, ell),
            })
        })
        .collect();
    let entries: Vec<RhoEntry> = entries.into_iter().collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[a].rho.total_cmp(&entries[b].rho));
    let mut rho_bar = None;
    for &i in order.iter().rev() {
        if entries[i].passed() {
            rho_bar = Some(entries[i].rho);
        } else {
            break;
        }
    }
    let top = &entries[*order.last().expect("nonempty grid")];
    let verdicts = GrowthVerdicts {
        sufficient,
        d2_positive: top.d2_positive,
        growth: top.growth.passed(),
    };
    Ok(AugGrowthReport {
        rho_bar,
        agree: verdicts.sufficient == verdicts.d2_positive && verdicts.d2_positive == verdicts.growth,
        entries,
        ell,
        eps,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::vector;
    use crate::sets::d2_indicator;
    use crate::smooth::{Monomial, Polynomial, PolynomialMap};
    use crate::system::ConstraintSystem;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    fn parabola(c: f64) -> OptProblem {
        let f = PolynomialMap::new(
            2,
            vec![Polynomial::new(vec![Monomial::new(1.0, &[2, 0]), Monomial::new(-1.0, &[0, 1])])],
        )
        .unwrap();
        let phi = PolynomialMap::new(2, vec![Polynomial::new(vec![Monomial::new(1.0, &[0, 1]), Monomial::new(c, &[2, 0])])]).unwrap();
        let cs = ConstraintSystem::new(Arc::new(f), ConvexSetSpec::nonpositive_orthant(1)).unwrap();
        OptProblem::new(Arc::new(phi), cs).unwrap()
    }

    #[test]
    fn evaluation_examples() {
        let p = parabola(0.0);
        let l = vector(&[1.0]);
        for rho in [0.5, 1.0, 10.0] {
            let e = eval_auglag(&p, &Vector::zeros(2), &l, rho).unwrap();
            assert!(e.value.abs() < 1e-15 && e.gradient.iter().all(|g| g.abs() < 1e-15));
        }
        let x = vector(&[0.3, 0.5]);
        assert_eq!(eval_auglag(&p, &x, &vector(&[0.0]), 3.0).unwrap().value, 0.5);
        let x = vector(&[0.1, 0.0]);
        assert!(eval_auglag(&p, &x, &l, 10.0).unwrap().value >= eval_auglag(&p, &x, &l, 1.0).unwrap().value);
        assert_eq!(eval_auglag(&p, &x, &l, 0.0).unwrap_err(), Error::NonpositiveRho(0.0));
    }

    #[test]
    fn envelope_examples() {
        let o = ConvexSetSpec::nonpositive_orthant(1);
        let e = moreau_envelope_of_d2(&o, &Vector::zeros(1), &vector(&[1.0]), 3.0, &vector(&[2.0]), &tol()).unwrap();
        assert_eq!(e, ExtReal::Finite(12.0));
        let o2 = ConvexSetSpec::nonpositive_orthant(2);
        let e = moreau_envelope_of_d2(&o2, &Vector::zeros(2), &vector(&[1.0, 0.0]), 3.0, &vector(&[0.0, -4.0]), &tol()).unwrap();
        assert_eq!(e, ExtReal::zero());
        let q = ConvexSetSpec::soc(3).unwrap();
        let e = moreau_envelope_of_d2(&q, &vector(&[1.0, 0.0, 1.0]), &vector(&[1.0, 0.0, -1.0]), 1.0, &vector(&[0.0, 1.0, 0.0]), &tol()).unwrap();
        assert!((e.to_f64() - 0.5).abs() < 1e-12);
        assert_eq!(
            moreau_envelope_of_d2(&o, &Vector::zeros(1), &vector(&[-1.0]), 1.0, &vector(&[1.0]), &tol()).unwrap_err(),
            Error::NotANormal
        );
    }

    #[test]
    fn second_semiderivative_examples() {
        let p = parabola(0.0);
        let (x, l) = (Vector::zeros(2), vector(&[1.0]));
        for rho in [1.0, 4.0] {
            for w in [vector(&[1.0, 0.0]), vector(&[0.3, -2.0])] {
                let d = d2_auglag(&p, &x, &l, rho, &w, &tol()).unwrap();
                assert!((d - (2.0 * w[0] * w[0] + rho * w[1] * w[1])).abs() < 1e-9);
                assert!((fd_second_quotient(&p, &x, &l, rho, &w).unwrap() - d).abs() < 1e-3);
                let r = expansion_residual(&p, &x, &l, rho, &w, 1e-3, &tol()).unwrap();
                assert!(r < 1e-6 * 1e-3 * 10.0);
            }
        }
        assert_eq!(d2_auglag(&p, &x, &l, 2.0, &Vector::zeros(2), &tol()).unwrap(), 0.0);
        let a = d2_auglag(&p, &x, &l, 2.0, &vector(&[0.0, 1.0]), &tol()).unwrap();
        let b = d2_auglag(&p, &x, &l, 4.0, &vector(&[0.0, 1.0]), &tol()).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
        assert!(matches!(d2_auglag(&p, &x, &vector(&[2.0]), 1.0, &x, &tol()), Err(Error::KktViolated(_))));
    }

    #[test]
    fn threshold_examples() {
        let grid = DEFAULT_RHO_GRID;
        let (x, l) = (Vector::zeros(2), vector(&[1.0]));
        let r = growth_threshold(&parabola(0.0), &x, &l, &grid, 1.0, 1e-2, 3000, 5, &tol()).unwrap();
        assert_eq!(r.rho_bar, Some(1.0));
        assert!(r.agree && r.verdicts.growth);
        let r = growth_threshold(&parabola(-1.0), &x, &l, &grid, 1e-3, 1e-2, 3000, 5, &tol()).unwrap();
        assert_eq!(r.rho_bar, None);
        assert!(r.agree && !r.verdicts.sufficient && !r.verdicts.d2_positive && !r.verdicts.growth);
        assert!(r.entries.iter().all(|e| e.d2_min.to_f64().abs() < 1e-9));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn envelope_is_monotone_and_below_d2(
            a in -1.0f64..1.0, b in 0.2f64..2.0, s in 0.0f64..3.0,
            u in prop::collection::vec(-2.0f64..2.0, 3),
        ) {
            // Boundary point (a, b', r) of the second-order cone with its outward normal ray.
            let y = vector(&[a, b, (a * a + b * b).sqrt()]);
            let lambda = vector(&[a, b, -(a * a + b * b).sqrt()]) * s;
            let q = ConvexSetSpec::soc(3).unwrap();
            let u = vector(&u);
            let cap = d2_indicator(&q, &y, &lambda, &u, &tol()).unwrap();
            let mut prev = ExtReal::NegInf;
            for rho in [1.0, 2.0, 5.0, 10.0, 100.0, 1000.0] {
                let e = moreau_envelope_of_d2(&q, &y, &lambda, rho, &u, &tol()).unwrap();
                prop_assert!(e >= prev);
                prop_assert!(e.to_f64() <= cap.to_f64() + 1e-9 * (1.0 + e.to_f64().abs()));
                prev = e;
            }
        }

        #[test]
        fn polyhedral_lower_bound_is_tight(w in prop::collection::vec(-2.0f64..2.0, 2), rho in 0.5f64..20.0) {
            let p = parabola(0.5);
            let (x, l) = (Vector::zeros(2), vector(&[1.0]));
            let w = vector(&w);
            let d = d2_auglag(&p, &x, &l, rho, &w, &tol()).unwrap();
            // ∇²L = diag(3, 0) and K_Θ = {0}.
            let bound = 3.0 * w[0] * w[0] + rho * w[1] * w[1];
            prop_assert!((d - bound).abs() < 1e-9);
        }
    }
}
