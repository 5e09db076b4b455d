//! Second-order optimality for `min φ(x)` subject to `f(x) ∈ Θ`: KKT data, no-gap
//! conditions with the growth modulus, sampled quadratic growth and strong metric
//! subregularity of the subgradient map.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::gder::dn_omega_membership;
use crate::numeric::{nelder_mead, ExtReal, Matrix, TolerancePolicy, Vector};
use crate::oracles::chain_normal_residual;
use crate::sets::{critical_cone, d2_indicator, normal_cone, ConeRep};
use crate::smooth::SmoothMap;
use crate::subderivative::dual_objective;
use crate::system::{critical_cone_omega, multiplier_set, BasePoint, ConstraintSystem, MultiplierSet};

/// `min φ(x)` subject to `f(x) ∈ Θ`.
#[derive(Clone, Debug)]
pub struct OptProblem {
    pub phi: Arc<dyn SmoothMap>,
    pub cs: ConstraintSystem,
}

impl OptProblem {
    pub fn new(phi: Arc<dyn SmoothMap>, cs: ConstraintSystem) -> Result<Self> {
        check_dim("objective input", cs.n(), phi.input_dim())?;
        check_dim("objective output", 1, phi.output_dim())?;
        Ok(Self { phi, cs })
    }

    pub fn n(&self) -> usize {
        self.cs.n()
    }

    pub fn objective(&self, x: &Vector) -> f64 {
        self.phi.value(x)[0]
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        self.phi.jacobian(x).row(0).transpose()
    }

    pub fn hessian(&self, x: &Vector) -> Matrix {
        self.phi.hessian(x).forms()[0].clone()
    }

    /// Base pair `(x̄, −∇φ(x̄))`.
    pub fn base_point(&self, x: &Vector, tol: &TolerancePolicy) -> Result<BasePoint> {
        BasePoint::new(&self.cs, x.clone(), -self.gradient(x), tol)
    }

    /// `∇²_{xx} L(x, λ) = ∇²φ(x) + Σ λ_i ∇²f_i(x)`.
    pub fn lagrangian_hessian(&self, x: &Vector, lambda: &Vector) -> Result<Matrix> {
        Ok(self.hessian(x) + self.cs.f.hessian(x).contract(lambda)?)
    }
}

#[derive(Clone, Debug)]
pub struct KktRecord {
    pub v: Vector,
    pub multipliers: MultiplierSet,
    /// `dist(v̄; ∇f(x̄)* N_Θ(f(x̄)))`.
    pub residual: f64,
    pub base: BasePoint,
}

pub fn kkt_check(p: &OptProblem, x: &Vector, tol: &TolerancePolicy) -> Result<KktRecord> {
    check_dim("base point", p.n(), x.len())?;
    let base = p.base_point(x, tol)?;
    base.require_feasible()?;
    let residual = chain_normal_residual(&p.cs, x, &base.v, tol);
    let multipliers = multiplier_set(&p.cs, &base, tol)?;
    Ok(KktRecord {
        v: base.v.clone(),
        multipliers,
        residual,
        base,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SphereMethod {
    ExactSmallDim,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SphereMin {
    /// `+∞` when the cone is `{0}`.
    pub value: ExtReal,
    pub argmin: Option<Vec<f64>>,
    pub method: SphereMethod,
    pub evaluated: usize,
}

const SMALL_DIM: usize = 3;
const GRID_POINTS: usize = 10_000;
const SAMPLED_POINTS: usize = 20_000;
const SAMPLED_DESCENTS: usize = 50;
const GRID_DESCENTS: usize = 5;
const PRIMES: [u32; 24] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as f64;
    let mut f = 1.0 / b;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base as u64) as f64;
        i /= base as u64;
        f /= b;
    }
    r
}

/// Deterministic grid on the unit sphere for `n ≤ 3`; rotated Halton points pushed through
/// Box–Muller otherwise.
pub fn sphere_points(n: usize, count: usize, seed: u64) -> Vec<Vector> {
    match n {
        0 => vec![],
        1 => vec![Vector::from_element(1, 1.0), Vector::from_element(1, -1.0)],
        2 => (0..count)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / count as f64;
                Vector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * k as f64;
                    Vector::from_vec(vec![r * a.cos(), r * a.sin(), z])
                })
                .collect()
        }
        _ => {
            let dims = n.div_ceil(2) * 2;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shift: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
            (0..count)
                .map(|k| {
                    let mut g = Vec::with_capacity(dims);
                    for d in (0..dims).step_by(2) {
                        let base = |j: usize| PRIMES[j % PRIMES.len()] + 97 * (j / PRIMES.len()) as u32;
                        let u1 = (radical_inverse(k as u64 + 1, base(d)) + shift[d]).fract().max(1e-300);
                        let u2 = (radical_inverse(k as u64 + 1, base(d + 1)) + shift[d + 1]).fract();
                        let r = (-2.0 * u1.ln()).sqrt();
                        g.push(r * (std::f64::consts::TAU * u2).cos());
                        g.push(r * (std::f64::consts::TAU * u2).sin());
                    }
                    let v = Vector::from_iterator(n, g.into_iter().take(n));
                    let norm = v.norm();
                    v / norm
                })
                .collect()
        }
    }
}

/// Unit vectors of `K` obtained by projecting sphere points onto the cone.
pub fn cone_sphere_points(cone: &ConeRep, count: usize, seed: u64) -> Result<Vec<Vector>> {
    let pts = sphere_points(cone.dim(), count, seed);
    let proj: Vec<Result<Option<Vector>>> = pts
        .par_iter()
        .map(|p| {
            let z = cone.project(p)?;
            let nz = z.norm();
            Ok(if nz > 1e-9 { Some(z / nz) } else { None })
        })
        .collect();
    let mut out = Vec::new();
    for r in proj {
        if let Some(z) = r? {
            out.push(z);
        }
    }
    Ok(out)
}

/// Approximates `min {q(w) : w ∈ K, ‖w‖ = 1}` by sphere sampling plus local descents
/// on `p ↦ q(P_K(p)/‖P_K(p)‖)`.
pub fn minimize_on_cone_sphere(cone: &ConeRep, q: &(dyn Fn(&Vector) -> f64 + Sync), seed: u64) -> Result<SphereMin> {
    let n = cone.dim();
    let method = if n <= SMALL_DIM {
        SphereMethod::ExactSmallDim
    } else {
        SphereMethod::Sampled
    };
    if cone.is_trivial()? {
        return Ok(SphereMin {
            value: ExtReal::PosInf,
            argmin: None,
            method,
            evaluated: 0,
        });
    }
    let (count, descents) = if n <= SMALL_DIM {
        (GRID_POINTS, GRID_DESCENTS)
    } else {
        (SAMPLED_POINTS, SAMPLED_DESCENTS)
    };
    let pts = cone_sphere_points(cone, count, seed)?;
    let mut scored: Vec<(f64, usize)> = pts.par_iter().map(q).collect::<Vec<f64>>().into_iter().zip(0..).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut evaluated = scored.len();
    let lifted = |p: &[f64]| -> Option<Vector> {
        let z = cone.project(&Vector::from_column_slice(p)).ok()?;
        let nz = z.norm();
        (nz > 1e-9).then(|| z / nz)
    };
    let starts: Vec<usize> = scored.iter().take(descents).map(|s| s.1).collect();
    let refined: Vec<(f64, Vector, usize)> = starts
        .par_iter()
        .map(|&i| {
            let mut count = 0usize;
            let (p, v) = nelder_mead(
                |p| {
                    count += 1;
                    lifted(p).map(|w| q(&w)).unwrap_or(f64::INFINITY)
                },
                pts[i].as_slice(),
                0.05,
                100 * n,
            );
            (v, lifted(&p).unwrap_or_else(|| pts[i].clone()), count)
        })
        .collect();
    let mut best = scored.first().map(|s| (s.0, pts[s.1].clone()));
    for (v, w, c) in refined {
        evaluated += c;
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, w));
        }
    }
    match best {
        Some((v, w)) => Ok(SphereMin {
            value: ExtReal::from_f64(v),
            argmin: Some(w.as_slice().to_vec()),
            method,
            evaluated,
        }),
        None => Ok(SphereMin {
            value: ExtReal::PosInf,
            argmin: None,
            method,
            evaluated,
        }),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalityCertificate {
    pub necessary_holds: bool,
    pub sufficient_holds: bool,
    /// Best growth modulus `min_{w ∈ K ∩ S} Q(w)`; `+∞` when the critical cone is `{0}`.
    pub ell_hat: ExtReal,
    pub worst_direction: Option<Vec<f64>>,
    pub method: SphereMethod,
    pub evaluated: usize,
    pub multiplier_kind: String,
}

/// `Q(w) = ⟨∇²φ(x̄)w, w⟩ + d²δ_Ω(x̄, −∇φ(x̄))(w)` on the critical cone.
fn second_order_form(p: &OptProblem, bp: &BasePoint, lambda: &MultiplierSet, tol: &TolerancePolicy) -> impl Fn(&Vector) -> f64 + Sync {
    let h = p.hessian(&bp.x);
    let cs = p.cs.clone();
    let bp = bp.clone();
    let lambda = lambda.clone();
    let tol = *tol;
    move |w: &Vector| {
        let Ok(c) = dual_objective(&cs, &bp, w, &tol) else {
            return f64::INFINITY;
        };
        match lambda.maximize(&c) {
            Ok((v, _)) => w.dot(&(&h * w)) + v.to_f64(),
            Err(_) => f64::INFINITY,
        }
    }
}

pub fn second_order_conditions(p: &OptProblem, x: &Vector, seed: u64, tol: &TolerancePolicy) -> Result<OptimalityCertificate> {
    let kkt = kkt_check(p, x, tol)?;
    if kkt.multipliers.is_empty() || kkt.residual > tol.eq(kkt.v.norm()) {
        return Err(Error::NoMultipliers);
    }
    let bp = &kkt.base;
    let k = critical_cone_omega(&p.cs, bp, tol)?;
    let q = second_order_form(p, bp, &kkt.multipliers, tol);
    let m = minimize_on_cone_sphere(&k, &q, seed)?;
    let necessary = m.value >= ExtReal::Finite(-tol.oracle_tol);
    let sufficient = m.value > ExtReal::Finite(tol.oracle_tol);
    Ok(OptimalityCertificate {
        necessary_holds: necessary,
        sufficient_holds: sufficient,
        ell_hat: m.value,
        worst_direction: m.argmin,
        method: m.method,
        evaluated: m.evaluated,
        multiplier_kind: kkt.multipliers.kind().to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub x: Vec<f64>,
    /// `ψ(x) − ψ(x̄) − ℓ/2‖x − x̄‖²` (negative).
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub ell: f64,
    pub eps: f64,
    pub samples: usize,
    /// Samples that landed in the ball.
    pub used: usize,
    pub violation_count: usize,
    /// The first recorded violations in sample order.
    pub violations: Vec<Violation>,
    /// `min 2(ψ(x) − ψ(x̄))/‖x − x̄‖²` over the used samples: the largest passing modulus.
    pub ell_observed: f64,
    pub seed: u64,
}

impl GrowthReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }
}

const CHUNK: usize = 1024;
const KEPT_VIOLATIONS: usize = 25;
const BOUNDARY_SHARE: usize = 7;

/// Ball sampling shared by the constrained and augmented-Lagrangian growth checks.
pub(crate) struct GrowthSampler<'a> {
    pub center: &'a Vector,
    pub eps: f64,
    pub samples: usize,
    pub seed: u64,
    pub project: &'a (dyn Fn(&Vector) -> Option<Vector> + Sync),
    pub feasible: &'a (dyn Fn(&Vector) -> bool + Sync),
    pub value: &'a (dyn Fn(&Vector) -> f64 + Sync),
}

impl GrowthSampler<'_> {
    pub fn run(&self, base_value: f64, ell: f64) -> GrowthReport {
        let n = self.center.len();
        let chunks = self.samples.div_ceil(CHUNK);
        let floor = 1e-14 * (1.0 + base_value.abs());
        let per_chunk: Vec<(usize, usize, Vec<Violation>, f64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(c as u64 + 1);
                let mut used = 0;
                let mut count = 0;
                let mut kept = Vec::new();
                let mut observed = f64::INFINITY;
                for i in c * CHUNK..((c + 1) * CHUNK).min(self.samples) {
                    let g: Vector = Vector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
                    let x = if i % 10 < BOUNDARY_SHARE {
                        (self.project)(&(self.center + &g * (self.eps / (n as f64).sqrt())))
                    } else {
                        let r = self.eps * rng.random::<f64>().powf(1.0 / n as f64);
                        let z = self.center + &g * (r / g.norm().max(1e-300));
                        if (self.feasible)(&z) {
                            Some(z)
                        } else {
                            (self.project)(&z)
                        }
                    };
                    let Some(x) = x else { continue };
                    let d2 = (&x - self.center).norm_squared();
                    if d2.sqrt() > self.eps || d2 <= 1e-24 * (1.0 + self.center.norm_squared()) {
                        continue;
                    }
                    used += 1;
                    let rise = (self.value)(&x) - base_value;
                    observed = observed.min(2.0 * rise / d2);
                    let gap = rise - 0.5 * ell * d2;
                    if gap < -floor {
                        count += 1;
                        if kept.len() < KEPT_VIOLATIONS {
                            kept.push(Violation {
                                x: x.as_slice().to_vec(),
                                gap,
                            });
                        }
                    }
                }
                (used, count, kept, observed)
            })
            .collect();
        let mut report = GrowthReport {
            ell,
            eps: self.eps,
            samples: self.samples,
            used: 0,
            violation_count: 0,
            violations: vec![],
            ell_observed: f64::INFINITY,
            seed: self.seed,
        };
        for (used, count, kept, observed) in per_chunk {
            report.used += used;
            report.violation_count += count;
            for v in kept {
                if report.violations.len() < KEPT_VIOLATIONS {
                    report.violations.push(v);
                }
            }
            report.ell_observed = report.ell_observed.min(observed);
        }
        report
    }
}

/// Default ball radius `1e-2 (1 + ‖x̄‖)`.
pub fn default_eps(x: &Vector) -> f64 {
    1e-2 * (1.0 + x.norm())
}

pub const DEFAULT_GROWTH_SAMPLES: usize = 50_000;

/// Samples feasible points of `IB_ε(x̄)` (70% projected Gaussian draws, the rest uniform
/// draws with infeasible ones projected) and checks `ψ(x) ≥ ψ(x̄) + ℓ/2‖x − x̄‖²`.
pub fn growth_sample(p: &OptProblem, x: &Vector, ell: f64, eps: f64, samples: usize, seed: u64, tol: &TolerancePolicy) -> Result<GrowthReport> {
    check_dim("base point", p.n(), x.len())?;
    let res = p.cs.residual(x)?;
    if res > tol.cone(p.cs.f.value(x).norm()) {
        return Err(Error::InfeasiblePoint(res));
    }
    let project = |z: &Vector| p.cs.project_omega(z).ok();
    let feasible = |z: &Vector| p.cs.theta.residual(&p.cs.f.value(z)) <= 0.0;
    let value = |z: &Vector| p.objective(z);
    let sampler = GrowthSampler {
        center: x,
        eps,
        samples,
        seed,
        project: &project,
        feasible: &feasible,
        value: &value,
    };
    Ok(sampler.run(p.objective(x), ell))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SufficiencyReport {
    pub holds: bool,
    pub ell_hat: ExtReal,
    pub worst_direction: Option<Vec<f64>>,
    pub method: SphereMethod,
}

/// Single-multiplier sufficient condition over `{w : ∇f(x̄)w ∈ K_Θ(f(x̄), λ̄)}`.
pub fn sufficient_without_cq(p: &OptProblem, x: &Vector, lambda: &Vector, seed: u64, tol: &TolerancePolicy) -> Result<SufficiencyReport> {
    check_dim("multiplier", p.cs.m(), lambda.len())?;
    let bp = p.base_point(x, tol)?;
    bp.require_feasible()?;
    let stationarity = (p.gradient(x) + bp.jac.transpose() * lambda).norm();
    let normal = normal_cone(&p.cs.theta, &bp.fx, tol)?.contains(lambda, tol.cone(lambda.norm()));
    if stationarity > tol.eq(bp.v.norm()) || !normal {
        return Err(Error::KktViolated(stationarity));
    }
    let domain = critical_cone(&p.cs.theta, &bp.fx, lambda, tol)?.pullback(&bp.jac)?;
    let hl = p.lagrangian_hessian(x, lambda)?;
    let theta = p.cs.theta.clone();
    let (fx, jac, lam, t) = (bp.fx.clone(), bp.jac.clone(), lambda.clone(), *tol);
    let q = move |w: &Vector| {
        let curv = d2_indicator(&theta, &fx, &lam, &(&jac * w), &t).map(|e| e.to_f64()).unwrap_or(f64::INFINITY);
        w.dot(&(&hl * w)) + curv
    };
    let m = minimize_on_cone_sphere(&domain, &q, seed)?;
    Ok(SufficiencyReport {
        holds: m.value > ExtReal::Finite(tol.oracle_tol),
        ell_hat: m.value,
        worst_direction: m.argmin,
        method: m.method,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubregularityReport {
    /// Verdict of the second-order route.
    pub holds: bool,
    pub second_order_route: bool,
    /// The second-order necessary condition holds and no tested `w ∈ K ∩ S` has
    /// `0 ∈ D∂ψ(x̄, 0)(w)`.
    pub graphical_route: bool,
    pub injective: bool,
    pub agree: bool,
    pub kernel_direction: Option<Vec<f64>>,
    pub tested: usize,
}

const KERNEL_PROBES: usize = 200;

/// Strong metric subregularity of `∂ψ` at `(x̄, 0)` by the sufficient condition and,
/// independently, by injectivity of `w ↦ ∇²φ(x̄)w + DN_Ω(x̄, v̄)(w)` at zero.
pub fn strong_subregularity_check(p: &OptProblem, x: &Vector, seed: u64, tol: &TolerancePolicy) -> Result<SubregularityReport> {
    let cert = second_order_conditions(p, x, seed, tol)?;
    let bp = p.base_point(x, tol)?;
    let k = critical_cone_omega(&p.cs, &bp, tol)?;
    let mut probes: Vec<Vector> = cert.worst_direction.iter().map(|w| Vector::from_column_slice(w)).collect();
    if !k.is_trivial()? {
        probes.extend(cone_sphere_points(&k, KERNEL_PROBES, seed)?);
    }
    let h = p.hessian(x);
    let hits: Vec<Result<bool>> = probes
        .par_iter()
        .map(|w| Ok(dn_omega_membership(&p.cs, &bp, w, &(-(&h * w)), seed, tol)?.member))
        .collect();
    let mut kernel = None;
    for (w, hit) in probes.iter().zip(hits) {
        if hit? {
            kernel = Some(w.as_slice().to_vec());
            break;
        }
    }
    let injective = kernel.is_none();
    let graphical = cert.necessary_holds && injective;
    Ok(SubregularityReport {
        holds: cert.sufficient_holds,
        second_order_route: cert.sufficient_holds,
        graphical_route: graphical,
        injective,
        agree: cert.sufficient_holds == graphical,
        kernel_direction: kernel,
        tested: probes.len(),
    })
}
