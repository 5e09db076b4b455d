//! Definition-level estimators used as independent ground truth: second-order
//! difference quotients, second-order tangency ratios, parabolic-regularity and
//! epi-differentiability checks, and tangency to the graph of the normal-cone map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{nelder_mead, ExtReal, Matrix, TolerancePolicy, Vector};
use crate::qp::nnls;
use crate::sets::{normal_generators, orthogonal_complement, ConvexSetSpec};
use crate::subderivative::{d2_delta_omega, D2Options};
use crate::system::{BasePoint, ConstraintSystem};

/// A closed set that can be queried pointwise.
pub trait Region: Sync {
    fn dim(&self) -> usize;
    /// Infeasibility measure comparable to the distance (zero exactly on the set).
    fn residual(&self, x: &Vector) -> f64;
    /// Euclidean distance to the set.
    fn dist(&self, x: &Vector) -> f64;
    /// Nearest point of the set, when it can be computed.
    fn project(&self, x: &Vector) -> Option<Vector>;
}

impl Region for ConvexSetSpec {
    fn dim(&self) -> usize {
        ConvexSetSpec::dim(self)
    }

    fn residual(&self, x: &Vector) -> f64 {
        ConvexSetSpec::residual(self, x)
    }

    fn dist(&self, x: &Vector) -> f64 {
        ConvexSetSpec::dist(self, x).unwrap_or(f64::INFINITY)
    }

    fn project(&self, x: &Vector) -> Option<Vector> {
        ConvexSetSpec::project(self, x).ok()
    }
}

impl Region for ConstraintSystem {
    fn dim(&self) -> usize {
        self.n()
    }

    /// `dist(f(x); Θ)` measured by the set's cheap residual.
    fn residual(&self, x: &Vector) -> f64 {
        self.theta.residual(&self.f.value(x))
    }

    fn dist(&self, x: &Vector) -> f64 {
        self.dist_omega(x).unwrap_or(f64::INFINITY)
    }

    fn project(&self, x: &Vector) -> Option<Vector> {
        self.project_omega(x).ok()
    }
}

/// `epi φ ⊂ ℝ²` for `φ(x) = 0` on `x ≤ 0` and `φ(x) = x^α` on `x ≥ 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpiPower {
    pub alpha: f64,
}

impl EpiPower {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(Error::Invalid(format!("exponent must lie in (1, 2), got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn phi(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            x.powf(self.alpha)
        }
    }

    /// Nearest point of the set.
    pub fn project(&self, p: &Vector) -> Vector {
        let (p1, p2) = (p[0], p[1]);
        if p2 >= self.phi(p1) {
            return p.clone();
        }
        if p1 <= 0.0 {
            return Vector::from_vec(vec![p1, 0.0]);
        }
        let a = self.alpha;
        let d2 = |x: f64| (x - p1).powi(2) + (x.powf(a) - p2).powi(2);
        // The squared distance to the graph over [0, p1] may have several critical points
        // near 0 when p2 > 0; a scan locates the basin, golden-section search refines it.
        let k = 64;
        let mut best = 0usize;
        let mut bestv = d2(0.0);
        for i in 1..=k {
            let x = p1 * i as f64 / k as f64;
            let v = d2(x);
            if v < bestv {
                bestv = v;
                best = i;
            }
        }
        let mut lo = p1 * (best.saturating_sub(1)) as f64 / k as f64;
        let mut hi = p1 * ((best + 1).min(k)) as f64 / k as f64;
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        let (mut fc, mut fd) = (d2(c), d2(d));
        for _ in 0..200 {
            if hi - lo <= 1e-17 * (1.0 + p1) {
                break;
            }
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - g * (hi - lo);
                fc = d2(c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + g * (hi - lo);
                fd = d2(d);
            }
        }
        let x = 0.5 * (lo + hi);
        Vector::from_vec(vec![x, self.phi(x)])
    }
}

impl Region for EpiPower {
    fn dim(&self) -> usize {
        2
    }

    fn residual(&self, x: &Vector) -> f64 {
        self.dist(x)
    }

    fn dist(&self, x: &Vector) -> f64 {
        (x - EpiPower::project(self, x)).norm()
    }

    fn project(&self, x: &Vector) -> Option<Vector> {
        Some(EpiPower::project(self, x))
    }
}

/// Discretization of the limit `t ↓ 0` used by every estimator.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuotientGrid {
    /// Strictly decreasing positive t-values.
    pub ts: Vec<f64>,
    /// Search radius around the direction is `radius_factor · t`.
    pub radius_factor: f64,
    pub samples: usize,
    pub seed: u64,
    /// Local Nelder–Mead polishing of the best samples.
    pub refine: bool,
}

impl Default for QuotientGrid {
    fn default() -> Self {
        Self {
            ts: geometric(1e-1, 1e-4, 13),
            radius_factor: 10.0,
            samples: 2000,
            seed: 0,
            refine: true,
        }
    }
}

/// `levels` geometrically spaced values from `hi` down to `lo`.
pub fn geometric(hi: f64, lo: f64, levels: usize) -> Vec<f64> {
    if levels == 1 {
        return vec![hi];
    }
    let r = (lo / hi).powf(1.0 / (levels - 1) as f64);
    (0..levels).map(|k| hi * r.powi(k as i32)).collect()
}

impl QuotientGrid {
    pub fn validate(&self) -> Result<()> {
        if self.ts.is_empty() || self.ts.iter().any(|t| !(*t > 0.0)) || self.ts.windows(2).any(|p| p[1] >= p[0]) {
            return Err(Error::Invalid("t-grid must be strictly decreasing and positive".into()));
        }
        if !(self.radius_factor > 0.0) || self.samples == 0 {
            return Err(Error::Invalid("radius factor and sample count must be positive".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        let hi = self.ts[0];
        let lo = *self.ts.last().expect("nonempty grid");
        self.ts = geometric(hi, lo, levels);
        self
    }

    pub fn with_radius_factor(mut self, c: f64) -> Self {
        self.radius_factor = c;
        self
    }

    pub fn with_refine(mut self, refine: bool) -> Self {
        self.refine = refine;
        self
    }

    fn rng(&self, level: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(level as u64 + 1);
        rng
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Converged,
    DivergingToInf,
    Inconclusive,
}

/// Estimate at one grid level with the point achieving it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Level {
    pub t: f64,
    pub value: ExtReal,
    pub witness: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleEstimate {
    pub value: ExtReal,
    pub trend: Trend,
    pub levels: Vec<Level>,
    pub seed: u64,
}

impl OracleEstimate {
    /// Converged to a value within `tol` of zero.
    pub fn vanishes(&self, tol: f64) -> bool {
        self.trend == Trend::Converged && self.value.approx_eq(&ExtReal::zero(), tol)
    }

    pub fn diverges(&self) -> bool {
        self.trend == Trend::DivergingToInf
    }
}

const DIVERGENCE_LEVEL: f64 = 1e6;
const DIVERGENCE_SLOPE: f64 = 0.25;

/// Limiting behaviour of per-level values `q_k` at radii `r_k`.
///
/// Diverging: the three smallest levels exceed `1e6`, or the last four finite levels,
/// followed by nothing but `+∞`, grow with log-log slope at least `0.25` in `1/t`. Otherwise the last three values (linearly
/// extrapolated to radius zero when `extrapolate`) decide convergence within `tol`.
pub fn classify(levels: &[Level], radii: &[f64], extrapolate: bool, tol: f64) -> (ExtReal, Trend) {
    let k = levels.len();
    let vals: Vec<ExtReal> = levels.iter().map(|l| l.value).collect();
    let last = vals.last().copied().unwrap_or(ExtReal::PosInf);
    if k < 3 {
        return (last, Trend::Inconclusive);
    }
    if vals[k - 3..].iter().all(|v| v.is_pos_inf() || v.to_f64() > DIVERGENCE_LEVEL) {
        return (ExtReal::PosInf, Trend::DivergingToInf);
    }
    let end = k - vals.iter().rev().take_while(|v| v.is_pos_inf()).count();
    if end >= 4 {
        let tail: Vec<f64> = vals[end - 4..end].iter().map(|v| v.to_f64()).collect();
        let increasing = tail.windows(2).all(|p| p[1] > p[0]);
        if tail.iter().all(|v| v.is_finite() && *v > 0.0) && increasing && tail[3] > tol {
            let slope = (tail[3] / tail[0]).ln() / (levels[end - 4].t / levels[end - 1].t).ln();
            if slope >= DIVERGENCE_SLOPE {
                return (ExtReal::PosInf, Trend::DivergingToInf);
            }
        }
    }
    if vals[k - 3..].iter().any(|v| !v.is_finite()) {
        return (last, Trend::Inconclusive);
    }
    let est: Vec<f64> = (k - 3..k)
        .map(|j| {
            let q = vals[j].to_f64();
            if extrapolate && j >= 1 && vals[j - 1].is_finite() && radii[j - 1] > radii[j] {
                let p = vals[j - 1].to_f64();
                q + (q - p) * radii[j] / (radii[j - 1] - radii[j])
            } else {
                q
            }
        })
        .collect();
    let hi = est.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = est.iter().cloned().fold(f64::INFINITY, f64::min);
    let value = ExtReal::Finite(est[2]);
    if hi - lo <= tol {
        (value, Trend::Converged)
    } else {
        (value, Trend::Inconclusive)
    }
}

fn random_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    if dim == 0 {
        return Vec::new();
    }
    let g: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let n = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    g.into_iter().map(|v| v * r / n).collect()
}

/// Lowest quotient `−2⟨v̄, u⟩/t` over `u = (P(x̄ + t(w + d)) − x̄)/t` for sampled `‖d‖ ≤ radius`
/// that stay within `radius` of `w`.
#[allow(clippy::too_many_arguments)]
fn projected_level(region: &dyn Region, xbar: &Vector, v: &Vector, w: &Vector, t: f64, radius: f64, grid: &QuotientGrid, rng: &mut ChaCha8Rng) -> Option<Level> {
    let n = xbar.len();
    let mut best: Option<(f64, Vector)> = None;
    for i in 0..grid.samples {
        let d = if i == 0 { Vector::zeros(n) } else { Vector::from_vec(random_ball(rng, n, radius)) };
        let Some(p) = region.project(&(xbar + (w + d) * t)) else {
            continue;
        };
        let u = (p - xbar) / t;
        if (&u - w).norm() > radius {
            continue;
        }
        let q = -2.0 * v.dot(&u) / t;
        if best.as_ref().is_none_or(|b| q < b.0) {
            best = Some((q, u));
        }
    }
    best.map(|(q, u)| Level {
        t,
        value: ExtReal::Finite(q),
        witness: Some(u.as_slice().to_vec()),
    })
}

const SCAN_POINTS: usize = 16;
const BISECTIONS: usize = 34;

/// `min Δ²_t δ(x̄, v̄)(u)` over `‖u − w‖ ≤ radius` with `x̄ + t u` feasible up to `cone_tol·t²`.
#[allow(clippy::too_many_arguments)]
fn d2_level(
    region: &dyn Region,
    xbar: &Vector,
    v: &Vector,
    w: &Vector,
    t: f64,
    radius: f64,
    grid: &QuotientGrid,
    rng: &mut ChaCha8Rng,
    tol: &TolerancePolicy,
) -> Level {
    let n = xbar.len();
    let slack = tol.cone_tol * t * t;
    let feasible = |u: &Vector| region.residual(&(xbar + u * t)) <= slack;
    let vn = v.norm();
    if vn == 0.0 {
        if feasible(w) {
            return Level {
                t,
                value: ExtReal::zero(),
                witness: Some(w.as_slice().to_vec()),
            };
        }
        for _ in 0..grid.samples {
            let d = Vector::from_vec(random_ball(rng, n, radius));
            let u = w + d;
            if feasible(&u) {
                return Level {
                    t,
                    value: ExtReal::zero(),
                    witness: Some(u.as_slice().to_vec()),
                };
            }
        }
        return projected_level(region, xbar, v, w, t, radius, grid, rng).unwrap_or(Level {
            t,
            value: ExtReal::PosInf,
            witness: None,
        });
    }
    let vhat = v / vn;
    let basis: Matrix = orthogonal_complement(&vhat);
    let vw = v.dot(w);
    // Largest feasible step along v̂ from a transverse offset, and the resulting quotient.
    let line = |s: &[f64]| -> Option<(f64, Vector)> {
        let off = if s.is_empty() { Vector::zeros(n) } else { &basis * Vector::from_column_slice(s) };
        let r2 = radius * radius - off.norm_squared();
        if r2 < 0.0 {
            return None;
        }
        let ymax = r2.sqrt();
        let base = w + off;
        let at = |y: f64| &base + &vhat * y;
        let h = 2.0 * ymax / (SCAN_POINTS - 1) as f64;
        let mut hit = None;
        for j in 0..SCAN_POINTS {
            let y = ymax - h * j as f64;
            if feasible(&at(y)) {
                hit = Some(j);
                break;
            }
        }
        let j = hit?;
        let ystar = if j == 0 {
            ymax
        } else {
            let mut lo = ymax - h * j as f64;
            let mut hi = lo + h;
            for _ in 0..BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if feasible(&at(mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        Some((-2.0 * (vw + vn * ystar) / t, at(ystar)))
    };
    let d = n - 1;
    let mut scored: Vec<(f64, Vec<f64>)> = Vec::with_capacity(grid.samples);
    for i in 0..grid.samples {
        let s = if i == 0 { vec![0.0; d] } else { random_ball(rng, d, radius) };
        let q = line(&s).map(|p| p.0).unwrap_or(f64::INFINITY);
        scored.push((q, s));
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = scored[0].clone();
    if grid.refine && d > 0 && best.0.is_finite() {
        for start in scored.iter().take(3).filter(|p| p.0.is_finite()) {
            let (s, q) = nelder_mead(
                |s| line(s).map(|p| p.0).unwrap_or(f64::INFINITY),
                &start.1,
                0.2 * radius,
                60 * d,
            );
            if q < best.0 {
                best = (q, s);
            }
        }
    }
    match line(&best.1) {
        Some((q, u)) if best.0.is_finite() => Level {
            t,
            value: ExtReal::Finite(q),
            witness: Some(u.as_slice().to_vec()),
        },
        _ => projected_level(region, xbar, v, w, t, radius, grid, rng).unwrap_or(Level {
            t,
            value: ExtReal::PosInf,
            witness: None,
        }),
    }
}

/// Second-order difference-quotient estimate of `d²δ_Ω(x̄, v̄)(w)`.
pub fn d2_quotient_estimate(
    region: &dyn Region,
    xbar: &Vector,
    v: &Vector,
    w: &Vector,
    grid: &QuotientGrid,
    tol: &TolerancePolicy,
) -> Result<OracleEstimate> {
    grid.validate()?;
    crate::error::check_dim("oracle base point", region.dim(), xbar.len())?;
    crate::error::check_dim("oracle normal", region.dim(), v.len())?;
    crate::error::check_dim("oracle direction", region.dim(), w.len())?;
    let levels: Vec<Level> = grid
        .ts
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut rng = grid.rng(k);
            d2_level(region, xbar, v, w, t, grid.radius_factor * t, grid, &mut rng, tol)
        })
        .collect();
    let radii: Vec<f64> = grid.ts.iter().map(|t| grid.radius_factor * t).collect();
    let (value, trend) = classify(&levels, &radii, true, tol.oracle_tol);
    Ok(OracleEstimate {
        value,
        trend,
        levels,
        seed: grid.seed,
    })
}

/// Second-order tangency ratio `dist(x̄ + t w + ½t² u; Ω) / (½t²)`.
pub fn t2_membership(region: &dyn Region, xbar: &Vector, w: &Vector, u: &Vector, grid: &QuotientGrid, tol: &TolerancePolicy) -> Result<OracleEstimate> {
    grid.validate()?;
    let levels: Vec<Level> = grid
        .ts
        .par_iter()
        .map(|&t| {
            let x = xbar + w * t + u * (0.5 * t * t);
            let d = region.dist(&x);
            Level {
                t,
                value: ExtReal::from_f64(d / (0.5 * t * t)),
                witness: Some(x.as_slice().to_vec()),
            }
        })
        .collect();
    let (value, trend) = classify(&levels, &grid.ts, false, tol.oracle_tol);
    Ok(OracleEstimate {
        value,
        trend,
        levels,
        seed: grid.seed,
    })
}

/// Outcome of probing a box of second-order directions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct T2EmptinessCheck {
    /// Every tested `u` diverged.
    pub empty: bool,
    pub tested: usize,
    /// A `u` whose ratio did not diverge.
    pub counterexample: Option<Vec<f64>>,
}

/// Probes `u` on a uniform grid of `[−half_width, half_width]ⁿ` with `per_axis` points per axis.
pub fn t2_emptiness(
    region: &dyn Region,
    xbar: &Vector,
    w: &Vector,
    half_width: f64,
    per_axis: usize,
    grid: &QuotientGrid,
    tol: &TolerancePolicy,
) -> Result<T2EmptinessCheck> {
    let n = xbar.len();
    let per_axis = per_axis.max(2);
    let total = per_axis.pow(n as u32);
    let mut tested = 0;
    for idx in 0..total {
        let mut u = Vector::zeros(n);
        let mut r = idx;
        for i in 0..n {
            let k = r % per_axis;
            r /= per_axis;
            u[i] = -half_width + 2.0 * half_width * k as f64 / (per_axis - 1) as f64;
        }
        tested += 1;
        let est = t2_membership(region, xbar, w, &u, grid, tol)?;
        if !est.diverges() {
            return Ok(T2EmptinessCheck {
                empty: false,
                tested,
                counterexample: Some(u.as_slice().to_vec()),
            });
        }
    }
    Ok(T2EmptinessCheck {
        empty: true,
        tested,
        counterexample: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityCheck {
    pub holds: bool,
    /// No finite second subderivative: the condition holds vacuously.
    pub vacuous: bool,
    /// Smallest tested `C` with a quotient-achieving sequence `‖w_k − w‖ ≤ C t_k`.
    pub constant: Option<f64>,
    pub reference: OracleEstimate,
    pub restricted: Vec<(f64, ExtReal)>,
}

/// Searches for quotient-achieving sequences with `‖w_k − w‖ ≤ C t_k`, `C ∈ {1, 10, 100}`.
pub fn parabolic_regularity_check(
    region: &dyn Region,
    xbar: &Vector,
    v: &Vector,
    w: &Vector,
    grid: &QuotientGrid,
    tol: &TolerancePolicy,
) -> Result<RegularityCheck> {
    let reference = d2_quotient_estimate(region, xbar, v, w, grid, tol)?;
    if reference.diverges() {
        return Ok(RegularityCheck {
            holds: true,
            vacuous: true,
            constant: None,
            reference,
            restricted: vec![],
        });
    }
    let mut restricted = Vec::new();
    for c in [1.0, 10.0, 100.0] {
        let g = grid.clone().with_radius_factor(c);
        let est = d2_quotient_estimate(region, xbar, v, w, &g, tol)?;
        restricted.push((c, est.value));
        if reference.trend == Trend::Converged && est.trend == Trend::Converged && est.value.approx_eq(&reference.value, tol.oracle_tol) {
            return Ok(RegularityCheck {
                holds: true,
                vacuous: false,
                constant: Some(c),
                reference,
                restricted,
            });
        }
    }
    Ok(RegularityCheck {
        holds: false,
        vacuous: false,
        constant: None,
        reference,
        restricted,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpiCheck {
    pub holds: bool,
    /// Value of the second subderivative from the multiplier formula.
    pub target: ExtReal,
    pub estimate: OracleEstimate,
}

/// Checks that quotients converge to the second subderivative along the full grid
/// and along its even and odd subsequences.
pub fn epi_differentiability_check(cs: &ConstraintSystem, bp: &BasePoint, w: &Vector, grid: &QuotientGrid, tol: &TolerancePolicy) -> Result<EpiCheck> {
    let target = d2_delta_omega(cs, bp, w, &D2Options::default(), tol)?.value;
    let estimate = d2_quotient_estimate(cs, &bp.x, &bp.v, w, grid, tol)?;
    let holds = if target.is_pos_inf() {
        estimate.diverges()
    } else {
        let close = |e: &ExtReal| e.approx_eq(&target, tol.oracle_tol);
        let mut ok = estimate.trend == Trend::Converged && close(&estimate.value);
        for parity in 0..2 {
            let sub: Vec<Level> = estimate.levels.iter().skip(parity).step_by(2).cloned().collect();
            let radii: Vec<f64> = sub.iter().map(|l| grid.radius_factor * l.t).collect();
            let (v, trend) = classify(&sub, &radii, true, tol.oracle_tol);
            ok &= trend != Trend::DivergingToInf && close(&v);
        }
        ok
    };
    Ok(EpiCheck { holds, target, estimate })
}

/// `dist(v; ∇f(x)* N_Θ(f(x)))` by nonnegative least squares over the generators.
pub fn chain_normal_residual(cs: &ConstraintSystem, x: &Vector, v: &Vector, tol: &TolerancePolicy) -> f64 {
    let fx = cs.f.value(x);
    let Ok(y) = cs.theta.project(&fx) else {
        return f64::INFINITY;
    };
    if (&fx - &y).norm() > tol.cone(fx.norm()) * 10.0 {
        return f64::INFINITY;
    }
    let Ok(g) = normal_generators(&cs.theta, &y, tol) else {
        return f64::INFINITY;
    };
    if g.is_trivial() {
        return v.norm();
    }
    let jt = cs.f.jacobian(x).transpose();
    let a = &jt * g.matrix();
    let free: Vec<bool> = (0..g.rays.len()).map(|_| false).chain((0..g.lineality.len()).map(|_| true)).collect();
    let mu = nnls(&a, v, &free);
    (&a * mu - v).norm()
}

/// Decision threshold on the limiting graph-distance ratio, relative to `1 + ‖(w, q)‖`.
pub const GPH_MEMBER_TOL: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GphSample {
    pub member: bool,
    pub estimate: OracleEstimate,
}

/// Tests `(w, q) ∈ T_{gph N_Ω}(x̄, v̄)` through `dist((x̄ + t w, v̄ + t q); gph N_Ω) / t`.
/// Graph points are parameterized as `(P_Ω(z), z − P_Ω(z))` and each is checked against the
/// chain-rule normal cone `∇f(x)* N_Θ(f(x))`.
pub fn gph_normal_tangent_sample(
    cs: &ConstraintSystem,
    bp: &BasePoint,
    w: &Vector,
    q: &Vector,
    grid: &QuotientGrid,
    tol: &TolerancePolicy,
) -> Result<GphSample> {
    grid.validate()?;
    let n = cs.n();
    let scale = 1.0 + w.norm() + q.norm();
    let levels: Vec<Level> = grid
        .ts
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut rng = grid.rng(k);
            let a = &bp.x + w * t;
            let b = &bp.v + q * t;
            let z0 = &a + &b;
            let obj = |zeta: &[f64]| -> f64 {
                let z = &z0 + Vector::from_column_slice(zeta) * t;
                let Ok(x) = cs.project_omega(&z) else {
                    return f64::INFINITY;
                };
                let v = &z - &x;
                let rho = chain_normal_residual(cs, &x, &v, tol);
                ((&x - &a).norm_squared() + (&v - &b).norm_squared()).sqrt() / t + rho / t
            };
            let mut starts: Vec<(f64, Vec<f64>)> = vec![(obj(&vec![0.0; n]), vec![0.0; n])];
            for _ in 0..grid.samples.min(16) {
                let s = random_ball(&mut rng, n, 2.0 * scale);
                starts.push((obj(&s), s));
            }
            starts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut best = starts[0].clone();
            if grid.refine {
                let (s, v) = nelder_mead(obj, &best.1, 0.5, 100 * n);
                if v < best.0 {
                    best = (v, s);
                }
            }
            Level {
                t,
                value: ExtReal::from_f64(best.0),
                witness: Some(best.1),
            }
        })
        .collect();
    let (value, trend) = classify(&levels, &grid.ts, true, tol.oracle_tol);
    let member = trend != Trend::DivergingToInf && value.is_finite() && value.to_f64() <= GPH_MEMBER_TOL * scale;
    Ok(GphSample {
        member,
        estimate: OracleEstimate {
            value,
            trend,
            levels,
            seed: grid.seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::vector;
    use crate::smooth::{Monomial, Polynomial, PolynomialMap};
    use std::sync::Arc;

    fn tol() -> TolerancePolicy {
        TolerancePolicy::default()
    }

    fn quick() -> QuotientGrid {
        QuotientGrid::default().with_samples(200)
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

    fn orthant() -> (ConstraintSystem, BasePoint) {
        let cs = ConstraintSystem::new(Arc::new(PolynomialMap::identity(2)), ConvexSetSpec::nonpositive_orthant(2)).unwrap();
        let bp = BasePoint::new(&cs, Vector::zeros(2), vector(&[1.0, 0.0]), &tol()).unwrap();
        (cs, bp)
    }

    #[test]
    fn quotient_examples() {
        let (cs, bp) = parabola();
        let e = d2_quotient_estimate(&cs, &bp.x, &bp.v, &vector(&[1.0, 0.0]), &quick(), &tol()).unwrap();
        assert_eq!(e.trend, Trend::Converged, "{e:?}");
        assert!((e.value.to_f64() - 2.0).abs() < 1e-3, "{:?}", e.value);
        let e = d2_quotient_estimate(&cs, &bp.x, &bp.v, &vector(&[0.0, 1.0]), &quick(), &tol()).unwrap();
        assert_eq!(e.trend, Trend::DivergingToInf);
        let (cs, bp) = orthant();
        let e = d2_quotient_estimate(&cs, &bp.x, &bp.v, &vector(&[0.0, -1.0]), &quick(), &tol()).unwrap();
        assert!(e.vanishes(1e-3), "{e:?}");
        // Tangent but not critical: the quotient blows up like 1/t.
        let e = d2_quotient_estimate(&cs, &bp.x, &bp.v, &vector(&[-1.0, 0.0]), &quick(), &tol()).unwrap();
        assert_eq!(e.trend, Trend::DivergingToInf, "{e:?}");
    }

    #[test]
    fn quotient_is_deterministic() {
        let (cs, bp) = parabola();
        let g = quick().with_seed(17);
        let a = d2_quotient_estimate(&cs, &bp.x, &bp.v, &vector(&[1.0, 0.5]), &g, &tol()).unwrap();
        let b = d2_quotient_estimate(&cs, &bp.x, &bp.v, &vector(&[1.0, 0.5]), &g, &tol()).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn refinement_is_monotone_in_sample_count() {
        let (cs, bp) = parabola();
        let w = vector(&[1.0, 0.0]);
        let g1 = quick().with_refine(false).with_samples(100).with_levels(5);
        let g2 = g1.clone().with_samples(200);
        let a = d2_quotient_estimate(&cs, &bp.x, &bp.v, &w, &g1, &tol()).unwrap();
        let b = d2_quotient_estimate(&cs, &bp.x, &bp.v, &w, &g2, &tol()).unwrap();
        for (la, lb) in a.levels.iter().zip(&b.levels) {
            assert!(lb.value <= la.value);
        }
    }

    #[test]
    fn t2_examples() {
        let o = ConvexSetSpec::nonpositive_orthant(2);
        let e = t2_membership(&o, &Vector::zeros(2), &vector(&[0.0, -1.0]), &vector(&[-1.0, 5.0]), &quick(), &tol()).unwrap();
        assert!(e.vanishes(1e-3));
        let e = t2_membership(&o, &Vector::zeros(2), &vector(&[0.0, -1.0]), &vector(&[1.0, 0.0]), &quick(), &tol()).unwrap();
        assert!(!e.vanishes(1e-3) && !e.diverges());
        let q = ConvexSetSpec::soc(3).unwrap();
        let e = t2_membership(&q, &vector(&[1.0, 0.0, 1.0]), &vector(&[1.0, 1.0, 1.0]), &vector(&[0.0, 7.0, 1.0]), &quick(), &tol()).unwrap();
        assert!(e.vanishes(1e-3), "{e:?}");
    }

    #[test]
    fn epigraph_projection_is_optimal() {
        let epi = EpiPower::new(1.5).unwrap();
        for p in [vector(&[0.3, -0.2]), vector(&[1e-4, 1e-7]), vector(&[-1.0, -2.0]), vector(&[2.0, 0.5])] {
            let x = epi.project(&p);
            assert!(x[1] >= epi.phi(x[0]) - 1e-15);
            // No boundary point on a fine grid is closer.
            let d = (&p - &x).norm();
            for k in 0..=2000 {
                let s = -1.0 + 4.0 * k as f64 / 2000.0;
                let b = vector(&[s, epi.phi(s)]);
                assert!((&p - b).norm() >= d - 1e-12);
            }
        }
    }

    #[test]
    fn epigraph_second_order_tangents() {
        let epi = EpiPower::new(1.5).unwrap();
        let g = quick();
        let e = t2_membership(&epi, &Vector::zeros(2), &vector(&[1.0, 0.0]), &vector(&[0.0, 10.0]), &g, &tol()).unwrap();
        assert!(e.diverges(), "{e:?}");
        let e = t2_membership(&epi, &Vector::zeros(2), &vector(&[-1.0, 0.0]), &vector(&[3.0, 1.0]), &g, &tol()).unwrap();
        assert!(e.vanishes(1e-3), "{e:?}");
        let r = parabolic_regularity_check(&epi, &Vector::zeros(2), &vector(&[0.0, -1.0]), &vector(&[-1.0, 0.0]), &g, &tol()).unwrap();
        assert!(r.holds && !r.vacuous, "{r:?}");
    }

    #[test]
    fn regularity_and_epi_examples() {
        let (cs, bp) = orthant();
        let r = parabolic_regularity_check(&cs, &bp.x, &bp.v, &vector(&[0.0, -1.0]), &quick(), &tol()).unwrap();
        assert!(r.holds && r.constant == Some(1.0));
        assert!(epi_differentiability_check(&cs, &bp, &vector(&[0.0, -1.0]), &quick(), &tol()).unwrap().holds);
        let (cs, bp) = parabola();
        let r = parabolic_regularity_check(&cs, &bp.x, &bp.v, &vector(&[1.0, 0.0]), &quick(), &tol()).unwrap();
        assert!(r.holds, "{r:?}");
        assert!(epi_differentiability_check(&cs, &bp, &vector(&[1.0, 0.0]), &quick(), &tol()).unwrap().holds);
        let e = epi_differentiability_check(&cs, &bp, &vector(&[0.0, 1.0]), &quick(), &tol()).unwrap();
        assert!(e.holds && e.target.is_pos_inf());
    }

    #[test]
    fn gph_examples() {
        let (cs, bp) = orthant();
        let g = quick().with_levels(7);
        let w = vector(&[0.0, -1.0]);
        assert!(gph_normal_tangent_sample(&cs, &bp, &w, &vector(&[3.0, 0.0]), &g, &tol()).unwrap().member);
        assert!(!gph_normal_tangent_sample(&cs, &bp, &w, &vector(&[0.0, 1.0]), &g, &tol()).unwrap().member);
        assert!(!gph_normal_tangent_sample(&cs, &bp, &vector(&[1.0, 0.0]), &vector(&[0.0, 0.0]), &g, &tol()).unwrap().member);
        let (cs, bp) = parabola();
        let s = gph_normal_tangent_sample(&cs, &bp, &vector(&[1.0, 0.0]), &vector(&[2.0, 5.0]), &g, &tol()).unwrap();
        assert!(s.member, "{:?}", s.estimate);
    }

    #[test]
    fn sets_without_interior_use_projected_samples() {
        // The plane x₃ = 0 cut by x₁ ≤ 0.
        let theta = ConvexSetSpec::polyhedron(
            3,
            Matrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            Vector::zeros(1),
            Matrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]),
            Vector::zeros(1),
        )
        .unwrap();
        let x = Vector::zeros(3);
        let v = vector(&[1.0, 0.0, 0.5]);
        let critical = d2_quotient_estimate(&theta, &x, &v, &vector(&[0.0, 1.0, 0.0]), &quick(), &tol()).unwrap();
        assert!(critical.vanishes(1e-6), "{critical:?}");
        let off = d2_quotient_estimate(&theta, &x, &v, &vector(&[0.0, 1.0, 1.0]), &quick(), &tol()).unwrap();
        assert!(off.diverges(), "{off:?}");
        let tangent = d2_quotient_estimate(&theta, &x, &v, &vector(&[-1.0, 1.0, 0.0]), &quick(), &tol()).unwrap();
        assert!(tangent.diverges(), "{tangent:?}");
    }

    #[test]
    fn classify_rules() {
        let mk = |vals: &[f64]| -> Vec<Level> {
            let ts = geometric(1e-1, 1e-4, vals.len());
            ts.iter()
                .zip(vals)
                .map(|(t, v)| Level {
                    t: *t,
                    value: ExtReal::from_f64(*v),
                    witness: None,
                })
                .collect()
        };
        let r = vec![1.0; 5];
        assert_eq!(classify(&mk(&[1.0, 1.0, 1e7, 1e8, f64::INFINITY]), &r, false, 1e-3).1, Trend::DivergingToInf);
        assert_eq!(classify(&mk(&[2.0, 2.0, 2.0, 2.0, 2.0]), &r, false, 1e-3).1, Trend::Converged);
        assert_eq!(classify(&mk(&[1.0, 2.0, 1.0, 2.0, 1.0]), &r, false, 1e-3).1, Trend::Inconclusive);
        // Growth like t^{-1/2}.
        let ts = geometric(1e-1, 1e-4, 6);
        let vals: Vec<f64> = ts.iter().map(|t| t.powf(-0.5)).collect();
        assert_eq!(classify(&mk(&vals), &[1.0; 6], false, 1e-3).1, Trend::DivergingToInf);
        let growing_then_infinite = [4.0, 24.0, 57.0, 115.0, 221.0, f64::INFINITY, f64::INFINITY];
        assert_eq!(classify(&mk(&growing_then_infinite), &[1.0; 7], false, 1e-3).1, Trend::DivergingToInf);
        let flat_then_infinite = [2.0, 2.0, 2.0, 2.0, 2.0, f64::INFINITY];
        assert_eq!(classify(&mk(&flat_then_infinite), &[1.0; 6], false, 1e-3).1, Trend::Inconclusive);
    }
}
