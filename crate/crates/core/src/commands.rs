//! Batch commands over problem files and the reports they produce.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::auglag::{d2_auglag, fd_second_quotient, growth_threshold, DEFAULT_RHO_GRID};
use crate::error::{check_dim, Error, Result};
use crate::gder::{dn_omega_membership, projection_derivative, GderMethod};
use crate::numeric::{ExtReal, Matrix, TolerancePolicy, Vector};
use crate::optimality::{
    default_eps, growth_sample, second_order_conditions, strong_subregularity_check, sufficient_without_cq,
    SphereMethod, DEFAULT_GROWTH_SAMPLES,
};
use crate::oracles::{
    chain_normal_residual, d2_quotient_estimate, epi_differentiability_check, gph_normal_tangent_sample,
    parabolic_regularity_check, t2_emptiness, QuotientGrid, Region, Trend,
};
use crate::problem::{fixture, list_fixtures, Model, Problem, ProblemFile};
use crate::sets::ConeRep;
use crate::subderivative::{d2_delta_omega, Certificate, D2Options};
use crate::system::{
    cq_diagnostics, critical_cone_omega, in_normal_cone_omega, multiplier_set, tangent_cone_omega, BasePoint,
    MultiplierSet,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Cones,
    Subderivative,
    Optimality,
    Auglag,
    Gder,
    Oracle,
    Diagnose,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Cones,
        Command::Subderivative,
        Command::Optimality,
        Command::Auglag,
        Command::Gder,
        Command::Oracle,
        Command::Diagnose,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Cones => "cones",
            Command::Subderivative => "subderivative",
            Command::Optimality => "optimality",
            Command::Auglag => "auglag",
            Command::Gder => "gder",
            Command::Oracle => "oracle",
            Command::Diagnose => "diagnose",
        }
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown command {s:?}")))
    }
}

/// Command-line overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Flags {
    pub w: Option<Vec<f64>>,
    pub q: Option<Vec<f64>>,
    pub rho_grid: Option<Vec<f64>>,
    pub eps: Option<f64>,
    pub ell: Option<f64>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub c: Option<f64>,
    pub oracle: bool,
    pub t2: bool,
    pub tol_eq: Option<f64>,
    pub tol_cone: Option<f64>,
    pub tol_oracle: Option<f64>,
    pub tol_lp: Option<f64>,
    /// Records the wall time, which makes reports differ between runs.
    #[serde(skip)]
    pub timing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Approximate,
    Fail,
}

impl Status {
    fn label(&self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Approximate => "approximate",
            Status::Fail => "fail",
        }
    }

    fn of(ok: bool) -> Status {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateLine {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub command: Command,
    pub inputs: Value,
    pub results: Value,
    pub certificates: Vec<CertificateLine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Value>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

impl Report {
    /// 0 when every certificate passes, 2 when the worst is approximate, 1 on a failure.
    pub fn exit_code(&self) -> i32 {
        match self.certificates.iter().map(|c| c.status).max() {
            Some(Status::Fail) => 1,
            Some(Status::Approximate) => 2,
            _ => 0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command: {}", self.command.name());
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "results:");
        write_section(&mut s, &self.results);
        if let Some(o) = &self.oracle {
            let _ = writeln!(s, "oracle cross-check:");
            write_section(&mut s, o);
        }
        let _ = writeln!(s, "certificates:");
        for c in &self.certificates {
            let _ = writeln!(s, "  [{}] {}: {}", c.status.label(), c.name, c.detail);
        }
        if let Some(t) = self.wall_time_ms {
            let _ = writeln!(s, "wall time: {t:.1} ms");
        }
        let _ = writeln!(s, "exit: {}", self.exit_code());
        s
    }
}

fn write_section(s: &mut String, v: &Value) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let _ = writeln!(s, "  {k}: {v}");
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                let _ = writeln!(s, "  [{i}] {v}");
            }
        }
        other => {
            let _ = writeln!(s, "  {other}");
        }
    }
}

/// Reads `source` as a path, falling back to a built-in fixture of that name. `--c`
/// regenerates parameterized fixtures.
pub fn load_problem(source: &str, c: Option<f64>) -> Result<ProblemFile> {
    let path = Path::new(source);
    let file = if path.exists() {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{source}: {e}")))?;
        ProblemFile::parse(&text)?
    } else {
        let stem = source.strip_suffix(".json").unwrap_or(source);
        let name = Path::new(stem).file_name().and_then(|s| s.to_str()).unwrap_or(stem);
        if !list_fixtures().contains(&name) {
            return Err(Error::Io(format!("{source}: no such file or fixture")));
        }
        fixture(name, None)?
    };
    match c {
        None => Ok(file),
        Some(c) => {
            let tag = file
                .fixture
                .as_ref()
                .ok_or_else(|| Error::Invalid("--c needs a file generated from a parameterized fixture".into()))?;
            if tag.param.is_none() {
                return Err(Error::Invalid(format!("fixture {:?} takes no parameter", tag.name)));
            }
            let mut regenerated = fixture(&tag.name, Some(c))?;
            regenerated.tolerances = file.tolerances;
            regenerated.seed = file.seed;
            Ok(regenerated)
        }
    }
}

fn vj(v: &Vector) -> Vec<f64> {
    v.as_slice().to_vec()
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn ext(e: &ExtReal) -> Value {
    serde_json::to_value(e).expect("extended reals serialize")
}

fn cone_json(k: &ConeRep) -> Value {
    match &k.generators {
        Some(g) => json!({
            "rays": g.rays.iter().map(vj).collect::<Vec<_>>(),
            "lineality": g.lineality.iter().map(vj).collect::<Vec<_>>(),
        }),
        None => json!({
            "ineq": rows(&k.set.ineq),
            "eq": rows(&k.set.eq),
            "lorentz_blocks": k.set.lorentz.len(),
        }),
    }
}

fn multipliers_json(set: &MultiplierSet) -> Result<Value> {
    Ok(json!({
        "kind": set.kind(),
        "least_norm": set.min_norm()?.map(|l| vj(&l)),
        "vertices": set.vertices().iter().map(vj).collect::<Vec<_>>(),
    }))
}

fn cert(out: &mut Vec<CertificateLine>, name: impl Into<String>, status: Status, detail: impl Into<String>) {
    out.push(CertificateLine {
        name: name.into(),
        status,
        detail: detail.into(),
    });
}

struct Ctx {
    problem: Problem,
    tol: TolerancePolicy,
    seed: u64,
    flags: Flags,
}

impl Ctx {
    fn directions(&self) -> Result<Vec<Vector>> {
        let ds = match &self.flags.w {
            Some(w) => {
                check_dim("direction", self.problem.file.n, w.len())?;
                vec![Vector::from_column_slice(w)]
            }
            None => self.problem.directions()?,
        };
        if ds.is_empty() {
            return Err(Error::Invalid("no direction: pass --w or list directions in the file".into()));
        }
        Ok(ds)
    }

    fn grid(&self) -> QuotientGrid {
        QuotientGrid::default().with_seed(self.seed)
    }

    fn region(&self) -> &dyn Region {
        match &self.problem.model {
            Model::Convex { cs, .. } => cs,
            Model::EpiPower(e) => e,
        }
    }

    fn base_point(&self) -> Result<BasePoint> {
        let cs = self.problem.system()?;
        BasePoint::new(cs, self.problem.x.clone(), self.problem.v.clone(), &self.tol)
    }

    fn lambda(&self, bp: &BasePoint) -> Result<Vector> {
        if let Some(l) = &self.problem.file.lambda {
            return Ok(Vector::from_column_slice(l));
        }
        let set = multiplier_set(self.problem.system()?, bp, &self.tol)?;
        set.min_norm()?.ok_or(Error::NoMultipliers)
    }
}

/// Runs one command on a problem file.
pub fn run_command(cmd: Command, file: &ProblemFile, flags: &Flags) -> Result<Report> {
    let start = Instant::now();
    let mut tol = file.tolerances;
    tol.eq_tol = flags.tol_eq.unwrap_or(tol.eq_tol);
    tol.cone_tol = flags.tol_cone.unwrap_or(tol.cone_tol);
    tol.oracle_tol = flags.tol_oracle.unwrap_or(tol.oracle_tol);
    tol.lp_tol = flags.tol_lp.unwrap_or(tol.lp_tol);
    tol.validate()?;
    let mut file = file.clone();
    file.tolerances = tol;
    let seed = flags.seed.unwrap_or(file.seed);
    let ctx = Ctx {
        problem: file.build()?,
        tol,
        seed,
        flags: flags.clone(),
    };
    let mut certs = Vec::new();
    let mut oracle = None;
    let results = match cmd {
        Command::Cones => cones(&ctx, &mut certs, &mut oracle)?,
        Command::Subderivative => subderivative(&ctx, &mut certs, &mut oracle)?,
        Command::Optimality => optimality(&ctx, &mut certs, &mut oracle)?,
        Command::Auglag => auglag(&ctx, &mut certs)?,
        Command::Gder => gder(&ctx, &mut certs, &mut oracle)?,
        Command::Oracle => oracle_cmd(&ctx, &mut certs)?,
        Command::Diagnose => diagnose(&ctx, &mut certs, &mut oracle)?,
    };
    Ok(Report {
        command: cmd,
        inputs: json!({
            "problem": serde_json::to_value(&file).expect("problem files serialize"),
            "flags": serde_json::to_value(flags).expect("flags serialize"),
        }),
        results,
        certificates: certs,
        oracle,
        seed,
        wall_time_ms: flags.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
    })
}

fn cones(ctx: &Ctx, certs: &mut Vec<CertificateLine>, oracle: &mut Option<Value>) -> Result<Value> {
    let cs = ctx.problem.system()?;
    let bp = ctx.base_point()?;
    cert(certs, "feasible", Status::of(bp.feasible), format!("residual {:e}", bp.residual));
    bp.require_feasible()?;
    let tangent = tangent_cone_omega(cs, &bp, &ctx.tol)?;
    let normal = in_normal_cone_omega(cs, &bp, &bp.v, &ctx.tol)?;
    cert(certs, "normal", Status::of(normal), "v lies in the normal cone of the constraint set");
    let critical = critical_cone_omega(cs, &bp, &ctx.tol)?;
    let multipliers = multiplier_set(cs, &bp, &ctx.tol)?;
    let dirs = match ctx.directions() {
        Ok(d) => d,
        Err(Error::Invalid(_)) => vec![],
        Err(e) => return Err(e),
    };
    let per_dir: Vec<Value> = dirs
        .iter()
        .map(|w| {
            json!({
                "w": vj(w),
                "tangent": tangent.contains(w, ctx.tol.cone(w.norm())),
                "critical": critical.contains(w, ctx.tol.cone(w.norm())),
            })
        })
        .collect();
    if ctx.flags.oracle {
        // dist(x̄ + tw; Ω)/t at small t.
        let mut checks = Vec::new();
        for w in &dirs {
            let t = 1e-5;
            let ratio = cs.dist_omega(&(&bp.x + w * t))? / (t * (1.0 + w.norm()));
            let sampled = ratio < 1e-2;
            let exact = tangent.contains(w, ctx.tol.cone(w.norm()));
            cert(certs, format!("oracle tangent {:?}", vj(w)), Status::of(sampled == exact), format!("distance ratio {ratio:.3e}"));
            checks.push(json!({"w": vj(w), "distance_ratio": ratio, "tangent": sampled}));
        }
        *oracle = Some(Value::Array(checks));
    }
    Ok(json!({
        "feasible": bp.feasible,
        "v": vj(&bp.v),
        "v_is_normal": normal,
        "tangent_cone": cone_json(&tangent),
        "critical_cone": cone_json(&critical),
        "multipliers": multipliers_json(&multipliers)?,
        "directions": per_dir,
    }))
}

fn subderivative(ctx: &Ctx, certs: &mut Vec<CertificateLine>, oracle: &mut Option<Value>) -> Result<Value> {
    let cs = ctx.problem.system()?;
    let bp = ctx.base_point()?;
    bp.require_feasible()?;
    let mut out = Vec::new();
    let mut checks = Vec::new();
    for w in ctx.directions()? {
        let d2 = d2_delta_omega(cs, &bp, &w, &D2Options::default(), &ctx.tol)?;
        let (status, detail) = match d2.certificate {
            Certificate::Exact => (Status::Pass, format!("value {} exact", d2.value)),
            Certificate::Approximate { gap } => (Status::Approximate, format!("value {} with duality gap {gap:e}", d2.value)),
        };
        cert(certs, format!("d2 {:?}", vj(&w)), status, detail);
        out.push(json!({
            "w": vj(&w),
            "value": ext(&d2.value),
            "primal": d2.primal.as_ref().map(ext),
            "certificate": d2.certificate,
            "argmax_point": d2.argmax_point.as_ref().map(vj),
            "argmax_kind": d2.argmax.as_ref().map(|a| a.kind()),
        }));
        if ctx.flags.oracle {
            let est = d2_quotient_estimate(cs, &bp.x, &bp.v, &w, &ctx.grid(), &ctx.tol)?;
            let agree = if d2.value.is_pos_inf() {
                est.diverges()
            } else {
                est.trend == Trend::Converged && est.value.approx_eq(&d2.value, ctx.tol.oracle_tol * (1.0 + d2.value.to_f64().abs()))
            };
            cert(certs, format!("oracle d2 {:?}", vj(&w)), Status::of(agree), format!("estimate {} ({:?})", est.value, est.trend));
            checks.push(json!({"w": vj(&w), "estimate": ext(&est.value), "trend": est.trend}));
        }
    }
    if ctx.flags.oracle {
        *oracle = Some(Value::Array(checks));
    }
    Ok(json!({ "subderivatives": out }))
}

fn method_status(holds: bool, method: SphereMethod) -> Status {
    match (holds, method) {
        (false, _) => Status::Fail,
        (true, SphereMethod::ExactSmallDim) => Status::Pass,
        (true, SphereMethod::Sampled) => Status::Approximate,
    }
}

fn optimality(ctx: &Ctx, certs: &mut Vec<CertificateLine>, oracle: &mut Option<Value>) -> Result<Value> {
    let p = ctx.problem.optimization()?;
    let x = &ctx.problem.x;
    let c = second_order_conditions(&p, x, ctx.seed, &ctx.tol)?;
    cert(certs, "second-order sufficient", method_status(c.sufficient_holds, c.method), format!("growth modulus estimate {}", c.ell_hat));
    let ell = match (ctx.flags.ell, c.ell_hat) {
        (Some(l), _) => Some(l),
        (None, ExtReal::Finite(l)) if c.sufficient_holds => Some(0.9 * l),
        (None, ExtReal::PosInf) => Some(1.0),
        _ => None,
    };
    let eps = ctx.flags.eps.unwrap_or_else(|| default_eps(x));
    let growth = match ell {
        Some(ell) => {
            let g = growth_sample(&p, x, ell, eps, ctx.flags.samples.unwrap_or(DEFAULT_GROWTH_SAMPLES), ctx.seed, &ctx.tol)?;
            cert(certs, "quadratic growth", Status::of(g.passed()), format!("ell {ell}, {} violations in {} samples", g.violation_count, g.used));
            Some(g)
        }
        None => None,
    };
    if ctx.flags.oracle {
        let s = strong_subregularity_check(&p, x, ctx.seed, &ctx.tol)?;
        cert(certs, "oracle subregularity routes agree", Status::of(s.agree), format!("{} directions probed", s.tested));
        *oracle = Some(serde_json::to_value(&s).expect("reports serialize"));
    }
    Ok(json!({
        "necessary": c.necessary_holds,
        "sufficient": c.sufficient_holds,
        "ell_hat": ext(&c.ell_hat),
        "worst_direction": c.worst_direction,
        "method": c.method,
        "multiplier_kind": c.multiplier_kind,
        "growth": growth,
    }))
}

fn auglag(ctx: &Ctx, certs: &mut Vec<CertificateLine>) -> Result<Value> {
    let p = ctx.problem.optimization()?;
    let x = &ctx.problem.x;
    let bp = p.base_point(x, &ctx.tol)?;
    bp.require_feasible()?;
    let lambda = ctx.lambda(&bp)?;
    let grid = ctx.flags.rho_grid.clone().unwrap_or_else(|| DEFAULT_RHO_GRID.to_vec());
    let ell = match ctx.flags.ell {
        Some(l) => l,
        None => {
            let s = sufficient_without_cq(&p, x, &lambda, ctx.seed, &ctx.tol)?;
            match (s.holds, s.ell_hat) {
                (true, ExtReal::Finite(l)) => 0.5 * l,
                (true, _) => 1.0,
                (false, _) => 1e-3,
            }
        }
    };
    let eps = ctx.flags.eps.unwrap_or_else(|| default_eps(x));
    let samples = ctx.flags.samples.unwrap_or(DEFAULT_GROWTH_SAMPLES);
    let r = growth_threshold(&p, x, &lambda, &grid, ell, eps, samples, ctx.seed, &ctx.tol)?;
    cert(
        certs,
        "growth threshold",
        Status::of(r.rho_bar.is_some()),
        match r.rho_bar {
            Some(rho) => format!("growth with modulus {ell} for every grid rho >= {rho}"),
            None => format!("no grid rho gives growth with modulus {ell}"),
        },
    );
    cert(
        certs,
        "equivalent verdicts",
        Status::of(r.agree),
        format!("sufficient {}, d2 positive {}, growth {}", r.verdicts.sufficient, r.verdicts.d2_positive, r.verdicts.growth),
    );
    let rho = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut per_dir = Vec::new();
    let dirs = match ctx.directions() {
        Ok(d) => d,
        Err(Error::Invalid(_)) => vec![],
        Err(e) => return Err(e),
    };
    for w in dirs {
        let d2 = d2_auglag(&p, x, &lambda, rho, &w, &ctx.tol)?;
        let fd = fd_second_quotient(&p, x, &lambda, rho, &w)?;
        let ok = (fd - d2).abs() <= ctx.tol.oracle_tol * (1.0 + d2.abs());
        cert(
            certs,
            format!("finite difference {:?}", vj(&w)),
            if ok { Status::Pass } else { Status::Approximate },
            format!("d2 {d2}, second difference {fd}"),
        );
        per_dir.push(json!({"w": vj(&w), "rho": rho, "d2": d2, "finite_difference": fd}));
    }
    Ok(json!({
        "lambda": vj(&lambda),
        "rho_bar": r.rho_bar,
        "ell": ell,
        "eps": eps,
        "verdicts": r.verdicts,
        "entries": r.entries.iter().map(|e| json!({
            "rho": e.rho,
            "d2_min": ext(&e.d2_min),
            "d2_positive": e.d2_positive,
            "growth_passed": e.growth.passed(),
            "violations": e.growth.violation_count,
            "ell_observed": e.growth.ell_observed,
        })).collect::<Vec<_>>(),
        "directions": per_dir,
    }))
}

fn gder(ctx: &Ctx, certs: &mut Vec<CertificateLine>, oracle: &mut Option<Value>) -> Result<Value> {
    let cs = ctx.problem.system()?;
    let bp = ctx.base_point()?;
    bp.require_feasible()?;
    let n = cs.n();
    let q = match &ctx.flags.q {
        Some(q) => {
            check_dim("graphical derivative value", n, q.len())?;
            Vector::from_column_slice(q)
        }
        None => Vector::zeros(n),
    };
    let mut out = Vec::new();
    let mut checks = Vec::new();
    let grid = ctx.grid().with_levels(7);
    for w in ctx.directions()? {
        let a = dn_omega_membership(cs, &bp, &w, &q, ctx.seed, &ctx.tol)?;
        let status = match (a.member, a.method) {
            (false, GderMethod::FaceSampled) => Status::Approximate,
            _ => Status::Pass,
        };
        cert(
            certs,
            format!("membership {:?}", vj(&w)),
            status,
            format!("{} ({})", if a.member { "member" } else { "not a member" }, a.reason.clone().unwrap_or_else(|| "witness found".into())),
        );
        let dp = match projection_derivative(cs, &(&bp.x + &bp.v), &w, &ctx.tol) {
            Ok(d) => {
                let ok = d.fd_error <= ctx.tol.oracle_tol * (1.0 + w.norm());
                cert(
                    certs,
                    format!("projection derivative {:?}", vj(&w)),
                    if ok { Status::Pass } else { Status::Approximate },
                    format!("forward-difference error {:e}", d.fd_error),
                );
                Some(d)
            }
            Err(Error::NonConvexUnsupported) => None,
            Err(e) => return Err(e),
        };
        if ctx.flags.oracle {
            let s = gph_normal_tangent_sample(cs, &bp, &w, &q, &grid, &ctx.tol)?;
            cert(
                certs,
                format!("oracle membership {:?}", vj(&w)),
                Status::of(s.member == a.member),
                format!("sampled distance {} ({:?})", s.estimate.value, s.estimate.trend),
            );
            checks.push(json!({"w": vj(&w), "member": s.member, "estimate": ext(&s.estimate.value), "trend": s.estimate.trend}));
        }
        out.push(json!({"w": vj(&w), "q": vj(&q), "answer": a, "projection_derivative": dp}));
    }
    if ctx.flags.oracle {
        *oracle = Some(Value::Array(checks));
    }
    Ok(json!({ "graphical_derivative": out }))
}

const T2_HALF_WIDTH: f64 = 10.0;
const T2_PER_AXIS: usize = 11;

fn oracle_cmd(ctx: &Ctx, certs: &mut Vec<CertificateLine>) -> Result<Value> {
    let region = ctx.region();
    let (x, v) = (&ctx.problem.x, &ctx.problem.v);
    let grid = ctx.grid();
    let mut out = Vec::new();
    for w in ctx.directions()? {
        let est = d2_quotient_estimate(region, x, v, &w, &grid, &ctx.tol)?;
        let status = if est.trend == Trend::Inconclusive { Status::Approximate } else { Status::Pass };
        cert(certs, format!("quotient estimate {:?}", vj(&w)), status, format!("{} ({:?})", est.value, est.trend));
        let mut entry = json!({"w": vj(&w), "estimate": ext(&est.value), "trend": est.trend});
        if ctx.flags.t2 {
            let e = t2_emptiness(region, x, &w, T2_HALF_WIDTH, T2_PER_AXIS, &grid, &ctx.tol)?;
            let detail = if e.empty {
                format!("T² empty (diverging) on {} grid points of [-10,10]^n", e.tested)
            } else {
                format!("T² nonempty: contains {:?}", e.counterexample.clone().unwrap_or_default())
            };
            cert(certs, format!("second-order tangent {:?}", vj(&w)), Status::Pass, detail);
            let reg = parabolic_regularity_check(region, x, v, &w, &grid, &ctx.tol)?;
            cert(
                certs,
                format!("parabolic regularity {:?}", vj(&w)),
                Status::of(reg.holds),
                match (reg.vacuous, reg.constant) {
                    (true, _) => "holds vacuously: the quotient diverges".to_string(),
                    (false, Some(c)) => format!("holds with radius constant {c}"),
                    (false, None) => "no tested radius constant recovers the limit".to_string(),
                },
            );
            entry["t2_empty"] = json!(e.empty);
            entry["t2_counterexample"] = json!(e.counterexample);
            entry["regularity"] = json!({"holds": reg.holds, "vacuous": reg.vacuous, "constant": reg.constant});
        }
        out.push(entry);
    }
    Ok(json!({ "estimates": out }))
}

fn diagnose(ctx: &Ctx, certs: &mut Vec<CertificateLine>, oracle: &mut Option<Value>) -> Result<Value> {
    let cs = ctx.problem.system()?;
    let bp = ctx.base_point()?;
    cert(certs, "feasible", Status::of(bp.feasible), format!("residual {:e}", bp.residual));
    bp.require_feasible()?;
    let kkt_residual = chain_normal_residual(cs, &bp.x, &bp.v, &ctx.tol);
    let multipliers = multiplier_set(cs, &bp, &ctx.tol)?;
    let cq = cq_diagnostics(cs, &bp, &ctx.tol, ctx.seed)?;
    let cq_status = if cq.mrcq {
        Status::Pass
    } else if cq.mscq_estimate.is_finite() {
        Status::Approximate
    } else {
        Status::Fail
    };
    cert(certs, "constraint qualification", cq_status, format!("basic condition {}, subregularity modulus estimate {}", cq.mrcq, cq.mscq_estimate));
    cert(certs, "multipliers exist", Status::of(!multipliers.is_empty()), multipliers.kind());
    let subregularity = match ctx.problem.optimization() {
        Ok(p) if !multipliers.is_empty() => {
            let s = strong_subregularity_check(&p, &ctx.problem.x, ctx.seed, &ctx.tol)?;
            cert(certs, "strong subregularity", Status::of(s.holds), format!("second-order route {}, graphical route {} (kernel-free {})", s.second_order_route, s.graphical_route, s.injective));
            Some(s)
        }
        _ => None,
    };
    if ctx.flags.oracle {
        let critical = critical_cone_omega(cs, &bp, &ctx.tol)?;
        let mut checks = Vec::new();
        for w in ctx.directions()?.into_iter().filter(|w| critical.contains(w, ctx.tol.cone(w.norm()))) {
            let e = epi_differentiability_check(cs, &bp, &w, &ctx.grid(), &ctx.tol)?;
            cert(certs, format!("oracle epi-differentiability {:?}", vj(&w)), Status::of(e.holds), format!("target {}, estimate {}", e.target, e.estimate.value));
            checks.push(json!({"w": vj(&w), "holds": e.holds, "target": ext(&e.target), "estimate": ext(&e.estimate.value)}));
        }
        *oracle = Some(Value::Array(checks));
    }
    Ok(json!({
        "kkt_residual": kkt_residual,
        "multipliers": multipliers_json(&multipliers)?,
        "cq": cq,
        "hessian_source": bp.hessian_source,
        "subregularity": subregularity,
    }))
}
