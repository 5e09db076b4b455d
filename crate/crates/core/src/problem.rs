//! The JSON problem-file format and the built-in fixture corpus.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numeric::{TolerancePolicy, Vector};
use crate::optimality::OptProblem;
use crate::oracles::EpiPower;
use crate::sets::ConvexSetSpec;
use crate::smooth::{Monomial, Polynomial, PolynomialMap, SmoothMap};
use crate::system::ConstraintSystem;

/// Target set description as it appears in a file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThetaSpec {
    /// `{y : ineq·y ≤ ineq_rhs, eq·y = eq_rhs}` with matrices given row by row.
    Polyhedron {
        dim: usize,
        #[serde(default)]
        ineq: Vec<Vec<f64>>,
        #[serde(default)]
        ineq_rhs: Vec<f64>,
        #[serde(default)]
        eq: Vec<Vec<f64>>,
        #[serde(default)]
        eq_rhs: Vec<f64>,
    },
    NonpositiveOrthant {
        dim: usize,
    },
    Soc {
        dim: usize,
    },
    Full {
        dim: usize,
    },
    Product {
        parts: Vec<ThetaSpec>,
    },
    /// The nonconvex epigraph of `max(x, 0)^α` in `ℝ²`; usable by the oracles only.
    EpiPower {
        alpha: f64,
    },
}

fn rows_to_matrix(rows: &[Vec<f64>], dim: usize) -> Result<crate::numeric::Matrix> {
    let mut m = crate::numeric::Matrix::zeros(rows.len(), dim);
    for (i, r) in rows.iter().enumerate() {
        check_dim("polyhedron row", dim, r.len())?;
        for (j, v) in r.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

impl ThetaSpec {
    pub fn dim(&self) -> usize {
        match self {
            ThetaSpec::Polyhedron { dim, .. } | ThetaSpec::NonpositiveOrthant { dim } | ThetaSpec::Soc { dim } | ThetaSpec::Full { dim } => *dim,
            ThetaSpec::Product { parts } => parts.iter().map(ThetaSpec::dim).sum(),
            ThetaSpec::EpiPower { .. } => 2,
        }
    }

    pub fn to_convex(&self) -> Result<ConvexSetSpec> {
        match self {
            ThetaSpec::Polyhedron {
                dim,
                ineq,
                ineq_rhs,
                eq,
                eq_rhs,
            } => ConvexSetSpec::polyhedron(
                *dim,
                rows_to_matrix(ineq, *dim)?,
                Vector::from_column_slice(ineq_rhs),
                rows_to_matrix(eq, *dim)?,
                Vector::from_column_slice(eq_rhs),
            ),
            ThetaSpec::NonpositiveOrthant { dim } => Ok(ConvexSetSpec::nonpositive_orthant(*dim)),
            ThetaSpec::Soc { dim } => ConvexSetSpec::soc(*dim),
            ThetaSpec::Full { dim } => Ok(ConvexSetSpec::FullSpace { dim: *dim }),
            ThetaSpec::Product { parts } => Ok(ConvexSetSpec::Product(parts.iter().map(ThetaSpec::to_convex).collect::<Result<_>>()?)),
            ThetaSpec::EpiPower { .. } => Err(Error::NonConvexUnsupported),
        }
    }
}

/// The normal `v̄` given explicitly or as the keyword `"from-phi"` (meaning `−∇φ(x̄)`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NormalSpec {
    Vector(Vec<f64>),
    Keyword(String),
}

pub const FROM_PHI: &str = "from-phi";

/// Name and parameter of the built-in fixture a file was generated from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixtureTag {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    pub m: usize,
    /// Coordinates of `f`; empty means the identity (requires `m = n`).
    #[serde(default)]
    pub f: Vec<Polynomial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Polynomial>,
    pub theta: ThetaSpec,
    pub base_point: Vec<f64>,
    #[serde(default)]
    pub directions: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normal: Option<NormalSpec>,
    /// Lagrange multiplier for the augmented Lagrangian; defaults to the least-norm element.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: TolerancePolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixture: Option<FixtureTag>,
}

/// Model built from a file.
#[derive(Clone, Debug)]
pub enum Model {
    Convex {
        cs: ConstraintSystem,
        phi: Option<Arc<PolynomialMap>>,
    },
    EpiPower(EpiPower),
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub file: ProblemFile,
    pub model: Model,
    pub x: Vector,
    pub v: Vector,
}

impl Problem {
    pub fn system(&self) -> Result<&ConstraintSystem> {
        match &self.model {
            Model::Convex { cs, .. } => Ok(cs),
            Model::EpiPower(_) => Err(Error::NonConvexUnsupported),
        }
    }

    pub fn optimization(&self) -> Result<OptProblem> {
        match &self.model {
            Model::Convex { cs, phi: Some(phi) } => OptProblem::new(phi.clone(), cs.clone()),
            Model::Convex { phi: None, .. } => Err(Error::Invalid("command requires an objective phi".into())),
            Model::EpiPower(_) => Err(Error::NonConvexUnsupported),
        }
    }

    pub fn directions(&self) -> Result<Vec<Vector>> {
        self.file.directions.iter().map(|d| {
            check_dim("direction", self.file.n, d.len())?;
            Ok(Vector::from_column_slice(d))
        }).collect()
    }
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    pub fn build(&self) -> Result<Problem> {
        self.tolerances.validate()?;
        check_dim("base point", self.n, self.base_point.len())?;
        check_dim("target set", self.m, self.theta.dim())?;
        let x = Vector::from_column_slice(&self.base_point);
        let phi = match &self.phi {
            Some(p) => Some(Arc::new(PolynomialMap::new(self.n, vec![p.clone()])?)),
            None => None,
        };
        let model = if let ThetaSpec::EpiPower { alpha } = &self.theta {
            check_dim("epigraph dimension", 2, self.n)?;
            if !self.f.is_empty() || phi.is_some() {
                return Err(Error::Invalid("the epigraph fixture takes no map and no objective".into()));
            }
            Model::EpiPower(EpiPower::new(*alpha)?)
        } else {
            let f = if self.f.is_empty() {
                check_dim("identity map", self.n, self.m)?;
                PolynomialMap::identity(self.n)
            } else {
                check_dim("map coordinates", self.m, self.f.len())?;
                PolynomialMap::new(self.n, self.f.clone())?
            };
            Model::Convex {
                cs: ConstraintSystem::new(Arc::new(f), self.theta.to_convex()?)?,
                phi,
            }
        };
        let from_phi = |model: &Model| -> Result<Vector> {
            match model {
                Model::Convex { phi: Some(phi), .. } => Ok(-phi.jacobian(&x).row(0).transpose()),
                _ => Err(Error::Invalid("\"from-phi\" requires an objective phi".into())),
            }
        };
        let v = match &self.normal {
            Some(NormalSpec::Vector(v)) => {
                check_dim("normal", self.n, v.len())?;
                Vector::from_column_slice(v)
            }
            Some(NormalSpec::Keyword(k)) if k == FROM_PHI => from_phi(&model)?,
            Some(NormalSpec::Keyword(k)) => return Err(Error::Invalid(format!("unknown normal keyword {k:?}"))),
            None if self.phi.is_some() => from_phi(&model)?,
            None => Vector::zeros(self.n),
        };
        if let Some(l) = &self.lambda {
            check_dim("multiplier", self.m, l.len())?;
        }
        for d in &self.directions {
            check_dim("direction", self.n, d.len())?;
        }
        Ok(Problem {
            file: self.clone(),
            model,
            x,
            v,
        })
    }
}

/// Names of the shipped fixtures.
pub fn list_fixtures() -> Vec<&'static str> {
    vec![
        "orthant",
        "parabola",
        "soc_boundary",
        "soc_vertex",
        "degenerate_multipliers",
        "intersection_halfplanes",
        "epi_alpha",
        "strongly_convex",
    ]
}

fn mono(coeff: f64, exp: &[u32]) -> Monomial {
    Monomial::new(coeff, exp)
}

fn poly(terms: &[(f64, &[u32])]) -> Polynomial {
    Polynomial::new(terms.iter().map(|(c, e)| mono(*c, e)).collect())
}

fn base(n: usize, m: usize, theta: ThetaSpec, x: &[f64]) -> ProblemFile {
    ProblemFile {
        n,
        m,
        f: vec![],
        phi: None,
        theta,
        base_point: x.to_vec(),
        directions: vec![],
        normal: None,
        lambda: None,
        tolerances: TolerancePolicy::default(),
        seed: 0,
        fixture: None,
    }
}

/// A built-in fixture; `param` is `c` for `parabola` (default 0) and `α` for `epi_alpha`
/// (default 1.5).
pub fn fixture(name: &str, param: Option<f64>) -> Result<ProblemFile> {
    let mut p = match name {
        "orthant" => {
            let mut p = base(2, 2, ThetaSpec::NonpositiveOrthant { dim: 2 }, &[0.0, 0.0]);
            p.phi = Some(poly(&[(-1.0, &[1, 0]), (1.0, &[0, 2])]));
            p.directions = vec![vec![0.0, -1.0], vec![1.0, 0.0]];
            p
        }
        "parabola" => {
            let c = param.unwrap_or(0.0);
            let mut p = base(2, 1, ThetaSpec::NonpositiveOrthant { dim: 1 }, &[0.0, 0.0]);
            p.f = vec![poly(&[(1.0, &[2, 0]), (-1.0, &[0, 1])])];
            p.phi = Some(poly(&[(1.0, &[0, 1]), (c, &[2, 0])]));
            p.directions = vec![vec![1.0, 0.0]];
            p.lambda = Some(vec![1.0]);
            p
        }
        "soc_boundary" => {
            let mut p = base(3, 3, ThetaSpec::Soc { dim: 3 }, &[1.0, 0.0, 1.0]);
            p.phi = Some(poly(&[
                (-2.0, &[1, 0, 0]),
                (0.5, &[2, 0, 0]),
                (0.5, &[0, 2, 0]),
                (0.5, &[0, 0, 2]),
                (1.0, &[0, 0, 0]),
            ]));
            p.directions = vec![vec![1.0, 1.0, 1.0]];
            p
        }
        "soc_vertex" => {
            let mut p = base(3, 3, ThetaSpec::Soc { dim: 3 }, &[0.0, 0.0, 0.0]);
            p.f = vec![
                poly(&[(1.0, &[1, 0, 0])]),
                poly(&[(1.0, &[0, 1, 0])]),
                poly(&[(1.0, &[0, 0, 1]), (-1.0, &[2, 0, 0])]),
            ];
            p.phi = Some(poly(&[
                (-1.0, &[1, 0, 0]),
                (1.0, &[0, 0, 1]),
                (1.0, &[2, 0, 0]),
                (1.0, &[0, 2, 0]),
                (1.0, &[0, 0, 2]),
            ]));
            p.directions = vec![vec![1.0, 0.0, 1.0]];
            p
        }
        "degenerate_multipliers" => {
            let mut p = base(1, 2, ThetaSpec::NonpositiveOrthant { dim: 2 }, &[0.0]);
            p.f = vec![poly(&[(1.0, &[1])]), poly(&[(1.0, &[1])])];
            p.phi = Some(poly(&[(-1.0, &[1])]));
            p.directions = vec![vec![0.0], vec![-1.0]];
            p
        }
        "intersection_halfplanes" => {
            let halfplane = |a: f64, b: f64| ThetaSpec::Polyhedron {
                dim: 2,
                ineq: vec![vec![a, b]],
                ineq_rhs: vec![0.0],
                eq: vec![],
                eq_rhs: vec![],
            };
            let mut p = base(2, 4, ThetaSpec::Product { parts: vec![halfplane(1.0, 1.0), halfplane(1.0, -1.0)] }, &[0.0, 0.0]);
            p.f = vec![
                poly(&[(1.0, &[1, 0])]),
                poly(&[(1.0, &[0, 1])]),
                poly(&[(1.0, &[1, 0])]),
                poly(&[(1.0, &[0, 1])]),
            ];
            p.phi = Some(poly(&[(-1.0, &[1, 0]), (-1.0, &[0, 1]), (0.5, &[2, 0]), (0.5, &[0, 2])]));
            p.directions = vec![vec![-1.0, 1.0], vec![1.0, 0.0]];
            p
        }
        "epi_alpha" => {
            let alpha = param.unwrap_or(1.5);
            let mut p = base(2, 2, ThetaSpec::EpiPower { alpha }, &[0.0, 0.0]);
            p.normal = Some(NormalSpec::Vector(vec![0.0, -1.0]));
            p.directions = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
            p
        }
        "strongly_convex" => {
            let mut p = base(2, 2, ThetaSpec::Full { dim: 2 }, &[0.0, 0.0]);
            p.phi = Some(poly(&[(1.0, &[2, 0]), (1.0, &[0, 2])]));
            p.directions = vec![vec![1.0, 0.0]];
            p
        }
        other => return Err(Error::Invalid(format!("unknown fixture {other:?}"))),
    };
    p.fixture = Some(FixtureTag {
        name: name.to_string(),
        param: match name {
            "parabola" => Some(param.unwrap_or(0.0)),
            "epi_alpha" => Some(param.unwrap_or(1.5)),
            _ => None,
        },
    });
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_contents() {
        let names = list_fixtures();
        assert!(names.len() >= 8);
        assert!(names.contains(&"parabola") && names.contains(&"epi_alpha"));
        assert!(fixture("nope", None).is_err());
    }

    #[test]
    fn every_fixture_round_trips_and_builds() {
        for name in list_fixtures() {
            let f = fixture(name, None).unwrap();
            let back = ProblemFile::parse(&f.to_json()).unwrap();
            assert_eq!(back, f, "{name}");
            let p = back.build().unwrap();
            assert_eq!(p.x.len(), f.n);
            if let Ok(cs) = p.system() {
                assert!(cs.residual(&p.x).unwrap() < 1e-12, "{name}");
            }
        }
    }

    #[test]
    fn normals_resolve() {
        let p = fixture("parabola", Some(2.0)).unwrap().build().unwrap();
        assert_eq!(p.v.as_slice(), &[0.0, -1.0]);
        let p = fixture("soc_boundary", None).unwrap().build().unwrap();
        assert_eq!(p.v.as_slice(), &[1.0, 0.0, -1.0]);
        let p = fixture("epi_alpha", None).unwrap().build().unwrap();
        assert!(matches!(p.model, Model::EpiPower(_)));
        assert_eq!(p.system().unwrap_err(), Error::NonConvexUnsupported);
    }

    #[test]
    fn parse_errors_carry_positions() {
        let text = "{\n  \"n\": 2,\n  \"bogus\": 1\n}";
        match ProblemFile::parse(text).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("bogus"));
            }
            e => panic!("{e:?}"),
        }
        let text = "{\"n\": 2, \"m\": 1, \"theta\": {\"kind\": \"soc\", \"dim\": 3, \"x\": 1}, \"base_point\": [0, 0]}";
        assert!(matches!(ProblemFile::parse(text), Err(Error::Parse { .. })));
        let mut f = fixture("orthant", None).unwrap();
        f.base_point.push(1.0);
        assert!(matches!(f.build(), Err(Error::DimensionMismatch { .. })));
        let mut f = fixture("orthant", None).unwrap();
        f.normal = Some(NormalSpec::Keyword("from-psi".into()));
        assert!(matches!(f.build(), Err(Error::Invalid(_))));
    }
}
