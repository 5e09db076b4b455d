//! Twice-differentiable maps `ℝⁿ → ℝᵐ`: a polynomial implementation with exact
//! derivatives and a closure-backed implementation with optional finite-difference Hessians.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numeric::{BilinearMap, Matrix, Vector};

/// How second derivatives are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianSource {
    Exact,
    FdHessian,
}

pub trait SmoothMap: Send + Sync + fmt::Debug {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn value(&self, x: &Vector) -> Vector;
    fn jacobian(&self, x: &Vector) -> Matrix;
    fn hessian(&self, x: &Vector) -> BilinearMap;

    fn hessian_source(&self) -> HessianSource {
        HessianSource::Exact
    }

    /// The polynomial form, when the map has one.
    fn polynomial(&self) -> Option<&PolynomialMap> {
        None
    }
}

/// `coeff · Π x_i^{exp_i}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    pub exp: Vec<u32>,
}

impl Monomial {
    pub fn new(coeff: f64, exp: &[u32]) -> Self {
        Self {
            coeff,
            exp: exp.to_vec(),
        }
    }

    fn eval_with(&self, x: &Vector, skip: &[usize]) -> f64 {
        // Evaluates coeff·Π x_i^{e_i} after differentiating once in each index of `skip`.
        let mut e: Vec<i64> = self.exp.iter().map(|v| *v as i64).collect();
        let mut c = self.coeff;
        for &i in skip {
            if e[i] <= 0 {
                return 0.0;
            }
            c *= e[i] as f64;
            e[i] -= 1;
        }
        for (i, p) in e.iter().enumerate() {
            if *p > 0 {
                c *= x[i].powi(*p as i32);
            }
        }
        c
    }
}

/// A real polynomial in `n` variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    pub terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Self { terms }
    }

    /// Total degree over terms with nonzero coefficients.
    pub fn degree(&self) -> u32 {
        self.terms.iter().filter(|m| m.coeff != 0.0).map(|m| m.exp.iter().sum()).max().unwrap_or(0)
    }

    /// The coordinate function `x_i`.
    pub fn coordinate(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Self::new(vec![Monomial { coeff: 1.0, exp: e }])
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        self.terms.iter().map(|t| t.eval_with(x, &[])).sum()
    }

    pub fn grad(&self, x: &Vector) -> Vector {
        Vector::from_iterator(
            x.len(),
            (0..x.len()).map(|i| self.terms.iter().map(|t| t.eval_with(x, &[i])).sum()),
        )
    }

    pub fn hess(&self, x: &Vector) -> Matrix {
        let n = x.len();
        let mut h = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v: f64 = self.terms.iter().map(|t| t.eval_with(x, &[i, j])).sum();
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    fn check(&self, n: usize) -> Result<()> {
        for t in &self.terms {
            check_dim("monomial exponent vector", n, t.exp.len())?;
            if !t.coeff.is_finite() {
                return Err(Error::Invalid("non-finite monomial coefficient".into()));
            }
        }
        Ok(())
    }
}

/// A polynomial map with exact derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialMap {
    n: usize,
    coords: Vec<Polynomial>,
}

impl PolynomialMap {
    pub fn degree(&self) -> u32 {
        self.coords.iter().map(Polynomial::degree).max().unwrap_or(0)
    }

    pub fn new(n: usize, coords: Vec<Polynomial>) -> Result<Self> {
        for c in &coords {
            c.check(n)?;
        }
        Ok(Self { n, coords })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            coords: (0..n).map(|i| Polynomial::coordinate(n, i)).collect(),
        }
    }

    pub fn coords(&self) -> &[Polynomial] {
        &self.coords
    }

    /// Stacks two maps with the same input dimension: `x ↦ (f(x), g(x))`.
    pub fn stack(&self, other: &PolynomialMap) -> Result<PolynomialMap> {
        check_dim("stacked map inputs", self.n, other.n)?;
        let mut coords = self.coords.clone();
        coords.extend(other.coords.iter().cloned());
        Ok(PolynomialMap { n: self.n, coords })
    }
}

impl SmoothMap for PolynomialMap {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.coords.len()
    }

    fn value(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.coords.len(), self.coords.iter().map(|c| c.eval(x)))
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        let mut j = Matrix::zeros(self.coords.len(), self.n);
        for (i, c) in self.coords.iter().enumerate() {
            j.set_row(i, &c.grad(x).transpose());
        }
        j
    }

    fn hessian(&self, x: &Vector) -> BilinearMap {
        BilinearMap::symmetrized(self.n, self.coords.iter().map(|c| c.hess(x)).collect())
    }

    fn polynomial(&self) -> Option<&PolynomialMap> {
        Some(self)
    }
}

type ValueFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type JacobianFn = dyn Fn(&Vector) -> Matrix + Send + Sync;
type HessianFn = dyn Fn(&Vector) -> BilinearMap + Send + Sync;

/// A map given by closures. Without a Hessian closure, second derivatives come from
/// central differences of the Jacobian with step `1e-5·(1 + ‖x‖)`.
#[derive(Clone)]
pub struct FnMap {
    n: usize,
    m: usize,
    value: Arc<ValueFn>,
    jacobian: Arc<JacobianFn>,
    hessian: Option<Arc<HessianFn>>,
}

impl fmt::Debug for FnMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnMap")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("exact_hessian", &self.hessian.is_some())
            .finish()
    }
}

impl FnMap {
    pub fn new(
        n: usize,
        m: usize,
        value: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        jacobian: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            n,
            m,
            value: Arc::new(value),
            jacobian: Arc::new(jacobian),
            hessian: None,
        }
    }

    pub fn with_hessian(mut self, h: impl Fn(&Vector) -> BilinearMap + Send + Sync + 'static) -> Self {
        self.hessian = Some(Arc::new(h));
        self
    }
}

/// Central-difference Hessian of a map from its Jacobian.
pub fn fd_hessian(jac: &dyn Fn(&Vector) -> Matrix, x: &Vector, m: usize) -> BilinearMap {
    let n = x.len();
    let h = 1e-5 * (1.0 + x.norm());
    let mut forms = vec![Matrix::zeros(n, n); m];
    for k in 0..n {
        let mut xp = x.clone();
        xp[k] += h;
        let mut xm = x.clone();
        xm[k] -= h;
        let d = (jac(&xp) - jac(&xm)) / (2.0 * h);
        for (i, form) in forms.iter_mut().enumerate() {
            for j in 0..n {
                form[(j, k)] = d[(i, j)];
            }
        }
    }
    BilinearMap::symmetrized(n, forms)
}

impl SmoothMap for FnMap {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.m
    }

    fn value(&self, x: &Vector) -> Vector {
        (self.value)(x)
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        (self.jacobian)(x)
    }

    fn hessian(&self, x: &Vector) -> BilinearMap {
        match &self.hessian {
            Some(h) => h(x),
            None => fd_hessian(&|z| (self.jacobian)(z), x, self.m),
        }
    }

    fn hessian_source(&self) -> HessianSource {
        if self.hessian.is_some() {
            HessianSource::Exact
        } else {
            HessianSource::FdHessian
        }
    }
}
