//! Python bindings: problem files, the batch commands, and the main pointwise operations.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use parareg_core::auglag::d2_auglag as core_d2_auglag;
use parareg_core::commands::{load_problem, run_command, Command, Flags};
use parareg_core::error::Error;
use parareg_core::gder::dn_omega_membership;
use parareg_core::numeric::{ExtReal, Vector};
use parareg_core::optimality::second_order_conditions;
use parareg_core::oracles::{d2_quotient_estimate, QuotientGrid, Region};
use parareg_core::problem::{fixture, list_fixtures as core_list_fixtures, Model, ProblemFile};
use parareg_core::subderivative::{d2_delta_omega as core_d2, is_critical, Certificate, D2Options};
use parareg_core::system::{multiplier_set, BasePoint};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn ext_to_f64(e: ExtReal) -> f64 {
    e.to_f64()
}

/// A parsed problem file.
#[pyclass(name = "Problem", module = "parareg", skip_from_py_object)]
#[derive(Clone)]
struct PyProblem {
    file: ProblemFile,
}

#[pymethods]
impl PyProblem {
    #[staticmethod]
    #[pyo3(signature = (name, param=None))]
    fn fixture(name: &str, param: Option<f64>) -> PyResult<Self> {
        Ok(Self {
            file: fixture(name, param).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            file: ProblemFile::parse(text).map_err(err)?,
        })
    }

    /// Reads a path, or a built-in fixture name; `c` regenerates parameterized fixtures.
    #[staticmethod]
    #[pyo3(signature = (source, c=None))]
    fn load(source: &str, c: Option<f64>) -> PyResult<Self> {
        Ok(Self {
            file: load_problem(source, c).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.file.to_json()
    }

    #[getter]
    fn n(&self) -> usize {
        self.file.n
    }

    #[getter]
    fn m(&self) -> usize {
        self.file.m
    }

    #[getter]
    fn base_point(&self) -> Vec<f64> {
        self.file.base_point.clone()
    }

    #[getter]
    fn directions(&self) -> Vec<Vec<f64>> {
        self.file.directions.clone()
    }

    fn __repr__(&self) -> String {
        match &self.file.fixture {
            Some(t) => format!("Problem(fixture={:?}, n={}, m={})", t.name, self.file.n, self.file.m),
            None => format!("Problem(n={}, m={})", self.file.n, self.file.m),
        }
    }
}

fn base(p: &PyProblem) -> PyResult<(parareg_core::problem::Problem, BasePoint)> {
    let built = p.file.build().map_err(err)?;
    let cs = built.system().map_err(err)?;
    let bp = BasePoint::new(cs, built.x.clone(), built.v.clone(), &p.file.tolerances).map_err(err)?;
    Ok((built, bp))
}

#[pyfunction]
fn list_fixtures() -> Vec<String> {
    core_list_fixtures().into_iter().map(String::from).collect()
}

/// Runs a batch command; returns the report as a dict and its exit code.
#[pyfunction]
#[pyo3(signature = (command, problem, w=None, rho_grid=None, eps=None, ell=None, seed=None, samples=None, oracle=false, t2=false))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    command: &str,
    problem: &PyProblem,
    w: Option<Vec<f64>>,
    rho_grid: Option<Vec<f64>>,
    eps: Option<f64>,
    ell: Option<f64>,
    seed: Option<u64>,
    samples: Option<usize>,
    oracle: bool,
    t2: bool,
) -> PyResult<(Py<PyAny>, i32)> {
    let cmd: Command = command.parse().map_err(err)?;
    let flags = Flags {
        w,
        rho_grid,
        eps,
        ell,
        seed,
        samples,
        oracle,
        t2,
        ..Flags::default()
    };
    let file = problem.file.clone();
    let report = py.detach(|| run_command(cmd, &file, &flags)).map_err(err)?;
    Ok((to_py(py, &report)?, report.exit_code()))
}

/// Second subderivative of the constraint-set indicator at the file's base pair:
/// `(value, exact)`; the value is `inf` off the critical cone.
#[pyfunction]
fn d2_delta_omega(problem: &PyProblem, w: Vec<f64>) -> PyResult<(f64, bool)> {
    let (built, bp) = base(problem)?;
    let d = core_d2(built.system().map_err(err)?, &bp, &Vector::from_vec(w), &D2Options::default(), &problem.file.tolerances).map_err(err)?;
    Ok((ext_to_f64(d.value), matches!(d.certificate, Certificate::Exact)))
}

#[pyfunction]
fn critical(problem: &PyProblem, w: Vec<f64>) -> PyResult<bool> {
    let (built, bp) = base(problem)?;
    is_critical(built.system().map_err(err)?, &bp, &Vector::from_vec(w), &problem.file.tolerances).map_err(err)
}

/// Multiplier set kind and its least-norm element.
#[pyfunction]
fn multipliers(problem: &PyProblem) -> PyResult<(String, Option<Vec<f64>>)> {
    let (built, bp) = base(problem)?;
    let set = multiplier_set(built.system().map_err(err)?, &bp, &problem.file.tolerances).map_err(err)?;
    let least = set.min_norm().map_err(err)?.map(|l| l.as_slice().to_vec());
    Ok((set.kind().to_string(), least))
}

/// Second-order necessary and sufficient conditions for minimizing `phi` over the set.
#[pyfunction]
#[pyo3(signature = (problem, seed=0))]
fn optimality(py: Python<'_>, problem: &PyProblem, seed: u64) -> PyResult<Py<PyAny>> {
    let built = problem.file.build().map_err(err)?;
    let p = built.optimization().map_err(err)?;
    let tol = problem.file.tolerances;
    let c = py.detach(|| second_order_conditions(&p, &built.x, seed, &tol)).map_err(err)?;
    to_py(py, &c)
}

/// Second semiderivative of the augmented Lagrangian at `(x̄, λ)`; `lam` defaults to the
/// file's multiplier or the least-norm one.
#[pyfunction]
#[pyo3(signature = (problem, rho, w, lam=None))]
fn d2_auglag(problem: &PyProblem, rho: f64, w: Vec<f64>, lam: Option<Vec<f64>>) -> PyResult<f64> {
    let built = problem.file.build().map_err(err)?;
    let p = built.optimization().map_err(err)?;
    let tol = problem.file.tolerances;
    let lambda = match lam.or_else(|| problem.file.lambda.clone()) {
        Some(l) => Vector::from_vec(l),
        None => {
            let bp = p.base_point(&built.x, &tol).map_err(err)?;
            multiplier_set(&p.cs, &bp, &tol).map_err(err)?.min_norm().map_err(err)?.ok_or_else(|| err(Error::NoMultipliers))?
        }
    };
    core_d2_auglag(&p, &built.x, &lambda, rho, &Vector::from_vec(w), &tol).map_err(err)
}

/// Membership of `q` in the graphical derivative of the normal cone mapping at `w`.
#[pyfunction]
#[pyo3(signature = (problem, w, q, seed=0))]
fn gder_member(py: Python<'_>, problem: &PyProblem, w: Vec<f64>, q: Vec<f64>, seed: u64) -> PyResult<Py<PyAny>> {
    let (built, bp) = base(problem)?;
    let a = dn_omega_membership(built.system().map_err(err)?, &bp, &Vector::from_vec(w), &Vector::from_vec(q), seed, &problem.file.tolerances).map_err(err)?;
    to_py(py, &a)
}

/// Brute-force difference-quotient estimate of the second subderivative: `(value, trend)`.
#[pyfunction]
#[pyo3(signature = (problem, w, seed=0, samples=2000))]
fn quotient_estimate(py: Python<'_>, problem: &PyProblem, w: Vec<f64>, seed: u64, samples: usize) -> PyResult<(f64, String)> {
    let built = problem.file.build().map_err(err)?;
    let tol = problem.file.tolerances;
    let grid = QuotientGrid::default().with_seed(seed).with_samples(samples);
    let w = Vector::from_vec(w);
    let est = py
        .detach(|| {
            let region: &dyn Region = match &built.model {
                Model::Convex { cs, .. } => cs,
                Model::EpiPower(e) => e,
            };
            d2_quotient_estimate(region, &built.x, &built.v, &w, &grid, &tol)
        })
        .map_err(err)?;
    let trend = serde_json::to_value(est.trend).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok((ext_to_f64(est.value), trend.as_str().unwrap_or_default().to_string()))
}

#[pymodule]
fn parareg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(list_fixtures, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(d2_delta_omega, m)?)?;
    m.add_function(wrap_pyfunction!(critical, m)?)?;
    m.add_function(wrap_pyfunction!(multipliers, m)?)?;
    m.add_function(wrap_pyfunction!(optimality, m)?)?;
    m.add_function(wrap_pyfunction!(d2_auglag, m)?)?;
    m.add_function(wrap_pyfunction!(gder_member, m)?)?;
    m.add_function(wrap_pyfunction!(quotient_estimate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
