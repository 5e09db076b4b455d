//! Dense two-phase tableau simplex with Dantzig pricing and a Bland fallback.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::numeric::{ExtReal, Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// `opt cᵀx` subject to `Ex = e`, `Ax ≤ b` and optional per-variable bounds.
/// Variables are free unless bounded.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vector,
    pub eq_rows: Matrix,
    pub eq_rhs: Vector,
    pub ineq_rows: Matrix,
    pub ineq_rhs: Vector,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
}

impl LinearProgram {
    pub fn new(sense: Sense, objective: Vector) -> Self {
        let n = objective.len();
        Self {
            sense,
            objective,
            eq_rows: Matrix::zeros(0, n),
            eq_rhs: Vector::zeros(0),
            ineq_rows: Matrix::zeros(0, n),
            ineq_rhs: Vector::zeros(0),
            lower: vec![None; n],
            upper: vec![None; n],
        }
    }

    pub fn minimize(objective: Vector) -> Self {
        Self::new(Sense::Minimize, objective)
    }

    pub fn maximize(objective: Vector) -> Self {
        Self::new(Sense::Maximize, objective)
    }

    pub fn with_eq(mut self, rows: Matrix, rhs: Vector) -> Self {
        self.eq_rows = rows;
        self.eq_rhs = rhs;
        self
    }

    pub fn with_ineq(mut self, rows: Matrix, rhs: Vector) -> Self {
        self.ineq_rows = rows;
        self.ineq_rhs = rhs;
        self
    }

    pub fn nonnegative(mut self) -> Self {
        self.lower = vec![Some(0.0); self.objective.len()];
        self
    }

    pub fn dim(&self) -> usize {
        self.objective.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.eq_rows.nrows() > 0 {
            check_dim("lp equality columns", n, self.eq_rows.ncols())?;
        }
        check_dim("lp equality rhs", self.eq_rows.nrows(), self.eq_rhs.len())?;
        if self.ineq_rows.nrows() > 0 {
            check_dim("lp inequality columns", n, self.ineq_rows.ncols())?;
        }
        check_dim("lp inequality rhs", self.ineq_rows.nrows(), self.ineq_rhs.len())?;
        check_dim("lp lower bounds", n, self.lower.len())?;
        check_dim("lp upper bounds", n, self.upper.len())?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solution record. Dual multipliers satisfy `c = Eᵀ y_eq + Aᵀ y_ineq` at optimality,
/// with bound rows appended to `y_ineq` after the explicit inequalities
/// (lower bounds first, then upper bounds, in variable order).
/// `y_ineq ≤ 0` for minimization and `≥ 0` for maximization.
#[derive(Clone, Debug)]
pub struct LpResult {
    pub status: LpStatus,
    pub value: ExtReal,
    pub x: Vector,
    pub y_eq: Vector,
    pub y_ineq: Vector,
}

impl LpResult {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

const PIVOT_TOL: f64 = 1e-11;

struct Tableau {
    t: Matrix,
    basis: Vec<usize>,
    rows: usize,
    cols: usize,
    degenerate: usize,
    degenerate_cap: usize,
}

impl Tableau {
    fn obj(&self) -> usize {
        self.rows
    }

    fn rhs(&self) -> usize {
        self.cols
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[(r, c)];
        let width = self.cols + 1;
        for j in 0..width {
            self.t[(r, j)] /= p;
        }
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.t[(i, c)];
            if f != 0.0 {
                for j in 0..width {
                    let v = self.t[(r, j)];
                    if v != 0.0 {
                        self.t[(i, j)] -= f * v;
                    }
                }
                self.t[(i, c)] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    fn run(&mut self, allowed: &[bool]) -> Result<bool> {
        let mut bland = false;
        let max_iter = 50 * (self.rows + self.cols) + 100;
        for _ in 0..max_iter {
            let obj = self.obj();
            let mut enter = None;
            let mut best = -PIVOT_TOL;
            for j in 0..self.cols {
                if !allowed[j] {
                    continue;
                }
                let d = self.t[(obj, j)];
                if bland {
                    if d < -PIVOT_TOL {
                        enter = Some(j);
                        break;
                    }
                } else if d < best {
                    best = d;
                    enter = Some(j);
                }
            }
            let Some(c) = enter else {
                return Ok(true);
            };
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.rows {
                let a = self.t[(i, c)];
                if a > PIVOT_TOL {
                    let r = self.t[(i, self.rhs())] / a;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            r < ratio - 1e-12
                                || (r <= ratio + 1e-12 && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        ratio = r;
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else {
                return Ok(false);
            };
            if ratio.abs() <= 1e-12 {
                self.degenerate += 1;
                if self.degenerate > (self.rows + self.cols) / 2 + 5 {
                    bland = true;
                }
                if self.degenerate > self.degenerate_cap {
                    return Err(Error::NumericalFailure(format!(
                        "simplex exceeded {} degenerate pivots",
                        self.degenerate_cap
                    )));
                }
            }
            self.pivot(r, c);
        }
        Err(Error::NumericalFailure("simplex iteration limit reached".into()))
    }
}

/// Solves a linear program with the two-phase simplex method.
pub fn solve_lp(p: &LinearProgram) -> Result<LpResult> {
    p.validate()?;
    let n = p.dim();

    // Collect all inequality rows, including bound rows.
    let mut a_rows: Vec<Vec<f64>> = Vec::new();
    let mut a_rhs: Vec<f64> = Vec::new();
    for i in 0..p.ineq_rows.nrows() {
        a_rows.push(p.ineq_rows.row(i).iter().cloned().collect());
        a_rhs.push(p.ineq_rhs[i]);
    }
    for (j, lb) in p.lower.iter().enumerate() {
        if let Some(l) = lb {
            let mut r = vec![0.0; n];
            r[j] = -1.0;
            a_rows.push(r);
            a_rhs.push(-l);
        }
    }
    for (j, ub) in p.upper.iter().enumerate() {
        if let Some(u) = ub {
            let mut r = vec![0.0; n];
            r[j] = 1.0;
            a_rows.push(r);
            a_rhs.push(*u);
        }
    }
    let n_ineq = a_rows.len();
    let n_eq = p.eq_rows.nrows();
    let rows = n_ineq + n_eq;

    // Column layout: x⁺ (n), x⁻ (n), slacks (n_ineq), artificials (one per row needing one).
    let mut flipped = vec![false; rows];
    let mut needs_art = vec![false; rows];
    for i in 0..n_ineq {
        if a_rhs[i] < 0.0 {
            flipped[i] = true;
            needs_art[i] = true;
        }
    }
    for i in 0..n_eq {
        needs_art[n_ineq + i] = true;
        if p.eq_rhs[i] < 0.0 {
            flipped[n_ineq + i] = true;
        }
    }
    let n_art = needs_art.iter().filter(|b| **b).count();
    let cols = 2 * n + n_ineq + n_art;
    let art_start = 2 * n + n_ineq;
    let mut t = Matrix::zeros(rows + 1, cols + 1);
    let mut basis = vec![0usize; rows];
    // Column whose original entry is e_i; used to read off duals.
    let mut unit_col = vec![0usize; rows];
    let mut art = art_start;
    for i in 0..rows {
        let sgn = if flipped[i] { -1.0 } else { 1.0 };
        let (coef, rhs): (Vec<f64>, f64) = if i < n_ineq {
            (a_rows[i].clone(), a_rhs[i])
        } else {
            let k = i - n_ineq;
            (p.eq_rows.row(k).iter().cloned().collect(), p.eq_rhs[k])
        };
        for j in 0..n {
            t[(i, j)] = sgn * coef[j];
            t[(i, n + j)] = -sgn * coef[j];
        }
        if i < n_ineq {
            t[(i, 2 * n + i)] = sgn;
        }
        t[(i, cols)] = sgn * rhs;
        if needs_art[i] {
            t[(i, art)] = 1.0;
            basis[i] = art;
            unit_col[i] = art;
            art += 1;
        } else {
            basis[i] = 2 * n + i;
            unit_col[i] = 2 * n + i;
        }
    }
    let mut tab = Tableau {
        t,
        basis,
        rows,
        cols,
        degenerate: 0,
        degenerate_cap: 10 * (rows + cols),
    };

    // Phase 1: minimize the sum of artificials.
    let all = vec![true; cols];
    if n_art > 0 {
        for i in 0..rows {
            if needs_art[i] {
                for j in 0..=cols {
                    let v = tab.t[(i, j)];
                    tab.t[(rows, j)] -= v;
                }
            }
        }
        for j in art_start..cols {
            tab.t[(rows, j)] = 0.0;
        }
        tab.run(&all)?;
        let infeas = -tab.t[(rows, cols)];
        let scale = 1.0
            + a_rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            + p.eq_rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if infeas > 1e-9 * scale {
            return Ok(LpResult {
                status: LpStatus::Infeasible,
                value: match p.sense {
                    Sense::Minimize => ExtReal::PosInf,
                    Sense::Maximize => ExtReal::NegInf,
                },
                x: Vector::zeros(n),
                y_eq: Vector::zeros(n_eq),
                y_ineq: Vector::zeros(n_ineq),
            });
        }
        // Drive zero-level artificials out of the basis where possible.
        for i in 0..rows {
            if tab.basis[i] >= art_start {
                let mut best = None;
                let mut mag = 1e-9;
                for j in 0..art_start {
                    let a = tab.t[(i, j)].abs();
                    if a > mag {
                        mag = a;
                        best = Some(j);
                    }
                }
                if let Some(j) = best {
                    tab.pivot(i, j);
                }
            }
        }
    }

    // Phase 2 objective (always minimize internally).
    let sgn_obj = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let mut cost = vec![0.0; cols];
    for j in 0..n {
        cost[j] = sgn_obj * p.objective[j];
        cost[n + j] = -sgn_obj * p.objective[j];
    }
    for j in 0..=cols {
        tab.t[(rows, j)] = if j < cols { cost[j] } else { 0.0 };
    }
    for i in 0..rows {
        let cb = cost[tab.basis[i]];
        if cb != 0.0 {
            for j in 0..=cols {
                let v = tab.t[(i, j)];
                tab.t[(rows, j)] -= cb * v;
            }
        }
    }
    let mut allowed = vec![true; cols];
    for a in allowed.iter_mut().skip(art_start) {
        *a = false;
    }
    tab.degenerate = 0;
    let bounded = tab.run(&allowed)?;

    let mut xs = vec![0.0; cols];
    for i in 0..rows {
        xs[tab.basis[i]] = tab.t[(i, cols)];
    }
    let x = Vector::from_iterator(n, (0..n).map(|j| xs[j] - xs[n + j]));
    if !bounded {
        return Ok(LpResult {
            status: LpStatus::Unbounded,
            value: match p.sense {
                Sense::Minimize => ExtReal::NegInf,
                Sense::Maximize => ExtReal::PosInf,
            },
            x,
            y_eq: Vector::zeros(n_eq),
            y_ineq: Vector::zeros(n_ineq),
        });
    }
    // Simplex multipliers y_i = c_B B⁻¹ e_i = c_{j_i} − d_{j_i}; all unit columns have zero cost.
    let mut y = vec![0.0; rows];
    for i in 0..rows {
        let d = tab.t[(rows, unit_col[i])];
        let yi = -d;
        let yi = if flipped[i] { -yi } else { yi };
        y[i] = sgn_obj * yi;
    }
    let value = p.objective.dot(&x);
    Ok(LpResult {
        status: LpStatus::Optimal,
        value: ExtReal::Finite(value),
        x,
        y_eq: Vector::from_iterator(n_eq, y[n_ineq..].iter().cloned()),
        y_ineq: Vector::from_iterator(n_ineq, y[..n_ineq].iter().cloned()),
    })
}

/// Finds any point of `{x : Ex = e, Ax ≤ b}`, or `None` when the set is empty.
pub fn feasible_point(eq: &Matrix, eq_rhs: &Vector, ineq: &Matrix, ineq_rhs: &Vector, n: usize) -> Result<Option<Vector>> {
    let lp = LinearProgram::minimize(Vector::zeros(n))
        .with_eq(eq.clone(), eq_rhs.clone())
        .with_ineq(ineq.clone(), ineq_rhs.clone());
    let r = solve_lp(&lp)?;
    Ok(if r.is_optimal() { Some(r.x) } else { None })
}
