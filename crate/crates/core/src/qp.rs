//! Small dense quadratic subproblems: Euclidean projection onto a polyhedron by a
//! primal active-set method, and nonnegative least squares with free variables.

use crate::error::{check_dim, Error, Result};
use crate::lp::{solve_lp, LinearProgram};
use crate::numeric::{lstsq, max_abs, row_vec, Matrix, Vector};

/// Polyhedron `{x : Ax ≤ b, Ex = e}` in `ℝⁿ`.
#[derive(Clone, Debug)]
pub struct PolyhedronRows<'a> {
    pub ineq: &'a Matrix,
    pub ineq_rhs: &'a Vector,
    pub eq: &'a Matrix,
    pub eq_rhs: &'a Vector,
}

fn max_violation(p: &PolyhedronRows<'_>, x: &Vector) -> f64 {
    let mut v: f64 = 0.0;
    for i in 0..p.ineq.nrows() {
        v = v.max(p.ineq.row(i).transpose().dot(x) - p.ineq_rhs[i]);
    }
    for i in 0..p.eq.nrows() {
        v = v.max((p.eq.row(i).transpose().dot(x) - p.eq_rhs[i]).abs());
    }
    v
}

/// Point of the polyhedron closest to `y` in the ℓ¹ sense, used as a feasible start.
fn l1_start(p: &PolyhedronRows<'_>, y: &Vector) -> Result<Vector> {
    let n = y.len();
    // Variables (x, s) with |x − y| ≤ s componentwise.
    let mut c = Vector::zeros(2 * n);
    for j in 0..n {
        c[n + j] = 1.0;
    }
    let mi = p.ineq.nrows();
    let mut a = Matrix::zeros(mi + 2 * n, 2 * n);
    let mut b = Vector::zeros(mi + 2 * n);
    for i in 0..mi {
        for j in 0..n {
            a[(i, j)] = p.ineq[(i, j)];
        }
        b[i] = p.ineq_rhs[i];
    }
    for j in 0..n {
        a[(mi + j, j)] = 1.0;
        a[(mi + j, n + j)] = -1.0;
        b[mi + j] = y[j];
        a[(mi + n + j, j)] = -1.0;
        a[(mi + n + j, n + j)] = -1.0;
        b[mi + n + j] = -y[j];
    }
    let mut e = Matrix::zeros(p.eq.nrows(), 2 * n);
    for i in 0..p.eq.nrows() {
        for j in 0..n {
            e[(i, j)] = p.eq[(i, j)];
        }
    }
    let lp = LinearProgram::minimize(c)
        .with_ineq(a, b)
        .with_eq(e, p.eq_rhs.clone());
    let r = solve_lp(&lp)?;
    if !r.is_optimal() {
        return Err(Error::EmptySet);
    }
    Ok(r.x.rows(0, n).into_owned())
}

struct WorkingSet {
    rows: Vec<Vector>,
    ids: Vec<Option<usize>>,
    q: Vec<Vector>,
}

impl WorkingSet {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            ids: Vec::new(),
            q: Vec::new(),
        }
    }

    fn residual(&self, a: &Vector) -> Vector {
        let mut r = a.clone();
        for qk in &self.q {
            let d = qk.dot(&r);
            r -= qk * d;
        }
        r
    }

    fn try_add(&mut self, a: Vector, id: Option<usize>) -> bool {
        let r = self.residual(&a);
        let nr = r.norm();
        if nr <= 1e-10 * a.norm().max(1e-300) {
            return false;
        }
        self.q.push(r / nr);
        self.rows.push(a);
        self.ids.push(id);
        true
    }

    fn rebuild(&mut self) {
        let rows = std::mem::take(&mut self.rows);
        let ids = std::mem::take(&mut self.ids);
        self.q.clear();
        for (a, id) in rows.into_iter().zip(ids) {
            self.try_add(a, id);
        }
    }

    fn project_null(&self, v: &Vector) -> Vector {
        self.residual(v)
    }

    fn multipliers(&self, g: &Vector) -> Vector {
        let n = g.len();
        let mut at = Matrix::zeros(n, self.rows.len());
        for (k, a) in self.rows.iter().enumerate() {
            at.set_column(k, a);
        }
        lstsq(&at, g)
    }
}

/// Rows scaled to unit norm; zero rows are dropped, or reported as an empty set when
/// their right-hand side cannot be met.
fn normalized_rows(m: &Matrix, rhs: &Vector, n: usize, equality: bool) -> Result<(Matrix, Vector)> {
    let mut rows = Vec::new();
    let mut vals = Vec::new();
    let rhs_scale = 1.0 + max_abs(rhs);
    for i in 0..m.nrows() {
        let a = row_vec(m, i);
        let na = a.norm();
        if na <= 1e-300 {
            let bad = if equality { rhs[i].abs() > 1e-14 * rhs_scale } else { rhs[i] < -1e-14 * rhs_scale };
            if bad {
                return Err(Error::EmptySet);
            }
            continue;
        }
        rows.push(a / na);
        vals.push(rhs[i] / na);
    }
    let mut out = Matrix::zeros(rows.len(), n);
    for (k, r) in rows.iter().enumerate() {
        out.set_row(k, &r.transpose());
    }
    Ok((out, Vector::from_vec(vals)))
}

/// Euclidean projection of `y` onto `{x : Ax ≤ b, Ex = e}`.
pub fn project_polyhedron(p: &PolyhedronRows<'_>, y: &Vector) -> Result<Vector> {
    let n = y.len();
    if p.ineq.nrows() > 0 {
        check_dim("projection inequality columns", n, p.ineq.ncols())?;
    }
    if p.eq.nrows() > 0 {
        check_dim("projection equality columns", n, p.eq.ncols())?;
    }
    let (ineq, ineq_rhs) = normalized_rows(p.ineq, p.ineq_rhs, n, false)?;
    let (eq, eq_rhs) = normalized_rows(p.eq, p.eq_rhs, n, true)?;
    let p = &PolyhedronRows {
        ineq: &ineq,
        ineq_rhs: &ineq_rhs,
        eq: &eq,
        eq_rhs: &eq_rhs,
    };
    let viol = max_violation(p, y);
    if viol <= 4.0 * f64::EPSILON * (y.norm() + max_abs(p.ineq_rhs) + max_abs(p.eq_rhs)) {
        return Ok(y.clone());
    }
    // Recentre at y and rescale by the violation so the subproblem is O(1) whatever the scale.
    let ineq_rhs = (p.ineq_rhs - p.ineq * y) / viol;
    let eq_rhs = (p.eq_rhs - p.eq * y) / viol;
    let shifted = PolyhedronRows {
        ineq: p.ineq,
        ineq_rhs: &ineq_rhs,
        eq: p.eq,
        eq_rhs: &eq_rhs,
    };
    let xi = project_scaled(&shifted, &Vector::zeros(n))?;
    Ok(y + xi * viol)
}

fn project_scaled(p: &PolyhedronRows<'_>, y: &Vector) -> Result<Vector> {
    let n = y.len();
    let scale = 1.0 + y.norm() + max_abs(p.ineq_rhs) + max_abs(p.eq_rhs);
    let mut x = l1_start(p, y)?;
    let mut ws = WorkingSet::new();
    for i in 0..p.eq.nrows() {
        ws.try_add(row_vec(p.eq, i), None);
    }
    for i in 0..p.ineq.nrows() {
        let a = row_vec(p.ineq, i);
        if (a.dot(&x) - p.ineq_rhs[i]).abs() <= 1e-10 * scale * (1.0 + a.norm()) {
            ws.try_add(a, Some(i));
        }
    }
    let max_iter = 3 * (p.ineq.nrows() + p.eq.nrows()) + 3 * n + 20;
    for _ in 0..max_iter {
        let g = y - &x;
        let step = ws.project_null(&g);
        if step.norm() <= 1e-13 * scale {
            let mu = ws.multipliers(&g);
            let mut worst: Option<usize> = None;
            let mut worst_val = -1e-12 * scale;
            for (k, id) in ws.ids.iter().enumerate() {
                if id.is_some() && mu[k] < worst_val {
                    worst_val = mu[k];
                    worst = Some(k);
                }
            }
            match worst {
                None => return Ok(x),
                Some(k) => {
                    ws.rows.remove(k);
                    ws.ids.remove(k);
                    ws.rebuild();
                }
            }
        } else {
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..p.ineq.nrows() {
                if ws.ids.contains(&Some(i)) {
                    continue;
                }
                let a = p.ineq.row(i).transpose();
                let ap = a.dot(&step);
                if ap > 1e-14 * a.norm() * step.norm() && ws.residual(&a).norm() > 1e-10 * a.norm() {
                    let room = (p.ineq_rhs[i] - a.dot(&x)).max(0.0);
                    let s = room / ap;
                    if s < alpha {
                        alpha = s;
                        blocking = Some(i);
                    }
                }
            }
            x += &step * alpha;
            if let Some(i) = blocking {
                ws.try_add(row_vec(p.ineq, i), Some(i));
            }
        }
    }
    Err(Error::NumericalFailure("active-set projection did not terminate".into()))
}

/// Minimizes `‖A x − b‖` subject to `x_j ≥ 0` for every `j` with `free[j] == false`.
pub fn nnls(a: &Matrix, b: &Vector, free: &[bool]) -> Vector {
    let k = a.ncols();
    let mut x = Vector::zeros(k);
    if k == 0 {
        return x;
    }
    let mut passive: Vec<bool> = free.to_vec();
    let solve_passive = |passive: &[bool]| -> Vector {
        let idx: Vec<usize> = (0..k).filter(|j| passive[*j]).collect();
        let mut sub = Matrix::zeros(a.nrows(), idx.len());
        for (c, j) in idx.iter().enumerate() {
            sub.set_column(c, &a.column(*j));
        }
        let z = lstsq(&sub, b);
        let mut full = Vector::zeros(k);
        for (c, j) in idx.iter().enumerate() {
            full[*j] = z[c];
        }
        full
    };
    if passive.iter().any(|p| *p) {
        x = solve_passive(&passive);
    }
    let scale = 1.0 + b.norm() * a.norm();
    for _ in 0..(3 * k + 20) {
        let w = a.transpose() * (b - a * &x);
        let mut enter = None;
        let mut best = 1e-12 * scale;
        for j in 0..k {
            if !passive[j] && w[j] > best {
                best = w[j];
                enter = Some(j);
            }
        }
        let Some(j) = enter else {
            break;
        };
        passive[j] = true;
        for _ in 0..(3 * k + 20) {
            let z = solve_passive(&passive);
            let bad: Vec<usize> = (0..k)
                .filter(|i| passive[*i] && !free[*i] && z[*i] <= 1e-14)
                .collect();
            if bad.is_empty() {
                x = z;
                break;
            }
            let mut alpha = 1.0f64;
            for &i in &bad {
                let denom = x[i] - z[i];
                if denom > 0.0 {
                    alpha = alpha.min(x[i] / denom);
                }
            }
            x = &x + (&z - &x) * alpha;
            for i in 0..k {
                if passive[i] && !free[i] && x[i] <= 1e-14 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    for i in 0..k {
        if !free[i] && x[i] < 0.0 {
            x[i] = 0.0;
        }
    }
    x
}
