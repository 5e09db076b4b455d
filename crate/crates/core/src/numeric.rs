//! Dense linear algebra aliases, extended reals, symmetric bilinear maps and
//! the tolerance policy shared by every other module.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Builds a vector from a slice.
pub fn vector(values: &[f64]) -> Vector {
    Vector::from_row_slice(values)
}

/// Builds a matrix from rows given as slices. All rows must have `cols` entries.
pub fn matrix(rows: &[&[f64]], cols: usize) -> Matrix {
    let mut m = Matrix::zeros(rows.len(), cols);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), cols, "ragged matrix row {i}");
        for (j, v) in r.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    m
}

/// Stacks matrices with the same column count vertically.
pub fn vstack(blocks: &[&Matrix], cols: usize) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        debug_assert!(b.nrows() == 0 || b.ncols() == cols);
        for i in 0..b.nrows() {
            for j in 0..cols {
                out[(r + i, j)] = b[(i, j)];
            }
        }
        r += b.nrows();
    }
    out
}

/// Concatenates vectors.
pub fn vconcat(parts: &[&Vector]) -> Vector {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = Vector::zeros(n);
    let mut k = 0;
    for p in parts {
        out.rows_mut(k, p.len()).copy_from(p);
        k += p.len();
    }
    out
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Appends one row to a matrix.
pub fn push_row(m: &Matrix, row: &Vector) -> Matrix {
    let cols = row.len();
    let mut out = Matrix::zeros(m.nrows() + 1, cols);
    if m.nrows() > 0 {
        out.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
    }
    for j in 0..cols {
        out[(m.nrows(), j)] = row[j];
    }
    out
}

/// Row `i` of a matrix as a column vector.
pub fn row_vec(m: &Matrix, i: usize) -> Vector {
    m.row(i).transpose()
}

/// Orthonormal basis (as columns) of the null space of `m`, computed from the SVD.
pub fn null_space(m: &Matrix, cols: usize, tol: f64) -> Matrix {
    if m.nrows() == 0 {
        return Matrix::identity(cols, cols);
    }
    let mut padded = m.clone();
    if m.nrows() < cols {
        padded = vstack(&[m, &Matrix::zeros(cols - m.nrows(), cols)], cols);
    }
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("svd requested v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let thresh = tol * (1.0 + smax);
    let mut basis = Vec::new();
    for (k, s) in svd.singular_values.iter().enumerate() {
        if *s <= thresh {
            basis.push(vt.row(k).transpose());
        }
    }
    // Singular values beyond the padded row count are implicitly zero.
    for k in svd.singular_values.len()..cols {
        basis.push(vt.row(k).transpose());
    }
    columns(&basis, cols)
}

/// Orthonormal basis (as columns) of the row space of `m`.
pub fn row_space(m: &Matrix, cols: usize, tol: f64) -> Matrix {
    if m.nrows() == 0 {
        return Matrix::zeros(cols, 0);
    }
    let svd = m.clone().svd(false, true);
    let vt = svd.v_t.expect("svd requested v_t");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let thresh = tol * (1.0 + smax);
    let basis: Vec<Vector> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > thresh)
        .map(|(k, _)| vt.row(k).transpose())
        .collect();
    columns(&basis, cols)
}

/// Numerical rank via the SVD.
pub fn rank(m: &Matrix, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let s = m.clone().singular_values();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    s.iter().filter(|v| **v > tol * (1.0 + smax)).count()
}

/// Smallest singular value.
pub fn sigma_min(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().singular_values().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Least-squares solution of `a x = b` through the SVD.
pub fn lstsq(a: &Matrix, b: &Vector) -> Vector {
    if a.ncols() == 0 {
        return Vector::zeros(0);
    }
    if a.nrows() == 0 {
        return Vector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    svd.solve(b, 1e-13).unwrap_or_else(|_| Vector::zeros(a.ncols()))
}

/// Assembles a matrix from column vectors of length `rows`.
pub fn columns(cols: &[Vector], rows: usize) -> Matrix {
    let mut out = Matrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

/// Largest absolute entry, zero for an empty vector.
pub fn max_abs(v: &Vector) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Unit vector `e_i` in dimension `n`.
pub fn unit(n: usize, i: usize) -> Vector {
    let mut e = Vector::zeros(n);
    e[i] = 1.0;
    e
}

/// Extended reals with an explicit tag; infinities never live in the float field.
#[derive(Clone, Copy, Debug)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    /// Converts a float, mapping IEEE infinities onto the tags.
    pub fn from_f64(x: f64) -> Self {
        debug_assert!(!x.is_nan(), "NaN cannot be represented as an extended real");
        if x == f64::INFINITY {
            ExtReal::PosInf
        } else if x == f64::NEG_INFINITY {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(x)
        }
    }

    pub fn zero() -> Self {
        ExtReal::Finite(0.0)
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_pos_inf(&self) -> bool {
        matches!(self, ExtReal::PosInf)
    }

    pub fn is_neg_inf(&self) -> bool {
        matches!(self, ExtReal::NegInf)
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(*v),
            _ => None,
        }
    }

    /// Lossy conversion for plotting and arithmetic on the finite part.
    pub fn to_f64(&self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(v) => *v,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn neg(&self) -> Self {
        match self {
            ExtReal::NegInf => ExtReal::PosInf,
            ExtReal::Finite(v) => ExtReal::Finite(-v),
            ExtReal::PosInf => ExtReal::NegInf,
        }
    }

    /// Multiplication by a nonnegative scalar, with 0·(±∞) = 0.
    pub fn scale(&self, s: f64) -> Self {
        debug_assert!(s >= 0.0);
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(v * s),
            _ if s == 0.0 => ExtReal::zero(),
            other => *other,
        }
    }

    /// Extended-real addition; `+∞ + (−∞)` is rejected.
    pub fn checked_add(&self, other: &ExtReal) -> Result<ExtReal> {
        extreal_add(*self, *other)
    }

    /// Whether two values agree: identical infinities or finite values within `tol`.
    pub fn approx_eq(&self, other: &ExtReal, tol: f64) -> bool {
        match (self, other) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => (a - b).abs() <= tol,
            (ExtReal::PosInf, ExtReal::PosInf) | (ExtReal::NegInf, ExtReal::NegInf) => true,
            _ => false,
        }
    }
}

/// Extended-real sum; `+∞` dominates finite summands and `+∞ + (−∞)` is an error.
pub fn extreal_add(a: ExtReal, b: ExtReal) -> Result<ExtReal> {
    use ExtReal::*;
    match (a, b) {
        (PosInf, NegInf) | (NegInf, PosInf) => Err(Error::IndeterminateSum),
        (PosInf, _) | (_, PosInf) => Ok(PosInf),
        (NegInf, _) | (_, NegInf) => Ok(NegInf),
        (Finite(x), Finite(y)) => Ok(ExtReal::from_f64(x + y)),
    }
}

impl PartialEq for ExtReal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        use ExtReal::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.partial_cmp(b).unwrap_or_else(|| a.total_cmp(b)),
        }
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        ExtReal::from_f64(x)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => write!(f, "-inf"),
            ExtReal::PosInf => write!(f, "+inf"),
            ExtReal::Finite(v) => write!(f, "{v}"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::PosInf => s.serialize_str("+inf"),
            ExtReal::NegInf => s.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ExtReal::from_f64(v)),
            Raw::Text(t) => match t.as_str() {
                "+inf" | "inf" => Ok(ExtReal::PosInf),
                "-inf" => Ok(ExtReal::NegInf),
                other => Err(serde::de::Error::custom(format!("not an extended real: {other}"))),
            },
        }
    }
}

/// A vector-valued symmetric bilinear form, one symmetric matrix per output coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearMap {
    n: usize,
    forms: Vec<Matrix>,
}

impl BilinearMap {
    /// Validates shapes and symmetry (asymmetry at most 1e-10·‖H_i‖).
    pub fn new(n: usize, forms: Vec<Matrix>) -> Result<Self> {
        for (i, h) in forms.iter().enumerate() {
            check_dim("bilinear form rows", n, h.nrows())?;
            check_dim("bilinear form cols", n, h.ncols())?;
            let asym = (h - h.transpose()).norm();
            if asym > 1e-10 * h.norm().max(f64::MIN_POSITIVE) && asym > 0.0 {
                return Err(Error::NotSymmetric {
                    index: i,
                    asymmetry: asym,
                });
            }
        }
        Ok(Self { n, forms })
    }

    /// Symmetrizes each form before storing it; used for finite-difference Hessians.
    pub fn symmetrized(n: usize, forms: Vec<Matrix>) -> Self {
        let forms = forms.into_iter().map(|h| (&h + h.transpose()) * 0.5).collect();
        Self { n, forms }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        Self {
            n,
            forms: vec![Matrix::zeros(n, n); m],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> usize {
        self.forms.len()
    }

    pub fn forms(&self) -> &[Matrix] {
        &self.forms
    }

    /// The vector of quadratic forms `(⟨H_1 w, v⟩, …, ⟨H_m w, v⟩)`.
    pub fn apply(&self, w: &Vector, v: &Vector) -> Result<Vector> {
        check_dim("bilinear argument w", self.n, w.len())?;
        check_dim("bilinear argument v", self.n, v.len())?;
        Ok(Vector::from_iterator(
            self.forms.len(),
            self.forms.iter().map(|h| (h * w).dot(v)),
        ))
    }

    /// The matrix `Σ λ_i H_i`, i.e. the Hessian of `⟨λ, f⟩`.
    pub fn contract(&self, lambda: &Vector) -> Result<Matrix> {
        check_dim("bilinear contraction", self.forms.len(), lambda.len())?;
        let mut out = Matrix::zeros(self.n, self.n);
        for (h, l) in self.forms.iter().zip(lambda.iter()) {
            out += h * *l;
        }
        Ok(out)
    }
}

/// Free-function form of [`BilinearMap::apply`].
pub fn apply_bilinear(h: &BilinearMap, w: &Vector, v: &Vector) -> Result<Vector> {
    h.apply(w, v)
}

/// Absolute tolerances; every comparison scales them by `1 + ‖input‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TolerancePolicy {
    pub eq_tol: f64,
    pub cone_tol: f64,
    pub oracle_tol: f64,
    pub lp_tol: f64,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        Self {
            eq_tol: 1e-9,
            cone_tol: 1e-8,
            oracle_tol: 1e-3,
            lp_tol: 1e-9,
        }
    }
}

impl TolerancePolicy {
    pub fn validate(&self) -> Result<()> {
        let all = [self.eq_tol, self.cone_tol, self.oracle_tol, self.lp_tol];
        if all.iter().all(|t| t.is_finite() && *t > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidTolerance)
        }
    }

    /// `cone_tol · (1 + scale)`.
    pub fn cone(&self, scale: f64) -> f64 {
        self.cone_tol * (1.0 + scale)
    }

    /// `eq_tol · (1 + scale)`.
    pub fn eq(&self, scale: f64) -> f64 {
        self.eq_tol * (1.0 + scale)
    }
}

/// Derivative-free Nelder–Mead minimization from `x0` with initial simplex edge `step`.
/// Non-finite objective values are treated as `+∞`. Returns the best point and value.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    if n == 0 {
        let v = eval(x0);
        return (Vec::new(), v);
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x);
        simplex.push((x, v));
    }
    let combine = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect() };
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut centroid = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflected = combine(&centroid, &worst.0, -1.0);
        let fr = eval(&reflected);
        if fr < simplex[0].1 {
            let expanded = combine(&centroid, &worst.0, -2.0);
            let fe = eval(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let contracted = combine(&centroid, &worst.0, 0.5);
            let fc = eval(&contracted);
            if fc < worst.1 {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let x = combine(&best, &item.0, 0.5);
                    let v = eval(&x);
                    *item = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let (x, v) = nelder_mead(|x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2), &[0.0, 0.0], 0.5, 400);
        assert!(v < 1e-12 && (x[0] - 1.0).abs() < 1e-6 && (x[1] + 2.0).abs() < 1e-6);
    }
    use proptest::prelude::*;

    #[test]
    fn extreal_addition_rules() {
        assert_eq!(extreal_add(1.0.into(), 2.0.into()).unwrap(), ExtReal::Finite(3.0));
        assert_eq!(extreal_add(5.0.into(), ExtReal::PosInf).unwrap(), ExtReal::PosInf);
        assert_eq!(
            extreal_add(ExtReal::PosInf, ExtReal::NegInf),
            Err(Error::IndeterminateSum)
        );
        assert_eq!(extreal_add(ExtReal::NegInf, (-3.0).into()).unwrap(), ExtReal::NegInf);
    }

    #[test]
    fn extreal_ordering_is_total() {
        let mut v = vec![ExtReal::PosInf, 3.0.into(), ExtReal::NegInf, (-1.0).into()];
        v.sort();
        assert_eq!(
            v,
            vec![ExtReal::NegInf, (-1.0).into(), 3.0.into(), ExtReal::PosInf]
        );
        assert!(ExtReal::from_f64(f64::INFINITY).is_pos_inf());
    }

    #[test]
    fn extreal_json_uses_tags() {
        let s = serde_json::to_string(&vec![ExtReal::PosInf, ExtReal::Finite(2.0)]).unwrap();
        assert_eq!(s, r#"["+inf",2.0]"#);
        let back: Vec<ExtReal> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![ExtReal::PosInf, ExtReal::Finite(2.0)]);
    }

    #[test]
    fn bilinear_examples() {
        let h = BilinearMap::new(2, vec![matrix(&[&[2.0, 0.0], &[0.0, 0.0]], 2)]).unwrap();
        let e1 = vector(&[1.0, 0.0]);
        assert_eq!(h.apply(&e1, &e1).unwrap(), vector(&[2.0]));
        let w = vector(&[1.0, 1.0]);
        assert_eq!(h.apply(&w, &w).unwrap(), vector(&[2.0]));
        let z = BilinearMap::zeros(2, 3);
        assert_eq!(z.apply(&w, &e1).unwrap(), Vector::zeros(3));
        assert!(matches!(
            h.apply(&vector(&[1.0]), &e1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn bilinear_rejects_asymmetric_forms() {
        let bad = matrix(&[&[1.0, 2.0], &[0.0, 1.0]], 2);
        assert!(matches!(
            BilinearMap::new(2, vec![bad]),
            Err(Error::NotSymmetric { index: 0, .. })
        ));
    }

    #[test]
    fn tolerance_policy_validation() {
        assert!(TolerancePolicy::default().validate().is_ok());
        let bad = TolerancePolicy {
            lp_tol: 0.0,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(Error::InvalidTolerance));
    }

    #[test]
    fn null_space_of_rank_one_row() {
        let m = matrix(&[&[1.0, 0.0, -1.0]], 3);
        let ns = null_space(&m, 3, 1e-12);
        assert_eq!(ns.ncols(), 2);
        assert!((&m * &ns).norm() < 1e-12);
    }

    fn sym(a: [f64; 3]) -> Matrix {
        matrix(&[&[a[0], a[1]], &[a[1], a[2]]], 2)
    }

    proptest! {
        #[test]
        fn bilinear_is_symmetric_and_two_homogeneous(
            a in prop::array::uniform3(-5.0f64..5.0),
            b in prop::array::uniform3(-5.0f64..5.0),
            w in prop::array::uniform2(-3.0f64..3.0),
            v in prop::array::uniform2(-3.0f64..3.0),
            s in -4.0f64..4.0,
        ) {
            let h = BilinearMap::new(2, vec![sym(a), sym(b)]).unwrap();
            let w = vector(&w);
            let v = vector(&v);
            let wv = h.apply(&w, &v).unwrap();
            let vw = h.apply(&v, &w).unwrap();
            prop_assert!((wv - vw).norm() <= 1e-10 * (1.0 + w.norm() * v.norm()));
            let sw = &w * s;
            let lhs = h.apply(&sw, &sw).unwrap();
            let rhs = h.apply(&w, &w).unwrap() * (s * s);
            prop_assert!((lhs - rhs).norm() <= 1e-9 * (1.0 + s * s * w.norm_squared()));
        }

        #[test]
        fn finite_sums_stay_finite(a in -1e6f64..1e6, b in -1e6f64..1e6) {
            let s = extreal_add(a.into(), b.into()).unwrap();
            prop_assert!(s.is_finite());
            prop_assert_eq!(extreal_add(a.into(), ExtReal::PosInf).unwrap(), ExtReal::PosInf);
        }
    }
}
