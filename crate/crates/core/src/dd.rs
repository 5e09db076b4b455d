//! Double-description conversion between halfspace and generator forms of
//! polyhedral cones, with polytope vertex enumeration by homogenization.

use crate::numeric::{null_space, row_vec, Matrix, Vector};

/// Generators of a polyhedral cone: `cone(rays) + span(lineality)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Generators {
    pub dim: usize,
    pub rays: Vec<Vector>,
    pub lineality: Vec<Vector>,
}

impl Generators {
    pub fn is_trivial(&self) -> bool {
        self.rays.is_empty() && self.lineality.is_empty()
    }

    /// Matrix whose columns are the rays followed by the lineality basis.
    pub fn matrix(&self) -> Matrix {
        let k = self.rays.len() + self.lineality.len();
        let mut m = Matrix::zeros(self.dim, k);
        for (j, r) in self.rays.iter().chain(self.lineality.iter()).enumerate() {
            m.set_column(j, r);
        }
        m
    }
}

const DD_TOL: f64 = 1e-9;

fn normalize(v: &mut Vector) -> bool {
    let n = v.norm();
    if n <= 1e-12 {
        return false;
    }
    *v /= n;
    true
}

/// Generators of `{x : G x ≤ 0, M x = 0}`.
pub fn cone_generators(ineq: &Matrix, eq: &Matrix, dim: usize) -> Generators {
    let mut constraints: Vec<Vector> = Vec::new();
    let mut lineality: Vec<Vector> = {
        let ns = null_space(eq, dim, 1e-12);
        (0..ns.ncols()).map(|j| ns.column(j).into_owned()).collect()
    };
    let mut rays: Vec<Vector> = Vec::new();
    for i in 0..ineq.nrows() {
        let mut a = row_vec(ineq, i);
        if !normalize(&mut a) {
            continue;
        }
        // Lineality step: if the constraint cuts the lineality space, one
        // lineality direction becomes a ray and the rest are made orthogonal to it.
        let vals: Vec<f64> = lineality.iter().map(|l| a.dot(l)).collect();
        let (imax, vmax) = vals
            .iter()
            .enumerate()
            .fold((0usize, 0.0f64), |acc, (k, v)| if v.abs() > acc.1.abs() { (k, *v) } else { acc });
        if vmax.abs() > DD_TOL {
            let mut l0 = lineality.remove(imax);
            if vmax > 0.0 {
                l0 = -l0;
            }
            let a0 = a.dot(&l0);
            for l in lineality.iter_mut() {
                let f = a.dot(l) / a0;
                *l -= &l0 * f;
                normalize(l);
            }
            for r in rays.iter_mut() {
                let f = a.dot(r) / a0;
                *r -= &l0 * f;
                normalize(r);
            }
            rays.push(l0);
            constraints.push(a);
            continue;
        }
        let vals: Vec<f64> = rays.iter().map(|r| a.dot(r)).collect();
        let plus: Vec<usize> = (0..rays.len()).filter(|k| vals[*k] > DD_TOL).collect();
        if plus.is_empty() {
            constraints.push(a);
            continue;
        }
        let minus: Vec<usize> = (0..rays.len()).filter(|k| vals[*k] < -DD_TOL).collect();
        let zero_sets: Vec<Vec<usize>> = rays
            .iter()
            .map(|r| {
                (0..constraints.len())
                    .filter(|c| constraints[*c].dot(r).abs() <= DD_TOL)
                    .collect()
            })
            .collect();
        let mut next: Vec<Vector> = (0..rays.len())
            .filter(|k| vals[*k] <= DD_TOL)
            .map(|k| rays[k].clone())
            .collect();
        for &p in &plus {
            for &m in &minus {
                let common: Vec<usize> = zero_sets[p]
                    .iter()
                    .filter(|c| zero_sets[m].contains(c))
                    .cloned()
                    .collect();
                // Adjacency: no third ray shares the common zero set.
                let adjacent = (0..rays.len()).all(|k| {
                    k == p || k == m || !common.iter().all(|c| zero_sets[k].contains(c))
                });
                if !adjacent {
                    continue;
                }
                let mut r = &rays[m] * vals[p] - &rays[p] * vals[m];
                if normalize(&mut r) {
                    next.push(r);
                }
            }
        }
        rays = dedupe(next);
        constraints.push(a);
    }
    // Canonical form: orthonormal lineality, rays orthogonal to it.
    let lin_basis = if lineality.is_empty() {
        Vec::new()
    } else {
        let l = crate::numeric::columns(&lineality, dim);
        let q = crate::numeric::row_space(&l.transpose(), dim, 1e-12);
        (0..q.ncols()).map(|j| q.column(j).into_owned()).collect::<Vec<_>>()
    };
    let rays = rays
        .into_iter()
        .filter_map(|mut r| {
            for q in &lin_basis {
                let d = q.dot(&r);
                r -= q * d;
            }
            normalize(&mut r).then_some(r)
        })
        .collect();
    Generators {
        dim,
        rays: dedupe(rays),
        lineality: lin_basis,
    }
}

fn dedupe(v: Vec<Vector>) -> Vec<Vector> {
    let mut out: Vec<Vector> = Vec::new();
    for r in v {
        if !out.iter().any(|o| (o - &r).norm() <= 1e-8) {
            out.push(r);
        }
    }
    out
}

/// Halfspace form `{x : G x ≤ 0, M x = 0}` of `cone(rays) + span(lineality)`,
/// obtained from generators of the polar cone.
pub fn halfspaces_from_generators(g: &Generators) -> (Matrix, Matrix) {
    let dim = g.dim;
    let mut rows = Matrix::zeros(g.rays.len(), dim);
    for (i, r) in g.rays.iter().enumerate() {
        rows.set_row(i, &r.transpose());
    }
    let mut lin = Matrix::zeros(g.lineality.len(), dim);
    for (i, l) in g.lineality.iter().enumerate() {
        lin.set_row(i, &l.transpose());
    }
    let polar = cone_generators(&rows, &lin, dim);
    let mut ineq = Matrix::zeros(polar.rays.len(), dim);
    for (i, r) in polar.rays.iter().enumerate() {
        ineq.set_row(i, &r.transpose());
    }
    let mut eq = Matrix::zeros(polar.lineality.len(), dim);
    for (i, l) in polar.lineality.iter().enumerate() {
        eq.set_row(i, &l.transpose());
    }
    (ineq, eq)
}

/// Vertices, recession rays and lineality of `{x : A x ≤ b, E x = e}`.
#[derive(Clone, Debug, Default)]
pub struct PolyhedronGenerators {
    pub vertices: Vec<Vector>,
    pub rays: Vec<Vector>,
    pub lineality: Vec<Vector>,
}

pub fn polyhedron_generators(a: &Matrix, b: &Vector, e: &Matrix, f: &Vector, dim: usize) -> PolyhedronGenerators {
    let h = dim + 1;
    let mut g = Matrix::zeros(a.nrows() + 1, h);
    for i in 0..a.nrows() {
        for j in 0..dim {
            g[(i, j)] = a[(i, j)];
        }
        g[(i, dim)] = -b[i];
    }
    g[(a.nrows(), dim)] = -1.0;
    let mut m = Matrix::zeros(e.nrows(), h);
    for i in 0..e.nrows() {
        for j in 0..dim {
            m[(i, j)] = e[(i, j)];
        }
        m[(i, dim)] = -f[i];
    }
    let gens = cone_generators(&g, &m, h);
    let mut out = PolyhedronGenerators::default();
    for r in gens.rays {
        let s = r[dim];
        let x = r.rows(0, dim).into_owned();
        if s > 1e-10 {
            out.vertices.push(x / s);
        } else {
            out.rays.push(x);
        }
    }
    for l in gens.lineality {
        out.lineality.push(l.rows(0, dim).into_owned());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{matrix, vector};

    #[test]
    fn orthant_generators() {
        let g = cone_generators(&Matrix::identity(2, 2), &Matrix::zeros(0, 2), 2);
        assert!(g.lineality.is_empty());
        assert_eq!(g.rays.len(), 2);
        for r in &g.rays {
            assert!(r.max() <= 1e-12);
        }
    }

    #[test]
    fn halfspace_has_lineality() {
        let g = cone_generators(&matrix(&[&[1.0, 0.0, -1.0]], 3), &Matrix::zeros(0, 3), 3);
        assert_eq!(g.lineality.len(), 2);
        assert_eq!(g.rays.len(), 1);
        assert!((g.rays[0].dot(&vector(&[1.0, 0.0, -1.0])) + 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn square_pyramid_has_four_rays() {
        let rows = matrix(
            &[
                &[1.0, 0.0, -1.0],
                &[-1.0, 0.0, -1.0],
                &[0.0, 1.0, -1.0],
                &[0.0, -1.0, -1.0],
            ],
            3,
        );
        let g = cone_generators(&rows, &Matrix::zeros(0, 3), 3);
        assert_eq!(g.rays.len(), 4);
        assert!(g.lineality.is_empty());
        // Round trip back to halfspaces.
        let (ineq, eq) = halfspaces_from_generators(&g);
        assert_eq!(ineq.nrows(), 4);
        assert_eq!(eq.nrows(), 0);
        for r in &g.rays {
            assert!((&ineq * r).max() <= 1e-9);
        }
    }

    #[test]
    fn segment_vertices() {
        // {(t, 1 − t): t ∈ [0, 1]}.
        let p = polyhedron_generators(
            &(-Matrix::identity(2, 2)),
            &Vector::zeros(2),
            &matrix(&[&[1.0, 1.0]], 2),
            &vector(&[1.0]),
            2,
        );
        assert_eq!(p.vertices.len(), 2);
        assert!(p.rays.is_empty() && p.lineality.is_empty());
    }

    #[test]
    fn trivial_cone_has_no_generators() {
        let g = cone_generators(&Matrix::zeros(0, 2), &Matrix::identity(2, 2), 2);
        assert!(g.is_trivial());
    }
}
