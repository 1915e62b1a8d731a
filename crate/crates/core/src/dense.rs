//! Thin wrappers over dense symmetric linear algebra.

use faer::{Mat, Side};

/// Eigen-decomposition of a symmetric matrix; eigenvalues ascending,
/// eigenvectors in the columns of the returned matrix.
pub(crate) fn symmetric_eigen(a: &Mat<f64>) -> (Vec<f64>, Mat<f64>) {
    let n = a.nrows();
    let eig = a.selfadjoint_eigendecomposition(Side::Lower);
    let s = eig.s().column_vector();
    let u = eig.u();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s.read(i).total_cmp(&s.read(j)));
    let values = order.iter().map(|&i| s.read(i)).collect();
    let vectors = Mat::from_fn(n, n, |r, c| u.read(r, order[c]));
    (values, vectors)
}

/// Orthonormal basis of the column space of `a`, via the eigen-decomposition
/// of `a^T a`. Directions with singular value below `rel_tol * max` are
/// discarded.
pub(crate) fn column_space(a: &Mat<f64>, rel_tol: f64) -> Mat<f64> {
    let gram = a.transpose() * a;
    let (vals, vecs) = symmetric_eigen(&gram);
    let top = vals.last().copied().unwrap_or(0.0).max(0.0);
    let keep: Vec<usize> = (0..vals.len())
        .filter(|&i| vals[i] > (rel_tol * rel_tol) * top && vals[i] > 0.0)
        .collect();
    let mut q = Mat::<f64>::zeros(a.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        let inv = 1.0 / vals[i].sqrt();
        let v = vecs.col(i);
        let col = a * v;
        for r in 0..a.nrows() {
            q.write(r, c, col.read(r) * inv);
        }
    }
    q
}

/// Null space of the symmetric positive semidefinite `gram` matrix: the
/// eigenvectors whose eigenvalue is at most `tol`.
pub(crate) fn null_space(gram: &Mat<f64>, tol: f64) -> Vec<Vec<f64>> {
    let (vals, vecs) = symmetric_eigen(gram);
    (0..vals.len())
        .filter(|&i| vals[i] <= tol)
        .map(|i| (0..gram.nrows()).map(|r| vecs.read(r, i)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_diagonal() {
        let a = Mat::from_fn(3, 3, |i, j| if i == j { [3.0, 1.0, 2.0][i] } else { 0.0 });
        let (v, _) = symmetric_eigen(&a);
        assert_eq!(v, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn column_space_drops_dependent_columns() {
        let a = Mat::from_fn(4, 3, |i, j| match j {
            0 => i as f64,
            1 => 1.0,
            _ => 2.0 * i as f64 + 3.0,
        });
        let q = column_space(&a, 1e-10);
        assert_eq!(q.ncols(), 2);
        let g = q.transpose() * &q;
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g.read(i, j) - e).abs() < 1e-12);
            }
        }
    }
}
