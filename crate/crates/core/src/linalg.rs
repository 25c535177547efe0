//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn matrix_from_rows(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension(format!(
            "expected every row to have {cols} entries"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// In-place rank-one update `A += x xᵀ` together with its inverse via the
/// Sherman–Morrison identity.
pub fn sherman_morrison_update(a: &mut DMatrix<f64>, a_inv: &mut DMatrix<f64>, x: &DVector<f64>) {
    a.ger(1.0, x, x, 1.0);
    let ainv_x = &*a_inv * x;
    let denom = 1.0 + x.dot(&ainv_x);
    a_inv.ger(-1.0 / denom, &ainv_x, &ainv_x, 1.0);
}

/// `xᵀ A x` for a square `A`, without allocating.
pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let n = x.len();
    let mut total = 0.0;
    for j in 0..n {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        let mut col = 0.0;
        for i in 0..n {
            col += a[(i, j)] * x[i];
        }
        total += col * xj;
    }
    total
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// decreasing order (eigenvectors reordered to match).
pub fn sorted_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Orthonormal basis (as columns) of the eigenspace whose eigenvalues exceed
/// `rel_tol` times the largest eigenvalue. Returns the retained eigenvalues
/// too. A zero matrix has an empty retained space.
pub fn retained_eigenspace(m: &DMatrix<f64>, rel_tol: f64) -> (Vec<f64>, DMatrix<f64>) {
    let (values, vectors) = sorted_eigen(m);
    let top = values.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return (Vec::new(), DMatrix::zeros(m.nrows(), 0));
    }
    let keep = values.iter().take_while(|&&v| v > rel_tol * top).count();
    (values[..keep].to_vec(), vectors.columns(0, keep).into_owned())
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sorted_eigen(m).0.last().copied().unwrap_or(f64::INFINITY)
}

/// 2-norm condition number via singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(what.to_string()))
}

pub fn pseudo_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().svd(true, true);
    let tol = svd.singular_values.max() * 1e-12 * (m.nrows().max(m.ncols()) as f64);
    svd.pseudo_inverse(tol.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Numerical(e.to_string()))
}

pub fn identity_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    (a * b - DMatrix::<f64>::identity(n, n)).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sherman_morrison_matches_direct_inverse() {
        let mut a = DMatrix::<f64>::identity(3, 3);
        let mut a_inv = a.clone();
        for x in [[1.0, 0.5, -0.2], [0.0, 2.0, 1.0], [0.3, 0.3, 0.3]] {
            sherman_morrison_update(&mut a, &mut a_inv, &DVector::from_row_slice(&x));
        }
        let direct = a.clone().try_inverse().unwrap();
        assert!((a_inv - direct).amax() < 1e-12);
    }

    #[test]
    fn quad_form_matches_matrix_product() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = DVector::from_row_slice(&[1.0, -2.0]);
        let direct = (x.transpose() * &a * &x)[(0, 0)];
        assert!((quad_form(&a, &x) - direct).abs() < 1e-14);
    }

    #[test]
    fn retained_space_drops_small_eigenvalues() {
        let m = DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, 1e-12, 0.5]));
        let (vals, basis) = retained_eigenspace(&m, 1e-7);
        assert_eq!(vals, vec![1.0, 0.5]);
        assert_eq!(basis.ncols(), 2);
        let zero = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(retained_eigenspace(&zero, 1e-7).1.ncols(), 0);
    }

    #[test]
    fn condition_number_of_singular_is_infinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(condition_number(&m) > 1e12);
    }
}
