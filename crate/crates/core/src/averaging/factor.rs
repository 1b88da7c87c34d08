use nalgebra::DMatrix;

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-8;
const EIGEN_FLOOR: f64 = -1e-10;

/// `(a + a^T) / 2` for a row-major `n x n` matrix, after checking that `a`
/// is symmetric within `1e-8` (relative to its largest entry, floor 1).
pub fn symmetrize(a: &[f64], n: usize) -> Result<Vec<f64>> {
    if a.len() != n * n {
        return Err(Error::invalid(format!(
            "matrix has {} entries, expected {n}x{n}",
            a.len()
        )));
    }
    let scale = a.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (aij, aji) = (a[i * n + j], a[j * n + i]);
            if !aij.is_finite() {
                return Err(Error::invalid(format!("non-finite matrix entry ({i},{j})")));
            }
            if (aij - aji).abs() > SYMMETRY_TOL * scale {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric: a[{i}][{j}]={aij}, a[{j}][{i}]={aji}"
                )));
            }
            out[i * n + j] = 0.5 * (aij + aji);
        }
    }
    Ok(out)
}

/// Lower-triangular `L` (row-major) with `L L^T` equal to `abar` after its
/// negative eigenvalues are clipped to zero.
///
/// Eigenvalues below `-1e-10` times the matrix scale are rejected. The
/// triangular factor is read off a QR decomposition of `(Q sqrt(D))^T`,
/// which stays accurate for singular matrices.
pub fn factor_diffusion(abar: &[f64], n: usize) -> Result<Vec<f64>> {
    let a = symmetrize(abar, n)?;
    if n == 1 {
        let v = a[0];
        if v < EIGEN_FLOOR * v.abs().max(1.0) {
            return Err(Error::invalid(format!("diffusion matrix has negative entry {v}")));
        }
        return Ok(vec![v.max(0.0).sqrt()]);
    }
    let scale = a.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
    let m = DMatrix::from_row_slice(n, n, &a);
    let eig = m.symmetric_eigen();
    let mut b = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < EIGEN_FLOOR * scale {
            return Err(Error::invalid(format!(
                "diffusion matrix is not positive semidefinite (eigenvalue {lam})"
            )));
        }
        let s = lam.max(0.0).sqrt();
        b.column_mut(j).scale_mut(s);
    }
    // a = b b^T = R^T R with b^T = Q R.
    let r = b.transpose().qr().r();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let sign = if r[(i, i)] < 0.0 { -1.0 } else { 1.0 };
        for j in i..n {
            // L[j][i] = R[i][j]
            out[j * n + i] = sign * r[(i, j)];
        }
    }
    Ok(out)
}

/// `f f^T` for a row-major `n x k` factor.
pub fn recompose(factor: &[f64], n: usize) -> Vec<f64> {
    let k = factor.len() / n;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = (0..k).map(|c| factor[i * k + c] * factor[j * k + c]).sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn is_lower(f: &[f64], n: usize) -> bool {
        (0..n).all(|i| (i + 1..n).all(|j| f[i * n + j] == 0.0))
    }

    #[test]
    fn scalar_and_identity() {
        assert_eq!(factor_diffusion(&[4.0], 1).unwrap(), vec![2.0]);
        let f = factor_diffusion(&[1.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert!(max_abs_diff(&f, &[1.0, 0.0, 0.0, 1.0]) < 1e-14);
    }

    #[test]
    fn two_by_two_recomposes() {
        let a = [2.0, 1.0, 1.0, 2.0];
        let f = factor_diffusion(&a, 2).unwrap();
        assert!(is_lower(&f, 2));
        assert!(max_abs_diff(&recompose(&f, 2), &a) < 1e-12);
    }

    #[test]
    fn singular_matrix_is_factored() {
        let a = [1.0, 1.0, 1.0, 1.0];
        let f = factor_diffusion(&a, 2).unwrap();
        assert!(max_abs_diff(&recompose(&f, 2), &a) < 1e-12);
    }

    #[test]
    fn tiny_negative_eigenvalue_is_clipped() {
        let a = [1.0, 1.0, 1.0, 1.0 - 1e-13];
        let f = factor_diffusion(&a, 2).unwrap();
        assert!(max_abs_diff(&recompose(&f, 2), &a) < 1e-12);
        assert!(factor_diffusion(&[1.0, 2.0, 2.0, 1.0], 2).is_err());
    }

    #[test]
    fn asymmetry_is_rejected() {
        assert!(matches!(
            factor_diffusion(&[1.0, 0.1, 0.0, 1.0], 2),
            Err(Error::InvalidArgument(_))
        ));
        assert!(factor_diffusion(&[1.0, 1e-10, 0.0, 1.0], 2).is_ok());
    }

    proptest! {
        #[test]
        fn random_psd_matrices_recompose(entries in proptest::collection::vec(-3.0f64..3.0, 9), rank in 1usize..=3) {
            // a = b b^T with b of shape 3 x rank.
            let n = 3;
            let b: Vec<f64> = (0..n).flat_map(|i| (0..rank).map(move |c| (i, c))).map(|(i, c)| entries[i * 3 + c]).collect();
            let a = recompose(&b, n);
            let f = factor_diffusion(&a, n).unwrap();
            prop_assert!(is_lower(&f, n));
            let scale = a.iter().fold(1.0_f64, |s, v| s.max(v.abs()));
            prop_assert!(max_abs_diff(&recompose(&f, n), &a) < 1e-12 * scale);
        }
    }
}
