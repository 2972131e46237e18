//! Small dense symmetric-positive-definite solves.
//!
//! The solver's normal matrices are `r x r` with a `+ lambda I` shift, so a
//! plain Cholesky factorization is all that is needed.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Only the lower triangle of `m` is read.
pub(crate) fn cholesky(m: &Array2<f64>) -> Result<Array2<f64>> {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = m[(i, j)];
            for k in 0..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return Err(Error::Numerical(format!(
                        "cholesky pivot {sum} at index {i}"
                    )));
                }
                l[(i, i)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solves `x * M = b` for each row of `b`, given the Cholesky factor `l` of
/// the symmetric `M = L L^T`.
pub(crate) fn solve_rows_with_chol(b: &Array2<f64>, l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let rows = b.nrows();
    debug_assert_eq!(b.ncols(), n);
    let mut x = b.clone();
    for r in 0..rows {
        // Forward: L z = b_r
        for i in 0..n {
            let mut sum = x[(r, i)];
            for k in 0..i {
                sum -= l[(i, k)] * x[(r, k)];
            }
            x[(r, i)] = sum / l[(i, i)];
        }
        // Backward: L^T y = z
        for i in (0..n).rev() {
            let mut sum = x[(r, i)];
            for k in (i + 1)..n {
                sum -= l[(k, i)] * x[(r, k)];
            }
            x[(r, i)] = sum / l[(i, i)];
        }
    }
    x
}

/// Solves `x * M = b` for symmetric positive-definite `M`.
pub(crate) fn solve_rows_spd(b: &Array2<f64>, m: &Array2<f64>) -> Result<Array2<f64>> {
    let l = cholesky(m)?;
    Ok(solve_rows_with_chol(b, &l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solve_recovers_known_solution() {
        let m = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let x_true = array![[1.0, -2.0, 0.5], [0.0, 3.0, -1.0]];
        let b = x_true.dot(&m);
        let x = solve_rows_spd(&b, &m).unwrap();
        for (a, b) in x.iter().zip(x_true.iter()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn matches_nalgebra_on_random_systems() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(1..8);
            let a = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() - 0.5);
            let m = a.t().dot(&a) + 0.5 * Array2::<f64>::eye(n);
            let b = Array2::from_shape_fn((3, n), |_| rng.random::<f64>() - 0.5);
            let x = solve_rows_spd(&b, &m).unwrap();

            let m_na = nalgebra::DMatrix::from_fn(n, n, |i, j| m[(i, j)]);
            let chol = m_na.cholesky().unwrap();
            for r in 0..3 {
                let rhs = nalgebra::DVector::from_fn(n, |i, _| b[(r, i)]);
                let sol = chol.solve(&rhs);
                for i in 0..n {
                    assert!((x[(r, i)] - sol[i]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn non_pd_matrix_is_rejected() {
        let m = array![[1.0, 2.0], [2.0, 1.0]]; // indefinite
        assert!(cholesky(&m).is_err());
    }
}
