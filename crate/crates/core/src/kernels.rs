//! Kernel functions and Gram-matrix computation.
//!
//! The solver never materializes feature vectors: every appearance of the
//! feature map reduces to inner products between input columns, collected
//! once into a [`GramMatrix`] over all train and test columns.

use ndarray::{concatenate, s, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel family and hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// Plain inner product; features are the inputs themselves.
    Linear,
    /// `k(x, y) = exp(-gamma * ||x - y||^2)`, `gamma > 0`.
    Rbf { gamma: f64 },
    /// `k(x, y) = (x.y + coef0)^degree`, `degree >= 1`.
    Polynomial { degree: u32, coef0: f64 },
}

impl KernelSpec {
    /// Scale-aware default: RBF with `gamma = 1 / input_rows`.
    pub fn default_rbf(input_rows: usize) -> Self {
        KernelSpec::Rbf {
            gamma: 1.0 / input_rows.max(1) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } => {
                if *gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Config(format!("rbf gamma must be > 0, got {gamma}")))
                }
            }
            KernelSpec::Polynomial { degree, coef0 } => {
                if *degree < 1 {
                    Err(Error::Config("polynomial degree must be >= 1".into()))
                } else if !coef0.is_finite() {
                    Err(Error::Config("polynomial coef0 must be finite".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Kernel value for a single pair of columns.
    pub fn eval(&self, x: &ArrayView1<f64>, y: &ArrayView1<f64>) -> f64 {
        match self {
            KernelSpec::Linear => x.dot(y),
            KernelSpec::Rbf { gamma } => {
                let d2 = x
                    .iter()
                    .zip(y.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>();
                (-gamma * d2).exp()
            }
            KernelSpec::Polynomial { degree, coef0 } => (x.dot(y) + coef0).powi(*degree as i32),
        }
    }
}

/// Kernel inner products over all input columns `[X_tr | X_te]`, plus the
/// train/test split point.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    k: Array2<f64>,
    t1: usize,
    t2: usize,
}

impl GramMatrix {
    /// Wraps a precomputed matrix, checking squareness, the split sizes, and
    /// symmetry.
    pub fn new(k: Array2<f64>, t1: usize, t2: usize) -> Result<Self> {
        let t = t1 + t2;
        if k.dim() != (t, t) {
            return Err(Error::Dimension(format!(
                "gram matrix is {:?}, expected ({t}, {t})",
                k.dim()
            )));
        }
        let scale = k.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        for i in 0..t {
            for j in (i + 1)..t {
                if (k[(i, j)] - k[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::Data(format!(
                        "gram matrix asymmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { k, t1, t2 })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.k
    }

    pub fn train_cols(&self) -> usize {
        self.t1
    }

    pub fn test_cols(&self) -> usize {
        self.t2
    }

    pub fn total_cols(&self) -> usize {
        self.t1 + self.t2
    }
}

/// Computes the Gram matrix of `[X_tr | X_te]` columns under `spec`.
///
/// Exact symmetry is enforced by averaging the matrix with its transpose.
pub fn gram(spec: &KernelSpec, x_tr: &Array2<f64>, x_te: &Array2<f64>) -> Result<GramMatrix> {
    spec.validate()?;
    if x_tr.nrows() != x_te.nrows() {
        return Err(Error::Dimension(format!(
            "train inputs have {} rows, test inputs {}",
            x_tr.nrows(),
            x_te.nrows()
        )));
    }
    if x_tr.iter().chain(x_te.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite entry in kernel inputs".into()));
    }
    let all = concatenate(Axis(1), &[x_tr.view(), x_te.view()])
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let inner = all.t().dot(&all);
    let t = all.ncols();
    let mut k = match spec {
        KernelSpec::Linear => inner,
        KernelSpec::Rbf { gamma } => {
            let diag: Vec<f64> = (0..t).map(|i| inner[(i, i)]).collect();
            Array2::from_shape_fn((t, t), |(i, j)| {
                let d2 = (diag[i] + diag[j] - 2.0 * inner[(i, j)]).max(0.0);
                (-gamma * d2).exp()
            })
        }
        KernelSpec::Polynomial { degree, coef0 } => {
            inner.mapv(|v| (v + coef0).powi(*degree as i32))
        }
    };
    let kt = k.t().to_owned();
    k.zip_mut_with(&kt, |a, b| *a = 0.5 * (*a + *b));
    Ok(GramMatrix {
        k,
        t1: x_tr.ncols(),
        t2: x_te.ncols(),
    })
}

/// Splits the Gram matrix into its training and test row blocks: the inner
/// products of train (resp. test) feature columns against all columns.
pub fn kernel_blocks(g: &GramMatrix) -> (Array2<f64>, Array2<f64>) {
    let t1 = g.t1;
    (
        g.k.slice(s![..t1, ..]).to_owned(),
        g.k.slice(s![t1.., ..]).to_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, concatenate};
    use proptest::prelude::*;

    #[test]
    fn linear_kernel_of_orthonormal_columns_is_identity() {
        let x_tr = array![[1.0], [0.0]];
        let x_te = array![[0.0], [1.0]];
        let g = gram(&KernelSpec::Linear, &x_tr, &x_te).unwrap();
        assert_eq!(g.matrix(), &array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn rbf_diagonal_is_one() {
        let x_tr = array![[0.3, 0.9], [0.1, 0.4]];
        let x_te = array![[0.7], [0.2]];
        let g = gram(&KernelSpec::Rbf { gamma: 2.0 }, &x_tr, &x_te).unwrap();
        for i in 0..3 {
            assert_eq!(g.matrix()[(i, i)], 1.0);
        }
    }

    #[test]
    fn rbf_off_diagonal_hand_value() {
        // gamma 0.5, columns [0,0] and [1,1]: exp(-0.5 * 2) = exp(-1).
        let x_tr = array![[0.0], [0.0]];
        let x_te = array![[1.0], [1.0]];
        let g = gram(&KernelSpec::Rbf { gamma: 0.5 }, &x_tr, &x_te).unwrap();
        assert_abs_diff_eq!(g.matrix()[(0, 1)], (-1.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(g.matrix()[(0, 1)], 0.367879, epsilon = 1e-6);
    }

    #[test]
    fn polynomial_matches_direct_eval() {
        let spec = KernelSpec::Polynomial {
            degree: 3,
            coef0: 1.5,
        };
        let x_tr = array![[0.2, 0.8], [0.5, 0.1]];
        let x_te = array![[0.9], [0.3]];
        let g = gram(&spec, &x_tr, &x_te).unwrap();
        let all = concatenate(Axis(1), &[x_tr.view(), x_te.view()]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let direct = spec.eval(&all.column(i), &all.column(j));
                assert_abs_diff_eq!(g.matrix()[(i, j)], direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn row_count_mismatch_rejected() {
        let x_tr = array![[1.0], [0.0]];
        let x_te = array![[1.0]];
        assert!(matches!(
            gram(&KernelSpec::Linear, &x_tr, &x_te).unwrap_err(),
            Error::Dimension(_)
        ));
    }

    #[test]
    fn non_finite_input_rejected() {
        let x_tr = array![[f64::NAN]];
        let x_te = array![[1.0]];
        assert!(matches!(
            gram(&KernelSpec::Linear, &x_tr, &x_te).unwrap_err(),
            Error::Data(_)
        ));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::Rbf { gamma: 0.0 }.validate().is_err());
        assert!(KernelSpec::Polynomial {
            degree: 0,
            coef0: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn blocks_partition_the_matrix() {
        let k = array![[1.0, 0.2, 0.1], [0.2, 1.0, 0.4], [0.1, 0.4, 1.0]];
        let g = GramMatrix::new(k.clone(), 2, 1).unwrap();
        let (train, test) = kernel_blocks(&g);
        assert_eq!(train, k.slice(s![..2, ..]).to_owned());
        assert_eq!(test, k.slice(s![2.., ..]).to_owned());
        let stacked = concatenate(Axis(0), &[train.view(), test.view()]).unwrap();
        assert_eq!(stacked, k);
        // Cross blocks are transposes of each other.
        assert_eq!(
            train.slice(s![.., 2..]).to_owned(),
            test.slice(s![.., ..2]).t().to_owned()
        );
    }

    proptest! {
        #[test]
        fn linear_gram_equals_explicit_inner_products(
            cols in proptest::collection::vec(
                proptest::collection::vec(-1.0f64..1.0, 4), 2..6),
        ) {
            let t = cols.len();
            let x = Array2::from_shape_fn((4, t), |(i, j)| cols[j][i]);
            let (x_tr, x_te) = (x.slice(s![.., ..t-1]).to_owned(), x.slice(s![.., t-1..]).to_owned());
            let g = gram(&KernelSpec::Linear, &x_tr, &x_te).unwrap();
            let explicit = x.t().dot(&x);
            for ((i, j), v) in explicit.indexed_iter() {
                prop_assert!((g.matrix()[(i, j)] - v).abs() <= 1e-10);
            }
        }

        #[test]
        fn permuting_columns_permutes_gram(
            perm_seed in 0u64..1000,
            cols in proptest::collection::vec(
                proptest::collection::vec(0.0f64..1.0, 3), 3..7),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let t = cols.len();
            let x = Array2::from_shape_fn((3, t), |(i, j)| cols[j][i]);
            let mut order: Vec<usize> = (0..t).collect();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed);
            order.shuffle(&mut rng);
            let xp = Array2::from_shape_fn((3, t), |(i, j)| x[(i, order[j])]);
            let spec = KernelSpec::Rbf { gamma: 0.7 };
            let empty = Array2::zeros((3, 0));
            let g = gram(&spec, &x, &empty).unwrap();
            let gp = gram(&spec, &xp, &empty).unwrap();
            for i in 0..t {
                for j in 0..t {
                    prop_assert_eq!(gp.matrix()[(i, j)], g.matrix()[(order[i], order[j])]);
                }
            }
        }
    }

    #[test]
    fn gram_is_positive_semidefinite_on_random_inputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for spec in [
            KernelSpec::Linear,
            KernelSpec::Rbf { gamma: 0.9 },
            KernelSpec::Polynomial {
                degree: 2,
                coef0: 1.0,
            },
        ] {
            let x_tr = Array2::from_shape_fn((5, 8), |_| f64::from(rng.random::<bool>()));
            let x_te = Array2::from_shape_fn((5, 3), |_| f64::from(rng.random::<bool>()));
            let g = gram(&spec, &x_tr, &x_te).unwrap();
            let t = g.total_cols();
            let m = nalgebra::DMatrix::from_fn(t, t, |i, j| g.matrix()[(i, j)]);
            let norm = m.norm();
            let eigs = m.symmetric_eigenvalues();
            let min_eig = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(
                min_eig >= -1e-8 * norm.max(1.0),
                "{spec:?}: min eigenvalue {min_eig}"
            );
        }
    }
}
