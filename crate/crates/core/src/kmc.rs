//! Kernelized low-rank matrix completion by four-block coordinate descent.
//!
//! The joint matrix is factored as `U V^T` with `U` split into an output-row
//! block and a feature-row block, and `V` into train/test column blocks.
//! The feature-row block lives in kernel feature space and is never
//! materialized: it is always an exact linear combination of the mapped
//! input columns, so it is parameterized by representer coefficients `A`
//! with `U_features = [phi(X_tr) | phi(X_te)] A`. Every product involving
//! features then reduces to blocks of the Gram matrix.
//!
//! Each block update is the exact minimizer of a ridge-regularized least
//! squares subproblem, so the objective is non-increasing update by update.
//! Optional strictly-positive per-column weights scale the two training
//! reconstruction terms of the objective; the boosting wrapper uses them to
//! focus on hard columns.

use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::GramMatrix;
use crate::linalg::{cholesky, solve_rows_spd, solve_rows_with_chol};
use crate::problem::JointProblem;

/// Solver hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Factor rank (columns of each block).
    pub rank: usize,
    /// Regularization weight, strictly positive.
    pub lambda: f64,
    /// Sweep cap.
    pub max_sweeps: usize,
    /// Convergence threshold on both the relative objective decrease and the
    /// relative block movement of a sweep.
    pub tol: f64,
    /// Seed for factor initialization.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rank: 20,
            lambda: 1.0,
            max_sweeps: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Config("rank must be >= 1".into()));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be >= 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// The four coordinate-descent blocks.
///
/// `coeffs` stands in for the feature-row factor through
/// `U_features = [phi(X_tr) | phi(X_te)] coeffs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorState {
    /// Output-row factor, `sensors x rank`.
    pub output_factor: Array2<f64>,
    /// Representer coefficients, `(t1 + t2) x rank`.
    pub coeffs: Array2<f64>,
    /// Training-column factor, `t1 x rank`.
    pub train_factor: Array2<f64>,
    /// Test-column factor, `t2 x rank`.
    pub test_factor: Array2<f64>,
}

impl FactorState {
    pub fn is_finite(&self) -> bool {
        [
            &self.output_factor,
            &self.coeffs,
            &self.train_factor,
            &self.test_factor,
        ]
        .iter()
        .all(|m| m.iter().all(|v| v.is_finite()))
    }
}

/// Shape information needed to initialize factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FactorDims {
    pub outputs: usize,
    pub train_cols: usize,
    pub test_cols: usize,
}

impl FactorDims {
    pub fn of(problem: &JointProblem) -> Self {
        Self {
            outputs: problem.outputs(),
            train_cols: problem.train_cols(),
            test_cols: problem.test_cols(),
        }
    }

    pub fn total_cols(&self) -> usize {
        self.train_cols + self.test_cols
    }
}

/// Convergence diagnostics of one solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Objective before any sweep, then after each sweep.
    pub objective_trace: Vec<f64>,
    pub sweeps_run: usize,
    pub converged: bool,
    /// Max relative Frobenius change of any block on the final sweep.
    pub stationarity_residual: f64,
}

/// Draws all four blocks i.i.d. uniform on `[-1/sqrt(rank), 1/sqrt(rank)]`
/// from a seeded generator. Deterministic given the seed; blocks are drawn
/// in declaration order, row-major.
pub fn init_factors(cfg: &SolverConfig, dims: &FactorDims) -> FactorState {
    let r = cfg.rank;
    let amp = 1.0 / (r as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |rows: usize| {
        let data: Vec<f64> = (0..rows * r)
            .map(|_| amp * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        Array2::from_shape_vec((rows, r), data).expect("row-major buffer matches shape")
    };
    FactorState {
        output_factor: draw(dims.outputs),
        coeffs: draw(dims.total_cols()),
        train_factor: draw(dims.train_cols),
        test_factor: draw(dims.test_cols),
    }
}

/// Reconstruction of the unknown test-output block: `output_factor * test_factor^T`.
/// Values are unthresholded reals.
pub fn predict(f: &FactorState) -> Array2<f64> {
    f.output_factor.dot(&f.test_factor.t())
}

/// One problem bound to its Gram matrix, solver configuration, and optional
/// per-column weights.
pub struct KmcSolver<'a> {
    problem: &'a JointProblem,
    gram: &'a GramMatrix,
    cfg: SolverConfig,
    weights: Array1<f64>,
    uniform_weight: Option<f64>,
    lambda_eye: Array2<f64>,
}

impl<'a> KmcSolver<'a> {
    /// Binds problem, Gram matrix, config, and optional strictly-positive
    /// weights for the `t1` training columns (absent means all ones).
    pub fn new(
        problem: &'a JointProblem,
        gram: &'a GramMatrix,
        cfg: &SolverConfig,
        col_weights: Option<&Array1<f64>>,
    ) -> Result<Self> {
        cfg.validate()?;
        let t1 = problem.train_cols();
        let t2 = problem.test_cols();
        if gram.train_cols() != t1 || gram.test_cols() != t2 {
            return Err(Error::Dimension(format!(
                "gram split ({}, {}) does not match problem ({t1}, {t2})",
                gram.train_cols(),
                gram.test_cols()
            )));
        }
        let weights = match col_weights {
            Some(w) => {
                if w.len() != t1 {
                    return Err(Error::Dimension(format!(
                        "{} column weights for {t1} training columns",
                        w.len()
                    )));
                }
                if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(Error::Data(
                        "column weights must be strictly positive and finite".into(),
                    ));
                }
                w.clone()
            }
            None => Array1::ones(t1),
        };
        let first = weights[0];
        let uniform_weight = weights.iter().all(|w| *w == first).then_some(first);
        let lambda_eye = Array2::eye(cfg.rank) * cfg.lambda;
        Ok(Self {
            problem,
            gram,
            cfg: cfg.clone(),
            weights,
            uniform_weight,
            lambda_eye,
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    fn weighted_train_factor(&self, f: &FactorState) -> Array2<f64> {
        let mut vw = f.train_factor.clone();
        for (i, mut row) in vw.rows_mut().into_iter().enumerate() {
            let w = self.weights[i];
            row.mapv_inplace(|v| v * w);
        }
        vw
    }

    /// `K * coeffs` and `coeffs^T K coeffs`, the two products every
    /// feature-space term reduces to.
    fn gram_products(&self, f: &FactorState) -> (Array2<f64>, Array2<f64>) {
        let ka = self.gram.matrix().dot(&f.coeffs);
        let g = f.coeffs.t().dot(&ka);
        (ka, g)
    }

    /// Weighted objective value for the given factors.
    pub fn objective(&self, f: &FactorState) -> Result<f64> {
        let (ka, g) = self.gram_products(f);
        self.objective_given(f, &ka, &g)
    }

    fn objective_given(&self, f: &FactorState, ka: &Array2<f64>, g: &Array2<f64>) -> Result<f64> {
        let t1 = self.problem.train_cols();
        let t2 = self.problem.test_cols();
        let k = self.gram.matrix();

        let resid = self.problem.train_outputs() - &f.output_factor.dot(&f.train_factor.t());
        let mut term_outputs = 0.0;
        for (i, col) in resid.columns().into_iter().enumerate() {
            term_outputs += self.weights[i] * col.iter().map(|v| v * v).sum::<f64>();
        }

        // ||phi_i - U_features v_i||^2 expands to K_ii - 2 <ka_i, v_i> + v_i G v_i^T.
        let vg_tr = f.train_factor.dot(g);
        let mut term_train_features = 0.0;
        for i in 0..t1 {
            let kii = k[(i, i)];
            let cross = ka.row(i).dot(&f.train_factor.row(i));
            let quad = f.train_factor.row(i).dot(&vg_tr.row(i));
            term_train_features += self.weights[i] * (kii - 2.0 * cross + quad);
        }
        let vg_te = f.test_factor.dot(g);
        let mut term_test_features = 0.0;
        for j in 0..t2 {
            let kjj = k[(t1 + j, t1 + j)];
            let cross = ka.row(t1 + j).dot(&f.test_factor.row(j));
            let quad = f.test_factor.row(j).dot(&vg_te.row(j));
            term_test_features += kjj - 2.0 * cross + quad;
        }

        let frob2 = |m: &Array2<f64>| m.iter().map(|v| v * v).sum::<f64>();
        let trace_g: f64 = (0..g.nrows()).map(|i| g[(i, i)]).sum();
        let reg = self.cfg.lambda
            * (frob2(&f.output_factor)
                + trace_g
                + frob2(&f.train_factor)
                + frob2(&f.test_factor));

        let total = term_outputs + term_train_features + term_test_features + reg;
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::Numerical(format!("objective diverged to {total}")))
        }
    }

    /// Exact minimizer over the output-row factor:
    /// `U_out = Y W V_tr (V_tr^T W V_tr + lambda I)^-1`.
    pub fn update_output_factor(&self, f: &mut FactorState) -> Result<()> {
        let vw = self.weighted_train_factor(f);
        let m = f.train_factor.t().dot(&vw) + &self.lambda_eye;
        let rhs = self.problem.train_outputs().dot(&vw);
        f.output_factor = solve_rows_spd(&rhs, &m)?;
        Ok(())
    }

    /// Exact minimizer over the feature-row factor, expressed in representer
    /// coordinates: `A = [W V_tr ; V_te] (V_tr^T W V_tr + V_te^T V_te + lambda I)^-1`.
    pub fn update_coeffs(&self, f: &mut FactorState) -> Result<()> {
        let vw = self.weighted_train_factor(f);
        let m = f.train_factor.t().dot(&vw)
            + f.test_factor.t().dot(&f.test_factor)
            + &self.lambda_eye;
        let stacked = concatenate(Axis(0), &[vw.view(), f.test_factor.view()])
            .map_err(|e| Error::Dimension(e.to_string()))?;
        f.coeffs = solve_rows_spd(&stacked, &m)?;
        Ok(())
    }

    /// Exact minimizer over the training-column factor. Row `i` solves
    /// `v_i = w_i (w_i C + lambda I)^-1 b_i` with
    /// `C = U_out^T U_out + A^T K A` and `B = Y^T U_out + K_train A`;
    /// at unit weights this is the single system `V_tr = B (C + lambda I)^-1`.
    pub fn update_train_factor(&self, f: &mut FactorState) -> Result<()> {
        let (ka, g) = self.gram_products(f);
        self.update_train_factor_given(f, &ka, &g)
    }

    fn update_train_factor_given(
        &self,
        f: &mut FactorState,
        ka: &Array2<f64>,
        g: &Array2<f64>,
    ) -> Result<()> {
        let t1 = self.problem.train_cols();
        let b = self.problem.train_outputs().t().dot(&f.output_factor) + &ka.slice(s![..t1, ..]);
        let c = f.output_factor.t().dot(&f.output_factor) + g;
        match self.uniform_weight {
            Some(w) => {
                let m = &c * w + &self.lambda_eye;
                let l = cholesky(&m)?;
                let mut x = solve_rows_with_chol(&b, &l);
                x.mapv_inplace(|v| v * w);
                f.train_factor = x;
            }
            None => {
                let mut out = Array2::zeros(f.train_factor.dim());
                for i in 0..t1 {
                    let w = self.weights[i];
                    let m = &c * w + &self.lambda_eye;
                    let l = cholesky(&m)?;
                    let row = b.slice(s![i..i + 1, ..]).to_owned();
                    let mut x = solve_rows_with_chol(&row, &l);
                    x.mapv_inplace(|v| v * w);
                    out.slice_mut(s![i..i + 1, ..]).assign(&x);
                }
                f.train_factor = out;
            }
        }
        Ok(())
    }

    /// Exact minimizer over the test-column factor:
    /// `V_te = K_test A (A^T K A + lambda I)^-1`.
    pub fn update_test_factor(&self, f: &mut FactorState) -> Result<()> {
        let (ka, g) = self.gram_products(f);
        self.update_test_factor_given(f, &ka, &g)
    }

    fn update_test_factor_given(
        &self,
        f: &mut FactorState,
        ka: &Array2<f64>,
        g: &Array2<f64>,
    ) -> Result<()> {
        let t1 = self.problem.train_cols();
        let m = g + &self.lambda_eye;
        let b = ka.slice(s![t1.., ..]).to_owned();
        f.test_factor = solve_rows_spd(&b, &m)?;
        Ok(())
    }

    /// Runs the four block updates once. Returns the max relative Frobenius
    /// change over the blocks.
    pub fn sweep(&self, f: &mut FactorState) -> Result<f64> {
        Ok(self.sweep_cached(f)?.0)
    }

    fn sweep_cached(&self, f: &mut FactorState) -> Result<(f64, Array2<f64>, Array2<f64>)> {
        let old = f.clone();
        self.update_output_factor(f)?;
        self.update_coeffs(f)?;
        // Updates 3 and 4 leave the coefficients untouched, so the two Gram
        // products can be shared.
        let (ka, g) = self.gram_products(f);
        self.update_train_factor_given(f, &ka, &g)?;
        self.update_test_factor_given(f, &ka, &g)?;

        let rel = |new: &Array2<f64>, old: &Array2<f64>| {
            let diff = (new - old).iter().map(|v| v * v).sum::<f64>().sqrt();
            let base = old.iter().map(|v| v * v).sum::<f64>().sqrt();
            diff / base.max(f64::EPSILON)
        };
        let residual = rel(&f.output_factor, &old.output_factor)
            .max(rel(&f.coeffs, &old.coeffs))
            .max(rel(&f.train_factor, &old.train_factor))
            .max(rel(&f.test_factor, &old.test_factor));
        Ok((residual, ka, g))
    }

    /// Full solve from a seeded initialization.
    pub fn solve(&self) -> Result<(FactorState, SolveReport)> {
        let f0 = init_factors(&self.cfg, &FactorDims::of(self.problem));
        self.solve_from(f0)
    }

    /// Full solve from explicit initial factors. Sweeps until both the
    /// relative objective decrease and the relative block movement fall
    /// below `tol`, or until `max_sweeps`.
    pub fn solve_from(&self, mut f: FactorState) -> Result<(FactorState, SolveReport)> {
        let mut trace = vec![self.objective(&f)?];
        let mut converged = false;
        let mut residual = f64::INFINITY;
        let mut sweeps_run = 0;
        for _ in 0..self.cfg.max_sweeps {
            let (res, ka, g) = self.sweep_cached(&mut f)?;
            residual = res;
            let obj = self.objective_given(&f, &ka, &g)?;
            let prev = *trace.last().expect("trace starts non-empty");
            debug_assert!(
                obj <= prev + 1e-9 * prev.abs().max(1.0),
                "objective increased: {prev} -> {obj}"
            );
            trace.push(obj);
            sweeps_run += 1;
            let rel_decrease = (prev - obj) / prev.abs().max(f64::MIN_POSITIVE);
            if rel_decrease < self.cfg.tol && residual < self.cfg.tol {
                converged = true;
                break;
            }
        }
        if !f.is_finite() {
            return Err(Error::Numerical("non-finite factors after solve".into()));
        }
        Ok((
            f,
            SolveReport {
                objective_trace: trace,
                sweeps_run,
                converged,
                stationarity_residual: residual,
            },
        ))
    }
}

/// Evaluates the weighted objective without materializing features.
pub fn objective(
    problem: &JointProblem,
    gram: &GramMatrix,
    f: &FactorState,
    cfg: &SolverConfig,
    col_weights: Option<&Array1<f64>>,
) -> Result<f64> {
    KmcSolver::new(problem, gram, cfg, col_weights)?.objective(f)
}

/// Solves the completion problem from a seeded initialization.
pub fn solve(
    problem: &JointProblem,
    gram: &GramMatrix,
    cfg: &SolverConfig,
    col_weights: Option<&Array1<f64>>,
) -> Result<(FactorState, SolveReport)> {
    KmcSolver::new(problem, gram, cfg, col_weights)?.solve()
}
