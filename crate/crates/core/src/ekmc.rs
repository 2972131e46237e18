//! Boosting wrapper around the completion solver.
//!
//! Each round solves the weighted completion problem, measures which
//! training columns it gets wrong after thresholding, and reweights those
//! columns so later rounds concentrate on them. Test predictions of the
//! retained rounds are combined by a normalized weighted vote and
//! thresholded to binary output.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::GramMatrix;
use crate::kmc::{predict, FactorState, KmcSolver, SolverConfig};
use crate::problem::JointProblem;

/// Binarization rule: one shared cutoff, or one cutoff per column of the
/// matrix being thresholded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Threshold {
    Fixed(f64),
    PerColumn(Vec<f64>),
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::Fixed(0.5)
    }
}

impl Threshold {
    pub fn validate(&self) -> Result<()> {
        let entries: &[f64] = match self {
            Threshold::Fixed(v) => std::slice::from_ref(v),
            Threshold::PerColumn(v) => v,
        };
        if entries.is_empty() {
            return Err(Error::Config("per-column threshold list is empty".into()));
        }
        for v in entries {
            if !(*v > 0.0 && *v < 1.0) {
                return Err(Error::Config(format!(
                    "threshold {v} outside the open interval (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

/// Ensemble hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Round cap.
    pub max_rounds: usize,
    /// Clamp floor for the per-round weighted error.
    pub eps_min: f64,
    /// Binarization rule for the combined test prediction (per-column lists
    /// refer to test columns; the training-side error indicator then falls
    /// back to the fixed 0.5 rule).
    pub threshold: Threshold,
    /// Stop (discarding the round) when the unclamped weighted error
    /// reaches 0.5.
    pub stop_on_weak: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            max_rounds: 10,
            eps_min: 1e-6,
            threshold: Threshold::default(),
            stop_on_weak: true,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::Config("max_rounds must be >= 1".into()));
        }
        if !(self.eps_min > 0.0 && self.eps_min < 0.5) {
            return Err(Error::Config(format!(
                "eps_min must lie in (0, 0.5), got {}",
                self.eps_min
            )));
        }
        self.threshold.validate()
    }
}

/// One retained boosting round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRound {
    /// Unthresholded test prediction, `sensors x t2`.
    pub test_prediction: Array2<f64>,
    /// Thresholded training reconstruction, `sensors x t1`.
    pub train_prediction: Array2<u8>,
    /// Clamped weighted training error of the round.
    pub epsilon: f64,
    /// Vote weight `ln((1 - epsilon) / epsilon)`.
    pub beta: f64,
}

/// Fitted ensemble: retained rounds, final column weights, and the combined
/// test prediction in raw and thresholded form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub rounds: Vec<EnsembleRound>,
    /// Column weights after the last retained round, length `t1`.
    pub final_weights: Array1<f64>,
    /// Normalized weighted vote over round test predictions.
    pub combined: Array2<f64>,
    /// Thresholded combined prediction.
    pub thresholded: Array2<u8>,
    /// Training columns the combined vote still gets wrong.
    pub train_error_count: usize,
    /// Factor blocks of the last retained round, for inspection dumps.
    pub final_factors: FactorState,
}

impl EnsembleModel {
    pub fn epsilons(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.epsilon).collect()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.beta).collect()
    }

    /// Upper bound on the training-column error count implied by the
    /// recorded per-round errors.
    pub fn training_error_bound(&self, train_cols: usize) -> Result<f64> {
        training_error_bound(&self.epsilons(), train_cols)
    }
}

/// Binarizes a real matrix: entry is 1 iff it strictly exceeds its column's
/// threshold.
pub fn threshold_predictions(raw: &Array2<f64>, threshold: &Threshold) -> Result<Array2<u8>> {
    threshold.validate()?;
    let cutoff_for = |col: usize| -> f64 {
        match threshold {
            Threshold::Fixed(v) => *v,
            Threshold::PerColumn(v) => v[col],
        }
    };
    if let Threshold::PerColumn(v) = threshold {
        if v.len() != raw.ncols() {
            return Err(Error::Dimension(format!(
                "{} thresholds for {} columns",
                v.len(),
                raw.ncols()
            )));
        }
    }
    Ok(Array2::from_shape_fn(raw.dim(), |(i, j)| {
        u8::from(raw[(i, j)] > cutoff_for(j))
    }))
}

/// Per-test-column threshold heuristic: the training block's overall
/// positive rate, clamped into (0, 1), replicated for every test column.
pub fn positive_rate_thresholds(problem: &JointProblem) -> Threshold {
    let y = problem.train_outputs();
    let rate = y.sum() / y.len() as f64;
    Threshold::PerColumn(vec![rate.clamp(1e-3, 1.0 - 1e-3); problem.test_cols()])
}

/// Bound on the training-column error count after `K` rounds with recorded
/// weighted errors `epsilons`: `2^K * DT * prod_k sqrt(eps_k (1 - eps_k))`.
pub fn training_error_bound(epsilons: &[f64], train_cols: usize) -> Result<f64> {
    if epsilons.is_empty() {
        return Err(Error::Config(
            "training error bound needs at least one round".into(),
        ));
    }
    for e in epsilons {
        if !(*e > 0.0 && *e < 1.0) {
            return Err(Error::Config(format!("epsilon {e} outside (0, 1)")));
        }
    }
    let k = epsilons.len() as i32;
    let product: f64 = epsilons.iter().map(|e| (e * (1.0 - e)).sqrt()).product();
    Ok(2f64.powi(k) * train_cols as f64 * product)
}

/// Normalized weighted vote: `sum_k (beta_k / sum beta) * prediction_k`.
pub fn weighted_vote(predictions: &[&Array2<f64>], betas: &[f64]) -> Result<Array2<f64>> {
    if predictions.is_empty() || predictions.len() != betas.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} vote weights",
            predictions.len(),
            betas.len()
        )));
    }
    let total: f64 = betas.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Numerical(format!(
            "non-positive total vote weight {total}"
        )));
    }
    let mut combined = Array2::zeros(predictions[0].dim());
    for (pred, beta) in predictions.iter().zip(betas) {
        combined = combined + &(*pred * (beta / total));
    }
    Ok(combined)
}

/// True per column where any entry of the binary prediction differs from
/// the 0/1 truth.
fn mispredicted_columns(truth: &Array2<f64>, prediction: &Array2<u8>) -> Vec<bool> {
    (0..truth.ncols())
        .map(|j| {
            (0..truth.nrows()).any(|i| f64::from(prediction[(i, j)]) != truth[(i, j)])
        })
        .collect()
}

/// Fits the boosted ensemble.
///
/// Starting from unit column weights, each round solves the weighted
/// completion problem, clamps its weighted training error into
/// `[eps_min, 1 - eps_min]`, and multiplies the weights of mispredicted
/// columns by `exp(beta)`. Rounds stop at the cap, at zero unclamped
/// training error, or on the first weak round (unclamped error >= 0.5,
/// which is discarded). If the very first round is weak the fit fails with
/// a degenerate-ensemble error carrying that round's prediction.
pub fn ekmc_fit(
    problem: &JointProblem,
    gram: &GramMatrix,
    solver_cfg: &SolverConfig,
    ensemble_cfg: &EnsembleConfig,
) -> Result<EnsembleModel> {
    ensemble_cfg.validate()?;
    let t1 = problem.train_cols();
    let train_threshold = match &ensemble_cfg.threshold {
        Threshold::Fixed(v) => Threshold::Fixed(*v),
        Threshold::PerColumn(_) => Threshold::Fixed(0.5),
    };

    let mut weights: Array1<f64> = Array1::ones(t1);
    let mut rounds: Vec<EnsembleRound> = Vec::new();
    let mut final_factors: Option<FactorState> = None;
    for _ in 0..ensemble_cfg.max_rounds {
        let solver = KmcSolver::new(problem, gram, solver_cfg, Some(&weights))?;
        let (factors, _report) = solver.solve()?;
        let test_prediction = predict(&factors);
        let train_raw = factors.output_factor.dot(&factors.train_factor.t());
        let train_prediction = threshold_predictions(&train_raw, &train_threshold)?;
        let mispredicted = mispredicted_columns(problem.train_outputs(), &train_prediction);

        let weight_sum = weights.sum();
        let error_mass: f64 = weights
            .iter()
            .zip(&mispredicted)
            .filter(|(_, m)| **m)
            .map(|(w, _)| w)
            .sum();
        let raw_epsilon = error_mass / weight_sum;

        if ensemble_cfg.stop_on_weak && raw_epsilon >= 0.5 {
            if rounds.is_empty() {
                return Err(Error::DegenerateEnsemble {
                    epsilon: raw_epsilon,
                    fallback: test_prediction,
                });
            }
            break;
        }
        let epsilon = raw_epsilon.clamp(ensemble_cfg.eps_min, 1.0 - ensemble_cfg.eps_min);
        let beta = ((1.0 - epsilon) / epsilon).ln();
        let scale = beta.exp();
        for (w, m) in weights.iter_mut().zip(&mispredicted) {
            if *m {
                *w *= scale;
            }
        }
        rounds.push(EnsembleRound {
            test_prediction,
            train_prediction,
            epsilon,
            beta,
        });
        final_factors = Some(factors);
        if raw_epsilon == 0.0 {
            break;
        }
    }
    debug_assert!(!rounds.is_empty());
    let final_factors = final_factors.expect("at least one retained round");

    let betas: Vec<f64> = rounds.iter().map(|r| r.beta).collect();
    let test_preds: Vec<&Array2<f64>> = rounds.iter().map(|r| &r.test_prediction).collect();
    let combined = weighted_vote(&test_preds, &betas)?;
    let thresholded = threshold_predictions(&combined, &ensemble_cfg.threshold)?;

    // Combined training vote, for the error-bound check.
    let train_votes: Vec<Array2<f64>> = rounds
        .iter()
        .map(|r| r.train_prediction.mapv(f64::from))
        .collect();
    let train_vote_refs: Vec<&Array2<f64>> = train_votes.iter().collect();
    let combined_train = weighted_vote(&train_vote_refs, &betas)?;
    let combined_train_bin = threshold_predictions(&combined_train, &train_threshold)?;
    let train_error_count = mispredicted_columns(problem.train_outputs(), &combined_train_bin)
        .iter()
        .filter(|m| **m)
        .count();

    Ok(EnsembleModel {
        rounds,
        final_weights: weights,
        combined,
        thresholded,
        train_error_count,
        final_factors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{gram, KernelSpec};
    use crate::kmc::solve;
    use crate::problem::WindowConfig;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bare_config(n: usize, lag: usize, t1: usize, t2: usize) -> WindowConfig {
        WindowConfig {
            sensors: n,
            lag,
            horizon: 1,
            columns_per_day: t1,
            days_per_week: 1,
            weeks: 1,
            test_columns: t2,
            timezone_offset: 0,
        }
    }

    /// Linearly related binary data, so low-rank completion can separate it.
    fn separable_problem(t1: usize, t2: usize) -> JointProblem {
        let pattern = |j: usize| f64::from(j % 3 == 0);
        let y_tr = Array2::from_shape_fn((1, t1), |(_, j)| pattern(j));
        let x_tr = Array2::from_shape_fn((1, t1), |(_, j)| pattern(j));
        let x_te = Array2::from_shape_fn((1, t2), |(_, j)| pattern(j));
        JointProblem::from_parts(y_tr, x_tr, x_te, bare_config(1, 1, t1, t2)).unwrap()
    }

    fn imbalanced_problem(n: usize, t1: usize, t2: usize, seed: u64) -> JointProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sparse =
            |rows: usize, cols: usize| Array2::from_shape_fn((rows, cols), |_| f64::from(rng.random::<f64>() < 0.1));
        let y_tr = sparse(n, t1);
        let x_tr = sparse(n * 2, t1);
        let x_te = sparse(n * 2, t2);
        JointProblem::from_parts(y_tr, x_tr, x_te, bare_config(n, 2, t1, t2)).unwrap()
    }

    #[test]
    fn threshold_is_strict_at_the_boundary() {
        let raw = array![[0.51, 0.5]];
        let out = threshold_predictions(&raw, &Threshold::Fixed(0.5)).unwrap();
        assert_eq!(out, array![[1u8, 0]]);
    }

    #[test]
    fn threshold_of_zeros_is_zeros() {
        let raw = Array2::zeros((2, 3));
        let out = threshold_predictions(&raw, &Threshold::Fixed(0.5)).unwrap();
        assert_eq!(out, Array2::<u8>::zeros((2, 3)));
    }

    #[test]
    fn per_column_thresholds_apply_columnwise() {
        let raw = array![[0.5, 0.5]];
        let out =
            threshold_predictions(&raw, &Threshold::PerColumn(vec![0.3, 0.7])).unwrap();
        assert_eq!(out, array![[1u8, 0]]);
    }

    #[test]
    fn per_column_length_mismatch_is_rejected() {
        let raw = array![[0.5, 0.5, 0.5]];
        assert!(matches!(
            threshold_predictions(&raw, &Threshold::PerColumn(vec![0.3, 0.7])).unwrap_err(),
            Error::Dimension(_)
        ));
    }

    #[test]
    fn bound_direct_substitutions() {
        assert_eq!(training_error_bound(&[0.5], 10).unwrap(), 10.0);
        let b = training_error_bound(&[0.25, 0.25], 100).unwrap();
        assert!((b - 75.0).abs() < 1e-12, "{b}");
        // eps = 0.5 contributes a unit factor, so the bound stays at DT.
        let b = training_error_bound(&[0.5, 0.5, 0.5], 40).unwrap();
        assert!((b - 40.0).abs() < 1e-12);
        assert!(training_error_bound(&[], 10).is_err());
        assert!(training_error_bound(&[0.0], 10).is_err());
        assert!(training_error_bound(&[1.0], 10).is_err());
    }

    #[test]
    fn separable_instance_stops_after_one_clamped_round() {
        let problem = separable_problem(12, 4);
        let g = gram(&KernelSpec::Linear, problem.train_inputs(), problem.test_inputs()).unwrap();
        let scfg = SolverConfig {
            rank: 2,
            lambda: 1e-3,
            max_sweeps: 200,
            tol: 1e-10,
            seed: 1,
        };
        let ecfg = EnsembleConfig::default();
        let model = ekmc_fit(&problem, &g, &scfg, &ecfg).unwrap();
        assert_eq!(model.rounds.len(), 1);
        assert_eq!(model.rounds[0].epsilon, ecfg.eps_min);
        let single = threshold_predictions(&model.rounds[0].test_prediction, &ecfg.threshold)
            .unwrap();
        assert_eq!(model.thresholded, single);
        assert_eq!(model.train_error_count, 0);
    }

    #[test]
    fn single_round_cap_reduces_to_plain_solve() {
        let problem = imbalanced_problem(2, 20, 5, 3);
        let g = gram(
            &KernelSpec::Rbf { gamma: 0.25 },
            problem.train_inputs(),
            problem.test_inputs(),
        )
        .unwrap();
        let scfg = SolverConfig {
            rank: 3,
            lambda: 0.5,
            max_sweeps: 30,
            tol: 1e-8,
            seed: 3,
        };
        let ecfg = EnsembleConfig {
            max_rounds: 1,
            ..EnsembleConfig::default()
        };
        let model = ekmc_fit(&problem, &g, &scfg, &ecfg).unwrap();
        let (factors, _) = solve(&problem, &g, &scfg, None).unwrap();
        let plain = threshold_predictions(&predict(&factors), &ecfg.threshold).unwrap();
        assert_eq!(model.thresholded, plain);
        assert_eq!(model.combined, predict(&factors));
    }

    #[test]
    fn weight_updates_raise_exactly_the_mispredicted_columns() {
        let problem = imbalanced_problem(2, 30, 5, 11);
        let g = gram(
            &KernelSpec::Rbf { gamma: 0.25 },
            problem.train_inputs(),
            problem.test_inputs(),
        )
        .unwrap();
        let scfg = SolverConfig {
            rank: 2,
            lambda: 1.0,
            max_sweeps: 20,
            tol: 1e-8,
            seed: 11,
        };
        let ecfg = EnsembleConfig {
            max_rounds: 4,
            ..EnsembleConfig::default()
        };
        let model = match ekmc_fit(&problem, &g, &scfg, &ecfg) {
            Ok(m) => m,
            Err(Error::DegenerateEnsemble { .. }) => return, // weak base learner; nothing to check
            Err(other) => panic!("{other}"),
        };
        // Replay the weight recursion from the recorded rounds.
        let mut weights: Array1<f64> = Array1::ones(problem.train_cols());
        for round in &model.rounds {
            assert!(round.beta > 0.0);
            let mispredicted =
                mispredicted_columns(problem.train_outputs(), &round.train_prediction);
            let before = weights.clone();
            for (w, m) in weights.iter_mut().zip(&mispredicted) {
                if *m {
                    *w *= round.beta.exp();
                }
            }
            for i in 0..weights.len() {
                if mispredicted[i] {
                    assert!(weights[i] > before[i]);
                } else {
                    assert_eq!(weights[i], before[i]);
                }
            }
        }
        assert_eq!(weights, model.final_weights);
        assert!(model.final_weights.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn identical_round_predictions_combine_to_themselves() {
        let pred = array![[0.2, 0.9], [0.4, 0.1]];
        let combined = weighted_vote(&[&pred, &pred, &pred], &[0.5, 1.5, 2.0]).unwrap();
        for (a, b) in combined.iter().zip(pred.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn vote_coefficients_are_normalized() {
        let betas = [0.3, 1.1, 0.7];
        let total: f64 = betas.iter().sum();
        let coeffs: Vec<f64> = betas.iter().map(|b| b / total).collect();
        assert!((coeffs.iter().sum::<f64>() - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn measured_train_errors_respect_the_bound() {
        for seed in [5u64, 17, 29] {
            let problem = imbalanced_problem(2, 40, 6, seed);
            let g = gram(
                &KernelSpec::Rbf { gamma: 0.2 },
                problem.train_inputs(),
                problem.test_inputs(),
            )
            .unwrap();
            let scfg = SolverConfig {
                rank: 4,
                lambda: 0.3,
                max_sweeps: 30,
                tol: 1e-8,
                seed,
            };
            let ecfg = EnsembleConfig {
                max_rounds: 5,
                ..EnsembleConfig::default()
            };
            let model = match ekmc_fit(&problem, &g, &scfg, &ecfg) {
                Ok(m) => m,
                Err(Error::DegenerateEnsemble { .. }) => continue,
                Err(other) => panic!("{other}"),
            };
            let bound = model.training_error_bound(problem.train_cols()).unwrap();
            assert!(
                (model.train_error_count as f64) <= bound,
                "seed {seed}: {} errors vs bound {bound}",
                model.train_error_count
            );
        }
    }

    #[test]
    fn positive_rate_heuristic_tracks_the_training_block() {
        let problem = imbalanced_problem(2, 40, 6, 23);
        match positive_rate_thresholds(&problem) {
            Threshold::PerColumn(v) => {
                assert_eq!(v.len(), problem.test_cols());
                let rate = problem.train_outputs().sum() / (2.0 * 40.0);
                assert!((v[0] - rate.clamp(1e-3, 0.999)).abs() < 1e-12);
                assert!(v.iter().all(|t| *t > 0.0 && *t < 1.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
