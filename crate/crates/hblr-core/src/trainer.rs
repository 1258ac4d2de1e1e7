//! Training loop for a batch model: center allocation, coordinate-ascent
//! sweeps over the variational posteriors, length-scale ascent, and
//! precision-based feature pruning.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::{feature_vector, rbf_weight_unchecked, Center, FeatureVector, LengthScale};
use crate::posterior::{
    prune_features, update_alpha_posterior, update_beta_posterior, update_hidden_targets,
    update_weight_posterior, WeightPosterior,
};

/// Tunables shared by every local model in a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    /// Gamma prior shape for both precision families.
    pub a0: f64,
    /// Gamma prior rate for both precision families.
    pub b0: f64,
    /// Fixed observation precision of the response.
    pub beta_y: f64,
    /// Relative jitter applied to the weight-precision diagonal.
    pub eps: f64,
    /// Activation threshold below which a sample spawns a new center.
    pub w_gen: f64,
    /// Initial length scale, uniform across input dimensions.
    pub lambda_init: f64,
    /// Step size of the length-scale gradient ascent.
    pub kappa: f64,
    /// Convergence tolerance on the sweep-to-sweep change in training nMSE.
    pub delta: f64,
    /// Maximum number of sweeps.
    pub max_iters: usize,
    /// A feature is dropped once its posterior precision reaches this value.
    pub prune_threshold: f64,
    /// Apply the length-scale step per sample instead of once per sweep.
    pub lambda_stochastic: bool,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            a0: 1e-6,
            b0: 1e-6,
            beta_y: 1e9,
            eps: 1e-10,
            w_gen: 0.5,
            lambda_init: 0.3,
            kappa: 1e-4,
            delta: 1e-4,
            max_iters: 200,
            prune_threshold: 1000.0,
            lambda_stochastic: false,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("a0", self.a0),
            ("b0", self.b0),
            ("beta_y", self.beta_y),
            ("lambda_init", self.lambda_init),
            ("prune_threshold", self.prune_threshold),
        ];
        for (name, value) in positive {
            if value.is_nan() || value <= 0.0 {
                return Err(Error::invalid(format!("{name} must be positive, got {value}")));
            }
        }
        let non_negative = [("eps", self.eps), ("kappa", self.kappa), ("delta", self.delta)];
        for (name, value) in non_negative {
            if value < 0.0 || !value.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must be finite and non-negative, got {value}"
                )));
            }
        }
        if !(self.w_gen > 0.0 && self.w_gen <= 1.0) {
            return Err(Error::invalid(format!(
                "w_gen must lie in (0, 1], got {}",
                self.w_gen
            )));
        }
        Ok(())
    }
}

/// One localized linear model: an RBF envelope around a fixed center and a
/// Bayesian linear regression on the offset-plus-bias features inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalModel {
    pub center: Center,
    pub length_scale: LengthScale,
    /// Posterior mean precision of each feature weight; frozen once pruned.
    pub alpha_hat: DVector<f64>,
    /// Posterior mean precision of the model's hidden target.
    pub beta_f_hat: f64,
    /// Weight posterior over the full feature set; pruned entries are zero.
    pub weights: WeightPosterior,
    /// Which features are still in play (the last entry is the bias).
    pub active_mask: Vec<bool>,
}

impl LocalModel {
    fn fresh(center: Center, params: &HyperParams) -> Result<Self> {
        let d = center.dim();
        let p = d + 1;
        let prior_precision = params.a0 / params.b0;
        Ok(LocalModel {
            length_scale: LengthScale::uniform(d, params.lambda_init)?,
            center,
            alpha_hat: DVector::from_element(p, prior_precision),
            beta_f_hat: prior_precision,
            weights: WeightPosterior::zeros(p),
            active_mask: vec![true; p],
        })
    }

    /// Feature vector of this model at `x` (already in model coordinates).
    pub fn features(&self, x: &DVector<f64>) -> Result<FeatureVector> {
        feature_vector(x, &self.center, &self.length_scale, &self.active_mask)
    }

    /// Mean prediction of this model alone at `x`.
    pub fn predict_mean(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.features(x)?.values.dot(&self.weights.mean))
    }

    fn active_indices(&self) -> Vec<usize> {
        self.active_mask
            .iter()
            .enumerate()
            .filter_map(|(i, keep)| keep.then_some(i))
            .collect()
    }
}

/// A trained committee of local models for one scalar response.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchModel {
    pub input_dim: usize,
    /// Scalar divisor applied to every input dimension before training and
    /// prediction; centers and length scales live in the divided coordinates.
    pub input_scale: f64,
    pub local_models: Vec<LocalModel>,
}

impl BatchModel {
    fn scale_query(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "query has {} dimensions, model expects {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(x / self.input_scale)
    }

    /// Sum of the local models' mean predictions at `x` (raw coordinates).
    pub fn predict_mean(&self, x: &DVector<f64>) -> Result<f64> {
        let xs = self.scale_query(x)?;
        let mut mean = 0.0;
        for lm in &self.local_models {
            mean += lm.predict_mean(&xs)?;
        }
        Ok(mean)
    }

    /// Mean and predictive variance at `x` (raw coordinates). The variance
    /// adds the observation noise, every model's target variance, and every
    /// model's weight-posterior spread, so it never falls below `1/beta_y`.
    pub fn predict(&self, x: &DVector<f64>, beta_y: f64) -> Result<(f64, f64)> {
        if beta_y.is_nan() || beta_y <= 0.0 {
            return Err(Error::invalid("beta_y must be positive"));
        }
        let xs = self.scale_query(x)?;
        let mut mean = 0.0;
        let mut variance = 1.0 / beta_y;
        for lm in &self.local_models {
            let phi = lm.features(&xs)?.values;
            mean += phi.dot(&lm.weights.mean);
            variance += 1.0 / lm.beta_f_hat + (&lm.weights.covariance * &phi).dot(&phi);
        }
        Ok((mean, variance))
    }
}

/// Per-fit diagnostics: the training-nMSE trace (one entry per sweep) and
/// the number of sweeps actually run.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub nmse_trace: Vec<f64>,
    pub iterations: usize,
}

impl FitReport {
    /// Training nMSE after the final sweep, if any sweep ran.
    pub fn final_nmse(&self) -> Option<f64> {
        self.nmse_trace.last().copied()
    }
}

fn check_training_inputs(inputs: &DMatrix<f64>, targets: &DVector<f64>) -> Result<()> {
    if inputs.nrows() == 0 || inputs.ncols() == 0 {
        return Err(Error::invalid("training inputs must be a non-empty matrix"));
    }
    if targets.len() != inputs.nrows() {
        return Err(Error::invalid(format!(
            "{} input rows but {} targets",
            inputs.nrows(),
            targets.len()
        )));
    }
    if inputs.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("training data must be finite"));
    }
    Ok(())
}

/// Allocates centers greedily: the first sample always becomes one, and each
/// later sample becomes one exactly when its activation under every existing
/// model (all at the initial length scale) falls below `w_gen`.
pub fn initialize_local_models(
    inputs: &DMatrix<f64>,
    params: &HyperParams,
) -> Result<Vec<LocalModel>> {
    params.validate()?;
    if inputs.nrows() == 0 || inputs.ncols() == 0 {
        return Err(Error::invalid("initialization needs a non-empty input matrix"));
    }
    let mut models: Vec<LocalModel> = Vec::new();
    for i in 0..inputs.nrows() {
        let x = inputs.row(i).transpose();
        let covered = models
            .iter()
            .any(|lm| rbf_weight_unchecked(&x, &lm.center, &lm.length_scale) >= params.w_gen);
        if !covered {
            models.push(LocalModel::fresh(Center::new(x)?, params)?);
        }
    }
    Ok(models)
}

/// Training nMSE: mean squared error divided by the population variance of
/// the targets. Fails when the targets have zero variance.
pub fn training_nmse(predictions: &DVector<f64>, targets: &DVector<f64>) -> Result<f64> {
    if predictions.len() != targets.len() || targets.is_empty() {
        return Err(Error::invalid(
            "predictions and targets must have the same non-zero length",
        ));
    }
    let n = targets.len() as f64;
    let mean = targets.mean();
    let variance = targets.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    if variance == 0.0 {
        return Err(Error::ZeroVariance {
            context: "training targets".into(),
        });
    }
    let mse = (predictions - targets).norm_squared() / n;
    Ok(mse / variance)
}

/// The length-scale objective of one model: the negative scaled residual sum
/// `-(beta_hat / 2) * sum_n (mu_f_n - w^T phi_n)^2`, which the ascent step
/// increases by shrinking the residuals.
pub fn length_scale_objective(
    inputs: &DMatrix<f64>,
    hidden_means: &DVector<f64>,
    center: &Center,
    scale: &LengthScale,
    active_mask: &[bool],
    weight_mean: &DVector<f64>,
    beta_hat: f64,
) -> Result<f64> {
    if inputs.nrows() != hidden_means.len() {
        return Err(Error::invalid("inputs and hidden targets disagree on sample count"));
    }
    let mut acc = 0.0;
    for i in 0..inputs.nrows() {
        let x = inputs.row(i).transpose();
        let phi = feature_vector(&x, center, scale, active_mask)?;
        let r = hidden_means[i] - phi.values.dot(weight_mean);
        acc += r * r;
    }
    Ok(-0.5 * beta_hat * acc)
}

/// Analytic gradient of [`length_scale_objective`] with respect to each
/// length-scale entry:
/// `g_j = beta_hat * sum_n r_n * (w^T phi_n) * (x_nj - c_j)^2 / lambda_j^3`.
pub fn length_scale_gradient(
    inputs: &DMatrix<f64>,
    hidden_means: &DVector<f64>,
    center: &Center,
    scale: &LengthScale,
    active_mask: &[bool],
    weight_mean: &DVector<f64>,
    beta_hat: f64,
) -> Result<DVector<f64>> {
    if inputs.nrows() != hidden_means.len() {
        return Err(Error::invalid("inputs and hidden targets disagree on sample count"));
    }
    let d = center.dim();
    let c = center.coordinates();
    let lambda = scale.per_dim();
    let mut grad = DVector::zeros(d);
    for i in 0..inputs.nrows() {
        let x = inputs.row(i).transpose();
        let phi = feature_vector(&x, center, scale, active_mask)?;
        let pred = phi.values.dot(weight_mean);
        let r = hidden_means[i] - pred;
        for j in 0..d {
            let dx = x[j] - c[j];
            grad[j] += r * pred * dx * dx / (lambda[j] * lambda[j] * lambda[j]);
        }
    }
    Ok(grad * beta_hat)
}

/// One ascent step `lambda + kappa * gradient`, clamped to the length-scale
/// floor entrywise.
pub fn gradient_ascent_step(
    scale: &LengthScale,
    gradient: &DVector<f64>,
    kappa: f64,
) -> LengthScale {
    LengthScale::clamped(scale.per_dim() + gradient * kappa)
}

/// Full feature matrix (one row per sample) of one model.
fn feature_matrix(inputs: &DMatrix<f64>, lm: &LocalModel) -> Result<DMatrix<f64>> {
    let n = inputs.nrows();
    let p = lm.center.dim() + 1;
    let mut phi = DMatrix::zeros(n, p);
    for i in 0..n {
        let x = inputs.row(i).transpose();
        let fv = lm.features(&x)?;
        phi.set_row(i, &fv.values.transpose());
    }
    Ok(phi)
}

fn wrap_numerical(sweep: usize, model: usize, err: Error) -> Error {
    match err {
        Error::Factorization(detail) => Error::Numerical { sweep, model, detail },
        other => other,
    }
}

/// Applies the length-scale update for one model: a single full-batch step
/// by default, or one step per sample in order when `lambda_stochastic` is
/// set (recomputing the features after every step).
fn advance_length_scale(
    lm: &mut LocalModel,
    inputs: &DMatrix<f64>,
    hidden_means: &DVector<f64>,
    params: &HyperParams,
) -> Result<()> {
    if params.kappa == 0.0 {
        return Ok(());
    }
    if params.lambda_stochastic {
        let d = lm.center.dim();
        for i in 0..inputs.nrows() {
            let x = inputs.row(i).transpose();
            let phi = lm.features(&x)?;
            let pred = phi.values.dot(&lm.weights.mean);
            let r = hidden_means[i] - pred;
            let c = lm.center.coordinates();
            let lambda = lm.length_scale.per_dim();
            let mut grad = DVector::zeros(d);
            for j in 0..d {
                let dx = x[j] - c[j];
                grad[j] = lm.beta_f_hat * r * pred * dx * dx
                    / (lambda[j] * lambda[j] * lambda[j]);
            }
            lm.length_scale = gradient_ascent_step(&lm.length_scale, &grad, params.kappa);
        }
    } else {
        let grad = length_scale_gradient(
            inputs,
            hidden_means,
            &lm.center,
            &lm.length_scale,
            &lm.active_mask,
            &lm.weights.mean,
            lm.beta_f_hat,
        )?;
        lm.length_scale = gradient_ascent_step(&lm.length_scale, &grad, params.kappa);
    }
    Ok(())
}

/// Fits one batch model to a scalar response.
///
/// Inputs are first divided by a single scalar — the largest per-dimension
/// range — so that center allocation sees comparable coordinates no matter
/// the original units; the divisor is stored on the model and applied to
/// every query. Each sweep then updates, in order: the hidden targets (from
/// the previous sweep's weights and precisions), each model's weight
/// posterior, target precision, and feature precisions, the length scales,
/// and the retention masks. Sweeps stop once the training nMSE moves by at
/// most `delta` between consecutive sweeps, or at `max_iters`.
pub fn fit_batch(
    inputs: &DMatrix<f64>,
    targets: &DVector<f64>,
    params: &HyperParams,
) -> Result<(BatchModel, FitReport)> {
    params.validate()?;
    check_training_inputs(inputs, targets)?;

    let n = inputs.nrows();
    let d = inputs.ncols();

    // Global scalar normalization: one divisor for all dimensions keeps the
    // relative geometry of the input space intact. The divisor is 1.5x the
    // widest per-dimension range, so the data occupies well under a unit
    // diameter and the default kernel width covers it with a handful of
    // local models rather than tiling it finely.
    let mut max_range = 0.0_f64;
    for j in 0..d {
        let col = inputs.column(j);
        let range = col.max() - col.min();
        max_range = max_range.max(range);
    }
    let mut input_scale = 1.5 * max_range;
    if input_scale <= 0.0 || !input_scale.is_finite() {
        input_scale = 1.0;
    }
    let scaled = inputs / input_scale;

    let mut models = initialize_local_models(&scaled, params)?;
    let mut trace: Vec<f64> = Vec::new();

    let mut sweeps = 0;
    for sweep in 1..=params.max_iters {
        sweeps = sweep;
        let m = models.len();

        // Per-model feature matrices and mean predictions under the weights
        // carried over from the previous sweep.
        let mut phis: Vec<DMatrix<f64>> = Vec::with_capacity(m);
        let mut f_prev = DMatrix::zeros(n, m);
        for (k, lm) in models.iter().enumerate() {
            let phi = feature_matrix(&scaled, lm)?;
            f_prev.set_column(k, &(&phi * &lm.weights.mean));
            phis.push(phi);
        }

        let beta_hats = DVector::from_iterator(m, models.iter().map(|lm| lm.beta_f_hat));
        let (hidden, _shared) = update_hidden_targets(targets, &f_prev, &beta_hats, params.beta_y)?;

        for (k, lm) in models.iter_mut().enumerate() {
            let mu_col = hidden.mu_f.column(k).into_owned();
            let active = lm.active_indices();
            let p = lm.active_mask.len();

            // Weight posterior in the active-feature subspace, scattered
            // back into full-size arrays with zeros at pruned positions.
            let phi_active = phis[k].select_columns(active.iter());
            let alpha_active =
                DVector::from_iterator(active.len(), active.iter().map(|&pi| lm.alpha_hat[pi]));
            let w_active = if active.is_empty() {
                WeightPosterior::zeros(0)
            } else {
                update_weight_posterior(&phi_active, &mu_col, &alpha_active, lm.beta_f_hat, params.eps)
                    .map_err(|e| wrap_numerical(sweep, k, e))?
            };
            let mut mean_full = DVector::zeros(p);
            let mut cov_full = DMatrix::zeros(p, p);
            for (ai, &pi) in active.iter().enumerate() {
                mean_full[pi] = w_active.mean[ai];
                for (aj, &pj) in active.iter().enumerate() {
                    cov_full[(pi, pj)] = w_active.covariance[(ai, aj)];
                }
            }
            lm.weights = WeightPosterior {
                mean: mean_full,
                covariance: cov_full,
            };

            // Precision posteriors, both from the freshly updated weights.
            let beta_post = update_beta_posterior(
                &phi_active,
                &mu_col,
                &w_active,
                hidden.sigma_f[k],
                params.a0,
                params.b0,
            )
            .map_err(|e| wrap_numerical(sweep, k, e))?;
            lm.beta_f_hat = beta_post.mean();
            for (ai, &pi) in active.iter().enumerate() {
                let g = update_alpha_posterior(
                    w_active.mean[ai],
                    w_active.covariance[(ai, ai)],
                    params.a0,
                    params.b0,
                );
                lm.alpha_hat[pi] = g.mean();
            }

            advance_length_scale(lm, &scaled, &mu_col, params)?;

            // Retention: a pruned feature keeps its frozen precision, so it
            // can never re-enter.
            let keep = prune_features(&lm.alpha_hat, params.prune_threshold);
            for (pi, kept) in keep.iter().enumerate() {
                if !kept && lm.active_mask[pi] {
                    lm.weights.mean[pi] = 0.0;
                    for q in 0..p {
                        lm.weights.covariance[(pi, q)] = 0.0;
                        lm.weights.covariance[(q, pi)] = 0.0;
                    }
                }
            }
            lm.active_mask = keep;
        }

        // End-of-sweep training error with the refreshed scales, masks, and
        // weights.
        let mut y_hat = DVector::zeros(n);
        for lm in &models {
            let phi = feature_matrix(&scaled, lm)?;
            y_hat += phi * &lm.weights.mean;
        }
        let nmse = training_nmse(&y_hat, targets)?;
        if !nmse.is_finite() {
            return Err(Error::Numerical {
                sweep,
                model: usize::MAX,
                detail: "training nMSE became non-finite".into(),
            });
        }
        trace.push(nmse);

        if sweep >= 2 {
            let prev = trace[sweep - 2];
            if (nmse - prev).abs() <= params.delta {
                break;
            }
        }
    }

    Ok((
        BatchModel {
            input_dim: d,
            input_scale,
            local_models: models,
        },
        FitReport {
            nmse_trace: trace,
            iterations: sweeps,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FD_REL_TOL: f64 = 1e-6;
    const MONOTONE_TOL: f64 = 1e-6;

    fn row_matrix(rows: &[&[f64]]) -> DMatrix<f64> {
        let n = rows.len();
        let d = rows[0].len();
        DMatrix::from_fn(n, d, |i, j| rows[i][j])
    }

    #[test]
    fn a_single_sample_yields_a_single_center() {
        let inputs = row_matrix(&[&[0.7, -0.2]]);
        let models = initialize_local_models(&inputs, &HyperParams::default()).unwrap();
        assert_eq!(models.len(), 1);
        assert_eq!(models[0].center.coordinates(), &DVector::from_row_slice(&[0.7, -0.2]));
    }

    #[test]
    fn identical_samples_share_one_center() {
        let inputs = row_matrix(&[&[1.0], &[1.0], &[1.0], &[1.0]]);
        let models = initialize_local_models(&inputs, &HyperParams::default()).unwrap();
        assert_eq!(models.len(), 1);
    }

    #[test]
    fn coverage_threshold_splits_distant_samples() {
        // At lambda 0.3: activation of 0.1 under the center at 0 is
        // exp(-0.5 * (0.1/0.3)^2) ~ 0.946 (covered), activation of 0.5 is
        // exp(-0.5 * (0.5/0.3)^2) ~ 0.249 (uncovered, new center).
        let inputs = row_matrix(&[&[0.0], &[0.1], &[0.5]]);
        let models = initialize_local_models(&inputs, &HyperParams::default()).unwrap();
        assert_eq!(models.len(), 2);
        assert_eq!(models[1].center.coordinates()[0], 0.5);
    }

    #[test]
    fn fresh_models_start_from_the_prior() {
        let inputs = row_matrix(&[&[0.0, 0.0]]);
        let params = HyperParams::default();
        let models = initialize_local_models(&inputs, &params).unwrap();
        let lm = &models[0];
        assert_eq!(lm.alpha_hat, DVector::from_element(3, 1.0));
        assert_eq!(lm.beta_f_hat, 1.0);
        assert_eq!(lm.weights.mean, DVector::zeros(3));
        assert!(lm.active_mask.iter().all(|&a| a));
    }

    #[test]
    fn nmse_of_mean_prediction_is_one() {
        let targets = DVector::from_row_slice(&[0.0, 2.0]);
        let predictions = DVector::from_element(2, 1.0);
        assert_relative_eq!(
            training_nmse(&predictions, &targets).unwrap(),
            1.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn nmse_scales_with_the_target_spread() {
        let targets = DVector::from_row_slice(&[0.0, 1.0, 2.0, 3.0]);
        let predictions = targets.map(|y| y + 0.5);
        // MSE 0.25, population variance 1.25.
        assert_relative_eq!(
            training_nmse(&predictions, &targets).unwrap(),
            0.2,
            max_relative = 1e-15
        );
    }

    #[test]
    fn nmse_rejects_flat_targets() {
        let targets = DVector::from_element(5, 3.0);
        let err = training_nmse(&targets, &targets).unwrap_err();
        assert!(matches!(err, Error::ZeroVariance { .. }));
        assert!(err.to_string().contains("MSE"));
    }

    #[test]
    fn ascent_step_respects_the_floor() {
        let scale = LengthScale::uniform(1, 0.002).unwrap();
        let gradient = DVector::from_row_slice(&[-100.0]);
        let stepped = gradient_ascent_step(&scale, &gradient, 1e-4);
        assert_eq!(stepped.per_dim()[0], crate::features::LAMBDA_FLOOR);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 12;
        let d = 2;
        let inputs = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let hidden = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let center = Center::new(DVector::from_row_slice(&[0.1, -0.2])).unwrap();
        let scale = LengthScale::new(DVector::from_row_slice(&[0.8, 0.5])).unwrap();
        let mask = vec![true, true, true];
        let w = DVector::from_row_slice(&[0.7, -0.4, 0.9]);
        let beta = 2.5;

        let grad =
            length_scale_gradient(&inputs, &hidden, &center, &scale, &mask, &w, beta).unwrap();
        for j in 0..d {
            let h = 1e-6 * scale.per_dim()[j];
            let mut up = scale.per_dim().clone();
            up[j] += h;
            let mut dn = scale.per_dim().clone();
            dn[j] -= h;
            let ku = length_scale_objective(
                &inputs,
                &hidden,
                &center,
                &LengthScale::new(up).unwrap(),
                &mask,
                &w,
                beta,
            )
            .unwrap();
            let kd = length_scale_objective(
                &inputs,
                &hidden,
                &center,
                &LengthScale::new(dn).unwrap(),
                &mask,
                &w,
                beta,
            )
            .unwrap();
            let fd = (ku - kd) / (2.0 * h);
            assert_relative_eq!(grad[j], fd, max_relative = FD_REL_TOL);
        }
    }

    #[test]
    fn linear_data_is_fit_with_one_wide_model() {
        // A length scale far wider than the data makes the envelope nearly
        // constant, so a single local linear model must nail a line.
        let n = 40;
        let inputs = DMatrix::from_fn(n, 1, |i, _| i as f64 / (n - 1) as f64);
        let targets = DVector::from_fn(n, |i, _| 2.0 * inputs[(i, 0)] + 1.0);
        let params = HyperParams {
            lambda_init: 30.0,
            ..HyperParams::default()
        };
        let (model, report) = fit_batch(&inputs, &targets, &params).unwrap();
        assert_eq!(model.local_models.len(), 1);
        assert!(report.final_nmse().unwrap() < 1e-3, "nMSE {:?}", report.final_nmse());
        assert!(report.iterations < params.max_iters);
    }

    #[test]
    fn zero_sweeps_return_the_initialized_models() {
        let inputs = DMatrix::from_fn(5, 1, |i, _| i as f64);
        let targets = DVector::from_fn(5, |i, _| (i as f64).sin());
        let params = HyperParams {
            max_iters: 0,
            ..HyperParams::default()
        };
        let (model, report) = fit_batch(&inputs, &targets, &params).unwrap();
        assert!(report.nmse_trace.is_empty());
        assert_eq!(report.iterations, 0);
        assert!(!model.local_models.is_empty());
        for lm in &model.local_models {
            assert_eq!(lm.weights.mean, DVector::zeros(2));
        }
    }

    #[test]
    fn the_input_scale_is_one_and_a_half_times_the_largest_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let inputs = DMatrix::from_fn(n, 2, |i, j| {
            if j == 0 {
                10.0 * i as f64 / (n - 1) as f64
            } else {
                rng.random_range(0.0..2.0)
            }
        });
        let targets = DVector::from_fn(n, |i, _| (inputs[(i, 0)] * 0.3).sin());
        let (model, _) = fit_batch(&inputs, &targets, &HyperParams::default()).unwrap();
        assert_eq!(model.input_scale, 15.0);
        for lm in &model.local_models {
            assert!(lm.center.coordinates().amax() <= 1.0);
        }
    }

    #[test]
    fn refitting_the_same_data_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 50;
        let inputs = DMatrix::<f64>::from_fn(n, 1, |_, _| rng.random_range(0.0..1.0));
        let targets =
            DVector::from_fn(n, |i, _| (6.0 * inputs[(i, 0)]).sin() + 0.01 * inputs[(i, 0)]);
        let (model_a, report_a) = fit_batch(&inputs, &targets, &HyperParams::default()).unwrap();
        let (model_b, report_b) = fit_batch(&inputs, &targets, &HyperParams::default()).unwrap();
        assert_eq!(report_a, report_b);
        assert_eq!(model_a, model_b);
    }

    #[test]
    fn frozen_scales_give_a_non_increasing_error_trace() {
        // With the length-scale step and pruning disabled, each sweep is a
        // pure coordinate-ascent update, so the training error cannot rise.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 60;
        let inputs = DMatrix::<f64>::from_fn(n, 1, |_, _| rng.random_range(0.0..1.0));
        let targets = DVector::from_fn(n, |i, _| {
            (3.0 * inputs[(i, 0)]).sin() + 0.05 * rng.random_range(-1.0..1.0)
        });
        let params = HyperParams {
            kappa: 0.0,
            prune_threshold: f64::INFINITY,
            ..HyperParams::default()
        };
        let (_, report) = fit_batch(&inputs, &targets, &params).unwrap();
        assert!(report.nmse_trace.len() >= 2);
        for w in report.nmse_trace.windows(2) {
            assert!(
                w[1] <= w[0] + MONOTONE_TOL,
                "error rose from {} to {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn predictive_variance_never_undercuts_the_observation_noise() {
        let inputs = DMatrix::from_fn(20, 1, |i, _| i as f64 * 0.05);
        let targets = DVector::from_fn(20, |i, _| (2.0 * inputs[(i, 0)]).cos());
        let params = HyperParams::default();
        let (model, _) = fit_batch(&inputs, &targets, &params).unwrap();
        for q in [-5.0, 0.0, 0.3, 0.77, 42.0] {
            let (_, var) = model.predict(&DVector::from_row_slice(&[q]), params.beta_y).unwrap();
            assert!(var >= 1.0 / params.beta_y);
        }
        // Far from every center the envelope underflows, so the mean is the
        // masked-bias sum: zero.
        let (far_mean, _) = model.predict(&DVector::from_row_slice(&[1e6]), params.beta_y).unwrap();
        assert_eq!(far_mean, 0.0);
    }
}
