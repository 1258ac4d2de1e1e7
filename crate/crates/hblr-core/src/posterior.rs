//! Closed-form variational updates for one local model, plus the shared
//! hidden-target update that couples all models.
//!
//! Each local model keeps a Gaussian posterior over its weights and gamma
//! posteriors over its per-feature precisions (`alpha`) and its target
//! precision (`beta_f`). The hidden targets `f_m^(n)` split the observed
//! response among the models; their posterior has one mean per sample per
//! model and one sample-independent variance per model.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Gaussian posterior over the weights of one local model, in the space of
/// its currently active features.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightPosterior {
    pub mean: DVector<f64>,
    /// Symmetric positive-definite covariance over the active features.
    pub covariance: DMatrix<f64>,
}

impl WeightPosterior {
    /// A zero-information posterior (zero mean, zero covariance) over `p`
    /// features, used before any data has been seen.
    pub fn zeros(p: usize) -> Self {
        WeightPosterior {
            mean: DVector::zeros(p),
            covariance: DMatrix::zeros(p, p),
        }
    }
}

/// Gamma posterior over a precision parameter; its mean is `shape_a / rate_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaPosterior {
    pub shape_a: f64,
    pub rate_b: f64,
}

impl GammaPosterior {
    pub fn mean(&self) -> f64 {
        self.shape_a / self.rate_b
    }
}

/// Posterior over the hidden per-model targets. `mu_f` holds one mean per
/// sample (row) and model (column); `sigma_f` holds the per-model variance,
/// which does not depend on the sample.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenTargets {
    pub mu_f: DMatrix<f64>,
    pub sigma_f: DVector<f64>,
}

/// Scalars shared by every model within one sweep: the total precision-sum
/// `s = 1/beta_y + sum_m 1/beta_f_m` and the summed mean prediction `y_pre`.
/// `s` is recomputed from the current precisions on every call — it is never
/// carried forward incrementally, which would let rounding drift accumulate.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedScalars {
    pub s: f64,
    pub y_pre: DVector<f64>,
}

/// Number of times the jitter is doubled before a failed factorization is
/// reported as a numerical failure.
const MAX_JITTER_DOUBLINGS: u32 = 8;

/// Updates the weight posterior of one local model from its active-feature
/// design matrix `phi` (N x P_active) and expected targets `ef`.
///
/// The covariance is the inverse of `(1 + eps) * diag(alpha_hat) +
/// beta_hat * phi^T phi`, obtained through a Cholesky factorization rather
/// than direct elimination; the mean is `beta_hat * covariance * phi^T * ef`.
/// If the factorization fails, the jitter `eps` is doubled up to
/// [`MAX_JITTER_DOUBLINGS`] times before giving up.
///
/// With no rows (`N = 0`) this reduces to the prior:
/// `covariance = diag(1 / ((1 + eps) * alpha_hat))`, zero mean.
pub fn update_weight_posterior(
    phi: &DMatrix<f64>,
    ef: &DVector<f64>,
    alpha_hat: &DVector<f64>,
    beta_hat: f64,
    eps: f64,
) -> Result<WeightPosterior> {
    let p = alpha_hat.len();
    if phi.ncols() != p {
        return Err(Error::invalid(format!(
            "design matrix has {} columns but alpha_hat has {} entries",
            phi.ncols(),
            p
        )));
    }
    if phi.nrows() != ef.len() {
        return Err(Error::invalid(format!(
            "design matrix has {} rows but targets have {} entries",
            phi.nrows(),
            ef.len()
        )));
    }
    if alpha_hat.iter().any(|a| !a.is_finite() || *a <= 0.0) {
        return Err(Error::invalid("alpha_hat entries must be finite and positive"));
    }
    if !beta_hat.is_finite() || beta_hat <= 0.0 {
        return Err(Error::invalid("beta_hat must be finite and positive"));
    }
    if !eps.is_finite() || eps < 0.0 {
        return Err(Error::invalid("eps must be finite and non-negative"));
    }

    let data_term = phi.transpose() * phi * beta_hat;
    let phit_ef = phi.transpose() * ef;

    let mut jitter = eps;
    for attempt in 0..=MAX_JITTER_DOUBLINGS {
        let mut precision = data_term.clone();
        for i in 0..p {
            precision[(i, i)] += (1.0 + jitter) * alpha_hat[i];
        }
        if let Some(chol) = Cholesky::new(precision) {
            let mut covariance = chol.inverse();
            // The factored inverse can be asymmetric in the last bit; a
            // covariance must be exactly symmetric.
            for i in 0..p {
                for j in (i + 1)..p {
                    let v = 0.5 * (covariance[(i, j)] + covariance[(j, i)]);
                    covariance[(i, j)] = v;
                    covariance[(j, i)] = v;
                }
            }
            let mean = chol.solve(&phit_ef) * beta_hat;
            return Ok(WeightPosterior { mean, covariance });
        }
        if attempt < MAX_JITTER_DOUBLINGS {
            // A zero jitter cannot grow by doubling; seed it from machine
            // epsilon instead.
            jitter = if jitter > 0.0 { jitter * 2.0 } else { f64::EPSILON };
        }
    }
    Err(Error::Factorization(format!(
        "weight precision matrix is not positive definite after {} jitter doublings",
        MAX_JITTER_DOUBLINGS
    )))
}

/// Updates the gamma posterior of one per-feature precision from the
/// feature's weight mean and variance: the shape is `a0 + 1/2` regardless of
/// the data, the rate is `b0 + (mean^2 + var) / 2`.
pub fn update_alpha_posterior(
    weight_mean_p: f64,
    weight_var_p: f64,
    a0: f64,
    b0: f64,
) -> GammaPosterior {
    GammaPosterior {
        shape_a: a0 + 0.5,
        rate_b: b0 + 0.5 * (weight_mean_p * weight_mean_p + weight_var_p),
    }
}

/// Updates the gamma posterior of one model's target precision.
///
/// The shape is `a0 + N/2`; the rate accumulates, per sample, the squared
/// residual between the hidden-target mean and the model's mean prediction,
/// the hidden-target variance `sigma_f`, and the predictive spread
/// `phi^T covariance phi` of the freshly updated weights.
pub fn update_beta_posterior(
    phi: &DMatrix<f64>,
    mu_f: &DVector<f64>,
    weights: &WeightPosterior,
    sigma_f: f64,
    a0: f64,
    b0: f64,
) -> Result<GammaPosterior> {
    let n = phi.nrows();
    if mu_f.len() != n {
        return Err(Error::invalid(format!(
            "design matrix has {} rows but hidden targets have {} entries",
            n,
            mu_f.len()
        )));
    }
    if phi.ncols() != weights.mean.len() {
        return Err(Error::invalid(
            "design matrix and weight posterior disagree on feature count",
        ));
    }

    let mut rate = b0;
    if n > 0 {
        let predictions = phi * &weights.mean;
        let spread = phi * &weights.covariance; // row i holds phi_i^T * Sigma
        let mut acc = 0.0;
        for i in 0..n {
            let r = mu_f[i] - predictions[i];
            let quad = spread.row(i).dot(&phi.row(i));
            acc += r * r + sigma_f + quad;
        }
        rate += 0.5 * acc;
    }
    if !rate.is_finite() {
        return Err(Error::Factorization(
            "target precision rate accumulated to a non-finite value".into(),
        ));
    }
    Ok(GammaPosterior {
        shape_a: a0 + 0.5 * n as f64,
        rate_b: rate,
    })
}

/// Updates the hidden-target posterior for all models at once.
///
/// `per_model_predictions` holds each model's mean prediction per sample
/// (N x M). With `s = 1/beta_y + sum_m 1/beta_f_m` and the summed prediction
/// `y_pre[n] = sum_m predictions[n][m]`:
///
/// * `sigma_f[m] = (1/beta_f_m) * (s - 1/beta_f_m) / s`, evaluated with the
///   complement sum `s - 1/beta_f_m` accumulated directly over the other
///   models so no cancellation occurs when one precision dominates;
/// * `mu_f[n][m] = predictions[n][m] + (1/beta_f_m) / s * (y[n] - y_pre[n])`,
///   i.e. each model absorbs the share of the joint residual proportional to
///   its target variance.
///
/// Both expressions are the rank-one-update form of inverting
/// `beta_y * 11^T + diag(beta_f)`, so a single model under a nearly
/// noise-free observation (`beta_y` huge) absorbs the full residual.
pub fn update_hidden_targets(
    y: &DVector<f64>,
    per_model_predictions: &DMatrix<f64>,
    beta_hats: &DVector<f64>,
    beta_y: f64,
) -> Result<(HiddenTargets, SharedScalars)> {
    let n = y.len();
    let m = beta_hats.len();
    if per_model_predictions.nrows() != n || per_model_predictions.ncols() != m {
        return Err(Error::invalid(format!(
            "predictions are {}x{}, expected {}x{}",
            per_model_predictions.nrows(),
            per_model_predictions.ncols(),
            n,
            m
        )));
    }
    if beta_hats.iter().any(|b| !b.is_finite() || *b <= 0.0) {
        return Err(Error::invalid("beta_hats must be finite and positive"));
    }
    if !beta_y.is_finite() || beta_y <= 0.0 {
        return Err(Error::invalid("beta_y must be finite and positive"));
    }

    let inv_beta: Vec<f64> = beta_hats.iter().map(|b| 1.0 / b).collect();
    let s = 1.0 / beta_y + inv_beta.iter().sum::<f64>();

    let mut y_pre = DVector::zeros(n);
    for i in 0..n {
        y_pre[i] = per_model_predictions.row(i).sum();
    }

    let mut sigma_f = DVector::zeros(m);
    for k in 0..m {
        let mut complement = 1.0 / beta_y;
        for (j, ib) in inv_beta.iter().enumerate() {
            if j != k {
                complement += ib;
            }
        }
        sigma_f[k] = inv_beta[k] * complement / s;
    }

    let mut mu_f = DMatrix::zeros(n, m);
    for k in 0..m {
        let gain = inv_beta[k] / s;
        for i in 0..n {
            mu_f[(i, k)] = per_model_predictions[(i, k)] + gain * (y[i] - y_pre[i]);
        }
    }

    Ok((HiddenTargets { mu_f, sigma_f }, SharedScalars { s, y_pre }))
}

/// Per-feature retention mask: a feature survives while its posterior
/// precision stays strictly below `threshold`; a precision exactly at the
/// threshold prunes. The caller zeroes the pruned weights in the owning model.
pub fn prune_features(alpha_hat: &DVector<f64>, threshold: f64) -> Vec<bool> {
    alpha_hat.iter().map(|a| *a < threshold).collect()
}
