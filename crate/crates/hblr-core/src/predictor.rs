//! Prediction under a fitted model: per-committee predictive distributions,
//! cross-segment averaged queries, and test-set metrics.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::segmentation::{segments_containing, Dataset, SegmentedModel};
use crate::trainer::{BatchModel, HyperParams};

/// Gaussian predictive summary at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: f64,
    pub variance: f64,
}

/// Test metric for [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Mean squared error over the population variance of the response.
    Nmse,
    /// Plain mean squared error (required when a response has no variance).
    Mse,
}

/// Predictive distribution of one committee at `x`: the summed local means,
/// with variance `1/beta_y + sum_m (1/beta_f_m + phi_m^T Sigma_m phi_m)`.
pub fn predict_point(
    x: &DVector<f64>,
    model: &BatchModel,
    params: &HyperParams,
) -> Result<PredictiveDistribution> {
    let (mean, variance) = model.predict(x, params.beta_y)?;
    Ok(PredictiveDistribution { mean, variance })
}

fn active_segments(x: &DVector<f64>, model: &SegmentedModel) -> Result<Vec<usize>> {
    model.validate()?;
    segments_containing(x, &model.segments)
}

/// Predictive mean per response at `x`: the arithmetic mean of the committee
/// means over every segment whose bounding box holds `x` (nearest segment
/// when none does).
pub fn predict_averaged(
    x: &DVector<f64>,
    model: &SegmentedModel,
    params: &HyperParams,
) -> Result<Vec<f64>> {
    params.validate()?;
    let active = active_segments(x, model)?;
    let mut means = Vec::with_capacity(model.response_dim());
    for row in &model.batch_models {
        let mut acc = 0.0;
        for &s in &active {
            acc += row[s].predict_mean(x)?;
        }
        means.push(acc / active.len() as f64);
    }
    Ok(means)
}

/// Like [`predict_averaged`], adding a predictive variance per response.
/// Means are averaged across the active segments; the variance is taken
/// from the first active segment, since spreads are per-committee notions.
pub fn predict_with_variance(
    x: &DVector<f64>,
    model: &SegmentedModel,
    params: &HyperParams,
) -> Result<Vec<PredictiveDistribution>> {
    params.validate()?;
    let active = active_segments(x, model)?;
    let first = active[0];
    let mut out = Vec::with_capacity(model.response_dim());
    for row in &model.batch_models {
        let mut acc = 0.0;
        for &s in &active {
            acc += row[s].predict_mean(x)?;
        }
        let dist = predict_point(x, &row[first], params)?;
        out.push(PredictiveDistribution {
            mean: acc / active.len() as f64,
            variance: dist.variance,
        });
    }
    Ok(out)
}

/// Test error per response dimension over a dataset, using averaged
/// predictions. `Nmse` divides the mean squared error by the population
/// variance of the response column and fails on a zero-variance column.
pub fn evaluate(
    test: &Dataset,
    model: &SegmentedModel,
    params: &HyperParams,
    metric: Metric,
) -> Result<Vec<f64>> {
    test.validate()?;
    model.validate()?;
    let d = model.input_dim().unwrap_or(0);
    if test.input_dim() != d {
        return Err(Error::invalid(format!(
            "test inputs have {} dimensions, model expects {d}",
            test.input_dim()
        )));
    }
    if test.response_dim() != model.response_dim() {
        return Err(Error::invalid(format!(
            "test responses have {} dimensions, model expects {}",
            test.response_dim(),
            model.response_dim()
        )));
    }

    let n = test.n_samples();
    let predictions: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| predict_averaged(&test.input_row(i), model, params))
        .collect::<Result<_>>()?;

    let q = test.response_dim();
    let mut out = Vec::with_capacity(q);
    for r in 0..q {
        let mut sq = 0.0;
        for (i, row) in predictions.iter().enumerate() {
            let e = row[r] - test.responses[(i, r)];
            sq += e * e;
        }
        let mse = sq / n as f64;
        match metric {
            Metric::Mse => out.push(mse),
            Metric::Nmse => {
                let col = test.responses.column(r);
                let mean = col.mean();
                let variance = col.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
                if variance == 0.0 {
                    return Err(Error::ZeroVariance {
                        context: format!("test response {}", r + 1),
                    });
                }
                out.push(mse / variance);
            }
        }
    }
    Ok(out)
}
