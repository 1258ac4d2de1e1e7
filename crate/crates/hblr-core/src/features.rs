//! RBF activation weights and locally weighted feature vectors.
//!
//! Every local model owns a center `c` and a per-dimension length scale
//! `lambda`. A query `x` activates the model with weight
//! `eta = exp(-1/2 * sum_j (x_j - c_j)^2 / lambda_j^2)`, and its feature
//! vector is the activation-weighted affine basis
//! `phi = eta * [(x - c)^T, 1]^T`, giving `P = d + 1` features whose last
//! entry is the bias.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Smallest admissible length scale. Gradient ascent on the scales could
/// otherwise drive an entry to zero and make the activation degenerate, so
/// every update clamps against this floor.
pub const LAMBDA_FLOOR: f64 = 1e-3;

/// Fixed center of one local model, in input-space units.
#[derive(Debug, Clone, PartialEq)]
pub struct Center {
    coordinates: DVector<f64>,
}

impl Center {
    /// Builds a center from its coordinates. Requires at least one dimension
    /// and finite entries.
    pub fn new(coordinates: DVector<f64>) -> Result<Self> {
        if coordinates.is_empty() {
            return Err(Error::invalid("center needs at least one dimension"));
        }
        if coordinates.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("center coordinates must be finite"));
        }
        Ok(Center { coordinates })
    }

    pub fn dim(&self) -> usize {
        self.coordinates.len()
    }

    pub fn coordinates(&self) -> &DVector<f64> {
        &self.coordinates
    }
}

/// Per-dimension RBF width of one local model. The squared entries form the
/// diagonal distance metric of the activation; it is stored as the plain
/// vector of scales and never materialized as a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthScale {
    per_dim: DVector<f64>,
}

impl LengthScale {
    /// Builds a length scale from strictly positive, finite entries. Entries
    /// below [`LAMBDA_FLOOR`] are raised to the floor.
    pub fn new(per_dim: DVector<f64>) -> Result<Self> {
        if per_dim.is_empty() {
            return Err(Error::invalid("length scale needs at least one dimension"));
        }
        if per_dim.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::invalid(
                "length scale entries must be finite and positive",
            ));
        }
        Ok(Self::clamped(per_dim))
    }

    /// Builds a length scale by clamping every entry up to [`LAMBDA_FLOOR`].
    /// Used after gradient steps, which may propose arbitrarily small or
    /// negative scales.
    pub fn clamped(per_dim: DVector<f64>) -> Self {
        LengthScale {
            per_dim: per_dim.map(|v| if v >= LAMBDA_FLOOR { v } else { LAMBDA_FLOOR }),
        }
    }

    /// A constant scale in every one of `dim` dimensions.
    pub fn uniform(dim: usize, value: f64) -> Result<Self> {
        Self::new(DVector::from_element(dim, value))
    }

    pub fn dim(&self) -> usize {
        self.per_dim.len()
    }

    pub fn per_dim(&self) -> &DVector<f64> {
        &self.per_dim
    }
}

/// Activation-weighted feature vector of one local model at one query,
/// together with the pruning mask that produced it. Masked entries are
/// exactly zero; when the bias survives the mask, the last entry equals the
/// activation weight itself.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: DVector<f64>,
    pub active_mask: Vec<bool>,
}

fn check_dims(x: &DVector<f64>, center: &Center, scale: &LengthScale) -> Result<()> {
    if x.len() != center.dim() || scale.dim() != center.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch: query has {}, center has {}, scale has {}",
            x.len(),
            center.dim(),
            scale.dim()
        )));
    }
    Ok(())
}

/// RBF activation of the local model at `x`:
/// `exp(-1/2 * sum_j (x_j - c_j)^2 / lambda_j^2)`, in `(0, 1]`, equal to 1
/// exactly when `x` coincides with the center.
pub fn rbf_weight(x: &DVector<f64>, center: &Center, scale: &LengthScale) -> Result<f64> {
    check_dims(x, center, scale)?;
    Ok(rbf_weight_unchecked(x, center, scale))
}

pub(crate) fn rbf_weight_unchecked(x: &DVector<f64>, center: &Center, scale: &LengthScale) -> f64 {
    let c = center.coordinates();
    let lambda = scale.per_dim();
    let mut q = 0.0;
    for j in 0..x.len() {
        let z = (x[j] - c[j]) / lambda[j];
        q += z * z;
    }
    (-0.5 * q).exp()
}

/// Weighted feature vector `phi = eta * [(x - c)^T, 1]^T` with pruned entries
/// forced to zero. `mask` has length `d + 1`; its last entry governs the bias.
pub fn feature_vector(
    x: &DVector<f64>,
    center: &Center,
    scale: &LengthScale,
    mask: &[bool],
) -> Result<FeatureVector> {
    check_dims(x, center, scale)?;
    let d = x.len();
    if mask.len() != d + 1 {
        return Err(Error::invalid(format!(
            "mask has {} entries, expected {}",
            mask.len(),
            d + 1
        )));
    }
    let eta = rbf_weight_unchecked(x, center, scale);
    let c = center.coordinates();
    let mut values = DVector::zeros(d + 1);
    for j in 0..d {
        if mask[j] {
            values[j] = eta * (x[j] - c[j]);
        }
    }
    if mask[d] {
        values[d] = eta;
    }
    Ok(FeatureVector {
        values,
        active_mask: mask.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vec(values: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(values)
    }

    #[test]
    fn weight_at_center_is_one() {
        let c = Center::new(vec(&[0.4, -1.2])).unwrap();
        let s = LengthScale::uniform(2, 0.3).unwrap();
        let w = rbf_weight(&vec(&[0.4, -1.2]), &c, &s).unwrap();
        assert_eq!(w, 1.0);
    }

    #[test]
    fn weight_one_scale_away_is_exp_minus_half() {
        let c = Center::new(vec(&[1.0])).unwrap();
        let s = LengthScale::uniform(1, 0.7).unwrap();
        let w = rbf_weight(&vec(&[1.7]), &c, &s).unwrap();
        assert_relative_eq!(w, 0.606530659, max_relative = 1e-8);
        assert_relative_eq!(w, (-0.5f64).exp(), max_relative = 1e-15);
    }

    #[test]
    fn weight_one_scale_away_in_each_of_two_dims_is_exp_minus_one() {
        let c = Center::new(vec(&[0.0, 0.0])).unwrap();
        let s = LengthScale::new(vec(&[0.5, 2.0])).unwrap();
        let w = rbf_weight(&vec(&[0.5, 2.0]), &c, &s).unwrap();
        assert_relative_eq!(w, 0.367879441, max_relative = 1e-8);
    }

    #[test]
    fn weight_rejects_dimension_mismatch() {
        let c = Center::new(vec(&[0.0, 0.0])).unwrap();
        let s = LengthScale::uniform(2, 1.0).unwrap();
        assert!(rbf_weight(&vec(&[1.0]), &c, &s).is_err());
    }

    #[test]
    fn scale_rejects_non_positive_entries() {
        assert!(LengthScale::new(vec(&[1.0, 0.0])).is_err());
        assert!(LengthScale::new(vec(&[-0.2])).is_err());
        assert!(LengthScale::new(vec(&[f64::NAN])).is_err());
    }

    #[test]
    fn scale_clamps_to_floor() {
        let s = LengthScale::new(vec(&[1e-9, 0.5])).unwrap();
        assert_eq!(s.per_dim()[0], LAMBDA_FLOOR);
        assert_eq!(s.per_dim()[1], 0.5);
    }

    #[test]
    fn features_at_center_reduce_to_bias() {
        let c = Center::new(vec(&[2.0, -3.0, 0.5])).unwrap();
        let s = LengthScale::uniform(3, 0.3).unwrap();
        let phi = feature_vector(&vec(&[2.0, -3.0, 0.5]), &c, &s, &[true; 4]).unwrap();
        assert_eq!(phi.values.as_slice(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn features_one_scale_away_match_direct_evaluation() {
        let lambda = 0.7;
        let c = Center::new(vec(&[1.0])).unwrap();
        let s = LengthScale::uniform(1, lambda).unwrap();
        let phi = feature_vector(&vec(&[1.0 + lambda]), &c, &s, &[true, true]).unwrap();
        let eta = (-0.5f64).exp();
        assert_relative_eq!(phi.values[0], lambda * eta, max_relative = 1e-14);
        assert_relative_eq!(phi.values[1], eta, max_relative = 1e-14);
    }

    #[test]
    fn masked_bias_is_zero_regardless_of_activation() {
        let c = Center::new(vec(&[0.0])).unwrap();
        let s = LengthScale::uniform(1, 1.0).unwrap();
        let phi = feature_vector(&vec(&[0.0]), &c, &s, &[true, false]).unwrap();
        assert_eq!(phi.values[1], 0.0);
        assert_eq!(phi.values[0], 0.0);
    }

    #[test]
    fn masking_one_entry_leaves_the_others_alone() {
        let c = Center::new(vec(&[0.0, 0.0])).unwrap();
        let s = LengthScale::uniform(2, 1.0).unwrap();
        let x = vec(&[0.3, -0.8]);
        let full = feature_vector(&x, &c, &s, &[true, true, true]).unwrap();
        let masked = feature_vector(&x, &c, &s, &[true, false, true]).unwrap();
        assert_eq!(masked.values[0], full.values[0]);
        assert_eq!(masked.values[1], 0.0);
        assert_eq!(masked.values[2], full.values[2]);
    }
}
