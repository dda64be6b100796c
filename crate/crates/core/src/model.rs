//! Batch training and scoring.
//!
//! Each input row is treated as one window whose count is the row's integer
//! deviation from the training median. Fitting only needs the total mass `S`
//! and the window count `W`; scoring plugs a row's count into the perception
//! score.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nfa;
use crate::par;
use crate::preprocess::{
    self, DistanceMetric, FeatureStandardization, IntegerizationConfig, UnivariateCenter,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FitOptions {
    /// Decimal places kept when integerizing.
    pub accuracy: u32,
    pub metric: DistanceMetric,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            accuracy: preprocess::DEFAULT_ACCURACY,
            metric: DistanceMetric::Euclidean,
        }
    }
}

/// A fitted perception model. Immutable; [`PerceptionModel::incremental_update`]
/// returns a new value.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionModel {
    pub(crate) sum: u64,
    pub(crate) windows: u64,
    pub(crate) center: UnivariateCenter,
    pub(crate) standardization: Option<FeatureStandardization>,
    pub(crate) integerization: IntegerizationConfig,
    pub(crate) metric: DistanceMetric,
    pub(crate) dim: usize,
}

/// One scored row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoredPoint {
    pub index: usize,
    pub score: f64,
    pub flag: bool,
}

impl PerceptionModel {
    /// Train on `x` (rows are observations).
    pub fn fit(x: &Matrix, options: FitOptions) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(Error::invalid(format!(
                "fitting needs at least 2 rows, got {}",
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::invalid("fitting needs at least one feature"));
        }
        x.ensure_finite()?;

        let (standardization, values) = if x.ncols() > 1 {
            let (fs, xs) = preprocess::standardize_fit(x)?;
            let d = preprocess::distance_to_median(&xs, &fs, options.metric)?;
            (Some(fs), d)
        } else {
            (None, x.as_slice().to_vec())
        };

        let (integerization, ints) = preprocess::integerize_fit(&values, options.accuracy)?;
        let center = UnivariateCenter::fit(&ints)?;
        let deviations = preprocess::median_deviation(&ints, &center);
        let sum = deviations
            .iter()
            .try_fold(0u64, |acc, &d| acc.checked_add(d))
            .ok_or_else(|| Error::invalid("sum of deviations overflows; lower the accuracy"))?;

        Ok(Self {
            sum,
            windows: deviations.len() as u64,
            center,
            standardization,
            integerization,
            metric: options.metric,
            dim: x.ncols(),
        })
    }

    /// Convenience wrapper for one-dimensional data.
    pub fn fit_univariate(values: &[f64], options: FitOptions) -> Result<Self> {
        Self::fit(&Matrix::column(values.to_vec()), options)
    }

    /// Total indicator mass `S`.
    pub fn sum(&self) -> u64 {
        self.sum
    }

    /// Number of windows `W`.
    pub fn windows(&self) -> u64 {
        self.windows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> UnivariateCenter {
        self.center
    }

    pub fn standardization(&self) -> Option<&FeatureStandardization> {
        self.standardization.as_ref()
    }

    pub fn integerization(&self) -> IntegerizationConfig {
        self.integerization
    }

    pub fn metric(&self) -> DistanceMetric {
        self.metric
    }

    /// `S = 0`: every training value sat on the median.
    pub fn is_degenerate(&self) -> bool {
        self.sum == 0
    }

    /// Map rows to their integer deviation counts with the frozen transform.
    pub fn deviations(&self, x: &Matrix) -> Result<Vec<u64>> {
        if x.is_empty() {
            return Ok(Vec::new());
        }
        if x.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.ncols(),
            });
        }
        let values = match &self.standardization {
            Some(fs) => {
                let xs = fs.standardize(x)?;
                preprocess::distance_to_median(&xs, fs, self.metric)?
            }
            None => {
                x.ensure_finite()?;
                x.as_slice().to_vec()
            }
        };
        let ints = preprocess::integerize(&values, &self.integerization)?;
        Ok(preprocess::median_deviation(&ints, &self.center))
    }

    /// Score of a single deviation count under this model.
    pub fn score_count(&self, count: u64) -> f64 {
        nfa::perception_score_raw(self.sum, self.windows, count)
    }

    /// Score every row of `x`. Output order and length match the input.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<ScoredPoint>> {
        let deviations = self.deviations(x)?;
        Ok(par::map_range(deviations.len(), |index| {
            let score = self.score_count(deviations[index]);
            ScoredPoint {
                index,
                score,
                flag: score > 0.0,
            }
        }))
    }

    pub fn predict_univariate(&self, values: &[f64]) -> Result<Vec<ScoredPoint>> {
        self.predict(&Matrix::column(values.to_vec()))
    }

    /// Fold one more window into the model: `W + 1`, `S + deviation_sum`.
    pub fn incremental_update(&self, deviation_sum: u64) -> Self {
        let mut next = self.clone();
        next.windows += 1;
        next.sum = next.sum.saturating_add(deviation_sum);
        next
    }

    /// Smallest deviation count scored as anomalous, or `None` if no count is
    /// (degenerate model).
    ///
    /// `E(C_n)` starts at `W >= 1` for `n = 0`, rises to a single peak and then
    /// falls, so the anomalous counts form the interval `[n*, S]`, and anything
    /// above `S` saturates.
    pub fn boundary_count(&self) -> Option<u64> {
        if self.sum == 0 {
            return None;
        }
        let s = self.sum;
        let w = self.windows as f64;
        // E(n+1)/E(n) = (S-n)/((n+1)W) < 1 past this point.
        let peak = ((s as f64 - w) / (w + 1.0)).max(0.0).ceil() as u64;
        let mut lo = peak.min(s);
        let mut hi = s;
        if self.score_count(hi) <= 0.0 {
            return Some(s + 1);
        }
        if self.score_count(lo) > 0.0 {
            // Walk down while the rising side is still anomalous (only for
            // tiny S where the approximation wobbles).
            while lo > 0 && self.score_count(lo - 1) > 0.0 {
                lo -= 1;
            }
            return Some(lo);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.score_count(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    }
}
