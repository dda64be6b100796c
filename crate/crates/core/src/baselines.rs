//! Classical univariate outlier rules used as comparators: the z-score, the
//! modified z-score and Tukey's fences.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::stats;

/// Scores and binary flags for a batch of observations, row-aligned.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub scores: Vec<f64>,
    pub flags: Vec<bool>,
}

impl Detection {
    pub fn flagged_indices(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

fn need(values: &[f64], min: usize, what: &str) -> Result<()> {
    if values.len() < min {
        return Err(Error::invalid(format!(
            "{what} needs at least {min} values, got {}",
            values.len()
        )));
    }
    check_finite(values)
}

/// `|x - mean| / std > 3`, population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZScoreModel {
    pub mean: f64,
    pub std: f64,
    pub threshold: f64,
}

impl ZScoreModel {
    pub const THRESHOLD: f64 = 3.0;

    pub fn fit(values: &[f64]) -> Result<Self> {
        need(values, 2, "the z-score")?;
        Ok(Self {
            mean: stats::mean(values).expect("non-empty"),
            std: stats::population_std(values).expect("non-empty"),
            threshold: Self::THRESHOLD,
        })
    }

    /// Zero variance: nothing is scored or flagged.
    pub fn is_degenerate(&self) -> bool {
        self.std == 0.0
    }

    /// `|z|`.
    pub fn score(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (x - self.mean).abs() / self.std
        }
    }

    pub fn thresholds(&self) -> Option<(f64, f64)> {
        (!self.is_degenerate()).then_some({
            (
                self.mean - self.threshold * self.std,
                self.mean + self.threshold * self.std,
            )
        })
    }

    pub fn predict(&self, values: &[f64]) -> Detection {
        let scores: Vec<f64> = values.iter().map(|&x| self.score(x)).collect();
        let flags = scores.iter().map(|&s| s > self.threshold).collect();
        Detection { scores, flags }
    }
}

/// `|0.6745 (x - median) / MAD| > 3.5` with MAD the median absolute deviation
/// from the median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModifiedZModel {
    pub median: f64,
    pub mad: f64,
    pub consistency_constant: f64,
    pub threshold: f64,
}

impl ModifiedZModel {
    pub const CONSISTENCY_CONSTANT: f64 = 0.6745;
    pub const THRESHOLD: f64 = 3.5;

    pub fn fit(values: &[f64]) -> Result<Self> {
        need(values, 2, "the modified z-score")?;
        let median = stats::median(values).expect("non-empty");
        let abs_dev: Vec<f64> = values.iter().map(|v| (v - median).abs()).collect();
        Ok(Self {
            median,
            mad: stats::median(&abs_dev).expect("non-empty"),
            consistency_constant: Self::CONSISTENCY_CONSTANT,
            threshold: Self::THRESHOLD,
        })
    }

    /// `MAD = 0`: scores are undefined, reported as zero, nothing flagged.
    pub fn is_degenerate(&self) -> bool {
        self.mad == 0.0
    }

    /// `|M|`.
    pub fn score(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (self.consistency_constant * (x - self.median) / self.mad).abs()
        }
    }

    pub fn thresholds(&self) -> Option<(f64, f64)> {
        (!self.is_degenerate()).then_some({
            let half_width = self.threshold * self.mad / self.consistency_constant;
            (self.median - half_width, self.median + half_width)
        })
    }

    pub fn predict(&self, values: &[f64]) -> Detection {
        let scores: Vec<f64> = values.iter().map(|&x| self.score(x)).collect();
        let flags = scores.iter().map(|&s| s > self.threshold).collect();
        Detection { scores, flags }
    }
}

/// Tukey's fences at `1.5 IQR` beyond the quartiles. Quartiles use linear
/// interpolation between closest ranks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IqrModel {
    pub q1: f64,
    pub q3: f64,
    pub multiplier: f64,
}

impl IqrModel {
    pub const MULTIPLIER: f64 = 1.5;

    pub fn fit(values: &[f64]) -> Result<Self> {
        need(values, 4, "the IQR rule")?;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            q1: stats::quantile_sorted(&sorted, 0.25),
            q3: stats::quantile_sorted(&sorted, 0.75),
            multiplier: Self::MULTIPLIER,
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }

    /// `(lower, upper)` fences.
    pub fn fences(&self) -> (f64, f64) {
        let spread = self.multiplier * self.iqr();
        (self.q1 - spread, self.q3 + spread)
    }

    /// Distance beyond the nearest fence, zero inside.
    pub fn score(&self, x: f64) -> f64 {
        let (lo, hi) = self.fences();
        if x < lo {
            lo - x
        } else if x > hi {
            x - hi
        } else {
            0.0
        }
    }

    pub fn predict(&self, values: &[f64]) -> Detection {
        let scores: Vec<f64> = values.iter().map(|&x| self.score(x)).collect();
        let flags = scores.iter().map(|&s| s > 0.0).collect();
        Detection { scores, flags }
    }
}

pub fn zscore_fit_predict(values: &[f64]) -> Result<Detection> {
    Ok(ZScoreModel::fit(values)?.predict(values))
}

pub fn modified_zscore_fit_predict(values: &[f64]) -> Result<Detection> {
    Ok(ModifiedZModel::fit(values)?.predict(values))
}

pub fn iqr_fit_predict(values: &[f64]) -> Result<Detection> {
    Ok(IqrModel::fit(values)?.predict(values))
}
