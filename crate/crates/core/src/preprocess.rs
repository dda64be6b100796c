//! Deterministic data conditioning ahead of scoring.
//!
//! Real values become exact integers by rounding to a fixed number of decimal
//! places and scaling by the largest decimal exponent still in use. Integers
//! are then folded onto their absolute deviation from the (rounded) training
//! median. Multivariate rows are first standardized and collapsed to their
//! distance from the column-wise median.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::par;
use crate::stats;

pub const DEFAULT_ACCURACY: u32 = 4;

/// Beyond this many decimals `|x| * 10^acc` quickly leaves the exact range of
/// a 64-bit integer.
pub const MAX_ACCURACY: u32 = 15;

/// Rounding and scaling applied to turn reals into integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerizationConfig {
    /// Decimal places kept when rounding.
    pub accuracy: u32,
    /// Power of ten applied after rounding; fixed at fit time.
    pub scale_exponent: u32,
}

/// Round `x` to `places` decimals, half away from zero, and return the
/// result scaled by `10^places` as an exact integer.
///
/// Rounding acts on the shortest decimal representation that round-trips to
/// `x`, so `2.675` rounds to `2.68` even though its binary value is slightly
/// smaller.
pub fn round_decimal(x: f64, places: u32) -> Result<i64> {
    let overflow = || Error::Overflow { value: x, places };
    let scale = 10i128.checked_pow(places).ok_or_else(overflow)?;

    if x.fract() == 0.0 && x.abs() < 9.0e15 {
        let v = (x as i128).checked_mul(scale).ok_or_else(overflow)?;
        return i64::try_from(v).map_err(|_| overflow());
    }

    let repr = x.abs().to_string();
    let (int_digits, frac_digits) = repr.split_once('.').unwrap_or((&repr, ""));
    let frac = frac_digits.as_bytes();

    let mut magnitude: i128 = int_digits.parse::<i128>().map_err(|_| overflow())?;
    for i in 0..places as usize {
        let d = frac.get(i).map_or(0, |b| (b - b'0') as i128);
        magnitude = magnitude
            .checked_mul(10)
            .and_then(|m| m.checked_add(d))
            .ok_or_else(overflow)?;
    }
    if frac.get(places as usize).is_some_and(|&b| b >= b'5') {
        magnitude += 1;
    }
    let signed = if x.is_sign_negative() {
        -magnitude
    } else {
        magnitude
    };
    i64::try_from(signed).map_err(|_| overflow())
}

/// Number of decimals actually used by a value already scaled by
/// `10^accuracy` (trailing zeros do not count).
fn decimals_in_use(scaled: i64, accuracy: u32) -> u32 {
    if scaled == 0 {
        return 0;
    }
    let mut v = scaled;
    let mut trailing = 0;
    while trailing < accuracy && v % 10 == 0 {
        v /= 10;
        trailing += 1;
    }
    accuracy - trailing
}

fn check_accuracy(accuracy: u32) -> Result<()> {
    if accuracy == 0 || accuracy > MAX_ACCURACY {
        return Err(Error::invalid(format!(
            "accuracy must be between 1 and {MAX_ACCURACY} decimal places, got {accuracy}"
        )));
    }
    Ok(())
}

/// Fit-time integerization: discovers the scale exponent from `values` and
/// returns it together with the integerized values.
pub fn integerize_fit(values: &[f64], accuracy: u32) -> Result<(IntegerizationConfig, Vec<i64>)> {
    check_accuracy(accuracy)?;
    let fixed = par::try_map_range(values.len(), |i| {
        let x = values[i];
        if !x.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
        round_decimal(x, accuracy)
    })?;
    let scale_exponent = fixed
        .iter()
        .map(|&v| decimals_in_use(v, accuracy))
        .max()
        .unwrap_or(0);
    let divisor = 10i64.pow(accuracy - scale_exponent);
    let ints = fixed.into_iter().map(|v| v / divisor).collect();
    Ok((
        IntegerizationConfig {
            accuracy,
            scale_exponent,
        },
        ints,
    ))
}

/// Test-time integerization with a frozen configuration. Values are rounded
/// directly onto the `10^-scale_exponent` grid learned at fit time, which
/// reproduces [`integerize_fit`] exactly on the training values.
pub fn integerize(values: &[f64], cfg: &IntegerizationConfig) -> Result<Vec<i64>> {
    par::try_map_range(values.len(), |i| {
        let x = values[i];
        if !x.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
        round_decimal(x, cfg.scale_exponent)
    })
}

/// The rounded median of integerized training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnivariateCenter {
    pub median: i64,
}

impl UnivariateCenter {
    /// Median of `ints`. For even lengths the midpoint is rounded half up
    /// (toward positive infinity), which keeps deviations invariant under
    /// integer translation of the data.
    pub fn fit(ints: &[i64]) -> Result<Self> {
        if ints.is_empty() {
            return Err(Error::invalid("cannot take the median of an empty sample"));
        }
        let mut buf = ints.to_vec();
        let n = buf.len();
        let mid = n / 2;
        let (_, &mut upper, _) = buf.select_nth_unstable(mid);
        let median = if n % 2 == 1 {
            upper
        } else {
            let lower = *buf[..mid].iter().max().expect("mid >= 1 for even n >= 2");
            let twice = lower as i128 + upper as i128;
            (twice + 1).div_euclid(2) as i64
        };
        Ok(Self { median })
    }
}

/// `|x - med|` for every element.
pub fn median_deviation(ints: &[i64], center: &UnivariateCenter) -> Vec<u64> {
    let med = center.median as i128;
    ints.iter()
        .map(|&v| (v as i128 - med).unsigned_abs() as u64)
        .collect()
}

/// Frozen per-feature standardization and the column-wise median of the
/// standardized training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStandardization {
    pub mean: Vec<f64>,
    /// Population standard deviations. Constant training columns store 1 so
    /// they standardize to zero.
    pub std: Vec<f64>,
    pub median: Vec<f64>,
}

impl FeatureStandardization {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let m = self.mean.len();
        if m == 0 || self.std.len() != m || self.median.len() != m {
            return Err(Error::Document(format!(
                "standardization vectors disagree in length (mean {}, std {}, median {})",
                self.mean.len(),
                self.std.len(),
                self.median.len()
            )));
        }
        if self.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Document(
                "standard deviations must be positive".into(),
            ));
        }
        if self.mean.iter().chain(&self.median).any(|v| !v.is_finite()) {
            return Err(Error::Document("non-finite standardization entry".into()));
        }
        Ok(())
    }

    /// Apply the frozen transform.
    pub fn standardize(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        x.ensure_finite()?;
        Ok(self.standardize_unchecked(x))
    }

    fn standardize_unchecked(&self, x: &Matrix) -> Matrix {
        let cols = x.ncols();
        let rows: Vec<Vec<f64>> = par::map_range(x.nrows(), |i| {
            x.row(i)
                .iter()
                .zip(self.mean.iter().zip(&self.std))
                .map(|(v, (mu, sd))| (v - mu) / sd)
                .collect()
        });
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        Matrix::new(x.nrows(), cols, data).expect("shape preserved")
    }
}

/// Fit the per-feature standardization and return it with the standardized
/// training matrix.
pub fn standardize_fit(x: &Matrix) -> Result<(FeatureStandardization, Matrix)> {
    if x.nrows() < 2 || x.ncols() == 0 {
        return Err(Error::invalid(format!(
            "standardization needs at least 2 rows and 1 column, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    x.ensure_finite()?;
    let moments: Vec<(f64, f64)> = par::map_range(x.ncols(), |c| {
        let col = x.column_values(c);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            (first, 1.0)
        } else {
            (
                stats::mean(&col).expect("non-empty"),
                stats::population_std(&col).expect("non-empty"),
            )
        }
    });
    let mut fs = FeatureStandardization {
        mean: moments.iter().map(|m| m.0).collect(),
        std: moments.iter().map(|m| m.1).collect(),
        median: Vec::new(),
    };
    let standardized = fs.standardize_unchecked(x);
    fs.median = par::map_range(x.ncols(), |c| {
        stats::median(&standardized.column_values(c)).expect("non-empty")
    });
    Ok((fs, standardized))
}

/// Distance used to collapse a standardized row onto one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Manhattan,
    Chebyshev,
}

impl DistanceMetric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            DistanceMetric::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            DistanceMetric::Manhattan => diffs.sum(),
            DistanceMetric::Chebyshev => diffs.fold(0.0, f64::max),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Manhattan => "manhattan",
            DistanceMetric::Chebyshev => "chebyshev",
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(DistanceMetric::Euclidean),
            "manhattan" | "cityblock" => Ok(DistanceMetric::Manhattan),
            "chebyshev" => Ok(DistanceMetric::Chebyshev),
            _ => Err(Error::UnknownMetric(s.to_string())),
        }
    }
}

/// Distance of every standardized row to the frozen multidimensional median.
pub fn distance_to_median(
    standardized: &Matrix,
    fs: &FeatureStandardization,
    metric: DistanceMetric,
) -> Result<Vec<f64>> {
    if standardized.ncols() != fs.dim() {
        return Err(Error::DimensionMismatch {
            expected: fs.dim(),
            found: standardized.ncols(),
        });
    }
    Ok(par::map_range(standardized.nrows(), |i| {
        metric.distance(standardized.row(i), &fs.median)
    }))
}
