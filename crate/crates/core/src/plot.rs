//! Histogram and decision-threshold data for univariate plots. Rendering is
//! left to the caller.

use serde::Serialize;

use crate::baselines::{IqrModel, ModifiedZModel, ZScoreModel};
use crate::error::{Error, Result};
use crate::model::{FitOptions, PerceptionModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Values at or beyond `lower` / `upper` are flagged. A detector that flags
/// nothing on this data (degenerate fit) has neither.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thresholds {
    pub detector: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotData {
    pub bins: Vec<Bin>,
    pub thresholds: Vec<Thresholds>,
}

/// Sturges' rule: `ceil(log2 n) + 1`.
pub fn sturges_bins(n: usize) -> usize {
    if n <= 1 {
        1
    } else {
        (n as f64).log2().ceil() as usize + 1
    }
}

/// Equal-width bins over `[min, max]`, the last bin closed. Constant data
/// gives one zero-width bin.
pub fn histogram(values: &[f64], bins: Option<usize>) -> Result<Vec<Bin>> {
    if values.is_empty() {
        return Err(Error::invalid("histogram of no values"));
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let k = bins.unwrap_or_else(|| sturges_bins(values.len()));
    if k == 0 {
        return Err(Error::invalid("bin count must be positive"));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(vec![Bin {
            lower: lo,
            upper: hi,
            count: values.len(),
        }]);
    }
    let width = (hi - lo) / k as f64;
    let mut out: Vec<Bin> = (0..k)
        .map(|i| Bin {
            lower: lo + width * i as f64,
            upper: if i + 1 == k {
                hi
            } else {
                lo + width * (i + 1) as f64
            },
            count: 0,
        })
        .collect();
    for &v in values {
        let i = (((v - lo) / width) as usize).min(k - 1);
        out[i].count += 1;
    }
    Ok(out)
}

/// Perception thresholds in data units. Counts at or past the boundary count
/// `n*` are anomalous, so values whose integer deviation from the median
/// reaches `n*` are flagged: `(median ± n*) / 10^e`.
pub fn perception_thresholds(model: &PerceptionModel) -> Option<(f64, f64)> {
    if model.dim() != 1 {
        return None;
    }
    let n = model.boundary_count()?;
    if n > model.sum() {
        return None;
    }
    let scale = 10f64.powi(model.integerization().scale_exponent as i32);
    let med = model.center().median as f64;
    Some(((med - n as f64) / scale, (med + n as f64) / scale))
}

fn entry(detector: &str, t: Option<(f64, f64)>) -> Thresholds {
    Thresholds {
        detector: detector.to_string(),
        lower: t.map(|t| t.0),
        upper: t.map(|t| t.1),
    }
}

/// Histogram plus thresholds of every built-in detector fitted on `values`.
pub fn plot_data(values: &[f64], bins: Option<usize>, options: FitOptions) -> Result<PlotData> {
    let histogram = histogram(values, bins)?;
    let perception = PerceptionModel::fit_univariate(values, options)?;
    let z = ZScoreModel::fit(values)?;
    let mz = ModifiedZModel::fit(values)?;
    let thresholds = vec![
        entry("perception", perception_thresholds(&perception)),
        entry("zscore", z.thresholds()),
        entry("modified-zscore", mz.thresholds()),
        entry(
            "iqr",
            IqrModel::fit(values)
                .ok()
                .filter(|m| m.iqr() > 0.0)
                .map(|m| m.fences()),
        ),
    ];
    Ok(PlotData {
        bins: histogram,
        thresholds,
    })
}
