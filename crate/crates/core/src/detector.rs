//! A uniform fit-and-predict interface so the harness can treat the perception
//! model and the baselines alike.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::baselines::{self, Detection};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{FitOptions, PerceptionModel};

pub trait Detector: Send + Sync {
    fn name(&self) -> &str;

    /// Fit on `x` and score the same rows.
    fn fit_predict(&self, x: &Matrix) -> Result<Detection>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    Perception,
    ZScore,
    ModifiedZScore,
    Iqr,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [
        DetectorKind::Perception,
        DetectorKind::ZScore,
        DetectorKind::ModifiedZScore,
        DetectorKind::Iqr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::Perception => "perception",
            DetectorKind::ZScore => "zscore",
            DetectorKind::ModifiedZScore => "modified-zscore",
            DetectorKind::Iqr => "iqr",
        }
    }

    pub fn build(self, options: FitOptions) -> Arc<dyn Detector> {
        match self {
            DetectorKind::Perception => Arc::new(PerceptionDetector { options }),
            other => Arc::new(Baseline(other)),
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "perception" => Ok(DetectorKind::Perception),
            "zscore" | "z-score" | "z" => Ok(DetectorKind::ZScore),
            "modified-zscore" | "modified-z-score" | "modified-z" | "mad" => {
                Ok(DetectorKind::ModifiedZScore)
            }
            "iqr" | "tukey" => Ok(DetectorKind::Iqr),
            _ => Err(Error::invalid(format!(
                "unknown detector `{s}` (expected perception, zscore, modified-zscore or iqr)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PerceptionDetector {
    pub options: FitOptions,
}

impl Detector for PerceptionDetector {
    fn name(&self) -> &str {
        "perception"
    }

    fn fit_predict(&self, x: &Matrix) -> Result<Detection> {
        let model = PerceptionModel::fit(x, self.options)?;
        let points = model.predict(x)?;
        Ok(Detection {
            scores: points.iter().map(|p| p.score).collect(),
            flags: points.iter().map(|p| p.flag).collect(),
        })
    }
}

struct Baseline(DetectorKind);

impl Detector for Baseline {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn fit_predict(&self, x: &Matrix) -> Result<Detection> {
        if x.ncols() != 1 {
            return Err(Error::invalid(format!(
                "{} is a univariate rule; input has {} features",
                self.0,
                x.ncols()
            )));
        }
        let values = x.as_slice();
        match self.0 {
            DetectorKind::ZScore => baselines::zscore_fit_predict(values),
            DetectorKind::ModifiedZScore => baselines::modified_zscore_fit_predict(values),
            DetectorKind::Iqr => baselines::iqr_fit_predict(values),
            DetectorKind::Perception => unreachable!("perception is not a baseline"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for k in DetectorKind::ALL {
            assert_eq!(k.name().parse::<DetectorKind>().unwrap(), k);
            assert_eq!(k.build(FitOptions::default()).name(), k.name());
        }
        assert!("lof".parse::<DetectorKind>().is_err());
    }

    #[test]
    fn baselines_refuse_multivariate_input() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 9.0]]).unwrap();
        assert!(DetectorKind::Iqr
            .build(FitOptions::default())
            .fit_predict(&x)
            .is_err());
        assert!(DetectorKind::Perception
            .build(FitOptions::default())
            .fit_predict(&x)
            .is_ok());
    }
}
