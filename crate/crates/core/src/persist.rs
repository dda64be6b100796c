//! Versioned JSON model documents.
//!
//! ```json
//! {
//!   "format": "perception-model",
//!   "version": 1,
//!   "checksum": "<sha-256 hex of the exact bytes of `model`>",
//!   "model": {
//!     "sum": 130, "windows": 10, "dim": 1, "median": 25,
//!     "accuracy": 4, "scale_exponent": 1, "metric": "euclidean",
//!     "standardization": null,
//!     "sentinels": { "no_anomaly": -1.7976931348623157e308,
//!                    "saturated": 1.7976931348623157e308 }
//!   }
//! }
//! ```
//!
//! `standardization` is `{"mean": [...], "std": [...], "median": [...]}` for
//! multivariate models and must be absent or null when `dim` is 1.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::PerceptionModel;
use crate::nfa;
use crate::preprocess::{
    DistanceMetric, FeatureStandardization, IntegerizationConfig, UnivariateCenter, MAX_ACCURACY,
};

pub const FORMAT_NAME: &str = "perception-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct DocumentOut<'a> {
    format: &'a str,
    version: u32,
    checksum: String,
    model: &'a RawValue,
}

#[derive(Deserialize)]
struct DocumentIn {
    format: String,
    version: u32,
    checksum: String,
    model: Box<RawValue>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelBody {
    sum: u64,
    windows: u64,
    dim: usize,
    median: i64,
    accuracy: u32,
    scale_exponent: u32,
    metric: DistanceMetric,
    #[serde(default)]
    standardization: Option<FeatureStandardization>,
    sentinels: Sentinels,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sentinels {
    no_anomaly: f64,
    saturated: f64,
}

fn digest(bytes: &str) -> String {
    hex::encode(Sha256::digest(bytes.as_bytes()))
}

impl PerceptionModel {
    /// Serialize to a versioned, checksummed JSON document.
    pub fn to_document(&self) -> Result<String> {
        let body = ModelBody {
            sum: self.sum,
            windows: self.windows,
            dim: self.dim,
            median: self.center.median,
            accuracy: self.integerization.accuracy,
            scale_exponent: self.integerization.scale_exponent,
            metric: self.metric,
            standardization: self.standardization.clone(),
            sentinels: Sentinels {
                no_anomaly: nfa::NO_ANOMALY_SCORE,
                saturated: nfa::SATURATED_SCORE,
            },
        };
        let raw = serde_json::value::to_raw_value(&body)?;
        let doc = DocumentOut {
            format: FORMAT_NAME,
            version: FORMAT_VERSION,
            checksum: digest(raw.get()),
            model: &raw,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_document(text: &str) -> Result<Self> {
        let doc: DocumentIn = serde_json::from_str(text)
            .map_err(|e| Error::Document(format!("malformed document: {e}")))?;
        if doc.format != FORMAT_NAME {
            return Err(Error::Document(format!(
                "expected format `{FORMAT_NAME}`, found `{}`",
                doc.format
            )));
        }
        if doc.version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: doc.version,
                supported: FORMAT_VERSION,
            });
        }
        if digest(doc.model.get()) != doc.checksum.to_ascii_lowercase() {
            return Err(Error::Checksum);
        }
        let body: ModelBody = serde_json::from_str(doc.model.get())
            .map_err(|e| Error::Document(format!("malformed model body: {e}")))?;
        body.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_document()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_document(&text)
    }
}

impl ModelBody {
    fn into_model(self) -> Result<PerceptionModel> {
        let bad = |msg: String| Err(Error::Document(msg));
        if self.windows == 0 {
            return bad("windows must be at least 1".into());
        }
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if self.accuracy == 0 || self.accuracy > MAX_ACCURACY {
            return bad(format!("accuracy {} out of range", self.accuracy));
        }
        if self.scale_exponent > self.accuracy {
            return bad(format!(
                "scale_exponent {} exceeds accuracy {}",
                self.scale_exponent, self.accuracy
            ));
        }
        if self.sentinels.no_anomaly != nfa::NO_ANOMALY_SCORE
            || self.sentinels.saturated != nfa::SATURATED_SCORE
        {
            return bad("score sentinels differ from this build".into());
        }
        match (&self.standardization, self.dim) {
            (None, 1) => {}
            (Some(_), 1) => return bad("univariate model must not carry a standardization".into()),
            (None, d) => return bad(format!("model with dim {d} is missing its standardization")),
            (Some(fs), d) => {
                fs.validate()?;
                if fs.dim() != d {
                    return bad(format!(
                        "standardization has {} features, dim is {d}",
                        fs.dim()
                    ));
                }
            }
        }
        Ok(PerceptionModel {
            sum: self.sum,
            windows: self.windows,
            center: UnivariateCenter {
                median: self.median,
            },
            standardization: self.standardization,
            integerization: IntegerizationConfig {
                accuracy: self.accuracy,
                scale_exponent: self.scale_exponent,
            },
            metric: self.metric,
            dim: self.dim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::model::FitOptions;

    fn multivariate() -> PerceptionModel {
        let x = Matrix::from_rows(&[
            [0.1, 3.0, -1.0],
            [0.3, 2.5, -1.5],
            [0.2, 2.9, -0.7],
            [5.0, 9.0, 4.0],
            [0.25, 3.1, -1.1],
        ])
        .unwrap();
        PerceptionModel::fit(
            &x,
            FitOptions {
                accuracy: 4,
                metric: DistanceMetric::Manhattan,
            },
        )
        .unwrap()
    }

    fn univariate() -> PerceptionModel {
        PerceptionModel::fit_univariate(&[2.1, 2.6, 2.4, 2.5, 8.3], FitOptions::default()).unwrap()
    }

    /// Rewrites the model body and re-signs it, to probe body validation.
    fn resign(doc: &str, edit: impl FnOnce(&mut serde_json::Value)) -> String {
        let mut v: serde_json::Value = serde_json::from_str(doc).unwrap();
        edit(&mut v["model"]);
        let body = serde_json::to_string(&v["model"]).unwrap();
        v["checksum"] = serde_json::Value::String(digest(&body));
        let raw = RawValue::from_string(body).unwrap();
        serde_json::to_string(&DocumentOut {
            format: FORMAT_NAME,
            version: v["version"].as_u64().unwrap() as u32,
            checksum: v["checksum"].as_str().unwrap().to_string(),
            model: &raw,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_field_exact() {
        for model in [univariate(), multivariate()] {
            let doc = model.to_document().unwrap();
            let back = PerceptionModel::from_document(&doc).unwrap();
            assert_eq!(back, model);
            assert_eq!(back.to_document().unwrap(), doc);
        }
    }

    #[test]
    fn univariate_document_has_no_standardization() {
        let doc = univariate().to_document().unwrap();
        let v: serde_json::Value = serde_json::from_str(&doc).unwrap();
        assert!(v["model"]["standardization"].is_null());
        let stripped = resign(&doc, |m| {
            m.as_object_mut().unwrap().remove("standardization");
        });
        assert_eq!(
            PerceptionModel::from_document(&stripped).unwrap(),
            univariate()
        );
    }

    #[test]
    fn missing_sigma_is_rejected() {
        let doc = multivariate().to_document().unwrap();
        let broken = resign(&doc, |m| {
            m["standardization"].as_object_mut().unwrap().remove("std");
        });
        assert!(matches!(
            PerceptionModel::from_document(&broken),
            Err(Error::Document(_))
        ));

        let broken = resign(&doc, |m| m["standardization"] = serde_json::Value::Null);
        assert!(matches!(
            PerceptionModel::from_document(&broken),
            Err(Error::Document(_))
        ));
    }

    #[test]
    fn tampering_fails_the_checksum() {
        let doc = univariate().to_document().unwrap();
        let tampered = doc.replacen("\"windows\":5", "\"windows\":6", 1);
        assert_ne!(tampered, doc);
        assert!(matches!(
            PerceptionModel::from_document(&tampered),
            Err(Error::Checksum)
        ));
    }

    #[test]
    fn version_mismatch() {
        let doc = univariate().to_document().unwrap();
        let future = doc.replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(
            PerceptionModel::from_document(&future),
            Err(Error::VersionMismatch {
                found: 2,
                supported: 1
            })
        ));
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(
            PerceptionModel::from_document("{"),
            Err(Error::Document(_))
        ));
        assert!(matches!(
            PerceptionModel::from_document("{}"),
            Err(Error::Document(_))
        ));
        let doc = univariate()
            .to_document()
            .unwrap()
            .replacen(FORMAT_NAME, "other", 1);
        assert!(matches!(
            PerceptionModel::from_document(&doc),
            Err(Error::Document(_))
        ));
    }

    #[test]
    fn save_and_load_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = multivariate();
        model.save(&path).unwrap();
        assert_eq!(PerceptionModel::load(&path).unwrap(), model);
        assert!(matches!(
            PerceptionModel::load(dir.path().join("nope.json")),
            Err(Error::Io { .. })
        ));
    }
}
