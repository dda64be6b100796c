//! Parameter-free anomaly detection by counting how unexpected a concentration
//! of mass in one window is, plus the baselines, data loading and evaluation
//! harness around it.
//!
//! The number-theoretic kernel lives in [`nfa`]; [`model::PerceptionModel`]
//! turns tabular data into windows and scores them; [`stream`] does the same
//! for binary indicator streams.

pub mod baselines;
pub mod detector;
pub mod error;
pub mod eval;
pub mod io;
pub mod matrix;
pub mod model;
pub mod nfa;
pub mod par;
pub mod persist;
pub mod plot;
pub mod preprocess;
pub mod stats;
pub mod stream;

pub use baselines::Detection;
pub use detector::{Detector, DetectorKind};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::{FitOptions, PerceptionModel, ScoredPoint};
pub use preprocess::DistanceMetric;
pub use stream::{StreamAlert, StreamDetector, WindowMode};
