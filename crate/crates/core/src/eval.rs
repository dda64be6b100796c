//! Detection metrics and the benchmark harness.

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::baselines::Detection;
use crate::detector::Detector;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Precision, recall and F1 of a flag vector against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Confusion {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Standard definitions; every `0/0` is taken as 0.
pub fn confusion_metrics(flags: &[bool], labels: &[bool]) -> Result<Confusion> {
    if flags.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} flags against {} labels",
            flags.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&f, &l) in flags.iter().zip(labels) {
        match (f, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Confusion {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        precision,
        recall,
        f1,
    })
}

/// Area under the ROC curve in its Mann-Whitney form: the probability that a
/// random positive outscores a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores against {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(index) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::NonFinite { index });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::invalid(
            "AUC needs at least one positive and one negative label",
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum of midranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let tied_positives = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += midrank * tied_positives as f64;
        i = j + 1;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// A feature matrix with binary ground truth (`true` = anomaly).
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub name: String,
    pub features: Matrix,
    pub labels: Vec<bool>,
    /// Declared share of anomalies, if known.
    pub anomaly_fraction: Option<f64>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        features: Matrix,
        labels: Vec<bool>,
        anomaly_fraction: Option<f64>,
    ) -> Result<Self> {
        let name = name.into();
        if labels.len() != features.nrows() {
            return Err(Error::invalid(format!(
                "dataset `{name}`: {} labels for {} rows",
                labels.len(),
                features.nrows()
            )));
        }
        if let Some(f) = anomaly_fraction {
            if !(f > 0.0 && f < 0.5) {
                return Err(Error::invalid(format!(
                    "dataset `{name}`: anomaly fraction {f} outside (0, 0.5)"
                )));
            }
        }
        Ok(Self {
            name,
            features,
            labels,
            anomaly_fraction,
        })
    }

    /// Observed share of positive labels.
    pub fn label_fraction(&self) -> f64 {
        ratio(
            self.labels.iter().filter(|&&l| l).count(),
            self.labels.len(),
        )
    }
}

/// Scores produced elsewhere (e.g. competitor algorithms), row-aligned with
/// one dataset.
#[derive(Debug, Clone)]
pub struct ExternalScores {
    pub detector: String,
    pub dataset: String,
    pub scores: Vec<f64>,
    /// Binary decisions, when the producer supplied them.
    pub flags: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// Did not finish within the time budget.
    TimedOut,
    Failed(String),
}

/// One (detector, dataset) cell of a report. Metrics are `None` when not
/// available.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalCell {
    pub detector: String,
    pub dataset: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
    /// Seconds for fit plus predict, excluding a warm-up run.
    pub runtime_seconds: Option<f64>,
    pub status: CellStatus,
}

impl EvalCell {
    fn unavailable(detector: &str, dataset: &str, status: CellStatus) -> Self {
        Self {
            detector: detector.to_string(),
            dataset: dataset.to_string(),
            precision: None,
            recall: None,
            f1: None,
            auc: None,
            runtime_seconds: None,
            status,
        }
    }

    fn from_detection(
        detector: &str,
        dataset: &LabeledDataset,
        scores: &[f64],
        flags: Option<&[bool]>,
        runtime: Option<Duration>,
    ) -> Result<Self> {
        let conf = flags
            .map(|f| confusion_metrics(f, &dataset.labels))
            .transpose()?;
        // Single-class ground truth has no AUC.
        let auc = auc(scores, &dataset.labels).ok();
        Ok(Self {
            detector: detector.to_string(),
            dataset: dataset.name.clone(),
            precision: conf.map(|c| c.precision),
            recall: conf.map(|c| c.recall),
            f1: conf.map(|c| c.f1),
            auc,
            runtime_seconds: runtime.map(|d| d.as_secs_f64()),
            status: CellStatus::Ok,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvalReport {
    pub cells: Vec<EvalCell>,
}

const NOT_AVAILABLE: &str = "nan";

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| NOT_AVAILABLE.to_string(), |x| format!("{x}"))
}

impl EvalReport {
    pub fn cell(&self, detector: &str, dataset: &str) -> Option<&EvalCell> {
        self.cells
            .iter()
            .find(|c| c.detector == detector && c.dataset == dataset)
    }

    /// `detector,dataset,precision,recall,f1,auc,runtime_seconds,status`;
    /// unavailable values are written as `nan`.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("detector,dataset,precision,recall,f1,auc,runtime_seconds,status\n");
        for c in &self.cells {
            let status = match &c.status {
                CellStatus::Ok => "ok".to_string(),
                CellStatus::TimedOut => "timed_out".to_string(),
                CellStatus::Failed(msg) => format!("failed: {}", msg.replace([',', '\n'], " ")),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                c.detector,
                c.dataset,
                fmt_metric(c.precision),
                fmt_metric(c.recall),
                fmt_metric(c.f1),
                fmt_metric(c.auc),
                fmt_metric(c.runtime_seconds),
                status
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    /// Wall-clock allowance per run; slower detectors are reported as not
    /// available.
    pub time_budget: Duration,
    /// Run each detector once untimed before the measured run.
    pub warm_up: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            time_budget: Duration::from_secs(30 * 60),
            warm_up: true,
        }
    }
}

enum RunOutcome {
    Done(Detection, Duration),
    Failed(Error),
    TimedOut,
}

/// Run the detector on a worker thread; give up waiting after `budget`.
/// A run that overshoots is left to finish in the background.
fn run_with_budget(detector: Arc<dyn Detector>, x: Arc<Matrix>, budget: Duration) -> RunOutcome {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let start = Instant::now();
        let result = detector.fit_predict(&x);
        let _ = tx.send((result, start.elapsed()));
    });
    match rx.recv_timeout(budget) {
        Ok((Ok(d), elapsed)) if elapsed <= budget => RunOutcome::Done(d, elapsed),
        Ok((Ok(_), _)) => RunOutcome::TimedOut,
        Ok((Err(e), _)) => RunOutcome::Failed(e),
        Err(_) => RunOutcome::TimedOut,
    }
}

/// Evaluate every detector on every dataset, then append cells for external
/// score files. Cells run one after another so runtimes are not skewed by
/// competing cells; each detector is free to parallelize internally.
pub fn run_benchmark(
    datasets: &[LabeledDataset],
    detectors: &[Arc<dyn Detector>],
    external: &[ExternalScores],
    options: BenchOptions,
) -> Result<EvalReport> {
    for ext in external {
        let ds = datasets
            .iter()
            .find(|d| d.name == ext.dataset)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "external scores for `{}` reference unknown dataset `{}`",
                    ext.detector, ext.dataset
                ))
            })?;
        let rows = ds.features.nrows();
        if ext.scores.len() != rows || ext.flags.as_ref().is_some_and(|f| f.len() != rows) {
            return Err(Error::invalid(format!(
                "external scores for `{}` on `{}` have {} rows, dataset has {rows}",
                ext.detector,
                ext.dataset,
                ext.scores.len()
            )));
        }
    }

    let mut report = EvalReport::default();
    for ds in datasets {
        let x = Arc::new(ds.features.clone());
        for det in detectors {
            let name = det.name().to_string();
            if options.warm_up {
                match run_with_budget(Arc::clone(det), Arc::clone(&x), options.time_budget) {
                    RunOutcome::Done(..) => {}
                    RunOutcome::TimedOut => {
                        report.cells.push(EvalCell::unavailable(
                            &name,
                            &ds.name,
                            CellStatus::TimedOut,
                        ));
                        continue;
                    }
                    RunOutcome::Failed(e) => {
                        report.cells.push(EvalCell::unavailable(
                            &name,
                            &ds.name,
                            CellStatus::Failed(e.to_string()),
                        ));
                        continue;
                    }
                }
            }
            let cell = match run_with_budget(Arc::clone(det), Arc::clone(&x), options.time_budget) {
                RunOutcome::Done(d, elapsed) => {
                    EvalCell::from_detection(&name, ds, &d.scores, Some(&d.flags), Some(elapsed))?
                }
                RunOutcome::TimedOut => {
                    EvalCell::unavailable(&name, &ds.name, CellStatus::TimedOut)
                }
                RunOutcome::Failed(e) => {
                    EvalCell::unavailable(&name, &ds.name, CellStatus::Failed(e.to_string()))
                }
            };
            report.cells.push(cell);
        }
        for ext in external.iter().filter(|e| e.dataset == ds.name) {
            report.cells.push(EvalCell::from_detection(
                &ext.detector,
                ds,
                &ext.scores,
                ext.flags.as_deref(),
                None,
            )?);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::DetectorKind;
    use crate::model::FitOptions;
    use approx::assert_relative_eq;

    #[test]
    fn perfect_flags() {
        let labels = [true, false, true, false];
        let c = confusion_metrics(&labels, &labels).unwrap();
        assert_eq!((c.precision, c.recall, c.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_flags_is_all_zero() {
        let c = confusion_metrics(&[false; 4], &[true, false, true, false]).unwrap();
        assert_eq!((c.precision, c.recall, c.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn confusion_hand_case() {
        // tp 2, fp 1, fn 1
        let c = confusion_metrics(
            &[true, true, true, false, false],
            &[true, true, false, true, false],
        )
        .unwrap();
        assert_relative_eq!(c.precision, 2.0 / 3.0);
        assert_relative_eq!(c.recall, 2.0 / 3.0);
        assert_relative_eq!(c.f1, 2.0 / 3.0);
        assert!(confusion_metrics(&[true], &[true, false]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(
            auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(),
            1.0
        );
        assert_eq!(auc(&[0.5; 4], &[false, true, false, true]).unwrap(), 0.5);
        // pairs: (0.35 vs 0.1) win, (0.35 vs 0.4) loss, 0.8 wins both -> 3/4
        assert_eq!(
            auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap(),
            0.75
        );
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(auc(&[0.1, f64::NAN], &[true, false]).is_err());
    }

    #[test]
    fn dataset_validation() {
        let x = Matrix::column(vec![1.0, 2.0, 3.0]);
        assert!(LabeledDataset::new("a", x.clone(), vec![true, false], None).is_err());
        assert!(LabeledDataset::new("a", x.clone(), vec![true, false, false], Some(0.7)).is_err());
        let ds = LabeledDataset::new("a", x, vec![true, false, false], Some(0.3)).unwrap();
        assert_relative_eq!(ds.label_fraction(), 1.0 / 3.0);
    }

    fn toy() -> LabeledDataset {
        let mut v: Vec<f64> = (0..40).map(|i| 10.0 + (i % 7) as f64 * 0.1).collect();
        v.push(50.0);
        let mut labels = vec![false; 40];
        labels.push(true);
        LabeledDataset::new("toy", Matrix::column(v), labels, None).unwrap()
    }

    #[test]
    fn benchmark_runs_cells_and_external_scores() {
        let ds = toy();
        let detectors = [
            DetectorKind::Perception.build(FitOptions::default()),
            DetectorKind::Iqr.build(FitOptions::default()),
        ];
        let mut ext_scores = vec![0.0; 41];
        ext_scores[40] = 1.0;
        let ext = ExternalScores {
            detector: "LOF".into(),
            dataset: "toy".into(),
            scores: ext_scores,
            flags: None,
        };
        let report = run_benchmark(&[ds], &detectors, &[ext], BenchOptions::default()).unwrap();
        assert_eq!(report.cells.len(), 3);
        let p = report.cell("perception", "toy").unwrap();
        assert_eq!(p.status, CellStatus::Ok);
        assert_eq!(p.recall, Some(1.0));
        assert!(p.runtime_seconds.is_some());
        let lof = report.cell("LOF", "toy").unwrap();
        assert_eq!(lof.auc, Some(1.0));
        assert_eq!(lof.precision, None);
        assert!(report
            .to_csv()
            .lines()
            .nth(3)
            .unwrap()
            .starts_with("LOF,toy,nan,nan,nan,1,nan,ok"));
    }

    #[test]
    fn misaligned_external_scores_fail() {
        let ext = ExternalScores {
            detector: "LOF".into(),
            dataset: "toy".into(),
            scores: vec![0.0; 3],
            flags: None,
        };
        assert!(run_benchmark(&[toy()], &[], &[ext], BenchOptions::default()).is_err());
    }

    struct Slow;

    impl Detector for Slow {
        fn name(&self) -> &str {
            "slow"
        }

        fn fit_predict(&self, x: &Matrix) -> Result<Detection> {
            thread::sleep(Duration::from_millis(300));
            Ok(Detection {
                scores: vec![0.0; x.nrows()],
                flags: vec![false; x.nrows()],
            })
        }
    }

    #[test]
    fn over_budget_is_not_available() {
        let opts = BenchOptions {
            time_budget: Duration::from_millis(20),
            warm_up: false,
        };
        let report = run_benchmark(&[toy()], &[Arc::new(Slow)], &[], opts).unwrap();
        let cell = report.cell("slow", "toy").unwrap();
        assert_eq!(cell.status, CellStatus::TimedOut);
        assert_eq!(cell.precision, None);
        assert!(report
            .to_csv()
            .contains("slow,toy,nan,nan,nan,nan,nan,timed_out"));
    }

    #[test]
    fn silent_detector_scores_zero() {
        struct Silent;
        impl Detector for Silent {
            fn name(&self) -> &str {
                "silent"
            }
            fn fit_predict(&self, x: &Matrix) -> Result<Detection> {
                Ok(Detection {
                    scores: vec![0.0; x.nrows()],
                    flags: vec![false; x.nrows()],
                })
            }
        }
        let report =
            run_benchmark(&[toy()], &[Arc::new(Silent)], &[], BenchOptions::default()).unwrap();
        let c = report.cell("silent", "toy").unwrap();
        assert_eq!(
            (c.precision, c.recall, c.f1),
            (Some(0.0), Some(0.0), Some(0.0))
        );
    }
}
