//! Indicator streams: binary event markers aggregated into window counts.
//!
//! Training uses adjacent windows (the tail window is zero-padded) to learn the
//! total mass `S` and window count `W`. Detection either tests adjacent windows
//! one at a time, updating `(S, W)` as it goes, or sweeps a sliding window over
//! a stream and reports each burst once.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nfa::{self, TupleExpectationParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    #[default]
    Adjacent,
    Sliding,
}

impl FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adjacent" => Ok(WindowMode::Adjacent),
            "sliding" => Ok(WindowMode::Sliding),
            _ => Err(Error::invalid(format!(
                "unknown window mode `{s}` (expected adjacent or sliding)"
            ))),
        }
    }
}

impl fmt::Display for WindowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowMode::Adjacent => "adjacent",
            WindowMode::Sliding => "sliding",
        })
    }
}

/// Window counts over an indicator stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndicatorWindowing {
    pub window_len: usize,
    pub mode: WindowMode,
    /// Number of indicators `N` in the stream.
    pub stream_len: usize,
    /// Per-window counts `V`, each in `0..=window_len`.
    pub sums: Vec<u64>,
}

impl IndicatorWindowing {
    /// Stream span `[start, end)` covered by window `i`, clipped to the stream.
    pub fn span(&self, i: usize) -> (usize, usize) {
        let start = match self.mode {
            WindowMode::Adjacent => i * self.window_len,
            WindowMode::Sliding => i,
        };
        (start, (start + self.window_len).min(self.stream_len))
    }
}

fn check_binary(stream: &[u8]) -> Result<()> {
    match stream.iter().position(|&b| b > 1) {
        Some(position) => Err(Error::NonBinary {
            position,
            token: stream[position].to_string(),
        }),
        None => Ok(()),
    }
}

/// Count indicators per window.
///
/// Adjacent mode yields `ceil(N / L)` windows, zero-padding the last one.
/// Sliding mode yields `N - L + 1` windows, or a single padded window when the
/// stream is shorter than `L`.
pub fn window_counts(
    stream: &[u8],
    window_len: usize,
    mode: WindowMode,
) -> Result<IndicatorWindowing> {
    if window_len == 0 {
        return Err(Error::invalid("window length must be at least 1"));
    }
    check_binary(stream)?;
    let sums = match mode {
        WindowMode::Adjacent => stream
            .chunks(window_len)
            .map(|w| w.iter().map(|&b| b as u64).sum())
            .collect(),
        WindowMode::Sliding => {
            if stream.len() <= window_len {
                vec![stream.iter().map(|&b| b as u64).sum()]
            } else {
                let mut sums = Vec::with_capacity(stream.len() - window_len + 1);
                let mut running: u64 = stream[..window_len].iter().map(|&b| b as u64).sum();
                sums.push(running);
                for i in window_len..stream.len() {
                    running = running + stream[i] as u64 - stream[i - window_len] as u64;
                    sums.push(running);
                }
                sums
            }
        }
    };
    Ok(IndicatorWindowing {
        window_len,
        mode,
        stream_len: stream.len(),
        sums,
    })
}

/// Fitted `(S, W)` for an adjacent windowing.
pub fn fit_stream(windowing: &IndicatorWindowing) -> Result<(u64, u64)> {
    if windowing.mode != WindowMode::Adjacent {
        return Err(Error::invalid(
            "stream models are fitted on adjacent windows",
        ));
    }
    if windowing.sums.is_empty() {
        return Err(Error::invalid("cannot fit a stream model on zero windows"));
    }
    Ok((windowing.sums.iter().sum(), windowing.sums.len() as u64))
}

/// Verdict on a single window count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowTest {
    pub n: u64,
    /// `E(C_n)`; zero when `n > S`.
    pub expectation: f64,
    pub score: f64,
    pub alert: bool,
}

/// Test a count against `(S, W)`: alert iff `E(C_n) < 1`.
pub fn test_window(sum: u64, windows: u64, n: u64) -> WindowTest {
    let score = nfa::perception_score_raw(sum, windows, n);
    let expectation = if n > sum {
        0.0
    } else {
        nfa::tuple_expectation(TupleExpectationParams {
            sum,
            windows: windows.max(1),
            count: n,
        })
        .unwrap_or(f64::INFINITY)
    };
    WindowTest {
        n,
        expectation,
        score,
        alert: score > 0.0,
    }
}

/// An unexpected window (or burst of overlapping windows in a sliding sweep).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StreamAlert {
    /// Index of the reported window: ordinal for adjacent windows, start
    /// position for sliding ones.
    pub window_index: usize,
    pub n: u64,
    pub expectation: f64,
    pub score: f64,
    /// First stream position covered by the alert.
    pub start: usize,
    /// One past the last stream position covered.
    pub end: usize,
}

/// Online detector over adjacent windows: each new window is tested against
/// the state that excludes it, then folded in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamDetector {
    window_len: usize,
    sum: u64,
    windows: u64,
    /// Stream position of the next ingested window.
    position: usize,
}

impl StreamDetector {
    pub fn fit(windowing: &IndicatorWindowing) -> Result<Self> {
        let (sum, windows) = fit_stream(windowing)?;
        Ok(Self {
            window_len: windowing.window_len,
            sum,
            windows,
            position: windows as usize * windowing.window_len,
        })
    }

    /// Start from explicit counts.
    pub fn from_counts(window_len: usize, sum: u64, windows: u64) -> Result<Self> {
        if window_len == 0 || windows == 0 {
            return Err(Error::invalid(
                "window length and window count must be at least 1",
            ));
        }
        Ok(Self {
            window_len,
            sum,
            windows,
            position: windows as usize * window_len,
        })
    }

    pub fn sum(&self) -> u64 {
        self.sum
    }

    pub fn windows(&self) -> u64 {
        self.windows
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Ingest one window of at most `L` indicators (a short window is
    /// zero-padded).
    pub fn ingest(&mut self, window: &[u8]) -> Result<Option<StreamAlert>> {
        if window.len() > self.window_len {
            return Err(Error::invalid(format!(
                "window of {} indicators exceeds the window length {}",
                window.len(),
                self.window_len
            )));
        }
        if let Err(Error::NonBinary { position, token }) = check_binary(window) {
            return Err(Error::NonBinary {
                position: self.position + position,
                token,
            });
        }
        let n: u64 = window.iter().map(|&b| b as u64).sum();
        let verdict = test_window(self.sum, self.windows, n);
        let alert = verdict.alert.then(|| StreamAlert {
            window_index: self.windows as usize,
            n,
            expectation: verdict.expectation,
            score: verdict.score,
            start: self.position,
            end: self.position + window.len(),
        });
        self.sum += n;
        self.windows += 1;
        self.position += self.window_len;
        Ok(alert)
    }

    /// Ingest a stream window by window.
    pub fn ingest_stream(&mut self, stream: &[u8]) -> Result<Vec<StreamAlert>> {
        let mut alerts = Vec::new();
        for w in stream.chunks(self.window_len) {
            alerts.extend(self.ingest(w)?);
        }
        Ok(alerts)
    }
}

/// Test every window of `windowing` against a fixed `(S, W)` without
/// updating it. Sliding windows that alert and overlap are merged into one
/// alert that reports the window with the largest count (earliest on ties).
pub fn detect(windowing: &IndicatorWindowing, sum: u64, windows: u64) -> Vec<StreamAlert> {
    let tested = windowing
        .sums
        .iter()
        .enumerate()
        .map(|(i, &n)| (i, test_window(sum, windows, n)))
        .filter(|(_, t)| t.alert);

    let mut alerts: Vec<StreamAlert> = Vec::new();
    for (i, t) in tested {
        let (start, end) = windowing.span(i);
        let candidate = StreamAlert {
            window_index: i,
            n: t.n,
            expectation: t.expectation,
            score: t.score,
            start,
            end,
        };
        match alerts.last_mut() {
            Some(last) if windowing.mode == WindowMode::Sliding && start < last.end => {
                let (s, e) = (last.start, end.max(last.end));
                if candidate.n > last.n {
                    *last = candidate;
                }
                last.start = s;
                last.end = e;
            }
            _ => alerts.push(candidate),
        }
    }
    alerts
}

/// Parse an indicator stream: one `0`/`1` token per line, blank lines ignored,
/// an optional non-numeric header line, and a trailing comma tolerated
/// (single-column CSV).
pub fn parse_indicators(text: &str) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let token = line.trim().trim_end_matches(',').trim();
        match token {
            "" => {}
            "0" => out.push(0),
            "1" => out.push(1),
            _ if lineno == 0 && token.parse::<f64>().is_err() => {}
            _ => {
                return Err(Error::IndicatorLine {
                    line: lineno + 1,
                    token: token.to_string(),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const D: [u8; 20] = [0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0, 0];

    #[test]
    fn adjacent_example() {
        let w = window_counts(&D, 4, WindowMode::Adjacent).unwrap();
        assert_eq!(w.sums, vec![0, 4, 3, 0, 0]);
        assert_eq!(fit_stream(&w).unwrap(), (7, 5));
    }

    #[test]
    fn all_zero_stream() {
        for l in [1, 3, 7] {
            let w = window_counts(&[0; 10], l, WindowMode::Adjacent).unwrap();
            assert!(w.sums.iter().all(|&v| v == 0));
            assert_eq!(w.sums.len(), 10usize.div_ceil(l));
        }
    }

    #[test]
    fn sliding_example_matches_brute_force() {
        let w = window_counts(&D, 4, WindowMode::Sliding).unwrap();
        let brute: Vec<u64> = (0..=D.len() - 4)
            .map(|i| D[i..i + 4].iter().map(|&b| b as u64).sum())
            .collect();
        assert_eq!(w.sums, brute);
        assert_eq!(w.sums.len(), 17);
        let max = *w.sums.iter().max().unwrap();
        assert_eq!(max, 4);
        assert_eq!(w.sums.iter().position(|&v| v == max), Some(4));
    }

    #[test]
    fn short_stream_sliding_is_one_padded_window() {
        let w = window_counts(&[1, 0, 1], 5, WindowMode::Sliding).unwrap();
        assert_eq!(w.sums, vec![2]);
        assert_eq!(w.span(0), (0, 3));
    }

    #[test]
    fn non_binary_rejected_with_position() {
        assert!(matches!(
            window_counts(&[0, 1, 2, 1], 2, WindowMode::Adjacent),
            Err(Error::NonBinary { position: 2, .. })
        ));
        assert!(window_counts(&[0, 1], 0, WindowMode::Adjacent).is_err());
    }

    #[test]
    fn fit_stream_edges() {
        let empty = window_counts(&[], 4, WindowMode::Adjacent).unwrap();
        assert!(fit_stream(&empty).is_err());
        let one = IndicatorWindowing {
            window_len: 1,
            mode: WindowMode::Adjacent,
            stream_len: 1,
            sums: vec![1],
        };
        assert_eq!(fit_stream(&one).unwrap(), (1, 1));
        let sliding = window_counts(&D, 4, WindowMode::Sliding).unwrap();
        assert!(fit_stream(&sliding).is_err());
    }

    #[test]
    fn window_tests() {
        let t = test_window(7, 5, 4);
        assert!(t.alert);
        assert_relative_eq!(t.expectation, 0.28, max_relative = 1e-12);
        let t = test_window(7, 5, 3);
        assert!(!t.alert);
        assert_relative_eq!(t.expectation, 1.4, max_relative = 1e-12);
        assert!(!test_window(7, 5, 0).alert);
        let t = test_window(7, 5, 9);
        assert!(t.alert);
        assert_eq!(t.expectation, 0.0);
    }

    #[test]
    fn ingest_tests_then_updates() {
        let mut det = StreamDetector::from_counts(4, 7, 5).unwrap();
        let alert = det.ingest(&[1, 1, 1, 1]).unwrap().expect("alert");
        assert_eq!(alert.n, 4);
        assert_relative_eq!(alert.expectation, 0.28, max_relative = 1e-12);
        assert_eq!((det.sum(), det.windows()), (11, 6));

        let mut det = StreamDetector::from_counts(4, 7, 5).unwrap();
        assert_eq!(det.ingest(&[0, 0, 0, 0]).unwrap(), None);
        assert_eq!((det.sum(), det.windows()), (7, 6));
    }

    #[test]
    fn zero_windows_never_alert() {
        let mut det = StreamDetector::from_counts(4, 7, 5).unwrap();
        for _ in 0..200 {
            assert_eq!(det.ingest(&[0, 0, 0, 0]).unwrap(), None);
        }
    }

    #[test]
    fn ingest_rejects_bad_windows() {
        let mut det = StreamDetector::from_counts(2, 1, 1).unwrap();
        assert!(det.ingest(&[0, 0, 0]).is_err());
        assert!(matches!(
            det.ingest(&[0, 3]),
            Err(Error::NonBinary { position: 3, .. })
        ));
    }

    #[test]
    fn detect_on_training_stream() {
        let adj = window_counts(&D, 4, WindowMode::Adjacent).unwrap();
        let alerts = detect(&adj, 7, 5);
        assert_eq!(alerts.len(), 1);
        assert_eq!((alerts[0].window_index, alerts[0].n), (1, 4));
        assert_eq!((alerts[0].start, alerts[0].end), (4, 8));

        let sliding = window_counts(&D, 4, WindowMode::Sliding).unwrap();
        let alerts = detect(&sliding, 7, 5);
        assert_eq!(alerts.len(), 1, "{alerts:?}");
        assert_eq!((alerts[0].window_index, alerts[0].n), (4, 4));
        assert_eq!((alerts[0].start, alerts[0].end), (4, 10));
    }

    #[test]
    fn parse_indicator_text() {
        assert_eq!(
            parse_indicators("flag\n0\n1\n\n1,\n").unwrap(),
            vec![0, 1, 1]
        );
        assert!(matches!(
            parse_indicators("0\n1\nx\n"),
            Err(Error::IndicatorLine { line: 3, .. })
        ));
        assert!(matches!(
            parse_indicators("0\n2\n"),
            Err(Error::IndicatorLine { line: 2, .. })
        ));
    }
}
